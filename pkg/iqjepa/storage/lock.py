import contextlib
import logging
import os
from pathlib import Path
from typing import Iterator

from iqjepa.errors import DataError
from iqjepa.storage.files import PathType

logger = logging.getLogger(__name__)

LOCK_NAME = ".iqjepa.lock"


@contextlib.contextmanager
def output_lock(directory: PathType) -> Iterator[Path]:
    """Hold an exclusive lock file inside an output directory."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create {directory}: {e}") from e
    lock = directory / LOCK_NAME
    try:
        fd = os.open(str(lock), os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as e:
        raise DataError(f"{directory} is locked by another run ({lock})") from e
    except OSError as e:
        raise DataError(f"cannot lock {directory}: {e}") from e
    try:
        os.write(fd, str(os.getpid()).encode("ascii"))
        os.close(fd)
        yield directory
    finally:
        with contextlib.suppress(OSError):
            os.remove(lock)
        logger.debug("released %s", lock)
