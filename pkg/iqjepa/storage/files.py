import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
from iqjepa.errors import DataError

PathType = Union[str, Path]


def write_json(path: PathType, data: Dict[str, Any]) -> Path:
    path = Path(path)
    text = json.dumps(data, indent=2, sort_keys=True) + "\n"
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from e
    return path


def read_json(path: PathType) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(
            f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}"
        ) from e
    if not isinstance(data, dict):
        raise DataError(f"{path}: expected a JSON object")
    return data


def write_array(path: PathType, array: np.ndarray, dtype: str) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(np.ascontiguousarray(array, dtype=dtype).tobytes())
        os.replace(tmp, path)
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from e
    return path


def read_array(path: PathType, dtype: str, count: int) -> np.ndarray:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    itemsize = np.dtype(dtype).itemsize
    if len(raw) != count * itemsize:
        raise DataError(
            f"{path}: expected {count * itemsize} bytes, found {len(raw)}"
        )
    return np.frombuffer(raw, dtype=dtype).copy()


def sha256_file(path: PathType, chunk: int = 2**20) -> str:
    h = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for block in iter(lambda: f.read(chunk), b""):
                h.update(block)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    return h.hexdigest()


def require_keys(data: Dict[str, Any], keys: tuple, source: PathType) -> None:
    missing = [k for k in keys if k not in data]
    if missing:
        raise DataError(f"{source}: missing fields {', '.join(missing)}")
