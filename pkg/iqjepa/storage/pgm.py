from pathlib import Path

import numpy as np
from iqjepa.errors import DataError
from iqjepa.storage.files import PathType

MAXVAL = 255
_ROW_VALUES = 16


def write_pgm(path: PathType, image: np.ndarray) -> Path:
    """Write an 8-bit grayscale image as plain (P2) PGM."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    if image.min() < 0 or image.max() > MAXVAL:
        raise ValueError("pixel values must be in [0, 255]")
    height, width = image.shape
    lines = ["P2", f"{width} {height}", str(MAXVAL)]
    flat = image.astype(np.int64).reshape(-1)
    for start in range(0, flat.size, _ROW_VALUES):
        lines.append(" ".join(str(v) for v in flat[start : start + _ROW_VALUES]))
    path = Path(path)
    try:
        path.write_text("\n".join(lines) + "\n", encoding="ascii")
    except OSError as e:
        raise DataError(f"cannot write {path}: {e}") from e
    return path


def read_pgm(path: PathType) -> np.ndarray:
    path = Path(path)
    try:
        tokens = path.read_text(encoding="ascii").split()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if len(tokens) < 4 or tokens[0] != "P2":
        raise DataError(f"{path}: not a plain PGM file")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    values = np.array([int(v) for v in tokens[4:]], dtype=np.int64)
    if values.size != width * height or values.max(initial=0) > maxval:
        raise DataError(f"{path}: pixel data does not match the header")
    return values.reshape(height, width).astype(np.uint8)


def mask_image(grid: np.ndarray) -> np.ndarray:
    """Visible cells white, masked cells black."""
    return (np.asarray(grid) > 0).astype(np.uint8) * MAXVAL
