"""Binary PGM (P5) and PPM (P6) reading/writing, 8-bit only.

These formats carry the grayscale inputs and the rendered heatmaps; writers
are byte-deterministic so outputs can be compared against golden files.
"""

import numpy as np


class PnmError(Exception):
    pass


def _read_header(data, magic, path):
    if data[:2] != magic:
        raise PnmError(f"{path}: bad magic, expected {magic.decode()}")
    fields = []
    pos = 2
    while len(fields) < 3:
        if pos >= len(data):
            raise PnmError(f"{path}: truncated header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            fields.append(data[start:pos])
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise PnmError(f"{path}: missing separator after header")
    pos += 1
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise PnmError(f"{path}: non-numeric header field") from None
    if width < 1 or height < 1:
        raise PnmError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise PnmError(f"{path}: only 8-bit (maxval 255) supported, got {maxval}")
    return width, height, pos


def read_pgm(path):
    """Read a binary PGM into a (height, width) uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    width, height, pos = _read_header(data, b"P5", str(path))
    need = width * height
    raw = data[pos:pos + need]
    if len(raw) < need:
        raise PnmError(f"{path}: truncated pixel data ({len(raw)} of {need} bytes)")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, values):
    """Write a (height, width) uint8 array as binary PGM."""
    values = np.ascontiguousarray(values, dtype=np.uint8)
    if values.ndim != 2:
        raise PnmError("PGM wants a 2-d array")
    h, w = values.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(values.tobytes())


def write_ppm(path, rgb):
    """Write a (height, width, 3) uint8 array as binary PPM."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise PnmError("PPM wants a (h, w, 3) array")
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(rgb.tobytes())
