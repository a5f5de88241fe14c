"""Raster decode/encode and disjoint tuple partitioning.

Grids are plain ``numpy.uint8`` arrays of shape ``(height, width, channels)``
with ``channels`` equal to 1 or 3.  Binary netpbm (P5/P6) is handled here
directly; PNG and BMP go through Pillow.
"""
from __future__ import annotations

import io
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image


class ImageFormatError(ValueError):
    """Raised for malformed, truncated or unsupported image data."""


_PNM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def as_grid(samples) -> np.ndarray:
    """Validate and normalise an array into ``(H, W, C)`` uint8 form."""
    arr = np.asarray(samples)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ImageFormatError(f"expected (H, W, 1|3) samples, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ImageFormatError("sample values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def _sniff(data: bytes) -> str:
    if data[:2] in (b"P5", b"P6"):
        return "pnm"
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return "png"
    if data[:2] == b"BM":
        return "bmp"
    raise ImageFormatError("unrecognised image signature")


def _load_pnm(data: bytes) -> np.ndarray:
    magic = data[:2]
    pos = 2
    fields = []
    for _ in range(3):
        m = _PNM_TOKEN.match(data, pos)
        if m is None:
            raise ImageFormatError("malformed netpbm header")
        fields.append(m.group(1))
        pos = m.end()
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise ImageFormatError("non-numeric netpbm header field") from exc
    # exactly one whitespace byte separates header from raster
    if not data[pos:pos + 1].isspace():
        raise ImageFormatError("malformed netpbm header")
    pos += 1
    if maxval > 255:
        raise ImageFormatError("16-bit netpbm images are not supported")
    if maxval <= 0 or width <= 0 or height <= 0:
        raise ImageFormatError("invalid netpbm dimensions or maxval")
    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    raster = data[pos:pos + need]
    if len(raster) < need:
        raise ImageFormatError(f"truncated raster: expected {need} bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, channels).copy()


def _load_pillow(data: bytes) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:  # Pillow raises a zoo of exception types
        raise ImageFormatError(f"cannot decode image: {exc}") from exc
    if img.mode == "L":
        return np.asarray(img, dtype=np.uint8)[:, :, None].copy()
    if img.mode == "RGB":
        return np.asarray(img, dtype=np.uint8).copy()
    raise ImageFormatError(f"unsupported image mode {img.mode!r} (need 8-bit gray or RGB)")


def load_image(data: bytes, format_hint: str | None = None) -> np.ndarray:
    """Decode PGM/PPM (binary), PNG or BMP bytes into an ``(H, W, C)`` grid."""
    if not data:
        raise ImageFormatError("empty image stream")
    kind = _sniff(data)
    if format_hint is not None:
        hint = format_hint.lower().lstrip(".")
        expected = {"pgm": "pnm", "ppm": "pnm", "pnm": "pnm", "png": "png", "bmp": "bmp"}.get(hint)
        if expected is None:
            raise ImageFormatError(f"unsupported format hint {format_hint!r}")
        if expected != kind:
            raise ImageFormatError(f"data looks like {kind}, not {hint}")
    if kind == "pnm":
        return _load_pnm(data)
    return _load_pillow(data)


def write_image(grid, fmt: str) -> bytes:
    """Encode a grid losslessly.  ``fmt`` is one of pgm, ppm, png, bmp."""
    grid = as_grid(grid)
    h, w, c = grid.shape
    fmt = fmt.lower().lstrip(".")
    if fmt in ("pgm", "ppm"):
        want = 1 if fmt == "pgm" else 3
        if c != want:
            raise ImageFormatError(f"{fmt.upper()} needs {want} channel(s), grid has {c}")
        magic = b"P5" if c == 1 else b"P6"
        return magic + f"\n{w} {h}\n255\n".encode() + grid.tobytes()
    if fmt in ("png", "bmp"):
        img = Image.fromarray(grid[:, :, 0] if c == 1 else grid, mode="L" if c == 1 else "RGB")
        buf = io.BytesIO()
        img.save(buf, format=fmt.upper())
        return buf.getvalue()
    raise ImageFormatError(f"unsupported output format {fmt!r}")


def read_image_file(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return load_image(fh.read())


def write_image_file(path, grid, fmt: str | None = None) -> None:
    fmt = fmt or str(path).rsplit(".", 1)[-1]
    with open(path, "wb") as fh:
        fh.write(write_image(grid, fmt))


@dataclass(frozen=True)
class TupleSequence:
    """Disjoint horizontal tuples of one channel.

    ``values[i]`` holds the samples of tuple ``i``, which starts at
    ``(rows[i], cols[i])`` and spans ``order`` consecutive columns.
    """

    order: int
    channel: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)

    def positions(self) -> np.ndarray:
        """``(n, order, 2)`` array of (row, col) sample coordinates."""
        offs = np.arange(self.order)
        cols = self.cols[:, None] + offs[None, :]
        rows = np.broadcast_to(self.rows[:, None], cols.shape)
        return np.stack([rows, cols], axis=-1)


def partition_tuples(grid, channel: int = 0, order: int = 2) -> TupleSequence:
    """Split each row of one channel into ``width // order`` disjoint tuples.

    Trailing ``width % order`` samples of each row are left unassigned.
    """
    grid = as_grid(grid)
    if order < 2:
        raise ValueError("tuple order must be at least 2")
    if not 0 <= channel < grid.shape[2]:
        raise ValueError(f"channel {channel} out of range for {grid.shape[2]}-channel grid")
    h, w, _ = grid.shape
    per_row = w // order
    plane = grid[:, : per_row * order, channel]
    values = plane.reshape(h * per_row, order)
    rows = np.repeat(np.arange(h), per_row)
    cols = np.tile(np.arange(per_row) * order, h)
    return TupleSequence(order, channel, rows, cols, values)
