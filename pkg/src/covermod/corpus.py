"""Cover corpora: synthetic symmetric covers and tiles of bundled natural photos.

The natural corpus needs scikit-image (``pip install covermod[corpus]``).
Each photograph is cut into half-overlapping square tiles; tiles that are
nearly flat (black borders, blown highlights) are skipped.

``NATURAL_SOURCES`` holds the photographic scenes.  ``TEXTURE_SOURCES``
are also bundled but kept out of the default corpus: pure textures, an
astronomical noise field and a stained micrograph, on which even unembedded
tiles give structural estimates spread over the whole rate range, and a
contrast-stretched image whose histogram has empty bins.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simulate import symmetric_cover

NATURAL_SOURCES = (
    "astronaut", "brick", "camera", "chelsea", "coffee", "coins", "retina", "rocket", "cell",
    "motorcycle_left", "motorcycle_right",
)
TEXTURE_SOURCES = ("grass", "gravel", "hubble_deep_field", "immunohistochemistry", "moon")


@dataclass(frozen=True)
class CoverImage:
    name: str
    grid: np.ndarray


def _load_source(name: str) -> np.ndarray:
    try:
        from skimage import data
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise RuntimeError("the natural corpus needs scikit-image (pip install covermod[corpus])") from exc
    if name.startswith("motorcycle_"):
        left, right, _ = data.stereo_motorcycle()
        img = left if name.endswith("left") else right
    else:
        img = getattr(data, name)()
    img = np.asarray(img)
    if img.ndim == 2:
        img = img[:, :, None]
    return img[:, :, :3].astype(np.uint8)


def to_gray(grid: np.ndarray) -> np.ndarray:
    """Integer luma (ITU-R 601 weights), rounded to nearest."""
    if grid.shape[2] == 1:
        return grid
    w = np.array([299, 587, 114])
    return ((grid.astype(np.int64) @ w + 500) // 1000).astype(np.uint8)[:, :, None]


def _tiles(img: np.ndarray, size: int, stride: int | None = None):
    h, w, _ = img.shape
    stride = stride or size
    for r in range(0, h - size + 1, stride):
        for c in range(0, w - size + 1, stride):
            yield r, c, img[r:r + size, c:c + size]


def natural_corpus(n_images: int = 240, size: int = 192, color: bool = False,
                   min_std: float = 6.0, per_source: int | None = 100,
                   sources=NATURAL_SOURCES) -> list[CoverImage]:
    """Tiles of bundled photographs, taken round-robin over sources.

    Tiles overlap by half their size.  Grayscale corpora convert colour
    sources to luma; with ``color`` only the RGB sources are used.  Tiles
    whose standard deviation is below ``min_std`` are skipped and at most
    ``per_source`` tiles come from one photograph.  Order is deterministic.
    """
    pools = []
    for name in sources:
        img = _load_source(name)
        if color and img.shape[2] != 3:
            continue
        if not color:
            img = to_gray(img)
        tiles = [CoverImage(f"{name}_r{r}_c{c}", t.copy()) for r, c, t in _tiles(img, size, size // 2)
                 if t.std() >= min_std]
        pools.append(tiles[:per_source] if per_source else tiles)
    out: list[CoverImage] = []
    depth = 0
    while len(out) < n_images and any(depth < len(p) for p in pools):
        for p in pools:
            if depth < len(p) and len(out) < n_images:
                out.append(p[depth])
        depth += 1
    return out


def synthetic_corpus(n_images: int, size: int = 128, seed: int = 0) -> list[CoverImage]:
    """Grayscale covers with exact pair and triplet parity symmetry."""
    rng = np.random.default_rng(seed)
    return [CoverImage(f"synthetic_{i:04d}", symmetric_cover(size, size, rng)) for i in range(n_images)]


def flat_corpus(n_images: int, size: int = 64, seed: int = 0) -> list[CoverImage]:
    """Constant gray images (every tuple has trace key zero)."""
    rng = np.random.default_rng(seed)
    vals = rng.integers(0, 256, size=n_images)
    return [CoverImage(f"flat_{i:04d}", np.full((size, size, 1), v, dtype=np.uint8)) for i, v in enumerate(vals)]


def noise_corpus(n_images: int, size: int = 64, seed: int = 0) -> list[CoverImage]:
    """Uniform white-noise images."""
    rng = np.random.default_rng(seed)
    return [CoverImage(f"noise_{i:04d}", rng.integers(0, 256, size=(size, size, 1), dtype=np.uint8))
            for i in range(n_images)]


def load_directory(path) -> list[CoverImage]:
    """Every readable PGM/PPM/PNG/BMP in a directory, sorted by name.

    Unreadable files are skipped; their names are returned by
    :func:`load_directory_report`.
    """
    return load_directory_report(path)[0]


def load_directory_report(path) -> tuple[list[CoverImage], list[tuple[str, str]]]:
    from pathlib import Path

    from .pixel_store import ImageFormatError, read_image_file
    ok, bad = [], []
    for f in sorted(Path(path).iterdir()):
        if f.suffix.lower() not in (".pgm", ".ppm", ".pnm", ".png", ".bmp"):
            continue
        try:
            ok.append(CoverImage(f.stem, read_image_file(f)))
        except (ImageFormatError, OSError) as exc:
            bad.append((f.name, str(exc)))
    return ok, bad
