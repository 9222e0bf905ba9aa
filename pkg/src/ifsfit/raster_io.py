"""8-bit grayscale image files.

PGM (binary P5) is written by hand and is the bit-exact reference format;
PNG goes through Pillow.  Intensities map to bytes as ``floor(v * 255 + 0.5)``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .renderer import RasterImage, Viewport


def to_bytes(img: RasterImage) -> np.ndarray:
    v = np.clip(img.data, 0.0, 1.0)
    return np.floor(v * 255.0 + 0.5).astype(np.uint8)


def write_pgm(img: RasterImage, path: str | Path) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + to_bytes(img).tobytes())


def write_png(img: RasterImage, path: str | Path) -> None:
    Image.fromarray(to_bytes(img), mode="L").save(path, format="PNG")


def save_image(img: RasterImage, path: str | Path) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        write_pgm(img, path)
    elif suffix == ".png":
        write_png(img, path)
    else:
        raise ValueError(f"unsupported image extension {suffix!r} (use .pgm or .png)")


def load_grayscale(path: str | Path, bounds: Viewport | None = None) -> RasterImage:
    """Read an image as grayscale, linearly mapped to [0, 1].

    The pixels cover the world rectangle of ``bounds`` (default viewport
    rectangle if omitted) at the file's own size.
    """
    with Image.open(path) as im:
        data = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    h, w = data.shape
    vp = Viewport.default(w, h) if bounds is None else bounds.resized(w, h)
    return RasterImage(data, vp)
