"""Distance-field rendering of segment chains.

Pixels are shaded from their distance (in pixel units) to the nearest
segment: ``exp(-d**2 / sigma**2)``.  The same nearest/second-nearest search
feeds the crossing heatmap.  Nearest-segment selection runs without autograd
over the full pixel x segment matrix; the selected distances are then
recomputed with autograd enabled, so gradients flow only through the chosen
segment (lowest index on ties).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import EmptySegmentList, TooFewSegments
from .geometry import Similarity

DEFAULT_SIGMA = 0.5
DEFAULT_SIGMA_CROSS = 0.5
DEFAULT_NEAR_THRESHOLD = math.exp(-16.0)
DEFAULT_BOUNDS = (-0.2, 1.2, -0.2, 1.2)

# pixels x segments entries evaluated per chunk in the argmin search
_CHUNK = 1 << 21


@dataclass(frozen=True)
class Viewport:
    """World rectangle mapped onto a ``width`` x ``height`` pixel grid.

    Row 0 is the top of the image (``ymax``).
    """

    xmin: float
    xmax: float
    ymin: float
    ymax: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"empty viewport rectangle {self!r}")
        if self.width < 1 or self.height < 1:
            raise ValueError("viewport needs at least one pixel")

    @classmethod
    def default(cls, width: int = 64, height: int | None = None) -> Viewport:
        return cls(*DEFAULT_BOUNDS, width, width if height is None else height)

    def resized(self, width: int, height: int | None = None) -> Viewport:
        return Viewport(self.xmin, self.xmax, self.ymin, self.ymax, width,
                        width if height is None else height)

    @property
    def pixel_scale(self) -> tuple[float, float]:
        return self.width / (self.xmax - self.xmin), self.height / (self.ymax - self.ymin)

    def world_to_pixel(self, xy):
        """World coordinates -> continuous pixel coordinates (col, row).

        Pixel ``(c, r)`` has its center at ``(c + 0.5, r + 0.5)``.  Accepts
        numpy arrays or torch tensors with a trailing axis of size 2.
        """
        sx, sy = self.pixel_scale
        col = (xy[..., 0] - self.xmin) * sx
        row = (self.ymax - xy[..., 1]) * sy
        stack = torch.stack if isinstance(xy, torch.Tensor) else np.stack
        return stack((col, row), -1)

    def pixel_to_world(self, cr: np.ndarray) -> np.ndarray:
        sx, sy = self.pixel_scale
        return np.stack((cr[..., 0] / sx + self.xmin, self.ymax - cr[..., 1] / sy), -1)

    def pixel_centers(self) -> np.ndarray:
        """(height, width, 2) array of pixel-center coordinates in pixel units."""
        cols, rows = np.meshgrid(np.arange(self.width) + 0.5, np.arange(self.height) + 0.5)
        return np.stack((cols, rows), -1)

    def world_centers(self) -> np.ndarray:
        return self.pixel_to_world(self.pixel_centers())


@dataclass(eq=False)
class RasterImage:
    """Grayscale image, ``data`` has shape (height, width) with values in [0, 1]."""

    data: np.ndarray
    viewport: Viewport = field(default_factory=Viewport.default)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (self.viewport.height, self.viewport.width):
            raise ValueError(
                f"data shape {self.data.shape} does not match viewport "
                f"{self.viewport.height}x{self.viewport.width}"
            )

    @property
    def width(self) -> int:
        return self.viewport.width

    @property
    def height(self) -> int:
        return self.viewport.height

    @classmethod
    def zeros(cls, vp: Viewport) -> RasterImage:
        return cls(np.zeros((vp.height, vp.width)), vp)


# --- distance kernels --------------------------------------------------------

def segment_dist2(p: torch.Tensor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Squared distance from points ``p`` to closed segments ``[a, b]`` (broadcasting).

    Outside the parameter range the endpoint itself is used, so segments
    sharing a vertex give bit-identical distances in that vertex's region.
    """
    d = b - a
    dd = (d * d).sum(-1)
    safe = torch.where(dd > 0, dd, torch.ones_like(dd))
    t = ((p - a) * d).sum(-1) / safe
    t = torch.where(dd > 0, t, torch.zeros_like(t))
    foot = torch.where((t < 0)[..., None], a, torch.where((t > 1)[..., None], b, a + t[..., None] * d))
    r = p - foot
    return (r * r).sum(-1)


def clamp_region(p: torch.Tensor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """0 where the foot point is interior to ``[a, b]``, 1 before ``a``, 2 past ``b``."""
    d = b - a
    dd = (d * d).sum(-1)
    t = ((p - a) * d).sum(-1) / torch.where(dd > 0, dd, torch.ones_like(dd))
    return (t < 0).long() + 2 * (t > 1).long()


def chain_links(segs: torch.Tensor) -> torch.Tensor:
    """``links[k]`` is True when segment k ends exactly where segment k+1 starts."""
    return (segs[:-1, 1] == segs[1:, 0]).all(-1)


def _nearest_indices(pix: torch.Tensor, segs: torch.Tensor, second: bool):
    """Index of the nearest segment per pixel and, optionally, of the nearest
    non-adjacent one (``-1`` when every segment is excluded)."""
    m = segs.shape[0]
    no = torch.zeros(1, dtype=torch.bool)
    links = chain_links(segs)
    link_next = torch.cat((links, no))
    link_prev = torch.cat((no, links))
    ar = torch.arange(m)
    k1_all, k2_all = [], []
    step = max(1, _CHUNK // m)
    for s in range(0, pix.shape[0], step):
        p = pix[s:s + step, None, :]
        dist = segment_dist2(p, segs[None, :, 0], segs[None, :, 1])
        k1 = torch.argmin(dist, dim=1)
        k1_all.append(k1)
        if not second:
            continue
        # On a vertex tie both adjacent segments claim the pixel and both
        # neighbourhoods are excluded, which keeps the result independent of
        # segment order.
        kl = m - 1 - torch.argmin(dist.flip(1), dim=1)
        kl = torch.where((kl == k1 + 1) & link_next[k1], kl, k1)
        excl = torch.zeros_like(dist, dtype=torch.bool)
        for k in (k1, kl):
            excl |= ar == k[:, None]
            excl |= (ar == (k - 1)[:, None]) & link_prev[k][:, None]
            excl |= (ar == (k + 1)[:, None]) & link_next[k][:, None]
        masked = dist.masked_fill(excl, math.inf)
        k2 = torch.argmin(masked, dim=1)
        found = torch.isfinite(masked.gather(1, k2[:, None])[:, 0])
        k2_all.append(torch.where(found, k2, torch.full_like(k2, -1)))
    k1 = torch.cat(k1_all)
    return (k1, torch.cat(k2_all)) if second else (k1, None)


def distance_fields(segs_world: torch.Tensor, vp: Viewport, second: bool = False,
                    pixels: torch.Tensor | None = None):
    """Squared pixel-space distance to the nearest segment, and optionally to
    the nearest non-adjacent segment (``inf`` where none exists).

    Returns flat tensors over ``pixels`` (default: all pixel centers, row-major).
    Differentiable with respect to ``segs_world``.
    """
    if segs_world.shape[0] == 0:
        raise EmptySegmentList("cannot render an empty segment list")
    segs = vp.world_to_pixel(segs_world)
    if pixels is None:
        pixels = torch.from_numpy(vp.pixel_centers().reshape(-1, 2))
    with torch.no_grad():
        k1, k2 = _nearest_indices(pixels, segs.detach(), second)
    d1 = segment_dist2(pixels, segs[k1, 0], segs[k1, 1])
    if not second:
        return d1, None
    has2 = k2 >= 0
    k2c = k2.clamp(min=0)
    d2 = segment_dist2(pixels, segs[k2c, 0], segs[k2c, 1])
    d2 = torch.where(has2, d2, torch.full_like(d2, math.inf))
    return d1, d2


def shade(d1: torch.Tensor, sigma: float) -> torch.Tensor:
    return torch.exp(-d1 / sigma ** 2)


def crossing_heat(d1: torch.Tensor, d2: torch.Tensor, sigma_cross: float) -> torch.Tensor:
    """Product of the nearest and second-nearest segment shadings."""
    finite = torch.isfinite(d2)
    d2s = torch.where(finite, d2, torch.zeros_like(d2))
    heat = torch.exp(-(d1 + d2s) / sigma_cross ** 2)
    return torch.where(finite, heat, torch.zeros_like(heat))


def _as_tensor(segments) -> torch.Tensor:
    t = torch.as_tensor(np.ascontiguousarray(segments, dtype=np.float64))
    if t.ndim != 3 or t.shape[1:] != (2, 2):
        raise ValueError(f"segments must have shape (m, 2, 2), got {tuple(t.shape)}")
    return t


# --- public operations -----------------------------------------------------------

def render_segments(segments, vp: Viewport, sigma: float = DEFAULT_SIGMA) -> RasterImage:
    """Shade every pixel by its distance to the nearest segment."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    segs = _as_tensor(segments)
    with torch.no_grad():
        d1, _ = distance_fields(segs, vp)
        img = shade(d1, sigma).reshape(vp.height, vp.width)
    return RasterImage(img.numpy(), vp)


def crossing_heatmap(segments, vp: Viewport, sigma_cross: float = DEFAULT_SIGMA_CROSS) -> RasterImage:
    """Per-pixel crossing indicator ``exp(-(d1**2 + d2**2) / sigma_cross**2)``.

    ``d2`` ignores the nearest segment's chain neighbours, so a curve's own
    vertices do not register as crossings.
    """
    segs = _as_tensor(segments)
    if segs.shape[0] < 2:
        raise TooFewSegments("crossing heatmap needs at least two segments")
    with torch.no_grad():
        d1, d2 = distance_fields(segs, vp, second=True)
        heat = crossing_heat(d1, d2, sigma_cross).reshape(vp.height, vp.width)
    return RasterImage(heat.numpy(), vp)


def bilinear_sample(data: np.ndarray, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Sample ``data`` at continuous array coordinates; zeros outside."""
    h, w = data.shape
    c0, r0 = np.floor(cols).astype(np.int64), np.floor(rows).astype(np.int64)
    fc, fr = cols - c0, rows - r0
    out = np.zeros(np.shape(cols))
    for dr, wr in ((0, 1.0 - fr), (1, fr)):
        for dc, wc in ((0, 1.0 - fc), (1, fc)):
            r, c = r0 + dr, c0 + dc
            ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
            out += np.where(ok, wr * wc * data[r.clip(0, h - 1), c.clip(0, w - 1)], 0.0)
    return out


def warp_image(img: RasterImage, T: Similarity) -> RasterImage:
    """Push ``img`` through ``T``: output at world ``w`` reads input at ``T^-1(w)``."""
    vp = img.viewport
    inv = T.inverse()
    w = vp.world_centers()
    src = np.stack(
        (inv.m00 * w[..., 0] + inv.m01 * w[..., 1] + inv.tx,
         inv.m10 * w[..., 0] + inv.m11 * w[..., 1] + inv.ty), -1)
    cr = vp.world_to_pixel(src) - 0.5
    out = bilinear_sample(img.data, cr[..., 0], cr[..., 1])
    return RasterImage(np.clip(out, 0.0, 1.0), vp)


def deepen_image(img: RasterImage, transforms: list[Similarity], iterations: int) -> RasterImage:
    """Approximate extra recursion levels by compositing warped copies (pixelwise max)."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    for _ in range(iterations):
        img = RasterImage(np.max([warp_image(img, T).data for T in transforms], axis=0), img.viewport)
    return img


def refinement_mask(img_low: RasterImage, factor: int, near_threshold: float = DEFAULT_NEAR_THRESHOLD) -> np.ndarray:
    """High-resolution boolean mask of pixels whose parent is near the curve."""
    near = img_low.data >= near_threshold
    return np.repeat(np.repeat(near, factor, axis=0), factor, axis=1)


def refine_resolution(img_low: RasterImage, segments, factor: int,
                      near_threshold: float = DEFAULT_NEAR_THRESHOLD,
                      sigma: float = DEFAULT_SIGMA) -> RasterImage:
    """Upsample by ``factor``, shading exactly only pixels whose low-resolution
    parent was at least ``near_threshold`` bright; the rest stay 0."""
    if factor < 2:
        raise ValueError("factor must be >= 2")
    if not 0 < near_threshold < 1:
        raise ValueError("near_threshold must lie in (0, 1)")
    lo = img_low.viewport
    vp = lo.resized(lo.width * factor, lo.height * factor)
    mask = refinement_mask(img_low, factor, near_threshold)
    out = np.zeros((vp.height, vp.width))
    if mask.any():
        pix = torch.from_numpy(vp.pixel_centers()[mask])
        with torch.no_grad():
            d1, _ = distance_fields(_as_tensor(segments), vp, pixels=pix)
            out[mask] = shade(d1, sigma).numpy()
    return RasterImage(out, vp)
