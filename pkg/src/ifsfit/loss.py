"""Blurred MSE, crossing penalty and the combined objective."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .diff import evaluate_with_gradient, forward
from .errors import ShapeMismatch, TooFewSegments
from .geometry import GeneratorSpec, control_points_tensor, expand_polyline, polyline_segments
from .renderer import (
    DEFAULT_SIGMA,
    DEFAULT_SIGMA_CROSS,
    RasterImage,
    Viewport,
    _as_tensor,
    _nearest_indices,
    clamp_region,
    crossing_heat,
    distance_fields,
    shade,
)

DEFAULT_SIGMA_BLUR = 2.0
DEFAULT_LAMBDA_CROSS = 1.0


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian truncated at radius ``ceil(3 sigma)``."""
    r = math.ceil(3 * sigma)
    x = np.arange(-r, r + 1, dtype=np.float64)
    w = np.exp(-(x * x) / (2 * sigma * sigma))
    return w / w.sum()


def blur_tensor(img: torch.Tensor, sigma: float) -> torch.Tensor:
    """Separable Gaussian blur of an (H, W) tensor with replicate padding."""
    if sigma < 0:
        raise ValueError("sigma_blur must be non-negative")
    if sigma == 0:
        return img
    k = torch.from_numpy(gaussian_kernel(sigma))
    r = (k.numel() - 1) // 2
    x = F.pad(img[None, None], (r, r, r, r), mode="replicate")
    x = F.conv2d(x, k.view(1, 1, 1, -1))
    x = F.conv2d(x, k.view(1, 1, -1, 1))
    return x[0, 0]


def gaussian_blur(img: RasterImage, sigma_blur: float) -> RasterImage:
    with torch.no_grad():
        out = blur_tensor(torch.from_numpy(img.data), sigma_blur)
    return RasterImage(np.clip(out.numpy(), 0.0, 1.0), img.viewport)


def _check_same(a: RasterImage, b: RasterImage) -> None:
    if a.data.shape != b.data.shape or a.viewport != b.viewport:
        raise ShapeMismatch(
            f"images differ: {a.data.shape} {a.viewport} vs {b.data.shape} {b.viewport}"
        )


def bmse(rendered: RasterImage, target: RasterImage, sigma_blur: float = DEFAULT_SIGMA_BLUR) -> float:
    """Mean squared difference of the Gaussian-blurred images."""
    _check_same(rendered, target)
    with torch.no_grad():
        a = blur_tensor(torch.from_numpy(rendered.data), sigma_blur)
        b = blur_tensor(torch.from_numpy(target.data), sigma_blur)
        return float(((a - b) ** 2).mean())


def crossing_penalty(segments, vp: Viewport, sigma_cross: float = DEFAULT_SIGMA_CROSS) -> float:
    """Mean of the crossing heatmap over the viewport."""
    segs = _as_tensor(segments)
    if segs.shape[0] < 2:
        raise TooFewSegments("crossing penalty needs at least two segments")
    with torch.no_grad():
        d1, d2 = distance_fields(segs, vp, second=True)
        return float(crossing_heat(d1, d2, sigma_cross).mean())


@dataclass(frozen=True)
class LossConfig:
    depth: int = 4
    sigma: float = DEFAULT_SIGMA
    sigma_blur: float = DEFAULT_SIGMA_BLUR
    sigma_cross: float = DEFAULT_SIGMA_CROSS
    lambda_cross: float = DEFAULT_LAMBDA_CROSS


@dataclass(frozen=True)
class LossReport:
    bmse: float
    crossing: float
    total: float
    lambda_cross: float
    gradient: np.ndarray | None = field(default=None, compare=False, repr=False)


class SpecObjective:
    """Total loss ``bmse + lambda_cross * crossing`` as a function of the
    flattened offsets of ``spec`` (endpoints and reflect flags held fixed)."""

    def __init__(self, spec: GeneratorSpec, target: RasterImage, cfg: LossConfig = LossConfig()):
        if cfg.lambda_cross < 0:
            raise ValueError("lambda_cross must be non-negative")
        self.spec = spec
        self.cfg = cfg
        self.viewport = target.viewport
        self._e1 = torch.tensor(spec.e1, dtype=torch.float64)
        self._e2 = torch.tensor(spec.e2, dtype=torch.float64)
        with torch.no_grad():
            self._target = blur_tensor(torch.from_numpy(target.data), cfg.sigma_blur)

    def segments(self, params: torch.Tensor) -> torch.Tensor:
        pts = control_points_tensor(self._e1, self._e2, params.reshape(-1, 2))
        return polyline_segments(expand_polyline(pts, self.spec.reflect, self.cfg.depth))

    def terms(self, params: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        cfg, vp = self.cfg, self.viewport
        segs = self.segments(params)
        if segs.shape[0] < 2:
            raise TooFewSegments("crossing penalty needs at least two segments (depth >= 1)")
        d1, d2 = distance_fields(segs, vp, second=True)
        img = shade(d1, cfg.sigma).reshape(vp.height, vp.width)
        err = blur_tensor(img, cfg.sigma_blur) - self._target
        return (err * err).mean(), crossing_heat(d1, d2, cfg.sigma_cross).mean()

    def selection(self, params) -> np.ndarray:
        """Per pixel: nearest and second-nearest segment index and the clamp
        region of each, stacked as a (4, pixels) array.

        Two parameter vectors with equal selections lie in the same smooth
        piece of the objective.
        """
        with torch.no_grad():
            x = torch.as_tensor(np.asarray(params, dtype=np.float64))
            segs = self.viewport.world_to_pixel(self.segments(x))
            pix = torch.from_numpy(self.viewport.pixel_centers().reshape(-1, 2))
            k1, k2 = _nearest_indices(pix, segs, second=True)
            k2c = k2.clamp(min=0)
            r1 = clamp_region(pix, segs[k1, 0], segs[k1, 1])
            r2 = torch.where(k2 >= 0, clamp_region(pix, segs[k2c, 0], segs[k2c, 1]), -1)
        return torch.stack((k1, k2, r1, r2)).numpy()

    def smooth_stencil(self, params, h: float) -> bool:
        """True when every ``params +- h e_k`` keeps the selection of ``params``,
        i.e. a central difference with step ``h`` stays on one smooth piece."""
        x = np.asarray(params, dtype=np.float64)
        base = self.selection(x)
        for k in range(x.size):
            for sign in (1.0, -1.0):
                y = x.copy()
                y[k] += sign * h
                if not np.array_equal(self.selection(y), base):
                    return False
        return True

    def __call__(self, params: torch.Tensor) -> torch.Tensor:
        b, c = self.terms(params)
        return b + self.cfg.lambda_cross * c

    def report(self, params=None, with_gradient: bool = True) -> LossReport:
        x = self.spec.params() if params is None else np.asarray(params, dtype=np.float64)
        parts: dict[str, float] = {}

        def tracked(p: torch.Tensor) -> torch.Tensor:
            b, c = self.terms(p)
            parts["bmse"], parts["crossing"] = float(b.detach()), float(c.detach())
            return b + self.cfg.lambda_cross * c

        if with_gradient:
            total, grad = evaluate_with_gradient(tracked, x)
        else:
            total, grad = forward(tracked, x), None
        return LossReport(parts["bmse"], parts["crossing"], total, self.cfg.lambda_cross, grad)


def total_loss(spec: GeneratorSpec, target: RasterImage, cfg: LossConfig = LossConfig(),
               with_gradient: bool = True) -> LossReport:
    return SpecObjective(spec, target, cfg).report(with_gradient=with_gradient)
