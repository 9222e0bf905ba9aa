"""Presets, initialization noise, targets and the Adam training loop."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import NonFiniteGradient, UnknownPreset, ViewportTooSmall
from .geometry import GeneratorSpec
from .loss import DEFAULT_LAMBDA_CROSS, LossConfig, LossReport, SpecObjective
from .renderer import DEFAULT_SIGMA, DEFAULT_SIGMA_CROSS, RasterImage, Viewport, bilinear_sample

_R3 = math.sqrt(3.0)

PRESETS: dict[str, GeneratorSpec] = {
    "koch": GeneratorSpec(
        (0.0, 0.0), (1.0, 0.0),
        ((1 / 3, 0.0), (1 / 6, _R3 / 6), (1 / 6, -_R3 / 6), (1 / 3, 0.0)),
        (False, False, False, False),
    ),
    # Sierpinski arrowhead: the two outer copies are mirrored across their
    # own segment, the middle one is a plain half-scale translate.
    "arrowhead": GeneratorSpec(
        (0.0, 0.0), (1.0, 0.0),
        ((0.25, _R3 / 4), (0.5, 0.0), (0.25, -_R3 / 4)),
        (True, False, True),
    ),
}


def preset(name: str) -> GeneratorSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def perturb(spec: GeneratorSpec, noise_std: float, seed: int) -> GeneratorSpec:
    """Add seeded i.i.d. Gaussian noise to every offset component."""
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    if noise_std == 0:
        return spec
    rng = np.random.default_rng(seed)
    x = spec.params()
    return spec.with_params(x + rng.normal(0.0, noise_std, size=x.shape))


def target_unit_square(vp: Viewport) -> RasterImage:
    """1 where the pixel center lies in [0, 1]^2, else 0."""
    if not (vp.xmin <= 0 and vp.xmax >= 1 and vp.ymin <= 0 and vp.ymax >= 1):
        raise ViewportTooSmall(f"viewport {vp} does not contain the unit square")
    w = vp.world_centers()
    inside = (w[..., 0] >= 0) & (w[..., 0] <= 1) & (w[..., 1] >= 0) & (w[..., 1] <= 1)
    return RasterImage(inside.astype(np.float64), vp)


def resample_image(img: RasterImage, vp: Viewport) -> RasterImage:
    """Bilinear resample of ``img`` onto a new pixel grid over world space."""
    cr = img.viewport.world_to_pixel(vp.world_centers()) - 0.5
    return RasterImage(np.clip(bilinear_sample(img.data, cr[..., 0], cr[..., 1]), 0, 1), vp)


class Adam:
    """Adam on a flat parameter vector."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m, self.v = np.zeros_like(x), np.zeros_like(x)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


Schedule = Sequence[tuple[int, float]]


def schedule_value(schedule: Schedule, step: int):
    """Value of the last entry whose step threshold is <= ``step``."""
    value = schedule[0][1]
    for s, v in schedule:
        if s <= step:
            value = v
        else:
            break
    return value


@dataclass(frozen=True)
class OptimConfig:
    steps: int = 200
    learning_rate: float = 0.02
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    depth: int = 4
    sigma: float = DEFAULT_SIGMA
    sigma_blur: tuple[tuple[int, float], ...] | None = None
    sigma_cross: float = DEFAULT_SIGMA_CROSS
    lambda_cross: float = DEFAULT_LAMBDA_CROSS
    resolution: tuple[tuple[int, int], ...] | None = None
    rng_seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        # default: 64 px with blur 2 px, then 128 px with blur 1 px at 70%
        switch = int(round(0.7 * self.steps))
        if self.resolution is None:
            res = ((0, 64),) if switch <= 0 else ((0, 64), (switch, 128))
            object.__setattr__(self, "resolution", res)
        if self.sigma_blur is None:
            blur = ((0, 2.0),) if switch <= 0 else ((0, 2.0), (switch, 1.0))
            object.__setattr__(self, "sigma_blur", blur)
        object.__setattr__(self, "resolution", tuple((int(s), int(w)) for s, w in self.resolution))
        object.__setattr__(self, "sigma_blur", tuple((int(s), float(v)) for s, v in self.sigma_blur))
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.lambda_cross < 0:
            raise ValueError("lambda_cross must be non-negative")
        for name in ("resolution", "sigma_blur"):
            sched = getattr(self, name)
            steps = [s for s, _ in sched]
            if not steps or steps[0] != 0 or any(b <= a for a, b in zip(steps, steps[1:])):
                raise ValueError(f"{name} schedule must start at step 0 and strictly increase")
        if any(w < 1 for _, w in self.resolution):
            raise ValueError("resolutions must be positive")

    def loss_config(self, step: int) -> LossConfig:
        return LossConfig(self.depth, self.sigma, schedule_value(self.sigma_blur, step),
                          self.sigma_cross, self.lambda_cross)

    def width(self, step: int) -> int:
        return schedule_value(self.resolution, step)


@dataclass
class RunRecord:
    """History of one optimization run.

    ``history[k]`` is the loss at the parameters *before* update ``k``.
    ``initial`` and ``final`` are both evaluated with the step-0 settings
    (first resolution and blur), so they are directly comparable.
    """

    history: list[LossReport]
    final_spec: GeneratorSpec
    wall_time: float
    initial: LossReport | None = None
    final: LossReport | None = None
    params: list[np.ndarray] = field(default_factory=list, repr=False)


TargetSource = Union[RasterImage, Callable[[Viewport], RasterImage]]


def _target_for(target: TargetSource, vp: Viewport) -> RasterImage:
    if callable(target):
        return target(vp)
    if target.viewport == vp:
        return target
    return resample_image(target, vp)


def optimize(
    init: GeneratorSpec,
    target: TargetSource,
    cfg: OptimConfig = OptimConfig(),
    viewport: Viewport | None = None,
    on_checkpoint: Callable[[int, GeneratorSpec], None] | None = None,
    record_params: bool = False,
) -> RunRecord:
    """Run Adam on the flattened offsets of ``init``.

    ``target`` is either a fixed image, which must match the first scheduled
    resolution and is resampled at later ones, or a callable that rasterizes
    the target for a given viewport (e.g. :func:`target_unit_square`).
    """
    w0 = cfg.width(0)
    if viewport is None:
        viewport = target.viewport if isinstance(target, RasterImage) else Viewport.default(w0)
    vp0 = viewport.resized(w0)
    if isinstance(target, RasterImage) and target.data.shape != (vp0.height, vp0.width):
        raise ValueError(
            f"target is {target.width}x{target.height} but the first resolution is {w0}x{w0}"
        )

    start = time.perf_counter()
    x = init.params()
    adam = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    objective0 = SpecObjective(init, _target_for(target, vp0), cfg.loss_config(0))
    initial = objective0.report(x, with_gradient=False)

    history: list[LossReport] = []
    params: list[np.ndarray] = []
    objective, key = None, None
    for step in range(cfg.steps):
        settings = (cfg.width(step), cfg.loss_config(step))
        if settings != key:
            key = settings
            vp = viewport.resized(settings[0])
            objective = SpecObjective(init, _target_for(target, vp), settings[1])
        try:
            report = objective.report(x)
        except NonFiniteGradient as exc:
            raise NonFiniteGradient(f"step {step}: {exc}", step=step) from exc
        history.append(report)
        if record_params:
            params.append(x.copy())
        x = adam.step(x, report.gradient)
        if on_checkpoint and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            on_checkpoint(step + 1, init.with_params(x))

    final_spec = init.with_params(x)
    final = objective0.report(x, with_gradient=False)
    return RunRecord(history, final_spec, time.perf_counter() - start, initial, final, params)
