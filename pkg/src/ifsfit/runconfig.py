"""JSON run configuration for ``ifsfit optimize``.

Example::

    {
      "preset": "koch",
      "noise_std": 0.05,
      "seed": 0,
      "output_dir": "runs/koch_square",
      "target": "unit_square",
      "steps": 200,
      "learning_rate": 0.02,
      "depth": 4,
      "resolution": [[0, 64], [140, 128]],
      "sigma_blur": [[0, 2.0], [140, 1.0]],
      "lambda_cross": 1.0
    }

Exactly one of ``preset`` / ``spec`` is required.  Relative paths (``spec``,
``output_dir``, an image ``target``) resolve against the config file's
directory.  Any key not listed in ``RUN_KEYS`` or ``OPTIM_KEYS`` is rejected.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import InvalidSpec
from .geometry import GeneratorSpec
from .optimizer import OptimConfig, perturb, preset
from .renderer import DEFAULT_BOUNDS, Viewport

OPTIM_KEYS = {f.name for f in dataclasses.fields(OptimConfig)}
RUN_KEYS = {"preset", "spec", "noise_std", "seed", "output_dir", "viewport", "target"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    init: GeneratorSpec
    optim: OptimConfig
    output_dir: Path
    viewport: Viewport
    target: str | Path


def _schedule(value, key):
    try:
        return tuple((int(s), v) for s, v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a list of [step, value] pairs") from None


def parse_run_config(data: dict, base_dir: Path) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - OPTIM_KEYS - RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if ("preset" in data) == ("spec" in data):
        raise ConfigError("exactly one of 'preset' or 'spec' is required")

    optim_kw = {k: v for k, v in data.items() if k in OPTIM_KEYS}
    for key in ("resolution", "sigma_blur"):
        if key in optim_kw:
            optim_kw[key] = _schedule(optim_kw[key], key)
    try:
        optim = OptimConfig(**optim_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid optimizer settings: {exc}") from None

    try:
        if "preset" in data:
            base = preset(data["preset"])
        else:
            base = GeneratorSpec.load(base_dir / data["spec"])
        init = perturb(base, float(data.get("noise_std", 0.0)), int(data.get("seed", optim.rng_seed)))
    except (InvalidSpec, KeyError, OSError, ValueError) as exc:
        raise ConfigError(f"invalid generator: {exc}") from None

    bounds = data.get("viewport", DEFAULT_BOUNDS)
    try:
        xmin, xmax, ymin, ymax = map(float, bounds)
        w0 = optim.resolution[0][1]
        vp = Viewport(xmin, xmax, ymin, ymax, w0, w0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid viewport {bounds!r}: {exc}") from None

    target = data.get("target", "unit_square")
    if not isinstance(target, str):
        raise ConfigError("target must be 'unit_square' or an image path")
    if target != "unit_square":
        target = base_dir / target
    out = base_dir / data.get("output_dir", "run")
    return RunConfig(init, optim, out, vp, target)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_run_config(data, path.resolve().parent)
