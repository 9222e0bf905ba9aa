"""Render IFS fractal curves and fit them to target images.

Exit codes:
    0  success
    2  invalid arguments, spec or config
    3  segment budget exceeded
    4  non-finite gradient during optimization
    5  gradient check failed
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .diff import ABS_FLOOR, DEFAULT_FD_STEP, REL_TOLERANCE, finite_difference_gradient, relative_errors
from .errors import BudgetExceeded, InvalidSpec, NonFiniteGradient, UnknownPreset
from .geometry import DEFAULT_SEGMENT_BUDGET, GeneratorSpec, expand_ifs, generator_transforms
from .loss import LossConfig, SpecObjective
from .optimizer import PRESETS, optimize, perturb, preset, resample_image, target_unit_square
from .raster_io import load_grayscale, save_image, write_pgm
from .renderer import DEFAULT_BOUNDS, DEFAULT_SIGMA, Viewport, deepen_image, render_segments
from .runconfig import ConfigError, load_run_config

EXIT_OK, EXIT_INVALID, EXIT_BUDGET, EXIT_NONFINITE, EXIT_GRADCHECK = 0, 2, 3, 4, 5


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _load_spec(args) -> GeneratorSpec:
    try:
        spec = GeneratorSpec.load(args.spec) if args.spec else preset(args.preset)
        return perturb(spec, args.noise, args.seed)
    except (InvalidSpec, UnknownPreset, OSError, ValueError) as exc:
        raise CommandError(f"invalid spec: {exc}", EXIT_INVALID) from None


def _viewport(args, width: int) -> Viewport:
    try:
        return Viewport(*args.viewport, width, width)
    except ValueError as exc:
        raise CommandError(f"invalid viewport: {exc}", EXIT_INVALID) from None


def cmd_render(args) -> int:
    if args.width < 16:
        raise CommandError("--width must be at least 16", EXIT_INVALID)
    spec = _load_spec(args)
    vp = _viewport(args, args.width)
    start = time.perf_counter()
    try:
        segs = expand_ifs(spec, args.depth, args.budget)
    except BudgetExceeded as exc:
        raise CommandError(str(exc), EXIT_BUDGET) from None
    img = render_segments(segs, vp, args.sigma)
    if args.deepen:
        img = deepen_image(img, generator_transforms(spec), args.deepen)
    try:
        save_image(img, args.output)
    except ValueError as exc:
        raise CommandError(str(exc), EXIT_INVALID) from None
    print(f"segments={len(segs)} time={time.perf_counter() - start:.3f}s output={args.output}")
    return EXIT_OK


def write_loss_csv(history, path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["step", "bmse", "crossing", "total"])
        for step, r in enumerate(history):
            w.writerow([step, repr(r.bmse), repr(r.crossing), repr(r.total)])


def cmd_optimize(args) -> int:
    try:
        rc = load_run_config(args.config)
    except ConfigError as exc:
        raise CommandError(str(exc), EXIT_INVALID) from None
    if rc.target == "unit_square":
        target = target_unit_square
    else:
        try:
            image = load_grayscale(rc.target, rc.viewport)
        except OSError as exc:
            raise CommandError(f"cannot read target: {exc}", EXIT_INVALID) from None

        def target(vp):
            return resample_image(image, vp)

    out = rc.output_dir
    ckpt = out / "checkpoints"
    out.mkdir(parents=True, exist_ok=True)
    rc.init.save(out / "init.json")

    def on_checkpoint(step, spec):
        ckpt.mkdir(exist_ok=True)
        spec.save(ckpt / f"step_{step:05d}.json")

    try:
        rec = optimize(rc.init, target, rc.optim, rc.viewport, on_checkpoint)
    except NonFiniteGradient as exc:
        raise CommandError(f"non-finite gradient at step {exc.step}: {exc}", EXIT_NONFINITE) from None
    except BudgetExceeded as exc:
        raise CommandError(str(exc), EXIT_BUDGET) from None

    rec.final_spec.save(out / "final.json")
    write_loss_csv(rec.history, out / "loss.csv")
    width = rc.optim.width(max(rc.optim.steps - 1, 0))
    img = render_segments(expand_ifs(rec.final_spec, rc.optim.depth), rc.viewport.resized(width),
                          rc.optim.sigma)
    save_image(img, out / "final.png")
    write_pgm(img, out / "final.pgm")
    print(f"final_total={rec.final.total!r} initial_total={rec.initial.total!r}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    spec = _load_spec(args)
    vp = _viewport(args, args.width)
    cfg = LossConfig(args.depth, DEFAULT_SIGMA, args.sigma_blur, args.sigma_cross, args.lambda_cross)
    if args.target_self:
        target = render_segments(expand_ifs(spec, args.depth), vp, cfg.sigma)
    else:
        target = target_unit_square(vp)
    obj = SpecObjective(spec, target, cfg)
    x = spec.params()
    try:
        report = obj.report(x)
    except NonFiniteGradient as exc:
        raise CommandError(str(exc), EXIT_NONFINITE) from None
    grad = report.gradient * (1.0 + args.corrupt_gradient)
    fd = finite_difference_gradient(obj, x, args.h)
    err = float(relative_errors(grad, fd, ABS_FLOOR, args.tol).max())
    ok = err <= args.tol
    smooth = obj.smooth_stencil(x, args.h)
    print(f"loss={report.total!r} params={x.size} max_abs_gradient={np.abs(grad).max():.6e} "
          f"max_rel_error={err:.6e} tolerance={args.tol:g} smooth_stencil={'yes' if smooth else 'no'} "
          f"{'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_GRADCHECK


def cmd_presets(args) -> int:
    for name, spec in PRESETS.items():
        print(f"{name}: n={spec.n} reflect={list(spec.reflect)}")
        if args.verbose:
            print(spec.to_json(), end="")
    return EXIT_OK


def _add_spec_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", default="koch", choices=sorted(PRESETS))
    src.add_argument("--spec", type=Path, help="generator spec JSON file")
    p.add_argument("--noise", type=float, default=0.0, help="std of Gaussian offset noise")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--viewport", type=float, nargs=4, default=list(DEFAULT_BOUNDS),
                   metavar=("XMIN", "XMAX", "YMIN", "YMAX"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ifsfit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a generator to PGM/PNG")
    _add_spec_args(p)
    p.add_argument("--depth", type=int, default=4)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    p.add_argument("--deepen", type=int, default=0, help="image-mapping iterations")
    p.add_argument("--budget", type=int, default=DEFAULT_SEGMENT_BUDGET)
    p.add_argument("-o", "--output", type=Path, required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("optimize", help="fit a generator to a target image")
    p.add_argument("config", type=Path)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("gradcheck", help="compare gradients with finite differences")
    _add_spec_args(p)
    p.set_defaults(noise=0.05)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--sigma-blur", type=float, default=2.0)
    p.add_argument("--sigma-cross", type=float, default=0.5)
    p.add_argument("--lambda-cross", type=float, default=1.0)
    p.add_argument("--target-self", action="store_true",
                   help="use the generator's own render as target (zero-loss stationary point)")
    p.add_argument("--h", type=float, default=DEFAULT_FD_STEP)
    p.add_argument("--tol", type=float, default=REL_TOLERANCE)
    p.add_argument("--corrupt-gradient", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("presets", help="list built-in generators")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
