import math

import numpy as np
import pytest

import oracles
from ifsfit import (
    NonFiniteGradient,
    OptimConfig,
    RasterImage,
    UnknownPreset,
    Viewport,
    ViewportTooSmall,
    control_points_from_offsets,
    expand_ifs,
    optimize,
    perturb,
    preset,
    render_segments,
    target_unit_square,
)
from ifsfit.optimizer import Adam, resample_image, schedule_value

SMALL = dict(depth=2, resolution=((0, 24),), sigma_blur=((0, 2.0),))


def test_presets():
    assert preset("koch").n == 5 and preset("arrowhead").n == 4
    with pytest.raises(UnknownPreset):
        preset("dragon")


def test_arrowhead_is_simple():
    # half the generator step at depth 5 separates non-consecutive pieces
    assert oracles.min_nonadjacent_gap(expand_ifs(preset("arrowhead"), 5)) == pytest.approx(1 / 32)


def test_perturb_is_seeded():
    a, b = perturb(preset("koch"), 0.05, 3), perturb(preset("koch"), 0.05, 3)
    assert a == b
    assert a != perturb(preset("koch"), 0.05, 4)
    assert perturb(preset("koch"), 0.0, 3) == preset("koch")
    with pytest.raises(ValueError):
        perturb(preset("koch"), -1.0, 0)


def test_perturb_noise_scale():
    delta = np.concatenate([perturb(preset("koch"), 0.05, s).params() - preset("koch").params()
                            for s in range(200)])
    assert np.std(delta) == pytest.approx(0.05, rel=0.05)


def test_unit_square_target():
    t = target_unit_square(Viewport.default(70))
    # 50 of the 70 columns (and rows) have centers inside [0, 1]
    assert t.data.sum() == 50 * 50
    with pytest.raises(ViewportTooSmall):
        target_unit_square(Viewport(0.1, 1.2, -0.2, 1.2, 16, 16))


def test_resample_identity():
    vp = Viewport.default(32)
    img = render_segments(expand_ifs(preset("koch"), 2), vp)
    np.testing.assert_allclose(resample_image(img, vp).data, img.data, atol=1e-15)


def test_adam_first_step_and_zero_gradient():
    adam = Adam(0.1)
    x = adam.step(np.array([1.0, 2.0]), np.array([3.0, -0.5]))
    np.testing.assert_allclose(x, [0.9, 2.1], rtol=1e-6)
    adam = Adam(0.1)
    np.testing.assert_array_equal(adam.step(np.array([1.0, 2.0]), np.zeros(2)), [1.0, 2.0])


def test_adam_minimizes_quadratic():
    adam, x = Adam(0.05), np.array([3.0, -2.0])
    for _ in range(2000):
        x = adam.step(x, 2 * (x - [0.5, 0.25]))
    np.testing.assert_allclose(x, [0.5, 0.25], atol=1e-3)


def test_schedule_value():
    sched = ((0, 64), (10, 128))
    assert [schedule_value(sched, s) for s in (0, 9, 10, 99)] == [64, 64, 128, 128]


def test_default_schedule():
    cfg = OptimConfig(steps=200)
    assert cfg.width(139) == 64 and cfg.width(140) == 128
    assert cfg.loss_config(0).sigma_blur == 2.0 and cfg.loss_config(140).sigma_blur == 1.0
    with pytest.raises(ValueError):
        OptimConfig(resolution=((5, 64),))


def test_zero_steps():
    init = perturb(preset("koch"), 0.05, 0)
    rec = optimize(init, target_unit_square, OptimConfig(steps=0, **SMALL))
    assert rec.history == [] and rec.final_spec == init
    assert rec.final.total == rec.initial.total


def test_optimize_is_deterministic():
    init = perturb(preset("koch"), 0.05, 1)
    cfg = OptimConfig(steps=5, **SMALL)
    a = optimize(init, target_unit_square, cfg)
    b = optimize(init, target_unit_square, cfg)
    assert [r.total for r in a.history] == [r.total for r in b.history]
    assert a.final_spec == b.final_spec


def test_descends_on_small_problem():
    init = perturb(preset("koch"), 0.05, 2)
    rec = optimize(init, target_unit_square, OptimConfig(steps=30, **SMALL))
    assert rec.final.total < rec.initial.total


def test_self_target_is_fixed_point():
    spec = preset("koch")
    vp = Viewport.default(24)
    target = render_segments(expand_ifs(spec, 2), vp)
    rec = optimize(spec, target, OptimConfig(steps=3, lambda_cross=0.0, **SMALL))
    assert rec.final_spec == spec


def test_endpoints_stay_pinned():
    init = perturb(preset("koch"), 0.05, 3)
    rec = optimize(init, target_unit_square, OptimConfig(steps=5, **SMALL))
    pts = control_points_from_offsets(rec.final_spec)
    assert tuple(pts[0]) == (0.0, 0.0) and tuple(pts[-1]) == (1.0, 0.0)


def test_checkpoints_and_params():
    seen = []
    cfg = OptimConfig(steps=4, checkpoint_every=2, **SMALL)
    rec = optimize(preset("koch"), target_unit_square, cfg, on_checkpoint=lambda s, spec: seen.append(s),
                   record_params=True)
    assert seen == [2, 4] and len(rec.params) == 4


def test_nan_target_raises_with_step():
    vp = Viewport.default(24)
    target = RasterImage(np.full((24, 24), math.nan), vp)
    with pytest.raises(NonFiniteGradient) as info:
        optimize(preset("koch"), target, OptimConfig(steps=3, **SMALL))
    assert info.value.step == 0


def test_fixed_target_size_checked():
    with pytest.raises(ValueError):
        optimize(preset("koch"), target_unit_square(Viewport.default(32)), OptimConfig(steps=1, **SMALL))
