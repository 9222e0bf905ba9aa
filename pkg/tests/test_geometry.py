import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from ifsfit import (
    BudgetExceeded,
    DegenerateSegment,
    GeneratorSpec,
    InvalidSpec,
    Similarity,
    ZeroSpan,
    control_points_from_offsets,
    expand_ifs,
    generator_transforms,
    point_segment_distance,
    preset,
    similarity_from_segments,
)
from ifsfit.geometry import transform_segments

R3 = math.sqrt(3.0)
KOCH_POINTS = [(0, 0), (1 / 3, 0), (0.5, R3 / 6), (2 / 3, 0), (1, 0)]

coord = st.floats(-2.0, 2.0, allow_nan=False)
point = st.tuples(coord, coord)


def _similarity(points=point, reflect=st.booleans()):
    @st.composite
    def build(draw):
        a, b, c, d = (draw(points) for _ in range(4))
        assume(math.dist(a, b) > 1e-2 and math.dist(c, d) > 1e-2)
        return similarity_from_segments((a, b), (c, d), draw(reflect))
    return build()


@st.composite
def specs(draw, n_min=3, n_max=5):
    n = draw(st.integers(n_min, n_max))
    offsets = [draw(st.tuples(st.floats(-0.5, 0.8), st.floats(-0.6, 0.6))) for _ in range(n)]
    reflect = [draw(st.booleans()) for _ in range(n)]
    try:
        spec = GeneratorSpec((0.0, 0.0), (1.0, 0.0), offsets, reflect)
        pts = control_points_from_offsets(spec)
    except InvalidSpec:
        assume(False)
    # keep the curve from blowing up: each piece must contract
    assume(np.all(np.linalg.norm(np.diff(pts, axis=0), axis=1) < 0.9))
    assume(np.all(np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-2))
    return spec


def test_koch_transforms_match_literal_matrices():
    T = [t.matrix() for t in generator_transforms(preset("koch"))]
    s = R3 / 6
    np.testing.assert_allclose(T[0], [[1 / 3, 0, 0], [0, 1 / 3, 0], [0, 0, 1]], atol=1e-12)
    np.testing.assert_allclose(T[1], [[1 / 6, -s, 1 / 3], [s, 1 / 6, 0], [0, 0, 1]], atol=1e-12)
    np.testing.assert_allclose(T[2][:2, :2], [[1 / 6, s], [-s, 1 / 6]], atol=1e-12)
    np.testing.assert_allclose(T[2][:2, 2], [0.5, s], atol=1e-12)
    np.testing.assert_allclose(T[3], [[1 / 3, 0, 2 / 3], [0, 1 / 3, 0], [0, 0, 1]], atol=1e-12)


def test_literal_third_translation_breaks_chain():
    # the third map must start where the second one ends
    T2 = generator_transforms(preset("koch"))[1]
    literal_T3 = Similarity(1 / 6, R3 / 6, -R3 / 6, 1 / 6, 1 / 3, 0.0)
    assert math.dist(T2((1, 0)), literal_T3((0, 0))) > 0.1
    assert math.dist(T2((1, 0)), (0.5, R3 / 6)) < 1e-15


def test_koch_control_points():
    np.testing.assert_allclose(control_points_from_offsets(preset("koch")), KOCH_POINTS, atol=1e-15)


def test_pinning_normalizes_unscaled_offsets():
    spec = GeneratorSpec((0, 0), (1, 0), [(2, 0), (1, R3), (1, -R3), (2, 0)], [False] * 4)
    np.testing.assert_allclose(control_points_from_offsets(spec), KOCH_POINTS, atol=1e-15)


def test_pinning_hits_endpoints_exactly():
    spec = GeneratorSpec((0.3, -0.1), (1.7, 0.9), [(0.2, 0.1), (0.4, 0.5), (0.3, -0.2)], [False] * 3)
    pts = control_points_from_offsets(spec)
    assert tuple(pts[0]) == spec.e1 and tuple(pts[-1]) == spec.e2


def test_koch_depth_one_is_the_generator():
    segs = expand_ifs(preset("koch"), 1)
    np.testing.assert_allclose(segs[:, 0], KOCH_POINTS[:-1], atol=1e-15)
    np.testing.assert_allclose(segs[:, 1], KOCH_POINTS[1:], atol=1e-15)


def test_depth_zero_is_base_segment():
    segs = expand_ifs(preset("arrowhead"), 0)
    assert segs.shape == (1, 2, 2)
    np.testing.assert_array_equal(segs[0], [[0, 0], [1, 0]])


@settings(max_examples=30, deadline=None)
@given(specs(), st.integers(0, 4))
def test_count_law(spec, depth):
    assert len(expand_ifs(spec, depth)) == (spec.n - 1) ** depth


@settings(max_examples=40, deadline=None)
@given(specs(), st.integers(1, 4))
def test_chain_is_bit_exact(spec, depth):
    segs = expand_ifs(spec, depth)
    np.testing.assert_array_equal(segs[1:, 0], segs[:-1, 1])
    assert tuple(segs[0, 0]) == spec.e1 and tuple(segs[-1, 1]) == spec.e2


@settings(max_examples=30, deadline=None)
@given(specs(), st.integers(1, 3))
def test_recursion_coherence(spec, depth):
    # S_K is the union of T_i(S_{K-1}), in order
    parts = [transform_segments(T, expand_ifs(spec, depth - 1)) for T in generator_transforms(spec)]
    np.testing.assert_allclose(expand_ifs(spec, depth), np.concatenate(parts), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(_similarity(), point)
def test_inverse_round_trip(T, p):
    q = T.inverse()(T(p))
    assert math.dist(p, q) < 1e-9


@settings(max_examples=60, deadline=None)
@given(point, point, point, point, st.booleans())
def test_similarity_endpoints_and_determinant(a, b, c, d, reflect):
    assume(math.dist(a, b) > 1e-2 and math.dist(c, d) > 1e-2)
    T = similarity_from_segments((a, b), (c, d), reflect)
    assert math.dist(T(a), c) < 1e-9 and math.dist(T(b), d) < 1e-9
    ratio = math.dist(c, d) / math.dist(a, b)
    assert T.det == pytest.approx((-1 if reflect else 1) * ratio ** 2, rel=1e-9)
    assert T.reflected is reflect


@settings(max_examples=40, deadline=None)
@given(_similarity(), _similarity(), point)
def test_compose_applies_right_first(S, T, p):
    assert math.dist(S.compose(T)(p), S(T(p))) < 1e-8


def test_reflection_mirrors_across_destination():
    T = similarity_from_segments(((0, 0), (1, 0)), ((0, 0), (1, 0)), reflect=True)
    assert T((0.5, 0.3)) == pytest.approx((0.5, -0.3))


@settings(max_examples=60, deadline=None)
@given(point, point, point, st.floats(0.1, 10.0))
def test_distance_scales_with_similarity(p, a, b, k):
    assume(math.dist(a, b) > 1e-3)
    d = point_segment_distance(p, (a, b))
    scaled = point_segment_distance((k * p[0], k * p[1]), ((k * a[0], k * a[1]), (k * b[0], k * b[1])))
    assert scaled == pytest.approx(k * d, rel=1e-9, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(point, point, st.floats(0.0, 1.0))
def test_distance_zero_on_segment(a, b, t):
    p = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
    assert point_segment_distance(p, (a, b)) < 1e-12


def test_distance_examples():
    s = ((0.0, 0.0), (2.0, 0.0))
    assert point_segment_distance((1, 1), s) == 1.0
    assert point_segment_distance((-3, 4), s) == 5.0
    assert point_segment_distance((5, 4), s) == 5.0


def test_json_round_trip(tmp_path):
    spec = preset("arrowhead")
    assert GeneratorSpec.from_json(spec.to_json()) == spec
    spec.save(tmp_path / "s.json")
    assert GeneratorSpec.load(tmp_path / "s.json") == spec
    assert set(json.loads(spec.to_json())) == {"e1", "e2", "offsets", "reflect"}


def test_json_rejects_unknown_keys():
    d = preset("koch").to_dict()
    d["extra"] = 1
    with pytest.raises(InvalidSpec):
        GeneratorSpec.from_dict(d)


@pytest.mark.parametrize("kwargs, exc", [
    (dict(e1=(0, 0), e2=(0, 0), offsets=[(1, 0)] * 3, reflect=[False] * 3), InvalidSpec),
    (dict(e1=(0, 0), e2=(1, 0), offsets=[(1, 0)], reflect=[False]), InvalidSpec),
    (dict(e1=(0, 0), e2=(1, 0), offsets=[(1, 0)] * 3, reflect=[False] * 2), InvalidSpec),
    (dict(e1=(0, 0), e2=(1, 0), offsets=[(1, 0), (0, 0), (1, 0)], reflect=[False] * 3), DegenerateSegment),
])
def test_invalid_specs(kwargs, exc):
    with pytest.raises(exc):
        GeneratorSpec(**kwargs)


def test_zero_span():
    with pytest.raises(ZeroSpan):
        GeneratorSpec((0, 0), (1, 0), [(1, 0), (0, 1), (-1, -1)], [False] * 3)


def test_budget():
    with pytest.raises(BudgetExceeded):
        expand_ifs(preset("koch"), 9)
    assert len(expand_ifs(preset("koch"), 3, budget=64)) == 64
    with pytest.raises(BudgetExceeded):
        expand_ifs(preset("koch"), 3, budget=63)
