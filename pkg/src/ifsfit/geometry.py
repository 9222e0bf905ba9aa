"""Points, similarity transforms, generator specs and IFS expansion.

A generator is a polyline from a fixed start ``e1`` to a fixed end ``e2``.
Each of its segments defines a similarity that carries the base segment
``(e1, e2)`` onto that segment; applying all of them recursively to the base
segment yields the fractal curve as a chain of line segments.

The float-level helpers (``similarity_from_segments``, ``apply_similarity``,
``point_segment_distance``) work on plain tuples.  The expansion itself is
written once against torch tensors so that the optimizer can differentiate
through it; ``expand_ifs`` wraps it for numpy callers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .errors import BudgetExceeded, DegenerateSegment, InvalidSpec, ZeroSpan

Point2 = tuple[float, float]
Segment = tuple[Point2, Point2]

DEFAULT_SEGMENT_BUDGET = 65536
_DEGENERATE = 1e-12


def _as_point(p: Sequence[float]) -> Point2:
    if len(p) != 2:
        raise InvalidSpec(f"expected a 2-vector, got {p!r}")
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InvalidSpec(f"non-finite coordinate in {p!r}")
    return (x, y)


@dataclass(frozen=True)
class Similarity:
    """Affine map ``p -> M p + t`` whose linear part is a scaled rotation,
    optionally composed with a reflection (``reflected=True``)."""

    m00: float
    m01: float
    m10: float
    m11: float
    tx: float
    ty: float
    reflected: bool = False

    @classmethod
    def identity(cls) -> Similarity:
        return cls(1.0, 0.0, 0.0, 1.0, 0.0, 0.0)

    @property
    def det(self) -> float:
        return self.m00 * self.m11 - self.m01 * self.m10

    @property
    def scale(self) -> float:
        return math.sqrt(abs(self.det))

    def __call__(self, p: Sequence[float]) -> Point2:
        return apply_similarity(self, p)

    def matrix(self) -> np.ndarray:
        """Homogeneous 3x3 matrix."""
        return np.array(
            [[self.m00, self.m01, self.tx], [self.m10, self.m11, self.ty], [0.0, 0.0, 1.0]]
        )

    def inverse(self) -> Similarity:
        d = self.det
        a, b = self.m11 / d, -self.m01 / d
        c, e = -self.m10 / d, self.m00 / d
        return Similarity(a, b, c, e, -(a * self.tx + b * self.ty), -(c * self.tx + e * self.ty),
                          self.reflected)

    def compose(self, other: Similarity) -> Similarity:
        """Return ``self ∘ other`` (apply ``other`` first)."""
        m = self.matrix() @ other.matrix()
        return Similarity(m[0, 0], m[0, 1], m[1, 0], m[1, 1], m[0, 2], m[1, 2],
                          self.reflected != other.reflected)


def apply_similarity(T: Similarity, p: Sequence[float]) -> Point2:
    x, y = p
    return (T.m00 * x + T.m01 * y + T.tx, T.m10 * x + T.m11 * y + T.ty)


def similarity_from_segments(src: Segment, dst: Segment, reflect: bool = False) -> Similarity:
    """Similarity taking ``src.a -> dst.a`` and ``src.b -> dst.b``.

    With ``reflect=True`` the orientation-reversing solution is returned:
    the copy is mirrored across the destination segment while the endpoint
    correspondence stays the same.
    """
    sa, sb = complex(*src[0]), complex(*src[1])
    da, db = complex(*dst[0]), complex(*dst[1])
    u, v = sb - sa, db - da
    if abs(u) < _DEGENERATE or abs(v) < _DEGENERATE:
        raise DegenerateSegment(f"segment shorter than {_DEGENERATE}: {src!r} -> {dst!r}")
    if reflect:
        # z -> c * conj(z)
        c = v / u.conjugate()
        m00, m01, m10, m11 = c.real, c.imag, c.imag, -c.real
    else:
        c = v / u
        m00, m01, m10, m11 = c.real, -c.imag, c.imag, c.real
    tx = da.real - (m00 * sa.real + m01 * sa.imag)
    ty = da.imag - (m10 * sa.real + m11 * sa.imag)
    return Similarity(m00, m01, m10, m11, tx, ty, reflect)


def point_segment_distance(p: Sequence[float], s: Segment) -> float:
    (ax, ay), (bx, by) = s
    px, py = p
    dx, dy = bx - ax, by - ay
    ll = dx * dx + dy * dy
    t = 0.0 if ll == 0.0 else min(max(((px - ax) * dx + (py - ay) * dy) / ll, 0.0), 1.0)
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


@dataclass(frozen=True)
class GeneratorSpec:
    """Optimizable generator: fixed endpoints, free offsets, fixed reflect flags.

    ``offsets[i]`` is the (unnormalized) step from control point ``i`` to
    ``i + 1``; see :func:`control_points_from_offsets`.
    """

    e1: Point2
    e2: Point2
    offsets: tuple[Point2, ...]
    reflect: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "e1", _as_point(self.e1))
        object.__setattr__(self, "e2", _as_point(self.e2))
        object.__setattr__(self, "offsets", tuple(_as_point(v) for v in self.offsets))
        object.__setattr__(self, "reflect", tuple(bool(r) for r in self.reflect))
        if len(self.offsets) < 2:
            raise InvalidSpec("a generator needs at least 2 offsets (one interior control point)")
        if len(self.reflect) != len(self.offsets):
            raise InvalidSpec(
                f"{len(self.offsets)} offsets but {len(self.reflect)} reflect flags"
            )
        if math.dist(self.e1, self.e2) < _DEGENERATE:
            raise InvalidSpec("endpoints e1 and e2 coincide")
        pts = control_points_from_offsets(self)
        seg_len = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(seg_len < _DEGENERATE):
            i = int(np.argmin(seg_len))
            raise DegenerateSegment(f"generator segment {i} has zero length")

    @property
    def n(self) -> int:
        """Number of control points."""
        return len(self.offsets) + 1

    def params(self) -> np.ndarray:
        """Offsets flattened as ``v1.x, v1.y, v2.x, ...``."""
        return np.array(self.offsets, dtype=np.float64).reshape(-1)

    def with_params(self, values: Sequence[float]) -> GeneratorSpec:
        v = np.asarray(values, dtype=np.float64).reshape(-1, 2)
        if len(v) != len(self.offsets):
            raise InvalidSpec(f"expected {2 * len(self.offsets)} parameters, got {v.size}")
        return GeneratorSpec(self.e1, self.e2, tuple(map(tuple, v.tolist())), self.reflect)

    def to_dict(self) -> dict:
        return {
            "e1": list(self.e1),
            "e2": list(self.e2),
            "offsets": [list(v) for v in self.offsets],
            "reflect": list(self.reflect),
        }

    @classmethod
    def from_dict(cls, d: dict) -> GeneratorSpec:
        try:
            keys = set(d)
        except TypeError:
            raise InvalidSpec("generator spec must be a JSON object") from None
        expected = {"e1", "e2", "offsets", "reflect"}
        if keys != expected:
            extra, missing = sorted(keys - expected), sorted(expected - keys)
            raise InvalidSpec(f"bad generator keys (unknown: {extra}, missing: {missing})")
        if not all(isinstance(r, bool) for r in d["reflect"]):
            raise InvalidSpec("reflect must be an array of booleans")
        try:
            return cls(tuple(d["e1"]), tuple(d["e2"]), tuple(map(tuple, d["offsets"])),
                       tuple(d["reflect"]))
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from None

    def to_json(self) -> str:
        # json emits repr() floats, which round-trip exactly
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> GeneratorSpec:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InvalidSpec(f"invalid JSON: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> GeneratorSpec:
        return cls.from_json(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


# --- tensor kernels (differentiable) -------------------------------------

def _cmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Complex product of (..., 2) real tensors."""
    return torch.stack(
        (a[..., 0] * b[..., 0] - a[..., 1] * b[..., 1], a[..., 0] * b[..., 1] + a[..., 1] * b[..., 0]),
        dim=-1,
    )


def _cdiv(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    den = b[..., 0] ** 2 + b[..., 1] ** 2
    return torch.stack(
        ((a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1]) / den,
         (a[..., 1] * b[..., 0] - a[..., 0] * b[..., 1]) / den),
        dim=-1,
    )


def _conj(a: torch.Tensor) -> torch.Tensor:
    return torch.stack((a[..., 0], -a[..., 1]), dim=-1)


def control_points_tensor(e1: torch.Tensor, e2: torch.Tensor, offsets: torch.Tensor) -> torch.Tensor:
    """Cumulative-sum control points pinned to ``e1``/``e2``; shape (n, 2)."""
    span = offsets.sum(dim=0)
    if float(torch.linalg.vector_norm(span.detach())) < _DEGENERATE:
        raise ZeroSpan("offsets sum to the zero vector; endpoint pinning is undefined")
    rel = torch.cat((torch.zeros_like(e1)[None], torch.cumsum(offsets, dim=0)), dim=0)
    scale = _cdiv(e2 - e1, span)
    inner = e1 + _cmul(scale.expand_as(rel[1:-1]), rel[1:-1])
    return torch.cat((e1[None], inner, e2[None]), dim=0)


def expand_polyline(
    points: torch.Tensor,
    reflect: Sequence[bool],
    depth: int,
    budget: int = DEFAULT_SEGMENT_BUDGET,
) -> torch.Tensor:
    """Vertices of the depth-``depth`` chain, shape ((n-1)**depth + 1, 2).

    ``points`` are the control points; ``points[0]`` and ``points[-1]`` act
    as the base segment.  Junction vertices are taken from ``T_i(e1)``,
    which equals ``p_i`` without rounding, and the final vertex is pinned to
    ``e2``, so consecutive segments share endpoints bit-for-bit.
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    pieces = len(points) - 1
    if pieces ** depth > budget:
        raise BudgetExceeded(
            f"{pieces}^{depth} = {pieces ** depth} segments exceeds budget {budget}"
        )
    e1, e2 = points[0], points[-1]
    steps = points[1:] - points[:-1]
    base = e2 - e1
    flip = torch.tensor(list(reflect), dtype=torch.bool)
    coeff = torch.where(flip[:, None], _cdiv(steps, _conj(base)), _cdiv(steps, base))
    poly = torch.stack((e1, e2))
    for _ in range(depth):
        rel = poly - e1
        rel = torch.where(flip[:, None, None], _conj(rel)[None], rel[None])
        copies = points[:-1, None, :] + _cmul(coeff[:, None, :].expand_as(rel), rel)
        poly = torch.cat((copies[:, :-1].reshape(-1, 2), e2[None]), dim=0)
    return poly


def polyline_segments(poly):
    """(m+1, 2) vertices -> (m, 2, 2) segments; works for numpy or torch."""
    if isinstance(poly, torch.Tensor):
        return torch.stack((poly[:-1], poly[1:]), dim=1)
    return np.stack((poly[:-1], poly[1:]), axis=1)


# --- numpy-facing API ------------------------------------------------------

def _spec_tensors(spec: GeneratorSpec):
    e1 = torch.tensor(spec.e1, dtype=torch.float64)
    e2 = torch.tensor(spec.e2, dtype=torch.float64)
    off = torch.tensor(spec.offsets, dtype=torch.float64)
    return e1, e2, off


def control_points_from_offsets(spec: GeneratorSpec) -> np.ndarray:
    """Control points ``p_1..p_n`` as an (n, 2) array with ``p_1 = e1``, ``p_n = e2``.

    The raw cumulative sum ``q_i = e1 + sum(offsets[:i])`` is mapped by the
    similarity fixing ``e1`` and sending ``q_n`` to ``e2``.
    """
    with torch.no_grad():
        return control_points_tensor(*_spec_tensors(spec)).numpy()


def generator_transforms(spec: GeneratorSpec) -> list[Similarity]:
    pts = control_points_from_offsets(spec)
    base = (spec.e1, spec.e2)
    return [
        similarity_from_segments(base, (tuple(pts[i]), tuple(pts[i + 1])), spec.reflect[i])
        for i in range(len(pts) - 1)
    ]


def expand_ifs(spec: GeneratorSpec, depth: int, budget: int = DEFAULT_SEGMENT_BUDGET) -> np.ndarray:
    """Segments of the depth-``depth`` curve as an (m, 2, 2) array, m = (n-1)**depth."""
    with torch.no_grad():
        e1, e2, off = _spec_tensors(spec)
        poly = expand_polyline(control_points_tensor(e1, e2, off), spec.reflect, depth, budget)
    return polyline_segments(poly.numpy())


def transform_segments(T: Similarity, segments: np.ndarray) -> np.ndarray:
    m = np.array([[T.m00, T.m01], [T.m10, T.m11]])
    return segments @ m.T + np.array([T.tx, T.ty])
