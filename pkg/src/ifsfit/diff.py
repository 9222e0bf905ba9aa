"""Loss + gradient evaluation and the finite-difference oracle used to check it.

An *objective* is any callable mapping a 1-D float64 torch tensor of
parameters to a scalar tensor.  Gradients come from torch autograd; the
finite-difference path only ever calls the objective forward, without
gradient tracking, so it stays independent of autograd.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import torch

from .errors import NonFiniteGradient

Objective = Callable[[torch.Tensor], torch.Tensor]

DEFAULT_FD_STEP = 1e-4
REL_TOLERANCE = 1e-3
ABS_FLOOR = 1e-6


def _as_params(params) -> np.ndarray:
    x = np.asarray(params, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError("parameters must be finite")
    return x


def forward(objective: Objective, params) -> float:
    """Evaluate without gradient tracking."""
    with torch.no_grad():
        return float(objective(torch.from_numpy(_as_params(params).copy())))


def evaluate_with_gradient(objective: Objective, params) -> tuple[float, np.ndarray]:
    """Return ``(loss, gradient)``; raises :class:`NonFiniteGradient` on NaN/Inf."""
    x = torch.from_numpy(_as_params(params).copy()).requires_grad_(True)
    y = objective(x)
    if not isinstance(y, torch.Tensor):
        y = torch.tensor(float(y), dtype=torch.float64)
    if y.requires_grad:
        (g,) = torch.autograd.grad(y, x, allow_unused=True)
        grad = np.zeros(x.shape) if g is None else g.numpy().copy()
    else:
        grad = np.zeros(x.shape)
    if not np.all(np.isfinite(grad)):
        bad = np.flatnonzero(~np.isfinite(grad)).tolist()
        raise NonFiniteGradient(f"non-finite gradient entries at {bad}")
    return float(y.detach()), grad


def finite_difference_gradient(objective: Objective, params, h: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Central differences ``(f(p + h e_k) - f(p - h e_k)) / 2h``."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = _as_params(params)
    out = np.empty_like(x)
    for k in range(x.size):
        up, down = x.copy(), x.copy()
        up[k] += h
        down[k] -= h
        out[k] = (forward(objective, up) - forward(objective, down)) / (2 * h)
    return out


def relative_errors(grad: np.ndarray, reference: np.ndarray, floor: float = ABS_FLOOR,
                    rtol: float = REL_TOLERANCE) -> np.ndarray:
    """Per-coordinate ``|grad - reference| / max(|reference|, floor / rtol)``.

    ``error <= rtol`` exactly when ``|grad - reference| <= max(rtol * |reference|, floor)``:
    large components are judged relatively, tiny ones against the absolute floor.
    """
    grad, reference = np.asarray(grad), np.asarray(reference)
    return np.abs(grad - reference) / np.maximum(np.abs(reference), floor / rtol)


def check_gradient(objective: Objective, params, h: float = DEFAULT_FD_STEP, floor: float = ABS_FLOOR,
                   rtol: float = REL_TOLERANCE) -> tuple[float, np.ndarray, np.ndarray]:
    """Compare autograd with central differences.

    Returns ``(max_relative_error, gradient, fd_gradient)``.
    """
    _, grad = evaluate_with_gradient(objective, params)
    fd = finite_difference_gradient(objective, params, h)
    return float(relative_errors(grad, fd, floor, rtol).max()), grad, fd
