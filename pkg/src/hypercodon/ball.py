"""Poincare ball of curvature ``-c``: distances, Mobius addition, exp/log maps.

All functions take batched tensors (last axis = coordinates) and a plain
float curvature. Outputs that are points are pulled back inside the ball by
:func:`project_to_ball` so that ``c * |x|^2 <= (1 - eps)^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .diffcore import Tensor, acosh1p, artanh, safe_norm

BOUNDARY_EPS = 1e-5


def _check_c(c: float) -> None:
    if not c > 0:
        raise ValueError(f"curvature must be positive, got {c}")


def _same_dim(op: str, x: Tensor, y: Tensor) -> None:
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"{op}: dimension mismatch {x.shape[-1]} vs {y.shape[-1]}")


def sq_norm(x: Tensor, keepdim: bool = False) -> Tensor:
    return (x * x).sum(dim=-1, keepdim=keepdim)


def conformal_factor(x: Tensor, c: float = 1.0, keepdim: bool = False) -> Tensor:
    """``2 / (1 - c |x|^2)``; equals 2 at the origin."""
    return 2.0 / (1.0 - c * sq_norm(x, keepdim=keepdim))


def project_to_ball(v: Tensor, c: float = 1.0, eps: float = BOUNDARY_EPS) -> Tensor:
    """Radially rescale points with ``sqrt(c)|v| > 1 - eps`` onto that radius."""
    _check_c(c)
    if not torch.isfinite(v).all():
        raise ValueError("project_to_ball: non-finite coordinates")
    max_norm = (1.0 - eps) / math.sqrt(c)
    norm = safe_norm(v, keepdim=True)
    scale = torch.where(norm > max_norm, max_norm / norm, torch.ones_like(norm))
    return v * scale


def is_inside(x: Tensor, c: float = 1.0, eps: float = BOUNDARY_EPS) -> bool:
    return bool((c * sq_norm(x) <= (1.0 - eps) ** 2 * (1 + 1e-12)).all())


def mobius_add(x: Tensor, y: Tensor, c: float = 1.0, eps: float = BOUNDARY_EPS) -> Tensor:
    _check_c(c)
    _same_dim("mobius_add", x, y)
    xy = (x * y).sum(dim=-1, keepdim=True)
    x2 = sq_norm(x, keepdim=True)
    y2 = sq_norm(y, keepdim=True)
    num = (1 + 2 * c * xy + c * y2) * x + (1 - c * x2) * y
    den = 1 + 2 * c * xy + c * c * x2 * y2
    return project_to_ball(num / den, c, eps)


def dist(x: Tensor, y: Tensor, c: float = 1.0) -> Tensor:
    """Geodesic distance via the closed-form arccosh expression."""
    _check_c(c)
    _same_dim("dist", x, y)
    diff2 = sq_norm(x - y)
    den = (1 - c * sq_norm(x)) * (1 - c * sq_norm(y))
    return acosh1p(2 * c * diff2 / den) / math.sqrt(c)


def exp_map(x: Tensor, v: Tensor, c: float = 1.0, eps: float = BOUNDARY_EPS) -> Tensor:
    """Follow the geodesic from ``x`` with initial velocity ``v``.

    ``v = 0`` returns ``x`` exactly (the clamped norm makes the second
    Mobius summand an exact zero).
    """
    _check_c(c)
    _same_dim("exp_map", x, v)
    sqrt_c = math.sqrt(c)
    lam = conformal_factor(x, c, keepdim=True)
    vn = safe_norm(v, keepdim=True)
    step = torch.tanh(sqrt_c * lam * vn / 2) * v / (sqrt_c * vn)
    return mobius_add(x, step, c, eps)


def log_map(x: Tensor, y: Tensor, c: float = 1.0, eps: float = BOUNDARY_EPS) -> Tensor:
    """Tangent vector at ``x`` pointing to ``y``; zero when ``y == x``."""
    _check_c(c)
    _same_dim("log_map", x, y)
    sqrt_c = math.sqrt(c)
    u = mobius_add(-x, y, c, eps)
    un = safe_norm(u, keepdim=True)
    lam = conformal_factor(x, c, keepdim=True)
    return 2 / (sqrt_c * lam) * artanh(sqrt_c * un) * u / un


def exp_map0(v: Tensor, c: float = 1.0, eps: float = BOUNDARY_EPS) -> Tensor:
    _check_c(c)
    sqrt_c = math.sqrt(c)
    vn = safe_norm(v, keepdim=True)
    return project_to_ball(torch.tanh(sqrt_c * vn) * v / (sqrt_c * vn), c, eps)


def log_map0(y: Tensor, c: float = 1.0) -> Tensor:
    _check_c(c)
    sqrt_c = math.sqrt(c)
    yn = safe_norm(y, keepdim=True)
    return artanh(sqrt_c * yn) * y / (sqrt_c * yn)


def riemannian_grad(x: Tensor, egrad: Tensor, c: float = 1.0) -> Tensor:
    """Rescale a Euclidean gradient by the inverse metric ``1 / lambda_x^2``."""
    return egrad / conformal_factor(x, c, keepdim=True) ** 2


@dataclass(frozen=True)
class PoincareBall:
    """Curvature-bound view over the module functions."""

    c: float = 1.0
    eps: float = BOUNDARY_EPS

    def __post_init__(self):
        _check_c(self.c)

    @property
    def radius(self) -> float:
        return 1.0 / math.sqrt(self.c)

    def lam(self, x):
        return conformal_factor(x, self.c)

    def proj(self, v):
        return project_to_ball(v, self.c, self.eps)

    def add(self, x, y):
        return mobius_add(x, y, self.c, self.eps)

    def dist(self, x, y):
        return dist(x, y, self.c)

    def expmap(self, x, v):
        return exp_map(x, v, self.c, self.eps)

    def logmap(self, x, y):
        return log_map(x, y, self.c, self.eps)

    def expmap0(self, v):
        return exp_map0(v, self.c, self.eps)

    def logmap0(self, y):
        return log_map0(y, self.c)

    def contains(self, x) -> bool:
        return is_inside(x, self.c, self.eps)
