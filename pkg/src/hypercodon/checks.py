"""Seeded invariant suites for the ball and the heads, used by ``geomcheck``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from . import ball
from .diffcore import grad_check
from .heads import ConeConfig, cone_angle, cone_energy, half_aperture, hyperbolic_fc, hyperbolic_mlr_scores

# acceptance tolerances
TOL_EXPLOG = 1e-8
TOL_MOBIUS = 1e-10
TOL_GEODESIC = 1e-9
TOL_TRIANGLE = 1e-9
TOL_GRAD = 1e-4
TOL_CLOSED = 1e-9


def random_interior(n: int, dim: int, c: float, gen: torch.Generator, max_frac: float = 0.9) -> torch.Tensor:
    """Points uniform in direction with radius up to ``max_frac`` of the ball radius."""
    d = torch.randn(n, dim, generator=gen, dtype=torch.float64)
    d = d / d.norm(dim=-1, keepdim=True)
    r = max_frac * torch.rand(n, 1, generator=gen, dtype=torch.float64) / math.sqrt(c)
    return d * r


def random_tangent(x: torch.Tensor, c: float, gen: torch.Generator, max_dist: float = 3.0) -> torch.Tensor:
    """Tangent vectors at ``x`` whose geodesic length is at most ``max_dist``."""
    d = torch.randn(x.shape, generator=gen, dtype=torch.float64)
    d = d / d.norm(dim=-1, keepdim=True)
    length = max_dist * torch.rand(x.shape[0], 1, generator=gen, dtype=torch.float64)
    return d * length / ball.conformal_factor(x, c, keepdim=True)


@dataclass
class SuiteResult:
    c: float
    errors: dict[str, float] = field(default_factory=dict)
    tolerances: dict[str, float] = field(default_factory=dict)

    def record(self, name: str, error: float, tol: float) -> None:
        self.errors[name] = float(error)
        self.tolerances[name] = tol

    @property
    def failures(self) -> list[str]:
        return [k for k, e in self.errors.items() if not e < self.tolerances[k]]

    def to_json(self) -> dict:
        return {
            "curvature": self.c,
            "checks": {
                k: {"error": self.errors[k], "tolerance": self.tolerances[k], "pass": k not in self.failures}
                for k in self.errors
            },
            "pass": not self.failures,
        }


def geometry_suite(c: float, n: int = 1000, dim: int = 5, seed: int = 0, eps: float = ball.BOUNDARY_EPS) -> SuiteResult:
    """Identity checks over ``n`` random interior cases; ``eps`` is the projection margin."""
    gen = torch.Generator().manual_seed(seed)
    res = SuiteResult(c)
    x = random_interior(n, dim, c, gen)
    y = random_interior(n, dim, c, gen)
    z = random_interior(n, dim, c, gen)
    v = random_tangent(x, c, gen)

    y_exp = ball.exp_map(x, v, c, eps)
    res.record("exp_log_inversion", (ball.log_map(x, y_exp, c, eps) - v).abs().max(), TOL_EXPLOG)
    res.record("log_exp_inversion", (ball.exp_map(x, ball.log_map(x, y, c, eps), c, eps) - y).abs().max(), TOL_EXPLOG)
    zero = torch.zeros_like(x)
    mob = max(
        (ball.mobius_add(x, zero, c, eps) - x).abs().max(),
        (ball.mobius_add(zero, x, c, eps) - x).abs().max(),
        ball.mobius_add(-x, x, c, eps).abs().max(),
        (ball.mobius_add(-x, ball.mobius_add(x, y, c, eps), c, eps) - y).abs().max(),
    )
    res.record("mobius_identities", mob, TOL_MOBIUS)
    speed = ball.conformal_factor(x, c) * v.norm(dim=-1)
    res.record("geodesic_length", (ball.dist(x, y_exp, c) - speed).abs().max(), TOL_GEODESIC)
    slack = ball.dist(x, z, c) - ball.dist(x, y, c) - ball.dist(y, z, c)
    res.record("triangle_inequality", slack.clamp_min(0).max(), TOL_TRIANGLE)
    return res


def gradient_suite(c: float, seed: int = 0) -> SuiteResult:
    """Autograd against central differences on small 64-bit cases."""
    gen = torch.Generator().manual_seed(seed)
    res = SuiteResult(c)
    dim = 3
    x, y = random_interior(2, dim, c, gen, 0.7)
    v = random_tangent(x[None], c, gen, 1.5)[0]
    Z = torch.randn(4, dim, generator=gen, dtype=torch.float64)
    r = 0.1 * torch.randn(4, generator=gen, dtype=torch.float64)
    Zfc = torch.randn(dim, dim, generator=gen, dtype=torch.float64)
    rfc = 0.1 * torch.randn(dim, generator=gen, dtype=torch.float64)
    w = torch.randn(dim, generator=gen, dtype=torch.float64)  # output weights for vector-valued maps
    cases = {
        "dist": (lambda a, b: ball.dist(a, b, c), [x, y]),
        "mobius_add": (lambda a, b: (ball.mobius_add(a, b, c) * w).sum(), [x, y]),
        "exp_map": (lambda a, t: (ball.exp_map(a, t, c) * w).sum(), [x, v]),
        "log_map": (lambda a, b: (ball.log_map(a, b, c) * w).sum(), [x, y]),
        "hyperbolic_mlr_scores": (lambda a, zz, rr: hyperbolic_mlr_scores(a, zz, rr, c).sum(), [x, Z, r]),
        "hyperbolic_fc": (lambda a, zz, rr: (hyperbolic_fc(a, zz, rr, c) * w).sum(), [x, Zfc, rfc]),
    }
    cfg = ConeConfig(0.1, 1.05, c)
    apex, outside = _cone_pair(cfg, dim)
    cases["cone_energy"] = (lambda a, b: cone_energy(a, b, cfg), [apex, outside])
    for name, (f, inputs) in cases.items():
        out = grad_check(f, inputs)
        res.record(f"grad_{name}", 0.0 if out.skipped else out.max_rel_error, TOL_GRAD)
    return res


def _cone_pair(cfg: ConeConfig, dim: int) -> tuple[torch.Tensor, torch.Tensor]:
    """An apex and a point well outside its cone (energy away from the hinge)."""
    apex = torch.zeros(dim, dtype=torch.float64)
    apex[0] = 0.5 / math.sqrt(cfg.c)
    other = torch.zeros(dim, dtype=torch.float64)
    other[0], other[1] = 0.1 / math.sqrt(cfg.c), 0.6 / math.sqrt(cfg.c)
    return apex, other


def cone_suite(c: float) -> SuiteResult:
    """Closed-form cone values against direct evaluation."""
    res = SuiteResult(c)
    K = 0.1
    cfg = ConeConfig(K, 1.05, c)
    e1 = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    x = 0.5 / math.sqrt(c) * e1
    expected = math.asin(K * (1 - 0.25) / 0.5)
    res.record("half_aperture", abs(float(half_aperture(x, cfg)) - expected), TOL_CLOSED)
    axis = max(float(cone_angle(x, lam * x, c)) for lam in (1.1, 1.5, 1.9))
    res.record("axis_angle", axis, TOL_CLOSED)
    inside = x + torch.tensor([0.2, 0.01, 0.0], dtype=torch.float64) / math.sqrt(c)
    res.record("energy_inside", float(cone_energy(x, inside, cfg)), TOL_CLOSED)
    return res
