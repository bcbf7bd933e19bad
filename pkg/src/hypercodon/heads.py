"""Classification heads over backbone token states.

* Euclidean MLR (affine + softmax), the baseline.
* Hyperbolic MLR: signed distances to geodesic hyperplanes in the ball.
* Prototype heads: token states are mapped into the ball (exp at the
  origin, then a hyperbolic fully connected layer) and scored against frozen
  prototypes by negative distance or by negative entailment-cone energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from . import ball
from .diffcore import Tensor, acosh1p, asin, asinh, safe_norm
from .treembed import PrototypeSet

MIN_ROW_NORM = 1e-8
SINH_GUARD = 30.0  # overflow guard; the projected output is saturated long before


@dataclass(frozen=True)
class ConeConfig:
    K: float = 0.1
    eta: float = 1.05
    c: float = 1.0

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError(f"K must be positive, got {self.K}")
        if not self.eta > 1:
            raise ValueError(f"eta must exceed 1, got {self.eta}")
        if not self.c > 0:
            raise ValueError(f"curvature must be positive, got {self.c}")

    @property
    def r_min(self) -> float:
        return cone_min_radius(self.K, self.c)


@dataclass
class HeadOutput:
    logits: Tensor
    probabilities: Tensor

    @classmethod
    def from_logits(cls, logits: Tensor) -> "HeadOutput":
        return cls(logits, torch.softmax(logits, dim=-1))

    def argmax(self) -> Tensor:
        # torch returns the first maximal index: ties go to the lowest token id
        return self.logits.argmax(dim=-1)


def cone_min_radius(K: float, c: float = 1.0) -> float:
    """Smallest norm where the half-aperture argument reaches 1."""
    return (math.sqrt(1 + 4 * K * K) - 1) / (2 * K * math.sqrt(c))


# -- hyperbolic MLR / FC ----------------------------------------------------------


def _check_rows(Z: Tensor) -> Tensor:
    zn = safe_norm(Z, dim=-1)
    if bool((zn < MIN_ROW_NORM).any()):
        raise ValueError(f"hyperplane normal rows must have norm >= {MIN_ROW_NORM}")
    return zn


def hyperbolic_mlr_scores(x: Tensor, Z: Tensor, r: Tensor, c: float = 1.0) -> Tensor:
    """Signed hyperplane distances; ``x`` is ``(..., in)``, ``Z`` is ``(out, in)``."""
    if x.shape[-1] != Z.shape[-1] or r.shape != Z.shape[:1]:
        raise ValueError(f"hyperbolic_mlr: x {tuple(x.shape)}, Z {tuple(Z.shape)}, r {tuple(r.shape)} do not conform")
    sqrt_c = math.sqrt(c)
    zn = _check_rows(Z)
    lam = ball.conformal_factor(x, c, keepdim=True)
    inner = sqrt_c * (x @ (Z / zn[:, None]).transpose(0, 1))
    two_r = 2 * sqrt_c * r
    arg = lam * inner * torch.cosh(two_r) - (lam - 1) * torch.sinh(two_r)
    return 2 / sqrt_c * zn * asinh(arg)


def hyperbolic_fc(x: Tensor, Z: Tensor, r: Tensor, c: float = 1.0, eps: float = ball.BOUNDARY_EPS) -> Tensor:
    sqrt_c = math.sqrt(c)
    ell = hyperbolic_mlr_scores(x, Z, r, c)
    w = torch.sinh((sqrt_c * ell).clamp(-SINH_GUARD, SINH_GUARD)) / sqrt_c
    out = w / (1 + torch.sqrt(1 + c * ball.sq_norm(w, keepdim=True)))
    return ball.project_to_ball(out, c, eps)


def project_tokens(h: Tensor, Z: Tensor, r: Tensor, c: float = 1.0) -> Tensor:
    """Backbone states -> ball points of dimension ``Z.shape[0]``."""
    if h.shape[-1] != Z.shape[-1]:
        raise ValueError(f"project_tokens: hidden size {h.shape[-1]} != layer input {Z.shape[-1]}")
    return hyperbolic_fc(ball.exp_map0(h, c), Z, r, c)


# -- entailment cones -------------------------------------------------------------


def half_aperture(z: Tensor, cfg: ConeConfig) -> Tensor:
    norm = safe_norm(z)
    if bool((norm < cfg.r_min * (1 - 1e-9)).any()):
        raise ValueError(f"half_aperture undefined below radius {cfg.r_min:.6g}")
    sqrt_c = math.sqrt(cfg.c)
    return asin(cfg.K * (1 - cfg.c * norm * norm) / (sqrt_c * norm))


def cone_angle(x: Tensor, y: Tensor, c: float = 1.0) -> Tensor:
    """Angle at ``x`` between the outward axis and the geodesic towards ``y``.

    Evaluated as the angle between ``x`` and the direction of
    ``(-x) (+) y`` (the log-map direction), with the cancellation-free
    ``2 atan2(|a - b|, |a + b|)`` form for unit vectors ``a``, ``b``. This
    equals the closed arccos expression but stays exact on the axis.
    """
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"cone_angle: dimension mismatch {x.shape[-1]} vs {y.shape[-1]}")
    if bool((x == 0).all(dim=-1).any()):
        raise ValueError("cone_angle: apex at the origin has no axis")
    if bool((x == y).all(dim=-1).any()):
        raise ValueError("cone_angle: y coincides with the apex")
    xy = (x * y).sum(-1, keepdim=True)
    x2 = ball.sq_norm(x, keepdim=True)
    y2 = ball.sq_norm(y, keepdim=True)
    toward = (1 - 2 * c * xy + c * y2) * (-x) + (1 - c * x2) * y
    a = x / safe_norm(x, keepdim=True)
    b = toward / safe_norm(toward, keepdim=True)
    return 2 * torch.atan2(safe_norm(a - b), safe_norm(a + b))


def cone_energy(x: Tensor, y: Tensor, cfg: ConeConfig) -> Tensor:
    """Angle by which ``y`` falls outside the cone at apex ``x``; 0 inside."""
    return torch.relu(cone_angle(x, y, cfg.c) - cfg.eta * half_aperture(x, cfg))


# -- prototype and MLR heads --------------------------------------------------------


def pairwise_dist(z: Tensor, points: Tensor, c: float = 1.0) -> Tensor:
    """``(N, n)`` x ``(V, n)`` -> ``(N, V)`` distances from inner products."""
    z2 = ball.sq_norm(z)[:, None]
    p2 = ball.sq_norm(points)[None, :]
    diff2 = (z2 + p2 - 2 * z @ points.T).clamp_min(0.0)
    return acosh1p(2 * c * diff2 / ((1 - c * z2) * (1 - c * p2))) / math.sqrt(c)


def pairwise_cone_angle(points: Tensor, z: Tensor, c: float = 1.0) -> Tensor:
    """``(N, V)`` cone angles at every apex in ``points`` towards every row of ``z``.

    Same quantity as :func:`cone_angle`, written with inner products only:
    with ``t = -a x + b y`` the direction of ``(-x) (+) y``, the Lagrange
    identity gives ``|x||t| sin = b sqrt(|x|^2 |y|^2 - <x,y>^2)``.
    """
    xy = z @ points.T  # (N, V)
    x2 = ball.sq_norm(points)[None, :]
    y2 = ball.sq_norm(z)[:, None]
    a = 1 - 2 * c * xy + c * y2
    b = 1 - c * x2
    cross = (x2 * y2 - xy * xy).clamp_min(torch.finfo(xy.dtype).tiny)
    return torch.atan2(b * torch.sqrt(cross), b * xy - a * x2)


def proto_similarity(z: Tensor, points: Tensor, mode: str, cfg: ConeConfig) -> Tensor:
    """``(N, n)`` x ``(V, n)`` -> ``(N, V)`` similarities."""
    if z.shape[-1] != points.shape[-1]:
        raise ValueError(f"proto_logits: representation dim {z.shape[-1]} != prototype dim {points.shape[-1]}")
    flat = z.reshape(-1, z.shape[-1])
    if mode == "distance":
        sim = -pairwise_dist(flat, points, cfg.c)
    elif mode == "entailment":
        # prototype is the apex; the token representation must sit in its cone
        psi = half_aperture(points, cfg)
        sim = -torch.relu(pairwise_cone_angle(points, flat, cfg.c) - cfg.eta * psi)
    else:
        raise ValueError(f"unknown prototype mode {mode!r}")
    return sim.reshape(*z.shape[:-1], points.shape[0])


def proto_logits(z: Tensor, prototypes: PrototypeSet, mode: str = "distance", beta: float = 1.0) -> HeadOutput:
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta}")
    cfg = ConeConfig(prototypes.K, prototypes.eta, prototypes.c)
    pts = prototypes.points.to(z.dtype)
    return HeadOutput.from_logits(beta * proto_similarity(z, pts, mode, cfg))


def euclidean_mlr(h: Tensor, weight: Tensor, bias: Tensor) -> HeadOutput:
    if h.shape[-1] != weight.shape[-1] or bias.shape != weight.shape[:1]:
        raise ValueError(f"euclidean_mlr: h {tuple(h.shape)}, W {tuple(weight.shape)}, b {tuple(bias.shape)} do not conform")
    return HeadOutput.from_logits(h @ weight.transpose(0, 1) + bias)


class HyperbolicLinear(nn.Module):
    """Ball-to-ball fully connected layer with flat parameters ``Z``, ``r``."""

    def __init__(self, in_features: int, out_features: int, c: float = 1.0):
        super().__init__()
        self.c = c
        self.Z = nn.Parameter(torch.empty(out_features, in_features))
        self.r = nn.Parameter(torch.zeros(out_features))

    def reset_parameters(self, generator: torch.Generator) -> None:
        std = (2 * self.Z.shape[0] * self.Z.shape[1]) ** -0.5
        with torch.no_grad():
            self.Z.normal_(0.0, std, generator=generator)
            self.r.zero_()

    def forward(self, x: Tensor) -> Tensor:
        return hyperbolic_fc(x, self.Z, self.r, self.c)


class EuclideanMLRHead(nn.Module):
    def __init__(self, hidden: int, n_classes: int):
        super().__init__()
        self.weight = nn.Parameter(torch.zeros(n_classes, hidden))
        self.bias = nn.Parameter(torch.zeros(n_classes))

    def reset_parameters(self, generator: torch.Generator) -> None:
        with torch.no_grad():
            self.weight.normal_(0.0, 0.02, generator=generator)
            self.bias.zero_()

    def forward(self, h: Tensor) -> Tensor:
        return h @ self.weight.transpose(0, 1) + self.bias


class HyperbolicMLRHead(nn.Module):
    """exp at the origin, then hyperbolic MLR scores as logits."""

    def __init__(self, hidden: int, n_classes: int, c: float = 1.0, clip: float | None = 1.0):
        super().__init__()
        self.c = c
        self.clip = clip
        self.Z = nn.Parameter(torch.empty(n_classes, hidden))
        self.r = nn.Parameter(torch.zeros(n_classes))

    def reset_parameters(self, generator: torch.Generator) -> None:
        with torch.no_grad():
            self.Z.normal_(0.0, hidden_std(self.Z.shape[1]), generator=generator)
            self.r.zero_()

    def forward(self, h: Tensor) -> Tensor:
        return hyperbolic_mlr_scores(ball.exp_map0(clip_features(h, self.clip), self.c), self.Z, self.r, self.c)


class PrototypeHead(nn.Module):
    """Projection into the ball plus frozen-prototype scoring."""

    def __init__(
        self, hidden: int, prototypes: PrototypeSet, mode: str = "distance", beta: float = 1.0, clip: float | None = 1.0
    ):
        super().__init__()
        self.clip = clip
        if mode not in ("distance", "entailment"):
            raise ValueError(f"unknown prototype mode {mode!r}")
        self.mode = mode
        self.beta = beta
        self.cone = ConeConfig(prototypes.K, prototypes.eta, prototypes.c)
        self.proj = HyperbolicLinear(hidden, prototypes.dim, prototypes.c)
        self.register_buffer("points", prototypes.points.clone())

    def reset_parameters(self, generator: torch.Generator) -> None:
        self.proj.reset_parameters(generator)

    def embed(self, h: Tensor) -> Tensor:
        return self.proj(ball.exp_map0(clip_features(h, self.clip), self.cone.c))

    def forward(self, h: Tensor) -> Tensor:
        z = self.embed(h)
        return self.beta * proto_similarity(z, self.points.to(z.dtype), self.mode, self.cone)


def clip_features(h: Tensor, r: float | None) -> Tensor:
    """Rescale rows with ``|h| > r`` onto norm ``r`` (keeps exp at the origin off the boundary)."""
    if r is None:
        return h
    norm = safe_norm(h, keepdim=True)
    return h * torch.clamp(r / norm, max=1.0)


def hidden_std(fan_in: int) -> float:
    return fan_in**-0.5
