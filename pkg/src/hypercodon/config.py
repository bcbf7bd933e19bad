"""Run configuration shared by training and the command line."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .lm import BackboneConfig

HEADS = ("xe", "helm-hxe", "hyper-mlr", "proto-dist", "proto-entail")
PROTO_HEADS = ("proto-dist", "proto-entail")
# curvature / cone threshold cells of the sensitivity grid
SWEEP_GRID = ((0.2, 1.05), (0.5, 1.05), (1.0, 1.1), (1.0, 1.2), (1.0, 1.05))
GEOM_CURVATURES = (0.2, 0.5, 1.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    head: str = "proto-dist"
    # geometry and heads
    curvature: float = 1.0
    K: float = 0.1
    eta: float = 1.05
    beta: float = 1.0
    feature_clip: float = 1.0  # max norm of backbone states before exp at the origin
    alpha: float | None = None  # None resolves per head: 0 for xe, 0.2 otherwise
    proto_dim: int = 128
    tau: float = 2.0
    refine_steps: int = 200
    # backbone
    layers: int = 2
    hidden: int = 64
    intermediate: int = 256
    attn_heads: int = 4
    max_context: int = 128
    positions: int = 128
    dropout: float = 0.0
    # optimisation
    lr_max: float = 1e-3
    lr_min: float = 1e-4
    warmup_steps: int = 100
    total_steps: int = 2000
    batch_size: int = 16
    weight_decay: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    mask_rate: float = 0.15
    mask_scheme: str = "plain"
    dtype: str = "float32"

    def __post_init__(self):
        if self.head not in HEADS:
            raise ConfigError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.alpha is not None and self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.warmup_steps >= self.total_steps:
            raise ConfigError("warmup_steps must be smaller than total_steps")
        if self.mask_scheme not in ("plain", "bert"):
            raise ConfigError(f"unknown mask scheme {self.mask_scheme!r}")
        for name in ("curvature", "tau", "beta", "K", "lr_max", "batch_size", "total_steps"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        try:
            self.backbone()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def override(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def resolved(self) -> "RunConfig":
        if self.alpha is not None:
            return self
        return replace(self, alpha=0.0 if self.head == "xe" else 0.2)

    def backbone(self) -> BackboneConfig:
        return BackboneConfig(
            self.layers, self.hidden, self.intermediate, self.attn_heads, self.max_context, self.positions, self.dropout
        )

    def to_dict(self) -> dict:
        return asdict(self)


FULL_SCALE = RunConfig(
    head="proto-entail",
    layers=10,
    hidden=640,
    intermediate=2560,
    attn_heads=8,
    max_context=444,
    positions=2048,
    lr_max=1e-4,
    lr_min=1e-5,
    batch_size=1024,
    weight_decay=0.1,
    alpha=0.2,
    total_steps=40 * 1000,  # 40 epochs; steps per epoch depend on the corpus
    warmup_steps=1000,
)


def derive_seed(seed: int, component: str) -> int:
    """Stable per-component seed from the run seed."""
    digest = hashlib.sha256(f"{seed}:{component}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)
