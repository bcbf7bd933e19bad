"""Frozen-backbone downstream probe: a TextCNN over token states plus grid search."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.stats import rankdata

from .config import derive_seed
from .lm import Backbone, pad_batch

PROBE_LRS = (3e-4, 1e-4, 1e-5)
PROBE_BATCH_SIZES = (8, 16, 32, 64)


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties."""
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"spearman needs equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise ValueError("spearman needs at least 2 points")
    rx, ry = rankdata(x) - (len(x) + 1) / 2, rankdata(y) - (len(y) + 1) / 2
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0:
        raise ValueError("spearman is undefined for a constant vector")
    return float(np.clip((rx * ry).sum() / denom, -1.0, 1.0))


@dataclass(frozen=True)
class ProbeConfig:
    task: str = "regression"  # or "classification"
    channels: int = 100
    widths: tuple[int, ...] = (3, 4, 5)
    learning_rates: tuple[float, ...] = PROBE_LRS
    batch_sizes: tuple[int, ...] = PROBE_BATCH_SIZES
    epochs: int = 5
    split: tuple[float, float, float] = (0.7, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown probe task {self.task!r}")
        if abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) <= 0:
            raise ValueError(f"split fractions must be positive and sum to 1, got {self.split}")


class TextCNN(nn.Module):
    """Parallel 1-D convolutions, masked max-pool over time, linear output."""

    def __init__(self, hidden: int, n_out: int, channels: int = 100, widths: Sequence[int] = (3, 4, 5)):
        super().__init__()
        self.widths = tuple(widths)
        self.convs = nn.ModuleList(nn.Conv1d(hidden, channels, w) for w in widths)
        self.out = nn.Linear(channels * len(widths), n_out)

    def forward(self, states: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = (states * mask[..., None]).transpose(1, 2)  # (B, H, L)
        pooled = []
        for w, conv in zip(self.widths, self.convs):
            # output position i sees tokens [i - (w-1)//2, i + w//2]
            h = F.relu(conv(F.pad(x, ((w - 1) // 2, w // 2)))).masked_fill(~mask[:, None, :], float("-inf"))
            pooled.append(h.max(dim=-1).values)
        return self.out(torch.cat(pooled, dim=-1))


@torch.no_grad()
def token_states(backbone: Backbone, sequences: Sequence[Sequence[int]], batch_size: int = 64):
    """Frozen backbone states ``(N, L, H)`` and the matching attention mask."""
    backbone.eval()
    ids, attn = pad_batch(sequences)
    chunks = [backbone(ids[i : i + batch_size], attn[i : i + batch_size]) for i in range(0, len(ids), batch_size)]
    return torch.cat(chunks).float(), attn


@dataclass
class ProbeReport:
    metric: str
    cells: list[dict]
    best: dict
    test_metric: float
    sizes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def split_indices(n: int, fractions: tuple[float, float, float], seed: int) -> tuple[np.ndarray, ...]:
    perm = np.random.default_rng(derive_seed(seed, "probe-split")).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    parts = perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]
    for name, part in zip(("train", "validation", "test"), parts):
        if len(part) == 0:
            raise ValueError(f"{name} split is empty ({n} labelled sequences)")
    return parts


def _score(model: TextCNN, states, mask, y, task: str) -> float:
    model.eval()
    with torch.no_grad():
        out = model(states, mask)
    if task == "regression":
        try:
            return spearman(out[:, 0].numpy(), y.numpy())
        except ValueError:  # constant predictions
            return float("nan")
    return float((out.argmax(dim=-1) == y).double().mean())


def _fit(states, mask, y, cfg: ProbeConfig, n_out: int, lr: float, batch_size: int) -> TextCNN:
    cell_seed = derive_seed(cfg.seed, f"probe:{lr}:{batch_size}")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cell_seed)
        model = TextCNN(states.shape[-1], n_out, cfg.channels, cfg.widths)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    rng = np.random.default_rng(cell_seed)
    for _ in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(y))
        for start in range(0, len(order), batch_size):
            b = torch.from_numpy(order[start : start + batch_size])
            out = model(states[b], mask[b])
            if cfg.task == "regression":
                loss = F.mse_loss(out[:, 0], y[b])
            else:
                loss = F.cross_entropy(out, y[b])
            opt.zero_grad()
            loss.backward()
            opt.step()
    return model


def probe_train(
    backbone: Backbone, sequences: Sequence[Sequence[int]], labels: Sequence, cfg: ProbeConfig = ProbeConfig()
) -> ProbeReport:
    """Grid-search a TextCNN on frozen token states; select on validation, report test.

    Regression reports Spearman correlation, classification reports accuracy.
    Ties between grid cells go to the earlier cell.
    """
    if len(sequences) != len(labels):
        raise ValueError(f"{len(sequences)} sequences but {len(labels)} labels")
    train, val, test = split_indices(len(sequences), cfg.split, cfg.seed)
    states, mask = token_states(backbone, sequences)
    if cfg.task == "regression":
        y_all = torch.as_tensor(np.asarray(labels, dtype=np.float64), dtype=torch.float32)
        mu, sd = y_all[train].mean(), y_all[train].std().clamp_min(1e-12)
        y_all = (y_all - mu) / sd
        n_out = 1
    else:
        classes = {c: i for i, c in enumerate(sorted(set(labels), key=str))}
        y_all = torch.as_tensor([classes[c] for c in labels], dtype=torch.long)
        n_out = len(classes)
    t = {k: torch.from_numpy(v) for k, v in (("train", train), ("val", val), ("test", test))}
    cells, best, best_model, best_score = [], None, None, float("-inf")
    for lr in cfg.learning_rates:
        for bs in cfg.batch_sizes:
            model = _fit(states[t["train"]], mask[t["train"]], y_all[t["train"]], cfg, n_out, lr, bs)
            val_score = _score(model, states[t["val"]], mask[t["val"]], y_all[t["val"]], cfg.task)
            undefined = math.isnan(val_score)
            cells.append({"lr": lr, "batch_size": bs, "validation": None if undefined else val_score})
            key = float("-inf") if undefined else val_score
            if best_model is None or key > best_score:
                best, best_model, best_score = cells[-1], model, key
    test_score = _score(best_model, states[t["test"]], mask[t["test"]], y_all[t["test"]], cfg.task)
    metric = "spearman" if cfg.task == "regression" else "accuracy"
    sizes = {"train": len(train), "validation": len(val), "test": len(test)}
    return ProbeReport(metric, cells, dict(best), test_score, sizes)
