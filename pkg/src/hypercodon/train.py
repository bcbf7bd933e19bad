"""Hierarchical cross-entropy, AdamW, the learning-rate schedule and MLM pre-training.

Checkpoints are directories holding ``manifest.json`` and ``tensors.bin``;
see the README for the byte layout.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn

from . import vocab
from .config import PROTO_HEADS, RunConfig, derive_seed
from .heads import EuclideanMLRHead, HyperbolicMLRHead, PrototypeHead
from .hierarchy import CodonTree, build_codon_tree
from .lm import Backbone, frame, mask_batch, tokenize
from .treembed import PrototypeSet

Tensor = torch.Tensor
MASS_FLOOR = 1e-12
CHECKPOINT_FORMAT = 1


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or gradient)."""


class NonFiniteGradient(FloatingPointError):
    def __init__(self, index: int):
        super().__init__(f"non-finite gradient for parameter {index}")
        self.index = index


# -- hierarchical cross-entropy ---------------------------------------------------


@dataclass
class HxeConfig:
    alpha: float = 0.2
    tree: CodonTree = field(default_factory=build_codon_tree)

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")


class HxeIndex:
    """Subtree membership and padded root-ward edge lists for every token.

    ``edges[t, h] = (child, parent)`` node indices of the ``h``-th edge on the
    path from token ``t``'s leaf to the root; padding edges point root -> root
    and carry zero weight.
    """

    def __init__(self, tree: CodonTree, n_tokens: int = vocab.VOCAB_SIZE):
        self.tree = tree
        nodes = tree.node_ids
        idx = tree.index
        member = np.zeros((len(nodes), n_tokens), dtype=bool)
        paths: dict[int, list[int]] = {}
        for leaf, t in tree.leaf_token.items():
            if not 0 <= t < n_tokens:
                raise ValueError(f"leaf {leaf!r} has token id {t} outside [0, {n_tokens})")
            path = [idx[n] for n in tree.path_to_root(leaf)]
            for n in path:
                member[n, t] = True
            paths[t] = path
        depth = max(len(p) for p in paths.values()) - 1
        root = idx[tree.root]
        child = np.full((n_tokens, depth), root, dtype=np.int64)
        parent = np.full((n_tokens, depth), root, dtype=np.int64)
        height = np.zeros((n_tokens, depth), dtype=np.int64)
        valid = np.zeros((n_tokens, depth), dtype=bool)
        for t, path in paths.items():
            for h in range(len(path) - 1):
                child[t, h], parent[t, h], height[t, h], valid[t, h] = path[h], path[h + 1], h, True
        self.n_tokens = n_tokens
        self.has_leaf = torch.zeros(n_tokens, dtype=torch.bool)
        self.has_leaf[list(paths)] = True
        self.membership = torch.from_numpy(member)
        self.child = torch.from_numpy(child)
        self.parent = torch.from_numpy(parent)
        self.height = torch.from_numpy(height)
        self.valid = torch.from_numpy(valid)

    def weights(self, alpha: float, dtype: torch.dtype) -> Tensor:
        w = torch.exp(-alpha * self.height.to(dtype))
        return torch.where(self.valid, w, torch.zeros((), dtype=dtype))

    def check_targets(self, targets: Tensor) -> None:
        if targets.numel() and (int(targets.min()) < 0 or int(targets.max()) >= self.n_tokens):
            raise ValueError("hxe: target token out of range")
        if not bool(self.has_leaf[targets].all()):
            raise ValueError("hxe: target token is not a tree leaf")


_INDEX_CACHE: dict[int, HxeIndex] = {}


def hxe_index(tree: CodonTree, n_tokens: int = vocab.VOCAB_SIZE) -> HxeIndex:
    key = id(tree)
    cached = _INDEX_CACHE.get(key)
    if cached is None or cached.tree is not tree or cached.n_tokens != n_tokens:
        cached = _INDEX_CACHE[key] = HxeIndex(tree, n_tokens)
    return cached


def hxe_loss(probabilities: Tensor, targets: Tensor | int, cfg: HxeConfig) -> Tensor:
    """Per-row hierarchical cross-entropy from probability rows.

    ``-sum_h exp(-alpha h) log p(node_h | parent_h)`` with subtree masses
    floored at ``1e-12``. Accepts one row (scalar result) or a batch.
    """
    single = probabilities.dim() == 1
    probs = probabilities.reshape(-1, probabilities.shape[-1])
    tgt = torch.as_tensor(targets, dtype=torch.long).reshape(-1)
    if tgt.shape[0] != probs.shape[0]:
        raise ValueError(f"hxe: {probs.shape[0]} rows for {tgt.shape[0]} targets")
    index = hxe_index(cfg.tree, probs.shape[-1])
    index.check_targets(tgt)
    mass = (probs @ index.membership.to(probs.dtype).T).clamp_min(MASS_FLOOR)
    log_mass = torch.log(mass)
    cond = log_mass.gather(1, index.child[tgt]) - log_mass.gather(1, index.parent[tgt])
    loss = -(index.weights(cfg.alpha, probs.dtype)[tgt] * cond).sum(dim=1)
    return loss[0] if single else loss


def hxe_from_logits(logits: Tensor, targets: Tensor, cfg: HxeConfig) -> Tensor:
    """Per-row HXE computed in log space; the training-time form of :func:`hxe_loss`."""
    index = hxe_index(cfg.tree, logits.shape[-1])
    index.check_targets(targets)
    # subtree log-masses, shifted by the row max; the floor only bites on underflow
    shift = logits.detach().max(dim=-1, keepdim=True).values
    mass = torch.exp(logits - shift) @ index.membership.to(logits.dtype).T
    log_mass = torch.log(mass.clamp_min(torch.finfo(logits.dtype).tiny)) + shift
    cond = log_mass.gather(1, index.child[targets]) - log_mass.gather(1, index.parent[targets])
    return -(index.weights(cfg.alpha, logits.dtype)[targets] * cond).sum(dim=1)


# -- optimizer and schedule -----------------------------------------------------------


@dataclass
class OptimizerState:
    """AdamW moments; ``step`` counts applied updates."""

    m: list[Tensor]
    v: list[Tensor]
    step: int = 0
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "OptimizerState":
        return cls(
            [torch.zeros_like(p) for p in params], [torch.zeros_like(p) for p in params], **hyper
        )


@torch.no_grad()
def optimizer_step(params: Sequence[Tensor], grads: Sequence[Tensor], state: OptimizerState, lr: float) -> None:
    """One AdamW update in place, with weight decay applied directly to the parameters.

    A non-finite gradient raises :class:`NonFiniteGradient` before anything
    is modified.
    """
    if not len(params) == len(grads) == len(state.m):
        raise ValueError(f"{len(params)} params, {len(grads)} grads, {len(state.m)} moment slots")
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ValueError(f"gradient {i} has shape {tuple(g.shape)}, parameter {tuple(p.shape)}")
        if not bool(torch.isfinite(g).all()):
            raise NonFiniteGradient(i)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m.mul_(b1).add_(g, alpha=1 - b1)
        v.mul_(b2).addcmul_(g, g, value=1 - b2)
        p.mul_(1 - lr * state.weight_decay)
        p.sub_(lr * (m / c1) / ((v / c2).sqrt() + state.eps))


def lr_schedule(step: int, total_steps: int, warmup_steps: int, lr_max: float, lr_min: float) -> float:
    """Linear warmup from 0 to ``lr_max``, then cosine decay to ``lr_min``."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if step < warmup_steps:
        return lr_max * step / warmup_steps
    if total_steps == warmup_steps:
        return lr_max
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * progress))


# -- model ----------------------------------------------------------------------------


class MLMModel(nn.Module):
    def __init__(self, config: RunConfig, prototypes: PrototypeSet | None = None):
        super().__init__()
        self.config = config
        self.backbone = Backbone(config.backbone())
        hidden = config.hidden
        if config.head in ("xe", "helm-hxe"):
            self.head = EuclideanMLRHead(hidden, vocab.VOCAB_SIZE)
        elif config.head == "hyper-mlr":
            self.head = HyperbolicMLRHead(hidden, vocab.VOCAB_SIZE, config.curvature, config.feature_clip)
        else:
            if prototypes is None:
                raise ValueError(f"head {config.head!r} needs a prototype set")
            if len(prototypes) != vocab.VOCAB_SIZE:
                raise ValueError(f"prototype set has {len(prototypes)} rows, vocabulary has {vocab.VOCAB_SIZE}")
            mode = "distance" if config.head == "proto-dist" else "entailment"
            self.head = PrototypeHead(hidden, prototypes, mode, config.beta, config.feature_clip)

    def reset_parameters(self, generator: torch.Generator) -> None:
        self.backbone.reset_parameters(generator)
        self.head.reset_parameters(generator)

    def forward(self, input_ids: Tensor, attention_mask: Tensor, mask: Tensor) -> Tensor:
        """Logits at the selected positions only, ``(n_selected, vocab)``."""
        return self.head(self.backbone(input_ids, attention_mask)[mask])


def _prototypes_for(config: RunConfig, prototypes: PrototypeSet | None) -> PrototypeSet | None:
    if config.head not in PROTO_HEADS:
        return None
    if prototypes is None:
        raise ValueError(f"head {config.head!r} needs a prototype file")
    if not math.isclose(prototypes.c, config.curvature):
        raise ValueError(f"prototype curvature {prototypes.c} differs from configured {config.curvature}")
    # cone parameters come from the run config
    return PrototypeSet(prototypes.points, prototypes.c, prototypes.tau, config.K, config.eta, prototypes.token_order)


def build_model(config: RunConfig, prototypes: PrototypeSet | None = None) -> MLMModel:
    config = config.resolved()
    dtype = getattr(torch, config.dtype)
    model = MLMModel(config, _prototypes_for(config, prototypes)).to(dtype)
    model.reset_parameters(torch.Generator().manual_seed(derive_seed(config.seed, "init")))
    return model


def codon_predictions(logits: Tensor) -> Tensor:
    """Argmax restricted to the 64 codon tokens."""
    return logits[:, vocab.N_SPECIAL :].argmax(dim=-1) + vocab.N_SPECIAL


def encode_corpus(sequences: Sequence[str]) -> list[list[int]]:
    return [frame(tokenize(s)) for s in sequences]


def _family_lookup(tree: CodonTree) -> np.ndarray:
    fams = {f: i for i, f in enumerate(tree.families)}
    out = np.full(vocab.VOCAB_SIZE, -1, dtype=np.int64)
    for leaf, t in tree.leaf_token.items():
        out[t] = fams[tree.nodes[leaf].parent]
    return out


@dataclass
class _Tally:
    loss_sum: float = 0.0
    batches: int = 0
    masked: int = 0
    correct: int = 0
    within: int = 0

    def add(self, loss: float, pred: np.ndarray, target: np.ndarray, fam: np.ndarray) -> None:
        self.loss_sum += loss
        self.batches += 1
        self.masked += len(target)
        hit = pred == target
        self.correct += int(hit.sum())
        self.within += int(((fam[pred] == fam[target]) & ~hit).sum())

    def summary(self) -> dict:
        errors = self.masked - self.correct
        return {
            "loss": self.loss_sum / max(self.batches, 1),
            "masked_acc": self.correct / self.masked if self.masked else None,
            "within_family_err_frac": self.within / errors if errors else None,
        }


# -- checkpoints ----------------------------------------------------------------------


def save_checkpoint(path: str | Path, manifest: dict, tensors: dict[str, Tensor]) -> None:
    """Write ``tensors`` into one flat blob and index it from ``manifest.json``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    index, offset = [], 0
    with open(path / "tensors.bin", "wb") as fh:
        for name, t in tensors.items():
            arr = t.detach().cpu().contiguous().numpy()
            arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            raw = arr.tobytes()
            index.append(
                {"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
            )
            fh.write(raw)
            offset += len(raw)
    body = dict(manifest, format=CHECKPOINT_FORMAT, tensors=index)
    (path / "manifest.json").write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, Tensor]]:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        blob = (path / "tensors.bin").read_bytes()
    except FileNotFoundError as exc:
        raise ValueError(f"{path}: incomplete checkpoint ({exc.filename} missing)") from None
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
    tensors = {}
    for entry in manifest["tensors"]:
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(blob):
            raise ValueError(f"{path}: tensor {entry['name']!r} runs past the end of tensors.bin")
        arr = np.frombuffer(blob[start : start + n], dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        tensors[entry["name"]] = torch.from_numpy(arr.copy())
    return manifest, tensors


def corpus_fingerprint(corpus: Sequence[Sequence[int]]) -> str:
    h = hashlib.sha256()
    for seq in corpus:
        h.update(np.asarray(seq, dtype="<i8").tobytes())
        h.update(b"|")
    return h.hexdigest()


def load_model(path: str | Path) -> MLMModel:
    """Rebuild the trained model from a checkpoint directory (weights only)."""
    manifest, tensors = load_checkpoint(path)
    config = RunConfig.from_dict(manifest["config"])
    protos = None
    if config.head in PROTO_HEADS:
        meta = manifest["prototypes"]
        protos = PrototypeSet(tensors["model.head.points"].to(torch.float64), meta["c"], meta["tau"], config.K, config.eta)
    model = MLMModel(config, protos).to(getattr(torch, config.dtype))
    model.load_state_dict({k[len("model.") :]: v for k, v in tensors.items() if k.startswith("model.")})
    return model


# -- training loop ---------------------------------------------------------------------


class Trainer:
    """Owns the model, optimizer, data order and all random streams of one run."""

    def __init__(
        self,
        corpus: Sequence[Sequence[int]],
        config: RunConfig,
        prototypes: PrototypeSet | None = None,
        tree: CodonTree | None = None,
    ):
        if not corpus:
            raise ValueError("training corpus is empty")
        if not config.mask_rate > 0:
            raise ValueError("mask_rate must be positive for pre-training")
        self.config = config.resolved()
        self.corpus = [list(s) for s in corpus]
        self.tree = tree or build_codon_tree()
        self.hxe = HxeConfig(self.config.alpha, self.tree)
        self.families = _family_lookup(self.tree)
        self.model = build_model(self.config, prototypes)
        self.proto_tau = prototypes.tau if prototypes is not None else None
        self.params = [p for p in self.model.parameters() if p.requires_grad]
        self.param_names = [n for n, p in self.model.named_parameters() if p.requires_grad]
        cfg = self.config
        self.opt = OptimizerState.for_params(
            self.params, weight_decay=cfg.weight_decay, beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps
        )
        self.shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
        self.mask_rng = np.random.default_rng(derive_seed(cfg.seed, "mask"))
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(derive_seed(cfg.seed, "dropout"))
            self.torch_rng = torch.get_rng_state()
        self.step = 0
        self.epoch = 0
        self.position = 0
        self.order = self.shuffle_rng.permutation(len(self.corpus))
        self.tally = _Tally()
        self.metrics: list[dict] = []
        self.losses: list[float] = []
        self.log_path: Path | None = None

    # one optimisation step; returns the batch loss
    def _train_step(self) -> float:
        cfg = self.config
        idx = self.order[self.position : self.position + cfg.batch_size]
        self.position += len(idx)
        batch = mask_batch([self.corpus[i] for i in idx], cfg.mask_rate, cfg.mask_scheme, self.mask_rng)
        if batch.n_masked == 0:
            return float("nan")
        targets = batch.targets[batch.mask]
        self.model.train()
        with torch.random.fork_rng(devices=[]):
            torch.set_rng_state(self.torch_rng)
            logits = self.model(batch.input_ids, batch.attention_mask, batch.mask)
            self.torch_rng = torch.get_rng_state()
        loss = hxe_from_logits(logits, targets, self.hxe).mean()
        if not torch.isfinite(loss):
            raise TrainingError(
                f"non-finite loss at step {self.step + 1}: max |logit| {float(logits.detach().abs().max()):.3g}"
            )
        grads = torch.autograd.grad(loss, self.params)
        lr = lr_schedule(self.step + 1, cfg.total_steps, cfg.warmup_steps, cfg.lr_max, cfg.lr_min)
        try:
            optimizer_step(self.params, grads, self.opt, lr)
        except NonFiniteGradient as exc:
            name = self.param_names[exc.index]
            raise TrainingError(f"non-finite gradient at step {self.step + 1} in {name}") from None
        self.step += 1
        value = float(loss.detach())
        self.losses.append(value)
        pred = codon_predictions(logits.detach()).numpy()
        self.tally.add(value, pred, targets.numpy(), self.families)
        return value

    def _close_epoch(self) -> None:
        row = {"epoch": self.epoch, "step": self.step, **self.tally.summary()}
        row["lr"] = lr_schedule(self.step, self.config.total_steps, self.config.warmup_steps,
                                self.config.lr_max, self.config.lr_min)
        self.metrics.append(row)
        if self.log_path is not None:
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(row) + "\n")
        self.tally = _Tally()

    def run(self, until: int | None = None, log_path: str | Path | None = None) -> list[dict]:
        """Train up to step ``until`` (default: the configured total)."""
        total = self.config.total_steps
        until = total if until is None else min(until, total)
        if log_path is not None:
            self.log_path = Path(log_path)
            self.log_path.write_text("".join(json.dumps(r) + "\n" for r in self.metrics))
        while self.step < until:
            self._train_step()
            if self.position >= len(self.corpus):
                self._close_epoch()
                self.epoch += 1
                self.position = 0
                self.order = self.shuffle_rng.permutation(len(self.corpus))
        if self.step == total and self.tally.batches:
            self._close_epoch()
        return self.metrics

    # -- persistence

    def state_tensors(self) -> dict[str, Tensor]:
        out = {f"model.{k}": v for k, v in self.model.state_dict().items()}
        for name, m, v in zip(self.param_names, self.opt.m, self.opt.v):
            out[f"opt.m.{name}"] = m
            out[f"opt.v.{name}"] = v
        out["rng.torch"] = self.torch_rng
        out["data.order"] = torch.from_numpy(np.asarray(self.order, dtype=np.int64))
        out["trace.losses"] = torch.tensor(self.losses, dtype=torch.float64)
        return out

    def manifest(self) -> dict:
        out = {
            "config": self.config.to_dict(),
            "step": self.step,
            "rng": {"shuffle": self.shuffle_rng.bit_generator.state, "mask": self.mask_rng.bit_generator.state},
            "progress": {"epoch": self.epoch, "position": self.position, "tally": vars(self.tally)},
            "optimizer": {"step": self.opt.step},
            "metrics": self.metrics,
            "corpus_sha256": corpus_fingerprint(self.corpus),
        }
        if isinstance(self.model.head, PrototypeHead):
            out["prototypes"] = {"c": self.model.head.cone.c, "tau": self.proto_tau}
        return out

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.manifest(), self.state_tensors())

    @classmethod
    def resume(cls, path: str | Path, corpus: Sequence[Sequence[int]], tree: CodonTree | None = None) -> "Trainer":
        manifest, tensors = load_checkpoint(path)
        config = RunConfig.from_dict(manifest["config"])
        if corpus_fingerprint([list(s) for s in corpus]) != manifest["corpus_sha256"]:
            raise ValueError(f"{path}: corpus differs from the one this checkpoint was trained on")
        protos = None
        if config.head in PROTO_HEADS:
            meta = manifest["prototypes"]
            protos = PrototypeSet(tensors["model.head.points"].to(torch.float64), meta["c"], meta["tau"])
        self = cls(corpus, config, protos, tree)
        self.model.load_state_dict({k[len("model.") :]: v for k, v in tensors.items() if k.startswith("model.")})
        with torch.no_grad():
            for name, m, v in zip(self.param_names, self.opt.m, self.opt.v):
                m.copy_(tensors[f"opt.m.{name}"])
                v.copy_(tensors[f"opt.v.{name}"])
        self.opt.step = manifest["optimizer"]["step"]
        self.shuffle_rng.bit_generator.state = manifest["rng"]["shuffle"]
        self.mask_rng.bit_generator.state = manifest["rng"]["mask"]
        self.torch_rng = tensors["rng.torch"].clone()
        self.order = tensors["data.order"].numpy().copy()
        self.step = manifest["step"]
        self.epoch = manifest["progress"]["epoch"]
        self.position = manifest["progress"]["position"]
        self.tally = _Tally(**manifest["progress"]["tally"])
        self.metrics = list(manifest["metrics"])
        self.losses = tensors["trace.losses"].tolist()
        return self


@dataclass
class PretrainResult:
    trainer: Trainer
    metrics: list[dict]
    losses: list[float]
    checkpoint: Path | None

    @property
    def model(self) -> MLMModel:
        return self.trainer.model


def pretrain_mlm(
    corpus: Sequence[Sequence[int]],
    config: RunConfig,
    prototypes: PrototypeSet | None = None,
    out_dir: str | Path | None = None,
    tree: CodonTree | None = None,
) -> PretrainResult:
    """Full MLM pre-training run; with ``out_dir`` writes ``metrics.jsonl`` and ``checkpoint/``."""
    trainer = Trainer(corpus, config, prototypes, tree)
    log = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log = out_dir / "metrics.jsonl"
    trainer.run(log_path=log)
    ckpt = None
    if out_dir is not None:
        ckpt = out_dir / "checkpoint"
        trainer.save(ckpt)
    return PretrainResult(trainer, trainer.metrics, trainer.losses, ckpt)


@torch.no_grad()
def evaluate(
    model: MLMModel,
    corpus: Sequence[Sequence[int]],
    seed: int = 0,
    mask_rate: float = 0.15,
    alpha: float = 0.0,
    batch_size: int = 64,
    tree: CodonTree | None = None,
) -> dict:
    """Masked top-1 accuracy and family-level error split on held-out sequences."""
    from .analysis import family_confusion, random_error_baseline

    tree = tree or build_codon_tree()
    hxe = HxeConfig(alpha, tree)
    rng = np.random.default_rng(derive_seed(seed, "eval-mask"))
    model.eval()
    preds, targets, loss_sum, n = [], [], 0.0, 0
    for start in range(0, len(corpus), batch_size):
        batch = mask_batch(corpus[start : start + batch_size], mask_rate, "plain", rng)
        if batch.n_masked == 0:
            continue
        logits = model(batch.input_ids, batch.attention_mask, batch.mask)
        tgt = batch.targets[batch.mask]
        loss_sum += float(hxe_from_logits(logits, tgt, hxe).sum())
        n += len(tgt)
        preds.extend(codon_predictions(logits).tolist())
        targets.extend(tgt.tolist())
    if not n:
        raise ValueError("evaluation selected no positions")
    conf = family_confusion(preds, targets, tree)
    return {
        "loss": loss_sum / n,
        "masked_acc": sum(p == t for p, t in zip(preds, targets)) / n,
        "within_family_err_frac": conf.within_family_error_fraction,
        "random_baseline": random_error_baseline(targets, tree),
        "n_masked": n,
    }
