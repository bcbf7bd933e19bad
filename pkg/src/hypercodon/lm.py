"""Codon tokenization, MLM masking and the Euclidean transformer backbone."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import vocab

IGNORE_INDEX = -100
_VALID = set("ACGTU")


class SequenceError(ValueError):
    """Nucleotide input that cannot be tokenized."""


# -- FASTA ----------------------------------------------------------------------


def read_fasta(path: str | Path) -> list[tuple[str, str]]:
    """Records as ``(header, sequence)``; sequences upper-cased, U kept as is."""
    records: list[tuple[str, str]] = []
    header = None
    chunks: list[str] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith(">"):
                if header is not None:
                    records.append((header, "".join(chunks)))
                header, chunks = line[1:].strip(), []
            elif header is None:
                raise SequenceError(f"{path}:{lineno}: sequence data before the first '>' header")
            else:
                chunks.append(line.upper())
    if header is not None:
        records.append((header, "".join(chunks)))
    return records


def write_fasta(records: Iterable[tuple[str, str]], path: str | Path, width: int = 60) -> None:
    with open(path, "w") as fh:
        for name, seq in records:
            fh.write(f">{name}\n")
            for i in range(0, len(seq), width):
                fh.write(seq[i : i + width] + "\n")


# -- tokenizer ------------------------------------------------------------------


def tokenize(sequence: str) -> list[int]:
    """One token per nucleotide triplet, reading left to right; U reads as T."""
    seq = sequence.upper()
    for pos, ch in enumerate(seq):
        if ch not in _VALID:
            raise SequenceError(f"invalid nucleotide {ch!r} at position {pos}")
    if len(seq) % 3:
        raise SequenceError(f"length {len(seq)} is not a multiple of 3")
    seq = seq.replace("U", "T")
    return [vocab.TOKEN_TO_ID[seq[i : i + 3]] for i in range(0, len(seq), 3)]


def detokenize(ids: Sequence[int]) -> str:
    out = []
    for pos, t in enumerate(ids):
        t = int(t)
        if not vocab.N_SPECIAL <= t < vocab.VOCAB_SIZE:
            raise SequenceError(f"token {t} at position {pos} is not a codon")
        out.append(vocab.VOCAB[t])
    return "".join(out)


def frame(ids: Sequence[int]) -> list[int]:
    """Wrap codon ids as ``[CLS] ... [SEP]``."""
    return [vocab.CLS_ID, *ids, vocab.SEP_ID]


# -- masking --------------------------------------------------------------------


@dataclass
class MaskedBatch:
    input_ids: torch.Tensor  # (B, L) int64, corrupted
    targets: torch.Tensor  # (B, L) int64, IGNORE_INDEX off the mask
    mask: torch.Tensor  # (B, L) bool, selected positions
    attention_mask: torch.Tensor  # (B, L) bool, True on real tokens

    @property
    def n_masked(self) -> int:
        return int(self.mask.sum())


def pad_batch(sequences: Sequence[Sequence[int]]) -> tuple[torch.Tensor, torch.Tensor]:
    length = max(len(s) for s in sequences)
    ids = torch.full((len(sequences), length), vocab.PAD_ID, dtype=torch.long)
    attn = torch.zeros((len(sequences), length), dtype=torch.bool)
    for i, s in enumerate(sequences):
        ids[i, : len(s)] = torch.as_tensor(list(s), dtype=torch.long)
        attn[i, : len(s)] = True
    return ids, attn


def mask_batch(
    sequences: Sequence[Sequence[int]],
    rate: float = 0.15,
    scheme: str = "plain",
    rng: np.random.Generator | int | None = None,
) -> MaskedBatch:
    """Select each non-special position with probability ``rate``.

    ``plain`` replaces every selected token with MASK; ``bert`` uses the
    80/10/10 split (MASK / random codon / unchanged).
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"mask rate must lie in [0, 1], got {rate}")
    if scheme not in ("plain", "bert"):
        raise ValueError(f"unknown masking scheme {scheme!r}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ids, attn = pad_batch(sequences)
    arr = ids.numpy()
    eligible = arr >= vocab.N_SPECIAL
    selected = (rng.random(arr.shape) < rate) & eligible
    corrupted = arr.copy()
    if scheme == "plain":
        corrupted[selected] = vocab.MASK_ID
    else:
        u = rng.random(arr.shape)
        random_codons = rng.integers(vocab.N_SPECIAL, vocab.VOCAB_SIZE, size=arr.shape)
        corrupted[selected & (u < 0.8)] = vocab.MASK_ID
        swap = selected & (u >= 0.8) & (u < 0.9)
        corrupted[swap] = random_codons[swap]
    targets = np.where(selected, arr, IGNORE_INDEX)
    return MaskedBatch(
        torch.from_numpy(corrupted), torch.from_numpy(targets), torch.from_numpy(selected), attn
    )


# -- backbone -------------------------------------------------------------------


@dataclass(frozen=True)
class BackboneConfig:
    layers: int = 2
    hidden: int = 64
    intermediate: int = 256
    heads: int = 4
    max_context: int = 128
    positions: int = 128
    dropout: float = 0.0
    vocab_size: int = vocab.VOCAB_SIZE

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError(f"hidden {self.hidden} is not divisible by {self.heads} heads")
        if self.positions < self.max_context:
            raise ValueError(f"positional table {self.positions} shorter than context {self.max_context}")

    def to_dict(self) -> dict:
        return asdict(self)


FULL_BACKBONE = BackboneConfig(layers=10, hidden=640, intermediate=2560, heads=8, max_context=444, positions=2048)


class SelfAttention(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.heads = cfg.heads
        self.qkv = nn.Linear(cfg.hidden, 3 * cfg.hidden)
        self.out = nn.Linear(cfg.hidden, cfg.hidden)
        self.dropout = cfg.dropout

    def forward(self, x: torch.Tensor, key_mask: torch.Tensor) -> torch.Tensor:
        B, L, H = x.shape
        q, k, v = self.qkv(x).view(B, L, 3, self.heads, H // self.heads).permute(2, 0, 3, 1, 4)
        scores = q @ k.transpose(-1, -2) / math.sqrt(H // self.heads)
        scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        attn = F.dropout(torch.softmax(scores, dim=-1), self.dropout, self.training)
        return self.out((attn @ v).transpose(1, 2).reshape(B, L, H))


class Block(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.hidden)
        self.attn = SelfAttention(cfg)
        self.ln2 = nn.LayerNorm(cfg.hidden)
        self.ff = nn.Sequential(
            nn.Linear(cfg.hidden, cfg.intermediate),
            nn.GELU(),
            nn.Linear(cfg.intermediate, cfg.hidden),
        )
        self.dropout = cfg.dropout

    def forward(self, x, key_mask):
        x = x + F.dropout(self.attn(self.ln1(x), key_mask), self.dropout, self.training)
        return x + F.dropout(self.ff(self.ln2(x)), self.dropout, self.training)


class Backbone(nn.Module):
    """Pre-norm encoder: token + learned absolute positions -> blocks -> LayerNorm."""

    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        self.tok = nn.Embedding(cfg.vocab_size, cfg.hidden)
        self.pos = nn.Embedding(cfg.positions, cfg.hidden)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.layers))
        self.ln_f = nn.LayerNorm(cfg.hidden)

    def reset_parameters(self, generator: torch.Generator) -> None:
        with torch.no_grad():
            for name, p in self.named_parameters():
                if name.endswith("bias"):
                    p.zero_()
                elif name.split(".")[-2].startswith("ln"):
                    p.fill_(1.0)
                else:
                    p.normal_(0.0, 0.02, generator=generator)

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor | None = None) -> torch.Tensor:
        B, L = input_ids.shape
        if L > self.cfg.max_context:
            raise ValueError(f"sequence length {L} exceeds max context {self.cfg.max_context}")
        if attention_mask is None:
            attention_mask = input_ids != vocab.PAD_ID
        positions = torch.arange(L, device=input_ids.device)
        x = self.tok(input_ids) + self.pos(positions)[None]
        x = F.dropout(x, self.cfg.dropout, self.training)
        for blk in self.blocks:
            x = blk(x, attention_mask)
        return self.ln_f(x)


def backbone_forward(batch: MaskedBatch, model: Backbone) -> torch.Tensor:
    return model(batch.input_ids, batch.attention_mask)
