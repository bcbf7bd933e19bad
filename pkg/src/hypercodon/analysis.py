"""Codon-usage bias (ENC), GC content, length strata and family-level confusion."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import vocab
from .hierarchy import CodonTree, family_of

_CODON_INDEX = {c: i for i, c in enumerate(vocab.CODONS)}
_SENSE_FAMILIES: dict[str, list[int]] = defaultdict(list)
for _codon, _fam in vocab.GENETIC_CODE.items():
    if _fam != "Stop":
        _SENSE_FAMILIES[_fam].append(_CODON_INDEX[_codon])
# degeneracy class -> families; 1-fold (Met, Trp) only add the constant 2
DEGENERACY: dict[int, list[str]] = defaultdict(list)
for _fam, _idx in sorted(_SENSE_FAMILIES.items()):
    DEGENERACY[len(_idx)].append(_fam)
ENC_WEIGHTS = {2: 9, 3: 1, 4: 5, 6: 3}


@dataclass
class CodonUsage:
    counts: np.ndarray = field(default_factory=lambda: np.zeros(64, dtype=np.int64))

    @classmethod
    def from_sequences(cls, sequences: Iterable[str]) -> "CodonUsage":
        usage = cls()
        for seq in sequences:
            usage.add(seq)
        return usage

    def add(self, sequence: str) -> None:
        seq = sequence.upper().replace("U", "T")
        for i in range(0, len(seq) - len(seq) % 3, 3):
            j = _CODON_INDEX.get(seq[i : i + 3])
            if j is not None:
                self.counts[j] += 1

    def merge(self, other: "CodonUsage") -> "CodonUsage":
        return CodonUsage(self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def family_homozygosity(counts: np.ndarray) -> float | None:
    """``(n sum p^2 - 1) / (n - 1)``; None when the family occurs < 2 times."""
    n = counts.sum()
    if n < 2:
        return None
    p = counts / n
    return float((n * (p * p).sum() - 1) / (n - 1))


@dataclass
class EncResult:
    enc: float
    class_means: dict[int, float]
    skipped: list[str]
    interpolated_3fold: bool


def enc_detail(usage: CodonUsage) -> EncResult:
    if usage.total == 0:
        raise ValueError("ENC needs a non-empty codon usage table")
    skipped = []
    means: dict[int, float] = {}
    for k in ENC_WEIGHTS:
        fs = []
        for fam in DEGENERACY[k]:
            f = family_homozygosity(usage.counts[_SENSE_FAMILIES[fam]])
            if f is None:
                skipped.append(fam)
            else:
                fs.append(f)
        if fs:
            means[k] = float(np.mean(fs))
    interpolated = False
    if 3 not in means and 2 in means and 4 in means:
        means[3] = (means[2] + means[4]) / 2
        interpolated = True
    missing = [k for k in ENC_WEIGHTS if k not in means]
    if missing:
        raise ValueError(f"ENC undefined: no family with >= 2 occurrences in degeneracy classes {missing}")
    total = 2.0 + sum(w / max(means[k], 1e-12) for k, w in ENC_WEIGHTS.items())
    return EncResult(float(min(61.0, max(20.0, total))), means, skipped, interpolated)


def enc(usage: CodonUsage) -> float:
    """Effective number of codons, clamped to [20, 61]."""
    return enc_detail(usage).enc


def gc_content(sequence: str) -> float:
    if not sequence:
        raise ValueError("GC content of an empty sequence is undefined")
    seq = sequence.upper()
    return (seq.count("G") + seq.count("C")) / len(seq)


def gc_bin(fraction: float) -> str:
    if fraction <= 0.47:
        return "low"
    if fraction <= 0.55:
        return "medium"
    return "high"


def length_bin(sequence: str | int) -> str:
    """Nucleotide-length stratum; 1000 and 2000 fall in the lower bin."""
    n = sequence if isinstance(sequence, int) else len(sequence)
    if 30 <= n <= 1000:
        return "short"
    if 1000 < n <= 2000:
        return "medium"
    if 2000 < n <= 3000:
        return "long"
    return "out_of_range"


@dataclass
class FamilyConfusion:
    errors: int
    within_family_error_fraction: float | None
    cross_family_error_fraction: float | None
    matrix: dict[str, dict[str, int]]

    def to_json(self) -> dict:
        return {
            "errors": self.errors,
            "within_family_error_fraction": self.within_family_error_fraction,
            "cross_family_error_fraction": self.cross_family_error_fraction,
            "matrix": self.matrix,
        }


def family_confusion(predictions: Sequence[int], targets: Sequence[int], tree: CodonTree) -> FamilyConfusion:
    """Split prediction errors by whether they stay inside the target's family.

    ``matrix[target_family][predicted_family]`` counts every prediction,
    correct ones included.
    """
    if len(predictions) != len(targets):
        raise ValueError(f"{len(predictions)} predictions for {len(targets)} targets")
    matrix: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
    errors = within = 0
    for p, t in zip(predictions, targets):
        fp, ft = family_of(tree, int(p)), family_of(tree, int(t))
        matrix[ft][fp] += 1
        if int(p) != int(t):
            errors += 1
            within += fp == ft
    frac = within / errors if errors else None
    return FamilyConfusion(
        errors,
        frac,
        None if frac is None else 1.0 - frac,
        {k: dict(v) for k, v in matrix.items()},
    )


def random_error_baseline(targets: Sequence[int], tree: CodonTree, n_candidates: int = 64) -> float:
    """Expected within-family fraction if each error picked a wrong codon uniformly."""
    sizes = {fam: len(tree.children[fam]) for fam in tree.families}
    if not len(targets):
        raise ValueError("no targets")
    return float(np.mean([(sizes[family_of(tree, int(t))] - 1) / (n_candidates - 1) for t in targets]))
