"""Synthetic coding sequences with controllable codon-usage bias.

Amino acids follow a first-order Markov chain with peaked transitions, so a
masked position is predictable from its neighbours. Each amino acid then
emits a synonymous codon from ``softmax(preference / bias_temperature)``:
low temperature means strong bias (low ENC), high temperature approaches
uniform synonymous usage (ENC near 61).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import vocab

CODING_FAMILIES = tuple(f for f in vocab.FAMILIES if f not in ("Stop", vocab.SPECIAL_FAMILY))
FAMILY_CODONS = {
    fam: tuple(c for c in vocab.CODONS if vocab.GENETIC_CODE[c] == fam)
    for fam in CODING_FAMILIES + ("Stop",)
}


@dataclass(frozen=True)
class CorpusSpec:
    n_sequences: int = 5000
    length: int = 60  # codons
    bias_temperature: float = 0.5
    transition_sharpness: float = 0.3
    framed: bool = False  # ATG ... stop
    structure_seed: int = 0  # fixes transitions and codon preferences


class CodonGenerator:
    def __init__(self, spec: CorpusSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.structure_seed)
        n = len(CODING_FAMILIES)
        logits = rng.standard_normal((n, n)) / spec.transition_sharpness
        self.transitions = _softmax(logits)
        self.initial = np.full(n, 1.0 / n)
        self.preferences = {fam: rng.standard_normal(len(FAMILY_CODONS[fam])) for fam in FAMILY_CODONS}
        self.codon_probs = {
            fam: _softmax(pref / spec.bias_temperature) for fam, pref in self.preferences.items()
        }

    def sample(self, rng: np.random.Generator, length: int | None = None) -> str:
        length = self.spec.length if length is None else length
        body = length - 2 if self.spec.framed else length
        fams = []
        a = rng.choice(len(CODING_FAMILIES), p=self.initial)
        for _ in range(body):
            fams.append(CODING_FAMILIES[a])
            a = rng.choice(len(CODING_FAMILIES), p=self.transitions[a])
        codons = [FAMILY_CODONS[f][rng.choice(len(FAMILY_CODONS[f]), p=self.codon_probs[f])] for f in fams]
        if self.spec.framed:
            stop = FAMILY_CODONS["Stop"][rng.choice(3, p=self.codon_probs["Stop"])]
            codons = ["ATG", *codons, stop]
        return "".join(codons)

    def corpus(self, seed: int, n: int | None = None) -> list[str]:
        rng = np.random.default_rng(seed)
        return [self.sample(rng) for _ in range(self.spec.n_sequences if n is None else n)]


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def synthetic_corpus(
    n_sequences: int = 5000, length: int = 60, bias_temperature: float = 0.5, seed: int = 0, structure_seed: int = 0
) -> list[str]:
    spec = CorpusSpec(n_sequences, length, bias_temperature, structure_seed=structure_seed)
    return CodonGenerator(spec).corpus(seed)


def gct_fraction_task(n: int = 1000, length: int = 60, seed: int = 0) -> tuple[list[str], np.ndarray]:
    """Sequences with varied GCT content, labelled by their GCT-codon fraction."""
    rng = np.random.default_rng(seed)
    gen = CodonGenerator(CorpusSpec(length=length))
    seqs, labels = [], []
    for _ in range(n):
        codons = _split(gen.sample(rng))
        hits = rng.random(length) < rng.uniform(0.0, 0.5)
        codons = ["GCT" if h else c for h, c in zip(hits, codons)]
        seqs.append("".join(codons))
        labels.append(sum(c == "GCT" for c in codons) / length)
    return seqs, np.asarray(labels)


def _split(seq: str) -> list[str]:
    return [seq[i : i + 3] for i in range(0, len(seq), 3)]
