import numpy as np
import pytest

from hypercodon import vocab
from hypercodon.analysis import (
    CodonUsage,
    enc,
    enc_detail,
    family_confusion,
    family_homozygosity,
    gc_bin,
    gc_content,
    length_bin,
    random_error_baseline,
)
from hypercodon.synth import FAMILY_CODONS, synthetic_corpus

SENSE = [c for c in vocab.CODONS if vocab.GENETIC_CODE[c] != "Stop"]


def test_enc_fully_biased():
    seq = "".join(codons[0] * 5 for fam, codons in FAMILY_CODONS.items() if fam != "Stop")
    assert enc(CodonUsage.from_sequences([seq])) == pytest.approx(20.0, abs=1e-6)


def test_enc_uniform():
    rng = np.random.default_rng(0)
    seq = "".join(rng.choice(SENSE, size=200_000))
    assert enc(CodonUsage.from_sequences([seq])) == pytest.approx(61.0, abs=0.5)


def test_enc_exactly_uniform_counts():
    usage = CodonUsage.from_sequences(["".join(SENSE) * 100])
    # exact thirds give F = (n/k - 1)/(n - 1) < 1/k, so the raw sum exceeds 61
    res = enc_detail(usage)
    assert res.enc == 61.0  # clamped
    assert not res.interpolated_3fold


def test_enc_monotone_in_bias():
    temps = [0.1, 0.3, 0.6, 1.2, 3.0]
    values = [enc(CodonUsage.from_sequences(synthetic_corpus(300, 60, t, seed=1))) for t in temps]
    assert all(a < b for a, b in zip(values, values[1:])), values


def test_enc_scale_invariant():
    usage = CodonUsage.from_sequences(synthetic_corpus(100, 60, 0.5, seed=2))
    scaled = CodonUsage(usage.counts * 3)
    assert enc(usage) == pytest.approx(enc(scaled), rel=0.02)
    # F uses the unbiased estimator, so it is invariant only asymptotically
    big = CodonUsage(usage.counts * 1000)
    assert enc(big) == pytest.approx(enc(CodonUsage(usage.counts * 2000)), abs=1e-2)


def test_enc_three_fold_fallback():
    seq = "".join(codons[0] * 5 for fam, codons in FAMILY_CODONS.items() if fam not in ("Stop", "Isoleucine"))
    res = enc_detail(CodonUsage.from_sequences([seq]))
    assert res.interpolated_3fold and "Isoleucine" in res.skipped
    assert res.enc == pytest.approx(20.0, abs=1e-6)


def test_enc_errors():
    with pytest.raises(ValueError, match="non-empty"):
        enc(CodonUsage())
    with pytest.raises(ValueError, match="undefined"):
        enc(CodonUsage.from_sequences(["ATG" * 10]))


def test_homozygosity():
    assert family_homozygosity(np.array([1, 0])) is None
    assert family_homozygosity(np.array([10, 0])) == 1.0


def test_gc():
    assert gc_content("GCGC") == 1.0
    assert gc_content("ATAT") == 0.0
    assert gc_content("ATGC") == 0.5
    with pytest.raises(ValueError):
        gc_content("")
    assert [gc_bin(f) for f in (0.47, 0.50, 0.55, 0.56)] == ["low", "medium", "medium", "high"]


def test_length_bins():
    assert [length_bin(n) for n in (500, 1500, 2500)] == ["short", "medium", "long"]
    assert [length_bin(n) for n in (29, 30, 1000, 1001, 2000, 2001, 3000, 3001)] == [
        "out_of_range", "short", "short", "medium", "medium", "long", "long", "out_of_range"
    ]
    assert length_bin("A" * 1500) == "medium"


def test_family_confusion(codon_tree):
    t = [vocab.TOKEN_TO_ID[c] for c in ("CTT", "GCT", "ATG")]
    none = family_confusion(t, t, codon_tree)
    assert none.errors == 0 and none.within_family_error_fraction is None
    syn = [vocab.TOKEN_TO_ID[c] for c in ("TTA", "GCC", "ATG")]
    res = family_confusion(syn, t, codon_tree)
    assert res.within_family_error_fraction == 1.0 and res.cross_family_error_fraction == 0.0
    assert res.matrix["Leucine"]["Leucine"] == 1
    with pytest.raises(ValueError):
        family_confusion(t[:2], t, codon_tree)


def test_random_errors_match_baseline(codon_tree):
    target = vocab.TOKEN_TO_ID["CTT"]
    assert random_error_baseline([target], codon_tree) == pytest.approx(5 / 63)
    rng = np.random.default_rng(0)
    preds = rng.integers(6, 70, size=200_000)
    res = family_confusion(preds, [target] * len(preds), codon_tree)
    assert res.within_family_error_fraction == pytest.approx(5 / 63, abs=0.005)
    fr = res.within_family_error_fraction + res.cross_family_error_fraction
    assert fr == pytest.approx(1.0)
