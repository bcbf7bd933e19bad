import json
import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from hypercodon import vocab
from hypercodon.config import ConfigError, RunConfig
from hypercodon.diffcore import grad_check
from hypercodon.synth import synthetic_corpus
from hypercodon.train import (
    HxeConfig,
    NonFiniteGradient,
    OptimizerState,
    Trainer,
    TrainingError,
    build_model,
    encode_corpus,
    evaluate,
    hxe_from_logits,
    hxe_loss,
    load_checkpoint,
    load_model,
    lr_schedule,
    optimizer_step,
    pretrain_mlm,
    save_checkpoint,
)

CTT = vocab.TOKEN_TO_ID["CTT"]
ATG = vocab.TOKEN_TO_ID["ATG"]


def random_rows(n, gen):
    return torch.softmax(3 * torch.randn(n, 70, generator=gen, dtype=torch.float64), dim=-1)


def test_hxe_alpha_zero_is_cross_entropy(codon_tree):
    gen = torch.Generator().manual_seed(0)
    p = random_rows(1000, gen)
    t = torch.randint(0, 70, (1000,), generator=gen)
    loss = hxe_loss(p, t, HxeConfig(0.0, codon_tree))
    np.testing.assert_allclose(loss.numpy(), -torch.log(p[torch.arange(1000), t]).numpy(), rtol=0, atol=1e-10)


def test_hxe_uniform_row(codon_tree):
    row = torch.full((70,), 1 / 70, dtype=torch.float64)
    cfg = HxeConfig(0.2, codon_tree)
    assert float(hxe_loss(row, CTT, cfg)) == pytest.approx(3.803164598623658971, abs=1e-12)
    assert float(hxe_loss(row, ATG, cfg)) == pytest.approx(3.478373708971294504, abs=1e-12)


def test_hxe_one_hot_is_zero(codon_tree):
    row = torch.zeros(70, dtype=torch.float64)
    row[CTT] = 1.0
    assert float(hxe_loss(row, CTT, HxeConfig(0.2, codon_tree))) == 0.0


def test_hxe_zero_mass_is_floored(codon_tree):
    row = torch.zeros(70, dtype=torch.float64)
    row[ATG] = 1.0
    loss = float(hxe_loss(row, CTT, HxeConfig(0.0, codon_tree)))
    assert loss == pytest.approx(-math.log(1e-12))


def test_hxe_permutation_within_family(codon_tree):
    gen = torch.Generator().manual_seed(1)
    p = random_rows(200, gen)
    t = torch.randint(6, 70, (200,), generator=gen)
    leu = [vocab.TOKEN_TO_ID[c] for c in ("CTT", "CTC", "CTA", "CTG", "TTA", "TTG")]
    perm = torch.arange(70)
    perm[leu] = torch.tensor(leu[1:] + leu[:1])
    cfg = HxeConfig(0.2, codon_tree)
    a = hxe_loss(p, t, cfg)
    b = hxe_loss(p[:, torch.argsort(perm)], perm[t], cfg)
    assert torch.isfinite(a).all()
    np.testing.assert_allclose(a.numpy(), b.numpy(), rtol=0, atol=1e-12)


def test_hxe_logit_form_matches(codon_tree):
    gen = torch.Generator().manual_seed(2)
    logits = 4 * torch.randn(300, 70, generator=gen, dtype=torch.float64)
    t = torch.randint(0, 70, (300,), generator=gen)
    for alpha in (0.0, 0.2, 1.0):
        cfg = HxeConfig(alpha, codon_tree)
        np.testing.assert_allclose(
            hxe_from_logits(logits, t, cfg).numpy(), hxe_loss(torch.softmax(logits, -1), t, cfg).numpy(), atol=1e-10
        )
    np.testing.assert_allclose(
        hxe_from_logits(logits, t, HxeConfig(0.0, codon_tree)).numpy(),
        F.cross_entropy(logits, t, reduction="none").numpy(),
        atol=1e-12,
    )


def test_hxe_gradient(codon_tree):
    gen = torch.Generator().manual_seed(3)
    logits = torch.randn(70, generator=gen, dtype=torch.float64)
    cfg = HxeConfig(0.2, codon_tree)
    assert grad_check(lambda z: hxe_loss(torch.softmax(z, -1), CTT, cfg), [logits]).max_rel_error < 1e-4


def test_hxe_errors(codon_tree):
    with pytest.raises(ValueError, match="alpha"):
        HxeConfig(-0.1, codon_tree)
    with pytest.raises(ValueError, match="out of range"):
        hxe_loss(torch.full((70,), 1 / 70), 70, HxeConfig(0.2, codon_tree))
    with pytest.raises(ValueError, match="rows"):
        hxe_loss(torch.full((2, 70), 1 / 70), [1, 2, 3], HxeConfig(0.2, codon_tree))


def test_optimizer_zero_gradient():
    p = [torch.tensor([1.0, -2.0], dtype=torch.float64)]
    g = [torch.zeros(2, dtype=torch.float64)]
    st = OptimizerState.for_params(p, weight_decay=0.0)
    optimizer_step(p, g, st, 1e-2)
    np.testing.assert_array_equal(p[0].numpy(), [1.0, -2.0])
    st = OptimizerState.for_params(p, weight_decay=0.1)
    optimizer_step(p, g, st, 1e-2)
    np.testing.assert_allclose(p[0].numpy(), np.array([1.0, -2.0]) * (1 - 1e-3), rtol=0, atol=1e-15)
    assert st.step == 1


def test_optimizer_first_step_is_sign_sized():
    p = [torch.tensor([1.0, 1.0], dtype=torch.float64)]
    st = OptimizerState.for_params(p, weight_decay=0.0)
    optimizer_step(p, [torch.tensor([3.0, -0.5], dtype=torch.float64)], st, 0.1)
    np.testing.assert_allclose(p[0].numpy(), [0.9, 1.1], atol=1e-8)


def test_optimizer_quadratic_bowl():
    A = torch.tensor([[3.0, 0.5], [0.5, 1.0]], dtype=torch.float64)
    x = torch.tensor([2.0, -1.5], dtype=torch.float64)
    f = lambda v: 0.5 * v @ A @ v
    f0 = float(f(x))
    st = OptimizerState.for_params([x])
    for _ in range(200):
        optimizer_step([x], [A @ x], st, 0.05)
    assert float(f(x)) < f0


def test_optimizer_rejects_non_finite():
    p = [torch.ones(2, dtype=torch.float64), torch.ones(3, dtype=torch.float64)]
    st = OptimizerState.for_params(p)
    with pytest.raises(NonFiniteGradient) as info:
        optimizer_step(p, [torch.zeros(2, dtype=torch.float64), torch.tensor([0.0, math.nan, 0.0])], st, 0.1)
    assert info.value.index == 1
    assert st.step == 0 and (p[0] == 1).all()


def test_lr_schedule():
    assert lr_schedule(0, 100, 10, 1e-4, 1e-5) == 0.0
    assert lr_schedule(5, 100, 10, 1e-4, 1e-5) == pytest.approx(5e-5)
    assert lr_schedule(10, 100, 10, 1e-4, 1e-5) == 1e-4
    assert lr_schedule(100, 100, 10, 1e-4, 1e-5) == pytest.approx(1e-5, abs=1e-20)
    assert lr_schedule(55, 100, 10, 1e-4, 1e-5) == pytest.approx(5.5e-5, abs=1e-18)
    with pytest.raises(ValueError):
        lr_schedule(101, 100, 10, 1e-4, 1e-5)


def test_run_config_validation():
    with pytest.raises(ConfigError, match="head"):
        RunConfig(head="softmax")
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict({"curvature": 1.0, "colour": 3})
    with pytest.raises(ConfigError, match="divisible"):
        RunConfig(hidden=30)
    assert RunConfig(head="xe").resolved().alpha == 0.0
    assert RunConfig(head="helm-hxe").resolved().alpha == 0.2


def _small(head="xe", **kw):
    base = dict(head=head, layers=1, hidden=16, intermediate=32, attn_heads=2, max_context=40, positions=40,
                batch_size=8, total_steps=40, warmup_steps=5, proto_dim=8)
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def small_corpus():
    return encode_corpus(synthetic_corpus(100, 20, seed=3))


def test_one_epoch_log(tmp_path, small_corpus):
    cfg = _small(total_steps=13, warmup_steps=2)  # 100 sequences / batch 8 = 13 steps
    res = pretrain_mlm(small_corpus, cfg, out_dir=tmp_path)
    rows = [json.loads(line) for line in (tmp_path / "metrics.jsonl").read_text().splitlines()]
    assert len(rows) == 1
    assert set(rows[0]) >= {"step", "loss", "masked_acc", "within_family_err_frac", "lr"}
    assert all(math.isfinite(v) for v in rows[0].values())
    assert rows[0]["step"] == 13
    assert (tmp_path / "checkpoint" / "manifest.json").exists()
    assert len(res.losses) == 13


def test_pretrain_is_deterministic(tmp_path, small_corpus):
    cfg = _small(dropout=0.1)
    pretrain_mlm(small_corpus, cfg, out_dir=tmp_path / "a")
    pretrain_mlm(small_corpus, cfg, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "metrics.jsonl").read_bytes() == (tmp_path / "b" / "metrics.jsonl").read_bytes()
    assert (tmp_path / "a/checkpoint/tensors.bin").read_bytes() == (tmp_path / "b/checkpoint/tensors.bin").read_bytes()


def test_seeds_give_different_runs(small_corpus):
    a = Trainer(small_corpus, _small(seed=0))
    b = Trainer(small_corpus, _small(seed=1))
    a.run(3), b.run(3)
    assert a.losses != b.losses


@pytest.mark.parametrize("head", ["xe", "hyper-mlr", "proto-dist", "proto-entail"])
def test_resume_is_bit_identical(tmp_path, small_corpus, head):
    from hypercodon.treembed import codon_prototypes

    protos = codon_prototypes(dim=8, refine_steps=20)[0] if head.startswith("proto") else None
    cfg = _small(head, dropout=0.1)
    straight = Trainer(small_corpus, cfg, protos)
    straight.run(25)
    first = Trainer(small_corpus, cfg, protos)
    first.run(15)  # crosses an epoch boundary at 13
    first.save(tmp_path / "ck")
    resumed = Trainer.resume(tmp_path / "ck", small_corpus)
    resumed.run(25)
    assert resumed.losses == straight.losses
    assert resumed.metrics == straight.metrics
    for (n, p), (_, q) in zip(straight.model.state_dict().items(), resumed.model.state_dict().items()):
        assert torch.equal(p, q), n


def test_resume_rejects_other_corpus(tmp_path, small_corpus):
    t = Trainer(small_corpus, _small())
    t.run(2)
    t.save(tmp_path / "ck")
    with pytest.raises(ValueError, match="corpus differs"):
        Trainer.resume(tmp_path / "ck", small_corpus[:-1])


def test_checkpoint_round_trip(tmp_path):
    tensors = {
        "a": torch.randn(3, 4, dtype=torch.float32, generator=torch.Generator().manual_seed(0)),
        "b": torch.arange(5, dtype=torch.int64),
        "c": torch.tensor([1, 2, 255], dtype=torch.uint8),
        "d": torch.tensor([math.pi], dtype=torch.float64),
    }
    save_checkpoint(tmp_path / "x", {"note": "hi"}, tensors)
    manifest, back = load_checkpoint(tmp_path / "x")
    assert manifest["note"] == "hi" and manifest["format"] == 1
    for k, v in tensors.items():
        assert back[k].dtype == v.dtype and back[k].numpy().tobytes() == v.numpy().tobytes()
    save_checkpoint(tmp_path / "y", {k: v for k, v in manifest.items() if k not in ("format", "tensors")}, back)
    for f in ("manifest.json", "tensors.bin"):
        assert (tmp_path / "x" / f).read_bytes() == (tmp_path / "y" / f).read_bytes()


def test_checkpoint_errors(tmp_path):
    with pytest.raises(ValueError, match="incomplete"):
        load_checkpoint(tmp_path)
    save_checkpoint(tmp_path / "x", {}, {"a": torch.zeros(4)})
    (tmp_path / "x" / "tensors.bin").write_bytes(b"\0" * 3)
    with pytest.raises(ValueError, match="past the end"):
        load_checkpoint(tmp_path / "x")


def test_load_model_and_evaluate(tmp_path, small_corpus):
    res = pretrain_mlm(small_corpus, _small(total_steps=10), out_dir=tmp_path)
    model = load_model(res.checkpoint)
    for p, q in zip(model.parameters(), res.model.parameters()):
        assert torch.equal(p, q)
    out = evaluate(model, small_corpus[:40])
    assert 0 <= out["masked_acc"] <= 1
    assert out["random_baseline"] > 0 and out["n_masked"] > 0


def test_proto_head_needs_prototypes(small_corpus):
    with pytest.raises(ValueError, match="prototype"):
        build_model(_small("proto-dist"))


def test_non_finite_loss_aborts(small_corpus):
    t = Trainer(small_corpus, _small())
    with torch.no_grad():
        t.model.head.weight.fill_(math.inf)
    with pytest.raises(TrainingError, match="step 1"):
        t.run(1)
