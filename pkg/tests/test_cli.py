import csv
import json

import pytest

from hypercodon.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, main
from hypercodon.lm import write_fasta
from hypercodon.synth import synthetic_corpus
from hypercodon.treembed import load_prototypes

TINY = ["--layers", "1", "--hidden", "16", "--intermediate", "32", "--attn-heads", "2", "--batch-size", "8",
        "--total-steps", "12", "--warmup-steps", "2"]


def echoed(capsys):
    lines = [json.loads(line) for line in capsys.readouterr().out.splitlines() if line.strip()]
    return lines[0], lines[-1]


@pytest.fixture(scope="module")
def fasta(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.fa"
    write_fasta(((f"s{i}", s) for i, s in enumerate(synthetic_corpus(60, 20, seed=4))), path)
    return path


@pytest.fixture(scope="module")
def protos(tmp_path_factory):
    path = tmp_path_factory.mktemp("protos") / "p.bin"
    assert main(["embed-tree", "--out", str(path), "--dim", "8", "--refine-steps", "20"]) == EXIT_OK
    return path


def test_geomcheck_pass(tmp_path, capsys):
    out = tmp_path / "geo.json"
    assert main(["geomcheck", "--cases", "200", "--out", str(out)]) == EXIT_OK
    first, last = echoed(capsys)
    assert first["config"]["curvatures"] == [0.2, 0.5, 1.0]
    report = json.loads(out.read_text())
    assert [e["curvature"] for e in report["curvatures"]] == [0.2, 0.5, 1.0]
    assert report["pass"] and last["pass"]


def test_geomcheck_fault_injection(capsys):
    assert main(["geomcheck", "--cases", "200", "--epsilon", "1e-1"]) == EXIT_FAILED
    err = capsys.readouterr().err
    assert "exp_log_inversion" in err


def test_embed_tree_defaults(tmp_path, capsys):
    out = tmp_path / "codon.bin"
    assert main(["embed-tree", "--out", str(out)]) == EXIT_OK
    _, last = echoed(capsys)
    assert last["prototypes"] == 70 and last["dim"] == 128
    assert len(load_prototypes(out)) == 70
    report = json.loads((tmp_path / "codon.bin.distortion.json").read_text())
    assert set(report["class_mean_distance"]) == {"1", "2", "3", "4"}


def test_embed_tree_two_dims(tmp_path):
    assert main(["embed-tree", "--out", str(tmp_path / "p.bin"), "--dim", "2", "--refine-steps", "10"]) == EXIT_OK


def test_embed_tree_bad_input(tmp_path, capsys):
    assert main(["embed-tree", "--tree", str(tmp_path / "missing.json"), "--out", str(tmp_path / "p")]) == EXIT_INVALID
    bad = tmp_path / "bad.json"
    bad.write_text('{"nodes": [{"id": "r", "parent": null}]}')
    assert main(["embed-tree", "--tree", str(bad), "--out", str(tmp_path / "p")]) == EXIT_INVALID
    assert "nodes[0]" in capsys.readouterr().err


def test_pretrain_proto_dist(tmp_path, fasta, protos, capsys):
    args = ["pretrain", str(fasta), "--head", "proto-dist", "--prototypes", str(protos), "--dim", "8", *TINY]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    first, last = echoed(capsys)
    assert first["config"][0]["head"] == "proto-dist"
    assert last["runs"][0]["steps"] == 12
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    a, b = (tmp_path / "a/metrics.jsonl").read_bytes(), (tmp_path / "b/metrics.jsonl").read_bytes()
    assert a and a == b


def test_pretrain_xe_with_alpha(tmp_path, fasta, capsys):
    assert main(["pretrain", str(fasta), "--head", "xe", "--alpha", "0.2", *TINY, "--out", str(tmp_path)]) == EXIT_OK
    first, _ = echoed(capsys)
    assert first["config"][0]["alpha"] == 0.2
    manifest = json.loads((tmp_path / "checkpoint/manifest.json").read_text())
    assert manifest["config"]["alpha"] == 0.2 and manifest["config"]["head"] == "xe"


def test_pretrain_config_file_and_flags(tmp_path, fasta, capsys):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"head": "xe", "seed": 7, "lr_max": 0.002}))
    assert main(["pretrain", str(fasta), "--config", str(cfg), "--seed", "8", *TINY, "--out", str(tmp_path / "o")]) == 0
    first, _ = echoed(capsys)
    assert first["config"][0]["seed"] == 8 and first["config"][0]["lr_max"] == 0.002
    cfg.write_text(json.dumps({"head": "xe", "colour": 1}))
    assert main(["pretrain", str(fasta), "--config", str(cfg), "--out", str(tmp_path / "p")]) == EXIT_INVALID


def test_pretrain_rejects_missing_prototypes(tmp_path, fasta):
    assert main(["pretrain", str(fasta), "--head", "proto-entail", "--out", str(tmp_path)]) == EXIT_INVALID


def test_pretrain_sweep(tmp_path, fasta, capsys):
    args = ["pretrain", str(fasta), "--head", "proto-dist", "--sweep", "--dim", "8", "--refine-steps", "5",
            *TINY[:-4], "--total-steps", "3", "--warmup-steps", "1", "--out", str(tmp_path)]
    assert main(args) == EXIT_OK
    _, last = echoed(capsys)
    cells = {(r["curvature"], r["eta"]) for r in last["runs"]}
    assert cells == {(0.2, 1.05), (0.5, 1.05), (1.0, 1.05), (1.0, 1.1), (1.0, 1.2)}
    assert (tmp_path / "c0.2_eta1.05" / "prototypes.bin").exists()


@pytest.fixture(scope="module")
def probe_inputs(tmp_path_factory, fasta):
    d = tmp_path_factory.mktemp("probe")
    assert main(["pretrain", str(fasta), "--head", "xe", *TINY, "--out", str(d / "run")]) == EXIT_OK
    assert main(["synth", "--out", str(d / "task.fa"), "--n", "60", "--length", "20",
                 "--gct-labels", str(d / "labels.csv")]) == EXIT_OK
    return d


def test_probe_regression(probe_inputs, capsys):
    d = probe_inputs
    out = d / "probe.json"
    assert main(["probe", str(d / "run/checkpoint"), str(d / "task.fa"), "--labels", str(d / "labels.csv"),
                 "--epochs", "1", "--out", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert len(report["cells"]) == 12 and isinstance(report["test_metric"], float)


def test_probe_accuracy_and_errors(probe_inputs, tmp_path):
    d = probe_inputs
    rows = list(csv.DictReader(open(d / "labels.csv")))
    with open(tmp_path / "cls.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "cls"])
        w.writerows((r["id"], "hi" if float(r["label"]) > 0.25 else "lo") for r in rows)
    base = ["probe", str(d / "run/checkpoint"), str(d / "task.fa"), "--epochs", "1"]
    assert main(base + ["--labels", str(tmp_path / "cls.csv"), "--label-column", "cls", "--metric", "accuracy"]) == 0
    assert main(base + ["--labels", str(tmp_path / "cls.csv")]) == EXIT_INVALID  # no 'label' column
    with open(tmp_path / "short.csv", "w") as fh:
        fh.write("id,label\n" + "".join(f"x{i},0.1\n" for i in range(10)))
    assert main(base + ["--labels", str(tmp_path / "short.csv")]) == EXIT_INVALID


def test_analyze(tmp_path, fasta, capsys):
    assert main(["analyze", str(fasta), "--predictions", str(fasta), "--out", str(tmp_path / "a")]) == EXIT_OK
    summary = json.loads((tmp_path / "a/summary.json").read_text())
    assert summary["family_confusion"]["errors"] == 0
    assert 20 <= summary["enc"] <= 61
    gc = tmp_path / "gc.fa"
    write_fasta([("g", "GCG" * 20)], gc)
    assert main(["analyze", str(gc), "--out", str(tmp_path / "g")]) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "g/sequences.csv")))
    assert rows[0]["gc"] == "1.0" and rows[0]["gc_bin"] == "high" and rows[0]["length_bin"] == "short"


def test_analyze_enc_sweep(tmp_path):
    values = []
    for i, t in enumerate((0.1, 0.4, 1.0, 3.0)):
        fa = tmp_path / f"t{i}.fa"
        assert main(["synth", "--out", str(fa), "--n", "200", "--temperature", str(t), "--seed", "1"]) == EXIT_OK
        assert main(["analyze", str(fa), "--out", str(tmp_path / f"o{i}")]) == EXIT_OK
        values.append(json.loads((tmp_path / f"o{i}/summary.json").read_text())["enc"])
    assert values == sorted(values) and len(set(values)) == 4


def test_analyze_misaligned_predictions(tmp_path, fasta):
    short = tmp_path / "p.fa"
    write_fasta([("a", "ATG")], short)
    assert main(["analyze", str(fasta), "--predictions", str(short), "--out", str(tmp_path / "x")]) == EXIT_INVALID


def test_usage_errors():
    assert main([]) == EXIT_INVALID
    assert main(["pretrain"]) == EXIT_INVALID
    assert main(["--help"]) == EXIT_OK
