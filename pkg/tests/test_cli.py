"""Command-line interface, exercised in-process through main(argv)."""

import json

import numpy as np
import pytest

from laic.cli import main, parse_config_file
from laic.featurestore import read_laic
from laic.verify import CheckResult


def synth(tmp_path, name="data", **over):
    """Generate a small dataset directory and return its path."""
    out = tmp_path / name
    args = {"dim": 16, "classes": 4, "images": 400, "texts": 120,
            "pi": 0.5, "conc-pos": 30.0, "seed": 0}
    args.update(over)
    argv = ["synth", "--out", str(out)]
    for key, value in args.items():
        argv += [f"--{key}", str(value)]
    assert main(argv) == 0
    return out


RUN_FLAGS = ["--k", "4", "--c", "8", "--epochs", "5", "--lr", "0.01",
             "--batch", "256", "--kappa", "0.03"]


def run_flags(data, out):
    return ["run", "--images", str(data / "images.laic"),
            "--texts", str(data / "texts.laic"),
            "--out", str(out)] + RUN_FLAGS


# --------------------------------------------------------------------- synth

def test_synth_writes_dataset_and_manifest(tmp_path):
    out = synth(tmp_path)
    images, labels = read_laic(out / "images.laic", role="image")
    texts, text_labels = read_laic(out / "texts.laic", role="text")
    assert images.rows == 400 and images.dim == 16
    assert texts.rows == 120
    assert labels.labels.shape == (400,)
    assert text_labels is not None  # noun positivity rides in the label block
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["command"] == "synth"
    assert doc["params"]["num_images"] == 400
    assert doc["outputs"] == ["images.laic", "texts.laic"]
    assert "version" in doc and "duration_s" in doc


# -------------------------------------------------------------------- ingest

def test_ingest_normalizes_and_attaches_labels(tmp_path):
    csv = tmp_path / "rows.csv"
    csv.write_text("3.0,4.0\n1.0,0.0\n")
    labels = tmp_path / "labels.txt"
    labels.write_text("0 1\n")
    out = tmp_path / "rows.laic"
    code = main(["ingest", "--csv", str(csv), "--dim", "2", "--normalize",
                 "--labels", str(labels), "--role", "text",
                 "--out", str(out)])
    assert code == 0
    matrix, lab = read_laic(out, role="text")
    np.testing.assert_allclose(matrix.data[0], [0.6, 0.8], atol=1e-7)
    assert lab.labels.tolist() == [0, 1]


def test_ingest_missing_csv_is_exit_one(tmp_path):
    code = main(["ingest", "--csv", str(tmp_path / "nope.csv"), "--dim", "2",
                 "--out", str(tmp_path / "x.laic")])
    assert code == 1


# ----------------------------------------------------------------------- run

def test_run_produces_artifacts_and_manifest(tmp_path):
    data = synth(tmp_path)
    out = tmp_path / "run"
    assert main(run_flags(data, out)) == 0
    for name in ("scores.csv", "filter.json", "counterparts.laic",
                 "assignments.csv", "report.json", "manifest.json"):
        assert (out / name).exists(), name
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["command"] == "run"
    assert doc["params"]["k"] == 4
    assert doc["params"]["c"] == 8
    assert doc["seeds"] == {"stage1": 0, "train": 1, "stage2": 2}
    report = json.loads((out / "report.json").read_text())
    assert report["acc"] is not None  # synthetic labels unlock metrics


def test_run_rerun_from_manifest_is_byte_identical(tmp_path):
    data = synth(tmp_path)
    first = tmp_path / "first"
    assert main(run_flags(data, first)) == 0
    second = tmp_path / "second"
    code = main(["run", "--manifest", str(first / "manifest.json"),
                 "--out", str(second), "--threads", "4"])
    assert code == 0
    for name in ("report.json", "assignments.csv", "scores.csv",
                 "filter.json", "counterparts.laic"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    doc = json.loads((second / "manifest.json").read_text())
    assert doc["params"]["threads"] == 4


def test_run_manifest_rejects_other_flags(tmp_path, capsys):
    data = synth(tmp_path)
    first = tmp_path / "first"
    assert main(run_flags(data, first)) == 0
    code = main(["run", "--manifest", str(first / "manifest.json"),
                 "--out", str(tmp_path / "bad"), "--k", "5"])
    assert code == 1
    assert "--out/--threads" in capsys.readouterr().err


def test_run_manifest_missing_keys(tmp_path, capsys):
    broken = tmp_path / "manifest.json"
    broken.write_text(json.dumps({"command": "run", "params": {"k": 4}}))
    code = main(["run", "--manifest", str(broken),
                 "--out", str(tmp_path / "out")])
    assert code == 1
    assert "missing keys" in capsys.readouterr().err


def test_run_rejects_non_rerunnable_manifest(tmp_path, capsys):
    data = synth(tmp_path)
    code = main(["run", "--manifest", str(data / "manifest.json"),
                 "--out", str(tmp_path / "out")])
    assert code == 1
    assert "not rerunnable" in capsys.readouterr().err


def test_run_validation_failures(tmp_path, capsys):
    data = synth(tmp_path)
    base = ["run", "--images", str(data / "images.laic"),
            "--texts", str(data / "texts.laic"), "--out", str(tmp_path / "o")]
    assert main(base) == 1  # no --k
    assert "missing required --k" in capsys.readouterr().err
    assert main(base + ["--k", "4", "--beta", "0"]) == 1
    assert "beta" in capsys.readouterr().err
    assert main(base + ["--k", "4", "--c", "many"]) == 1
    assert "--c must be" in capsys.readouterr().err


def test_run_internal_error_is_exit_two(tmp_path, monkeypatch, capsys):
    data = synth(tmp_path)

    def boom(*args, **kwargs):
        raise RuntimeError("stage exploded")

    monkeypatch.setattr("laic.pipeline.run_pipeline", boom)
    code = main(run_flags(data, tmp_path / "out"))
    assert code == 2
    assert "stage exploded" in capsys.readouterr().err


# -------------------------------------------------------------- config files

def test_config_file_merging(tmp_path):
    data = synth(tmp_path)
    cfg = tmp_path / "laic.cfg"
    cfg.write_text(
        "# pipeline settings\n"
        "\n"
        "k = 4\n"
        "c = 8\n"
        "beta = 7\n"
        "epochs = 5\n"
        "lr = 0.01\n"
        "batch = 256\n"
    )
    out = tmp_path / "out"
    code = main(["run", "--images", str(data / "images.laic"),
                 "--texts", str(data / "texts.laic"),
                 "--config", str(cfg), "--beta", "9", "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["params"]["beta"] == 9       # flag overrides the file
    assert doc["params"]["epochs"] == 5     # file overrides the default
    assert doc["params"]["tau"] == 12.5     # untouched default


def test_config_file_errors(tmp_path, capsys):
    bad_key = tmp_path / "a.cfg"
    bad_key.write_text("k = 4\nwidgets = 9\n")
    with pytest.raises(Exception, match="unknown config key"):
        parse_config_file(bad_key)

    bad_value = tmp_path / "b.cfg"
    bad_value.write_text("k = lots\n")
    with pytest.raises(Exception, match="bad value for k"):
        parse_config_file(bad_value)

    no_equals = tmp_path / "c.cfg"
    no_equals.write_text("k 4\n")
    with pytest.raises(Exception, match="expected key=value"):
        parse_config_file(no_equals)

    data = synth(tmp_path)
    code = main(["run", "--images", str(data / "images.laic"),
                 "--texts", str(data / "texts.laic"),
                 "--config", str(bad_key), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "unknown config key" in capsys.readouterr().err


# --------------------------------------------------------------------- score

def test_score_writes_stage1_artifacts(tmp_path):
    data = synth(tmp_path)
    out = tmp_path / "score"
    code = main(["score", "--images", str(data / "images.laic"),
                 "--texts", str(data / "texts.laic"),
                 "--out", str(out)] + RUN_FLAGS)
    assert code == 0
    assert (out / "scores.csv").exists()
    assert (out / "filter.json").exists()
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["command"] == "score"
    assert doc["outputs"] == ["scores.csv", "filter.json"]
    lines = (out / "scores.csv").read_text().splitlines()
    assert lines[0] == "index,predicted_cluster,gradnorm,msp,cosine"
    assert len(lines) == 121


# -------------------------------------------------------------------- ablate

def test_ablate_beta_sweep(tmp_path):
    data = synth(tmp_path)
    out = tmp_path / "ablate"
    code = main(["ablate", "--images", str(data / "images.laic"),
                 "--texts", str(data / "texts.laic"), "--param", "beta",
                 "--start", "1", "--stop", "3", "--steps", "3",
                 "--out", str(out)] + RUN_FLAGS)
    assert code == 0
    lines = (out / "ablate.csv").read_text().splitlines()
    assert lines[0] == "beta,acc,nmi,ari"
    assert len(lines) == 4
    assert [float(line.split(",")[0]) for line in lines[1:]] == [1.0, 2.0, 3.0]
    for line in lines[1:]:
        acc = float(line.split(",")[1])
        assert 0.0 <= acc <= 1.0


def test_ablate_validates_sweep_bounds(tmp_path, capsys):
    data = synth(tmp_path)
    base = ["ablate", "--images", str(data / "images.laic"),
            "--texts", str(data / "texts.laic"), "--param", "beta",
            "--out", str(tmp_path / "o")] + RUN_FLAGS
    assert main(base + ["--start", "1", "--stop", "3", "--steps", "1"]) == 1
    assert "steps >= 2" in capsys.readouterr().err
    assert main(base + ["--start", "5", "--stop", "2", "--steps", "3"]) == 1
    assert "stop > start" in capsys.readouterr().err


# -------------------------------------------------------------------- verify

def test_verify_prints_pass_lines(capsys):
    code = main(["verify", "--trials", "60", "--seed", "0"])
    assert code == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 4
    assert all(line.startswith("PASS") for line in out)
    assert out[0].startswith("PASS closed-form identity")


def test_verify_failure_is_exit_three(monkeypatch, capsys):
    def fake_run_all(seed=0, trials=1000):
        return [CheckResult("rigged", trials, 1.0, 1e-6, False)]

    monkeypatch.setattr("laic.verify.run_all", fake_run_all)
    code = main(["verify", "--trials", "5"])
    assert code == 3
    captured = capsys.readouterr()
    assert captured.out.startswith("FAIL rigged")
    assert "error:" in captured.err


# -------------------------------------------------------------------- report

def test_report_pretty_prints_run(tmp_path, capsys):
    data = synth(tmp_path)
    out = tmp_path / "run"
    assert main(run_flags(data, out)) == 0
    capsys.readouterr()
    assert main(["report", "--run", str(out)]) == 0
    text = capsys.readouterr().out
    assert "acc" in text and "baseline_acc" in text
    assert "n/a" not in text.split("err_pos")[0]  # labeled run: all metrics set


def test_report_handles_missing_metrics(tmp_path, capsys):
    run_dir = tmp_path / "bare"
    run_dir.mkdir()
    doc = {"acc": None, "baseline_acc": None, "nmi": None, "ari": None,
           "precision": None, "recall": None, "err_pos": {}}
    (run_dir / "report.json").write_text(json.dumps(doc))
    assert main(["report", "--run", str(run_dir)]) == 0
    text = capsys.readouterr().out
    assert text.count("n/a") == 7


def test_report_missing_directory(tmp_path):
    assert main(["report", "--run", str(tmp_path / "ghost")]) == 1


# ------------------------------------------------------------------- parsing

def test_unknown_subcommand_is_exit_one(capsys):
    assert main(["transmogrify"]) == 1
    assert "error:" in capsys.readouterr().err
