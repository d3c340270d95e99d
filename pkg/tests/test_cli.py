"""End-to-end command surface: flags, files, exit codes, manifests."""

import json
from pathlib import Path

import numpy as np
import pytest

from gdnn.checkpoint import load_checkpoint, save_checkpoint
from gdnn.cli import main
from gdnn.data import load_archive, serialize_cifar_batch
from gdnn.governor import load_profile
from gdnn.training import evaluate_accuracy

FIXTURES = Path(__file__).resolve().parent.parent / "src" / "gdnn" / "profiles"
TABLE1 = str(FIXTURES / "table1.csv")
XU3 = str(FIXTURES / "synthetic_xu3.csv")


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def archive(work):
    out = work / "data.gdnd"
    rc = main(["prepare-data", "--synthetic", "120", "--classes", "4",
               "--seed", "3", "--val-count", "24", "--test-count", "24",
               "--out", str(out)])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def trained(work, archive):
    out_dir = work / "run"
    rc = main(["train", "--data", str(archive), "--out-dir", str(out_dir),
               "--groups", "2", "--channels-per-group", "2",
               "--epochs", "1", "--max-repeats", "1", "--seed", "0",
               "--no-epoch-checkpoints"])
    assert rc == 0
    return out_dir


# ----------------------------------------------------------------- basics


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["train"]) == 2  # missing required flags
    capsys.readouterr()


def test_version_exits_0(capsys):
    assert main(["--version"]) == 0
    assert "gdnn" in capsys.readouterr().out


# ----------------------------------------------------------- prepare-data


def test_prepare_data_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.gdnd", tmp_path / "b.gdnd"
    for out in (a, b):
        rc = main(["prepare-data", "--synthetic", "200", "--classes", "2",
                   "--seed", "7", "--out", str(out)])
        assert rc == 0
    assert a.read_bytes() == b.read_bytes()
    manifest = json.loads((tmp_path / "a.gdnd.manifest.json").read_text())
    assert manifest["command"] == "prepare-data"
    assert manifest["seeds"] == {"seed": 7}
    assert str(a) in manifest["outputs"]
    capsys.readouterr()


def test_prepare_data_splits(archive):
    bundle = load_archive(archive)
    assert len(bundle.train) == 96
    assert len(bundle.val) == 24
    assert len(bundle.test) == 24
    assert bundle.num_classes == 4


def test_prepare_data_cifar_dir(tmp_path, capsys):
    rng = np.random.default_rng(0)
    for name in [f"data_batch_{i}.bin" for i in range(1, 6)] + ["test_batch.bin"]:
        n = 10 if name.startswith("test") else 20
        labels = rng.integers(0, 10, size=n)
        pixels = rng.integers(0, 256, size=(n, 3072)).astype(np.uint8)
        (tmp_path / name).write_bytes(serialize_cifar_batch(labels, pixels))
    out = tmp_path / "c.gdnd"
    rc = main(["prepare-data", "--cifar-dir", str(tmp_path),
               "--val-count", "10", "--out", str(out)])
    assert rc == 0
    bundle = load_archive(out)
    assert (len(bundle.train), len(bundle.val), len(bundle.test)) == (90, 10, 10)
    assert bundle.num_classes == 10
    capsys.readouterr()


def test_prepare_data_cifar_requires_10_classes(tmp_path, capsys):
    rc = main(["prepare-data", "--cifar-dir", str(tmp_path), "--classes", "5",
               "--out", str(tmp_path / "x.gdnd")])
    assert rc == 6
    assert "error:" in capsys.readouterr().err


def test_prepare_data_missing_cifar_files(tmp_path, capsys):
    rc = main(["prepare-data", "--cifar-dir", str(tmp_path / "nowhere"),
               "--out", str(tmp_path / "x.gdnd")])
    assert rc == 3
    capsys.readouterr()


def test_prepare_data_val_count_too_large(tmp_path, capsys):
    rc = main(["prepare-data", "--synthetic", "20", "--val-count", "20",
               "--out", str(tmp_path / "x.gdnd")])
    assert rc == 6
    capsys.readouterr()


# ------------------------------------------------------------------ train


def test_train_outputs(trained, archive, capsys):
    final = trained / "final.gdnn"
    assert final.is_file()
    model = load_checkpoint(final)
    assert model.trained_groups == 2
    assert model.channel_mean is not None
    bundle = load_archive(archive)
    assert np.array_equal(model.channel_mean, bundle.channel_mean)

    steps = (trained / "steps.csv").read_text().splitlines()
    assert steps[0] == "step,attempt,epoch,val_accuracy,chosen,repeats"
    rows = [line.split(",") for line in steps[1:]]
    assert len(rows) == 2  # one epoch per step, two steps
    assert sum(int(r[4]) for r in rows) == 2  # exactly one chosen row per step

    manifest = json.loads((trained / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["seeds"] == {"rng_seed": 0}
    assert str(archive) in manifest["inputs"]


def test_train_missing_data_file(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "absent.gdnd"),
               "--out-dir", str(tmp_path / "run")])
    assert rc == 3
    assert "error:" in capsys.readouterr().err


# ------------------------------------------------------------------- eval


def test_eval_stdout_full_width(trained, archive, capsys):
    rc = main(["eval", "--model", str(trained / "final.gdnn"),
               "--data", str(archive), "--config", "100"])
    assert rc == 0
    captured = capsys.readouterr()
    lines = captured.out.strip().splitlines()
    assert lines[0] == ("config_pct,k,accuracy,confidence_total,"
                        "confidence_normalized,class_0,class_1,class_2,class_3")
    cells = lines[1].split(",")
    assert cells[0] == "100" and cells[1] == "2"
    assert cells[4] == "1.0"  # normalized confidence is exact at full width
    model = load_checkpoint(trained / "final.gdnn")
    bundle = load_archive(archive)
    acc, _ = evaluate_accuracy(model, 2, bundle.val)
    assert float(cells[2]) == acc  # CLI row matches the API bit for bit
    assert '"command": "eval"' in captured.err  # manifest on stderr


def test_eval_all_configs_to_file(trained, archive, work, capsys):
    out = work / "eval.csv"
    rc = main(["eval", "--model", str(trained / "final.gdnn"),
               "--data", str(archive), "--config", "all",
               "--split", "test", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert [line.split(",")[1] for line in lines[1:]] == ["1", "2"]
    assert [line.split(",")[0] for line in lines[1:]] == ["50", "100"]
    assert (work / "eval.csv.manifest.json").is_file()
    capsys.readouterr()


def test_eval_config_must_divide(trained, archive, capsys):
    rc = main(["eval", "--model", str(trained / "final.gdnn"),
               "--data", str(archive), "--config", "25"])
    assert rc == 6  # 25% of 2 groups is not a whole group
    capsys.readouterr()


def test_eval_width_beyond_trained_groups(trained, archive, work, capsys):
    model = load_checkpoint(trained / "final.gdnn")
    model.trained_groups = 1
    partial = work / "partial.gdnn"
    save_checkpoint(model, partial)
    rc = main(["eval", "--model", str(partial), "--data", str(archive),
               "--config", "100"])
    assert rc == 6
    rc = main(["eval", "--model", str(partial), "--data", str(archive),
               "--config", "all"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.count("\n") == 2  # header plus the single trained width


# ---------------------------------------------------------------- profile


def test_profile_writes_loadable_csv(trained, archive, work, capsys):
    out = work / "host.csv"
    rc = main(["profile", "--model", str(trained / "final.gdnn"),
               "--data", str(archive), "--limit", "4", "--reps", "3",
               "--out", str(out)])
    assert rc == 0
    stdout = capsys.readouterr().out
    assert "k=1: mean" in stdout and "k=2: mean" in stdout
    profile = load_profile(out)
    assert [p.config_k for p in profile.points] == [1, 2]
    for p in profile.points:
        assert p.core == "host"
        assert p.freq_hz == 0
        assert p.power_mw is None
        assert 0.0 <= p.accuracy <= 1.0
    assert (work / "host.csv.manifest.json").is_file()


# ----------------------------------------------------------------- govern


def test_govern_reference_budget(capsys):
    rc = main(["govern", "--profile", TABLE1, "--budget-metric", "time_ms",
               "--budget", "33"])
    assert rc == 0
    captured = capsys.readouterr()
    line = captured.out.splitlines()[0]
    assert line.startswith("selected: core=gpu freq=921000000 config=100%")
    assert "latency_ms=4.88" in line
    assert "energy_mj=-" in line
    assert "accuracy=0.712" in line
    for knobs in ("config", "config+dvfs", "config+dvfs+map"):
        assert f"range[{knobs}]:" in captured.out
    assert '"command": "govern"' in captured.err


def test_govern_core_pinned_dvfs(capsys):
    rc = main(["govern", "--profile", TABLE1, "--budget-metric", "time_ms",
               "--budget", "2000", "--knobs", "dvfs", "--core", "a15"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("selected: core=a15 freq=1800000000")
    assert "range[config]: time_ms 1.00x, energy_mj n/a" in out


def test_govern_infeasible(capsys):
    rc = main(["govern", "--profile", TABLE1, "--budget-metric", "time_ms",
               "--budget", "1"])
    assert rc == 5
    assert "error:" in capsys.readouterr().err


def test_govern_bad_knobs(capsys):
    rc = main(["govern", "--profile", TABLE1, "--budget-metric", "time_ms",
               "--budget", "33", "--knobs", "config+warp"])
    assert rc == 6
    capsys.readouterr()


def test_govern_malformed_profile(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("who,what\n1,2\n", encoding="utf-8")
    rc = main(["govern", "--profile", str(bad), "--budget-metric", "time_ms",
               "--budget", "33"])
    assert rc == 7
    capsys.readouterr()


def test_govern_missing_profile(tmp_path, capsys):
    rc = main(["govern", "--profile", str(tmp_path / "nope.csv"),
               "--budget-metric", "time_ms", "--budget", "33"])
    assert rc == 3
    capsys.readouterr()


# ----------------------------------------------------------------- report


def test_report_outputs(trained, archive, work, capsys):
    out_dir = work / "report"
    rc = main(["report", "--model", str(trained / "final.gdnn"),
               "--data", str(archive), "--profile", XU3,
               "--out-dir", str(out_dir)])
    assert rc == 0
    capsys.readouterr()

    fig2 = (out_dir / "fig2.csv").read_text().splitlines()
    assert fig2[0] == "k,config_pct,accuracy"
    assert len(fig2) == 3  # two trained widths

    fig3 = (out_dir / "fig3.csv").read_text().splitlines()
    assert fig3[0] == "k,config_pct,confidence_total,confidence_normalized"

    fig4 = (out_dir / "fig4.csv").read_text().splitlines()
    assert fig4[0] == "core,freq_hz,k,config_pct,latency_ms"
    cores = {line.split(",")[0] for line in fig4[1:]}
    freqs = {line.split(",")[1] for line in fig4[1:]}
    assert cores == {"a15", "a7"}
    assert freqs == {"1800000000", "1300000000"}  # max frequency per core
    assert len(fig4) == 1 + 8

    fig5 = (out_dir / "fig5.csv").read_text().splitlines()
    assert len(fig5) == 1 + 116

    summary = (out_dir / "summary.csv").read_text().splitlines()
    assert summary[0] == ("knobs,time_range,energy_range,rrcr_pct,"
                          "model_size_kb,analytic_size_kb")
    assert len(summary) == 4
    first = summary[1].split(",")
    assert first[0] == "config"
    assert float(first[1]) == 4.0     # width-only latency range
    assert float(first[2]) > 1.0      # energy range present for this profile
    assert float(first[3]) == 50.0    # one redundant group of two

    manifest = json.loads((out_dir / "report.manifest.json").read_text())
    assert manifest["command"] == "report"
    assert len(manifest["inputs"]) == 3
