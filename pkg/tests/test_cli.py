import csv
import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from ltisysid.cli import main


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def digest(directory):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(directory.rglob("*")) if p.is_file()}


def scalar_dataset_files(tmp_path, a=0.0, times=(1.0,), s=1.0, name="d"):
    rows = ["trajectory_id,time,y_1"] + [f"0,{float(t)!r},{float(s * np.exp(a * t))!r}" for t in times]
    (tmp_path / f"{name}.csv").write_text("\n".join(rows) + "\n")
    meta = {"n": 1, "m": 1, "time_kind": "continuous", "seed": None, "A": [a], "C": [1.0], "initial_states": [[s]]}
    (tmp_path / f"{name}.json").write_text(json.dumps(meta))
    return str(tmp_path / f"{name}.csv")


def test_generate_default_shape(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"system": {"n": 3, "m": 1, "seed": 4}})
    assert main(["generate", "--config", cfg, "--out", str(tmp_path / "g")]) == 0
    rows = read_csv(tmp_path / "g" / "dataset.csv")
    assert rows[0] == ["trajectory_id", "time", "y_1"] and len(rows) == 2501


def test_generate_single_row_and_deterministic(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", {"dataset": {"K": 1, "len": 1}})
    main(["generate", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["generate", "--config", cfg, "--out", str(tmp_path / "b")])
    assert len(read_csv(tmp_path / "a" / "dataset.csv")) == 2
    assert digest(tmp_path / "a") == digest(tmp_path / "b")
    assert "unit circle" in capsys.readouterr().out


def test_seed_flag_overrides(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"dataset": {"K": 2, "len": 3}})
    main(["generate", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["generate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    meta_a = json.loads((tmp_path / "a" / "dataset.json").read_text())
    meta_b = json.loads((tmp_path / "b" / "dataset.json").read_text())
    assert meta_a["seed"] == 1001 and meta_b["seed"] == 1002 and meta_a["A"] != meta_b["A"]


def test_train_from_ground_truth(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        {
            "dataset": {"K": 5, "len": 10, "time_kind": "continuous"},
            "model_init": {"kind": "true"},
            "init_state": {"mode": "fixed", "source": "true"},
        },
    )
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "t")]) == 0
    rows = read_csv(tmp_path / "t" / "loss_curve.csv")
    assert len(rows) == 2 and float(rows[1][1]) <= 1e-12
    status = json.loads((tmp_path / "t" / "status.json").read_text())
    assert status["kind"] == "converged"


def test_train_artifacts_and_determinism(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"dataset": {"K": 4, "len": 8}, "train": {"max_iters": 25}})
    for out in ("a", "b"):
        assert main(["train", "--config", cfg, "--out", str(tmp_path / out)]) == 0
    files = digest(tmp_path / "a")
    assert set(files) == {
        "loss_curve.csv", "eigen_trace.csv", "final_model.json", "status.json", "loss_curve.svg", "eigen_plane.svg",
    }
    assert files == digest(tmp_path / "b")
    trace = read_csv(tmp_path / "a" / "eigen_trace.csv")
    assert trace[0] == ["iter", "eig_index", "re", "im"] and len(trace) - 1 == 25 * 3
    assert (tmp_path / "a" / "eigen_plane.svg").read_text().startswith("<svg")


def test_no_plots_flag(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"dataset": {"K": 2, "len": 4}, "train": {"max_iters": 3}})
    main(["train", "--config", cfg, "--out", str(tmp_path / "t"), "--no-plots"])
    assert not list((tmp_path / "t").glob("*.svg"))


def test_divergence_exits_zero(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        {"dataset": {"K": 3, "len": 20}, "train": {"loss": "squared", "learning_rate": 10.0, "clip_threshold": None, "max_iters": 200}},
    )
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "t")]) == 0
    assert json.loads((tmp_path / "t" / "status.json").read_text())["kind"] == "diverged"


def test_bounds_scalar_example(tmp_path):
    path = scalar_dataset_files(tmp_path)
    cfg = write_config(
        tmp_path / "c.json",
        {
            "dataset": {"path": path},
            "model_init": {"kind": "true"},
            "init_state": {"mode": "fixed", "source": "true"},
            "train": {"learning_rate": 1.0},
        },
    )
    assert main(["bounds", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    rep = json.loads((tmp_path / "b" / "bounds.json").read_text())
    assert rep["theorem1_delta_max"] == pytest.approx(2.0) and rep["theorem2_delta_max"] == pytest.approx(8.0)
    assert rep["label"] == "theorem-conditioned" and rep["delta_ok"] is True


def test_bounds_void_gram(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        {
            "system": {"A": [[0.5, 0.0], [0.0, -0.3]], "C": [[1.0, 1.0]]},
            "dataset": {"K": 1, "len": 5, "time_kind": "continuous"},
            "model_init": {"kind": "true"},
            "init_state": {"mode": "fixed", "source": "true"},
        },
    )
    assert main(["bounds", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    rep = json.loads((tmp_path / "b" / "bounds.json").read_text())
    assert rep["theorem1_delta_max"] == "+inf" and rep["theorem2_delta_max"] == "+inf"


def test_bounds_on_converged_identity_run(tmp_path):
    path = scalar_dataset_files(tmp_path, a=0.3, times=(1.0, 2.0, 3.0, 4.0, 5.0))
    cfg = write_config(
        tmp_path / "c.json",
        {
            "dataset": {"path": path},
            "model_init": {"kind": "explicit", "A": [[0.29]], "C": [[1.0]]},
            "init_state": {"mode": "fixed", "source": "true"},
            "train": {
                "loss": "squared", "learning_rate": 1e-4, "momentum": 0.0, "clip_threshold": None,
                "max_iters": 20000, "train_C": False,
            },
        },
    )
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "t")]) == 0
    assert json.loads((tmp_path / "t" / "status.json").read_text())["kind"] == "converged"
    model = str(tmp_path / "t" / "final_model.json")
    assert main(["bounds", "--config", cfg, "--model", model, "--out", str(tmp_path / "b")]) == 0
    cor = json.loads((tmp_path / "b" / "bounds.json").read_text())["corollary1"]
    assert cor["c_is_identity"] and cor["applicable"]
    assert cor["re_lambda_upper"] >= cor["re_lambda"]


def test_reproduce_fig2_one_seed(tmp_path):
    cfg = write_config(tmp_path / "c.json", {"protocol": {"max_iters": 30, "deltas": [1e-3], "K": 5, "len": 10}})
    assert main(["reproduce", "--figure", "fig2", "--seeds", "0", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    seed_dir = tmp_path / "r" / "seed_0"
    assert (seed_dir / "eigen_plane_mse.svg").exists() and (seed_dir / "eigen_plane_log.svg").exists()
    rows = read_csv(tmp_path / "r" / "summary.csv")
    assert len(rows) == 2 and rows[1][0] == "0"


def test_reproduce_empty_seed_list(tmp_path):
    assert main(["reproduce", "--figure", "fig1", "--seeds", "", "--out", str(tmp_path / "r")]) == 0
    rows = read_csv(tmp_path / "r" / "summary.csv")
    assert len(rows) == 1 and rows[0][0] == "seed"


def test_exit_codes(tmp_path):
    bad = write_config(tmp_path / "bad.json", {"unknown": 1})
    assert main(["train", "--config", bad]) == 2
    missing = write_config(tmp_path / "m.json", {"dataset": {"path": str(tmp_path / "nope.csv")}})
    assert main(["train", "--config", missing, "--out", str(tmp_path / "x")]) == 3
    nan = tmp_path / "nan.json"
    nan.write_text('{"system": {"A": [[NaN]], "C": [[1.0]]}}')
    assert main(["generate", "--config", str(nan), "--out", str(tmp_path / "y")]) == 4


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ltisysid", "generate", "--out", str(tmp_path / "g")], capture_output=True, text=True
    )
    assert proc.returncode == 0 and (tmp_path / "g" / "dataset.csv").exists()
