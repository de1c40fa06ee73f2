import json

import numpy as np
import pytest

from minsurro import __version__
from minsurro.cli import main
from minsurro.io import load_model, read_dataset


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_version(capsys):
    code, out, _ = run(["version"], capsys)
    assert code == 0 and out.strip() == __version__


@pytest.mark.parametrize(
    "args",
    [[], ["bogus"], ["bench"], ["bench", "ocp"], ["train", "--bogus", "1"], ["train", "--K", "x"], ["train"], ["version", "extra"]],
)
def test_usage_errors_exit_1(args, capsys):
    code, _, err = run(args, capsys)
    assert code == 1 and err


def test_missing_file_exits_2(tmp_path, capsys):
    code, _, err = run(["train", "--dataset", str(tmp_path / "none.csv"), "--out", str(tmp_path)], capsys)
    assert code == 2 and "none.csv" in err
    code, _, _ = run(["train", "--config", str(tmp_path / "none.json")], capsys)
    assert code == 2


def test_malformed_dataset_exits_2(tmp_path, capsys):
    (tmp_path / "d.csv").write_text("x0,f\n1\n")
    code, _, err = run(["train", "--dataset", str(tmp_path / "d.csv"), "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "row 1" in err


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["sample", "--problem", "camel", "--count", "150", "--out", str(d)]) == 0
    code = main(
        [
            "train", "--dataset", str(d / "dataset.csv"), "--K", "2", "--epochs", "20", "--finetune_iterations", "20",
            "--head", "monotone", "--shared_head", "--w2", "0.1", "--out", str(d),
        ]
    )
    assert code == 0
    return d


def test_sample_writes_camel_data(trained_dir):
    ds = read_dataset(trained_dir / "dataset.csv")
    assert len(ds) == 150 and ds.n_x == 2 and ds.n_p == 0 and ds.grad is not None


def test_train_outputs(trained_dir):
    model = load_model(trained_dir / "model.json")
    rep = json.loads((trained_dir / "train_report.json").read_text())
    assert model.K == 2 and rep["n_theta"] == model.n_theta
    assert (trained_dir / "history.csv").read_text().startswith("epoch,")


def test_existing_outputs_need_force(trained_dir, capsys):
    args = ["sample", "--problem", "camel", "--count", "150", "--out", str(trained_dir)]
    code, _, err = run(args, capsys)
    assert code == 2 and "--force" in err
    code, _, _ = run(args + ["--force"], capsys)
    assert code == 0


def test_solve_report(trained_dir, tmp_path, capsys):
    code, out, _ = run(["solve", "--model", str(trained_dir / "model.json"), "--rows", "[[1, 1, 0.5]]", "--out", str(tmp_path)], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["status"] == "Optimal" and sum(rep["x_star"]) <= 0.5 + 1e-9
    assert rep == json.loads((tmp_path / "solve_report.json").read_text())


def test_solve_rejects_wrong_p(trained_dir, tmp_path, capsys):
    code, _, err = run(["solve", "--model", str(trained_dir / "model.json"), "--p", "1", "--out", str(tmp_path)], capsys)
    assert code == 1 and "p needs 0 entries" in err


def test_gradcheck_model_and_ocp(trained_dir, capsys):
    code, out, _ = run(["gradcheck", "--model", str(trained_dir / "model.json"), "--seed", "3"], capsys)
    assert code == 0 and json.loads(out)["max_rel_err"] <= 1e-5
    code, out, _ = run(["gradcheck", "--problem", "ocp"], capsys)
    assert code == 0 and json.loads(out)["max_rel_err"] <= 1e-5
    code, _, _ = run(["gradcheck"], capsys)
    assert code == 1


def test_train_box_constraints_need_matching_duals(tmp_path, capsys):
    (tmp_path / "d.csv").write_text("x0,f,lam0,is_optimal\n0.5,1.0,0.0,1\n")
    code, _, err = run(["train", "--dataset", str(tmp_path / "d.csv"), "--constraints", "box", "--out", str(tmp_path / "o")], capsys)
    assert code == 2 and "box rows" in err


def test_camel_bench_small(tmp_path, capsys):
    args = [
        "bench", "camel", "--k", "1", "--epochs", "5", "--finetune_iterations", "5", "--restarts", "1",
        "--n_samples", "50", "--n_starts", "5", "--out", str(tmp_path), "--plots",
    ]
    code, out, _ = run(args, capsys)
    assert code == 0
    rep = json.loads((tmp_path / "camel_report.json").read_text())
    assert rep["multistart"]["n_starts"] == 5 and "1" in rep["runs"]
    assert (tmp_path / "camel_K1.png").exists()
    lines = (tmp_path / "camel_grid_K1.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,f_true,f_surrogate" and len(lines) == 201 * 101 + 1
    assert np.isfinite(json.loads(out)["1"]["train_mse"])
