import json

import pytest

from radaupde.cli import EXIT_BAD_CONFIG, EXIT_NOT_CONVERGED, EXIT_OK, main, read_config_file
from radaupde.study import ConfigError

SMALL = ["--nx", "5", "--nt", "3", "--intervals", "2"]


def test_solve_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["solve", *SMALL, "--out", str(out)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["success"] and summary["config"]["n_nodes"] == 5
    names = {p.name for p in out.iterdir()}
    assert names == {"state.csv", "controls.csv", "summary.json", "state.png", "controls.png"}


def test_no_figures_flag(tmp_path):
    assert main(["solve", *SMALL, "--out", str(tmp_path), "--no-figures"]) == EXIT_OK
    assert not list(tmp_path.glob("*.png"))


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("problem = heat\nnx = 5\nnt = 2\nintervals = 2\ntol = 1e-9\n")
    assert read_config_file(cfg)["tol"] == 1e-9
    assert main(["solve", "--config", str(cfg), "--nt", "3", "--out", str(tmp_path),
                 "--no-figures"]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["config"]["problem"] == "heat"
    assert summary["config"]["n_t"] == 3 and summary["config"]["tol"] == 1e-9


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    with pytest.raises(ConfigError):
        read_config_file(cfg)
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_BAD_CONFIG


@pytest.mark.parametrize("argv", [
    ["solve", "--nx", "2"],
    ["solve", "--problem", "heat", "--backend", "fd"],
    ["solve", "--degree", "2", "--nx", "6"],
    ["solve", "--tol", "-1"],
])
def test_invalid_configurations_exit_3(argv, tmp_path):
    assert main([*argv, "--out", str(tmp_path)]) == EXIT_BAD_CONFIG


def test_iteration_limit_exit_2(tmp_path):
    assert main(["solve", *SMALL, "--max-iter", "2", "--out", str(tmp_path),
                 "--no-figures"]) == EXIT_NOT_CONVERGED
    assert (tmp_path / "summary.json").exists()


def test_unknown_verb_is_an_argparse_error():
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_sparsity_verb(tmp_path, capsys):
    assert main(["sparsity", *SMALL, "--out", str(tmp_path)]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["nnz"] == 389
    assert (tmp_path / "sparsity.txt").exists() and (tmp_path / "sparsity.png").exists()


def test_compare_lgr_verb(tmp_path, capsys):
    assert main(["compare-lgr", *SMALL, "--out", str(tmp_path)]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["flipped_empty_columns"] == []
    assert data["standard_empty_names"] == ["u1[5]", "u2[5]"]


def test_convergence_verbs_on_tiny_meshes(tmp_path, capsys):
    args = ["--nx", "6", "--nt", "2", "--coarse", "2,4", "--refine", "2", "--tol", "1e-10",
            "--no-figures"]
    assert main(["converge-time", *args, "--out", str(tmp_path / "t")]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["kind"] == "temporal" and len(report["errors"]) == 2
    args = ["--problem", "heat", "--nx", "5", "--intervals", "2", "--nt", "3",
            "--coarse", "2,4", "--refine", "2", "--tol", "1e-10", "--no-figures"]
    assert main(["converge-space", *args, "--out", str(tmp_path / "s")]) == EXIT_OK
    assert (tmp_path / "s" / "spatial_convergence.csv").exists()


def test_constrained_heat_mesh2_summary(tmp_path, capsys):
    argv = ["solve", "--problem", "heat-constrained", "--nt", "5", "--intervals", "10",
            "--nx", "50", "--out", str(tmp_path), "--no-figures"]
    assert main(argv) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["reference_objective"] == 3.8669506e-5
    assert abs(summary["relative_difference"]) < 0.02
