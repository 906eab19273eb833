import json

import pytest

from qvnet.cli import build_parser, main, spec_from_args
from qvnet.experiments import Mode


def test_overrides_apply_on_top_of_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("seeds = [1, 2, 3]\nk_shots = 400\nn_avs = 3\n")
    args = build_parser().parse_args(
        ["convergence", "--config", str(cfg), "--alpha", "0.25,0.5", "--depth", "2", "--shots", "800", "--seed", "9"]
    )
    s = spec_from_args(args, Mode.CONVERGENCE)
    assert s.alphas == (0.25, 0.5)
    assert s.depths == (2,)
    assert s.cvar.k_shots == 800
    assert s.seeds == (9,)
    assert s.vnet.n_avs == 3


def test_make_instance_oracle_and_solve(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    cfg = tmp_path / "c.toml"
    cfg.write_text("n_avs = 2\nn_rbs = 1\nn_tbs = 1\n")
    assert main(["make-instance", "--config", str(cfg), "--seed", "2", "--out", str(inst)]) == 0
    assert main(["oracle", str(inst)]) == 0
    report = json.loads(capsys.readouterr().out.split("\n", 1)[1])
    assert report["n_avs"] == 2 and report["best_feasible_z"] >= report["greedy_z"]

    out = tmp_path / "solve"
    assert main(["solve", "--instance", str(inst), "--alpha", "0.25", "--seeds", "0,1", "--max-evals", "30",
                 "--out", str(out)]) == 0
    assert sorted(p.name for p in out.glob("trace_*.csv")) == ["trace_a0.25_s0.csv", "trace_a0.25_s1.csv"]
    assert "oracle optimum Z" in capsys.readouterr().out


def test_sweep_with_plots_and_rerun(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("n_avs = 2\nn_rbs = 1\nn_tbs = 1\nseeds = [0]\nmax_evals = 15\nk_shots = 100\n")
    out = tmp_path / "depth"
    assert main(["sweep-depth", "--config", str(cfg), "--depth", "0,1", "--out", str(out), "--plots"]) == 0
    assert (out / "depth_sweep.svg").is_file()
    again = tmp_path / "again"
    assert main(["rerun", str(out / "manifest.json"), "--out", str(again)]) == 0
    assert (again / "depth_sweep.csv").read_bytes() == (out / "depth_sweep.csv").read_bytes()
    assert main(["plot", str(again)]) == 0
    assert (again / "depth_sweep.svg").read_bytes() == (out / "depth_sweep.svg").read_bytes()


def test_errors_exit_with_status_2(tmp_path, capsys):
    assert main(["convergence", "--shots", "0", "--out", str(tmp_path)]) == 2
    assert "k_shots" in capsys.readouterr().err
    assert main(["oracle", str(tmp_path / "missing.json")]) == 2


def test_unknown_command_is_a_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2
