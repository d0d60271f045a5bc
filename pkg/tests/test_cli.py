"""Command-line interface: exit codes, determinism, and dispatch coverage."""

from __future__ import annotations

import json

import numpy as np
import pytest

import fedeval
from fedeval import moments, write_embeddings
from fedeval.cli import OPERATION_SUBCOMMANDS, build_parser, main, parse_grid
from fedeval.statkit import save_stats


@pytest.fixture
def workspace(tmp_path):
    """Client-set JSON plus generator files for CLI runs."""
    rng = np.random.default_rng(11)
    c1 = rng.normal(size=(30, 2)) + np.array([1.0, 0.0])
    c2 = rng.normal(size=(40, 2)) + np.array([-1.0, 0.0])
    gen = rng.normal(size=(25, 2))
    write_embeddings(c1, tmp_path / "c1.fevb")
    write_embeddings(c2, tmp_path / "c2.fevb")
    write_embeddings(gen, tmp_path / "gen.fevb")
    save_stats(moments(gen), tmp_path / "gen_moments.json")
    (tmp_path / "clients.json").write_text(
        json.dumps(
            {
                "clients": [
                    {"id": "c1", "embeddings": "c1.fevb"},
                    {"id": "c2", "embeddings": "c2.fevb"},
                ]
            }
        )
    )
    return tmp_path, {"c1": c1, "c2": c2, "gen": gen}


def run_cli(args):
    return main([str(a) for a in args])


def test_fid_subcommand_matches_library(workspace, capsys):
    tmp, data = workspace
    code = run_cli(["fid", "--clients", tmp / "clients.json", "--gen", tmp / "gen.fevb", "--agg", "both"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    from fedeval import Client, ClientSet, fid_all, fid_avg

    clients = ClientSet(
        [Client(id="c1", embeddings=data["c1"]), Client(id="c2", embeddings=data["c2"])]
    )
    gen_stats = moments(data["gen"])
    assert out["fid_avg"] == pytest.approx(fid_avg(clients, gen_stats).value, rel=1e-12)
    assert out["fid_all"] == pytest.approx(fid_all(clients, gen_stats).value, rel=1e-12)


def test_fid_ref_pair(workspace, capsys):
    tmp, _ = workspace
    code = run_cli(["fid", "--ref", tmp / "c1.fevb", "--gen", tmp / "gen_moments.json"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"value", "mean_term", "trace_term"}


def test_kid_subcommand_with_gap(workspace, capsys):
    tmp, data = workspace
    code = run_cli(
        ["kid", "--clients", tmp / "clients.json", "--gen", tmp / "gen.fevb", "--agg", "both", "--gap"]
    )
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kid_avg"] - out["kid_all"] == pytest.approx(out["gap"], rel=1e-9)


def test_kid_ustat_single_sample_exit_2(tmp_path, capsys):
    write_embeddings(np.array([[1.0]]), tmp_path / "one.fevb")
    write_embeddings(np.array([[0.0], [0.5]]), tmp_path / "gen.fevb")
    (tmp_path / "clients.json").write_text(
        json.dumps({"clients": [{"id": "only", "embeddings": "one.fevb"}]})
    )
    code = run_cli(
        [
            "kid",
            "--estimator",
            "ustat",
            "--clients",
            tmp_path / "clients.json",
            "--gen",
            tmp_path / "gen.fevb",
            "--agg",
            "all",
        ]
    )
    assert code == 2
    assert "ustat requires" in capsys.readouterr().err


def test_prdc_subcommand(workspace, capsys):
    tmp, data = workspace
    code = run_cli(["prdc", "--clients", tmp / "clients.json", "--gen", tmp / "gen.fevb", "--k", "3"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"all", "avg", "per_client"}
    from fedeval import Client, ClientSet, prdc_aggregate

    clients = ClientSet(
        [Client(id="c1", embeddings=data["c1"]), Client(id="c2", embeddings=data["c2"])]
    )
    assert out["all"] == prdc_aggregate(clients, data["gen"], k=3).all.to_json_dict()


def test_stats_moments_and_pool(workspace, capsys):
    tmp, data = workspace
    assert run_cli(["stats", "--input", tmp / "c1.fevb"]) == 0
    single = json.loads(capsys.readouterr().out)
    assert single["n"] == 30
    assert run_cli(["stats", "--clients", tmp / "clients.json"]) == 0
    pooled = json.loads(capsys.readouterr().out)
    assert pooled["n"] == 70


def test_stats_log_likelihood(workspace, capsys):
    tmp, _ = workspace
    code = run_cli(
        ["stats", "--clients", tmp / "clients.json", "--ll-model", tmp / "gen_moments.json"]
    )
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert abs(out["avg"] - out["all"]) <= 1e-12 * max(1.0, abs(out["all"]))


def test_barycenter_subcommand(workspace, capsys):
    tmp, _ = workspace
    assert run_cli(["barycenter", "--clients", tmp / "clients.json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["residual"] <= 1e-10 * np.linalg.norm(out["cov"])
    assert (
        run_cli(["barycenter", "--clients", tmp / "clients.json", "--gen", tmp / "gen.fevb"]) == 0
    )
    dec = json.loads(capsys.readouterr().out)
    assert dec["fid_avg"] == pytest.approx(dec["barycenter_part"] + dec["const_part"])


def test_counterexample_subcommand(tmp_path, capsys):
    rng = np.random.default_rng(2)
    write_embeddings(rng.normal(size=(20, 3)) + np.array([1.0, 0, 0]), tmp_path / "a.fevb")
    write_embeddings(rng.normal(size=(20, 3)) - np.array([1.0, 0, 0]), tmp_path / "b.fevb")
    (tmp_path / "clients.json").write_text(
        json.dumps(
            {
                "clients": [
                    {"id": "a", "embeddings": "a.fevb"},
                    {"id": "b", "embeddings": "b.fevb"},
                ]
            }
        )
    )
    assert run_cli(["counterexample", "--clients", tmp_path / "clients.json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["u"] > 0
    assert out["fid_all_hat"] == pytest.approx(0.0, abs=1e-10)


def test_sweep_toy_mixture_writes_deterministic_csv(tmp_path):
    args = [
        "sweep",
        "toy-mixture",
        "--grid",
        "0:1:0.5",
        "--n",
        "50",
        "--seed",
        "7",
        "--out",
        tmp_path / "a.csv",
    ]
    assert run_cli(args) == 0
    args[-1] = tmp_path / "b.csv"
    assert run_cli(args) == 0
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    header = a.decode().splitlines()[0]
    assert header.startswith("var_x,fd_avg_analytic,fd_all_analytic")
    assert len(a.decode().splitlines()) == 4  # header + grid points 0, 0.5, 1


def test_sweep_variance_limited(tmp_path):
    code = run_cli(
        [
            "sweep",
            "variance-limited",
            "--grid",
            "0:0.4:0.2",
            "--n",
            "30",
            "--k-clients",
            "4",
            "--seed",
            "1",
            "--out",
            tmp_path / "v.csv",
        ]
    )
    assert code == 0
    lines = (tmp_path / "v.csv").read_text().splitlines()
    assert lines[0] == "var,fid_avg,fid_all,kid_avg,kid_all"
    assert len(lines) == 4


def test_simulate_round_scenario(tmp_path, capsys):
    scenario = {
        "name": "demo",
        "kind": "round",
        "mode": "moments",
        "metrics": ["fid_avg", "fid_all"],
        "seed": 5,
        "clients": [
            {"id": "c1", "mean": [0.0, 0.0], "cov": 1.0, "n": 20},
            {"id": "c2", "mean": [3.0, 0.0], "cov": 1.0, "n": 20},
        ],
        "generators": [
            {"id": "g1", "kind": "gaussian", "mean": [1.5, 0.0], "cov": 1.0, "n": 30}
        ],
    }
    (tmp_path / "s.json").write_text(json.dumps(scenario))
    code = run_cli(
        [
            "simulate",
            "--scenario",
            tmp_path / "s.json",
            "--out-csv",
            tmp_path / "rows.csv",
            "--out-trace",
            tmp_path / "trace.json",
        ]
    )
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["rows"][0]["generator"] == "g1"
    trace = json.loads((tmp_path / "trace.json").read_text())
    assert trace["messages"][0]["kind"] == "GenRefBroadcast"
    assert trace["total_payload_bytes"] > 0


def test_simulate_collapse_scenario(tmp_path, capsys):
    from fedeval import default_collapse_scenario

    scenario = default_collapse_scenario(seed=0).to_json_dict()
    (tmp_path / "s.json").write_text(json.dumps(scenario))
    code = run_cli(["simulate", "--scenario", tmp_path / "s.json"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["detections"]["kid_avg"] is True
    assert out["detections"]["fid_avg"] is False


def test_rank_subcommand(tmp_path, capsys):
    (tmp_path / "a.json").write_text(json.dumps({"g1": 195.04, "g2": 195.37}))
    (tmp_path / "b.json").write_text(json.dumps({"g1": 100.49, "g2": 190.93}))
    assert run_cli(["rank", "--table-a", tmp_path / "a.json", "--table-b", tmp_path / "b.json"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kendall_tau"] == 1.0
    assert out["argmin_a"] == "g1"


def test_json_outputs_byte_identical_on_rerun(workspace, tmp_path):
    tmp, _ = workspace
    out_a = tmp_path / "a.json"
    out_b = tmp_path / "b.json"
    base = ["kid", "--clients", tmp / "clients.json", "--gen", tmp / "gen.fevb", "--agg", "both"]
    assert run_cli(base + ["--out", out_a]) == 0
    assert run_cli(base + ["--out", out_b]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_unknown_flag_exit_1(workspace, capsys):
    tmp, _ = workspace
    assert run_cli(["fid", "--clients", tmp / "clients.json", "--gen", tmp / "gen.fevb", "--frobnicate"]) == 1


def test_unknown_subcommand_exit_1(capsys):
    assert run_cli(["warp"]) == 1


def test_missing_file_exit_1(tmp_path, capsys):
    assert run_cli(["stats", "--input", tmp_path / "missing.fevb"]) == 1


def test_usage_error_without_inputs(capsys):
    assert run_cli(["stats"]) == 1
    assert "stats needs" in capsys.readouterr().err


def test_parse_grid_inclusive_endpoints():
    grid = parse_grid("0:4:0.1")
    assert len(grid) == 41
    assert grid[0] == 0.0
    assert grid[-1] == pytest.approx(4.0, abs=1e-9)
    with pytest.raises(ValueError):
        parse_grid("0:4")
    with pytest.raises(ValueError):
        parse_grid("0:4:-1")


def test_every_operation_mapped_to_exactly_one_subcommand():
    import importlib

    parser = build_parser()
    subcommands = {
        a.dest: a.choices for a in parser._actions if hasattr(a, "choices") and a.choices
    }["command"]
    seen = {}
    for op, sub in OPERATION_SUBCOMMANDS.items():
        assert sub in subcommands, f"{op} mapped to unknown subcommand {sub}"
        module_name, func_name = op.split(".")
        module = importlib.import_module(f"fedeval.{module_name}")
        assert callable(getattr(module, func_name)), f"{op} does not resolve"
        assert op not in seen
        seen[op] = sub
    # the registry covers the complete public operation surface
    assert len(OPERATION_SUBCOMMANDS) == 25
