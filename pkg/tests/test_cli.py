"""End-to-end command-line checks against temporary directories."""

import json
import math

import numpy as np
import pytest

from hiersim.cli import (
    DEFAULT_EPSILONS,
    DEFAULT_SIZES,
    EXIT_CONFIG,
    EXIT_OK,
    _fmt,
    _parse_epsilons,
    _parse_sizes,
    main,
)


def write_config(tmp_path, name="config.json", **overrides):
    data = {"seed": 11, "n_agents": 6, "rounds": 5}
    data.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


# ---------------------------------------------------------------------------
# helpers


def test_fmt_and_parsers():
    assert _fmt(0.123456789123) == "0.123456789"
    assert _fmt(3) == "3"
    assert _fmt(True) == "True"
    assert _fmt("flat") == "flat"
    assert _parse_sizes("64, 128,") == [64, 128]
    assert _parse_epsilons("0.5,inf,1") == [0.5, math.inf, 1.0]
    assert _parse_epsilons("Infinity") == [math.inf]
    assert DEFAULT_SIZES.startswith("64") and DEFAULT_EPSILONS.endswith("inf")


# ---------------------------------------------------------------------------
# error handling


def test_missing_config_exits_2_without_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(out)])
    assert code == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err
    assert not out.exists()


def test_invalid_json_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_validate_names_bad_field(tmp_path, capsys):
    ok = write_config(tmp_path)
    assert main(["validate", "--config", ok]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "ok"

    bad_theta = write_config(tmp_path, name="t.json", weights={"theta": None})
    assert main(["validate", "--config", bad_theta]) == EXIT_CONFIG
    assert "weights.theta" in capsys.readouterr().err

    bad_eps = write_config(tmp_path, name="e.json", privacy={"epsilon_per_event": -1.0})
    assert main(["validate", "--config", bad_eps]) == EXIT_CONFIG
    assert "privacy.epsilon_per_event" in capsys.readouterr().err


def test_bad_sizes_and_epsilons_exit_2(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = str(tmp_path / "o")
    assert main(["scaling", "--config", cfg, "--out", out, "--sizes", "foo"]) == EXIT_CONFIG
    assert main(["scaling", "--config", cfg, "--out", out, "--sizes", "1,4"]) == EXIT_CONFIG
    assert main(["privacy-sweep", "--config", cfg, "--out", out, "--epsilons", "x"]) == EXIT_CONFIG
    assert main(["adapt", "--config", cfg, "--out", out, "--routers", "mesh"]) == EXIT_CONFIG
    capsys.readouterr()


# ---------------------------------------------------------------------------
# run


def test_run_writes_artifacts_and_is_byte_stable(tmp_path):
    cfg = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(out_a)]) == EXIT_OK
    assert main(["run", "--config", cfg, "--out", str(out_b)]) == EXIT_OK

    for name in ("metrics.csv", "ledger.csv", "meta.json"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    header = (out_a / "metrics.csv").read_text().splitlines()[0].split(",")
    assert header == [
        "round", "tasks_released", "subtasks_created", "completed", "succeeded",
        "failed", "abandoned", "completion_rate", "mean_task_loss",
        "cluster_count", "messages", "latency_sum",
    ]
    assert len((out_a / "metrics.csv").read_text().splitlines()) == 1 + 5  # header + rounds

    meta = json.loads((out_a / "meta.json").read_text())
    assert meta["command"] == "run" and meta["seed"] == 11
    assert meta["outputs"] == ["ledger.csv", "meta.json", "metrics.csv"]
    assert 0.0 <= meta["summary"]["completion_rate"] <= 1.0
    assert meta["config"]["n_agents"] == 6


def test_run_seed_override(tmp_path):
    cfg = write_config(tmp_path)
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", cfg, "--out", str(out_a)])
    main(["run", "--config", cfg, "--out", str(out_b), "--seed-override", "99"])
    meta_b = json.loads((out_b / "meta.json").read_text())
    assert meta_b["seed"] == 99 and meta_b["config"]["seed"] == 99
    assert (out_a / "metrics.csv").read_bytes() != (out_b / "metrics.csv").read_bytes()


# ---------------------------------------------------------------------------
# scaling


def test_scaling_csv_and_refitted_slopes(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "s"
    assert main(["scaling", "--config", cfg, "--out", str(out), "--sizes", "8,4"]) == EXIT_OK

    lines = (out / "scaling.csv").read_text().splitlines()
    assert lines[0] == "router,n,messages_total,messages_intra,messages_inter"
    rows = [line.split(",") for line in lines[1:]]
    assert [(r[0], r[1]) for r in rows] == [
        ("hierarchical", "4"), ("hierarchical", "8"),
        ("flat", "4"), ("flat", "8"),
        ("centralized", "4"), ("centralized", "8"),
    ]

    # the published slopes must be recomputable from the CSV alone
    slopes = json.loads((out / "slopes.json").read_text())
    for router in ("hierarchical", "flat", "centralized"):
        sub = [r for r in rows if r[0] == router]
        x = np.log([float(r[1]) for r in sub])
        y = np.log([float(r[2]) for r in sub])
        refit = float(np.polyfit(x, y, 1)[0])
        assert abs(refit - slopes[router]["slope"]) < 1e-9

    meta = json.loads((out / "meta.json").read_text())
    assert meta["sizes"] == [4, 8]


def test_scaling_parallel_matches_serial_bytes(tmp_path):
    cfg = write_config(tmp_path)
    out1, out2 = tmp_path / "j1", tmp_path / "j2"
    assert main(["scaling", "--config", cfg, "--out", str(out1), "--sizes", "4,8", "--jobs", "1"]) == EXIT_OK
    assert main(["scaling", "--config", cfg, "--out", str(out2), "--sizes", "4,8", "--jobs", "2"]) == EXIT_OK
    assert (out1 / "scaling.csv").read_bytes() == (out2 / "scaling.csv").read_bytes()
    assert (out1 / "slopes.json").read_bytes() == (out2 / "slopes.json").read_bytes()


# ---------------------------------------------------------------------------
# privacy sweep


def test_privacy_sweep_rows_ascending_inf_last(tmp_path):
    cfg = write_config(tmp_path, rounds=10, knowledge_period=2)
    out = tmp_path / "p"
    code = main(["privacy-sweep", "--config", cfg, "--out", str(out),
                 "--epsilons", "1,0.5,inf"])
    assert code == EXIT_OK
    lines = (out / "privacy.csv").read_text().splitlines()
    assert lines[0] == "epsilon,delta,completion_rate,mean_task_loss,epsilon_spent_mean"
    eps = [line.split(",")[0] for line in lines[1:]]
    assert eps == ["0.5", "1", "inf"]
    # the infinite-epsilon control tracks no budget
    assert lines[3].split(",")[4] == "0"
    meta = json.loads((out / "meta.json").read_text())
    assert meta["epsilons"] == ["0.5", "1", "inf"]


# ---------------------------------------------------------------------------
# adapt


def test_adapt_writes_sorted_rows(tmp_path):
    cfg = write_config(tmp_path, rounds=8, domain_shift_round=4, n_agents=8)
    out = tmp_path / "ad"
    code = main(["adapt", "--config", cfg, "--out", str(out),
                 "--routers", "random,hierarchical"])
    assert code == EXIT_OK
    lines = (out / "adapt.csv").read_text().splitlines()
    assert lines[0] == "router,recovery_rounds,pre_shift_rate,completion_rate"
    assert [line.split(",")[0] for line in lines[1:]] == ["hierarchical", "random"]
    meta = json.loads((out / "meta.json").read_text())
    assert meta["shift_round"] == 4


def test_adapt_requires_shift_round(tmp_path, capsys):
    cfg = write_config(tmp_path)  # no domain_shift_round: recovery is trivially 0
    out = tmp_path / "ad"
    assert main(["adapt", "--config", cfg, "--out", str(out)]) == EXIT_OK
    lines = (out / "adapt.csv").read_text().splitlines()
    assert all(line.split(",")[1] == "0" for line in lines[1:])
    meta = json.loads((out / "meta.json").read_text())
    assert meta["shift_round"] is None
