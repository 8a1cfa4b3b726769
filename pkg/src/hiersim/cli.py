"""Command-line entry point.

Subcommands: run | scaling | privacy-sweep | adapt | validate. Every command
reads a JSON config (snake_case keys matching the ScenarioConfig fields; all
optional except seed and n_agents) and writes machine-readable CSV/JSON into
--out. Output is fully deterministic: rerunning a command with the same
inputs produces byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 runtime invariant violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from . import __version__
from .harness import (
    ConfigError,
    ScenarioConfig,
    adaptation_experiment,
    config_from_dict,
    privacy_sweep,
    run_episode,
    scaling_experiment,
    validate_config,
)
from .routing import ROUTERS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

DEFAULT_SIZES = "64,128,256,512,1024"
DEFAULT_EPSILONS = "0.1,0.5,1,2,5,inf"


def _fmt(value) -> str:
    """One cell: floats at 9 significant digits, everything else verbatim."""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_config(path: str, seed_override: int | None) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON in {path}: {exc}") from exc
    cfg = config_from_dict(data)
    if seed_override is not None:
        cfg.seed = seed_override
    validate_config(cfg)
    return cfg


def _meta(command: str, cfg: ScenarioConfig, outputs: list[str], **extra) -> dict:
    payload = {
        "artifact_version": __version__,
        "command": command,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "outputs": sorted(outputs),
    }
    payload.update(extra)
    return payload


def _parse_sizes(text: str) -> list[int]:
    try:
        sizes = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError("sizes", f"not an integer list: {text!r}") from exc
    if not sizes:
        raise ConfigError("sizes", "need at least one size")
    return sizes


def _parse_epsilons(text: str) -> list[float]:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if tok.lower() in ("inf", "infinity"):
            out.append(math.inf)
            continue
        try:
            out.append(float(tok))
        except ValueError as exc:
            raise ConfigError("epsilons", f"not a number: {tok!r}") from exc
    if not out:
        raise ConfigError("epsilons", "need at least one epsilon")
    return out


def cmd_run(args) -> int:
    cfg = _load_config(args.config, args.seed_override)
    metrics = run_episode(cfg)
    os.makedirs(args.out, exist_ok=True)
    metric_rows = [
        [
            row.round, row.tasks_released, row.subtasks_created, row.completed,
            row.succeeded, row.failed, row.abandoned, row.completion_rate,
            row.mean_task_loss, row.cluster_count, row.messages, row.latency_sum,
        ]
        for row in metrics.per_round
    ]
    _write_csv(
        os.path.join(args.out, "metrics.csv"),
        [
            "round", "tasks_released", "subtasks_created", "completed", "succeeded",
            "failed", "abandoned", "completion_rate", "mean_task_loss",
            "cluster_count", "messages", "latency_sum",
        ],
        metric_rows,
    )
    _write_csv(
        os.path.join(args.out, "ledger.csv"),
        ["round", "category", "count", "latency_sum"],
        [list(row) for row in metrics.ledger_rows],
    )
    summary = {
        "completion_rate": metrics.completion_rate,
        "unassigned_rate": metrics.unassigned_rate,
        "total_messages": metrics.total_messages,
        "messages_by_category": metrics.messages_by_category,
        "mean_task_latency": metrics.mean_task_latency,
        "epsilon_spent_mean": metrics.epsilon_spent_mean,
        "delta_spent_mean": metrics.delta_spent_mean,
        "final_cluster_count": metrics.final_cluster_count,
    }
    _write_json(
        os.path.join(args.out, "meta.json"),
        _meta("run", cfg, ["metrics.csv", "ledger.csv", "meta.json"], summary=summary),
    )
    return EXIT_OK


def cmd_scaling(args) -> int:
    cfg = _load_config(args.config, args.seed_override)
    sizes = _parse_sizes(args.sizes)
    rows, slopes = scaling_experiment(sizes, cfg, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    _write_csv(
        os.path.join(args.out, "scaling.csv"),
        ["router", "n", "messages_total", "messages_intra", "messages_inter"],
        [
            [row["router"], row["n"], row["messages_total"], row["messages_intra"], row["messages_inter"]]
            for row in rows
        ],
    )
    # full precision here: the fit must be reproducible from scaling.csv to 1e-9
    _write_json(os.path.join(args.out, "slopes.json"), slopes)
    _write_json(
        os.path.join(args.out, "meta.json"),
        _meta("scaling", cfg, ["scaling.csv", "slopes.json", "meta.json"], sizes=sorted(set(sizes))),
    )
    return EXIT_OK


def cmd_privacy_sweep(args) -> int:
    cfg = _load_config(args.config, args.seed_override)
    epsilons = _parse_epsilons(args.epsilons)
    rows = privacy_sweep(epsilons, cfg, jobs=args.jobs)
    os.makedirs(args.out, exist_ok=True)
    _write_csv(
        os.path.join(args.out, "privacy.csv"),
        ["epsilon", "delta", "completion_rate", "mean_task_loss", "epsilon_spent_mean"],
        [
            [row["epsilon"], row["delta"], row["completion_rate"], row["mean_task_loss"], row["epsilon_spent_mean"]]
            for row in rows
        ],
    )
    _write_json(
        os.path.join(args.out, "meta.json"),
        _meta(
            "privacy-sweep", cfg, ["privacy.csv", "meta.json"],
            epsilons=[_fmt(e) for e in sorted(epsilons)],
        ),
    )
    return EXIT_OK


def cmd_adapt(args) -> int:
    cfg = _load_config(args.config, args.seed_override)
    routers = [tok.strip() for tok in args.routers.split(",") if tok.strip()]
    for router in routers:
        if router not in ROUTERS:
            raise ConfigError("routers", f"unknown router {router!r}")
    result = adaptation_experiment(cfg, routers=routers)
    os.makedirs(args.out, exist_ok=True)
    _write_csv(
        os.path.join(args.out, "adapt.csv"),
        ["router", "recovery_rounds", "pre_shift_rate", "completion_rate"],
        [
            [router, res["recovery_rounds"], res["pre_shift_rate"], res["completion_rate"]]
            for router, res in sorted(result["routers"].items())
        ],
    )
    _write_json(
        os.path.join(args.out, "meta.json"),
        _meta("adapt", cfg, ["adapt.csv", "meta.json"], shift_round=result["shift_round"]),
    )
    return EXIT_OK


def cmd_validate(args) -> int:
    _load_config(args.config, args.seed_override)
    print("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiersim",
        description="Deterministic simulator for hierarchical multi-agent coordination",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, needs_out: bool = True):
        p.add_argument("--config", required=True, help="path to JSON scenario config")
        p.add_argument("--seed-override", type=int, default=None, help="replace the config seed")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p_run = sub.add_parser("run", help="run one episode; writes metrics.csv, ledger.csv, meta.json")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_scale = sub.add_parser("scaling", help="message-growth sweep; writes scaling.csv, slopes.json")
    common(p_scale)
    p_scale.add_argument("--sizes", default=DEFAULT_SIZES, help="comma-separated population sizes")
    p_scale.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_scale.set_defaults(func=cmd_scaling)

    p_priv = sub.add_parser("privacy-sweep", help="epsilon sweep; writes privacy.csv")
    common(p_priv)
    p_priv.add_argument(
        "--epsilons", default=DEFAULT_EPSILONS,
        help='comma-separated epsilon grid; "inf" = no-privacy control',
    )
    p_priv.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_priv.set_defaults(func=cmd_privacy_sweep)

    p_adapt = sub.add_parser("adapt", help="domain-shift recovery per router; writes adapt.csv")
    common(p_adapt)
    p_adapt.add_argument(
        "--routers", default=",".join(ROUTERS), help="comma-separated router subset"
    )
    p_adapt.set_defaults(func=cmd_adapt)

    p_val = sub.add_parser("validate", help="check a config without running")
    common(p_val, needs_out=False)
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error — {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError, OverflowError) as exc:
        print(f"config error — {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"invariant violation — {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
