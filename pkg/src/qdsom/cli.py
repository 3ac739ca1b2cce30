"""Command-line front end: ``qdsom run | batch | sweep``.

Every command writes plain CSV series plus a JSON summary; see the README
for the file schemas. Exit status: 0 success, 1 runtime failure, 2 invalid
arguments or configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, IngestionError, InvalidInputError, QdsomError
from .grid_env import load_config
from .harness import ALGORITHMS, MODES, PARAMETERS, SIZES, build_scenario, parse_parameter, run
from .rewards import RewardKind

log = logging.getLogger("qdsom")

OUTPUT_ENV_VAR = "QDSOM_OUTPUT_DIR"
DEFAULT_OUTPUT = "qdsom-runs"

GLOBAL_CSV = "global_rewards.csv"
AGENT_CSV = "agent_rewards.csv"
SUMMARY_JSON = "summary.json"
AGGREGATE_JSON = "aggregate.json"
SWEEP_CSV = "sweep.csv"


class UsageError(Exception):
    """Maps to exit status 2."""


# -- file io ------------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _fmt(x) -> str:
    return repr(float(x))


def write_run(out_dir: Path, result) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "global_reward"])
    w.writerows((t, _fmt(g)) for t, g in enumerate(result.global_rewards))
    _atomic_write(out_dir / GLOBAL_CSV, buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "agent_id", "reward"])
    for t, row in enumerate(result.agent_rewards):
        w.writerows((t, i, _fmt(r)) for i, r in enumerate(row))
    _atomic_write(out_dir / AGENT_CSV, buf.getvalue())

    summary = {
        "spec": result.metadata["spec"],
        "seed": result.metadata["seed"],
        "score": result.score,
        "warnings": result.metadata["warnings"],
        "wall_time": result.metadata["wall_time"],
    }
    _atomic_write(out_dir / SUMMARY_JSON, json.dumps(summary, indent=2) + "\n")


def read_global_rewards(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    steps = [int(r["step"]) for r in rows]
    if steps != list(range(len(rows))):
        raise InvalidInputError(f"{path}: steps are not 0..n-1")
    return np.array([float(r["global_reward"]) for r in rows])


def read_agent_rewards(path) -> np.ndarray:
    """(steps, n_agents) matrix from an ``agent_rewards.csv`` file."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(int(r["step"]), int(r["agent_id"]), float(r["reward"])) for r in csv.DictReader(fh)]
    if not rows:
        return np.zeros((0, 0))
    steps = max(r[0] for r in rows) + 1
    agents = max(r[1] for r in rows) + 1
    out = np.full((steps, agents), np.nan)
    for t, i, v in rows:
        out[t, i] = v
    return out


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def read_sweep(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for key in ("rank", "n_seeds"):
            r[key] = int(r[key])
        for key in ("mean_score", "min_score", "max_score"):
            r[key] = float(r[key])
    return rows


# -- argument handling --------------------------------------------------------


def _parse_set(items) -> dict:
    overrides = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in PARAMETERS:
            raise UsageError(f"unknown parameter {key!r}; known: {', '.join(sorted(PARAMETERS))}")
        overrides[key] = value.strip()
    return overrides


def _parse_grid(items) -> dict:
    grid = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--grid expects name=v1,v2,..., got {item!r}")
        key, values = item.split("=", 1)
        key = key.strip()
        if key not in PARAMETERS:
            raise UsageError(f"unknown parameter {key!r}; known: {', '.join(sorted(PARAMETERS))}")
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise UsageError(f"--grid {key} has no values")
        for v in vals:
            parse_parameter(key, v)
        grid[key] = vals
    if not grid:
        raise UsageError("sweep needs a nonempty --grid")
    return grid


def _seeds(args) -> list[int]:
    if args.seeds:
        seeds = list(args.seeds)
    else:
        seeds = list(range(args.first_seed, args.first_seed + args.n_seeds))
    if not seeds:
        raise UsageError("at least one seed is required")
    if any(s < 0 for s in seeds):
        raise UsageError("seeds must be nonnegative")
    return seeds


def _output_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_ENV_VAR) or DEFAULT_OUTPUT)


def _job(payload):
    """Run one (scenario, seed) and write its files; executed in worker processes too."""
    scenario, seed, overrides, out_dir, env_config_path, check = payload
    env_config = load_config(env_config_path) if env_config_path else None
    spec = build_scenario(*scenario, seed=seed, steps=overrides.pop("__steps"), overrides=overrides,
                          env_config=env_config)
    result = run(spec, check_invariants=check)
    write_run(Path(out_dir), result)
    return seed, result.score


def _run_jobs(payloads, jobs: int):
    if jobs <= 1 or len(payloads) <= 1:
        return [_job(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_job, payloads))


def _payload(args, seed, overrides, out_dir):
    overrides = dict(overrides)
    overrides["__steps"] = args.steps
    return ((args.mode, args.size, args.reward, args.algo), seed, overrides, str(out_dir),
            args.env_config, args.check_invariants)


def _aggregate(pairs) -> dict:
    scores = [s for _, s in pairs]
    return {
        "scores": [{"seed": seed, "score": s} for seed, s in pairs],
        "mean": float(np.mean(scores)),
        "min": float(np.min(scores)),
        "max": float(np.max(scores)),
        "n_seeds": len(scores),
    }


def cmd_run(args) -> int:
    overrides = _parse_set(args.set)
    out = _output_dir(args)
    _, s = _job(_payload(args, args.seed, overrides, out))
    print(f"score {s:.6f} -> {out}")
    return 0


def cmd_batch(args) -> int:
    overrides = _parse_set(args.set)
    seeds = _seeds(args)
    out = _output_dir(args)
    payloads = [_payload(args, seed, overrides, out / f"seed_{i:03d}_{seed}") for i, seed in enumerate(seeds)]
    pairs = _run_jobs(payloads, args.jobs)
    agg = _aggregate(pairs)
    _atomic_write(out / AGGREGATE_JSON, json.dumps(agg, indent=2) + "\n")
    print(f"mean score {agg['mean']:.6f} over {len(seeds)} seeds -> {out}")
    return 0


def cmd_sweep(args) -> int:
    base = _parse_set(args.set)
    grid = _parse_grid(args.grid)
    seeds = _seeds(args)
    out = _output_dir(args)
    names = list(grid)
    combos = list(itertools.product(*(grid[n] for n in names)))
    payloads = []
    for k, combo in enumerate(combos):
        overrides = {**base, **dict(zip(names, combo))}
        for i, seed in enumerate(seeds):
            payloads.append(_payload(args, seed, overrides, out / f"combo_{k:03d}" / f"seed_{i:03d}_{seed}"))
    results = _run_jobs(payloads, args.jobs)

    rows = []
    for k, combo in enumerate(combos):
        chunk = results[k * len(seeds):(k + 1) * len(seeds)]
        scores = [s for _, s in chunk]
        rows.append({"combo": k, **dict(zip(names, combo)), "mean_score": float(np.mean(scores)),
                     "min_score": float(np.min(scores)), "max_score": float(np.max(scores)),
                     "n_seeds": len(scores)})
    rows.sort(key=lambda r: (-r["mean_score"], r["combo"]))

    buf = io.StringIO()
    fields = ["rank", "combo", *names, "mean_score", "min_score", "max_score", "n_seeds"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for rank, row in enumerate(rows, start=1):
        w.writerow({**row, "rank": rank, **{k: _fmt(row[k]) for k in ("mean_score", "min_score", "max_score")}})
    _atomic_write(out / SWEEP_CSV, buf.getvalue())
    best = rows[0]
    print(f"best mean score {best['mean_score']:.6f} with " + ", ".join(f"{n}={best[n]}" for n in names))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdsom", description="QSOM / QDSOM smart-grid experiments")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--mode", choices=MODES, default="annual")
        p.add_argument("--size", choices=tuple(SIZES), default="small")
        p.add_argument("--reward", choices=[k.value for k in RewardKind], default="adaptability2")
        p.add_argument("--algo", choices=ALGORITHMS, default="qsom")
        p.add_argument("--steps", type=int, default=10_000)
        p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV_VAR} or ./{DEFAULT_OUTPUT})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a hyperparameter or environment constant; repeatable")
        p.add_argument("--env-config", help="JSON environment config (roster, prices, scarcity)")
        p.add_argument("--check-invariants", action="store_true",
                       help="validate every environment step (slower)")

    def seeded(p):
        p.add_argument("--seeds", type=int, nargs="+")
        p.add_argument("--n-seeds", type=int, default=10)
        p.add_argument("--first-seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p_run = sub.add_parser("run", help="single seeded run")
    common(p_run)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.set_defaults(func=cmd_run)

    p_batch = sub.add_parser("batch", help="same scenario over several seeds")
    common(p_batch)
    seeded(p_batch)
    p_batch.set_defaults(func=cmd_batch)

    p_sweep = sub.add_parser("sweep", help="grid search over hyperparameters")
    common(p_sweep)
    seeded(p_sweep)
    p_sweep.add_argument("--grid", action="append", metavar="NAME=V1,V2",
                         help="values to try for one parameter; repeatable")
    p_sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.steps < 0:
        parser.error("--steps must be nonnegative")
    if getattr(args, "seed", 0) < 0:
        parser.error("--seed must be nonnegative")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError, IngestionError) as exc:
        print(f"qdsom: error: {exc}", file=sys.stderr)
        return 2
    except QdsomError as exc:
        print(f"qdsom: run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
