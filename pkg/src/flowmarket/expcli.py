"""Seeded experiment harness: instance generation, runners, CSV/JSON output and CLI.

Usage::

    flowmarket exp 1 --seed 7 --out runs/exp1
    flowmarket exp 3 --out runs/exp3 --config my.json

The seed falls back to ``$FLOWMARKET_SEED`` and then to the config value.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .agents import MarketInstance, lq_instance
from .equilibria import (EquilibriumSolution, equal_price_check, solve_standard_swe,
                         solve_swe, verify_ce)
from .flownet import generate_er, star_graph
from .shaping import ParamBox, sstar_membership, validate_equal_prices

AGENT_COLUMNS = ["agent_id", "a", "theta1", "theta2", "x_swe", "e_swe", "lambda", "q"]
STANDARD_COLUMNS = ["x_sd", "e_sd", "lambda_sd"]
SUMMARY_COLUMNS = ["gamma", "q_inf_norm", "e_l1_norm", "max_xi", "solve_ms"]
TRIAL_COLUMNS = ["trial", "agent_id", "theta1", "theta2", "lambda"]


@dataclass
class ExperimentConfig:
    experiment: int
    seed: int = 0
    n: int = 20
    edges: int = 30
    cap_range: tuple[float, float] = (0.0, 2.0)
    gammas: tuple[float, ...] = (0.01, 0.1, 0.5, 1.0, 10.0)
    a_range: tuple[float, float] = (0.0, 5.0)
    theta1_range: tuple[float, float] = (0.5, 0.6)
    theta2_range: tuple[float, float] = (18.0, 20.0)
    big_capacity: float = 1e6
    star_n: int = 5
    star_u: float = 15.0
    star_a: float = 25.0
    box: tuple[float, float, float, float] = (0.5, 0.6, 18.0, 20.0)
    trials: int = 100
    tol: float = 1e-6
    solver_tol: float = 1e-8
    out: str | None = None

    def __post_init__(self):
        for name in ("cap_range", "a_range", "theta1_range", "theta2_range", "gammas", "box"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        self.validate()

    def validate(self):
        if self.experiment not in (1, 2, 3, 4):
            raise ValueError(f"unknown experiment {self.experiment}")
        for name in ("cap_range", "a_range", "theta1_range", "theta2_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is not a valid interval: {(lo, hi)}")
        if self.cap_range[0] < 0 or self.cap_range[1] <= 0:
            raise ValueError("capacities must be drawn from a nonnegative interval with positive top")
        if not self.theta1_range[0] > 0:
            raise ValueError("theta1 must stay positive")
        if self.experiment == 3 and (not self.gammas or min(self.gammas) <= 0):
            raise ValueError("experiment 3 needs a nonempty list of positive gammas")
        if self.experiment == 4:
            ParamBox(*self.box)
        if self.trials < 0:
            raise ValueError("trials must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict, **overrides) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged = {**d, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**merged)


def load_config(path, experiment: int) -> ExperimentConfig:
    with open(path) as fh:
        d = json.load(fh)
    d["experiment"] = experiment
    return ExperimentConfig.from_dict(d)


def _streams(seed):
    net_ss, agent_ss = np.random.SeedSequence(int(seed)).spawn(2)
    return net_ss, np.random.default_rng(agent_ss)


def experiment_instance(cfg: ExperimentConfig, seed=None, gamma: float | None = None) -> MarketInstance:
    """Random ER market with the configured parameter ranges.

    The graph and a base capacity draw depend only on the seed. Experiment 2
    replaces every capacity by ``big_capacity``; passing ``gamma`` draws the
    base from U[0, 1] and scales it, so one seed gives one network across a
    gamma sweep.
    """
    seed = cfg.seed if seed is None else seed
    net_ss, rng = _streams(seed)
    lo, hi = (0.0, 1.0) if gamma is not None else cfg.cap_range
    net = generate_er(cfg.n, cfg.edges, lo, hi, net_ss)
    if gamma is not None:
        net = net.with_capacities(gamma * net.u)
    elif cfg.experiment == 2:
        net = net.with_capacities(np.full(net.m, cfg.big_capacity))
    a = rng.uniform(*cfg.a_range, size=cfg.n)
    t1 = rng.uniform(*cfg.theta1_range, size=cfg.n)
    t2 = rng.uniform(*cfg.theta2_range, size=cfg.n)
    return lq_instance(net, a, t1, t2)


@dataclass
class RunRecord:
    config: dict
    instance: MarketInstance | None = None
    solution: EquilibriumSolution | None = None
    standard: dict | None = None
    metrics: dict = field(default_factory=dict)
    rows: list[dict] = field(default_factory=list)
    summary: dict | None = None
    extra: dict = field(default_factory=dict)
    wall_time: float = 0.0
    errors: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def _agent_rows(inst: MarketInstance, sol: EquilibriumSolution, std=None) -> list[dict]:
    rows = []
    for i in range(inst.n):
        r = {"agent_id": i + 1, "a": inst.a[i], "theta1": inst.theta1[i],
             "theta2": inst.theta2[i], "x_swe": sol.x[i], "e_swe": sol.e[i],
             "lambda": sol.lam[i], "q": sol.q[i]}
        if std is not None:
            r.update(x_sd=std.x[i], e_sd=std.e[i], lambda_sd=std.lambda0)
        rows.append(r)
    return rows


def _solution_metrics(inst, sol, tol) -> dict:
    rep = verify_ce(inst, sol, tol)
    return {
        "verify_ce_passed": rep.passed,
        "verify_ce_failed": rep.failed(),
        "residuals": {k: c.residual for k, c in rep.conditions.items()},
        "literal_stationarity": rep.literal_stationarity,
        "price_spread": equal_price_check(sol, tol).max_spread,
        "min_price": float(sol.lam.min()),
        "beta": float(sol.beta),
        "q_inf_norm": float(np.abs(sol.q).max()),
        "e_l1_norm": float(np.abs(sol.e).sum()),
        "max_xi": float(sol.xi.max(initial=0.0)),
        "kkt_worst": float(sol.report.kkt.worst()) if sol.report is not None else None,
    }


def _guarded(rec: RunRecord, fn):
    t0 = time.perf_counter()
    try:
        fn(rec)
    except Exception as exc:  # recorded, surfaced through the exit code
        rec.errors.append(f"{type(exc).__name__}: {exc}")
    rec.wall_time = time.perf_counter() - t0
    return rec


def run_experiment1(cfg: ExperimentConfig) -> RunRecord:
    if cfg.experiment != 1:
        raise ValueError("config is not for experiment 1")

    def body(rec):
        rec.instance = inst = experiment_instance(cfg)
        rec.solution = sol = solve_swe(inst, tol=cfg.solver_tol)
        rec.metrics = _solution_metrics(inst, sol, cfg.tol)
        rec.rows = _agent_rows(inst, sol)
        if not rec.metrics["verify_ce_passed"]:
            rec.errors.append(f"verify_ce failed: {rec.metrics['verify_ce_failed']}")

    return _guarded(RunRecord(cfg.to_dict()), body)


def run_experiment2(cfg: ExperimentConfig) -> RunRecord:
    if cfg.experiment != 2:
        raise ValueError("config is not for experiment 2")

    def body(rec):
        rec.instance = inst = experiment_instance(cfg)
        rec.solution = sol = solve_swe(inst, tol=cfg.solver_tol)
        std = solve_standard_swe(inst, tol=cfg.solver_tol)
        rec.standard = {"x": std.x.tolist(), "e": std.e.tolist(), "lambda0": std.lambda0}
        m = _solution_metrics(inst, sol, cfg.tol)
        m["e_gap_inf"] = float(np.abs(sol.e - std.e).max())
        m["x_gap_inf"] = float(np.abs(sol.x - std.x).max())
        m["lambda_gap_inf"] = float(np.abs(sol.lam - std.lambda0).max())
        m["min_capacity_slack"] = float((inst.network.u - sol.y).min())
        rec.metrics = m
        rec.rows = _agent_rows(inst, sol, std)

    return _guarded(RunRecord(cfg.to_dict()), body)


def _gamma_record(cfg: ExperimentConfig, gamma: float) -> RunRecord:
    def body(rec):
        rec.instance = inst = experiment_instance(cfg, gamma=gamma)
        t0 = time.perf_counter()
        rec.solution = sol = solve_swe(inst, tol=cfg.solver_tol)
        ms = 1e3 * (time.perf_counter() - t0)
        rec.metrics = _solution_metrics(inst, sol, cfg.tol)
        rec.rows = [{"gamma": gamma, **r} for r in _agent_rows(inst, sol)]
        rec.summary = {"gamma": gamma, "q_inf_norm": rec.metrics["q_inf_norm"],
                       "e_l1_norm": rec.metrics["e_l1_norm"],
                       "max_xi": rec.metrics["max_xi"], "solve_ms": ms}

    return _guarded(RunRecord({**cfg.to_dict(), "gamma": gamma}), body)


def run_experiment3(cfg: ExperimentConfig, workers: int | None = None) -> list[RunRecord]:
    if cfg.experiment != 3:
        raise ValueError("config is not for experiment 3")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda g: _gamma_record(cfg, g), cfg.gammas))


def experiment4_instance(cfg: ExperimentConfig) -> MarketInstance:
    net = star_graph(cfg.star_n, cfg.star_u)
    t1, _, t2, _ = cfg.box
    return lq_instance(net, cfg.star_a, t1, t2)


def run_experiment4(cfg: ExperimentConfig) -> RunRecord:
    if cfg.experiment != 4:
        raise ValueError("config is not for experiment 4")

    def body(rec):
        box = ParamBox(*cfg.box)
        rec.instance = tmpl = experiment4_instance(cfg)
        diag = sstar_membership(box, tmpl)
        report = validate_equal_prices(box, tmpl, cfg.trials, cfg.seed, cfg.tol)
        rec.extra = {"sstar": diag.to_dict(), "validation": report.to_dict()}
        rec.metrics = {
            "sstar_verdict": diag.verdict,
            "trials": report.n_trials,
            "n_pass": report.n_pass,
            "fraction_passing": report.fraction_passing,
            "worst_spread": report.worst_spread,
            "min_price": report.min_price,
        }
        rec.rows = [{"trial": t.trial, "agent_id": i + 1, "theta1": t.theta1[i],
                     "theta2": t.theta2[i], "lambda": t.lam[i]}
                    for t in report.trials for i in range(tmpl.n)]
        if report.n_pass != report.n_trials:
            rec.errors.append(f"{report.n_trials - report.n_pass} trials without equal positive prices")

    return _guarded(RunRecord(cfg.to_dict()), body)


RUNNERS = {1: run_experiment1, 2: run_experiment2, 3: run_experiment3, 4: run_experiment4}


def run(cfg: ExperimentConfig) -> list[RunRecord]:
    out = RUNNERS[cfg.experiment](cfg)
    return out if isinstance(out, list) else [out]


# ---------------------------------------------------------------------------
# persistence


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return v


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k, "")) for k in columns})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _write_json(path: Path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _columns(rows: list[dict]) -> list[str]:
    if rows and "trial" in rows[0]:
        return TRIAL_COLUMNS
    cols = list(AGENT_COLUMNS)
    if rows and "gamma" in rows[0]:
        cols = ["gamma"] + cols
    if rows and "x_sd" in rows[0]:
        cols += STANDARD_COLUMNS
    return cols


def emit(records, directory) -> list[Path]:
    """Write config.json, instance.json, solution.json and metrics.csv (plus
    summary.csv for gamma sweeps). Returns the written paths."""
    if isinstance(records, RunRecord):
        records = [records]
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {d}: {exc}") from exc
    single = len(records) == 1
    pick = (lambda xs: xs[0]) if single else (lambda xs: xs)

    cfgs = [r.config for r in records]
    insts = [r.instance.to_dict() if r.instance is not None else None for r in records]
    sols = [{
        "solution": r.solution.to_dict() if r.solution is not None else None,
        "standard": r.standard, "metrics": r.metrics, "tol": r.config.get("tol"),
        "errors": r.errors, "wall_time": r.wall_time, **r.extra,
    } for r in records]
    rows = [row for r in records for row in r.rows]

    paths = [d / "config.json", d / "instance.json", d / "solution.json", d / "metrics.csv"]
    try:
        _write_json(paths[0], pick(cfgs) if records else {})
        _write_json(paths[1], pick(insts) if records else None)
        _write_json(paths[2], pick(sols) if records else None)
        _write_csv(paths[3], _columns(rows), rows)
        summaries = [r.summary for r in records if r.summary is not None]
        if summaries:
            paths.append(d / "summary.csv")
            _write_csv(paths[-1], SUMMARY_COLUMNS, summaries)
    except OSError as exc:
        raise OSError(f"failed writing results under {d}: {exc}") from exc
    return paths


# ---------------------------------------------------------------------------
# command line


def _seed_from_env():
    raw = os.environ.get("FLOWMARKET_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"FLOWMARKET_SEED must be an integer, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flowmarket", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    e = sub.add_parser("exp", help="run one experiment and write its artifacts")
    e.add_argument("id", type=int, choices=sorted(RUNNERS))
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--out", required=True)
    e.add_argument("--config", default=None, help="JSON file overriding the defaults")
    e.add_argument("--trials", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    seed = args.seed if args.seed is not None else _seed_from_env()
    if args.config:
        cfg = load_config(args.config, args.id)
    else:
        cfg = ExperimentConfig(args.id)
    cfg = replace(cfg, out=args.out,
                  **{k: v for k, v in (("seed", seed), ("trials", args.trials)) if v is not None})
    records = run(cfg)
    emit(records, args.out)
    for r in records:
        tag = f"gamma={r.config['gamma']} " if "gamma" in r.config else ""
        keys = ("verify_ce_passed", "price_spread", "q_inf_norm", "e_l1_norm", "e_gap_inf",
                "sstar_verdict", "n_pass", "trials", "worst_spread", "min_price")
        shown = " ".join(f"{k}={_fmt(r.metrics[k]) if isinstance(r.metrics[k], float) else r.metrics[k]}"
                         for k in keys if k in r.metrics)
        print(f"exp {cfg.experiment} {tag}{'ok' if r.ok else 'FAILED'} {shown}")
        for err in r.errors:
            print(f"  error: {err}", file=sys.stderr)
    print(f"artifacts written to {args.out}")
    return 0 if all(r.ok for r in records) else 1


if __name__ == "__main__":
    sys.exit(main())
