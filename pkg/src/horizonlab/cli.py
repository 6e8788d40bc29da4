"""``horizon-lab``: experiment orchestration over the simulation lab.

Subcommands (all take ``--config``, ``--seed``, ``--out``, ``--strict``,
``--no-figures``):

* ``simulate``  -- trajectory pattern distribution vs the exact law
* ``snr``       -- analytic vs Monte Carlo estimator moments over a grid
* ``train``     -- one training run, full trace
* ``compare``   -- several regimes under one trajectory budget
* ``scaling``   -- required batch size across horizons
* ``compose``   -- chained-problem dataset generation
* ``tradeoff``  -- cost/compute feasibility search over length bins

Exit codes: 0 ok, 2 config error, 3 invariant failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import figures
from .chains import (
    ChainError,
    builtin_bank,
    chain_record,
    compose_substitution,
    compose_transformation,
    load_task_bank,
    validate_chain,
)
from .config import ConfigError, config_hash, parse_config
from .model import (
    PolicyParams,
    init_params,
    params_from_probabilities,
    sample_trajectories,
)
from .moments import (
    DegenerateSignalError,
    analytic_moments_dense,
    analytic_moments_terminal,
    empirical_snr,
)
from .reporting import emit_csv, emit_plot_data, write_manifest
from .tradeoff import CostBin, CostModel, tradeoff_search
from .training import compare_regimes, make_schedule, scaling_experiment, train


class InvariantFailure(RuntimeError):
    """An artifact failed its own consistency checks; exit code 3."""


def _stamped(rows: list[dict], columns: list[str], cfg_hash: str):
    """Every CSV row carries the config hash of the run that produced it."""
    return (
        [{**row, "config_hash": cfg_hash} for row in rows],
        columns + ["config_hash"],
    )


def _model_from_config(model_cfg: dict) -> PolicyParams:
    if "q" in model_cfg:
        return params_from_probabilities(model_cfg["q"])
    return init_params(model_cfg["H"], model_cfg["delta"], model_cfg["seed"])


def _pattern_label(reach: int, h: int) -> str:
    bits = ["1"] * min(reach - 1, h) + ["0"] * (h - min(reach - 1, h))
    return "".join(bits)


def cmd_simulate(cfg: dict, outdir: Path, render: bool, strict: bool, cfg_hash: str) -> list[str]:
    params = _model_from_config(cfg["model"])
    h = cfg["horizon"] or params.horizon
    n = cfg["samples"]
    batch = sample_trajectories(params, h, n, cfg["seed"])
    q = params.step_probabilities()[:h]
    rows = []
    counts = np.bincount(np.minimum(batch.reach, h + 1), minlength=h + 2)
    for reach in range(1, h + 2):
        if reach <= h:
            exact = float(np.prod(q[: reach - 1])) * (1.0 - q[reach - 1])
        else:
            exact = float(np.prod(q))
        freq = counts[reach] / n
        se = (exact * (1.0 - exact) / n) ** 0.5
        rows.append(
            {
                "pattern": _pattern_label(reach, h),
                "reach": reach,
                "exact_prob": exact,
                "empirical_freq": freq,
                "abs_err": abs(freq - exact),
                "binom_se": se,
            }
        )
    columns = ["pattern", "reach", "exact_prob", "empirical_freq", "abs_err", "binom_se"]
    stamped, columns = _stamped(rows, columns, cfg_hash)
    emit_csv(stamped, outdir / "patterns.csv", columns)
    emit_plot_data([(r["exact_prob"], r["empirical_freq"]) for r in rows], outdir / "patterns.dat")
    artifacts = ["patterns.csv", "patterns.dat"]
    for r in rows:
        if r["binom_se"] > 0 and r["abs_err"] > 6.0 * r["binom_se"]:
            raise InvariantFailure(
                f"pattern {r['pattern']}: sampled frequency {r['empirical_freq']} is "
                f"{r['abs_err'] / r['binom_se']:.1f} standard errors from {r['exact_prob']}"
            )
    if render:
        artifacts.append(figures.render_simulate(rows, outdir))
    return artifacts


def cmd_snr(cfg: dict, outdir: Path, render: bool, strict: bool, cfg_hash: str) -> list[str]:
    params = _model_from_config(cfg["model"])
    rows = []
    for mode in cfg["modes"]:
        analytic = analytic_moments_terminal if mode == "terminal" else analytic_moments_dense
        for h in cfg["horizons"]:
            blocks = cfg["blocks"] or range(1, h + 1)
            for k in blocks:
                if k > h:
                    continue
                for N in cfg["batch"]:
                    try:
                        ana = analytic(params, h, k, N)
                    except DegenerateSignalError:
                        continue
                    emp = empirical_snr(
                        params, h, k, N, cfg["replicates"], mode=mode, seed=cfg["seed"]
                    )
                    rel = (
                        abs(emp.snr - ana.snr) / ana.snr
                        if not emp.degenerate and ana.snr > 0
                        else None
                    )
                    rows.append(
                        {
                            "mode": mode,
                            "h": h,
                            "k": k,
                            "N": N,
                            "replicates": cfg["replicates"],
                            "analytic_mean": ana.mean_grad,
                            "analytic_variance": ana.variance,
                            "analytic_snr": ana.snr,
                            "empirical_mean": emp.mean_grad,
                            "empirical_variance": emp.variance,
                            "empirical_snr": None if emp.degenerate else emp.snr,
                            "rel_err_snr": rel,
                            "degenerate": emp.degenerate,
                        }
                    )
    columns = [
        "mode", "h", "k", "N", "replicates",
        "analytic_mean", "analytic_variance", "analytic_snr",
        "empirical_mean", "empirical_variance", "empirical_snr",
        "rel_err_snr", "degenerate",
    ]
    stamped, columns = _stamped(rows, columns, cfg_hash)
    emit_csv(stamped, outdir / "snr.csv", columns)
    emit_plot_data(
        [(r["analytic_snr"], r["empirical_snr"]) for r in rows if r["empirical_snr"] is not None],
        outdir / "snr.dat",
    )
    artifacts = ["snr.csv", "snr.dat"]
    if render:
        artifacts.append(figures.render_snr(rows, outdir))
    return artifacts


def _trace_rows(trace, H: int) -> list[dict]:
    rows = []
    for rec in trace.records:
        row = {
            "update": rec.update,
            "event": rec.event,
            "stage": rec.stage,
            "horizon": rec.horizon,
            "atomic_estimate": rec.atomic_estimate,
            "s_H": rec.s_H,
            "trajectories": rec.trajectories,
            "step_tokens": rec.step_tokens,
        }
        for j in range(2, H + 1):
            row[f"est_d{j}"] = rec.block_estimates[j - 2]
        for j in range(1, H + 1):
            row[f"q_{j}"] = rec.q[j - 1]
        rows.append(row)
    return rows


def _trace_columns(H: int) -> list[str]:
    return (
        ["update", "event", "stage", "horizon", "atomic_estimate"]
        + [f"est_d{j}" for j in range(2, H + 1)]
        + [f"q_{j}" for j in range(1, H + 1)]
        + ["s_H", "trajectories", "step_tokens"]
    )


def cmd_train(cfg: dict, outdir: Path, render: bool, strict: bool, cfg_hash: str) -> list[str]:
    params = _model_from_config(cfg["model"])
    schedule = make_schedule(
        cfg["regime"],
        params.horizon,
        cfg["c"],
        N=cfg["N"],
        eta=cfg["eta"],
        max_updates_per_stage=cfg["max_updates_per_stage"],
        min_reach=cfg["min_reach"],
        q_oracle=cfg["q_oracle"],
        baseline=cfg["baseline"],
        freeze_blocks=frozenset(cfg["freeze_blocks"]),
        max_trajectories=cfg["budget_trajectories"],
        max_step_tokens=cfg["budget_step_tokens"],
        seed=cfg["seed"],
    )
    trace = train(params, schedule)
    rows = _trace_rows(trace, params.horizon)
    for rec in trace.records:
        if abs(rec.s_H - float(np.prod(rec.q))) > 1e-12:
            raise InvariantFailure("trace record s_H disagrees with its q snapshot")
    stamped, trace_columns = _stamped(rows, _trace_columns(params.horizon), cfg_hash)
    emit_csv(stamped, outdir / "trace.csv", trace_columns)
    emit_plot_data([(r["update"], r["s_H"]) for r in rows], outdir / "trace.dat")
    artifacts = ["trace.csv", "trace.dat"]
    if render:
        artifacts.append(figures.render_train(rows, params.horizon, outdir))
    print(
        f"train: regime={cfg['regime']} outcome={trace.outcome} "
        f"s_H={rows[-1]['s_H']:.4f} trajectories={trace.trajectories_total}"
    )
    return artifacts


def cmd_compare(cfg: dict, outdir: Path, render: bool, strict: bool, cfg_hash: str) -> list[str]:
    params = _model_from_config(cfg["model"])
    budget = cfg["budget_trajectories"]
    if budget is None:
        raise ConfigError(["budget_trajectories: required for compare"])
    rows = []
    for seed in cfg["seeds"]:
        configs = [
            make_schedule(
                regime,
                params.horizon,
                cfg["c"],
                N=cfg["N"],
                eta=cfg["eta"],
                max_updates_per_stage=cfg["max_updates_per_stage"],
                min_reach=cfg["min_reach"],
                q_oracle=cfg["q_oracle"],
                baseline=cfg["baseline"],
                freeze_blocks=frozenset(cfg["freeze_blocks"]),
                seed=seed,
            )
            for regime in cfg["regimes"]
        ]
        for row in compare_regimes(params, configs, budget):
            if row["trajectories_total"] > budget:
                raise InvariantFailure(
                    f"{row['regime']} consumed {row['trajectories_total']} trajectories "
                    f"over the budget {budget}"
                )
            rows.append(row)
    columns = [
        "regime", "seed", "outcome", "final_s_H",
        "trajectories_to_target", "trajectories_total", "step_tokens_total", "updates",
    ]
    stamped, columns = _stamped(rows, columns, cfg_hash)
    emit_csv(stamped, outdir / "compare.csv", columns)
    artifacts = ["compare.csv"]
    if render:
        artifacts.append(figures.render_compare(rows, outdir))
    return artifacts


def cmd_scaling(cfg: dict, outdir: Path, render: bool, strict: bool, cfg_hash: str) -> list[str]:
    rows = scaling_experiment(
        cfg["H_list"], cfg["regime"], cfg["beta"], cfg["delta"], seed=cfg["seed"]
    )
    columns = ["regime", "H", "h", "k", "s", "q", "snr_at_one", "N_star", "noiseless_gain"]
    stamped, columns = _stamped(rows, columns, cfg_hash)
    emit_csv(stamped, outdir / "scaling.csv", columns)
    emit_plot_data([(r["H"], r["N_star"]) for r in rows], outdir / "scaling.dat")
    artifacts = ["scaling.csv", "scaling.dat"]
    if render:
        artifacts.append(figures.render_scaling(rows, outdir))
    return artifacts


def cmd_compose(cfg: dict, outdir: Path, render: bool, strict: bool, cfg_hash: str) -> list[str]:
    bank_cfg = cfg["bank"]
    if "path" in bank_cfg:
        bank = load_task_bank(bank_cfg["path"])
    else:
        bank = builtin_bank(bank_cfg["builtin"]["size"], bank_cfg["builtin"].get("seed", 0))
    strict_mode = strict or cfg["strict"]
    records = []
    summary = []
    for i in range(cfg["count"]):
        seed = cfg["seed"] * 1_000_003 + i
        if cfg["mode"] == "substitution":
            chain = compose_substitution(bank, cfg["h"], tuple(cfg["adapters"]), seed)
        else:
            chain = compose_transformation(bank, cfg["h"], seed)
        report = validate_chain(chain, strict=strict_mode)
        if not report.ok:
            raise InvariantFailure(
                f"chain {i} failed validation: {report.violations}"
            )
        rec = chain_record(chain)
        records.append(rec)
        summary.append(
            {
                "index": i,
                "mode": rec["mode"],
                "h": rec["h"],
                "final_answer": rec["final_answer"],
                "warnings": len(report.warnings),
                "height": rec["graph_stats"]["height"],
                "width": rec["graph_stats"]["width"],
                "nodes_plus_edges": rec["graph_stats"]["nodes_plus_edges"],
            }
        )
    with open(outdir / "chains.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    columns = ["index", "mode", "h", "final_answer", "warnings", "height", "width", "nodes_plus_edges"]
    stamped, columns = _stamped(summary, columns, cfg_hash)
    emit_csv(stamped, outdir / "compose_summary.csv", columns)
    artifacts = ["chains.jsonl", "compose_summary.csv"]
    if render:
        artifacts.append(figures.render_compose(records, outdir))
    return artifacts


def cmd_tradeoff(cfg: dict, outdir: Path, render: bool, strict: bool, cfg_hash: str) -> list[str]:
    params = _model_from_config(cfg["model"])
    bins = tuple(
        CostBin(length=b["length"], cost=float(b.get("cost", b["length"])))
        for b in cfg["bins"]
    )
    cost_model = CostModel(
        bins=bins, budget_step_tokens=cfg["budget_step_tokens"], target=cfg["target"]
    )
    H = max(b.length for b in bins)
    if params.horizon < H:
        raise ConfigError(["model: horizon must cover the deepest bin length"])
    base = make_schedule(
        "uniform_mix",
        H,
        cfg["target"],
        N=cfg["N"],
        eta=cfg["eta"],
        q_oracle=cfg["q_oracle"],
        baseline=cfg["baseline"],
        max_updates_per_stage=cfg["max_updates_per_stage"],
    )
    report = tradeoff_search(
        params,
        cost_model,
        base,
        n_rays=cfg["rays"],
        tol=cfg["tol"],
        votes=cfg["votes"],
        seed=cfg["seed"],
    )
    k = len(bins)
    point_rows = [
        {
            "ray": ev.ray,
            "t": ev.t,
            **{f"w_{i + 1}": ev.weights[i] for i in range(k)},
            "distribution_cost": ev.distribution_cost,
            "reached_target": ev.reached_target,
            "step_tokens": ev.step_tokens,
            "trajectories": ev.trajectories,
        }
        for ev in report.evaluations
    ]
    point_cols = (
        ["ray", "t"] + [f"w_{i + 1}" for i in range(k)]
        + ["distribution_cost", "reached_target", "step_tokens", "trajectories"]
    )
    stamped_points, point_cols = _stamped(point_rows, point_cols, cfg_hash)
    emit_csv(stamped_points, outdir / "tradeoff_points.csv", point_cols)
    ray_rows = [
        {
            "ray": r.index,
            **{f"d_{i + 1}": r.direction[i] for i in range(k)},
            "t_max": r.t_max,
            "boundary_t": r.boundary_t,
            "boundary_cost": r.boundary.distribution_cost,
            "boundary_step_tokens": r.boundary.step_tokens,
            "boundary_reached": r.boundary.reached_target,
        }
        for r in report.rays
    ]
    ray_cols = (
        ["ray"] + [f"d_{i + 1}" for i in range(k)]
        + ["t_max", "boundary_t", "boundary_cost", "boundary_step_tokens", "boundary_reached"]
    )
    stamped_rays, ray_cols = _stamped(ray_rows, ray_cols, cfg_hash)
    emit_csv(stamped_rays, outdir / "tradeoff_rays.csv", ray_cols)
    feasible = [p for p in point_rows if p["reached_target"]]
    emit_plot_data(
        [(p["distribution_cost"], p["step_tokens"]) for p in feasible],
        outdir / "tradeoff_frontier.dat",
    )
    artifacts = ["tradeoff_points.csv", "tradeoff_rays.csv", "tradeoff_frontier.dat"]
    if not report.origin_feasible:
        print("tradeoff: uniform distribution infeasible under the budget; no rays cast")
    else:
        violations = report.monotonicity_violations()
        if violations > 0.05 * max(len(report.rays), 1):
            raise InvariantFailure(
                f"feasibility not monotone along {violations}/{len(report.rays)} rays"
            )
    if render:
        uniform = next(p for p in point_rows if p["ray"] == -1)
        artifacts.append(figures.render_tradeoff(point_rows, uniform, outdir))
    return artifacts


_COMMANDS = {
    "simulate": cmd_simulate,
    "snr": cmd_snr,
    "train": cmd_train,
    "compare": cmd_compare,
    "scaling": cmd_scaling,
    "compose": cmd_compose,
    "tradeoff": cmd_tradeoff,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="horizon-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="runs", help="output directory")
        p.add_argument("--strict", action="store_true", help="promote warnings to errors")
        p.add_argument(
            "--no-figures", dest="figures", action="store_false",
            help="skip figure rendering",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.command, args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4

    cfg_hash = config_hash(cfg)
    outdir = Path(args.out)
    start = time.monotonic()
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        artifacts = _COMMANDS[args.command](cfg, outdir, args.figures, args.strict, cfg_hash)
        write_manifest(
            outdir / "run_manifest.yaml",
            command=args.command,
            cfg_hash=cfg_hash,
            seed=cfg["seed"],
            artifacts=artifacts,
            wall_time_s=time.monotonic() - start,
        )
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    except (InvariantFailure, ChainError, DegenerateSignalError, ValueError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    print(f"wrote {len(artifacts) + 1} artifacts to {outdir} (config {cfg_hash})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
