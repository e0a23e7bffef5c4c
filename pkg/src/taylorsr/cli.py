"""Command-line front end: end-to-end benchmark runs (train-or-load prior ->
evolve -> score), the mode and Taylor-order ablations, PINN training, and a
single-expression evaluator for debugging.

All artifacts are deterministic given (spec, seed); wall-clock timings are
kept in a separate ``timing.json`` so the scored artifacts stay byte-stable.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import pinn as pinn_mod
from .engine import GpConfig, evolve
from .expr import parse, serialize
from .prior import TaylorPrior, extract_prior, select_anchors, taylor_loss
from .problems import get_problem, mae, phys_loss, registry, sample_collocation


@dataclass
class RunSpec:
    problem: str
    prior_source: str = "analytic"  # analytic | pinn | path to a checkpoint
    reps: int = 10
    seed: int = 0
    jobs: int = 1
    out: Path = Path("out")
    gp: GpConfig = field(default_factory=GpConfig)
    train: pinn_mod.TrainConfig = field(default_factory=pinn_mod.TrainConfig)

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("repetitions must be >= 1")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def build_prior(spec: RunSpec) -> TaylorPrior:
    problem = get_problem(spec.problem)
    rng = np.random.default_rng(spec.seed)
    anchors = select_anchors(problem, spec.gp.n_anchors, rng)
    if spec.prior_source == "analytic":
        if problem.truth is None:
            raise ValueError(f"{problem.name} has no analytic solution to use as oracle")
        return extract_prior(problem.truth, anchors, spec.gp.order, "analytic-oracle")
    if spec.prior_source == "pinn":
        cfg = replace(spec.train, seed=spec.seed)
        result = pinn_mod.train(problem, cfg, np.random.default_rng(cfg.seed))
        return extract_prior(result.model, anchors, spec.gp.order, "pinn")
    model = pinn_mod.Mlp.load(spec.prior_source)
    return extract_prior(model, anchors, spec.gp.order, "pinn")


def _one_rep(args) -> dict:
    """Worker for one repetition; problems are rebuilt by name (not picklable)."""
    problem_name, prior, cfg, out_dir = args
    problem = get_problem(problem_name)
    start = time.perf_counter()
    best, log = evolve(problem, prior, cfg, log_prior=prior)
    wall = time.perf_counter() - start
    record = {
        "seed": cfg.seed,
        "best_expr": serialize(best.expr, problem.time_axis),
        "fitness": best.fitness,
        "phys_loss": best.phys,
        "taylor_loss": best.taylor,
        "complexity": best.complexity,
        "mae": mae(best.expr, problem) if problem.truth is not None else None,
        "final_structure_loss": log[-1]["best_taylor_loss"],
    }
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        _atomic_write(out_dir / "log.jsonl", "\n".join(json.dumps(r) for r in log) + "\n")
        _atomic_write(out_dir / "best.json", json.dumps(record, indent=2))
    record["wall_time"] = wall
    record["log"] = log
    return record


def _run_reps(problem_name: str, prior, base_cfg: GpConfig, spec: RunSpec, out: Optional[Path]):
    tasks = [
        (
            problem_name,
            prior,
            replace(base_cfg, seed=spec.seed + i),
            None if out is None else out / f"run_{i:03d}",
        )
        for i in range(spec.reps)
    ]
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            return list(pool.map(_one_rep, tasks))
    return [_one_rep(t) for t in tasks]


def _summary_stats(records: list[dict]) -> dict:
    maes = [r["mae"] for r in records if r["mae"] is not None]
    return {
        "n_runs": len(records),
        "mean_mae": float(np.mean(maes)) if maes else None,
        "std_mae": float(np.std(maes)) if maes else None,
        "mean_complexity": float(np.mean([r["complexity"] for r in records])),
        "mean_fitness": float(np.mean([r["fitness"] for r in records])),
        "best_mae": float(np.min(maes)) if maes else None,
    }


def _write_summary(out: Path, rows: list[dict], summary: dict, timings: list[float]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "summary.json", json.dumps({"summary": summary, "runs": rows}, indent=2))
    with open(out / "summary.csv.tmp", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    os.replace(out / "summary.csv.tmp", out / "summary.csv")
    _atomic_write(out / "timing.json", json.dumps({"wall_times": timings}))


def run(spec: RunSpec) -> dict:
    """Full pipeline; returns the summary dict and writes CSV/JSON artifacts."""
    prior = build_prior(spec)
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    prior.save(out / "prior.json")
    records = _run_reps(spec.problem, prior, spec.gp, spec, out)
    rows = [{k: v for k, v in r.items() if k not in ("log", "wall_time")} for r in records]
    summary = _summary_stats(records)
    summary["problem"] = spec.problem
    summary["prior_source"] = spec.prior_source
    summary["seed"] = spec.seed
    _write_summary(out, rows, summary, [r["wall_time"] for r in records])
    return {"summary": summary, "runs": records}


MODES = ("vanilla", "physics", "full")


def _mode_config(cfg: GpConfig, mode: str) -> GpConfig:
    if mode == "vanilla":
        return replace(cfg, use_prior=False, lam=0.0, guided=False)
    if mode == "physics":
        return replace(cfg, use_prior=True, lam=0.0, guided=True, beta=1.0)
    if mode == "full":
        return cfg
    raise ValueError(f"unknown mode {mode!r}")


def ablate_modes(spec: RunSpec) -> dict:
    """Vanilla GP vs physics-only GP vs the full engine, on one problem.

    Emits per-mode structure-loss traces normalized by each trace's own
    maximum, so every value lies in [0, 1].
    """
    prior = build_prior(spec)
    out = Path(spec.out)
    traces: dict[str, list[list[float]]] = {}
    finals: dict[str, list[float]] = {}
    for mode in MODES:
        cfg = _mode_config(spec.gp, mode)
        records = _run_reps(spec.problem, prior, cfg, spec, out / mode)
        traces[mode] = []
        finals[mode] = []
        for r in records:
            raw = [g["best_taylor_loss"] for g in r["log"]]
            top = max(max(raw), 1e-300)
            norm = [v / top for v in raw]
            traces[mode].append(norm)
            finals[mode].append(norm[-1])
    report = {
        "problem": spec.problem,
        "median_final_normalized_structure_loss": {
            m: float(np.median(finals[m])) for m in MODES
        },
        "traces": traces,
    }
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "modes.json", json.dumps(report, indent=2))
    with open(out / "modes.csv.tmp", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "run", "generation", "normalized_structure_loss"])
        for mode in MODES:
            for i, trace in enumerate(traces[mode]):
                for gen, v in enumerate(trace):
                    writer.writerow([mode, i, gen, v])
    os.replace(out / "modes.csv.tmp", out / "modes.csv")
    return report


def ablate_k(spec: RunSpec, k_values: list[int]) -> dict:
    """Full pipeline per Taylor order; emits (K, final structure loss, MAE) rows."""
    if any(k < 2 or k > 8 for k in k_values):
        raise ValueError("Taylor orders must lie in [2, 8]")
    out = Path(spec.out)
    rows = []
    for k in k_values:
        k_spec = dataclasses.replace(spec, gp=replace(spec.gp, order=k), out=out / f"K{k}")
        records = run(k_spec)["runs"]
        maes = [r["mae"] for r in records if r["mae"] is not None]
        # a diverged best (non-finite MAE) ranks as worst rather than
        # poisoning the median; the count is reported alongside
        ranked = [m if math.isfinite(m) else math.inf for m in maes]
        finite = [m for m in maes if math.isfinite(m)]
        med = float(np.median(ranked)) if ranked else None
        rows.append(
            {
                "K": k,
                "median_final_structure_loss": float(
                    np.median([r["final_structure_loss"] for r in records])
                ),
                "median_mae": med if med is not None and math.isfinite(med) else None,
                "mean_mae": float(np.mean(finite)) if finite else None,
                "n_diverged": len(maes) - len(finite),
            }
        )
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "order_sweep.json", json.dumps({"rows": rows}, indent=2))
    with open(out / "order_sweep.csv.tmp", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    os.replace(out / "order_sweep.csv.tmp", out / "order_sweep.csv")
    return {"rows": rows}


def train_pinn(problem_name: str, cfg: pinn_mod.TrainConfig, out: Path) -> pinn_mod.TrainResult:
    problem = get_problem(problem_name)
    result = pinn_mod.train(problem, cfg, np.random.default_rng(cfg.seed))
    out.parent.mkdir(parents=True, exist_ok=True)
    result.model.save(out)
    _atomic_write(
        out.with_suffix(".trace.json"), json.dumps({"loss_trace": result.loss_trace})
    )
    return result


def eval_expr(problem_name: str, text: str, prior_file: Optional[Path], seed: int = 0) -> dict:
    problem = get_problem(problem_name)
    e = parse(text, t_axis=problem.time_axis)
    pts = sample_collocation(problem, 512, np.random.default_rng(seed))
    report = {
        "expr": serialize(e, problem.time_axis),
        "complexity": e.size,
        "phys_loss": phys_loss(e, problem, pts),
        "taylor_loss": None,
        "mae": mae(e, problem) if problem.truth is not None else None,
    }
    if prior_file is not None:
        report["taylor_loss"] = taylor_loss(e, TaylorPrior.load(prior_file))
    return report


# -- argument parsing -----------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", required=True, help="benchmark name (see list-problems)")
    p.add_argument("--prior", default="analytic", help="analytic | pinn | checkpoint path")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--population", type=int)
    p.add_argument("--max-generations", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--temperature", type=float)
    p.add_argument("--order", type=int, help="Taylor order K")
    p.add_argument("--anchors", type=int)
    p.add_argument("--collocation", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--no-tuning", action="store_true", help="disable constant tuning")
    p.add_argument("--train-steps", type=int, help="PINN training steps (pinn prior)")


def _spec_from_args(args) -> RunSpec:
    gp = GpConfig(seed=args.seed)
    overrides = {
        "population": args.population,
        "max_generations": args.max_generations,
        "lam": args.lam,
        "beta": args.beta,
        "temperature": args.temperature,
        "order": args.order,
        "n_anchors": args.anchors,
        "n_collocation": args.collocation,
        "patience": args.patience,
    }
    gp = replace(gp, **{k: v for k, v in overrides.items() if v is not None})
    if args.no_tuning:
        gp = replace(gp, tune_constants=False)
    train = pinn_mod.TrainConfig(seed=args.seed)
    if args.train_steps is not None:
        train = replace(train, steps=args.train_steps)
    return RunSpec(
        problem=args.problem,
        prior_source=args.prior,
        reps=args.reps,
        seed=args.seed,
        jobs=args.jobs,
        out=args.out,
        gp=gp,
        train=train,
    )


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="taylorsr", description="Structure-guided symbolic regression for PDEs"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full benchmark: prior -> evolve -> score")
    _add_common(p_run)

    p_k = sub.add_parser("ablate-k", help="sweep the Taylor expansion order")
    _add_common(p_k)
    p_k.add_argument("--k-values", type=int, nargs="+", default=[2, 3, 5, 7])

    p_m = sub.add_parser("ablate-modes", help="vanilla vs physics-only vs full engine")
    _add_common(p_m)

    p_t = sub.add_parser("train-pinn", help="train and checkpoint a network")
    p_t.add_argument("--problem", required=True)
    p_t.add_argument("--seed", type=int, default=0)
    p_t.add_argument("--steps", type=int, default=10000)
    p_t.add_argument("--out", type=Path, default=Path("pinn.json"))

    p_e = sub.add_parser("eval-expr", help="score one expression on a problem")
    p_e.add_argument("expression")
    p_e.add_argument("--problem", required=True)
    p_e.add_argument("--prior-file", type=Path)
    p_e.add_argument("--seed", type=int, default=0)

    sub.add_parser("list-problems", help="print the benchmark registry")

    args = parser.parse_args(argv)
    if args.command == "run":
        result = run(_spec_from_args(args))
        print(json.dumps(result["summary"], indent=2))
    elif args.command == "ablate-k":
        result = ablate_k(_spec_from_args(args), args.k_values)
        print(json.dumps(result, indent=2))
    elif args.command == "ablate-modes":
        result = ablate_modes(_spec_from_args(args))
        print(json.dumps(result["median_final_normalized_structure_loss"], indent=2))
    elif args.command == "train-pinn":
        cfg = pinn_mod.TrainConfig(seed=args.seed, steps=args.steps)
        result = train_pinn(args.problem, cfg, args.out)
        print(f"final loss {result.loss_trace[-1]:.3e} -> {args.out}")
    elif args.command == "eval-expr":
        print(json.dumps(eval_expr(args.problem, args.expression, args.prior_file, args.seed), indent=2))
    elif args.command == "list-problems":
        from .problems import registry_json

        print(registry_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
