"""Command line entry point: ``chainalloc {solve,sweep,compare,online,gen}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .baselines import BaselineParams
from .ga import GAParams
from .mao import MAOParams
from .model import InstanceError
from .online import generate_stream, load_stream, save_stream
from .scenario import load_profiles, make_scenario, save_scenario


def _add_ga(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("stage 1 (GA)")
    g.add_argument("--population", type=int, default=16, help="population size P")
    g.add_argument("--ga-iterations", type=int, default=5, help="GA generations Iter_max")
    g.add_argument("--pc", type=float, default=1.0, help="crossover probability")
    g.add_argument("--pm", type=float, default=0.1, help="mutation probability")


def _add_mao(p: argparse.ArgumentParser, iterations: int) -> None:
    g = p.add_argument_group("stage 2 (MAO)")
    g.add_argument("--iterations", "-M", type=int, default=iterations, help="MAO iterations M")
    g.add_argument("--ps", type=float, default=0.15, help="selection probability")
    g.add_argument("--pe", type=float, default=0.15, help="exchange probability")


def _add_baseline(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("baselines (GA, NSGA-II)")
    g.add_argument("--baseline-population", type=int, default=100)
    g.add_argument("--baseline-iterations", type=int, default=5000)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--replications", "-r", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="base seed; replicate r uses seed + r")
    p.add_argument("--out", "-o", type=Path, default=Path("results"), help="results directory")
    p.add_argument("--no-timing", action="store_true", help="leave wall-time fields blank")


def _ga(a) -> GAParams:
    return GAParams(a.population, a.ga_iterations, a.pc, a.pm)


def _mao(a) -> MAOParams:
    return MAOParams(a.iterations, a.ps, a.pe)


def _baseline(a) -> BaselineParams:
    return BaselineParams(a.baseline_population, a.baseline_iterations, a.pc, a.pm)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chainalloc", description="Service-chain placement experiments.")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("solve", help="run one solver on one scenario, with replications")
    p.add_argument("--solver", choices=harness.SOLVERS, default="hmao")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--scenario", type=Path, help="scenario JSON file")
    src.add_argument("--tasks", "-L", type=int, default=8, help="standard tasks (when no scenario file)")
    p.add_argument("--nodes", "-K", type=int, help="standard nodes (default: same as --tasks)")
    _add_common(p)
    _add_ga(p)
    _add_mao(p, 500)
    _add_baseline(p)

    p = sub.add_parser("sweep", help="L16 orthogonal sweep over (p_s, p_e, M)")
    p.add_argument("--tasks", "-L", type=int, nargs="+", default=[8, 16, 24, 32])
    _add_common(p)
    _add_ga(p)

    p = sub.add_parser("compare", help="HMAO against GA and NSGA-II over a range of task counts")
    p.add_argument("--tasks", "-L", type=int, nargs="+", default=list(range(4, 17)))
    p.add_argument("--solvers", nargs="+", choices=harness.SOLVERS, default=["hmao", "ga", "nsga2"])
    _add_common(p)
    _add_ga(p)
    _add_mao(p, 1000)
    _add_baseline(p)

    p = sub.add_parser("online", help="time-slotted stream: HMAO against first-fit greedy")
    p.add_argument("--stream", type=Path, help="event stream file (generated when omitted)")
    p.add_argument("--profiles", type=Path, help="task-profile library for the stream")
    p.add_argument("--slots", type=int, default=30)
    p.add_argument("--level", type=int, default=0, help="arrival level i: counts drawn from {4i+1..4i+9}")
    p.add_argument("--stream-seed", type=int, default=0)
    p.add_argument("--nodes", "-K", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", type=Path, default=Path("results"))
    _add_ga(p)
    _add_mao(p, 1000)

    p = sub.add_parser("gen", help="write a scenario or an event stream file")
    kind = p.add_subparsers(dest="kind", required=True)
    g = kind.add_parser("scenario")
    g.add_argument("--tasks", "-L", type=int, required=True)
    g.add_argument("--nodes", "-K", type=int)
    g.add_argument("--out", "-o", type=Path, required=True)
    g = kind.add_parser("stream")
    g.add_argument("--slots", type=int, default=30)
    g.add_argument("--level", type=int, default=0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", "-o", type=Path, required=True)
    return parser


def _cmd_solve(a) -> None:
    cfg = harness.ExperimentConfig(
        solver=a.solver, scenario=str(a.scenario) if a.scenario else None, tasks=a.tasks, nodes=a.nodes,
        ga=_ga(a), mao=_mao(a), baseline=_baseline(a), replications=a.replications, base_seed=a.seed)
    stats, reports = harness.run_replications(cfg)
    harness.write_replications(a.out, cfg, stats, reports, include_timing=not a.no_timing)
    print(f"{a.solver}: mean z={stats.mean:.4f} min={stats.min:.4f} max={stats.max:.4f} "
          f"std={stats.std:.4f} over {stats.n} runs -> {a.out}")


def _cmd_sweep(a) -> None:
    a.out.mkdir(parents=True, exist_ok=True)
    rows = harness.run_sweep(a.tasks, a.replications, a.seed, _ga(a))
    harness.write_csv(a.out / "sweep.csv", harness.SWEEP_COLUMNS, rows)
    harness.write_csv(a.out / "main_effects.csv", harness.EFFECT_COLUMNS, harness.main_effects(rows))
    print(f"{len(rows)} sweep rows -> {a.out}")


def _cmd_compare(a) -> None:
    a.out.mkdir(parents=True, exist_ok=True)
    rows = harness.run_compare(a.tasks, a.replications, a.seed, _ga(a), _mao(a), _baseline(a), a.solvers,
                               include_timing=not a.no_timing)
    harness.write_csv(a.out / "compare.csv", harness.COMPARE_COLUMNS, rows)
    for r in rows:
        print(f"L={r['L']:>3} {r['solver']:<6} mean z={r['mean']:.4f}")


def _cmd_online(a) -> None:
    a.out.mkdir(parents=True, exist_ok=True)
    if a.stream:
        events = load_stream(a.stream, load_profiles(a.profiles) if a.profiles else None)
    else:
        events = generate_stream(a.slots, np.random.default_rng(a.stream_seed), a.level)
        save_stream(events, a.out / "stream.jsonl")
    rows = harness.run_online_experiment(events, a.nodes, _ga(a), _mao(a), a.seed)
    harness.write_csv(a.out / "online.csv", harness.ONLINE_COLUMNS, rows)
    summary = {}
    for solver in ("hmao", "greedy"):
        sel = [r for r in rows if r["solver"] == solver]
        if sel:
            summary[solver] = {k: float(np.mean([r[k] for r in sel])) for k in ("z", "z1", "z2")}
    print(json.dumps(summary, indent=2, sort_keys=True))


def _cmd_gen(a) -> None:
    a.out.parent.mkdir(parents=True, exist_ok=True)
    if a.kind == "scenario":
        save_scenario(make_scenario(a.tasks, a.nodes or a.tasks), a.out)
    else:
        save_stream(generate_stream(a.slots, np.random.default_rng(a.seed), a.level), a.out)
    print(a.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"solve": _cmd_solve, "sweep": _cmd_sweep, "compare": _cmd_compare,
               "online": _cmd_online, "gen": _cmd_gen}[args.verb]
    try:
        handler(args)
    except (InstanceError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
