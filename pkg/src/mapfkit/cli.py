"""Command-line interface: solve, bench, validate, stats.

Exit codes: 0 solved/valid, 1 solver failure or invalid paths, 2 usage or
parse errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .io import ParseError, make_instance, parse_map, parse_scen, read_solution, write_solution
from .grid import validate_paths
from .runner import (
    RunSpec,
    bench_sweep,
    histogram_csv,
    ordering_histogram,
    parse_ordering_log,
    run_spec,
    sweep_csv,
)


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--map", required=True, help="MovingAI .map file")
    p.add_argument("--scen", required=True, help="MovingAI .scen file")
    p.add_argument("--agents", type=int, required=True)
    p.add_argument("--algo", choices=("pibt", "lacam"), default="pibt")
    p.add_argument("--heuristic", choices=("bd", "manhattan"), default="bd")
    p.add_argument("--noise-K", type=float, default=0.0, dest="noise_k",
                   help="degrade bd tables by K%% (seeded)")
    p.add_argument("--order", choices=("h", "h2", "pi", "tie", "sum"), default="h")
    p.add_argument("--R", type=float, default=0.0, help="O_sum weight")
    p.add_argument("--shield", choices=("naive", "pibt"), default="pibt")
    p.add_argument("--sample", choices=("strict", "sampled"), default="sampled")
    p.add_argument("--policy", default="none",
                   help="none | uniform | softmax:TAU,KAPPA | external:CMD")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timeout", type=float, default=60.0, help="seconds")
    p.add_argument("--max-timesteps", type=int, default=None)


def _spec_from_args(args: argparse.Namespace) -> RunSpec:
    return RunSpec(
        map_path=args.map, scen_path=args.scen, n_agents=args.agents,
        algo=args.algo, ordering=args.order, r=args.R, shield=args.shield,
        sample_mode=args.sample, policy=args.policy, heuristic=args.heuristic,
        noise_k=args.noise_k, seed=args.seed, timeout_s=args.timeout,
        max_timesteps=args.max_timesteps,
        orderings_log=getattr(args, "stats_log", None),
    )


def cmd_solve(args: argparse.Namespace) -> int:
    rec, paths = run_spec(_spec_from_args(args))
    status = "solved" if rec.success else "failed"
    print(f"{status}: algo={rec.algo} agents={rec.n_agents} flowtime={rec.flowtime} "
          f"makespan={rec.makespan} runtime_ms={rec.runtime_ms} hl_nodes={rec.hl_nodes}")
    if args.out and rec.success:
        Path(args.out).write_text(write_solution(paths))
        print(f"wrote {args.out}")
    return 0 if rec.success else 1


def _expand_scens(table: dict, base: Path) -> list[str]:
    if "scens" in table:
        return [str(base / s) if not Path(s).is_absolute() else s for s in table["scens"]]
    if "scen_glob" in table:
        pattern = table["scen_glob"]
        root = base if not Path(pattern).is_absolute() else Path("/")
        found = sorted(str(p) for p in root.glob(pattern.lstrip("/")))
        if not found:
            raise ParseError(f"scen_glob {pattern!r} matched no files")
        return found
    raise ParseError("sweep config needs `scens` or `scen_glob`")


_SPEC_KEYS = {
    "algo", "ordering", "r", "shield", "sample_mode", "policy", "heuristic",
    "noise_k", "timeout_s", "max_timesteps",
}


def load_sweep_config(path: str) -> list[RunSpec]:
    """Expand a sweep TOML file into RunSpecs.

    [defaults] carries map/scens/seeds and any RunSpec field; each [[cells]]
    table overrides them and multiplies over its `agents` list, the scen
    files, and the seeds.
    """
    base = Path(path).resolve().parent
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    defaults = cfg.get("defaults", {})
    cells = cfg.get("cells", [])
    if not cells:
        raise ParseError("sweep config has no [[cells]]")
    specs: list[RunSpec] = []
    for cell in cells:
        merged = {**defaults, **cell}
        if "map" not in merged:
            raise ParseError("sweep config needs `map`")
        map_path = merged["map"]
        if not Path(map_path).is_absolute():
            map_path = str(base / map_path)
        scens = _expand_scens(merged, base)
        seeds = merged.get("seeds", [0])
        agents = merged.get("agents")
        if not agents:
            raise ParseError("each cell needs an `agents` list")
        fields = {k: merged[k] for k in _SPEC_KEYS if k in merged}
        for n in agents:
            for scen in scens:
                for seed in seeds:
                    specs.append(RunSpec(map_path=map_path, scen_path=scen,
                                         n_agents=int(n), seed=int(seed), **fields))
    return specs


def cmd_bench(args: argparse.Namespace) -> int:
    specs = load_sweep_config(args.config)
    print(f"{len(specs)} runs from {args.config}")
    records = bench_sweep(specs, workers=args.workers, progress=True)
    Path(args.out).write_text(sweep_csv(records))
    n_ok = sum(r.success for r in records)
    print(f"wrote {args.out}: {n_ok}/{len(records)} runs succeeded")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    grid = parse_map(Path(args.map).read_text())
    entries = parse_scen(Path(args.scen).read_text())
    inst = make_instance(grid, entries, args.agents)
    paths = read_solution(Path(args.paths).read_text())
    if len(paths) != inst.n_agents:
        print(f"invalid: {len(paths)} paths for {inst.n_agents} agents")
        return 1
    report = validate_paths(paths, inst)
    if report.ok and report.all_at_goal:
        print(f"valid: {inst.n_agents} agents, makespan {len(paths[0]) - 1}")
        return 0
    for t, conflict in report.conflicts[:10]:
        print(f"t={t}: {conflict.kind} agents={conflict.agents} at {conflict.cell}")
    if not report.starts_match:
        print("paths do not start at the scenario starts")
    if not report.all_at_goal:
        missing = [i for i, ok in enumerate(report.goals_reached or []) if not ok]
        print(f"agents not at goal: {missing[:20]}")
    print("invalid")
    return 1


def cmd_stats(args: argparse.Namespace) -> int:
    entries = []
    for path in sorted(Path(args.logs).iterdir()):
        if path.is_file():
            entries.extend(parse_ordering_log(path.read_text()))
    if not entries:
        print(f"no ordering log entries under {args.logs}", file=sys.stderr)
        return 2
    matrices = ordering_histogram(entries)
    Path(args.out).write_text(histogram_csv(matrices))
    print(f"wrote {args.out}: {len(matrices)} matrices from {len(entries)} samples")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mapfkit",
                                     description="Grid MAPF solvers and benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance")
    _add_solver_args(p)
    p.add_argument("--out", help="write the solution here on success")
    p.add_argument("--stats-log", dest="stats_log",
                   help="append conversion orderings to this file (pi runs)")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("bench", help="run a sweep from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("validate", help="validate a solution file")
    p.add_argument("--map", required=True)
    p.add_argument("--scen", required=True)
    p.add_argument("--agents", type=int, required=True)
    p.add_argument("--paths", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("stats", help="ordering histograms from run logs")
    p.add_argument("--logs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
