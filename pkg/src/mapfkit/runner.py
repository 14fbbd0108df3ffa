"""Experiment execution: single runs, benchmark sweeps, aggregation, and
ordering diagnostics.

A RunSpec captures one experimental cell (instance selector, algorithm,
shield, ordering objective, policy, heuristic, seed). Policy-guided one-step
runs convert distributions to orderings vectorized (CandidateRanker), which
implements the same strict/sampled conversion as cs_pibt_step.
"""
from __future__ import annotations

import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .grid import Action, GridMap, Instance, PathSet, flowtime, makespan, validate_paths
from .heuristics import HeuristicBank
from .io import RunRecord, make_instance, parse_map, parse_scen
from .lacam import DEFAULT_NODE_CAP, SolveResult, lacam_solve
from .pibt import PIBTEngine, cs_naive_step, initial_priorities
from .policy import (
    CandidateRanker,
    ExternalPolicyHost,
    PolicyProtocolError,
    PolicyProvider,
    RankMode,
    SoftmaxHeuristicPolicy,
    UniformPolicy,
)

# fixed offsets so solver, policy, and noise randomness are individually reproducible
POLICY_SEED_OFFSET = 1_000_003
DEGRADE_SEED_OFFSET = 2_000_003
SOLVER_STREAM = 101

MAX_TIMESTEP_FACTOR = 16  # default one-step cap: 16 * (width + height)


@dataclass(frozen=True)
class RunSpec:
    """One benchmark run: instance selector plus full solver configuration."""

    map_path: str
    scen_path: str
    n_agents: int
    algo: str = "pibt"            # pibt (iterative one-step) | lacam
    ordering: str = "h"           # h | h2 | pi | tie | sum
    r: float = 0.0                # O_sum weight
    shield: str = "pibt"          # pibt | naive (one-step policy runs only)
    sample_mode: str = "sampled"  # strict | sampled (distribution conversion)
    policy: str = "none"          # none | uniform | softmax:TAU,KAPPA | external:CMD
    heuristic: str = "bd"         # bd | manhattan
    noise_k: float = 0.0          # K% degradation of the solver's bd tables
    seed: int = 0
    timeout_s: float = 60.0
    max_timesteps: Optional[int] = None
    node_cap: int = DEFAULT_NODE_CAP
    policy_timeout_s: float = 10.0
    orderings_log: Optional[str] = None  # write conversion orderings here

    def __post_init__(self):
        if self.algo not in ("pibt", "lacam"):
            raise ValueError(f"unknown algo {self.algo!r}")
        if self.ordering not in ("h", "h2", "pi", "tie", "sum"):
            raise ValueError(f"unknown ordering {self.ordering!r}")
        if self.shield not in ("pibt", "naive"):
            raise ValueError(f"unknown shield {self.shield!r}")
        if self.sample_mode not in ("strict", "sampled"):
            raise ValueError(f"unknown sample mode {self.sample_mode!r}")
        if self.heuristic not in ("bd", "manhattan"):
            raise ValueError(f"unknown heuristic {self.heuristic!r}")
        if self.noise_k and self.heuristic != "bd":
            raise ValueError("noise_k degrades bd tables; use heuristic='bd'")
        if not 0 <= self.noise_k <= 100:
            raise ValueError("noise_k must be in [0, 100]")
        kind = self.policy.split(":", 1)[0]
        if kind not in ("none", "uniform", "softmax", "external"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.shield == "naive":
            if kind == "none":
                raise ValueError("shield='naive' consumes policy proposals; set a policy")
            if self.algo != "pibt":
                raise ValueError("collision shields apply to one-step runs only")
        if self.ordering in ("pi", "tie", "sum") and kind == "none":
            raise ValueError(f"ordering {self.ordering!r} requires a policy")

    @property
    def rank_mode(self) -> RankMode:
        return RankMode(self.ordering, self.r if self.ordering == "sum" else 0.0)

    @property
    def policy_kind(self) -> str:
        return self.policy.split(":", 1)[0]


@lru_cache(maxsize=8)
def _load_grid(map_path: str) -> GridMap:
    return parse_map(Path(map_path).read_text())


@lru_cache(maxsize=64)
def _load_entries(scen_path: str):
    return tuple(parse_scen(Path(scen_path).read_text()))


def load_instance(spec: RunSpec) -> Instance:
    grid = _load_grid(spec.map_path)
    return make_instance(grid, list(_load_entries(spec.scen_path)), spec.n_agents)


_banks: dict[tuple, HeuristicBank] = {}


def _bank(map_path: str, kind: str, noise_k: float, noise_seed: int) -> HeuristicBank:
    key = (map_path, kind, float(noise_k), int(noise_seed) if noise_k else 0)
    bank = _banks.get(key)
    if bank is None:
        bank = HeuristicBank(_load_grid(map_path), kind, noise_k, noise_seed)
        _banks[key] = bank
    return bank


def _make_provider(spec: RunSpec, inst: Instance) -> Optional[PolicyProvider]:
    kind, _, arg = spec.policy.partition(":")
    if kind == "none":
        return None
    if kind == "uniform":
        return UniformPolicy(inst.n_agents)
    if kind == "softmax":
        try:
            tau_s, kappa_s = arg.split(",")
            tau, kappa = float(tau_s), float(kappa_s)
        except ValueError:
            raise ValueError(f"softmax policy needs 'softmax:TAU,KAPPA', got {spec.policy!r}") from None
        exact = _bank(spec.map_path, "bd", 0.0, 0)
        tables = [exact.get(g) for g in inst.goals]
        return SoftmaxHeuristicPolicy(inst, tables, tau, kappa, spec.seed + POLICY_SEED_OFFSET)
    if not arg:
        raise ValueError("external policy needs 'external:CMD'")
    return ExternalPolicyHost(arg, inst, spec.seed + POLICY_SEED_OFFSET,
                              timeout_s=spec.policy_timeout_s)


def _base_params(spec: RunSpec) -> dict[str, str]:
    params: dict[str, str] = {"heuristic": spec.heuristic}
    if spec.noise_k:
        params["K"] = f"{spec.noise_k:g}"
        params["noise_seed"] = str(spec.seed + DEGRADE_SEED_OFFSET)
    kind, _, arg = spec.policy.partition(":")
    params["policy"] = kind
    if kind == "softmax":
        tau, kappa = arg.split(",")
        params["tau"] = tau
        params["kappa"] = kappa
    if spec.policy_kind != "none" or spec.ordering == "pi":
        params["sample"] = spec.sample_mode
    if spec.ordering == "sum":
        params["R"] = f"{spec.r:g}"
    return params


def _ranker_for(spec: RunSpec, inst: Instance, provider: Optional[PolicyProvider],
                rng: np.random.Generator) -> tuple[CandidateRanker, np.ndarray]:
    """Build the candidate ranker plus per-agent start distances for priorities."""
    mode = spec.rank_mode
    goals = list(inst.goals)
    starts_flat = np.array([inst.grid.index(c) for c in inst.starts])
    if mode.needs_heuristic:
        bank = _bank(spec.map_path, spec.heuristic, spec.noise_k,
                     spec.seed + DEGRADE_SEED_OFFSET)
        tables = bank.stack(goals)
    else:
        tables = None
    ranker = CandidateRanker(inst.grid, mode, tables=tables, provider=provider,
                             sample_mode=spec.sample_mode, rng=rng)
    if tables is not None:
        start_h = tables[np.arange(inst.n_agents), starts_flat]
    else:
        start_h = _bank(spec.map_path, "bd", 0.0, 0).stack(goals)[
            np.arange(inst.n_agents), starts_flat]
    return ranker, start_h


def _record(spec: RunSpec, success: bool, paths: Optional[PathSet], inst: Instance,
            runtime_ms: int, hl_nodes: int, params: dict[str, str],
            status: str) -> RunRecord:
    goals = list(inst.goals)
    if success:
        report = validate_paths(paths, inst)
        if not report.ok or not report.all_at_goal:
            raise RuntimeError(f"solver reported success but paths are invalid: {report.conflicts[:3]}")
        ft, ms = flowtime(paths, goals), makespan(paths, goals)
    else:
        ft = ms = 0
        params = dict(params, status=status)
    return RunRecord(
        algo=spec.algo, ordering_mode=spec.ordering,
        shield=spec.shield if spec.algo == "pibt" else "none",
        map=Path(spec.map_path).stem, scen=Path(spec.scen_path).stem,
        n_agents=spec.n_agents, seed=spec.seed, success=success,
        flowtime=ft, makespan=ms, runtime_ms=runtime_ms, hl_nodes=hl_nodes,
        params=params,
    )


def run_onestep(spec: RunSpec) -> tuple[RunRecord, PathSet]:
    """Iterative 1-step planning and execution until all agents rest at goals."""
    if spec.algo != "pibt":
        raise ValueError("run_onestep handles algo='pibt' specs")
    start = time.perf_counter()
    inst = load_instance(spec)
    grid = inst.grid
    rng = np.random.default_rng([spec.seed, SOLVER_STREAM])
    params = _base_params(spec)
    max_t = spec.max_timesteps or MAX_TIMESTEP_FACTOR * (grid.width + grid.height)
    params["max_t"] = str(max_t)

    goals_flat = np.array([grid.index(c) for c in inst.goals], dtype=np.int64)
    cfg = np.array([grid.index(c) for c in inst.starts], dtype=np.int64)
    configs = [cfg]
    ordering_rows: list[str] = []
    provider = None
    try:
        provider = _make_provider(spec, inst)
        ranker, start_h = _ranker_for(spec, inst, provider, rng)
        engine = PIBTEngine(grid)
        priorities = initial_priorities(start_h)
        status = "failure_limit"
        deadline = start + spec.timeout_s

        if bool((cfg == goals_flat).all()):
            status = "success"
        else:
            for t in range(max_t):
                if time.perf_counter() > deadline:
                    status = "failure_timeout"
                    break
                if spec.shield == "naive":
                    cells = tuple(grid.cell_at(int(c)) for c in cfg)
                    dists = provider.distributions(t, cells)
                    proposed = [Action(int(a)) for a in np.argmax(dists, axis=1)]
                    step = cs_naive_step(cells, proposed, grid)
                    nxt = [grid.index(c) for c in step.next]
                else:
                    cand = ranker.candidate_arrays(t, cfg)
                    nxt = engine.step(cfg, cand, priorities)
                    if spec.orderings_log and spec.ordering == "pi":
                        at_goal = cfg == goals_flat
                        for flag, perm in zip(at_goal.tolist(), ranker.last_order.tolist()):
                            ordering_rows.append(
                                f"{spec.sample_mode} {int(flag)} "
                                + " ".join(map(str, perm)))
                cfg = np.asarray(nxt, dtype=np.int64)
                configs.append(cfg)
                at_goal = cfg == goals_flat
                priorities = np.where(at_goal, priorities - np.floor(priorities),
                                      priorities + 1.0)
                if bool(at_goal.all()):
                    status = "success"
                    break
    except PolicyProtocolError as exc:
        status = "failure_policy"
        params["error"] = "policy_protocol"
        print(f"policy failure: {exc}", file=sys.stderr)
    finally:
        if provider is not None:
            provider.close()
    if isinstance(provider, ExternalPolicyHost):
        params["policy_ms"] = f"{provider.mean_latency_ms:.3f}"
    if spec.orderings_log and ordering_rows:
        with open(spec.orderings_log, "a") as fh:
            fh.write("\n".join(ordering_rows) + "\n")

    paths = [[grid.cell_at(int(c[i])) for c in configs] for i in range(inst.n_agents)]
    runtime_ms = int(1000 * (time.perf_counter() - start))
    rec = _record(spec, status == "success", paths, inst, runtime_ms, 0, params, status)
    return rec, paths


def run_lacam(spec: RunSpec) -> tuple[RunRecord, PathSet]:
    """Full-horizon LaCAM run with the configured ordering source."""
    if spec.algo != "lacam":
        raise ValueError("run_lacam handles algo='lacam' specs")
    start = time.perf_counter()
    inst = load_instance(spec)
    rng = np.random.default_rng([spec.seed, SOLVER_STREAM])
    params = _base_params(spec)
    provider = None
    try:
        provider = _make_provider(spec, inst)
        ranker, _ = _ranker_for(spec, inst, provider, rng)
        res: SolveResult = lacam_solve(inst, ranker, timeout_s=spec.timeout_s,
                                       node_cap=spec.node_cap)
    except PolicyProtocolError as exc:
        params["error"] = "policy_protocol"
        print(f"policy failure: {exc}", file=sys.stderr)
        res = SolveResult("failure_policy", None)
    finally:
        if provider is not None:
            provider.close()
    if isinstance(provider, ExternalPolicyHost):
        params["policy_ms"] = f"{provider.mean_latency_ms:.3f}"
    params["expanded"] = str(res.hl_nodes_expanded)
    runtime_ms = int(1000 * (time.perf_counter() - start))
    paths = res.paths if res.paths is not None else [[c] for c in inst.starts]
    rec = _record(spec, res.success, paths, inst, runtime_ms,
                  res.hl_nodes_generated, params, res.status)
    return rec, paths


def run_spec(spec: RunSpec) -> tuple[RunRecord, PathSet]:
    return run_lacam(spec) if spec.algo == "lacam" else run_onestep(spec)


def _run_record(spec: RunSpec) -> RunRecord:
    return run_spec(spec)[0]


def bench_sweep(specs: Sequence[RunSpec], workers: int = 1,
                progress: bool = False) -> list[RunRecord]:
    """Execute every spec (optionally across a process pool) in input order."""
    records: list[RunRecord] = []
    if workers <= 1:
        for i, spec in enumerate(specs):
            records.append(_run_record(spec))
            if progress and (i + 1) % 25 == 0:
                print(f"  {i + 1}/{len(specs)} runs done")
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, rec in enumerate(pool.map(_run_record, specs, chunksize=4)):
                records.append(rec)
                if progress and (i + 1) % 25 == 0:
                    print(f"  {i + 1}/{len(specs)} runs done")
    return records


_VOLATILE_PARAMS = ("policy_ms", "expanded", "max_t", "status", "error", "noise_seed")


def _cell_key(rec: RunRecord) -> tuple:
    params = tuple(sorted((k, v) for k, v in rec.params.items()
                          if k not in _VOLATILE_PARAMS))
    return (rec.algo, rec.ordering_mode, rec.shield, rec.map, rec.n_agents, params)


@dataclass
class CellAggregate:
    """Per-cell success rate and the shared-instance mean path cost."""

    algo: str
    ordering_mode: str
    shield: str
    map: str
    n_agents: int
    params: dict[str, str]
    n_runs: int
    success_rate: float
    mean_cost_per_agent: Optional[float]  # None when success < 50% or no common instances
    n_common: int


def aggregate_records(records: Iterable[RunRecord]) -> list[CellAggregate]:
    """Aggregate runs per experimental cell.

    Success rate is the plain mean. Mean path cost per agent follows the
    shared-instance protocol: within each (map, n_agents) group, cells with
    success rate >= 0.5 are compared over the (scen, seed) instances they all
    solved; lower-success cells get no cost.
    """
    cells: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        cells.setdefault(_cell_key(rec), []).append(rec)
    groups: dict[tuple, list[tuple]] = {}
    for key in cells:
        groups.setdefault((key[3], key[4]), []).append(key)
    out = []
    for group_keys in groups.values():
        eligible = {}
        for key in group_keys:
            recs = cells[key]
            rate = sum(r.success for r in recs) / len(recs)
            if rate >= 0.5:
                eligible[key] = {(r.scen, r.seed) for r in recs if r.success}
        common: Optional[set] = None
        for solved in eligible.values():
            common = solved if common is None else common & solved
        for key in group_keys:
            recs = cells[key]
            rate = sum(r.success for r in recs) / len(recs)
            cost = None
            n_common = 0
            if key in eligible and common:
                costs = [r.flowtime / r.n_agents for r in recs
                         if (r.scen, r.seed) in common]
                n_common = len(costs)
                if costs:
                    cost = sum(costs) / len(costs)
            sample = recs[0]
            params = {k: v for k, v in sample.params.items()
                      if k not in _VOLATILE_PARAMS}
            out.append(CellAggregate(
                sample.algo, sample.ordering_mode, sample.shield, sample.map,
                sample.n_agents, params, len(recs), rate, cost, n_common))
    return out


def aggregate_rows(aggs: list[CellAggregate]) -> list[str]:
    """Aggregate CSV rows reusing the run columns (scen=ALL, seed=-1)."""
    from .io import format_params

    rows = []
    for a in aggs:
        params = dict(a.params)
        params["n_runs"] = str(a.n_runs)
        params["n_common"] = str(a.n_common)
        cost = f"{a.mean_cost_per_agent:.3f}" if a.mean_cost_per_agent is not None else "-"
        rows.append(",".join([
            a.algo, a.ordering_mode, a.shield, a.map, "ALL", str(a.n_agents), "-1",
            f"{a.success_rate:.4f}", cost, "-", "-", "-", format_params(params),
        ]))
    return rows


def sweep_csv(records: list[RunRecord]) -> str:
    """Run rows plus one aggregate row per cell, in one table."""
    from .io import write_csv

    text = write_csv(records)
    agg = aggregate_rows(aggregate_records(records))
    if agg:
        text += "\n".join(agg) + "\n"
    return text


def noise_study(map_path: str, scen_paths: Sequence[str], ks: Sequence[float],
                agent_counts: Sequence[int], algos: Sequence[str],
                seeds: Sequence[int], *, timeout_s: float = 60.0,
                workers: int = 1, progress: bool = False,
                ) -> tuple[list[RunRecord], list[dict]]:
    """Sweep K-degraded heuristics; returns records plus per-cell summaries
    with the cost ratio against the K=0 cell of the same algo and count."""
    specs = [
        RunSpec(map_path, scen, n, algo=algo, heuristic="bd", noise_k=k,
                seed=seed, timeout_s=timeout_s)
        for k in ks for algo in algos for n in agent_counts
        for scen in scen_paths for seed in seeds
    ]
    records = bench_sweep(specs, workers=workers, progress=progress)
    summary = []
    cost: dict[tuple, Optional[float]] = {}
    rate: dict[tuple, float] = {}
    for k in ks:
        for algo in algos:
            for n in agent_counts:
                recs = [r for r in records
                        if r.algo == algo and r.n_agents == n
                        and float(r.params.get("K", "0")) == float(k)]
                succ = [r for r in recs if r.success]
                rate[(k, algo, n)] = len(succ) / len(recs) if recs else 0.0
                cost[(k, algo, n)] = (sum(r.flowtime / r.n_agents for r in succ) / len(succ)
                                      if succ else None)
    for (k, algo, n), c in cost.items():
        base = cost.get((0.0, algo, n))
        summary.append({
            "K": k, "algo": algo, "n_agents": n,
            "success_rate": rate[(k, algo, n)],
            "mean_cost_per_agent": c,
            "cost_ratio_vs_k0": (c / base) if (c is not None and base) else None,
        })
    return records, summary


def ordering_histogram(entries: Iterable[tuple[str, bool, Sequence[int]]]
                       ) -> dict[tuple[str, bool], np.ndarray]:
    """5x5 preference-position matrices per (conversion mode, at-goal flag).

    entries yield (mode, at_goal, permutation); cell [action, k] is the
    empirical frequency that the action was the k-th preference. Every
    sample is a full permutation, so rows and columns each sum to 1.
    """
    counts: dict[tuple[str, bool], np.ndarray] = {}
    totals: dict[tuple[str, bool], int] = {}
    for mode, at_goal, perm in entries:
        key = (mode, bool(at_goal))
        mat = counts.setdefault(key, np.zeros((5, 5)))
        for k, action in enumerate(perm):
            mat[int(action), k] += 1
        totals[key] = totals.get(key, 0) + 1
    return {key: mat / totals[key] for key, mat in counts.items()}


def parse_ordering_log(text: str) -> list[tuple[str, bool, list[int]]]:
    entries = []
    for ln in text.splitlines():
        if not ln.strip():
            continue
        parts = ln.split()
        entries.append((parts[0], parts[1] == "1", [int(v) for v in parts[2:7]]))
    return entries


def histogram_csv(matrices: dict[tuple[str, bool], np.ndarray]) -> str:
    lines = ["mode,at_goal,action," + ",".join(f"k{k + 1}" for k in range(5))]
    for (mode, at_goal), mat in sorted(matrices.items()):
        for action in range(5):
            vals = ",".join(f"{mat[action, k]:.6f}" for k in range(5))
            lines.append(f"{mode},{int(at_goal)},{Action(action).name},{vals}")
    return "\n".join(lines) + "\n"
