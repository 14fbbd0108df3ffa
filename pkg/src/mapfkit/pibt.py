"""One-step configuration generation: PIBT with priority inheritance and
backtracking, dynamic priorities, optional per-agent vertex constraints, and
the CS-Naive / CS-PIBT collision shields."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from .grid import (
    Action,
    Cell,
    Configuration,
    GridMap,
    N_ACTIONS,
    action_between,
    apply_action,
)
from ._kernels import pibt_step_kernel
from .policy import sampled_ordering, strict_ordering


@dataclass
class StepResult:
    """A collision-free joint step: one action per agent plus the new configuration."""

    moves: list[Action]
    next: Configuration


def initial_priorities(start_distances: Sequence[float]) -> np.ndarray:
    """Dynamic-priority start values: elapsed 0 plus a distance-ranked tiebreak.

    A priority value encodes elapsed + tiebreak with elapsed = floor and the
    tiebreak a per-agent constant in (0, 1). Agents farther from their goal
    get larger tiebreaks, so they plan first initially; ranks keep the
    tiebreaks pairwise distinct even when distances tie.
    """
    d = np.asarray(start_distances, dtype=np.float64)
    n = len(d)
    order = np.argsort(-d, kind="stable")
    tie = np.empty(n)
    tie[order] = (n - np.arange(n)) / (n + 1.0)
    return tie


def update_priorities(priorities: np.ndarray, config: Sequence, goals: Sequence) -> np.ndarray:
    """Elapsed resets to 0 at the goal, otherwise increments; tiebreak unchanged."""
    pri = np.asarray(priorities, dtype=np.float64)
    at_goal = np.fromiter((c == g for c, g in zip(config, goals)), dtype=bool, count=len(pri))
    return np.where(at_goal, pri - np.floor(pri), pri + 1.0)


class PIBTEngine:
    """Reusable PIBT step solver for one grid (scratch arrays are per-engine,
    so one engine must not be shared across threads)."""

    def __init__(self, grid: GridMap):
        self.grid = grid
        self._neigh = grid.neighbor_table()
        self._closed = grid.closed_neighborhoods()
        self._occ_now = np.full(grid.n_cells, -1, dtype=np.int64)
        self._occ_nxt = np.full(grid.n_cells, -1, dtype=np.int64)
        self._stack_agent = np.empty(0, dtype=np.int64)
        self._stack_k = np.empty(0, dtype=np.int64)

    def step(
        self,
        cfg: Sequence[int] | np.ndarray,
        candidates,
        priorities: np.ndarray,
        constraints: Optional[Sequence[tuple[int, int]]] = None,
        require_roots: bool = False,
    ) -> Optional[np.ndarray]:
        """One PIBT step over flat cell ids.

        candidates holds each agent's feasible target cells, most preferred
        first: either per-agent lists or the (ranked, counts) array pair from
        CandidateRanker.candidate_arrays. Agents plan in descending priority;
        an agent stepping onto an unplanned lower-priority agent plans it
        in the same step (priority inheritance), and a failed displacement
        backtracks to the next candidate. Constrained agents are pinned to
        their cell before planning starts. Returns the next flat
        configuration, or None when the constraints cannot be satisfied.

        require_roots=True additionally declares the step infeasible when any
        top-level plan fails outright (the agent could not even rest). A
        full-horizon caller uses this to bail out of jammed configurations
        and diversify through constraints instead of walking into the jam.
        """
        n = len(cfg)
        cur = np.ascontiguousarray(cfg, dtype=np.int64)
        if isinstance(candidates, tuple):
            ranked, counts = candidates
        else:
            ranked = np.full((n, len(Action)), -1, dtype=np.int64)
            counts = np.empty(n, dtype=np.int64)
            for i, row in enumerate(candidates):
                counts[i] = len(row)
                for k, t in enumerate(row):
                    ranked[i, k] = t
        nxt = np.full(n, -1, dtype=np.int64)
        occ_now, occ_nxt = self._occ_now, self._occ_nxt
        if len(self._stack_agent) < n:
            self._stack_agent = np.empty(n, dtype=np.int64)
            self._stack_k = np.empty(n, dtype=np.int64)

        feasible = True
        pinned = []
        if constraints:
            cur_list = cur.tolist()
            for i, c in constraints:
                if (c != cur_list[i] and c not in self._closed[cur_list[i]]) \
                        or occ_nxt[c] != -1:
                    feasible = False
                    break
                nxt[i] = c
                occ_nxt[c] = i
                pinned.append(c)
            if feasible:  # swaps between two pinned agents
                at = {c: i for i, c in enumerate(cur_list)}
                for i, c in constraints:
                    j = at.get(c)
                    if j is not None and j != i and nxt[j] == cur_list[i]:
                        feasible = False
                        break
        if not feasible:
            for c in pinned:
                occ_nxt[c] = -1
            return None

        order = np.argsort(-np.asarray(priorities))
        ok = pibt_step_kernel(cur, ranked, counts, order, occ_now, occ_nxt, nxt,
                              self._stack_agent, self._stack_k, bool(require_roots))
        if ok and constraints:
            for i, c in constraints:
                if nxt[i] != c:
                    ok = False
                    break
        if not ok:
            if constraints or require_roots:
                return None
            raise RuntimeError("PIBT produced a conflicting step without constraints")
        return nxt


@lru_cache(maxsize=64)
def _engine_for(grid: GridMap) -> PIBTEngine:
    return PIBTEngine(grid)


def _candidates_from_ordering(cell: Cell, ordering: Sequence[Action], grid: GridMap) -> list[int]:
    out = []
    for a in ordering:
        t = apply_action(cell, Action(a), grid)
        if t is not None:
            out.append(grid.index(t))
    return out


def pibt_step(
    config: Configuration,
    orderings: Sequence[Sequence[Action]],
    priorities: np.ndarray,
    grid: GridMap,
    constraints: Optional[Sequence[tuple[int, Cell]]] = None,
) -> Optional[StepResult]:
    """One PIBT step from per-agent action orderings.

    constraints pins agents to required cells; if a constraint cannot be
    reached in one step (or pinned agents clash) the result is None so the
    caller can treat the node as exhausted.
    """
    for perm in orderings:
        if sorted(int(a) for a in perm) != list(range(N_ACTIONS)):
            raise ValueError(f"ordering {perm!r} is not a permutation of the 5 actions")
    engine = _engine_for(grid)
    cfg = [grid.index(c) for c in config]
    cand = [_candidates_from_ordering(c, o, grid) for c, o in zip(config, orderings)]
    flat_cons = None
    if constraints is not None:
        flat_cons = []
        for i, c in constraints:
            if not grid.is_free(c):
                return None
            flat_cons.append((i, grid.index(c)))
    nxt = engine.step(cfg, cand, priorities, flat_cons)
    if nxt is None:
        return None
    cells = tuple(grid.cell_at(t) for t in nxt.tolist())
    moves = [action_between(p, q) for p, q in zip(config, cells)]
    return StepResult(moves, cells)


def cs_naive_step(config: Configuration, proposed: Sequence[Action], grid: GridMap) -> StepResult:
    """Naive collision shield: every agent involved in an obstacle, vertex, or
    edge conflict is replaced by Wait, iterating until no conflicts remain.
    Conflict-free agents keep their proposed action."""
    n = len(config)
    if len(proposed) != n:
        raise ValueError("one proposed action per agent required")
    neigh = grid.neighbor_table()
    cfg = np.array([grid.index(c) for c in config], dtype=np.int64)
    acts = np.array([int(a) for a in proposed], dtype=np.int64)
    origin = np.full(grid.n_cells, -1, dtype=np.int64)
    origin[cfg] = np.arange(n)
    while True:
        targets = neigh[cfg, acts]
        bad = targets < 0  # off-map or blocked proposal
        safe_targets = np.where(bad, cfg, targets)
        counts = np.bincount(safe_targets, minlength=grid.n_cells)
        bad |= counts[safe_targets] > 1  # vertex conflict
        occupant = origin[safe_targets]
        swap = (occupant >= 0) & (occupant != np.arange(n)) & (safe_targets != cfg)
        swap &= safe_targets[np.clip(occupant, 0, None)] == cfg
        bad |= swap  # edge conflict
        bad &= acts != int(Action.WAIT)
        if not bad.any():
            break
        acts[bad] = int(Action.WAIT)
    final = np.where(acts == int(Action.WAIT), cfg, neigh[cfg, acts])
    cells = tuple(grid.cell_at(int(t)) for t in final)
    return StepResult([Action(int(a)) for a in acts], cells)


def cs_pibt_step(
    config: Configuration,
    dists: Sequence[Sequence[float]] | np.ndarray,
    priorities: np.ndarray,
    sample_mode: str,
    grid: GridMap,
    rng: np.random.Generator,
) -> StepResult:
    """PIBT collision shield: convert each agent's distribution to an action
    ordering (strict sort or biased sampling) and run an unconstrained PIBT step."""
    if sample_mode == "strict":
        orderings = [strict_ordering(d, rng) for d in dists]
    elif sample_mode == "sampled":
        orderings = [sampled_ordering(d, rng) for d in dists]
    else:
        raise ValueError(f"unknown sample mode {sample_mode!r}")
    result = pibt_step(config, orderings, priorities, grid)
    assert result is not None  # unconstrained PIBT always yields a step
    return result
