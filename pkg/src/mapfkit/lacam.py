"""LaCAM: depth-first search over joint configurations with lazily added
per-agent vertex constraints, using PIBT as the configuration generator."""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import GridMap, Instance, PathSet, flowtime as _flowtime, makespan as _makespan
from .pibt import PIBTEngine
from .policy import CandidateRanker

DEFAULT_NODE_CAP = 10_000_000
DEFAULT_TIMEOUT_S = 60.0


@dataclass
class SolveResult:
    """Solver outcome: status, padded per-agent paths, costs, and search counters."""

    status: str  # success | failure_timeout | failure_exhausted | failure_limit
    paths: Optional[PathSet]
    flowtime: int = 0
    makespan: int = 0
    runtime_ms: int = 0
    hl_nodes_generated: int = 0
    hl_nodes_expanded: int = 0

    @property
    def success(self) -> bool:
        return self.status == "success"


class LowNode:
    """A partial constraint set: the first `depth` agents of the owning
    HighNode's order are each pinned to one cell."""

    __slots__ = ("constraints", "depth")

    def __init__(self, constraints: tuple[tuple[int, int], ...]):
        self.constraints = constraints
        self.depth = len(constraints)


class HighNode:
    """One explored configuration plus its lazy successor state."""

    __slots__ = ("config", "config_list", "key", "parent", "priorities", "order",
                 "queue", "depth")

    def __init__(self, config: np.ndarray, parent: Optional["HighNode"], priorities: np.ndarray):
        self.config = config
        self.config_list = config.tolist()
        self.key = config.tobytes()
        self.parent = parent
        self.priorities = priorities
        self.order: list[int] = np.argsort(-priorities).tolist()
        self.queue: deque[LowNode] = deque([LowNode(())])
        self.depth = 0 if parent is None else parent.depth + 1


def expand_lownode(node: HighNode, grid: GridMap) -> Optional[LowNode]:
    """Pop the front LowNode and append its children.

    Children extend the popped constraints by one entry: the next agent in
    node.order is pinned to each cell of its closed neighborhood (free
    neighbors in canonical action order, current cell last). A fully
    constrained LowNode (depth == N) appends nothing. Returns the popped
    node, or None when the queue is exhausted.
    """
    if not node.queue:
        return None
    low = node.queue.popleft()
    if low.depth < len(node.order):
        agent = node.order[low.depth]
        constraints = low.constraints
        for cell in grid.closed_neighborhoods()[node.config_list[agent]]:
            node.queue.append(LowNode(constraints + ((agent, cell),)))
    return low


def lacam_solve(
    inst: Instance,
    ranker: Optional[CandidateRanker] = None,
    *,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    node_cap: int = DEFAULT_NODE_CAP,
    rng: Optional[np.random.Generator] = None,
) -> SolveResult:
    """Full-horizon search: DFS over configurations, PIBT as generator.

    The stack holds configurations; the top node lazily enumerates successor
    constraints one LowNode at a time. Generated configurations are deduped
    through an explored table and never re-pushed, so the search terminates
    on exhausted joint spaces. When no ranker is given, one is built over
    exact backward-Dijkstra tables with random tie-breaking.
    """
    from .heuristics import HeuristicBank
    from .pibt import initial_priorities
    from .policy import O_H

    start = time.perf_counter()
    grid = inst.grid
    if ranker is None:
        bank = HeuristicBank(grid)
        ranker = CandidateRanker(grid, O_H, tables=bank.stack(list(inst.goals)),
                                 rng=rng if rng is not None else np.random.default_rng())
    engine = PIBTEngine(grid)

    starts = np.array([grid.index(c) for c in inst.starts], dtype=np.int64)
    goals = np.array([grid.index(c) for c in inst.goals], dtype=np.int64)
    goal_cells = list(inst.goals)
    goal_key = goals.tobytes()

    if ranker.tables is not None:
        start_h = ranker.tables[np.arange(len(starts)), starts]
    else:
        # pure-policy search still ranks agents by distance for priorities
        start_h = HeuristicBank(grid).stack(goal_cells)[np.arange(len(starts)), starts]

    root = HighNode(starts, None, initial_priorities(start_h))
    open_stack: list[HighNode] = [root]
    explored: dict[bytes, HighNode] = {root.key: root}
    generated = 1
    expanded = 0

    def result(status: str, goal_node: Optional[HighNode]) -> SolveResult:
        runtime_ms = int(1000 * (time.perf_counter() - start))
        if goal_node is None:
            return SolveResult(status, None, 0, 0, runtime_ms, generated, expanded)
        paths = reconstruct(goal_node, grid)
        return SolveResult(
            status, paths, _flowtime(paths, goal_cells), _makespan(paths, goal_cells),
            runtime_ms, generated, expanded,
        )

    deadline = start + timeout_s
    while open_stack:
        if time.perf_counter() > deadline:
            return result("failure_timeout", None)
        if generated >= node_cap:
            return result("failure_limit", None)
        node = open_stack[-1]
        if node.key == goal_key:
            return result("success", node)
        low = expand_lownode(node, grid)
        if low is None:
            open_stack.pop()
            continue
        expanded += 1
        cand = ranker.candidate_arrays(node.depth, node.config)
        nxt = engine.step(node.config, cand, node.priorities,
                          low.constraints or None, require_roots=True)
        if nxt is None:
            continue
        child_cfg = nxt
        key = child_cfg.tobytes()
        known = explored.get(key)
        if known is not None:
            # revisiting a known configuration moves it back to the stack
            # top so its remaining constraints get tried next; without this
            # the search grinds the current node's constraint tree and can
            # stall on plateaus
            open_stack.append(known)
            continue
        at_goal = child_cfg == goals
        pri = np.where(at_goal, node.priorities - np.floor(node.priorities),
                       node.priorities + 1.0)
        child = HighNode(child_cfg, node, pri)
        explored[key] = child
        generated += 1
        if key == goal_key:
            return result("success", child)
        open_stack.append(child)

    return result("failure_exhausted", None)


def reconstruct(goal_node: HighNode, grid: GridMap) -> PathSet:
    """Per-agent paths from the root-to-goal parent chain (one cell per timestep)."""
    chain: list[np.ndarray] = []
    node: Optional[HighNode] = goal_node
    while node is not None:
        chain.append(node.config)
        node = node.parent
    chain.reverse()
    n = len(chain[0])
    return [[grid.cell_at(int(cfg[i])) for cfg in chain] for i in range(n)]
