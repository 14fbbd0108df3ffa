"""Cost-to-go tables: exact backward Dijkstra, Manhattan, and seeded K% degradation."""
from __future__ import annotations

from collections import deque

import numpy as np

from .grid import Cell, GridMap

UNREACHABLE = np.inf


class HeuristicTable:
    """Per-cell cost-to-go values toward one goal cell.

    values is a flat float64 array (row-major, like GridMap.index); exact
    tables hold whole numbers and UNREACHABLE (inf) marks cells with no path
    to the goal. Immutable after construction.
    """

    __slots__ = ("grid", "goal", "values")

    def __init__(self, grid: GridMap, goal: Cell, values: np.ndarray):
        if values.shape != (grid.n_cells,):
            raise ValueError("values must be one float per cell")
        values = np.asarray(values, dtype=np.float64)
        values.setflags(write=False)
        self.grid = grid
        self.goal = goal
        self.values = values

    def value(self, cell: Cell) -> float:
        return float(self.values[self.grid.index(cell)])

    def is_unreachable(self, cell: Cell) -> bool:
        return not np.isfinite(self.values[self.grid.index(cell)])

    def ranking_values(self) -> np.ndarray:
        """Values with unreachable cells replaced by a large finite sentinel,
        so engines rank them worst instead of dropping them."""
        return np.where(np.isfinite(self.values), self.values, 1e15)


def backward_dijkstra(grid: GridMap, goal: Cell) -> HeuristicTable:
    """Exact distance-to-goal for every free cell (unit costs, so BFS)."""
    if not grid.is_free(goal):
        raise ValueError(f"goal {goal} is blocked or out of bounds")
    neigh = grid.neighbor_table()
    dist = np.full(grid.n_cells, UNREACHABLE)
    g = grid.index(goal)
    dist[g] = 0.0
    todo = deque([g])
    while todo:
        c = todo.popleft()
        d = dist[c] + 1.0
        for t in neigh[c, :4]:
            if t >= 0 and dist[t] == UNREACHABLE:
                dist[t] = d
                todo.append(t)
    return HeuristicTable(grid, goal, dist)


def manhattan(cell: Cell, goal: Cell) -> int:
    return abs(cell[0] - goal[0]) + abs(cell[1] - goal[1])


def manhattan_table(grid: GridMap, goal: Cell) -> HeuristicTable:
    """Manhattan distance to the goal for every cell (obstacle-blind)."""
    if not grid.in_bounds(goal):
        raise ValueError(f"goal {goal} out of bounds")
    idx = np.arange(grid.n_cells)
    vals = (np.abs(idx % grid.width - goal[0]) + np.abs(idx // grid.width - goal[1])).astype(np.float64)
    return HeuristicTable(grid, goal, vals)


def _cell_uniforms(seed: int, n_cells: int) -> np.ndarray:
    """Per-cell uniforms in [0, 1), each a SplitMix64 hash of (seed, cell index).

    Deterministic per (seed, cell) regardless of query or build order.
    """
    golden = np.uint64(0x9E3779B97F4A7C15)
    z = (np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
         + (np.arange(1, n_cells + 1, dtype=np.uint64)) * golden)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def degrade(table: HeuristicTable, k: float, seed: int) -> HeuristicTable:
    """K% imperfect copy of an exact table.

    Each cell's value is scaled by an independent e ~ Uniform[1-K/100, 1]
    drawn from a generator seeded by (seed, cell), so the result is
    deterministic for a fixed seed and K=0 returns bit-identical values.
    The goal keeps value 0 and unreachable markers are left untouched.
    """
    if not 0 <= k <= 100:
        raise ValueError(f"K must be in [0, 100], got {k}")
    e = 1.0 - (k / 100.0) * _cell_uniforms(seed, table.grid.n_cells)
    vals = np.where(np.isfinite(table.values), e * table.values, table.values)
    return HeuristicTable(table.grid, table.goal, vals)


class HeuristicBank:
    """Lazy per-goal table cache for one grid and heuristic configuration.

    kind is "bd" or "manhattan"; noise_k > 0 degrades bd tables with the
    given seed. Tables are immutable, so sharing across solver runs is safe.
    """

    def __init__(self, grid: GridMap, kind: str = "bd", noise_k: float = 0.0, noise_seed: int = 0):
        if kind not in ("bd", "manhattan"):
            raise ValueError(f"unknown heuristic kind {kind!r}")
        if noise_k and kind != "bd":
            raise ValueError("noise degradation applies to bd tables only")
        self.grid = grid
        self.kind = kind
        self.noise_k = float(noise_k)
        self.noise_seed = int(noise_seed)
        self._tables: dict[Cell, HeuristicTable] = {}

    def get(self, goal: Cell) -> HeuristicTable:
        table = self._tables.get(goal)
        if table is None:
            if self.kind == "manhattan":
                table = manhattan_table(self.grid, goal)
            else:
                table = backward_dijkstra(self.grid, goal)
                if self.noise_k:
                    table = degrade(table, self.noise_k, self.noise_seed)
            self._tables[goal] = table
        return table

    def stack(self, goals: list[Cell]) -> np.ndarray:
        """(len(goals), n_cells) matrix of ranking values, one row per goal."""
        return np.stack([self.get(g).ranking_values() for g in goals])
