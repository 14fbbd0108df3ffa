"""Grid world model: cells, actions, configurations, collision checks, and cost metrics.

Coordinates are (x, y) with x the column from the left and y the row from the
top, so Up decreases y. This matches the MovingAI scen field order. The five
actions have the fixed canonical index order Up, Down, Left, Right, Wait,
shared by every module and the external policy wire protocol.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional, Sequence

import numpy as np

Cell = tuple[int, int]
Configuration = tuple[Cell, ...]
Path = Sequence[Cell]
PathSet = list[list[Cell]]


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    WAIT = 4


# (dx, dy) per action, canonical order. Up decreases y (rows grow downward).
ACTION_DELTAS: tuple[tuple[int, int], ...] = ((0, -1), (0, 1), (-1, 0), (1, 0), (0, 0))
N_ACTIONS = 5

_DELTA_TO_ACTION = {d: Action(i) for i, d in enumerate(ACTION_DELTAS)}


class GridMap:
    """A 4-connected grid with static obstacles. Immutable after construction."""

    __slots__ = ("width", "height", "blocked", "_passable", "_neighbor_table",
                 "_closed_lists")

    def __init__(self, width: int, height: int, blocked: Iterable[Cell] = ()):
        if width < 1 or height < 1:
            raise ValueError(f"grid dimensions must be >= 1, got {width}x{height}")
        self.width = int(width)
        self.height = int(height)
        self.blocked = frozenset((int(x), int(y)) for x, y in blocked)
        for x, y in self.blocked:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValueError(f"blocked cell ({x},{y}) outside {width}x{height} grid")
        passable = np.ones(self.width * self.height, dtype=bool)
        for x, y in self.blocked:
            passable[y * self.width + x] = False
        passable.setflags(write=False)
        self._passable = passable
        self._neighbor_table: Optional[np.ndarray] = None
        self._closed_lists: Optional[list[list[int]]] = None

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.width and 0 <= y < self.height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and cell not in self.blocked

    def index(self, cell: Cell) -> int:
        """Flat cell id, row-major."""
        return cell[1] * self.width + cell[0]

    def cell_at(self, index: int) -> Cell:
        return (index % self.width, index // self.width)

    def free_cells(self) -> list[Cell]:
        return [self.cell_at(i) for i in np.flatnonzero(self._passable)]

    def neighbors(self, cell: Cell) -> list[Cell]:
        """Free 4-neighbors in canonical action order (Up, Down, Left, Right)."""
        out = []
        for dx, dy in ACTION_DELTAS[:4]:
            nxt = (cell[0] + dx, cell[1] + dy)
            if self.is_free(nxt):
                out.append(nxt)
        return out

    def passable_array(self) -> np.ndarray:
        """Read-only flat bool array, True where the cell is free."""
        return self._passable

    def neighbor_table(self) -> np.ndarray:
        """(n_cells, 5) int32 array of flat target ids per action, -1 if the
        move leaves the grid or hits an obstacle. Rows for blocked cells are
        all -1. Built on first use and cached; read-only."""
        if self._neighbor_table is None:
            w, h = self.width, self.height
            n = self.n_cells
            table = np.full((n, N_ACTIONS), -1, dtype=np.int32)
            xs = np.arange(n, dtype=np.int32) % w
            ys = np.arange(n, dtype=np.int32) // w
            for a, (dx, dy) in enumerate(ACTION_DELTAS):
                nx, ny = xs + dx, ys + dy
                ok = (0 <= nx) & (nx < w) & (0 <= ny) & (ny < h)
                tgt = np.where(ok, ny * w + nx, 0)
                ok &= self._passable[tgt]
                table[:, a] = np.where(ok & self._passable, tgt, -1)
            table.setflags(write=False)
            self._neighbor_table = table
        return self._neighbor_table

    def closed_neighborhoods(self) -> list[list[int]]:
        """Per flat cell id: free 4-neighbor flat ids in canonical action
        order followed by the cell itself (empty for blocked cells). Cached."""
        if self._closed_lists is None:
            table = self.neighbor_table()
            out = []
            for c in range(self.n_cells):
                if not self._passable[c]:
                    out.append([])
                    continue
                row = [int(t) for t in table[c, :4] if t >= 0]
                row.append(c)
                out.append(row)
            self._closed_lists = out
        return self._closed_lists

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, GridMap)
            and self.width == other.width
            and self.height == other.height
            and self.blocked == other.blocked
        )

    def __hash__(self) -> int:
        return hash((self.width, self.height, self.blocked))

    def __repr__(self) -> str:
        return f"GridMap({self.width}x{self.height}, {len(self.blocked)} blocked)"


def apply_action(cell: Cell, action: Action, grid: GridMap) -> Optional[Cell]:
    """Transition function: the target cell, or None if it leaves the grid or
    hits an obstacle. Wait maps a cell to itself."""
    dx, dy = ACTION_DELTAS[action]
    nxt = (cell[0] + dx, cell[1] + dy)
    return nxt if grid.is_free(nxt) else None


def action_between(src: Cell, dst: Cell) -> Action:
    """The action moving src to dst; raises if the cells are not identical or 4-adjacent."""
    delta = (dst[0] - src[0], dst[1] - src[1])
    try:
        return _DELTA_TO_ACTION[delta]
    except KeyError:
        raise ValueError(f"{src} -> {dst} is not a unit grid move") from None


@dataclass(frozen=True)
class Conflict:
    """One collision or structural violation in a single step.

    kind is one of "obstacle" (target blocked or out of bounds),
    "non_adjacent" (teleport), "vertex" (two agents on one cell) or
    "edge" (two agents swapping cells). agents holds the involved agent
    ids (sorted pair for vertex/edge), cell the primary location.
    """

    kind: str
    agents: tuple[int, ...]
    cell: Cell


def validate_step(prev: Configuration, nxt: Configuration, grid: GridMap) -> list[Conflict]:
    """Every conflict produced by moving the joint configuration prev -> nxt.

    Reports obstacle violations, non-adjacent moves, vertex conflicts (two
    agents sharing a target cell) and edge conflicts (a pair swapping cells).
    An empty list means the step is valid.
    """
    if len(prev) != len(nxt):
        raise ValueError(f"configuration sizes differ: {len(prev)} vs {len(nxt)}")
    conflicts: list[Conflict] = []
    for i, (p, q) in enumerate(zip(prev, nxt)):
        if not grid.is_free(q):
            conflicts.append(Conflict("obstacle", (i,), q))
        if (q[0] - p[0], q[1] - p[1]) not in _DELTA_TO_ACTION:
            conflicts.append(Conflict("non_adjacent", (i,), q))
    seen: dict[Cell, int] = {}
    for i, q in enumerate(nxt):
        if q in seen:
            conflicts.append(Conflict("vertex", (seen[q], i), q))
        else:
            seen[q] = i
    at_prev = {p: i for i, p in enumerate(prev)}
    for i, q in enumerate(nxt):
        j = at_prev.get(q)
        if j is not None and j != i and nxt[j] == prev[i] and i < j:
            conflicts.append(Conflict("edge", (i, j), q))
    return conflicts


@dataclass(frozen=True)
class Instance:
    """A MAPF problem: one grid plus per-agent start/goal pairs."""

    grid: GridMap
    starts: Configuration
    goals: Configuration

    def __post_init__(self):
        if len(self.starts) != len(self.goals):
            raise ValueError("starts and goals must have equal length")
        if not self.starts:
            raise ValueError("instance needs at least one agent")
        if len(set(self.starts)) != len(self.starts):
            raise ValueError("starts must be pairwise distinct")
        if len(set(self.goals)) != len(self.goals):
            raise ValueError("goals must be pairwise distinct")
        for c in (*self.starts, *self.goals):
            if not self.grid.is_free(c):
                raise ValueError(f"endpoint {c} is blocked or out of bounds")

    @property
    def n_agents(self) -> int:
        return len(self.starts)


@dataclass
class PathReport:
    """Outcome of validate_paths: ok means structurally valid and conflict-free."""

    ok: bool
    conflicts: list[tuple[int, Conflict]] = field(default_factory=list)
    goals_reached: Optional[list[bool]] = None
    starts_match: bool = True

    @property
    def all_at_goal(self) -> bool:
        return bool(self.goals_reached) and all(self.goals_reached)


def _paths_matrix(paths: PathSet, grid: GridMap) -> np.ndarray:
    """(T, N) flat cell ids; raises on ragged or empty input."""
    if not paths or not paths[0]:
        raise ValueError("paths must be non-empty")
    length = len(paths[0])
    if any(len(p) != length for p in paths):
        raise ValueError("all agent paths must have equal length")
    w = grid.width
    return np.array([[y * w + x for (x, y) in p] for p in paths], dtype=np.int64).T


def _fast_valid(mat: np.ndarray, grid: GridMap) -> bool:
    """Vectorized conflict screen over a (T, N) flat path matrix."""
    w = grid.width
    if not grid.passable_array()[mat].all():
        return False
    if mat.shape[0] > 1:
        prev, nxt = mat[:-1], mat[1:]
        dx = nxt % w - prev % w
        dy = nxt // w - prev // w
        if (np.abs(dx) + np.abs(dy) > 1).any():  # exactly the 5 unit moves
            return False
        # edge conflicts: a moving agent whose reversed edge appears in the
        # same timestep row belongs to a swap pair
        ncells = grid.n_cells
        offs = (np.arange(mat.shape[0] - 1, dtype=np.int64) * ncells * ncells)[:, None]
        fwd = (prev * ncells + nxt + offs).ravel()
        rev = (nxt * ncells + prev + offs).ravel()
        fwd_sorted = np.sort(fwd)
        pos = np.minimum(np.searchsorted(fwd_sorted, rev), fwd_sorted.size - 1)
        found = fwd_sorted[pos] == rev
        moving = (prev != nxt).ravel()
        if (found & moving).any():
            return False
    srt = np.sort(mat, axis=1)
    if (srt[:, 1:] == srt[:, :-1]).any():
        return False
    return True


def validate_paths(paths: PathSet, inst: Instance) -> PathReport:
    """Check a full PathSet against an instance.

    The report lists every per-timestep conflict, whether each agent ends at
    its goal, and whether first cells equal the starts. ok is True iff the
    paths are conflict-free and start at the instance starts.
    """
    mat = _paths_matrix(paths, inst.grid)
    if mat.shape[1] != inst.n_agents:
        raise ValueError(f"expected {inst.n_agents} paths, got {mat.shape[1]}")
    starts_match = all(p[0] == s for p, s in zip(paths, inst.starts))
    goals_reached = [p[-1] == g for p, g in zip(paths, inst.goals)]
    if starts_match and _fast_valid(mat, inst.grid):
        return PathReport(True, [], goals_reached, starts_match)
    # slow pass for the detailed conflict list
    conflicts: list[tuple[int, Conflict]] = []
    configs = [tuple(p[t] for p in paths) for t in range(len(paths[0]))]
    for i, c in enumerate(configs[0]):
        if not inst.grid.is_free(c):
            conflicts.append((0, Conflict("obstacle", (i,), c)))
    dup: dict[Cell, int] = {}
    for i, c in enumerate(configs[0]):
        if c in dup:
            conflicts.append((0, Conflict("vertex", (dup[c], i), c)))
        else:
            dup[c] = i
    for t in range(1, len(configs)):
        for conf in validate_step(configs[t - 1], configs[t], inst.grid):
            conflicts.append((t, conf))
    ok = not conflicts and starts_match
    return PathReport(ok, conflicts, goals_reached, starts_match)


def path_cost(path: Path, goal: Cell) -> int:
    """Timesteps until the agent finally rests at its goal.

    That is 1 + the largest t with path[t] != goal, and 0 when the agent sits
    on its goal for the whole path. Leaving the goal and coming back counts.
    """
    for t in range(len(path) - 1, -1, -1):
        if path[t] != goal:
            return t + 1
    return 0


def flowtime(paths: PathSet, goals: Sequence[Cell]) -> int:
    """Sum of per-agent path costs (rest-at-goal rule)."""
    return sum(path_cost(p, g) for p, g in zip(paths, goals))


def makespan(paths: PathSet, goals: Sequence[Cell]) -> int:
    """Timesteps until the last agent rests at its goal."""
    return max(path_cost(p, g) for p, g in zip(paths, goals))
