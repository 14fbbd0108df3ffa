#!/usr/bin/env python3
"""Generate the bundled benchmark data: a 32x32 map with 10% random obstacles
(free space connected, no dead-end cells) plus 25 random scenarios in
MovingAI formats.

The files under data/ are committed; rerunning this script reproduces them
bit-for-bit. Scenario entries pair uniformly random free cells with all
starts pairwise distinct and all goals pairwise distinct, like the standard
random benchmark scenarios.
"""
from __future__ import annotations

import sys
from collections import deque
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mapfkit.grid import GridMap  # noqa: E402
from mapfkit.heuristics import backward_dijkstra  # noqa: E402
from mapfkit.io import render_map  # noqa: E402

WIDTH = HEIGHT = 32
N_BLOCKED = 102  # ~10% of 1024 cells
MAP_SEED = 11
SCEN_SEED_BASE = 1000
N_SCENS = 25
ENTRIES_PER_SCEN = 410
MAP_NAME = "random-32-32-10"


def _free_neighbors(blocked: np.ndarray, c: int) -> list[int]:
    x, y = c % WIDTH, c // WIDTH
    out = []
    for dx, dy in ((0, -1), (0, 1), (-1, 0), (1, 0)):
        nx, ny = x + dx, y + dy
        if 0 <= nx < WIDTH and 0 <= ny < HEIGHT and not blocked[ny * WIDTH + nx]:
            out.append(ny * WIDTH + nx)
    return out


def usable(blocked: np.ndarray) -> bool:
    """Free space must be connected and free of dead ends.

    A free cell with a single free neighbor is a cul-de-sac; a goal placed
    behind another goal in such a pocket cannot be reached by one-step
    configuration search without the swap refinements of later solver
    variants, so the bundled map excludes the pattern outright.
    """
    free = np.flatnonzero(~blocked)
    if any(len(_free_neighbors(blocked, int(c))) < 2 for c in free):
        return False
    seen = np.zeros(blocked.size, dtype=bool)
    seen[free[0]] = True
    todo = deque([int(free[0])])
    count = 1
    while todo:
        c = todo.popleft()
        for n in _free_neighbors(blocked, c):
            if not seen[n]:
                seen[n] = True
                count += 1
                todo.append(n)
    return count == len(free)


def gen_map(seed: int = MAP_SEED) -> GridMap:
    rng = np.random.default_rng(seed)
    while True:
        blocked = np.zeros(WIDTH * HEIGHT, dtype=bool)
        blocked[rng.choice(WIDTH * HEIGHT, N_BLOCKED, replace=False)] = True
        if usable(blocked):
            cells = [(int(i % WIDTH), int(i // WIDTH)) for i in np.flatnonzero(blocked)]
            return GridMap(WIDTH, HEIGHT, cells)


def gen_scen(grid: GridMap, index: int, dist_cache: dict) -> str:
    rng = np.random.default_rng(SCEN_SEED_BASE + index - 1)
    free = np.array([grid.index(c) for c in grid.free_cells()])
    starts = rng.permutation(free)[:ENTRIES_PER_SCEN]
    goals = rng.permutation(free)[:ENTRIES_PER_SCEN]
    lines = ["version 1"]
    for k, (s, g) in enumerate(zip(starts, goals)):
        sc, gc = grid.cell_at(int(s)), grid.cell_at(int(g))
        if gc not in dist_cache:
            dist_cache[gc] = backward_dijkstra(grid, gc)
        opt = dist_cache[gc].value(sc)
        lines.append("\t".join([
            str(k // 10), f"{MAP_NAME}.map", str(WIDTH), str(HEIGHT),
            str(sc[0]), str(sc[1]), str(gc[0]), str(gc[1]), f"{opt:.8f}",
        ]))
    return "\n".join(lines) + "\n"


def main() -> None:
    root = Path(__file__).resolve().parent.parent
    data = root / "data"
    (data / "scen").mkdir(parents=True, exist_ok=True)
    grid = gen_map()
    (data / f"{MAP_NAME}.map").write_text(render_map(grid))
    print(f"wrote {MAP_NAME}.map ({len(grid.blocked)} blocked cells)")
    dist_cache: dict = {}
    for i in range(1, N_SCENS + 1):
        text = gen_scen(grid, i, dist_cache)
        (data / "scen" / f"{MAP_NAME}-random-{i}.scen").write_text(text)
    print(f"wrote {N_SCENS} scen files with {ENTRIES_PER_SCEN} entries each")


if __name__ == "__main__":
    main()
