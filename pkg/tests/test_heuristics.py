import numpy as np
import pytest

from mapfkit.grid import GridMap
from mapfkit.heuristics import (
    HeuristicBank,
    backward_dijkstra,
    degrade,
    manhattan,
    manhattan_table,
)
from oracles import bellman_distances


def test_backward_dijkstra_empty_grid(empty3):
    table = backward_dijkstra(empty3, (1, 1))
    assert table.value((1, 1)) == 0
    for corner in ((0, 0), (2, 0), (0, 2), (2, 2)):
        assert table.value(corner) == 2


def test_backward_dijkstra_blocked_goal():
    grid = GridMap(3, 3, [(1, 1)])
    with pytest.raises(ValueError):
        backward_dijkstra(grid, (1, 1))


def test_backward_dijkstra_matches_bellman_oracle():
    rng = np.random.default_rng(5)
    for _ in range(40):
        w, h = (int(v) for v in rng.integers(2, 7, size=2))
        cells = [(x, y) for x in range(w) for y in range(h)]
        blocked = [c for c in cells if rng.random() < 0.3]
        grid = GridMap(w, h, blocked)
        free = grid.free_cells()
        if not free:
            continue
        goal = free[int(rng.integers(len(free)))]
        table = backward_dijkstra(grid, goal)
        oracle = bellman_distances(grid, goal)
        for c in free:
            assert table.value(c) == oracle[c]


def test_backward_dijkstra_unit_steps():
    grid = GridMap(5, 4, [(2, 1), (2, 2)])
    free = grid.free_cells()
    table = backward_dijkstra(grid, (0, 0))
    for c in free:
        for n in grid.neighbors(c):
            if np.isfinite(table.value(c)) and np.isfinite(table.value(n)):
                assert abs(table.value(c) - table.value(n)) <= 1


def test_unreachable_marked():
    grid = GridMap(3, 1, [(1, 0)])
    table = backward_dijkstra(grid, (0, 0))
    assert table.is_unreachable((2, 0))
    assert table.ranking_values()[grid.index((2, 0))] == 1e15


def test_manhattan_examples():
    assert manhattan((0, 0), (3, 4)) == 7
    assert manhattan((2, 2), (2, 2)) == 0


def test_manhattan_equals_bd_on_empty_grids():
    rng = np.random.default_rng(9)
    for _ in range(10):
        w, h = (int(v) for v in rng.integers(2, 8, size=2))
        grid = GridMap(w, h)
        goal = (int(rng.integers(w)), int(rng.integers(h)))
        bd = backward_dijkstra(grid, goal)
        mh = manhattan_table(grid, goal)
        assert np.array_equal(bd.values, mh.values)


def test_degrade_k0_is_identity():
    grid = GridMap(6, 6, [(3, 3)])
    table = backward_dijkstra(grid, (0, 0))
    out = degrade(table, 0, seed=7)
    assert np.array_equal(out.values, table.values)


def test_degrade_bounds_and_goal():
    grid = GridMap(8, 8, [(3, 3), (4, 4)])
    table = backward_dijkstra(grid, (1, 1))
    for k in (10, 50, 100):
        out = degrade(table, k, seed=3)
        v, d = table.values, out.values
        finite = np.isfinite(v)
        assert (d[finite] <= v[finite]).all()
        assert (d[finite] >= (1 - k / 100.0) * v[finite]).all()
        assert out.value((1, 1)) == 0.0


def test_degrade_preserves_unreachable():
    grid = GridMap(3, 1, [(1, 0)])
    table = backward_dijkstra(grid, (0, 0))
    out = degrade(table, 100, seed=0)
    assert out.is_unreachable((2, 0))


def test_degrade_deterministic_and_seed_sensitive():
    grid = GridMap(10, 10)
    table = backward_dijkstra(grid, (5, 5))
    a = degrade(table, 20, seed=42)
    b = degrade(table, 20, seed=42)
    c = degrade(table, 20, seed=43)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_degrade_k_out_of_range():
    grid = GridMap(2, 2)
    table = backward_dijkstra(grid, (0, 0))
    with pytest.raises(ValueError):
        degrade(table, 101, seed=0)
    with pytest.raises(ValueError):
        degrade(table, -1, seed=0)


def test_bank_caches_and_stacks():
    grid = GridMap(4, 4)
    bank = HeuristicBank(grid)
    t1 = bank.get((1, 1))
    assert bank.get((1, 1)) is t1
    mat = bank.stack([(1, 1), (2, 2)])
    assert mat.shape == (2, 16)
    assert mat[0, grid.index((1, 1))] == 0


def test_bank_validation():
    grid = GridMap(4, 4)
    with pytest.raises(ValueError):
        HeuristicBank(grid, "manhattan", noise_k=10)
    with pytest.raises(ValueError):
        HeuristicBank(grid, "nope")
