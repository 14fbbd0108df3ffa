import numpy as np
import pytest

from mapfkit.grid import (
    Action,
    Conflict,
    GridMap,
    Instance,
    apply_action,
    action_between,
    flowtime,
    makespan,
    path_cost,
    validate_paths,
    validate_step,
)


def test_apply_action_wait_is_identity(empty3):
    assert apply_action((1, 1), Action.WAIT, empty3) == (1, 1)


def test_apply_action_out_of_bounds(empty3):
    assert apply_action((0, 0), Action.UP, empty3) is None  # Up decreases y


def test_apply_action_blocked():
    grid = GridMap(3, 3, [(2, 1)])
    assert apply_action((1, 1), Action.RIGHT, grid) is None


def test_apply_action_directions(empty3):
    assert apply_action((1, 1), Action.UP, empty3) == (1, 0)
    assert apply_action((1, 1), Action.DOWN, empty3) == (1, 2)
    assert apply_action((1, 1), Action.LEFT, empty3) == (0, 1)
    assert apply_action((1, 1), Action.RIGHT, empty3) == (2, 1)


def test_apply_action_result_always_free(empty4):
    grid = GridMap(4, 4, [(1, 1), (2, 3)])
    for cell in [(x, y) for x in range(4) for y in range(4)]:
        if not grid.is_free(cell):
            continue
        for a in Action:
            out = apply_action(cell, a, grid)
            assert out is None or grid.is_free(out)


def test_action_between_rejects_teleport():
    with pytest.raises(ValueError):
        action_between((0, 0), (2, 0))


def test_neighbor_table_matches_apply_action():
    rng = np.random.default_rng(0)
    for _ in range(20):
        w, h = rng.integers(1, 6, size=2)
        cells = [(x, y) for x in range(w) for y in range(h)]
        grid = GridMap(int(w), int(h), [c for c in cells if rng.random() < 0.3])
        table = grid.neighbor_table()
        for c in cells:
            for a in Action:
                want = apply_action(c, a, grid)
                got = table[grid.index(c), a]
                if not grid.is_free(c):
                    assert got == -1
                elif want is None:
                    assert got == -1
                else:
                    assert grid.cell_at(int(got)) == want


def test_grid_validation():
    with pytest.raises(ValueError):
        GridMap(0, 3)
    with pytest.raises(ValueError):
        GridMap(3, 3, [(3, 0)])


def test_validate_step_vertex(empty3):
    conflicts = validate_step(((0, 0), (2, 0)), ((1, 0), (1, 0)), empty3)
    assert conflicts == [Conflict("vertex", (0, 1), (1, 0))]


def test_validate_step_edge(empty3):
    conflicts = validate_step(((0, 0), (1, 0)), ((1, 0), (0, 0)), empty3)
    assert [c.kind for c in conflicts] == ["edge"]
    assert conflicts[0].agents == (0, 1)


def test_validate_step_all_wait_valid(empty3):
    assert validate_step(((0, 0), (2, 0)), ((0, 0), (2, 0)), empty3) == []


def test_validate_step_obstacle_and_teleport():
    grid = GridMap(3, 1, [(1, 0)])
    kinds = {c.kind for c in validate_step(((0, 0),), ((1, 0),), grid)}
    assert kinds == {"obstacle"}
    kinds = {c.kind for c in validate_step(((0, 0),), ((2, 0),), grid)}
    assert kinds == {"non_adjacent"}


def test_validate_step_symmetric_in_agent_pairs(empty3):
    prev = ((0, 0), (2, 0), (1, 1))
    nxt = ((1, 0), (1, 0), (1, 1))
    fwd = validate_step(prev, nxt, empty3)
    rev = validate_step(prev[::-1], nxt[::-1], empty3)
    assert [c.kind for c in fwd] == [c.kind for c in rev]
    n = len(prev)
    remapped = {tuple(sorted(n - 1 - a for a in c.agents)) for c in rev}
    assert {c.agents for c in fwd} == remapped


def test_validate_step_length_mismatch(empty3):
    with pytest.raises(ValueError):
        validate_step(((0, 0),), ((0, 0), (1, 1)), empty3)


def test_instance_validation(empty3):
    Instance(empty3, ((0, 0),), ((2, 2),))
    with pytest.raises(ValueError):
        Instance(empty3, ((0, 0), (0, 0)), ((1, 1), (2, 2)))
    with pytest.raises(ValueError):
        Instance(empty3, ((0, 0),), ((0, 0), (1, 1)))
    with pytest.raises(ValueError):
        Instance(GridMap(3, 3, [(2, 2)]), ((0, 0),), ((2, 2),))


def test_validate_paths_single_agent_pass(empty3):
    inst = Instance(empty3, ((0, 0),), ((1, 1),))
    report = validate_paths([[(0, 0), (1, 0), (1, 1)]], inst)
    assert report.ok and report.all_at_goal


def test_validate_paths_teleport_fails(empty3):
    inst = Instance(empty3, ((0, 0),), ((2, 0),))
    report = validate_paths([[(0, 0), (2, 0)]], inst)
    assert not report.ok
    assert any(t == 1 and c.kind == "non_adjacent" for t, c in report.conflicts)


def test_validate_paths_checks_starts(empty3):
    inst = Instance(empty3, ((0, 0),), ((1, 1),))
    report = validate_paths([[(1, 0), (1, 1)]], inst)
    assert not report.ok and not report.starts_match


def test_validate_paths_ragged_rejected(empty3):
    inst = Instance(empty3, ((0, 0), (2, 2)), ((1, 1), (0, 1)))
    with pytest.raises(ValueError):
        validate_paths([[(0, 0)], [(2, 2), (2, 1)]], inst)


def test_validate_paths_fast_and_slow_agree():
    # corrupt random walks and compare the vectorized screen with the
    # conflict enumeration
    rng = np.random.default_rng(7)
    grid = GridMap(4, 4, [(1, 2)])
    free = grid.free_cells()
    for _ in range(300):
        n = int(rng.integers(1, 4))
        picks = rng.permutation(len(free))
        starts = tuple(free[i] for i in picks[:n])
        cfgs = [list(starts)]
        for _ in range(5):
            cur = cfgs[-1]
            nxt = []
            for c in cur:
                opts = [c] + grid.neighbors(c)
                nxt.append(opts[int(rng.integers(len(opts)))])
            cfgs.append(nxt)
        if rng.random() < 0.5:  # corrupt
            t = int(rng.integers(1, len(cfgs)))
            i = int(rng.integers(n))
            kind = rng.random()
            if kind < 0.4 and n >= 2:
                j = int(rng.integers(n))
                cfgs[t][i] = cfgs[t][j]
            elif kind < 0.7:
                cfgs[t][i] = (int(rng.integers(4)), int(rng.integers(4)))
            else:
                cfgs[t][i] = (1, 2)  # blocked cell
        paths = [[tuple(cfgs[t][i]) for t in range(len(cfgs))] for i in range(n)]
        goals = tuple(p[-1] for p in paths)
        if len(set(goals)) != n or any(not grid.is_free(g) for g in goals):
            continue
        inst = Instance(grid, starts, goals)
        report = validate_paths(paths, inst)
        slow_conflicts = []
        for t in range(1, len(cfgs)):
            slow_conflicts.extend(
                validate_step(tuple(map(tuple, cfgs[t - 1])),
                              tuple(map(tuple, cfgs[t])), grid))
        assert report.ok == (not slow_conflicts)


def test_path_cost_rests_at_goal():
    assert path_cost([(0, 0), (1, 0), (1, 0), (1, 0)], (1, 0)) == 1


def test_path_cost_leaving_goal_counts():
    assert path_cost([(1, 0), (0, 0), (1, 0)], (1, 0)) == 2


def test_path_cost_never_leaves():
    assert path_cost([(1, 0), (1, 0)], (1, 0)) == 0


def test_flowtime_invariant_under_trailing_waits():
    paths = [[(0, 0), (1, 0), (1, 1)], [(2, 2), (2, 1), (2, 1)]]
    goals = [(1, 1), (2, 1)]
    base = flowtime(paths, goals)
    padded = [p + [p[-1]] * 3 for p in paths]
    assert flowtime(padded, goals) == base == 3
    assert makespan(padded, goals) == 2
