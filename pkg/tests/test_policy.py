import numpy as np
import pytest

from mapfkit.grid import Action, GridMap, Instance
from mapfkit.heuristics import HeuristicTable, backward_dijkstra
from mapfkit.policy import (
    CandidateRanker,
    O_H,
    O_H2,
    O_PI,
    O_TIE,
    RankMode,
    SoftmaxHeuristicPolicy,
    UniformPolicy,
    o_sum,
    rank_actions,
    sampled_ordering,
    strict_ordering,
    validate_distribution,
)
from oracles import plackett_luce_exact, positional_marginals

U, D, L, R, W = Action


def test_validate_distribution():
    validate_distribution([0.2, 0.2, 0.2, 0.2, 0.2])
    with pytest.raises(ValueError):
        validate_distribution([0.3, 0.2, 0.2, 0.2, 0.2])
    with pytest.raises(ValueError):
        validate_distribution([-0.1, 0.4, 0.3, 0.2, 0.2])
    with pytest.raises(ValueError):
        validate_distribution([1.0, 0.0, 0.0, 0.0])


def test_strict_ordering_sorts_by_probability():
    rng = np.random.default_rng(0)
    assert strict_ordering([0.1, 0.5, 0.2, 0.15, 0.05], rng) == [D, L, R, U, W]


def test_strict_ordering_deterministic_top():
    rng = np.random.default_rng(0)
    assert strict_ordering([1, 0, 0, 0, 0], rng)[0] == U


def test_strict_ordering_uniform_ties_are_uniform():
    rng = np.random.default_rng(1)
    counts = np.zeros((5, 5))
    n = 20_000
    for _ in range(n):
        perm = strict_ordering([0.2] * 5, rng)
        for k, a in enumerate(perm):
            counts[a, k] += 1
    assert np.abs(counts / n - 0.2).max() < 0.02


def test_sampled_ordering_deterministic_mass():
    rng = np.random.default_rng(2)
    for _ in range(200):
        assert sampled_ordering([1, 0, 0, 0, 0], rng)[0] == U


def test_sampled_ordering_first_draw_probability():
    rng = np.random.default_rng(3)
    n = 100_000
    hits = sum(sampled_ordering([0.55, 0.45, 0, 0, 0], rng)[0] == U for _ in range(n))
    assert abs(hits / n - 0.55) < 0.01


def test_sampled_ordering_zero_tail_random():
    rng = np.random.default_rng(4)
    tails = set()
    for _ in range(200):
        perm = sampled_ordering([0.5, 0.5, 0, 0, 0], rng)
        assert set(perm[:2]) == {U, D}
        tails.add(tuple(perm[2:]))
    assert len(tails) == 6  # all 3! arrangements of the zero-mass actions


def test_sampled_ordering_matches_plackett_luce_exact():
    rng = np.random.default_rng(5)
    d = [0.4, 0.3, 0.15, 0.1, 0.05]
    exact = positional_marginals(plackett_luce_exact(d))
    n = 50_000
    counts = np.zeros((5, 5))
    for _ in range(n):
        for k, a in enumerate(sampled_ordering(d, rng)):
            counts[a, k] += 1
    assert np.abs(counts / n - exact).max() < 0.012


def _table(grid, goal, values):
    return HeuristicTable(grid, goal, np.asarray(values, dtype=np.float64))


def test_rank_actions_h_prefers_goalward(empty3):
    table = backward_dijkstra(empty3, (2, 1))
    rng = np.random.default_rng(0)
    perm = rank_actions((1, 1), table, None, O_H, rng=rng)
    assert perm[0] == R


def test_rank_actions_infeasible_last(empty3):
    table = backward_dijkstra(empty3, (0, 0))
    rng = np.random.default_rng(0)
    for _ in range(20):
        perm = rank_actions((0, 0), table, None, O_H, rng=rng)
        assert set(perm[3:]) == {U, L}  # off-grid moves from the corner


def test_rank_actions_tie_uses_policy(empty3):
    # Up and Down tie on h; the larger probability wins the tie
    vals = np.zeros(9)
    g = empty3.index
    vals[g((1, 0))] = 4.0   # Up target
    vals[g((1, 2))] = 4.0   # Down target
    vals[g((0, 1))] = 5.0   # Left target
    vals[g((2, 1))] = 6.0
    vals[g((1, 1))] = 5.0
    table = _table(empty3, (1, 0), vals)
    d = [0.2, 0.7, 0.1, 0.0, 0.0]
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert rank_actions((1, 1), table, d, O_TIE, rng=rng)[0] == D


def test_rank_actions_h2_prefers_unoccupied(empty3):
    vals = np.zeros(9)
    g = empty3.index
    vals[g((1, 0))] = 1.0
    vals[g((1, 2))] = 1.0
    vals[g((0, 1))] = 3.0
    vals[g((2, 1))] = 3.0
    vals[g((1, 1))] = 2.0
    table = _table(empty3, (1, 0), vals)
    rng = np.random.default_rng(0)
    for _ in range(20):
        perm = rank_actions((1, 1), table, None, O_H2,
                            occupied={(1, 0), (0, 1)}, rng=rng)
        assert perm[0] == D  # ties with Up on h but Up's target is occupied


def test_rank_actions_requires_inputs(empty3):
    table = backward_dijkstra(empty3, (0, 0))
    with pytest.raises(ValueError):
        rank_actions((1, 1), table, None, O_TIE, rng=np.random.default_rng(0))
    with pytest.raises(ValueError):
        rank_actions((1, 1), None, [0.2] * 5, O_H, rng=np.random.default_rng(0))


def test_rank_actions_valid_permutations_fuzz(empty4):
    rng = np.random.default_rng(6)
    table = backward_dijkstra(empty4, (3, 3))
    modes = [O_H, O_H2, O_PI, O_TIE, o_sum(0.5), o_sum(7)]
    for _ in range(300):
        cell = (int(rng.integers(4)), int(rng.integers(4)))
        d = rng.dirichlet(np.ones(5))
        mode = modes[int(rng.integers(len(modes)))]
        perm = rank_actions(cell, table, d, mode, occupied={(2, 2)}, rng=rng)
        assert sorted(perm) == [0, 1, 2, 3, 4]


def test_o_sum_zero_matches_o_h(empty4):
    table = backward_dijkstra(empty4, (3, 2))
    rng_a = np.random.default_rng(77)
    rng_b = np.random.default_rng(77)
    for _ in range(200):
        cell = (int(rng_a.integers(4)) % 4, 0)
        rng_b.integers(4)  # keep streams aligned
        d = rng_a.dirichlet(np.ones(5)).tolist()
        rng_b.dirichlet(np.ones(5))
        a = rank_actions(cell, table, d, o_sum(0.0), rng=rng_a)
        b = rank_actions(cell, table, None, O_H, rng=rng_b)
        assert a == b


def test_o_sum_half_matches_o_tie_unit_table(empty4):
    table = backward_dijkstra(empty4, (1, 2))
    rng_a = np.random.default_rng(13)
    rng_b = np.random.default_rng(13)
    for _ in range(500):
        cell = (int(rng_a.integers(4)), int(rng_a.integers(4)))
        rng_b.integers(4), rng_b.integers(4)
        d = rng_a.dirichlet(np.ones(5))
        rng_b.dirichlet(np.ones(5))
        assert rank_actions(cell, table, d, o_sum(0.5), rng=rng_a) == \
            rank_actions(cell, table, d, O_TIE, rng=rng_b)


def test_o_sum_large_matches_o_pi(empty4):
    table = backward_dijkstra(empty4, (2, 2))
    rng_a = np.random.default_rng(29)
    rng_b = np.random.default_rng(29)
    for _ in range(500):
        cell = (int(rng_a.integers(4)), int(rng_a.integers(4)))
        rng_b.integers(4), rng_b.integers(4)
        d = rng_a.dirichlet(np.ones(5))
        rng_b.dirichlet(np.ones(5))
        assert rank_actions(cell, table, d, o_sum(1e6), rng=rng_a) == \
            rank_actions(cell, table, d, O_PI, rng=rng_b)


def test_o_h_scaling_invariance(empty4):
    table = backward_dijkstra(empty4, (0, 3))
    scaled = HeuristicTable(empty4, (0, 3), table.values * 3.0)
    rng_a = np.random.default_rng(31)
    rng_b = np.random.default_rng(31)
    for _ in range(200):
        cell = (int(rng_a.integers(4)), int(rng_a.integers(4)))
        rng_b.integers(4), rng_b.integers(4)
        assert rank_actions(cell, table, None, O_H, rng=rng_a) == \
            rank_actions(cell, scaled, None, O_H, rng=rng_b)


def test_rank_mode_validation():
    with pytest.raises(ValueError):
        RankMode("nope")
    with pytest.raises(ValueError):
        RankMode("sum", -1.0)


def test_uniform_policy():
    p = UniformPolicy(3)
    dists = p.distributions(0, ((0, 0), (1, 1), (2, 2)))
    assert dists.shape == (3, 5)
    assert np.allclose(dists, 0.2)


def _softmax_setup(tau, kappa, seed=0):
    grid = GridMap(3, 3)
    inst = Instance(grid, ((0, 1),), ((2, 1),))
    tables = [backward_dijkstra(grid, (2, 1))]
    return inst, SoftmaxHeuristicPolicy(inst, tables, tau, kappa, seed)


def test_softmax_policy_low_temperature_concentrates():
    inst, pol = _softmax_setup(tau=1e-9, kappa=0)
    d = pol.distributions(0, inst.starts)[0]
    assert d[Action.RIGHT] == pytest.approx(1.0)


def test_softmax_policy_prefers_goalward():
    inst, pol = _softmax_setup(tau=1.0, kappa=0)
    d = pol.distributions(0, inst.starts)[0]
    assert d.argmax() == Action.RIGHT
    assert d.sum() == pytest.approx(1.0)


def test_softmax_policy_zeroes_infeasible():
    grid = GridMap(3, 3, [(1, 1)])
    inst = Instance(grid, ((1, 0),), ((2, 2),))
    pol = SoftmaxHeuristicPolicy(inst, [backward_dijkstra(grid, (2, 2))], 0.5, 0, 0)
    d = pol.distributions(0, inst.starts)[0]
    assert d[Action.UP] == 0.0    # off the map
    assert d[Action.DOWN] == 0.0  # blocked cell
    assert d.sum() == pytest.approx(1.0)


def test_softmax_policy_at_goal_waits():
    grid = GridMap(3, 3)
    inst = Instance(grid, ((1, 1),), ((1, 1),))
    pol = SoftmaxHeuristicPolicy(inst, [backward_dijkstra(grid, (1, 1))], 1.0, 20, 3)
    d = pol.distributions(0, inst.starts)[0]
    assert d.argmax() == Action.WAIT


def test_softmax_policy_deterministic_per_seed():
    _, a = _softmax_setup(tau=0.5, kappa=30, seed=5)
    _, b = _softmax_setup(tau=0.5, kappa=30, seed=5)
    _, c = _softmax_setup(tau=0.5, kappa=30, seed=6)
    cfg = ((0, 1),)
    assert np.array_equal(a.distributions(0, cfg), b.distributions(0, cfg))
    assert not np.array_equal(a.distributions(0, cfg), c.distributions(0, cfg))


def test_softmax_policy_validation():
    grid = GridMap(2, 2)
    inst = Instance(grid, ((0, 0),), ((1, 1),))
    tables = [backward_dijkstra(grid, (1, 1))]
    with pytest.raises(ValueError):
        SoftmaxHeuristicPolicy(inst, tables, 0.0, 0, 0)
    with pytest.raises(ValueError):
        SoftmaxHeuristicPolicy(inst, tables, 1.0, 101, 0)


def test_ranker_matches_scalar_sampled_distribution(empty4):
    # the vectorized Gumbel conversion and the sequential draw agree on
    # positional marginals
    d = np.array([0.5, 0.25, 0.15, 0.07, 0.03])
    exact = positional_marginals(plackett_luce_exact(d))

    class Fixed(UniformPolicy):
        def distributions(self, t, config):
            return np.tile(d, (self.n_agents, 1))

    ranker = CandidateRanker(empty4, O_PI, provider=Fixed(1), sample_mode="sampled",
                             rng=np.random.default_rng(8))
    cfg = np.array([empty4.index((1, 1))])
    n = 50_000
    counts = np.zeros((5, 5))
    for _ in range(n):
        ranker.candidates(0, cfg)
        for k, a in enumerate(ranker.last_order[0]):
            counts[a, k] += 1
    assert np.abs(counts / n - exact).max() < 0.012
