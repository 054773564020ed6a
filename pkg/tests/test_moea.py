import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moorient import moea
from moorient.instances import generate_instance
from moorient.objectives import evaluate


# ---------------------------------------------------------------------------
# dominance and sorting


def brute_force_ranks(objs, cvs):
    n = len(cvs)
    dominated_by = [
        {j for j in range(n) if j != i and moea.dominates(objs[j], cvs[j], objs[i], cvs[i])} for i in range(n)
    ]
    ranks = np.full(n, -1)
    rank = 0
    assigned = set()
    while len(assigned) < n:
        front = [i for i in range(n) if i not in assigned and dominated_by[i] <= assigned]
        for i in front:
            ranks[i] = rank
        assigned.update(front)
        rank += 1
    return ranks


def test_single_point_is_rank_zero():
    assert moea.nondominated_sort(np.array([[1.0, 2.0]]), np.array([0.0]))[0] == 0


def test_incomparable_points_share_rank_zero():
    ranks = moea.nondominated_sort(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    assert list(ranks) == [0, 0]


def test_feasible_dominates_infeasible():
    objs = np.array([[0.0, 0.0], [100.0, 100.0]])
    cvs = np.array([0.0, 0.5])
    assert moea.dominates(objs[0], cvs[0], objs[1], cvs[1])
    assert not moea.dominates(objs[1], cvs[1], objs[0], cvs[0])


def test_lower_violation_dominates():
    objs = np.zeros((2, 2))
    cvs = np.array([0.1, 0.2])
    assert moea.dominates(objs[0], cvs[0], objs[1], cvs[1])


@pytest.mark.parametrize("n_obj", [2, 3])
@pytest.mark.parametrize("seed", range(3))
def test_sort_matches_bruteforce(n_obj, seed):
    rng = np.random.default_rng(seed)
    objs = rng.random((60, n_obj))
    cvs = np.where(rng.random(60) < 0.3, rng.random(60), 0.0)
    got = moea.nondominated_sort(objs, cvs)
    expect = brute_force_ranks(objs, cvs)
    assert np.array_equal(got, expect)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_dominance_is_strict_partial_order(seed):
    rng = np.random.default_rng(seed)
    objs = rng.random((5, 2)).round(1)  # rounding forces ties
    cvs = np.where(rng.random(5) < 0.5, rng.random(5).round(1), 0.0)
    for i in range(5):
        assert not moea.dominates(objs[i], cvs[i], objs[i], cvs[i])
    for i in range(5):
        for j in range(5):
            for k in range(5):
                if moea.dominates(objs[i], cvs[i], objs[j], cvs[j]) and moea.dominates(
                    objs[j], cvs[j], objs[k], cvs[k]
                ):
                    assert moea.dominates(objs[i], cvs[i], objs[k], cvs[k])


def test_ranks_have_cross_front_dominators(rng):
    objs = rng.random((40, 2))
    cvs = np.zeros(40)
    ranks = moea.nondominated_sort(objs, cvs)
    for i in np.flatnonzero(ranks > 0):
        above = np.flatnonzero(ranks == ranks[i] - 1)
        assert any(moea.dominates(objs[j], cvs[j], objs[i], cvs[i]) for j in above)
    for r in range(int(ranks.max()) + 1):
        front = np.flatnonzero(ranks == r)
        for i in front:
            for j in front:
                assert not moea.dominates(objs[i], cvs[i], objs[j], cvs[j])


# ---------------------------------------------------------------------------
# crowding distance


def test_crowding_two_points_infinite():
    d = moea.crowding_distance(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.all(np.isinf(d))


def test_crowding_three_collinear_hand_value():
    objs = np.array([[0.0, 2.0], [1.0, 1.0], [2.0, 0.0]])
    d = moea.crowding_distance(objs)
    # middle point: per objective (2 - 0) / range 2 = 1, summed over 2 objectives
    assert d[1] == pytest.approx(2.0)
    assert np.isinf(d[0]) and np.isinf(d[2])


def test_crowding_constant_column_contributes_zero():
    objs = np.array([[0.0, 5.0], [1.0, 5.0], [2.0, 5.0]])
    d = moea.crowding_distance(objs)
    assert d[1] == pytest.approx(2.0 / 2.0)  # only the varying column counts
    assert np.isfinite(d[1])


# ---------------------------------------------------------------------------
# reference directions and NSGA-III survival


def test_das_dennis_divisions_4_two_objectives():
    dirs = moea.das_dennis_directions(2, 4)
    expect = {(0.0, 1.0), (0.25, 0.75), (0.5, 0.5), (0.75, 0.25), (1.0, 0.0)}
    assert {tuple(row) for row in dirs} == expect


def test_das_dennis_counts():
    assert len(moea.das_dennis_directions(3, 12)) == math.comb(14, 2)  # 91
    assert len(moea.das_dennis_directions(2, 99)) == 100


def test_divisions_for_population():
    assert moea.divisions_for_population(100, 2) == 99
    assert moea.divisions_for_population(100, 3) == 12
    assert moea.divisions_for_population(91, 3) == 12


def test_simplex_rows_sum_to_one():
    dirs = moea.das_dennis_directions(3, 7)
    np.testing.assert_allclose(dirs.sum(axis=1), 1.0)
    assert np.all(dirs >= 0)


def test_nsga3_survival_small_population_unchanged(rng):
    objs = rng.random((5, 2))
    cvs = np.zeros(5)
    dirs = moea.das_dennis_directions(2, 9)
    idx = moea.nsga3_survival(objs, cvs, 10, dirs, rng)
    assert np.array_equal(idx, np.arange(5))


def test_nsga3_niche_counts_balanced(rng):
    # one big mutually non-dominating front; survivors should spread over niches
    theta = np.linspace(0, np.pi / 2, 200)
    objs = np.c_[np.cos(theta), np.sin(theta)] + rng.normal(scale=1e-9, size=(200, 2))
    cvs = np.zeros(200)
    dirs = moea.das_dennis_directions(2, moea.divisions_for_population(50, 2))
    idx = moea.nsga3_survival(objs, cvs, 50, dirs, rng)
    assert len(idx) == 50
    norm = moea._normalize(objs[idx])
    niche, _ = moea._associate(norm, dirs)
    counts = np.bincount(niche, minlength=len(dirs))
    occupied = counts[counts > 0]
    assert occupied.max() - occupied.min() <= 1


def test_nsga2_survival_prefers_rank_then_crowding(rng):
    objs = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.4, 0.4]])
    cvs = np.zeros(4)
    idx = moea.nsga2_survival(objs, cvs, 3)
    assert set(idx) == {0, 1, 2}  # the dominated point drops first


# ---------------------------------------------------------------------------
# greedy initialization


def test_density_probabilities_equal_densities():
    p = moea.density_probabilities(np.array([1.0, 1.0]), np.array([2.0, 2.0]))
    np.testing.assert_allclose(p, [0.5, 0.5])


def test_density_probabilities_hand_softmax():
    p = moea.density_probabilities(np.array([1.0, 0.5]), np.array([1.0, 1.0]))
    z = np.exp(1.0) + np.exp(0.5)
    np.testing.assert_allclose(p, [np.exp(1.0) / z, np.exp(0.5) / z])
    assert p[0] == pytest.approx(0.622, abs=1e-3)


def test_greedy_initialize_zero_budget_gives_empty(rng):
    inst = generate_instance(15, 2, 0.0, seed=4)
    pop = moea.greedy_initialize(inst, 20, rng)
    assert all(not bits.any() for bits in pop)


def test_greedy_initialize_respects_budget(rng):
    inst = generate_instance(30, 2, 2.0, seed=4)
    pop = moea.greedy_initialize(inst, 30, rng)
    # the sampled order itself is within budget, so some selection exists
    assert any(bits.any() for bits in pop)
    assert all(len(bits) == 29 for bits in pop)


# ---------------------------------------------------------------------------
# variation operators


def test_vary_binary_no_ops_copy_parents(rng):
    parents = [rng.random(12) < 0.5 for _ in range(4)]
    children = moea.vary_binary(parents, rng, p_crossover=0.0, flip_rate=0.0)
    for p, c in zip(parents, children):
        assert np.array_equal(p, c)


def test_two_point_crossover_window_structure(rng):
    a = np.zeros(20, dtype=bool)
    b = np.ones(20, dtype=bool)
    ca, cb = moea.two_point_crossover(a, b, rng)
    # child a equals parent a outside the window, parent b inside
    window = np.flatnonzero(ca)
    outside = np.setdiff1d(np.arange(20), window)
    assert np.all(~ca[outside])
    if window.size:
        assert np.array_equal(window, np.arange(window[0], window[-1] + 1))
    assert np.array_equal(ca ^ cb, np.ones(20, dtype=bool))


def test_bit_flip_rate_statistics(rng):
    length = 40
    flips = 0
    trials = 2000  # 2000 children x 40 bits, mean flips per child should be ~1
    base = np.zeros(length, dtype=bool)
    for _ in range(trials):
        child = moea.bit_flip(base, rng)
        flips += child.sum()
    mean_flips = flips / trials
    assert abs(mean_flips - 1.0) < 0.05


def test_vary_permutation_validity(rng):
    parents = [rng.permutation(np.arange(1, 30)) for _ in range(10)]
    children = moea.vary_permutation(parents, rng)
    assert len(children) == 10
    for child in children:
        assert sorted(child.tolist()) == list(range(1, 30))


def test_ox_identical_parents_identical_children(rng):
    p = rng.permutation(np.arange(1, 15))
    ca, cb = moea.order_crossover(p, p.copy(), rng)
    assert np.array_equal(ca, p) and np.array_equal(cb, p)


def test_inversion_mutation_example():
    perm = np.array([1, 2, 3, 4, 5])

    class FixedRng:
        def choice(self, n, size, replace):
            return np.array([1, 3])

    got = moea.inversion_mutation(perm, FixedRng())
    assert got.tolist() == [1, 4, 3, 2, 5]


# ---------------------------------------------------------------------------
# chromosome decodings


def fig_style_instance():
    # seven cities placed so that depot,1,4,3,6 fits a budget but adding 2 breaks it
    coords = np.array(
        [
            [0.0, 0.0],  # depot
            [0.1, 0.0],  # 1
            [0.9, 0.9],  # 2
            [0.3, 0.0],  # 3
            [0.2, 0.0],  # 4
            [0.8, 0.8],  # 5
            [0.4, 0.0],  # 6
        ]
    )
    from moorient.instances import Instance

    return Instance(
        name="fig", n_cities=7, k_profits=1, coords=coords, profits=np.full((7, 1), 0.5), t_max=1.0, seed=0
    )


def test_single_chromosome_budget_prefix():
    inst = fig_style_instance()
    sol = moea.decode_single_chromosome(inst, np.array([1, 4, 3, 6, 2, 5]))
    assert sol.tour == (1, 4, 3, 6)
    assert sol.cv == 0.0


def test_single_chromosome_zero_budget():
    inst = generate_instance(10, 1, 0.0, seed=8)
    sol = moea.decode_single_chromosome(inst, np.arange(1, 10))
    assert sol.tour == ()


def test_single_chromosome_always_feasible(rng):
    inst = generate_instance(40, 1, 3.0, seed=13)
    for _ in range(50):
        sol = moea.decode_single_chromosome(inst, rng.permutation(np.arange(1, 40)))
        assert sol.cv == 0.0


def test_double_chromosome_fig_example():
    inst = fig_style_instance()
    bits = np.zeros(6, dtype=bool)
    for c in (1, 3, 4, 6):
        bits[c - 1] = True
    sol = moea.decode_double_chromosome(inst, bits, np.array([1, 4, 3, 6, 2, 5]))
    assert sol.tour == (1, 4, 3, 6)


def test_double_chromosome_empty_bits():
    inst = generate_instance(10, 1, 2.0, seed=8)
    sol = moea.decode_double_chromosome(inst, np.zeros(9, dtype=bool), np.arange(1, 10))
    assert sol.tour == () and sol.cv == 0.0


def test_double_chromosome_all_ones_violates_on_500():
    inst = generate_instance(500, 1, 10.0, seed=12345)
    # oracle: any tour through all cities is at least the sum of per-city
    # nearest-neighbor distances, which already exceeds the budget
    from moorient.instances import distance_matrix

    d = distance_matrix(inst)
    np.fill_diagonal(d, np.inf)
    lower_bound = d.min(axis=1).sum()
    assert lower_bound > inst.t_max
    sol = moea.decode_double_chromosome(inst, np.ones(499, dtype=bool), np.arange(1, 500))
    assert sol.cv > 0


# ---------------------------------------------------------------------------
# a full generation


def _evaluate_bits(inst):
    def evaluator(genomes):
        out = []
        for bits in genomes:
            tour = [int(c) for c in np.flatnonzero(bits) + 1]
            sol = evaluate(inst, [0] + tour, tour)
            out.append(moea.Individual(genome=bits, objectives=sol.objectives, cv=sol.cv, solution=sol))
        return out

    return evaluator


def test_generation_of_clones_stays_clones(rng):
    inst = generate_instance(12, 1, 3.0, seed=6)
    bits = np.zeros(11, dtype=bool)
    bits[2] = True
    evaluator = _evaluate_bits(inst)
    population = evaluator([bits.copy() for _ in range(10)])
    engine = moea.Engine.create("nsga2", 10, 2)
    out = moea.moea_generation(
        engine, population, evaluator, lambda ps, r: [p.copy() for p in ps], rng
    )
    assert len(out) == 10
    assert all(np.array_equal(ind.genome, bits) for ind in out)


@pytest.mark.parametrize("kind", ["nsga2", "nsga3"])
def test_generation_preserves_population_size(kind, rng):
    inst = generate_instance(15, 1, 2.5, seed=3)
    evaluator = _evaluate_bits(inst)
    population = evaluator([rng.random(14) < 0.2 for _ in range(20)])
    engine = moea.Engine.create(kind, 20, 2)
    for _ in range(10):
        population = moea.moea_generation(engine, population, evaluator, moea.vary_binary, rng)
        assert len(population) == 20


def test_elitism_keeps_hypervolume_nondecreasing(rng):
    from moorient.metrics import hypervolume, pareto_filter

    inst = generate_instance(20, 1, 2.0, seed=2024)
    evaluator = _evaluate_bits(inst)
    population = evaluator([rng.random(19) < 0.15 for _ in range(24)])
    engine = moea.Engine.create("nsga2", 24, 2)
    ref = np.array([0.0, -2.0])
    prev = None
    for _ in range(50):
        feas = [ind.objectives for ind in population if ind.cv == 0]
        hv = hypervolume(pareto_filter(np.array(feas)), ref) if feas else 0.0
        if prev is not None:
            assert hv >= prev - 1e-12
        prev = hv
        population = moea.moea_generation(engine, population, evaluator, moea.vary_binary, rng)
