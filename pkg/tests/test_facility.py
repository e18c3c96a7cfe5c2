"""Facility-location objective, greedy maximizers, and the brute-force oracle."""

import math

import numpy as np
import pytest

from epic.errors import InstanceTooLarge, InvalidInput
from epic.facility import (
    FacilityObjective,
    assign_and_count,
    brute_force_optimum,
    evaluate,
    greedy_select,
    stochastic_sample_size,
)
from epic.proxies import DistanceOracle
from epic.rng import Rng


def make_objective(rows, c0=None):
    return FacilityObjective(DistanceOracle(np.asarray(rows, dtype=np.float64)), c0=c0)


def naive_value(rows, subset, c0):
    """Independent two-loop evaluator."""
    rows = np.asarray(rows, dtype=np.float64)
    total = 0.0
    for i in range(rows.shape[0]):
        best = -math.inf
        for j in subset:
            d = np.sqrt(((rows[i] - rows[j]) ** 2).sum())
            best = max(best, c0 - d)
        total += best
    return total


def random_instance(seed, n, d=3, scale=4.0):
    rng = Rng(seed)
    return np.array([rng.uniform(-scale, scale) for _ in range(n * d)]).reshape(n, d)


class TestEvaluate:
    def test_empty_set_is_zero(self, three_point_line):
        assert evaluate(make_objective(three_point_line), ()) == 0.0

    def test_two_point_hand_case(self):
        obj = make_objective([[0.0], [1.0]], c0=1.0)
        assert evaluate(obj, [0]) == 1.0

    def test_matches_naive_evaluator_exactly(self):
        rows = random_instance(11, 10)
        obj = make_objective(rows)
        rng = Rng(5)
        for _ in range(25):
            k = 1 + rng.randbelow(9)
            subset = rng.sample_indices(10, k)
            assert evaluate(obj, subset) == naive_value(rows, subset, obj.c0)

    def test_rejects_non_candidates(self, three_point_line):
        with pytest.raises(InvalidInput):
            evaluate(make_objective(three_point_line), [5])

    def test_c0_below_max_distance_rejected(self, three_point_line):
        with pytest.raises(InvalidInput):
            make_objective(three_point_line, c0=5.0)

    def test_empty_candidate_set_rejected(self):
        with pytest.raises(InvalidInput):
            FacilityObjective(DistanceOracle(np.zeros((3, 1))), indices=[])


class TestGreedy:
    def test_single_candidate(self):
        sel = greedy_select(make_objective([[2.0]]), 1)
        assert sel.medoids == (0,)
        assert sel.gains == (0.0,)  # c0 is 0 for a single point

    def test_three_point_worked_example(self, three_point_line):
        obj = make_objective(three_point_line)
        assert obj.c0 == 10.0
        for mode in ("naive", "lazy"):
            sel = greedy_select(obj, 2, mode=mode)
            assert sel.medoids == (1, 2)
            assert sel.gains == (20.0, 9.0)
            assert sel.objective_value == 29.0

    def test_k_equals_n_selects_everything(self):
        rows = random_instance(3, 8)
        obj = make_objective(rows)
        sel = greedy_select(obj, 8)
        assert sorted(sel.medoids) == list(range(8))
        assert sel.objective_value == pytest.approx(8 * obj.c0, abs=1e-9)

    def test_k_larger_than_n_clamps(self, three_point_line):
        sel = greedy_select(make_objective(three_point_line), 50)
        assert sorted(sel.medoids) == [0, 1, 2]

    def test_lazy_equals_naive_everywhere(self):
        for seed in range(40):
            rows = random_instance(seed, 12)
            obj = make_objective(rows)
            for k in (1, 3, 6, 12):
                a = greedy_select(obj, k, mode="naive")
                b = greedy_select(obj, k, mode="lazy")
                assert a.medoids == b.medoids
                assert a.gains == b.gains

    def test_lazy_equals_naive_with_ties(self):
        # duplicated points force exactly tied gains
        rows = np.array([[0.0], [0.0], [1.0], [1.0], [5.0]])
        obj = make_objective(rows)
        for k in range(1, 6):
            a = greedy_select(obj, k, mode="naive")
            b = greedy_select(obj, k, mode="lazy")
            assert a.medoids == b.medoids

    def test_gains_non_increasing(self):
        for seed in range(20):
            obj = make_objective(random_instance(seed, 10))
            sel = greedy_select(obj, 10, mode="naive")
            for g0, g1 in zip(sel.gains, sel.gains[1:]):
                assert g1 <= g0 + 1e-9

    def test_stochastic_deterministic_per_seed(self):
        obj = make_objective(random_instance(77, 20))
        a = greedy_select(obj, 5, mode="stochastic", seed=123)
        b = greedy_select(obj, 5, mode="stochastic", seed=123)
        c = greedy_select(obj, 5, mode="stochastic", seed=124)
        assert a.medoids == b.medoids
        assert len(c.medoids) == 5

    def test_stochastic_sample_size_formula(self):
        assert stochastic_sample_size(3, 2, 0.1) == math.ceil(1.5 * math.log(10.0))
        assert stochastic_sample_size(100, 10, 0.1) == math.ceil(10 * math.log(10.0))
        assert stochastic_sample_size(5, 5, 0.9) == 1

    def test_stochastic_full_sample_matches_naive(self):
        # epsilon tiny enough that every step samples the whole pool
        obj = make_objective(random_instance(5, 9))
        a = greedy_select(obj, 3, mode="stochastic", seed=0, epsilon=1e-9)
        b = greedy_select(obj, 3, mode="naive")
        assert a.medoids == b.medoids

    def test_rejects_bad_arguments(self, three_point_line):
        obj = make_objective(three_point_line)
        with pytest.raises(InvalidInput):
            greedy_select(obj, 0)
        with pytest.raises(InvalidInput):
            greedy_select(obj, 1, mode="fancy")
        with pytest.raises(InvalidInput):
            greedy_select(obj, 1, epsilon=1.5)


class TestBruteForce:
    def test_k_equals_n_takes_everything(self):
        rows = random_instance(2, 6)
        obj = make_objective(rows)
        subset, value = brute_force_optimum(obj, 6)
        assert subset == tuple(range(6))
        assert value == pytest.approx(6 * obj.c0, abs=1e-9)

    def test_three_point_optimum_value(self, three_point_line):
        _, value = brute_force_optimum(make_objective(three_point_line), 2)
        assert value == 29.0

    def test_approximation_guarantee_sample(self):
        bound = 1.0 - 1.0 / math.e
        for seed in range(30):
            rng = Rng(seed)
            n = 4 + rng.randbelow(9)
            k = 1 + rng.randbelow(4)
            obj = make_objective(random_instance(seed + 1000, n))
            for mode in ("naive", "lazy"):
                sel = greedy_select(obj, k, mode=mode)
                _, opt = brute_force_optimum(obj, k)
                assert sel.objective_value >= bound * opt - 1e-9

    def test_guard_against_large_instances(self):
        obj = make_objective(random_instance(0, 21))
        with pytest.raises(InstanceTooLarge):
            brute_force_optimum(obj, 2)


class TestAssignment:
    def test_single_medoid_takes_all(self):
        obj = make_objective(random_instance(8, 7))
        sel = assign_and_count(obj, [3])
        assert sel.gamma == {3: 7}
        assert all(m == 3 for m in sel.assignment.values())

    def test_three_point_assignment(self, three_point_line):
        sel = assign_and_count(make_objective(three_point_line), [1, 2])
        assert sel.assignment == {0: 1, 1: 1, 2: 2}
        assert sel.gamma == {1: 2, 2: 1}

    def test_symmetric_pair_self_assigns(self):
        sel = assign_and_count(make_objective([[0.0], [2.0]]), [0, 1])
        assert sel.gamma == {0: 1, 1: 1}

    def test_gamma_sums_to_n_and_order_invariant(self):
        obj = make_objective(random_instance(21, 11))
        a = assign_and_count(obj, [2, 5, 9])
        b = assign_and_count(obj, [9, 2, 5])
        assert a.assignment == b.assignment
        assert sum(a.gamma.values()) == 11

    def test_every_distinct_medoid_keeps_itself(self):
        for seed in range(10):
            obj = make_objective(random_instance(seed + 50, 9))
            sel = greedy_select(obj, 4)
            for m in sel.medoids:
                assert sel.assignment[m] == m
                assert sel.gamma[m] >= 1

    def test_tie_goes_to_lowest_medoid(self):
        # point 1 sits exactly between medoids 0 and 2
        sel = assign_and_count(make_objective([[0.0], [1.0], [2.0]]), [0, 2])
        assert sel.assignment[1] == 0

    def test_empty_medoid_set_rejected(self, three_point_line):
        with pytest.raises(InvalidInput):
            assign_and_count(make_objective(three_point_line), [])


class TestSubmodularityProperties:
    def test_monotone_and_diminishing(self):
        violations = 0
        for seed in range(100):
            rng = Rng(seed)
            n = 5 + rng.randbelow(6)
            obj = make_objective(random_instance(seed + 7, n))
            perm = rng.sample_indices(n, n)
            cut1 = 1 + rng.randbelow(n - 2)
            cut2 = cut1 + rng.randbelow(n - cut1)
            small, big = sorted(perm[:cut1]), sorted(perm[:cut2])
            extra = perm[-1]
            if extra in big:
                continue
            f_small = evaluate(obj, small)
            f_big = evaluate(obj, big)
            gain_small = evaluate(obj, small + [extra]) - f_small
            gain_big = evaluate(obj, big + [extra]) - f_big
            if gain_small < -1e-9 or gain_big < -1e-9:
                violations += 1
            if gain_small < gain_big - 1e-9:
                violations += 1
        assert violations == 0
