import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from absplace.baselines import (OracleBudgetError, brute_force_min_abs, kmeans_placement,
                                lloyd_kmeans)
from absplace.solver import InfeasibleError, PlacementProblem, lower_bound, verify_feasibility
from conftest import random_problem
from oracles import brute_min_count


def test_oracle_block_diagonal():
    P = PlacementProblem([[50.0, 0.0], [0.0, 50.0]], [1e3, 1e3], 20.0)
    res = brute_force_min_abs(P)
    assert res.min_count == 2 and res.witness_columns.tolist() == [0, 1]


def test_oracle_dominating_column():
    C = np.array([[5.0, 30.0, 5.0], [5.0, 30.0, 5.0]])
    res = brute_force_min_abs(PlacementProblem(C, [10.0, 40.0, 10.0], 20.0))
    assert res.min_count == 1 and res.witness_columns.tolist() == [1]


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_oracle_matches_full_enumeration(seed):
    rng = np.random.default_rng(seed)
    P = random_problem(rng, 4, 8)
    res = brute_force_min_abs(P)
    assert res.min_count == brute_min_count(P.capacity, P.backhaul, P.min_rate)
    assert res.min_count >= lower_bound(4, P.min_rate, P.backhaul)
    from absplace.solver import PlacementSolution
    sol = PlacementSolution(res.witness_columns, res.rates, 0, 0.0, 0.0, True)
    assert verify_feasibility(P, sol).ok


def test_oracle_budget_and_infeasible():
    with pytest.raises(OracleBudgetError):
        brute_force_min_abs(PlacementProblem(np.ones((1, 21)), 1.0, 0.5))
    with pytest.raises(InfeasibleError):
        brute_force_min_abs(PlacementProblem([[30.0], [30.0]], [30.0], 20.0))
    assert brute_force_min_abs(PlacementProblem(np.ones((2, 3)), 1.0, 0.0)).min_count == 0


def test_lloyd_separates_clusters():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.1, (10, 2)), rng.normal(10, 0.1, (10, 2))])
    centers, labels = lloyd_kmeans(X, 2, rng)
    assert len(set(labels[:10])) == 1 and len(set(labels[10:])) == 1
    assert labels[0] != labels[10]


def test_lloyd_no_empty_clusters():
    X = np.zeros((5, 2))
    centers, labels = lloyd_kmeans(X, 3, np.random.default_rng(1))
    assert set(labels.tolist()) == {0, 1, 2}


def two_clusters():
    rng = np.random.default_rng(3)
    gts = np.vstack([rng.normal([0, 0, 0], 1, (3, 3)), rng.normal([100, 0, 0], 1, (3, 3))])
    grid = np.array([[0, 0, 50.0], [50, 0, 50.0], [100, 0, 50.0]])
    return gts, grid


def test_kmeans_two_clusters():
    gts, grid = two_clusters()
    C = np.full((6, 3), 1e8)
    sol = kmeans_placement(gts, grid, C, 3 * 2e7, 2e7, seed=4)
    assert sol.active_columns.tolist() == [0, 2]
    P = PlacementProblem(C, 3 * 2e7, 2e7)
    assert verify_feasibility(P, sol).ok


def test_kmeans_forced_by_backhaul():
    gts = np.zeros((2, 3))
    grid = np.array([[0, 0, 50.0], [10, 0, 50.0]])
    sol = kmeans_placement(gts, grid, np.full((2, 2), 1e8), 1.5 * 2e7, 2e7, seed=0)
    assert sol.num_abs == 2


def test_kmeans_deterministic_and_callable_capacity():
    gts, grid = two_clusters()

    def cap(g, p):
        return np.full((len(g), len(p)), 1e8)
    a = kmeans_placement(gts, grid, cap, 1e8, 2e7, seed=11)
    b = kmeans_placement(gts, grid, cap, 1e8, 2e7, seed=11)
    np.testing.assert_array_equal(a.active_columns, b.active_columns)
    np.testing.assert_array_equal(a.rates, b.rates)


def test_kmeans_infeasible():
    gts = np.zeros((3, 3))
    grid = np.array([[0, 0, 50.0]])
    with pytest.raises(InfeasibleError):
        kmeans_placement(gts, grid, np.full((3, 1), 1e8), 2e7, 2e7)
    with pytest.raises(ValueError):
        kmeans_placement(gts, grid, np.full((3, 1), 1e8), 1e9, 2e7, max_k=0)
