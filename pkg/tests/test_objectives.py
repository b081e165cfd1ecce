"""Tests for OLSE / GLSE / GLSE_k objectives and weighted coresets."""

import sys
import os

import numpy as np
import pytest

# Add parent directory to path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.experiments.datagen import random_k_query, random_query
from src.panel.dataset import PanelDataset
from src.regression.objectives import (
    GlseKQuery,
    GlseQuery,
    WeightedCoreset,
    coreset_glse_objective,
    coreset_glsek_objective,
    coreset_olse_objective,
    glse_cost_matrix,
    glse_pair,
    glse_total,
    glsek_assignment,
    glsek_total,
    individual_glse_costs,
    olse_pair,
    olse_total,
    p_rho_matrix,
    pair_costs,
)
from src.utils.errors import InvalidQueryError, ValidationError


def _single():
    """d=1, q=1, x=(1,2), y=(2,3)."""
    return PanelDataset.from_arrays(np.array([[[1.0], [2.0]]]), np.array([[2.0, 3.0]]))


def _random_panel(seed, n=5, t=6, d=3, masked=0.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, t, d))
    y = rng.normal(size=(n, t))
    mask = rng.uniform(size=(n, t)) < masked
    return PanelDataset.from_arrays(x, y, mask)


def test_olse_pair():
    ds = PanelDataset.from_arrays(np.array([[[1.0, 2.0]]]), np.array([[5.0]]))
    assert olse_pair(ds, 0, 0, np.array([1.0, 1.0])) == pytest.approx(4.0)
    assert olse_pair(ds, 0, 0, np.array([1.0, 2.0])) == pytest.approx(0.0)


def test_masked_pair_costs_nothing_itself():
    ds = PanelDataset.from_arrays(np.ones((1, 2, 1)), np.ones((1, 2)), np.array([[True, False]]))
    assert olse_pair(ds, 0, 0, np.array([3.0])) == 0.0
    assert glse_pair(ds, 0, 0, GlseQuery(np.array([3.0]), np.array([0.5])), 1) == 0.0


def test_glse_pair_worked_example():
    ds = _single()
    query = GlseQuery(np.array([1.0]), np.array([0.5]))
    assert glse_pair(ds, 0, 0, query, 1) == pytest.approx(0.75)
    assert glse_pair(ds, 0, 1, query, 1) == pytest.approx(0.25)
    assert glse_total(ds, query, 1) == pytest.approx(1.0)


def test_glse_boundary_rho():
    """||rho||^2 = 1 - lambda scales the first term by lambda."""
    ds = _single()
    lam = 0.2
    query = GlseQuery(np.array([0.0]), np.array([np.sqrt(1 - lam)]), lam)
    assert glse_pair(ds, 0, 0, query, 1) == pytest.approx(lam * 4.0)


def test_zero_rho_matches_olse():
    ds = _random_panel(3)
    beta = np.array([0.3, -1.0, 2.0])
    query = GlseQuery(beta, np.zeros(2))
    assert glse_total(ds, query, 2) == pytest.approx(olse_total(ds, beta), rel=1e-12)
    for i in range(ds.n_individuals):
        for t in range(ds.n_periods):
            assert glse_pair(ds, i, t, query, 2) == pytest.approx(olse_pair(ds, i, t, beta), rel=1e-12)


def test_exact_fit_costs_zero():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 5, 2))
    beta = np.array([1.5, -0.5])
    ds = PanelDataset.from_arrays(x, x @ beta)
    assert glse_total(ds, GlseQuery(beta, np.array([0.4, 0.3])), 2) == pytest.approx(0.0, abs=1e-20)


def test_query_validation():
    with pytest.raises(InvalidQueryError):
        GlseQuery(np.zeros(2), np.array([0.95]), lam=0.2)
    with pytest.raises(InvalidQueryError):
        GlseQuery(np.zeros(2), np.array([1.1]))
    with pytest.raises(InvalidQueryError):
        GlseQuery(np.zeros(2), np.array([0.1]), lam=1.5)
    with pytest.raises(InvalidQueryError):
        GlseKQuery(())

    ds = _single()
    with pytest.raises(InvalidQueryError):
        glse_total(ds, GlseQuery(np.zeros(2), np.array([0.1])), 1)
    with pytest.raises(InvalidQueryError):
        glse_total(ds, GlseQuery(np.zeros(1), np.array([0.1])), 2)


def test_pair_costs_match_cost_matrix():
    ds = _random_panel(5, masked=0.2)
    query = random_query(3, 3, 0.2, seed=7)
    matrix = glse_cost_matrix(ds, query, 3)
    i, t = np.divmod(np.arange(ds.n_pairs), ds.n_periods)
    assert np.allclose(pair_costs(ds, i, t, query, 3), matrix.reshape(-1), rtol=1e-12, atol=1e-14)
    assert np.allclose(individual_glse_costs(ds, query, 3), matrix.sum(axis=1))


def test_q_beyond_horizon():
    """q >= T uses every earlier residual of the individual."""
    ds = _random_panel(6, t=3)
    query = GlseQuery(np.zeros(3), np.array([0.3, 0.2, 0.1, 0.1]))
    r = ds.y
    expected = (r[:, 2] - 0.3 * r[:, 1] - 0.2 * r[:, 0]) ** 2
    assert np.allclose(glse_cost_matrix(ds, query, 4)[:, 2], expected)


def test_matrix_form_equivalence():
    """sum_t glse_pair = ||P_rho (y_i - X_i beta)||^2 for fully observed individuals."""
    rng = np.random.default_rng(8)
    for trial in range(300):
        q = int(rng.integers(1, 4))
        t = int(rng.integers(q + 1, 13))
        ds = PanelDataset.from_arrays(rng.normal(size=(1, t, 2)), rng.normal(size=(1, t)))
        query = random_query(2, q, 0.2, rng)
        r = ds.y[0] - ds.x[0] @ query.beta
        whitened = p_rho_matrix(query.rho, t) @ r
        assert individual_glse_costs(ds, query, q)[0] == pytest.approx(whitened @ whitened, rel=1e-9)


def test_lambda_inequalities():
    """Lower bound against OLSE and the per-pair window upper bound."""
    rng = np.random.default_rng(9)
    lam = 0.2
    checked = 0
    for trial in range(5000):
        q = int(rng.integers(1, 3))
        ds = _random_panel(int(rng.integers(0, 10_000)), n=6, t=int(rng.integers(2, 8)), d=2)
        query = random_query(2, q, lam, rng)
        assert glse_total(ds, query, q) >= lam * olse_total(ds, query.beta) - 1e-9

        costs = glse_cost_matrix(ds, query, q)
        r = ds.y - ds.x @ query.beta
        olse = r * r
        window = olse.copy()
        for j in range(1, q + 1):
            window[:, j:] += olse[:, :-j]
        assert np.all(costs <= 2.0 * window + 1e-9)
        checked += costs.size
    assert checked >= 100_000


def test_glsek_reductions():
    ds = _random_panel(10)
    query = random_query(3, 1, 0.2, seed=1)
    single = GlseKQuery((query,))
    doubled = GlseKQuery((query, query))
    assert glsek_total(ds, single, 1) == pytest.approx(glse_total(ds, query, 1), rel=1e-12)
    assert glsek_total(ds, doubled, 1) == pytest.approx(glse_total(ds, query, 1), rel=1e-12)
    assert np.all(glsek_assignment(ds, doubled, 1) == 0)


def test_glsek_picks_matching_slope():
    """y = 2x and y = 3x are each fit exactly by one parameter tuple."""
    x = np.array([[[1.0], [2.0], [3.0]], [[1.0], [-1.0], [0.5]]])
    y = np.stack([2.0 * x[0, :, 0], 3.0 * x[1, :, 0]])
    ds = PanelDataset.from_arrays(x, y)
    rho = np.array([0.3])
    query = GlseKQuery((GlseQuery(np.array([2.0]), rho), GlseQuery(np.array([3.0]), rho)))
    assert glsek_total(ds, query, 1) == pytest.approx(0.0, abs=1e-20)
    assert list(glsek_assignment(ds, query, 1)) == [0, 1]


def test_coreset_objectives():
    ds = _random_panel(11)
    query = random_query(3, 2, 0.2, seed=2)
    full = WeightedCoreset.full(ds)
    assert coreset_glse_objective(full, ds, query, 2) == pytest.approx(glse_total(ds, query, 2), rel=1e-12)
    assert coreset_olse_objective(full, ds, query.beta) == pytest.approx(olse_total(ds, query.beta), rel=1e-12)

    empty = WeightedCoreset(np.zeros(0), np.zeros(0), np.zeros(0))
    assert coreset_glse_objective(empty, ds, query, 2) == 0.0
    assert coreset_glsek_objective(empty, ds, GlseKQuery((query,)), 2) == 0.0

    single = WeightedCoreset([1], [3], [2.0])
    assert coreset_glse_objective(single, ds, query, 2) == pytest.approx(2.0 * glse_pair(ds, 1, 3, query, 2))

    kquery = random_k_query(3, 2, 0.2, 3, seed=3)
    assert coreset_glsek_objective(full, ds, kquery, 2) == pytest.approx(glsek_total(ds, kquery, 2), rel=1e-12)
    assert coreset_glsek_objective(full, ds, GlseKQuery((query,)), 2) == pytest.approx(
        coreset_glse_objective(full, ds, query, 2), rel=1e-12
    )


def test_coreset_glsek_minimizes_per_individual():
    """Two entries of one individual with weights (1, 3): min over l of the weighted sums."""
    ds = _random_panel(12, n=2, t=4, d=1)
    a = GlseQuery(np.array([0.5]), np.array([0.2]))
    b = GlseQuery(np.array([-1.0]), np.array([-0.4]))
    coreset = WeightedCoreset([0, 0], [1, 3], [1.0, 3.0])
    sums = [
        glse_pair(ds, 0, 1, params, 1) + 3.0 * glse_pair(ds, 0, 3, params, 1)
        for params in (a, b)
    ]
    assert coreset_glsek_objective(coreset, ds, GlseKQuery((a, b)), 1) == pytest.approx(min(sums), rel=1e-12)


def test_objectives_additive_over_individuals():
    ds = _random_panel(13)
    query = random_query(3, 1, 0.2, seed=4)
    parts = [glse_total(ds.subset([i]), query, 1) for i in range(ds.n_individuals)]
    assert sum(parts) == pytest.approx(glse_total(ds, query, 1), rel=1e-12)


def test_weighted_coreset_structure():
    merged = WeightedCoreset.from_draws([2, 0, 2], [1, 3, 1], [0.5, 1.0, 0.25])
    assert merged.size == 2
    assert list(merged.individuals) == [0, 2]
    assert merged.weights[1] == pytest.approx(0.75)
    assert list(merged.individual_set()) == [0, 2]
    assert list(merged.periods_of(2)) == [1]
    assert set(merged.groups()) == {0, 2}

    with pytest.raises(ValidationError):
        WeightedCoreset([0, 0], [1, 1], [1.0, 1.0])
    with pytest.raises(ValidationError):
        WeightedCoreset([0], [1], [-1.0])
    with pytest.raises(ValidationError):
        WeightedCoreset([5], [0], [1.0]).check_against(_single())


def test_p_rho_matrix_shape():
    p = p_rho_matrix(np.array([0.5, 0.2]), 4)
    expected = np.array([
        [np.sqrt(1 - 0.29), 0, 0, 0],
        [-0.5, 1, 0, 0],
        [-0.2, -0.5, 1, 0],
        [0, -0.2, -0.5, 1],
    ])
    assert np.allclose(p, expected)


if __name__ == "__main__":
    test_glse_pair_worked_example()
    test_matrix_form_equivalence()
    test_lambda_inequalities()
    print("[OK] objective tests passed")
