import logging

import numpy as np
import pytest

from core.baselines import (
    KnnConfig,
    SoftImputeConfig,
    knn_predict,
    select_softimpute_lambda,
    softimpute_fit,
    svt,
)
from core.errors import ArgumentError


def _all_entries(m, n):
    rows, cols = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
    return np.stack([rows.ravel(), cols.ravel()], axis=1)


@pytest.fixture
def rank_one():
    gen = np.random.default_rng(3)
    matrix = np.outer(gen.uniform(1.0, 2.0, 10), gen.uniform(1.0, 2.0, 10))
    entries = _all_entries(10, 10)
    # Two cyclic diagonals keep every row and column observed; 30 random cells on top
    observed = np.zeros((10, 10), dtype=bool)
    observed[np.arange(10), np.arange(10)] = True
    observed[np.arange(10), (np.arange(10) + 1) % 10] = True
    free = np.flatnonzero(~observed.ravel())
    observed.ravel()[gen.choice(free, size=30, replace=False)] = True
    return matrix, entries, observed.ravel()


# SVT


def test_svt_examples():
    np.testing.assert_allclose(svt(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]), atol=1e-12)
    np.testing.assert_allclose(svt(np.diag([3.0, 2.0]), 0.5, max_rank=1), np.diag([2.5, 0.0]), atol=1e-12)
    np.testing.assert_allclose(svt(np.ones((3, 3)), 5.0), np.zeros((3, 3)))
    with pytest.raises(ArgumentError):
        svt(np.eye(2), -1.0)


def test_svt_is_nonexpansive(rng):
    for _ in range(50):
        a, b = rng.normal(size=(6, 5)), rng.normal(size=(6, 5))
        lam = rng.uniform(0.0, 2.0)
        assert np.linalg.norm(svt(a, lam) - svt(b, lam)) <= np.linalg.norm(a - b) + 1e-12


# SoftImpute


def test_softimpute_fully_observed_without_shrinkage(rng):
    matrix = rng.normal(size=(10, 8))
    entries = _all_entries(10, 8)
    result = softimpute_fit((entries, matrix.ravel()), 10, 8, SoftImputeConfig(lam=0.0))
    np.testing.assert_allclose(result.completion, matrix, atol=1e-8)
    assert result.converged


def test_softimpute_large_lambda_gives_zero(rng):
    matrix = rng.normal(size=(6, 6))
    sigma_max = np.linalg.norm(matrix, ord=2)
    result = softimpute_fit((_all_entries(6, 6), matrix.ravel()), 6, 6, SoftImputeConfig(lam=sigma_max))
    np.testing.assert_allclose(result.completion, np.zeros((6, 6)), atol=1e-10)


def test_softimpute_recovers_rank_one(rank_one):
    matrix, entries, observed = rank_one
    train = (entries[observed], matrix.ravel()[observed])
    cfg = SoftImputeConfig(lam=0.01, max_iters=3000, tolerance=1e-10)
    result = softimpute_fit(train, 10, 10, cfg)

    held = entries[~observed]
    error = result.completion[held[:, 0], held[:, 1]] - matrix[held[:, 0], held[:, 1]]
    assert np.sqrt(np.mean(error**2)) < 0.05


def test_softimpute_objective_is_nonincreasing(rank_one):
    matrix, entries, observed = rank_one
    train = (entries[observed], matrix.ravel()[observed])
    result = softimpute_fit(train, 10, 10, SoftImputeConfig(lam=0.5, max_iters=200, tolerance=1e-12))
    trace = result.objective_trace
    assert np.all(np.diff(trace) <= 1e-10 * trace[0])


def test_softimpute_reports_non_convergence(rank_one, caplog):
    matrix, entries, observed = rank_one
    train = (entries[observed], matrix.ravel()[observed])
    with caplog.at_level(logging.WARNING):
        result = softimpute_fit(train, 10, 10, SoftImputeConfig(lam=0.1, max_iters=1))
    assert not result.converged
    assert result.iterations == 1
    assert "did not converge" in caplog.text


def test_softimpute_config_accepts_lambda_alias():
    assert SoftImputeConfig.model_validate({"lambda": 0.3}).lam == 0.3
    assert SoftImputeConfig(lam=0.3).lam == 0.3


def test_softimpute_rejects_empty_input():
    with pytest.raises(ArgumentError):
        softimpute_fit((np.zeros((0, 2)), np.zeros(0)), 3, 3)


def test_lambda_selection_picks_a_candidate(rank_one):
    matrix, entries, observed = rank_one
    train = (entries[observed], matrix.ravel()[observed])
    selection = select_softimpute_lambda(train, 10, 10, SoftImputeConfig(max_iters=50), seed=1)
    assert selection.scale > 0
    assert len(selection.scores) == 6
    assert selection.lam in selection.scores
    assert selection.scores[selection.lam] == min(selection.scores.values())


# User kNN


def _ratings(rows):
    entries, values = [], []
    for user, items in enumerate(rows):
        for item, rating in items.items():
            entries.append((user, item))
            values.append(rating)
    return np.array(entries), np.array(values, dtype=float)


def test_knn_single_identical_neighbor():
    labeled = _ratings([{0: 5, 1: 3, 2: 4}, {0: 5, 1: 3, 2: 4, 3: 4}])
    np.testing.assert_allclose(knn_predict(labeled, [[0, 3]]), [4.0])


def test_knn_averages_top_k_neighbors():
    labeled = _ratings(
        [{0: 5, 1: 3, 2: 4}, {0: 5, 1: 3, 2: 4, 3: 4}, {0: 5, 1: 3, 2: 4, 3: 2}]
    )
    np.testing.assert_allclose(knn_predict(labeled, [[0, 3]], KnnConfig(k=2)), [3.0])
    np.testing.assert_allclose(knn_predict(labeled, [[0, 3]], KnnConfig(k=1)), [4.0])


def test_knn_falls_back_without_raters():
    labeled = _ratings(
        [{0: 5, 1: 3, 2: 4}, {0: 5, 1: 3, 2: 4, 3: 4}, {0: 5, 1: 3, 2: 4, 3: 2}]
    )
    np.testing.assert_allclose(knn_predict(labeled, [[0, 4]], shape=(3, 5)), [4.0])
    np.testing.assert_allclose(
        knn_predict(labeled, [[0, 4]], KnnConfig(fallback="global-mean"), shape=(3, 5)), [42.0 / 11.0]
    )


def test_knn_requires_enough_overlap():
    labeled = _ratings([{0: 5, 1: 3, 2: 4}, {0: 5, 1: 3, 2: 4, 3: 1}])
    np.testing.assert_allclose(knn_predict(labeled, [[0, 3]], KnnConfig(min_overlap=4)), [4.0])


def test_knn_ignores_negatively_correlated_users():
    labeled = _ratings([{0: 5, 1: 3, 2: 4}, {0: 3, 1: 5, 2: 4, 3: 1}])
    np.testing.assert_allclose(knn_predict(labeled, [[0, 3]]), [4.0])


def test_knn_predictions_stay_within_rating_range(rng):
    entries = np.stack([rng.integers(0, 30, 400), rng.integers(0, 20, 400)], axis=1)
    values = rng.integers(1, 6, 400).astype(float)
    queries = np.stack([rng.integers(0, 30, 100), rng.integers(0, 20, 100)], axis=1)
    predictions = knn_predict((entries, values), queries, KnnConfig(k=5, min_overlap=1), shape=(30, 20))
    assert predictions.min() >= 1.0 and predictions.max() <= 5.0


def test_knn_rejects_empty_input():
    with pytest.raises(ArgumentError):
        knn_predict((np.zeros((0, 2)), np.zeros(0)), [[0, 0]], shape=(2, 2))
