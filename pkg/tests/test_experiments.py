import logging
import math

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

import core.experiments as experiments
from core.errors import (
    ArgumentError,
    MissingCellError,
    NumericalError,
    ParseError,
    UndefinedCorrelationError,
)
from core.experiments import (
    GRID_COLUMNS,
    REAL_COLUMNS,
    SCATTER_COLUMNS,
    GridSpec,
    RealDataConfig,
    RealResult,
    RunRecord,
    append_real_csv,
    cell_means,
    correlation_report,
    disentangled_estimate,
    load_ml100k,
    mask_labels,
    pearson_correlation,
    rmse,
    run_grid,
    run_real,
    scatter_series,
    split_train_test,
    subspace_rate,
    write_grid_csv,
    write_scatter_csv,
)
from core.synthgen import SynthConfig

TINY_GRID = {
    "m_values": [500, 2000],
    "n_values": [20, 40],
    "runs_per_cell": 2,
    "world_config": {"m": 20, "n": 20, "d": 2},
    "solver": {"config": {"max_iters": 100}},
    "test_size": 200,
    "base_seed": 5,
}


def _record(M, N, gap, run=0):
    return RunRecord(M, N, run, 0.0, gap, gap, 0.1, 0.1, 0)


@pytest.fixture(scope="module")
def tiny_records():
    return run_grid(GridSpec.model_validate(TINY_GRID))


@pytest.fixture
def additive_records():
    # gap(M, N) = a(M) + b(N), so the estimate is off by the constant gap(m_max, n_max)
    a = {100: 0.5, 1000: 0.2, 10000: 0.05}
    b = {10: 0.4, 100: 0.1, 1000: 0.01}
    return [_record(M, N, a[M] + b[N], run) for M in a for N in b for run in range(3)]


# Grid


def test_run_grid_layout(tiny_records):
    assert len(tiny_records) == 8
    keys = [(r.m_unlabeled, r.n_labeled, r.run_index) for r in tiny_records]
    assert keys == sorted(keys)
    for record in tiny_records:
        assert record.error is None
        assert record.gap == pytest.approx(record.test_risk - record.train_risk)
        assert 0.0 <= record.subspace_dist_u <= math.sqrt(2.0) + 1e-9
        assert record.train_risk >= 0.0


def test_run_grid_is_deterministic(tiny_records):
    again = run_grid(GridSpec.model_validate(TINY_GRID))
    assert again == tiny_records


def test_run_grid_csv_is_byte_identical_across_job_counts(tiny_records, tmp_path):
    parallel = run_grid(GridSpec.model_validate(TINY_GRID), jobs=2)
    assert [r.seed for r in parallel] == [r.seed for r in tiny_records]
    serial_csv = write_grid_csv(tiny_records, tmp_path / "serial.csv")
    parallel_csv = write_grid_csv(parallel, tmp_path / "parallel.csv")
    assert parallel_csv.read_bytes() == serial_csv.read_bytes()


def test_run_grid_rejects_bad_jobs():
    with pytest.raises(ArgumentError):
        run_grid(GridSpec.model_validate(TINY_GRID), jobs=0)


def test_failed_runs_are_recorded_not_raised(monkeypatch):
    def broken_pipeline(*args, **kwargs):
        raise NumericalError("objective became non-finite")

    monkeypatch.setattr(experiments, "damc_pipeline", broken_pipeline)
    spec = GridSpec.model_validate({**TINY_GRID, "m_values": [500], "n_values": [20, 40]})
    records = run_grid(spec)
    assert len(records) == 4
    assert all(r.error == "objective became non-finite" for r in records)
    assert all(math.isnan(r.gap) for r in records)


def test_cell_means(additive_records):
    means = cell_means(additive_records)
    assert len(means) == 9
    row = means[(means.m_unlabeled == 100) & (means.n_labeled == 10)].iloc[0]
    assert row.mean_gap == pytest.approx(0.9)
    assert row.runs == 3


# Error decomposition


def test_disentangled_estimate(additive_records):
    estimate = disentangled_estimate(additive_records, 100, 10, 10000, 1000)
    assert estimate == pytest.approx((0.5 + 0.01) + (0.05 + 0.4))


def test_disentangled_estimate_missing_cell(additive_records):
    with pytest.raises(MissingCellError):
        disentangled_estimate(additive_records, 100, 10, 99999, 1000)


def test_correlation_of_additive_gaps_is_one(additive_records):
    report = correlation_report(additive_records)
    assert report.pearson_r == pytest.approx(1.0)
    assert list(report.series.columns) == SCATTER_COLUMNS
    assert len(report.series) == 9


def test_pearson_correlation():
    assert pearson_correlation([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson_correlation([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    with pytest.raises(UndefinedCorrelationError):
        pearson_correlation([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelationError):
        pearson_correlation([1], [1])


def test_constant_gaps_make_correlation_undefined():
    records = [_record(M, N, 0.3) for M in (10, 20) for N in (5, 6)]
    with pytest.raises(UndefinedCorrelationError):
        correlation_report(records)
    assert len(scatter_series(records)) == 4


def test_subspace_rate_is_root_m(block_world):
    rate = subspace_rate(block_world, [1000, 3000, 10000, 30000, 100000], draws=30, seed=2)
    assert np.all(np.diff(rate.mean_distances) < 0)
    assert -0.65 <= rate.slope <= -0.35


# CSV output


def test_grid_csv_layout(tiny_records, tmp_path):
    path = write_grid_csv(tiny_records, tmp_path / "grid.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == GRID_COLUMNS
    assert len(frame) == 8


def test_grid_csv_error_column_only_on_failure(tmp_path):
    failed = RunRecord(10, 5, 0, *([float("nan")] * 5), seed=1, error="boom")
    path = write_grid_csv([_record(10, 5, 0.1), failed], tmp_path / "grid.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == GRID_COLUMNS + ["error"]
    assert frame["error"].iloc[1] == "boom"


def test_scatter_csv_layout(additive_records, tmp_path):
    path = write_scatter_csv(scatter_series(additive_records), tmp_path / "scatter.csv")
    assert path.read_text().splitlines()[0] == ",".join(SCATTER_COLUMNS)


def test_real_csv_header_written_once(tmp_path):
    path = tmp_path / "real.csv"
    append_real_csv([RealResult("toy", "damc", 0.0, 1.0, 0)], path)
    append_real_csv([RealResult("toy", "userknn", 0.9, 1.2, 0)], path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(REAL_COLUMNS)
    assert len(lines) == 3


# Real data


def test_load_ml100k_fixture(tmp_path):
    path = tmp_path / "ratings.tsv"
    path.write_text("196\t242\t3\t881250949\n186\t302\t3\t891717742\n22\t377\t1\t878887116\n")
    dataset = load_ml100k(path)
    assert dataset.n_users == 3 and dataset.n_items == 3
    assert dataset.num_ratings == 3
    triples = dataset.frame[["user", "item", "rating"]].to_numpy().tolist()
    assert triples == [[2, 0, 3.0], [1, 1, 3.0], [0, 2, 1.0]]
    np.testing.assert_array_equal(dataset.user_ids, [22, 186, 196])


def test_load_ml100k_empty_file(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("")
    with pytest.raises(ParseError, match="empty"):
        load_ml100k(path)


def test_load_ml100k_malformed_row(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("1\t2\t3\t4\n1\t3\tx\t5\n")
    with pytest.raises(ParseError, match="line 2"):
        load_ml100k(path)


def test_load_ml100k_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_ml100k(tmp_path / "absent.tsv")


def test_load_ml100k_warns_on_unexpected_size(tmp_path, caplog):
    path = tmp_path / "u.data"
    path.write_text("1\t1\t5\t1\n2\t1\t4\t2\n")
    with caplog.at_level(logging.WARNING):
        load_ml100k(path)
    assert "expected 943 users" in caplog.text


def test_split_train_test_counts(small_ratings):
    train, test = split_train_test(small_ratings.frame, 0.8, seed=1)
    assert len(train) + len(test) == small_ratings.num_ratings
    assert len(train) == round(0.8 * small_ratings.num_ratings)


@pytest.mark.parametrize("fraction, train_side", [(0.0, False), (1.0, True)])
def test_split_train_test_at_the_ends(small_ratings, fraction, train_side):
    train, test = split_train_test(small_ratings.frame, fraction, seed=1)
    full, empty = (train, test) if train_side else (test, train)
    assert len(full) == small_ratings.num_ratings
    assert empty.empty


def test_real_config_accepts_closed_train_fraction():
    assert RealDataConfig(dataset_path="unused", train_fraction=0.0).train_fraction == 0.0
    assert RealDataConfig(dataset_path="unused", train_fraction=1.0).train_fraction == 1.0
    with pytest.raises(ValidationError):
        RealDataConfig(dataset_path="unused", train_fraction=1.5)


@pytest.mark.parametrize("p", [0.0, 0.25, 0.5, 0.9, 1.0])
def test_mask_labels_removes_exact_count(small_ratings, p):
    frame = small_ratings.frame
    labeled, unlabeled = mask_labels(frame, p, seed=3)
    assert len(unlabeled) == math.ceil(round(p * len(frame), 9))
    assert len(labeled) + len(unlabeled) == len(frame)
    merged = pd.concat([labeled[["user", "item"]], unlabeled]).sort_values(["user", "item"])
    expected = frame[["user", "item"]].sort_values(["user", "item"])
    np.testing.assert_array_equal(merged.to_numpy(), expected.to_numpy())


def test_mask_labels_is_deterministic(small_ratings):
    first, _ = mask_labels(small_ratings.frame, 0.5, seed=3)
    second, _ = mask_labels(small_ratings.frame, 0.5, seed=3)
    pd.testing.assert_frame_equal(first, second)


def test_rmse():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([1.0, 3.0], [2.0, 2.0]) == pytest.approx(1.0)
    with pytest.raises(ArgumentError):
        rmse([1.0], [1.0, 2.0])


@pytest.mark.parametrize(
    "method, options",
    [
        ("damc", {"d": 3, "solver": {"lambda_reg": 1e-3, "config": {"max_iters": 200}}}),
        ("softimpute", {"lambda": 1.0, "max_iters": 50}),
        ("softimpute", {"max_iters": 20}),
        ("userknn", {"k": 5, "min_overlap": 2}),
    ],
)
def test_run_real_methods(small_ratings, method, options):
    cfg = RealDataConfig(
        dataset_path="unused", label_removal_p=0.3, method=method, method_config=options, seed=1
    )
    result = run_real(cfg, small_ratings)
    assert result.method == method
    assert result.dataset == "toy"
    assert 0.0 <= result.rmse <= 4.0


def test_run_real_without_labels(small_ratings):
    cfg = RealDataConfig(dataset_path="unused", label_removal_p=1.0, method="damc")
    with pytest.raises(ArgumentError, match="no labeled data"):
        run_real(cfg, small_ratings)


@pytest.mark.parametrize("fraction, side", [(1.0, "test"), (0.0, "training")])
def test_run_real_rejects_an_empty_split_side(small_ratings, fraction, side):
    cfg = RealDataConfig(dataset_path="unused", train_fraction=fraction, method="userknn")
    with pytest.raises(ArgumentError, match=f"no {side} interactions"):
        run_real(cfg, small_ratings)


@pytest.mark.slow
def test_full_grid_gap_tracks_disentangled_estimate():
    spec = GridSpec(
        m_values=list(range(10_000, 100_001, 10_000)),
        n_values=list(range(50, 1001, 50)),
        runs_per_cell=10,
        world_config=SynthConfig(m=200, n=200, d=4),
    )
    report = correlation_report(run_grid(spec, jobs=4))
    assert len(report.series) == 200
    assert report.pearson_r >= 0.8


@pytest.mark.slow
def test_gap_shrinks_with_labels_at_the_largest_unlabeled_count():
    spec = GridSpec(m_values=[100_000], n_values=[50, 1000], runs_per_cell=30)
    records = run_grid(spec, jobs=4)
    assert all(r.error is None for r in records)
    gaps = {N: [r.gap for r in records if r.n_labeled == N] for N in (50, 1000)}
    assert np.mean(gaps[50]) > np.mean(gaps[1000])


@pytest.mark.dataset
def test_ml100k_canonical_counts(ml100k_path):
    dataset = load_ml100k(ml100k_path)
    assert (dataset.n_users, dataset.n_items, dataset.num_ratings) == (943, 1682, 100000)


@pytest.mark.dataset
@pytest.mark.slow
def test_ml100k_label_removal_ordering(ml100k_path):
    dataset = load_ml100k(ml100k_path)
    scores = {}
    for method in ("damc", "softimpute", "userknn"):
        for p in (0.0, 0.9, 0.95):
            cfg = RealDataConfig(dataset_path=ml100k_path, label_removal_p=p, method=method)
            scores[(method, p)] = run_real(cfg, dataset).rmse
    for method in ("damc", "softimpute"):
        assert 0.85 <= scores[(method, 0.0)] <= 1.05
    assert scores[("damc", 0.9)] <= 1.15
    for p in (0.9, 0.95):
        assert scores[("damc", p)] < scores[("softimpute", p)]
        assert scores[("damc", p)] < scores[("userknn", p)]
