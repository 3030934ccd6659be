"""Tests for the simulation experiments."""

from __future__ import annotations

import os

import numpy as np
import pytest

from matfdp.simlab import (
    ModelSpec,
    _draw_noise_entries,
    gen_correlations,
    gen_round,
    preset_spec,
    resolve_max_workers,
    run_experiment,
)
from matfdp.rng import derive_rng


def test_model2_zero_rank_gives_power_decay():
    spec = ModelSpec(
        model=2, p=5, q=4, n=6, m=6, l1=0, l2=0, rho1=0.5, rho2=0.3,
        signal_rows=2, signal_cols=2,
    )
    sigma1, sigma2 = gen_correlations(spec, np.random.default_rng(0))
    idx = np.arange(5)
    expected1 = 0.5 ** np.abs(idx[:, None] - idx[None, :])
    idx = np.arange(4)
    expected2 = 0.3 ** np.abs(idx[:, None] - idx[None, :])
    np.testing.assert_allclose(sigma1, expected1, atol=1e-12)
    np.testing.assert_allclose(sigma2, expected2, atol=1e-12)
    assert sigma1[0, 2] == pytest.approx(0.25, abs=1e-12)


def test_model2_zero_rank_zero_rho_is_identity():
    spec = ModelSpec(
        model=2, p=4, q=4, n=6, m=6, l1=0, l2=0, rho1=0.0, rho2=0.0,
        signal_rows=2, signal_cols=2,
    )
    sigma1, sigma2 = gen_correlations(spec, np.random.default_rng(1))
    np.testing.assert_allclose(sigma1, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(sigma2, np.eye(4), atol=1e-12)


def test_gen_correlations_unit_diagonal_and_psd():
    specs = [
        preset_spec(1, "a", p=7, q=6, n=6, m=6, signal_rows=2, signal_cols=2),
        preset_spec(2, "b", p=7, q=6, n=6, m=6, signal_rows=2, signal_cols=2),
        preset_spec(3, "d", p=7, q=6, n=6, m=6, signal_rows=2, signal_cols=2),
    ]
    for i, spec in enumerate(specs):
        sigma1, sigma2 = gen_correlations(spec, np.random.default_rng(10 + i))
        for sigma in (sigma1, sigma2):
            np.testing.assert_allclose(np.diag(sigma), 1.0, atol=1e-12)
            np.testing.assert_allclose(sigma, sigma.T, atol=1e-12)
            assert np.linalg.eigvalsh(sigma).min() > -1e-10


def test_signal_mask_marks_block():
    spec = ModelSpec(
        model=1, p=10, q=10, n=6, m=6, l1=2, l2=2,
        signal_rows=2, signal_cols=3, signal_amplitude=1.0,
    )
    sigma1, sigma2 = gen_correlations(spec, np.random.default_rng(2))
    _, mask = gen_round(spec, sigma1, sigma2, np.random.default_rng(3))
    assert mask.shape == (10, 10)
    assert int(np.count_nonzero(~mask)) == 6
    assert not mask[:2, :3].any()
    assert mask[2:, :].all() and mask[:, 3:].all()


def test_zero_amplitude_means_global_null():
    spec = ModelSpec(
        model=1, p=6, q=6, n=6, m=6, l1=2, l2=2,
        signal_rows=2, signal_cols=2, signal_amplitude=0.0,
    )
    sigma1, sigma2 = gen_correlations(spec, np.random.default_rng(4))
    ds, mask = gen_round(spec, sigma1, sigma2, np.random.default_rng(5))
    assert mask.all()
    assert abs(ds.treatment.mean()) < 0.5


def test_signal_shifts_treatment_mean():
    spec = ModelSpec(
        model=1, p=6, q=6, n=400, m=2, l1=1, l2=1,
        signal_rows=2, signal_cols=2, signal_amplitude=5.0,
    )
    sigma1, sigma2 = gen_correlations(spec, np.random.default_rng(6))
    ds, _ = gen_round(spec, sigma1, sigma2, np.random.default_rng(7))
    block = ds.treatment[:, :2, :2].mean()
    rest = ds.treatment[:, 2:, 2:].mean()
    assert abs(block - 5.0) < 0.5
    assert abs(rest) < 0.5


def test_noise_entry_moments():
    rng = np.random.default_rng(8)
    for dist in ("exp1", "scaled_t6"):
        draws = _draw_noise_entries(dist, (100_000,), rng)
        assert abs(draws.mean()) < 0.02
        assert abs(draws.var() - 1.0) < 0.05


def test_model3_matches_target_covariance():
    spec = ModelSpec(
        model=3, p=3, q=3, n=6000, m=2, l1=2, l2=2,
        loading_dist=("uniform", 0.0, 1.0), w_dist="scaled_t6",
        signal_rows=2, signal_cols=2, signal_amplitude=0.0,
    )
    sigma1, sigma2 = gen_correlations(spec, np.random.default_rng(9))
    ds, _ = gen_round(spec, sigma1, sigma2, np.random.default_rng(10))
    vecs = ds.treatment.transpose(0, 2, 1).reshape(spec.n, spec.p * spec.q)
    emp = vecs.T @ vecs / spec.n
    target = np.kron(sigma2, sigma1)
    rel = np.linalg.norm(emp - target) / np.linalg.norm(target)
    assert rel < 0.15


def test_gen_round_is_deterministic():
    spec = preset_spec(1, "b", p=8, q=8, n=5, m=5, signal_rows=2, signal_cols=2)
    sigma1, sigma2 = gen_correlations(spec, derive_rng(42, 0, 0))
    ds_a, mask_a = gen_round(spec, sigma1, sigma2, derive_rng(42, 3, 1))
    ds_b, mask_b = gen_round(spec, sigma1, sigma2, derive_rng(42, 3, 1))
    np.testing.assert_array_equal(ds_a.treatment, ds_b.treatment)
    np.testing.assert_array_equal(ds_a.control, ds_b.control)
    np.testing.assert_array_equal(mask_a, mask_b)


def test_presets_fill_parameters():
    spec = preset_spec(1, "a", p=40, q=30)
    assert (spec.l1, spec.l2) == (2, 4)
    assert spec.loading_dist == ("uniform", -1.0, 1.0)
    assert (spec.p, spec.q) == (40, 30)
    spec = preset_spec(2, "a")
    assert (spec.rho1, spec.rho2) == (0.5, 0.3)
    with pytest.raises(ValueError, match="unknown setting"):
        preset_spec(1, "z")


def test_spec_validation():
    with pytest.raises(ValueError, match="model"):
        ModelSpec(model=4)
    with pytest.raises(ValueError, match="p must be"):
        ModelSpec(model=1, p=1)
    with pytest.raises(ValueError, match="n, m"):
        ModelSpec(model=1, n=2, m=2)
    with pytest.raises(ValueError, match="rho1"):
        ModelSpec(model=2, rho2=0.3)
    with pytest.raises(ValueError, match="w_dist"):
        ModelSpec(model=3, w_dist="cauchy")
    with pytest.raises(ValueError, match="loading_dist"):
        ModelSpec(model=1, loading_dist=("uniform", 2.0, 1.0))
    with pytest.raises(ValueError, match="signal block"):
        ModelSpec(model=1, p=4, q=4, signal_rows=8, signal_cols=25)


def test_run_experiment_records_and_summaries():
    spec = preset_spec(1, "a", p=12, q=12, n=8, m=8, signal_rows=3, signal_cols=4)
    result = run_experiment(spec, threshold=0.05, rounds=5, seed=11, max_workers=1)
    assert result.failures == []
    assert len(result.records) == 5 * 3
    for rec in result.records:
        assert rec.fdp_hat >= 0.0
        assert 0.0 <= rec.fdp_true <= 1.0
        assert rec.rejections >= 0
    for method in ("noodle", "sandwich", "pfa"):
        summ = result.summaries[method]
        diffs = [r.fdp_hat - r.fdp_true for r in result.records if r.method == method]
        assert summ.rounds == 5
        assert summ.bias_percent == pytest.approx(100.0 * np.mean(diffs))
        assert summ.sd_percent == pytest.approx(100.0 * np.std(diffs, ddof=1))


def test_run_experiment_single_round_sd_is_zero():
    spec = preset_spec(1, "b", p=8, q=8, n=6, m=6, signal_rows=2, signal_cols=2)
    result = run_experiment(
        spec, threshold=0.1, rounds=1, seed=12, methods=("sandwich",), max_workers=1
    )
    assert result.summaries["sandwich"].rounds == 1
    assert result.summaries["sandwich"].sd_percent == 0.0


def test_run_experiment_worker_count_does_not_change_results(monkeypatch):
    monkeypatch.setattr(os, "cpu_count", lambda: 2)
    spec = preset_spec(3, "a", p=10, q=10, n=6, m=6, signal_rows=2, signal_cols=5)
    serial = run_experiment(spec, threshold=0.05, rounds=6, seed=13, max_workers=1)
    parallel = run_experiment(spec, threshold=0.05, rounds=6, seed=13, max_workers=2)
    assert serial.records == parallel.records
    assert serial.summaries == parallel.summaries
    assert serial.failures == parallel.failures


def test_run_experiment_validation():
    spec = preset_spec(1, "b", p=6, q=6, n=6, m=6, signal_rows=2, signal_cols=2)
    with pytest.raises(ValueError, match="rounds"):
        run_experiment(spec, threshold=0.05, rounds=0, seed=1)
    with pytest.raises(ValueError, match="unknown methods"):
        run_experiment(spec, threshold=0.05, rounds=1, seed=1, methods=("ols",))
    with pytest.raises(ValueError, match="at least one"):
        run_experiment(spec, threshold=0.05, rounds=1, seed=1, methods=())


def test_resolve_max_workers(monkeypatch):
    monkeypatch.setattr(os, "cpu_count", lambda: 4)
    monkeypatch.delenv("MATFDP_THREADS", raising=False)
    assert resolve_max_workers(1) == 1
    assert resolve_max_workers() == 4
    monkeypatch.setenv("MATFDP_THREADS", "2")
    assert resolve_max_workers(8) == 2
    assert resolve_max_workers() == 2
    monkeypatch.setenv("MATFDP_THREADS", "0")
    with pytest.raises(ValueError, match=">= 1"):
        resolve_max_workers()
    monkeypatch.setenv("MATFDP_THREADS", "six")
    with pytest.raises(ValueError, match="integer"):
        resolve_max_workers()
    monkeypatch.delenv("MATFDP_THREADS", raising=False)
    with pytest.raises(ValueError, match="max_workers"):
        resolve_max_workers(0)
