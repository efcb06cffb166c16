"""Tests for whitening references: task-based running mean, fixation-based
robust estimation with trimming/shrinkage/blending, and application."""

import numpy as np
import pytest

from conftest import random_spd
from spdbci import (
    BadArgumentError,
    FixationConfig,
    RecenterReference,
    ReferenceUnavailableError,
    ShapeError,
    airm_distance,
    apply_recenter,
    fit_fixation_reference,
    frechet_mean,
    update_task_reference,
)
from spdbci.recenter import apply_recenter_batch
from spdbci.spd import FrechetConfig, log_euclidean_mean


def diag_stack(*diags):
    return np.stack([np.diag(np.asarray(d, dtype=float)) for d in diags])


class TestRecenterReference:
    def test_identity_kind_whitens_as_noop(self):
        ref = RecenterReference("identity")
        assert ref.invsqrt() is None

    def test_identity_with_matrix_rejected(self):
        with pytest.raises(BadArgumentError):
            RecenterReference("identity", matrix=np.eye(2))

    def test_unknown_kind_rejected(self):
        with pytest.raises(BadArgumentError):
            RecenterReference("bogus")

    def test_invsqrt_cached_and_correct(self, rng):
        s = random_spd(rng, 4)
        ref = RecenterReference("task", matrix=s, count=1)
        w = ref.invsqrt()
        assert np.allclose(w @ s @ w, np.eye(4), atol=1e-9)
        assert ref.invsqrt() is w


class TestTaskReference:
    def test_bootstrap_takes_first_sample(self, rng):
        s = random_spd(rng, 3)
        ref = update_task_reference(RecenterReference("task"), s)
        assert ref.count == 1
        assert np.array_equal(ref.matrix, s)
        assert ref.matrix is not s

    def test_two_sample_midpoint(self):
        ref = RecenterReference("task")
        ref = update_task_reference(ref, np.diag([1.0, 1.0]))
        ref = update_task_reference(ref, np.diag([4.0, 4.0]))
        assert ref.count == 2
        assert np.allclose(ref.matrix, np.diag([2.0, 2.0]), atol=1e-10)

    def test_stream_tracks_batch_mean(self, rng):
        # Commuting (diagonal) samples: the streaming geodesic schedule must
        # land within 1e-3 of the batch Riemannian mean after 20 updates.
        samples = np.stack(
            [np.diag(np.exp(rng.standard_normal(3))) for _ in range(20)]
        )
        ref = RecenterReference("task")
        for s in samples:
            ref = update_task_reference(ref, s)
        batch = frechet_mean(samples, config=FrechetConfig(tol=1e-10, max_iter=200))
        assert airm_distance(ref.matrix, batch) < 1e-3

    def test_rejects_non_task_reference(self):
        with pytest.raises(BadArgumentError):
            update_task_reference(RecenterReference("identity"), np.eye(2))

    def test_rejects_bad_covariance(self):
        with pytest.raises(Exception):
            update_task_reference(RecenterReference("task"), np.diag([1.0, -1.0]))


def plain_cfg(**kwargs):
    """Fixation config with no trimming/shrinkage/blending unless overridden."""
    base = dict(trim_frac=0.0, alpha_identity=0.0, lambda_eig=0.0,
                beta_run=1.0, min_windows=1)
    base.update(kwargs)
    return FixationConfig(**base)


class TestFixationConfig:
    def test_defaults(self):
        cfg = FixationConfig()
        assert cfg.trim_frac == 0.20
        assert cfg.alpha_identity == 0.25
        assert cfg.lambda_eig == 0.05
        assert cfg.beta_run == 0.30
        assert cfg.min_windows == 8
        assert cfg.window_stride == 4

    @pytest.mark.parametrize("kwargs", [
        {"trim_frac": 1.0},
        {"trim_frac": -0.1},
        {"alpha_identity": 1.5},
        {"lambda_eig": -0.2},
        {"beta_run": 2.0},
        {"min_windows": 0},
        {"window_stride": 0},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(BadArgumentError):
            FixationConfig(**kwargs)


class TestFixationFit:
    def test_identical_windows_recovered(self):
        covs = np.stack([np.eye(3)] * 8)
        ref = fit_fixation_reference(covs, FixationConfig())
        assert not ref.reused
        assert np.allclose(ref.matrix, np.eye(3), atol=1e-10)

    def test_too_few_windows_reuses_previous(self, rng):
        prev_mat = random_spd(rng, 3)
        prev = RecenterReference("fixation", matrix=prev_mat)
        covs = np.stack([np.eye(3)] * 7)
        ref = fit_fixation_reference(covs, FixationConfig(), previous=prev)
        assert ref.reused
        assert np.array_equal(ref.matrix, prev_mat)

    def test_too_few_windows_without_previous_raises(self):
        covs = np.stack([np.eye(3)] * 7)
        with pytest.raises(ReferenceUnavailableError):
            fit_fixation_reference(covs, FixationConfig())

    def test_enough_windows_ignores_previous(self, rng):
        prev = RecenterReference("fixation", matrix=random_spd(rng, 3))
        covs = np.stack([np.eye(3)] * 8)
        ref = fit_fixation_reference(covs, plain_cfg(beta_run=1.0), previous=prev)
        assert not ref.reused
        assert np.allclose(ref.matrix, np.eye(3), atol=1e-10)

    def test_trim_drops_planted_outlier(self):
        # Nine identical windows plus one far outlier; with 10% trimming the
        # estimate equals the mean of the nine exactly.
        covs = diag_stack(*([[1.0, 1.0]] * 9), [400.0, 0.01])
        cfg = plain_cfg(trim_frac=0.1)
        ref = fit_fixation_reference(covs, cfg)
        assert np.allclose(ref.matrix, np.eye(2), atol=1e-10)
        untrimmed = fit_fixation_reference(covs, plain_cfg())
        assert airm_distance(untrimmed.matrix, np.eye(2)) > 0.1

    def test_trim_drops_planted_pair(self):
        inliers = [[np.e ** 0.1, 1.0]] * 4 + [[1.0, np.e ** 0.1]] * 4
        outliers = [[900.0, 0.01], [0.01, 900.0]]
        covs = diag_stack(*inliers, *outliers)
        cfg = plain_cfg(trim_frac=0.2)
        ref = fit_fixation_reference(covs, cfg)
        expected = log_euclidean_mean(diag_stack(*inliers))
        assert np.allclose(ref.matrix, expected, atol=1e-10)

    def test_blend_closed_form(self):
        # Previous = identity, current-run estimate = diag(e, e), beta = 0.3:
        # blended log is 0.3 * I, so the matrix is diag(e^0.3, e^0.3).
        prev = RecenterReference("fixation", matrix=np.eye(2))
        covs = diag_stack(*([[np.e, np.e]] * 8))
        cfg = plain_cfg(beta_run=0.3, min_windows=8)
        ref = fit_fixation_reference(covs, cfg, previous=prev)
        assert np.allclose(ref.matrix, np.exp(0.3) * np.eye(2), atol=1e-12)

    def test_blend_limits(self, rng):
        prev_mat = random_spd(rng, 3)
        prev = RecenterReference("fixation", matrix=prev_mat)
        covs = np.stack([random_spd(rng, 3) for _ in range(8)])
        full = fit_fixation_reference(covs, plain_cfg(beta_run=1.0), previous=prev)
        fresh = fit_fixation_reference(covs, plain_cfg(beta_run=1.0))
        assert np.allclose(full.matrix, fresh.matrix, atol=1e-12)
        nearly_prev = fit_fixation_reference(
            covs, plain_cfg(beta_run=1e-6), previous=prev
        )
        assert airm_distance(nearly_prev.matrix, prev_mat) < 1e-5

    def test_identity_shrink_pulls_toward_identity(self, rng):
        covs = np.stack([random_spd(rng, 3, spread=1.2) for _ in range(10)])
        d_prev = None
        for alpha in (0.0, 0.25, 0.5, 0.9):
            ref = fit_fixation_reference(covs, plain_cfg(alpha_identity=alpha))
            d = airm_distance(ref.matrix, np.eye(3))
            if d_prev is not None:
                assert d <= d_prev + 1e-10
            d_prev = d

    def test_deterministic(self, rng):
        covs = np.stack([random_spd(rng, 4) for _ in range(12)])
        r1 = fit_fixation_reference(covs, FixationConfig())
        r2 = fit_fixation_reference(covs, FixationConfig())
        assert np.array_equal(r1.matrix, r2.matrix)

    def test_rejects_bad_shape(self):
        with pytest.raises(ShapeError):
            fit_fixation_reference(np.eye(3), FixationConfig())

    def test_rejects_non_fixation_previous(self):
        covs = np.stack([np.eye(2)] * 8)
        prev = RecenterReference("task", matrix=np.eye(2), count=1)
        with pytest.raises(BadArgumentError):
            fit_fixation_reference(covs, FixationConfig(), previous=prev)


class TestApplyRecenter:
    def test_identity_passthrough(self, rng):
        s = random_spd(rng, 4)
        out = apply_recenter(RecenterReference("identity"), s)
        assert np.array_equal(out, s)

    def test_whitening_own_reference_gives_identity(self, rng):
        s = random_spd(rng, 5)
        ref = RecenterReference("task", matrix=s, count=1)
        assert np.allclose(apply_recenter(ref, s), np.eye(5), atol=1e-9)

    def test_batch_matches_single(self, rng):
        ref = RecenterReference("fixation", matrix=random_spd(rng, 4))
        covs = np.stack([random_spd(rng, 4) for _ in range(6)])
        batch = apply_recenter_batch(ref, covs)
        for i in range(6):
            assert np.allclose(batch[i], apply_recenter(ref, covs[i]), atol=1e-12)

    def test_pairwise_distances_preserved(self, rng):
        # Whitening is a congruence, so it cannot change geometry between
        # covariances.
        ref = RecenterReference("fixation", matrix=random_spd(rng, 4))
        a, b = random_spd(rng, 4), random_spd(rng, 4)
        d0 = airm_distance(a, b)
        d1 = airm_distance(apply_recenter(ref, a), apply_recenter(ref, b))
        assert abs(d0 - d1) < 1e-8
