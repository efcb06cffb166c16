"""Tests for distance-to-prototype decoding: prototype fitting, softmax
posteriors, EMA smoothing, and ROC threshold selection."""

import numpy as np
import pytest

from conftest import random_spd
from spdbci import (
    BadArgumentError,
    ClassStarvationError,
    ShapeError,
    SelectedThreshold,
    ThresholdInfeasibleError,
    airm_distance,
    auto_temperature,
    congruence,
    ema_update,
    fit_prototypes,
    frechet_mean,
    margin,
    posterior,
    prototype_distances,
    select_threshold,
    smooth_trace,
)
from spdbci.decoder import EMA_RESET, prototype_distances_batch
from spdbci.spd import FrechetConfig, spd_invsqrt


def make_classes(rng, n=12, dim=4, gap=1.0):
    base_pos = np.diag(np.exp(gap * np.array([1.0] + [0.0] * (dim - 1))))
    base_neg = np.eye(dim)
    pos = np.stack([
        congruence(base_pos, np.eye(dim) + 0.05 * rng.standard_normal((dim, dim)))
        for _ in range(n)
    ])
    neg = np.stack([
        congruence(base_neg, np.eye(dim) + 0.05 * rng.standard_normal((dim, dim)))
        for _ in range(n)
    ])
    return pos, neg


class TestFitPrototypes:
    def test_constant_classes(self):
        pos = np.stack([np.diag([2.0, 1.0])] * 5)
        neg = np.stack([np.diag([1.0, 2.0])] * 5)
        protos = fit_prototypes("onset", pos, neg, "go", "idle")
        assert np.allclose(protos.mean_pos, np.diag([2.0, 1.0]), atol=1e-7)
        assert np.allclose(protos.mean_neg, np.diag([1.0, 2.0]), atol=1e-7)
        assert protos.positive == "go"
        assert protos.negative == "idle"

    def test_pooled_reference_is_joint_mean(self, rng):
        pos, neg = make_classes(rng, n=6)
        protos = fit_prototypes(
            "onset", pos, neg, "a", "b",
            frechet_config=FrechetConfig(tol=1e-9, max_iter=100),
        )
        oracle = frechet_mean(np.concatenate([pos, neg]),
                              config=FrechetConfig(tol=1e-9, max_iter=100))
        assert airm_distance(protos.s_train, oracle) < 1e-6

    def test_auto_temperature_closed_form(self):
        mean_pos = np.diag([np.e, 1.0])
        mean_neg = np.eye(2)
        # d = 1, so the auto temperature equals ln 9.
        assert abs(auto_temperature(mean_pos, mean_neg) - np.log(9.0)) < 1e-9

    def test_posterior_at_prototype_is_09(self, rng):
        pos, neg = make_classes(rng)
        protos = fit_prototypes("onset", pos, neg, "a", "b")
        d_pos, d_neg = prototype_distances(protos, protos.mean_pos, "raw")
        p = posterior(d_pos, d_neg, protos.temperature)
        assert abs(p - 0.9) < 1e-6

    def test_coincident_prototypes_rejected(self):
        same = np.stack([np.eye(3)] * 4)
        with pytest.raises(BadArgumentError):
            fit_prototypes("onset", same, same, "a", "b")

    def test_explicit_temperature(self, rng):
        pos, neg = make_classes(rng)
        protos = fit_prototypes("onset", pos, neg, "a", "b", temperature=2.5)
        assert protos.temperature == 2.5
        with pytest.raises(BadArgumentError):
            fit_prototypes("onset", pos, neg, "a", "b", temperature=0.0)

    def test_empty_class_starvation(self, rng):
        pos, _ = make_classes(rng)
        with pytest.raises(ClassStarvationError):
            fit_prototypes("onset", pos, np.empty((0, 4, 4)), "a", "b")

    def test_whitened_frame_consistency(self, rng):
        # Whitening prototypes by s_train must preserve their separation.
        pos, neg = make_classes(rng)
        protos = fit_prototypes("onset", pos, neg, "a", "b")
        raw_pos, raw_neg = protos.pair("raw")
        wh_pos, wh_neg = protos.pair("whitened")
        assert abs(
            airm_distance(raw_pos, raw_neg) - airm_distance(wh_pos, wh_neg)
        ) < 1e-8

    def test_fixation_frame_requires_reference(self, rng):
        pos, neg = make_classes(rng)
        protos = fit_prototypes("onset", pos, neg, "a", "b")
        with pytest.raises(BadArgumentError):
            protos.pair("fixation")
        protos.s_fixation = random_spd(rng, 4)
        fx_pos, fx_neg = protos.pair("fixation")
        assert abs(
            airm_distance(fx_pos, fx_neg)
            - airm_distance(protos.mean_pos, protos.mean_neg)
        ) < 1e-8

    def test_batch_distances_match_single(self, rng):
        pos, neg = make_classes(rng)
        protos = fit_prototypes("onset", pos, neg, "a", "b")
        samples = np.stack([random_spd(rng, 4) for _ in range(5)])
        batch = prototype_distances_batch(protos, samples, "whitened")
        for i in range(5):
            d_pos, d_neg = prototype_distances(protos, samples[i], "whitened")
            assert abs(batch[i, 0] - d_pos) < 1e-9
            assert abs(batch[i, 1] - d_neg) < 1e-9


class TestPosterior:
    def test_equidistant_gives_half(self):
        assert posterior(1.3, 1.3, 2.0) == pytest.approx(0.5)

    def test_closed_form_example(self):
        # alpha = 1, d_pos = 0, d_neg = ln 3: odds are 3:1, p = 0.75.
        assert posterior(0.0, np.log(3.0), 1.0) == pytest.approx(0.75)

    def test_complements_sum_to_one(self, rng):
        d1, d2 = rng.uniform(0, 3, 2)
        total = posterior(d1, d2, 1.7) + posterior(d2, d1, 1.7)
        assert abs(total - 1.0) < 1e-12

    def test_monotone_in_distance_gap(self):
        ps = [posterior(d, 1.0, 2.0) for d in (0.0, 0.5, 1.0, 1.5)]
        assert all(a > b for a, b in zip(ps, ps[1:]))

    def test_temperature_sharpens(self):
        p_soft = posterior(0.2, 1.0, 0.5)
        p_sharp = posterior(0.2, 1.0, 5.0)
        assert 0.5 < p_soft < p_sharp

    def test_margin_sign_matches_posterior(self, rng):
        for _ in range(20):
            d_pos, d_neg = rng.uniform(0, 3, 2)
            m = margin(d_pos, d_neg)
            p = posterior(d_pos, d_neg, 2.0)
            assert np.sign(m) == np.sign(p - 0.5) or m == 0.0

    def test_temperature_preserves_ranking(self, rng):
        d_pos = rng.uniform(0, 3, 10)
        d_neg = rng.uniform(0, 3, 10)
        p1 = posterior(d_pos, d_neg, 1.0)
        p2 = posterior(d_pos, d_neg, 4.0)
        assert np.array_equal(np.argsort(p1), np.argsort(p2))

    def test_vectorized(self):
        p = posterior(np.zeros(3), np.full(3, np.log(3.0)), 1.0)
        assert np.allclose(p, 0.75)


class TestSmoothing:
    def test_fixed_point(self):
        assert ema_update(0.7, 0.7, 0.2) == pytest.approx(0.7)

    def test_single_step_example(self):
        assert ema_update(0.5, 1.0, 0.5) == pytest.approx(0.75)

    def test_stays_in_unit_interval(self, rng):
        p = EMA_RESET
        for x in rng.uniform(0, 1, 100):
            p = ema_update(p, x, 0.2)
            assert 0.0 <= p <= 1.0

    def test_geometric_convergence(self):
        p = 0.0
        errs = []
        for _ in range(5):
            p = ema_update(p, 1.0, 0.2)
            errs.append(1.0 - p)
        ratios = [b / a for a, b in zip(errs, errs[1:])]
        assert np.allclose(ratios, 0.8, atol=1e-12)

    def test_smooth_trace_matches_loop(self, rng):
        raw = rng.uniform(0, 1, 50)
        got = smooth_trace(raw, 0.2)
        prev = EMA_RESET
        for i, x in enumerate(raw):
            prev = 0.8 * prev + 0.2 * x
            assert abs(got[i] - prev) < 1e-12

    def test_custom_seed(self):
        got = smooth_trace([1.0], 0.5, seed=0.0)
        assert got[0] == pytest.approx(0.5)

    def test_rejects_bad_beta(self):
        for beta in (0.0, -0.1, 1.5):
            with pytest.raises(BadArgumentError):
                ema_update(0.5, 0.5, beta)


def maxima_oracle(traces, labels, times, latency_cap):
    """Naive reimplementation of the documented selection rule.

    The decision domain is the ROC of per-trial trace maxima; for each
    candidate threshold TPR/FPR count crossing traces, latency is the first
    crossing time on positive traces, and admissibility requires at least one
    crossing plus a median latency within the cap. Among admissible candidates
    with maximal J the smallest wins, and the returned threshold is the
    midpoint to the candidate below.
    """
    labels = np.asarray(labels, dtype=bool)
    maxima = np.array([float(np.max(t)) for t in traces])
    cand = np.unique(maxima)

    def stats(theta):
        tpr = float(np.mean(maxima[labels] >= theta))
        fpr = float(np.mean(maxima[~labels] >= theta))
        lats = []
        for i in np.flatnonzero(labels):
            hit = np.flatnonzero(np.asarray(traces[i]) >= theta)
            if hit.size:
                lats.append(float(np.asarray(times[i])[hit[0]]))
        med = float(np.median(lats)) if lats else np.inf
        return tpr, fpr, med, len(lats)

    rows = [stats(v) for v in cand]
    js = np.array([r[0] - r[1] for r in rows])
    adm = np.array([r[3] > 0 and r[2] <= latency_cap for r in rows])
    if not adm.any():
        return None
    pool = np.flatnonzero(adm)
    best = pool[np.flatnonzero(js[pool] == js[pool].max())[0]]
    below = cand[cand < cand[best]]
    lo = float(below[-1]) if below.size else float(cand[best])
    return {
        "theta": 0.5 * (lo + float(cand[best])),
        "j": float(js[pool].max()),
        "stats": rows[best],
    }


def random_threshold_problem(rng, n_pos=6, n_neg=6, n_frames=20):
    traces, labels, times = [], [], []
    t = np.arange(1, n_frames + 1) * 0.0625
    for _ in range(n_pos):
        tr = np.clip(rng.uniform(0.3, 0.6) + np.cumsum(rng.normal(0.02, 0.05, n_frames)), 0, 1)
        traces.append(tr)
        labels.append(True)
        times.append(t.copy())
    for _ in range(n_neg):
        tr = np.clip(rng.uniform(0.2, 0.5) + np.cumsum(rng.normal(-0.01, 0.05, n_frames)), 0, 1)
        traces.append(tr)
        labels.append(False)
        times.append(t.copy())
    return traces, labels, times


class TestSelectThreshold:
    def test_separated_classes_midpoint(self):
        # Positive maxima at 0.9, negative at 0.1: perfect separation, and the
        # threshold lands at the midpoint 0.5.
        traces = [np.array([0.9]), np.array([0.1])]
        labels = [True, False]
        times = [np.array([0.5]), np.array([0.5])]
        sel = select_threshold(traces, labels, times, latency_cap=3.0)
        assert sel.theta == pytest.approx(0.5)
        assert sel.j == pytest.approx(1.0)
        assert sel.tpr == 1.0
        assert sel.fpr == 0.0
        assert sel.median_latency == pytest.approx(0.5)

    def test_identical_traces_flagged_zero_j(self):
        traces = [np.array([0.6, 0.6]), np.array([0.6, 0.6])]
        labels = [True, False]
        times = [np.array([0.1, 0.2])] * 2
        sel = select_threshold(traces, labels, times, latency_cap=3.0)
        assert sel.j == 0.0
        assert sel.theta == pytest.approx(0.6)

    def test_latency_cap_infeasible(self):
        # The positive trace only ever crosses any candidate at 4 s, so every
        # candidate violates a 3 s cap and the unconstrained fallback is
        # reported through the error.
        traces = [np.array([0.2]), np.array([0.1])]
        labels = [True, False]
        times = [np.array([4.0]), np.array([4.0])]
        with pytest.raises(ThresholdInfeasibleError) as err:
            select_threshold(traces, labels, times, latency_cap=3.0)
        assert err.value.fallback == pytest.approx(0.15)
        assert err.value.fallback_j == pytest.approx(1.0)

    def test_latency_cap_steers_choice(self):
        # A lower threshold crosses early; the higher, better-separating one
        # only crosses late. The cap forces the early (lower-J) choice.
        traces = [
            np.array([0.55, 0.9]),       # positive: crosses 0.5 at 1 s, 0.9 at 5 s
            np.array([0.52, 0.52]),      # negative
        ]
        labels = [True, False]
        times = [np.array([1.0, 5.0]), np.array([1.0, 5.0])]
        capped = select_threshold(traces, labels, times, latency_cap=2.0)
        uncapped = select_threshold(traces, labels, times, latency_cap=10.0)
        assert capped.theta < uncapped.theta
        assert capped.j == pytest.approx(0.0)
        assert uncapped.j == pytest.approx(1.0)

    def test_matches_naive_reimplementation(self, rng):
        for _ in range(20):
            traces, labels, times = random_threshold_problem(rng)
            oracle = maxima_oracle(traces, labels, times, latency_cap=1.0)
            try:
                sel = select_threshold(traces, labels, times, latency_cap=1.0)
            except ThresholdInfeasibleError:
                assert oracle is None
                continue
            assert oracle is not None
            assert sel.theta == pytest.approx(oracle["theta"])
            assert sel.j == pytest.approx(oracle["j"])
            tpr, fpr, med, _ = oracle["stats"]
            assert sel.tpr == pytest.approx(tpr)
            assert sel.fpr == pytest.approx(fpr)
            assert sel.median_latency == pytest.approx(med)

    def test_result_type(self):
        traces = [np.array([0.9]), np.array([0.1])]
        sel = select_threshold(traces, [True, False],
                               [np.array([0.5])] * 2, 3.0)
        assert isinstance(sel, SelectedThreshold)
        assert sel.n_candidates == 2

    def test_single_class_starvation(self):
        with pytest.raises(ClassStarvationError):
            select_threshold([np.array([0.5])], [True], [np.array([0.5])], 3.0)
        with pytest.raises(ClassStarvationError):
            select_threshold([], [], [], 3.0)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            select_threshold([np.array([0.5])], [True, False],
                             [np.array([0.5])], 3.0)
