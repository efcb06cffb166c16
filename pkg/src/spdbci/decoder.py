"""Minimum-distance-to-mean decoding with calibrated posteriors and thresholds.

Each decoder (onset, offset) holds a positive and a negative class prototype.
Prototypes are Frechet means of the training covariances; the pooled training
mean ``S_train`` defines the whitened frame used whenever the online side is
recentered by a non-identity reference. Identity-mode decoding compares raw
samples against the raw prototypes, leaving the geometry untouched.

Posteriors squash the distance gap through a calibrated softmax; a decision
requires the smoothed posterior to satisfy a threshold-and-hold rule handled
by the session state machine.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, spd
from .errors import (
    BadArgumentError,
    ClassStarvationError,
    ShapeError,
    ThresholdInfeasibleError,
)

# Posterior at the positive prototype under the auto temperature.
AUTO_TEMPERATURE_TARGET = 9.0  # odds ratio: p = 0.9


@dataclass
class ClassPrototypes:
    """Fitted prototype pair for one decoder.

    Attributes
    ----------
    name : str
        Decoder name ("onset" or "offset").
    positive, negative : str
        Phase labels of the two classes.
    mean_pos, mean_neg : ndarray
        Raw (unwhitened) class Frechet means.
    s_train : ndarray
        Pooled Frechet mean over both classes' training covariances; the
        training-side frame matching a task-based online reference.
    temperature : float
        Softmax temperature ``alpha``.
    s_fixation : ndarray, optional
        Rest-anchored training reference; the frame matching a fixation-based
        online reference. Distances stay comparable only when the training
        and online sides are recentered the same way, so each mode gets its
        own prototype frame.
    """

    name: str
    positive: str
    negative: str
    mean_pos: np.ndarray
    mean_neg: np.ndarray
    s_train: np.ndarray
    temperature: float
    s_fixation: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False)

    def _frame_reference(self, frame):
        if frame == "whitened":
            return self.s_train
        if frame == "fixation":
            if self.s_fixation is None:
                raise BadArgumentError(
                    f"decoder {self.name!r} has no fixation training reference"
                )
            return self.s_fixation
        raise BadArgumentError(
            f"frame must be 'raw', 'whitened' or 'fixation', got {frame!r}"
        )

    def prototype_invsqrts(self, frame):
        """Stacked ``P^{-1/2}`` for (pos, neg) in the given frame (cached)."""
        key = f"inv_{frame}"
        if key not in self._cache:
            pos, neg = self.pair(frame)
            self._cache[key] = np.stack(
                [spd.spd_invsqrt(pos), spd.spd_invsqrt(neg)]
            )
        return self._cache[key]

    def pair(self, frame):
        if frame == "raw":
            return self.mean_pos, self.mean_neg
        key = f"pair_{frame}"
        if key not in self._cache:
            w = spd.spd_invsqrt(self._frame_reference(frame))
            self._cache[key] = (
                spd.congruence(self.mean_pos, w),
                spd.congruence(self.mean_neg, w),
            )
        return self._cache[key]


def auto_temperature(mean_pos, mean_neg):
    """Temperature making the posterior 0.9 at the positive prototype.

    ``alpha = ln(9) / d(P_pos, P_neg)``; the prototype distance is the same in
    the raw and whitened frames by congruence invariance.
    """
    d = spd.airm_distance(mean_pos, mean_neg)
    if d <= 0.0:
        raise BadArgumentError("prototypes coincide; temperature undefined")
    return float(np.log(AUTO_TEMPERATURE_TARGET) / d)


def fit_prototypes(name, covs_pos, covs_neg, positive, negative,
                   temperature=None, frechet_config=None):
    """Fit a decoder's prototype pair from labeled training covariances.

    Parameters
    ----------
    name : str
    covs_pos, covs_neg : ndarray, shape (n_k, c, c)
        Training covariances per class; each class needs at least one sample.
    positive, negative : str
        Class labels recorded on the decoder.
    temperature : float, optional
        Fixed softmax temperature; default is :func:`auto_temperature`.
    frechet_config : spd.FrechetConfig, optional
    """
    pos = np.asarray(covs_pos, dtype=np.float64)
    neg = np.asarray(covs_neg, dtype=np.float64)
    for label, arr in ((positive, pos), (negative, neg)):
        if arr.ndim != 3 or arr.shape[0] == 0:
            raise ClassStarvationError(
                f"decoder {name!r}: class {label!r} has no training covariances"
            )
    mean_pos = spd.frechet_mean(pos, config=frechet_config)
    mean_neg = spd.frechet_mean(neg, config=frechet_config)
    s_train = spd.frechet_mean(
        np.concatenate([pos, neg], axis=0), config=frechet_config
    )
    if temperature is None:
        temperature = auto_temperature(mean_pos, mean_neg)
    elif temperature <= 0.0:
        raise BadArgumentError(f"temperature must be positive, got {temperature}")
    return ClassPrototypes(
        name=name,
        positive=positive,
        negative=negative,
        mean_pos=mean_pos,
        mean_neg=mean_neg,
        s_train=s_train,
        temperature=float(temperature),
    )


def prototype_distances(protos, cov, frame):
    """Distances ``(d_pos, d_neg)`` from one recentered sample to the pair."""
    pos, neg = protos.pair(frame)
    return (
        spd.airm_distance(pos, np.asarray(cov, dtype=np.float64)),
        spd.airm_distance(neg, np.asarray(cov, dtype=np.float64)),
    )


def prototype_distances_batch(protos, covs, frame):
    """Distances from a stack (n, c, c) to the pair; returns shape (n, 2)."""
    arr = np.asarray(covs, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"expected (n, c, c), got shape {arr.shape}")
    return kernels.airm_distances(arr, protos.prototype_invsqrts(frame))


def posterior(d_pos, d_neg, temperature):
    """Softmax posterior of the positive class from the distance pair.

    ``p = exp(-a d_pos) / (exp(-a d_pos) + exp(-a d_neg))``, computed through
    the logistic of the margin for numerical stability. Works on arrays.
    """
    margin = np.asarray(d_neg, dtype=np.float64) - np.asarray(d_pos, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-temperature * margin))


def margin(d_pos, d_neg):
    """Decision margin ``d_neg - d_pos`` (positive favors the positive class)."""
    return np.asarray(d_neg, dtype=np.float64) - np.asarray(d_pos, dtype=np.float64)


EMA_RESET = 0.5


def ema_update(prev, p, beta):
    """One exponential-moving-average step ``(1-beta) prev + beta p``."""
    if not (0.0 < beta <= 1.0):
        raise BadArgumentError(f"beta must be in (0, 1], got {beta}")
    return (1.0 - beta) * prev + beta * p


def smooth_trace(p_raw, beta, seed=EMA_RESET):
    """Smooth a posterior trace with the EMA, starting from ``seed``."""
    arr = np.asarray(p_raw, dtype=np.float64)
    out = np.empty_like(arr)
    prev = seed
    for i, p in enumerate(arr):
        prev = ema_update(prev, p, beta)
        out[i] = prev
    return out


@dataclass(frozen=True)
class SelectedThreshold:
    """Result of ROC threshold selection."""

    theta: float
    j: float
    tpr: float
    fpr: float
    median_latency: float
    n_candidates: int


def select_threshold(traces, labels, times, latency_cap):
    """Pick a decision threshold by Youden's J under a latency constraint.

    Candidates are the unique per-trial maxima of the smoothed posterior
    traces. For each candidate ``theta``: TPR and FPR count traces whose
    maximum reaches ``theta``; the latency of a crossing positive trace is the
    time of its first frame at or above ``theta``; a candidate is admissible
    when at least one positive trace crosses and the median latency over
    crossing positive traces is within ``latency_cap``. Among admissible
    candidates with maximal ``J = TPR - FPR``, the smallest is chosen and the
    returned threshold is the midpoint between it and the largest candidate
    strictly below it (the candidate itself if none).

    Parameters
    ----------
    traces : sequence of ndarray
        Smoothed posterior traces, one per trial (lengths may differ).
    labels : sequence of bool
        True for positive-class trials.
    times : sequence of ndarray
        Frame times (seconds from the trace's phase start), matching traces.
    latency_cap : float
        Admissibility cap on the median first-crossing latency, seconds.

    Raises
    ------
    ThresholdInfeasibleError
        When no candidate is admissible; carries the unconstrained fallback.
    """
    if len(traces) != len(labels) or len(traces) != len(times):
        raise ShapeError("traces, labels, and times must have equal lengths")
    if len(traces) == 0:
        raise ClassStarvationError("no traces given")
    labels = np.asarray(labels, dtype=bool)
    if not labels.any() or labels.all():
        raise ClassStarvationError("need at least one positive and one negative trace")
    maxima = np.array([float(np.max(t)) for t in traces])
    pos_idx = np.flatnonzero(labels)
    neg_idx = np.flatnonzero(~labels)
    candidates = np.unique(maxima)

    def stats(theta):
        tpr = float(np.mean(maxima[pos_idx] >= theta))
        fpr = float(np.mean(maxima[neg_idx] >= theta))
        lats = []
        for i in pos_idx:
            hits = np.flatnonzero(np.asarray(traces[i]) >= theta)
            if hits.size:
                lats.append(float(np.asarray(times[i])[hits[0]]))
        med = float(np.median(lats)) if lats else np.inf
        return tpr, fpr, med, len(lats)

    rows = [stats(c) for c in candidates]
    js = np.array([r[0] - r[1] for r in rows])
    admissible = np.array(
        [r[3] > 0 and r[2] <= latency_cap for r in rows], dtype=bool
    )

    def pick(idx_pool):
        best_j = np.max(js[idx_pool])
        best = idx_pool[np.flatnonzero(js[idx_pool] == best_j)[0]]
        below = candidates[candidates < candidates[best]]
        lo = float(below[-1]) if below.size else float(candidates[best])
        theta = 0.5 * (lo + float(candidates[best]))
        tpr, fpr, med, _ = stats(candidates[best])
        return SelectedThreshold(
            theta=theta, j=float(best_j), tpr=tpr, fpr=fpr,
            median_latency=med, n_candidates=int(candidates.size),
        )

    if not admissible.any():
        fb = pick(np.arange(candidates.size))
        raise ThresholdInfeasibleError(
            f"no threshold meets the {latency_cap:.3g} s median-latency cap",
            fallback=fb.theta,
            fallback_j=fb.j,
        )
    return pick(np.flatnonzero(admissible))
