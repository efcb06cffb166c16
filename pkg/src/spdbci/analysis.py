"""Offline analytics: ERD/ERS maps, ranking metrics, paired tests.

Spectro-temporal maps use short Welch estimates (0.5 s window, 1/16 s hop,
128-sample sub-segments with half overlap) and are expressed as
``log10(P / B)`` against a pre-cue baseline ``B`` taken from the last second
of the rest phase. Powers are averaged across trials in the power domain
before the log, so the map estimates the log of the mean power ratio rather
than the mean of noisy per-trial logs.

The ranking and test primitives are exact: AUC uses midranks, the Wilcoxon
signed-rank test enumerates the null distribution of the doubled rank sum by
dynamic programming (midranks double to integers), and both refuse degenerate
input instead of guessing.
"""

from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.stats import rankdata

from .errors import BadArgumentError, ProtocolError, UndefinedMetricError


@dataclass
class ErdMap:
    """Grand-average baseline-relative spectrogram."""

    times: np.ndarray          # window-end seconds from trial start
    freqs: np.ndarray          # Hz
    channel_names: tuple
    values: np.ndarray         # (time, freq, channel) log10 power ratio
    defined: np.ndarray        # (freq, channel) False where baseline is zero
    power: np.ndarray          # (time, freq, channel) mean power
    baseline: np.ndarray       # (freq, channel) mean baseline power
    n_trials: int


def trial_powers(x, fs, window_seconds=0.5, hop_seconds=0.0625,
                 nperseg=128, noverlap=64, max_freq_hz=48.0):
    """Sliding Welch powers for one trial; returns ``(times, freqs, P)``.

    ``P`` has shape ``(n_windows, n_freqs, n_channels)``; times are window
    ends in seconds from the start of ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise BadArgumentError(f"trial data must be 2-D, got {x.shape}")
    win = int(round(window_seconds * fs))
    hop = int(round(hop_seconds * fs))
    if win < nperseg:
        raise BadArgumentError(
            f"window of {win} samples is shorter than nperseg {nperseg}"
        )
    if x.shape[0] < win:
        raise BadArgumentError("trial shorter than one spectrogram window")
    starts = np.arange(0, x.shape[0] - win + 1, hop)
    freqs = np.fft.rfftfreq(nperseg, d=1.0 / fs)
    keep = freqs <= max_freq_hz
    freqs = freqs[keep]
    powers = np.empty((starts.size, freqs.size, x.shape[1]))
    for i, s in enumerate(starts):
        _, psd = signal.welch(
            x[s:s + win], fs=fs, window="hann", nperseg=nperseg,
            noverlap=noverlap, axis=0,
        )
        powers[i] = psd[keep]
    times = (starts + win) / fs
    return times, freqs, powers


def _baseline_window_mask(times, rest_rel, fs, window_seconds):
    """Windows fully inside the last second of the rest phase."""
    rest_start, rest_end = rest_rel
    lo = max(rest_start, rest_end - fs) / fs
    hi = rest_end / fs
    w_start = times - window_seconds
    eps = 1e-9
    return (w_start >= lo - eps) & (times <= hi + eps)


def erd_ers_map(runs, truth, window_seconds=0.5, hop_seconds=0.0625,
                max_freq_hz=48.0):
    """Phase-aligned grand-average ERD/ERS map over every trial of a session.

    All trials must share the schedule (guaranteed for generated sessions).
    Entries whose baseline power is exactly zero are NaN and flagged in
    ``defined``.
    """
    trials = []
    for x, rt in zip(runs, truth.runs):
        for tr in rt.trials:
            trials.append((x[tr.start_frame:tr.end_frame], tr))
    if not trials:
        raise ProtocolError("session has no trials")
    n_frames = trials[0][0].shape[0]
    if any(t[0].shape[0] != n_frames for t in trials):
        raise ProtocolError("trials have unequal lengths; cannot phase-align")

    power_sum = None
    base_sum = None
    for x_tr, tr in trials:
        times, freqs, powers = trial_powers(
            x_tr, truth.fs, window_seconds=window_seconds,
            hop_seconds=hop_seconds, max_freq_hz=max_freq_hz,
        )
        rest_abs = tr.segment("rest")
        rest_rel = (rest_abs[0] - tr.start_frame, rest_abs[1] - tr.start_frame)
        bmask = _baseline_window_mask(times, rest_rel, truth.fs, window_seconds)
        if not np.any(bmask):
            raise ProtocolError(
                f"trial {tr.trial_id}: no spectrogram window fits the baseline"
            )
        if power_sum is None:
            power_sum = np.zeros_like(powers)
            base_sum = np.zeros(powers.shape[1:])
        power_sum += powers
        base_sum += powers[bmask].mean(axis=0)

    n = len(trials)
    mean_power = power_sum / n
    baseline = base_sum / n
    defined = baseline > 0
    values = np.full(mean_power.shape, np.nan)
    np.divide(mean_power, baseline[None], out=values, where=defined[None])
    np.log10(values, out=values, where=defined[None])
    return ErdMap(
        times=times, freqs=freqs, channel_names=tuple(truth.channel_names),
        values=values, defined=defined, power=mean_power, baseline=baseline,
        n_trials=n,
    )


def auc(scores_pos, scores_neg):
    """Midrank AUC of positive vs negative scores."""
    pos = np.asarray(scores_pos, dtype=np.float64).ravel()
    neg = np.asarray(scores_neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("AUC needs at least one score per class")
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(neg))):
        raise UndefinedMetricError("AUC scores must be finite")
    ranks = rankdata(np.concatenate([pos, neg]))
    r_pos = ranks[:pos.size].sum()
    return float((r_pos - pos.size * (pos.size + 1) / 2) / (pos.size * neg.size))


@dataclass(frozen=True)
class MarginShift:
    """Median paired margin differences, recentered mode minus identity."""

    delta_pos: float
    delta_neg: float

    @property
    def delta_sep(self):
        return self.delta_pos - self.delta_neg


def margin_shift(pos_mode, pos_identity, neg_mode, neg_identity):
    pm = np.asarray(pos_mode, dtype=np.float64).ravel()
    pi = np.asarray(pos_identity, dtype=np.float64).ravel()
    nm = np.asarray(neg_mode, dtype=np.float64).ravel()
    ni = np.asarray(neg_identity, dtype=np.float64).ravel()
    if pm.shape != pi.shape or nm.shape != ni.shape:
        raise BadArgumentError("margin-shift inputs must pair up window-for-window")
    if pm.size == 0 or nm.size == 0:
        raise UndefinedMetricError("margin shift needs windows from both classes")
    return MarginShift(
        delta_pos=float(np.median(pm - pi)),
        delta_neg=float(np.median(nm - ni)),
    )


def wilcoxon_exact(diffs):
    """Exact two-sided Wilcoxon signed-rank test on paired differences.

    Zero differences are dropped; ties get midranks. Returns
    ``(statistic, p)`` with ``statistic = min(W+, W-)`` and
    ``p = min(1, 2 * P(W <= statistic))`` under sign-flip enumeration.
    """
    d = np.asarray(diffs, dtype=np.float64).ravel()
    if not np.all(np.isfinite(d)):
        raise UndefinedMetricError("differences must be finite")
    d = d[d != 0.0]
    if d.size == 0:
        raise UndefinedMetricError("all differences are zero")
    ranks = rankdata(np.abs(d))
    w_pos = float(ranks[d > 0].sum())
    w_neg = float(ranks[d < 0].sum())
    stat = min(w_pos, w_neg)

    # doubled midranks are integers; DP over the doubled rank sum
    doubled = np.rint(2 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled:
        counts[r:] += counts[:counts.size - r].copy()
    target = int(round(2 * stat))
    tail = counts[:target + 1].sum() / counts.sum()
    return stat, float(min(1.0, 2.0 * tail))


@dataclass(frozen=True)
class RunMetrics:
    """Per-run outcome proportions and decision-latency statistics.

    Onset proportions are over all trials; offset proportions are over
    onset-hit trials only (the machine only attempts a stop after a start),
    and are NaN when no trial got that far. Latency stats cover hits only.
    """

    run_id: int
    n_trials: int
    n_attempted: int
    onset_auc: float
    offset_auc: float
    onset_hit: float
    onset_miss: float
    onset_timeout: float
    offset_hit: float
    offset_miss: float
    offset_timeout: float
    onset_latency_mean: float
    onset_latency_sd: float
    offset_latency_mean: float
    offset_latency_sd: float

    def to_dict(self):
        return {k: getattr(self, k) for k in (
            "run_id", "n_trials", "n_attempted", "onset_auc", "offset_auc",
            "onset_hit", "onset_miss", "onset_timeout",
            "offset_hit", "offset_miss", "offset_timeout",
            "onset_latency_mean", "onset_latency_sd",
            "offset_latency_mean", "offset_latency_sd")}


def _mean_sd(vals):
    arr = np.asarray(vals, dtype=np.float64)
    if arr.size == 0:
        return np.nan, np.nan
    return float(arr.mean()), float(arr.std(ddof=0))


def outcome_latency_stats(records, run_id=0, onset_auc=np.nan,
                          offset_auc=np.nan):
    """Fold a run's trial records into :class:`RunMetrics`.

    Checks the attempt-gating invariant while counting: an offset outcome is
    ``not_attempted`` exactly when the start decision was not a hit.
    """
    from .session import TrialRecord

    records = [TrialRecord.from_dict(r) if isinstance(r, dict) else r
               for r in records]
    if not records:
        raise BadArgumentError("no trial records to summarize")
    n = len(records)
    onset_counts = {"hit": 0, "miss": 0, "timeout": 0}
    offset_counts = {"hit": 0, "miss": 0, "timeout": 0}
    onset_lat, offset_lat = [], []
    for r in records:
        if r.onset_outcome not in onset_counts:
            raise BadArgumentError(
                f"trial {r.trial_id}: unknown onset outcome "
                f"{r.onset_outcome!r}")
        onset_counts[r.onset_outcome] += 1
        attempted = r.onset_outcome == "hit"
        if attempted != (r.offset_outcome != "not_attempted"):
            raise ProtocolError(
                f"trial {r.trial_id}: offset outcome {r.offset_outcome!r} "
                f"inconsistent with onset outcome {r.onset_outcome!r}")
        if attempted:
            if r.offset_outcome not in offset_counts:
                raise BadArgumentError(
                    f"trial {r.trial_id}: unknown offset outcome "
                    f"{r.offset_outcome!r}")
            offset_counts[r.offset_outcome] += 1
            onset_lat.append(r.onset_latency)
            if r.offset_outcome == "hit":
                offset_lat.append(r.offset_latency)
    n_att = onset_counts["hit"]
    on_mean, on_sd = _mean_sd(onset_lat)
    off_mean, off_sd = _mean_sd(offset_lat)
    return RunMetrics(
        run_id=run_id, n_trials=n, n_attempted=n_att,
        onset_auc=float(onset_auc), offset_auc=float(offset_auc),
        onset_hit=onset_counts["hit"] / n,
        onset_miss=onset_counts["miss"] / n,
        onset_timeout=onset_counts["timeout"] / n,
        offset_hit=offset_counts["hit"] / n_att if n_att else np.nan,
        offset_miss=offset_counts["miss"] / n_att if n_att else np.nan,
        offset_timeout=offset_counts["timeout"] / n_att if n_att else np.nan,
        onset_latency_mean=on_mean, onset_latency_sd=on_sd,
        offset_latency_mean=off_mean, offset_latency_sd=off_sd,
    )


def latency_summary(latencies):
    """Count, mean, population SD and median of decision latencies."""
    vals = np.asarray(latencies, dtype=np.float64).ravel()
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        raise UndefinedMetricError("no latencies to summarize")
    return {
        "n": int(vals.size),
        "mean": float(vals.mean()),
        "sd": float(vals.std(ddof=0)),
        "median": float(np.median(vals)),
    }


def bootstrap_ci(values, n_resamples=2000, alpha=0.05, seed=0, stat=np.mean):
    """Seeded percentile bootstrap interval for ``stat`` of ``values``."""
    vals = np.asarray(values, dtype=np.float64).ravel()
    if vals.size == 0:
        raise UndefinedMetricError("cannot bootstrap an empty sample")
    if not (0.0 < alpha < 1.0):
        raise BadArgumentError(f"alpha must be in (0, 1), got {alpha}")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, vals.size, size=(n_resamples, vals.size))
    stats = np.asarray([stat(vals[row]) for row in idx])
    lo, hi = np.percentile(stats, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return float(lo), float(hi)
