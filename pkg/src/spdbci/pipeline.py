"""End-to-end flows: calibration, closed-loop replay, session reports.

Calibration fits Riemannian class means for the two detectors (imagery onset:
``start_mi`` vs ``rest``; offset: ``stop_mi`` vs ``maintain``) on labeled
windows, cross-validates margins in the identity frame, and picks decision
thresholds from out-of-fold smoothed posterior traces.

Replay streams a session through the decoder and trial machine under one of
three recentering modes. Every window is classified before the reference
learns from it: in ``task`` mode the running geodesic mean consumes a window
only after that window's posterior has been emitted, and only windows the
machine was actively decoding. ``fixation`` mode refits from each run's
pre-cue windows and blends across runs. ``identity`` disables recentering
entirely, comparing raw covariances against raw prototypes.
"""

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .analysis import (auc, erd_ers_map, latency_summary, margin_shift,
                       outcome_latency_stats, wilcoxon_exact)
from .config import (DEFAULTS, config_hash, fixation_config, frechet_config,
                     session_config, stream_config)
from .decoder import (ClassPrototypes, fit_prototypes, margin, posterior,
                      prototype_distances, prototype_distances_batch,
                      select_threshold, smooth_trace)
from .errors import (BadArgumentError, EmptySessionError, FormatError,
                     ProtocolError, ThresholdInfeasibleError,
                     UndefinedMetricError)
from .preprocess import preprocess_stream
from .recenter import (RecenterReference, apply_recenter,
                       fit_fixation_reference, update_task_reference)
from .session import TrialStateMachine
from .synth import PHASE_CODES, fixation_window_mask, label_windows

ONSET_POS = PHASE_CODES["start_mi"]
ONSET_NEG = PHASE_CODES["rest"]
OFFSET_POS = PHASE_CODES["stop_mi"]
OFFSET_NEG = PHASE_CODES["maintain"]


@dataclass
class PreparedRun:
    """Windowed covariances and ground-truth labels for one run."""

    run_id: int
    covs: np.ndarray
    end_frames: np.ndarray
    times: np.ndarray
    codes: np.ndarray
    fixation: np.ndarray
    truth: object


def prepare_runs(runs, truth, scfg):
    if not runs:
        raise EmptySessionError("session has no runs")
    out = []
    for x, rt in zip(runs, truth.runs):
        covs, ends = preprocess_stream(x, scfg)
        out.append(PreparedRun(
            run_id=rt.run_id,
            covs=covs,
            end_frames=ends,
            times=ends / scfg.fs,
            codes=label_windows(ends, rt, scfg.window_samples),
            fixation=fixation_window_mask(ends, rt, scfg.window_samples),
            truth=rt,
        ))
    return out


def _trial_windows(prep, trial, code, stride=1):
    idx = np.where(
        (prep.codes == code)
        & (prep.end_frames > trial.start_frame)
        & (prep.end_frames <= trial.end_frame)
    )[0]
    return idx[::stride]


def _span_windows(prep, lo_frame, hi_frame, fully_inside, window_samples):
    if fully_inside:
        keep = ((prep.end_frames - window_samples >= lo_frame)
                & (prep.end_frames <= hi_frame))
    else:
        keep = (prep.end_frames > lo_frame) & (prep.end_frames <= hi_frame)
    return np.where(keep)[0]


def _fold_assignments(prepared, cv_folds):
    """Group (run_index, trial) pairs into folds, by run when possible."""
    trials = [(ri, tr) for ri, prep in enumerate(prepared)
              for tr in prep.truth.trials]
    if not trials:
        raise EmptySessionError("session has no trials")
    n_runs = len(prepared)
    folds = [[] for _ in range(min(cv_folds, n_runs if n_runs >= 2 else len(trials)))]
    if n_runs >= 2:
        for ri, tr in trials:
            folds[ri % len(folds)].append((ri, tr))
    else:
        for i, item in enumerate(trials):
            folds[i % len(folds)].append(item)
    return [f for f in folds if f]


def _gather(prepared, fold_trials, code, stride):
    chunks = [prepared[ri].covs[_trial_windows(prepared[ri], tr, code, stride)]
              for ri, tr in fold_trials]
    chunks = [c for c in chunks if len(c)]
    if not chunks:
        raise EmptySessionError(f"no windows labeled {code} in this split")
    return np.concatenate(chunks, axis=0)


def _fit_detector(name, prepared, fold_trials, pos_code, neg_code, stride,
                  positive, negative, temperature, fcfg):
    return fit_prototypes(
        name,
        _gather(prepared, fold_trials, pos_code, stride),
        _gather(prepared, fold_trials, neg_code, stride),
        positive=positive, negative=negative,
        temperature=temperature, frechet_config=fcfg,
    )


def _identity_margins(protos, covs):
    d = prototype_distances_batch(protos, covs, frame="raw")
    return d[:, 1] - d[:, 0]


def _trace(protos, covs, beta):
    margins = _identity_margins(protos, covs)
    return smooth_trace(posterior_from_margin(margins, protos.temperature), beta)


def posterior_from_margin(margins, temperature):
    return 1.0 / (1.0 + np.exp(-temperature * np.asarray(margins)))


@dataclass
class CalibratedModel:
    """Everything replay needs: prototypes, temperatures, thresholds."""

    config: dict
    onset: ClassPrototypes
    offset: ClassPrototypes
    theta_onset: float
    theta_offset: float
    selection: dict
    cv: dict

    def hash(self):
        return config_hash(self.config)

    def to_dict(self):
        def protos_dict(p):
            return {
                "name": p.name,
                "positive": p.positive,
                "negative": p.negative,
                "mean_pos": io.encode_array(p.mean_pos),
                "mean_neg": io.encode_array(p.mean_neg),
                "s_train": io.encode_array(p.s_train),
                "temperature": p.temperature,
                "s_fixation": (None if p.s_fixation is None
                               else io.encode_array(p.s_fixation)),
            }

        return {
            "kind": "model",
            "config": self.config,
            "config_hash": self.hash(),
            "onset": protos_dict(self.onset),
            "offset": protos_dict(self.offset),
            "theta_onset": self.theta_onset,
            "theta_offset": self.theta_offset,
            "selection": self.selection,
            "cv": self.cv,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") != "model":
            raise FormatError("not a model file")

        def protos(pd):
            fix = pd.get("s_fixation")
            return ClassPrototypes(
                name=pd["name"], positive=pd["positive"], negative=pd["negative"],
                mean_pos=io.decode_array(pd["mean_pos"]),
                mean_neg=io.decode_array(pd["mean_neg"]),
                s_train=io.decode_array(pd["s_train"]),
                temperature=pd["temperature"],
                s_fixation=None if fix is None else io.decode_array(fix),
            )

        return cls(
            config=dict(d["config"]),
            onset=protos(d["onset"]), offset=protos(d["offset"]),
            theta_onset=d["theta_onset"], theta_offset=d["theta_offset"],
            selection=dict(d["selection"]), cv=dict(d["cv"]),
        )


def _select_or_fallback(traces, labels, times, cap):
    try:
        sel = select_threshold(traces, labels, times, latency_cap=cap)
        return sel.theta, {**asdict(sel), "fallback": False}
    except ThresholdInfeasibleError as exc:
        return exc.fallback, {
            "theta": exc.fallback, "j": exc.fallback_j, "fallback": True,
        }


def calibrate(runs, truth, cfg):
    """Fit a :class:`CalibratedModel` from a labeled session."""
    scfg = stream_config(cfg)
    fcfg = frechet_config(cfg)
    prepared = prepare_runs(runs, truth, scfg)
    stride = cfg["calib.window_stride"]
    beta = cfg["decoder.ema_beta"]
    cap = cfg["decision.latency_cap_seconds"]
    temp = cfg["decoder.temperature"] or None
    onset_win = cfg["decision.onset_window_seconds"]
    win = scfg.window_samples

    folds = _fold_assignments(prepared, cfg["calib.cv_folds"])
    all_trials = [item for fold in folds for item in fold]

    cv_margins = {"onset": ([], []), "offset": ([], [])}
    traces, labels, times = {"onset": [], "offset": []}, {"onset": [], "offset": []}, {"onset": [], "offset": []}
    for held in range(len(folds)):
        train = [item for f, fold in enumerate(folds) if f != held for item in fold]
        det_on = _fit_detector("onset", prepared, train, ONSET_POS, ONSET_NEG,
                               stride, "start_mi", "rest", temp, fcfg)
        det_off = _fit_detector("offset", prepared, train, OFFSET_POS, OFFSET_NEG,
                                stride, "stop_mi", "maintain", temp, fcfg)
        for ri, tr in folds[held]:
            prep = prepared[ri]
            fs = scfg.fs
            for det, key, pos_code, neg_code in (
                (det_on, "onset", ONSET_POS, ONSET_NEG),
                (det_off, "offset", OFFSET_POS, OFFSET_NEG),
            ):
                pos_idx = _trial_windows(prep, tr, pos_code, stride)
                neg_idx = _trial_windows(prep, tr, neg_code, stride)
                if len(pos_idx):
                    cv_margins[key][0].append(_identity_margins(det, prep.covs[pos_idx]))
                if len(neg_idx):
                    cv_margins[key][1].append(_identity_margins(det, prep.covs[neg_idx]))

            # out-of-fold posterior traces for threshold selection; offset
            # negatives span everything the live stop decoder can see before
            # stop imagery starts, not just clean maintain windows, so the
            # selected threshold clears the movement-transition content
            cue = tr.cue_frame()
            on_idx = _span_windows(prep, cue, cue + int(round(onset_win * fs)),
                                   fully_inside=False, window_samples=win)
            pre_idx = _span_windows(prep, tr.start_frame, cue,
                                    fully_inside=True, window_samples=win)
            stop_s, stop_e = tr.segment("stop_mi")
            off_idx = _span_windows(prep, stop_s, stop_e, True, win)
            keep_idx = _span_windows(prep, cue, stop_s,
                                     fully_inside=False, window_samples=win)
            for key, det, idx, lab, origin in (
                ("onset", det_on, on_idx, 1, cue),
                ("onset", det_on, pre_idx, 0, tr.start_frame),
                ("offset", det_off, off_idx, 1, stop_s),
                ("offset", det_off, keep_idx, 0, cue),
            ):
                if len(idx) == 0:
                    continue
                traces[key].append(_trace(det, prep.covs[idx], beta))
                labels[key].append(lab)
                times[key].append((prep.end_frames[idx] - origin) / fs)

    onset = _fit_detector("onset", prepared, all_trials, ONSET_POS, ONSET_NEG,
                          stride, "start_mi", "rest", temp, fcfg)
    offset = _fit_detector("offset", prepared, all_trials, OFFSET_POS,
                           OFFSET_NEG, stride, "stop_mi", "maintain", temp, fcfg)

    # training-side counterpart of the fixation deployment reference
    ficfg = fixation_config(cfg)
    fix_covs = np.concatenate([
        prep.covs[np.where(prep.fixation)[0][::ficfg.window_stride]]
        for prep in prepared
    ], axis=0)
    train_fix = fit_fixation_reference(fix_covs, ficfg)
    onset.s_fixation = train_fix.matrix
    offset.s_fixation = train_fix.matrix

    theta_on, sel_on = _select_or_fallback(
        traces["onset"], labels["onset"], times["onset"], cap)
    theta_off, sel_off = _select_or_fallback(
        traces["offset"], labels["offset"], times["offset"], cap)

    cv = {"n_folds": len(folds)}
    for key in ("onset", "offset"):
        pos = np.concatenate(cv_margins[key][0]) if cv_margins[key][0] else np.empty(0)
        neg = np.concatenate(cv_margins[key][1]) if cv_margins[key][1] else np.empty(0)
        cv[f"{key}_auc"] = auc(pos, neg)
        cv[f"{key}_n_pos"] = int(pos.size)
        cv[f"{key}_n_neg"] = int(neg.size)

    return CalibratedModel(
        config=dict(cfg), onset=onset, offset=offset,
        theta_onset=theta_on, theta_offset=theta_off,
        selection={"onset": sel_on, "offset": sel_off}, cv=cv,
    )


@dataclass
class RunLog:
    """Per-window decoder state and trial outcomes for one replayed run."""

    run_id: int
    times: np.ndarray
    codes: np.ndarray
    fixation: np.ndarray
    margin_onset: np.ndarray
    margin_offset: np.ndarray
    p_onset: np.ndarray
    p_offset: np.ndarray
    p_smooth: np.ndarray
    active: np.ndarray     # 0 idle, 1 onset decoding, 2 offset decoding
    gate: np.ndarray
    progress: np.ndarray
    trials: list

    def to_dict(self):
        return {
            "run_id": self.run_id,
            "times": io.encode_array(self.times),
            "codes": io.encode_array(self.codes.astype(np.float64)),
            "fixation": io.encode_array(self.fixation.astype(np.float64)),
            "margin_onset": io.encode_array(self.margin_onset),
            "margin_offset": io.encode_array(self.margin_offset),
            "p_onset": io.encode_array(self.p_onset),
            "p_offset": io.encode_array(self.p_offset),
            "p_smooth": io.encode_array(self.p_smooth),
            "active": io.encode_array(self.active.astype(np.float64)),
            "gate": io.encode_array(self.gate.astype(np.float64)),
            "progress": io.encode_array(self.progress),
            "trials": list(self.trials),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            run_id=d["run_id"],
            times=io.decode_array(d["times"]),
            codes=io.decode_array(d["codes"]).astype(np.int64),
            fixation=io.decode_array(d["fixation"]).astype(bool),
            margin_onset=io.decode_array(d["margin_onset"]),
            margin_offset=io.decode_array(d["margin_offset"]),
            p_onset=io.decode_array(d["p_onset"]),
            p_offset=io.decode_array(d["p_offset"]),
            p_smooth=io.decode_array(d["p_smooth"]),
            active=io.decode_array(d["active"]).astype(np.int64),
            gate=io.decode_array(d["gate"]).astype(np.int64),
            progress=io.decode_array(d["progress"]),
            trials=list(d["trials"]),
        )


@dataclass
class SessionLog:
    mode: str
    config_hash: str
    theta_onset: float
    theta_offset: float
    runs: list = field(default_factory=list)

    def to_dict(self):
        return {
            "kind": "replay_log",
            "mode": self.mode,
            "config_hash": self.config_hash,
            "theta_onset": self.theta_onset,
            "theta_offset": self.theta_offset,
            "runs": [r.to_dict() for r in self.runs],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") != "replay_log":
            raise FormatError("not a replay log file")
        return cls(
            mode=d["mode"], config_hash=d["config_hash"],
            theta_onset=d["theta_onset"], theta_offset=d["theta_offset"],
            runs=[RunLog.from_dict(r) for r in d["runs"]],
        )


def _classify(protos, cov, ref, frame):
    """Distance pair under the current reference frame.

    ``frame`` names the matching training-side prototype frame (``whitened``
    for task mode, ``fixation`` for fixation mode). With no usable reference
    (identity mode, or a task reference that has not seen a window yet) both
    the sample and the prototypes stay raw, so the geometry is untouched
    rather than half-transformed.
    """
    inv = ref.invsqrt() if ref is not None else None
    if inv is None:
        return prototype_distances(protos, cov, frame="raw")
    return prototype_distances(protos, apply_recenter(ref, cov), frame=frame)


def replay(runs, truth, model, mode, cfg=None):
    """Replay a session through the decoder and trial machine.

    ``mode`` is one of ``identity``, ``task``, ``fixation``. State is fresh at
    the session boundary: the task reference bootstraps from the session's
    first actively decoded window, and the first run's fixation reference has
    no earlier run to blend with.
    """
    if mode not in ("identity", "task", "fixation"):
        raise BadArgumentError(f"unknown recenter mode {mode!r}")
    cfg = dict(model.config if cfg is None else cfg)
    scfg = stream_config(cfg)
    secfg = session_config(cfg)
    ficfg = fixation_config(cfg)
    prepared = prepare_runs(runs, truth, scfg)

    log = SessionLog(mode=mode, config_hash=config_hash(cfg),
                     theta_onset=model.theta_onset,
                     theta_offset=model.theta_offset)
    train_frame = {"task": "whitened", "fixation": "fixation"}.get(mode, "raw")
    task_ref = RecenterReference(kind="task") if mode == "task" else None
    fix_ref = None
    for prep in prepared:
        if mode == "fixation":
            fix_idx = np.where(prep.fixation)[0][::ficfg.window_stride]
            fix_ref = fit_fixation_reference(prep.covs[fix_idx], ficfg,
                                             previous=fix_ref)
        ref = task_ref if mode == "task" else fix_ref

        n = len(prep.times)
        m_on = np.empty(n)
        m_off = np.empty(n)
        p_sm = np.full(n, np.nan)
        act = np.zeros(n, dtype=np.int64)
        gate = np.zeros(n, dtype=np.int64)
        prog = np.zeros(n)
        trials_out = []

        machine = TrialStateMachine(secfg, model.theta_onset, model.theta_offset)
        trial_iter = iter(prep.truth.trials)
        trial = next(trial_iter)
        machine.start_trial(trial.trial_id, trial.cue_frame() / scfg.fs,
                            trial.target_id)
        for i in range(n):
            while prep.end_frames[i] > trial.end_frame:
                trials_out.append(
                    machine.finish_trial(trial.end_frame / scfg.fs).to_dict())
                trial = next(trial_iter)
                machine.start_trial(trial.trial_id,
                                    trial.cue_frame() / scfg.fs,
                                    trial.target_id)
            cov = prep.covs[i]
            d_on = _classify(model.onset, cov, ref, train_frame)
            d_off = _classify(model.offset, cov, ref, train_frame)
            m_on[i] = margin(*d_on)
            m_off[i] = margin(*d_off)
            p_on = posterior(*d_on, model.onset.temperature)
            p_off = posterior(*d_off, model.offset.temperature)
            frame = machine.advance(prep.times[i], p_on, p_off)
            p_sm[i] = frame.p_smooth
            act[i] = {"onset": 1, "offset": 2}.get(frame.active, 0)
            gate[i] = frame.gate
            prog[i] = frame.progress
            if mode == "task" and frame.active is not None:
                task_ref = update_task_reference(task_ref, cov)
                ref = task_ref
        trials_out.append(
            machine.finish_trial(trial.end_frame / scfg.fs).to_dict())
        for leftover in trial_iter:
            raise ProtocolError(
                f"run {prep.run_id}: trial {leftover.trial_id} has no windows"
            )

        temps = (model.onset.temperature, model.offset.temperature)
        log.runs.append(RunLog(
            run_id=prep.run_id, times=prep.times, codes=prep.codes,
            fixation=prep.fixation, margin_onset=m_on, margin_offset=m_off,
            p_onset=posterior_from_margin(m_on, temps[0]),
            p_offset=posterior_from_margin(m_off, temps[1]),
            p_smooth=p_sm, active=act, gate=gate, progress=prog,
            trials=trials_out,
        ))
    return log


def run_aucs(log):
    """Per-run phase-discrimination AUCs from logged margins."""
    rows = []
    for r in log.runs:
        rows.append({
            "run_id": r.run_id,
            "onset_auc": auc(r.margin_onset[r.codes == ONSET_POS],
                             r.margin_onset[r.codes == ONSET_NEG]),
            "offset_auc": auc(r.margin_offset[r.codes == OFFSET_POS],
                              r.margin_offset[r.codes == OFFSET_NEG]),
        })
    return rows


def run_metrics(log):
    """Per-run :class:`~spdbci.analysis.RunMetrics` for a replay log."""
    out = []
    for r, aucs in zip(log.runs, run_aucs(log)):
        out.append(outcome_latency_stats(
            r.trials, run_id=r.run_id,
            onset_auc=aucs["onset_auc"], offset_auc=aucs["offset_auc"],
        ))
    return out


def outcome_counts(log):
    counts = {"trials": 0, "onset_hit": 0, "onset_miss": 0, "onset_timeout": 0,
              "offset_hit": 0, "offset_miss": 0, "offset_timeout": 0,
              "offset_not_attempted": 0, "overtravel": 0}
    latencies = {"onset": [], "offset": []}
    for r in log.runs:
        for tr in r.trials:
            counts["trials"] += 1
            counts[f"onset_{tr['onset_outcome']}"] += 1
            counts[f"offset_{tr['offset_outcome']}"] += 1
            counts["overtravel"] += bool(tr["overtravel"])
            if tr["onset_latency"] is not None:
                latencies["onset"].append(tr["onset_latency"])
            if tr["offset_latency"] is not None:
                latencies["offset"].append(tr["offset_latency"])
    return counts, latencies


def _check_aligned(a, b):
    if len(a.runs) != len(b.runs) or any(
        x.times.shape != y.times.shape or not np.array_equal(x.times, y.times)
        for x, y in zip(a.runs, b.runs)
    ):
        raise ProtocolError("logs cover different sessions; cannot pair windows")


def session_bias(log, baseline):
    """Median margin shifts of ``log`` against a window-aligned baseline."""
    _check_aligned(log, baseline)
    out = {}
    for key, pos_c, neg_c in (("onset", ONSET_POS, ONSET_NEG),
                              ("offset", OFFSET_POS, OFFSET_NEG)):
        pm, pi, nm, ni = [], [], [], []
        for r_new, r_old in zip(log.runs, baseline.runs):
            m_new = getattr(r_new, f"margin_{key}")
            m_old = getattr(r_old, f"margin_{key}")
            pm.append(m_new[r_new.codes == pos_c])
            pi.append(m_old[r_old.codes == pos_c])
            nm.append(m_new[r_new.codes == neg_c])
            ni.append(m_old[r_old.codes == neg_c])
        shift = margin_shift(np.concatenate(pm), np.concatenate(pi),
                             np.concatenate(nm), np.concatenate(ni))
        out[key] = {"delta_pos": shift.delta_pos, "delta_neg": shift.delta_neg,
                    "delta_sep": shift.delta_sep}
    return out


def analyze(out_dir, logs=None, labels=None, session=None, cfg=None):
    """Write CSV/JSON reports; returns the summary dict.

    ``logs`` is an ordered list of replay logs; the first is the comparison
    baseline for margin-shift bias and paired tests. ``session`` is an
    optional ``(runs, truth)`` pair for the ERD/ERS spectrogram.
    """
    cfg = dict(DEFAULTS if cfg is None else cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logs = list(logs or [])
    labels = list(labels or [log.mode for log in logs])
    if len(labels) != len(logs):
        raise BadArgumentError("one label per log required")
    if not logs and session is None:
        raise BadArgumentError("nothing to analyze: need logs or a session")
    summary = {"labels": labels}

    if logs:
        metric_cols = ["run_id", "n_trials", "n_attempted",
                       "onset_auc", "offset_auc",
                       "onset_hit", "onset_miss", "onset_timeout",
                       "offset_hit", "offset_miss", "offset_timeout",
                       "onset_latency_mean", "onset_latency_sd",
                       "offset_latency_mean", "offset_latency_sd"]
        with (out_dir / "metrics.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label"] + metric_cols)
            per_label = {}
            for label, log in zip(labels, logs):
                rows = [m.to_dict() for m in run_metrics(log)]
                per_label[label] = rows
                for row in rows:
                    w.writerow([label] + [
                        row[c] if isinstance(row[c], int)
                        else "nan" if np.isnan(row[c]) else f"{row[c]:.6f}"
                        for c in metric_cols
                    ])
        summary["runs"] = {
            label: [dict(r) for r in rows] for label, rows in per_label.items()
        }
        summary["outcomes"] = {}
        summary["latency"] = {}
        for label, log in zip(labels, logs):
            counts, lats = outcome_counts(log)
            summary["outcomes"][label] = counts
            summary["latency"][label] = {
                k: (latency_summary(v) if v else None) for k, v in lats.items()
            }

    if len(logs) >= 2:
        base_label, base = labels[0], logs[0]
        bias_rows = []
        tests = {}
        for label, log in zip(labels[1:], logs[1:]):
            bias = session_bias(log, base)
            for key in ("onset", "offset"):
                bias_rows.append([label, key,
                                  bias[key]["delta_pos"],
                                  bias[key]["delta_neg"],
                                  bias[key]["delta_sep"]])
            tests[label] = {}
            for key in ("onset", "offset"):
                diffs = [a[f"{key}_auc"] - b[f"{key}_auc"]
                         for a, b in zip(run_aucs(log), run_aucs(base))]
                try:
                    stat, p = wilcoxon_exact(diffs)
                    tests[label][key] = {"statistic": stat, "p": p,
                                         "n_runs": len(diffs)}
                except UndefinedMetricError as exc:
                    tests[label][key] = {"error": str(exc)}
        with (out_dir / "bias.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label", "detector", "delta_pos", "delta_neg",
                        "delta_sep"])
            for row in bias_rows:
                w.writerow([row[0], row[1]] + [f"{v:.6f}" for v in row[2:]])
        summary["bias_vs"] = base_label
        summary["bias"] = {
            label: session_bias(log, base)
            for label, log in zip(labels[1:], logs[1:])
        }
        summary["auc_tests"] = tests

    if session is not None:
        s_runs, s_truth = session
        emap = erd_ers_map(
            s_runs, s_truth,
            window_seconds=cfg["analysis.spectrogram_window_seconds"],
            hop_seconds=cfg["analysis.spectrogram_hop_seconds"],
            max_freq_hz=cfg["analysis.max_freq_hz"],
        )
        with (out_dir / "spectrogram.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "freq_hz", "channel", "log10_ratio"])
            for ti, t in enumerate(emap.times):
                for fi, f in enumerate(emap.freqs):
                    for ci, ch in enumerate(emap.channel_names):
                        v = emap.values[ti, fi, ci]
                        w.writerow([f"{t:.4f}", f"{f:.1f}", ch,
                                    "nan" if np.isnan(v) else f"{v:.6f}"])
        summary["spectrogram"] = {
            "n_trials": emap.n_trials,
            "n_times": int(emap.times.size),
            "n_freqs": int(emap.freqs.size),
            "undefined_bins": int(np.sum(~emap.defined)),
        }

    io.write_json(out_dir / "summary.json", summary)
    return summary
