"""Trial state machine: threshold-and-hold decisions, gate, 1-D trajectory.

A trial runs through machine phases ``await_cue -> onset -> moving ->
(overtravel) -> post``. Decoding starts at the cue; a Start decision opens the
assistance gate and starts the trajectory; a Stop decision (or the timeout
policy) closes it. Decisions need ``hold_frames`` consecutive frames with the
smoothed posterior at or above threshold; the opposite class fires on the
mirrored criterion ``(1 - p) >= theta`` with the same hold, producing a miss.
The positive rule is evaluated first when both complete on the same frame.

Frame times are window-end times and arrive on a fixed hop grid, so every
deadline below is a dyadic rational and floating-point comparisons are exact:
a hold completing at frame time ``t`` is stamped ``t + hop`` and only counts
if that stamp is within the decision window (onset closes ``cue + 5 s``,
offset ``movement_onset + 6 s`` by default).
"""

from dataclasses import dataclass, field

import numpy as np

from .decoder import EMA_RESET, ema_update
from .errors import BadArgumentError, ProtocolError

ONSET_HIT = "hit"
MISS = "miss"
TIMEOUT = "timeout"
NOT_ATTEMPTED = "not_attempted"


@dataclass(frozen=True)
class SessionConfig:
    """Decision-logic and actuator timing parameters."""

    hop_seconds: float = 0.0625
    hold_frames: int = 4
    onset_window_seconds: float = 5.0
    offset_window_seconds: float = 6.0
    refractory_seconds: float = 1.0
    ema_beta: float = 0.2
    trajectory_seconds: float = 6.4
    overtravel_seconds: float = 5.0

    def __post_init__(self):
        if self.hop_seconds <= 0:
            raise BadArgumentError("hop_seconds must be positive")
        if self.hold_frames < 1:
            raise BadArgumentError("hold_frames must be >= 1")
        for name in ("onset_window_seconds", "offset_window_seconds",
                     "trajectory_seconds"):
            if getattr(self, name) <= 0:
                raise BadArgumentError(f"{name} must be positive")
        if self.refractory_seconds < 0 or self.overtravel_seconds < 0:
            raise BadArgumentError("refractory and overtravel must be >= 0")
        if not (0.0 < self.ema_beta <= 1.0):
            raise BadArgumentError("ema_beta must be in (0, 1]")


@dataclass
class PosteriorTrace:
    """Frames one detector saw while active: window-end times, raw and
    smoothed posteriors, parallel lists."""

    times: list = field(default_factory=list)
    p_raw: list = field(default_factory=list)
    p_smooth: list = field(default_factory=list)

    def append(self, t, raw, smooth):
        self.times.append(float(t))
        self.p_raw.append(float(raw))
        self.p_smooth.append(float(smooth))

    def __len__(self):
        return len(self.times)

    def to_dict(self):
        return {"times": list(self.times), "p_raw": list(self.p_raw),
                "p_smooth": list(self.p_smooth)}

    @classmethod
    def from_dict(cls, d):
        return cls(times=list(d["times"]), p_raw=list(d["p_raw"]),
                   p_smooth=list(d["p_smooth"]))


@dataclass
class TrialRecord:
    """Outcome summary of one trial, with the posterior traces it was
    decided on and the thresholds in force."""

    trial_id: int
    cue_time: float
    target_id: int = 0
    theta_onset: float = np.nan
    theta_offset: float = np.nan
    onset_outcome: str = TIMEOUT
    onset_time: float = np.nan
    onset_latency: float = np.nan
    movement_onset: float = np.nan
    offset_outcome: str = NOT_ATTEMPTED
    offset_time: float = np.nan
    offset_latency: float = np.nan
    gate_up_time: float = np.nan
    gate_down_time: float = np.nan
    stop_progress: float = np.nan
    overtravel: bool = False
    onset_trace: PosteriorTrace = field(default_factory=PosteriorTrace)
    offset_trace: PosteriorTrace = field(default_factory=PosteriorTrace)

    def to_dict(self):
        def f(x):
            return None if isinstance(x, float) and np.isnan(x) else x

        return {
            "trial_id": self.trial_id,
            "cue_time": self.cue_time,
            "target_id": self.target_id,
            "theta_onset": f(self.theta_onset),
            "theta_offset": f(self.theta_offset),
            "onset_outcome": self.onset_outcome,
            "onset_time": f(self.onset_time),
            "onset_latency": f(self.onset_latency),
            "movement_onset": f(self.movement_onset),
            "offset_outcome": self.offset_outcome,
            "offset_time": f(self.offset_time),
            "offset_latency": f(self.offset_latency),
            "gate_up_time": f(self.gate_up_time),
            "gate_down_time": f(self.gate_down_time),
            "stop_progress": f(self.stop_progress),
            "overtravel": self.overtravel,
            "onset_trace": self.onset_trace.to_dict(),
            "offset_trace": self.offset_trace.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        def g(key, default=np.nan):
            v = d.get(key)
            return default if v is None else v

        return cls(
            trial_id=d["trial_id"],
            cue_time=d["cue_time"],
            target_id=d.get("target_id", 0),
            theta_onset=g("theta_onset"),
            theta_offset=g("theta_offset"),
            onset_outcome=d["onset_outcome"],
            onset_time=g("onset_time"),
            onset_latency=g("onset_latency"),
            movement_onset=g("movement_onset"),
            offset_outcome=d["offset_outcome"],
            offset_time=g("offset_time"),
            offset_latency=g("offset_latency"),
            gate_up_time=g("gate_up_time"),
            gate_down_time=g("gate_down_time"),
            stop_progress=g("stop_progress"),
            overtravel=bool(d["overtravel"]),
            onset_trace=PosteriorTrace.from_dict(d["onset_trace"]),
            offset_trace=PosteriorTrace.from_dict(d["offset_trace"]),
        )


@dataclass
class FrameRecord:
    """Per-frame machine output."""

    time: float
    phase: str
    active: str | None
    p_raw: float
    p_smooth: float
    gate: int
    progress: float
    events: tuple = ()


def gate_torque(gate, torque):
    """Assistance torque actually applied: the gate multiplies the command."""
    if gate not in (0, 1):
        raise BadArgumentError(f"gate must be 0 or 1, got {gate}")
    return gate * torque


@dataclass
class _Hold:
    """Consecutive supra-threshold frame counter."""

    theta: float
    need: int
    count: int = 0

    def feed(self, value):
        self.count = self.count + 1 if value >= self.theta else 0
        return self.count == self.need

    def reset(self):
        self.count = 0


class TrialStateMachine:
    """Drives one trial at a time from a stream of raw posterior frames.

    Call :meth:`start_trial`, feed frames in time order through
    :meth:`advance`, then :meth:`finish_trial` at the trial's end time.
    The gate changes at most once in each direction per trial, only through
    decisions or the timeout policy; trajectory progress is non-decreasing
    and frozen while the gate is down.
    """

    def __init__(self, cfg, theta_onset, theta_offset):
        for name, th in (("theta_onset", theta_onset), ("theta_offset", theta_offset)):
            if not (0.0 < th < 1.0):
                raise BadArgumentError(f"{name} must be in (0, 1), got {th}")
        self.cfg = cfg
        self.theta_onset = float(theta_onset)
        self.theta_offset = float(theta_offset)
        self._trial = None
        self._last_time = -np.inf

    def start_trial(self, trial_id, cue_time, target_id=0):
        if self._trial is not None:
            raise ProtocolError("previous trial not finished")
        if cue_time <= self._last_time:
            raise ProtocolError(
                f"trial {trial_id} cue at {cue_time} is not after previous frames"
            )
        self._trial = TrialRecord(trial_id=trial_id, cue_time=float(cue_time),
                                  target_id=int(target_id),
                                  theta_onset=self.theta_onset,
                                  theta_offset=self.theta_offset)
        self._phase = "await_cue"
        self._gate = 0
        self._ema = EMA_RESET
        self._pos_hold = _Hold(self.theta_onset, self.cfg.hold_frames)
        self._neg_hold = _Hold(self.theta_onset, self.cfg.hold_frames)
        self._onset_close = self._trial.cue_time + self.cfg.onset_window_seconds
        self._offset_close = np.nan
        self._overtravel_end = np.nan
        self._refractory_until = -np.inf

    def _enter_onset(self):
        self._phase = "onset"
        self._ema = EMA_RESET
        self._pos_hold = _Hold(self.theta_onset, self.cfg.hold_frames)
        self._neg_hold = _Hold(self.theta_onset, self.cfg.hold_frames)

    def _enter_moving(self, decision_time):
        tr = self._trial
        tr.onset_outcome = ONSET_HIT
        tr.onset_time = decision_time
        tr.onset_latency = decision_time - tr.cue_time
        tr.movement_onset = decision_time
        tr.gate_up_time = decision_time
        self._gate = 1
        self._phase = "moving"
        self._ema = EMA_RESET
        self._pos_hold = _Hold(self.theta_offset, self.cfg.hold_frames)
        self._neg_hold = _Hold(self.theta_offset, self.cfg.hold_frames)
        self._offset_close = decision_time + self.cfg.offset_window_seconds
        self._refractory_until = decision_time + self.cfg.refractory_seconds

    def _progress_at(self, t):
        tr = self._trial
        if np.isnan(tr.gate_up_time):
            return 0.0
        stop = tr.gate_down_time if not np.isnan(tr.gate_down_time) else np.inf
        gated = max(0.0, min(float(t), stop) - tr.gate_up_time)
        return gated / self.cfg.trajectory_seconds

    def _close_gate(self, t):
        self._gate = 0
        self._trial.gate_down_time = t
        self._trial.stop_progress = self._progress_at(t)

    def _begin_overtravel(self, t):
        # pre-programmed completion; the gate stays up until it finishes
        self._trial.overtravel = True
        self._phase = "overtravel"
        self._overtravel_end = t + self.cfg.overtravel_seconds

    def advance(self, t, p_onset_raw, p_offset_raw):
        """Process one posterior frame at window-end time ``t`` (seconds)."""
        if self._trial is None:
            raise ProtocolError("no active trial")
        if t <= self._last_time:
            raise ProtocolError(f"non-monotone frame time {t}")
        self._last_time = t
        cfg = self.cfg
        tr = self._trial
        events = []

        if self._phase == "await_cue" and t > tr.cue_time:
            self._enter_onset()

        active = None
        p_raw = np.nan
        if self._phase == "onset":
            active = "onset"
            p_raw = float(p_onset_raw)
            if t > self._onset_close:
                tr.onset_outcome = TIMEOUT
                tr.onset_time = self._onset_close
                events.append("onset_timeout")
                self._phase = "post"
                active = None
                p_raw = np.nan
            else:
                self._ema = ema_update(self._ema, p_raw, cfg.ema_beta)
                tr.onset_trace.append(t, p_raw, self._ema)
                fired_pos = self._pos_hold.feed(self._ema)
                fired_neg = self._neg_hold.feed(1.0 - self._ema)
                stamp = t + cfg.hop_seconds
                if fired_pos and stamp <= self._onset_close:
                    events.extend(["start_hit", "gate_up"])
                    self._enter_moving(stamp)
                elif fired_neg and stamp <= self._onset_close:
                    tr.onset_outcome = MISS
                    tr.onset_time = stamp
                    events.append("start_miss")
                    self._phase = "post"
        elif self._phase == "moving" and t > tr.movement_onset:
            active = "offset"
            p_raw = float(p_offset_raw)
            if t > self._offset_close:
                tr.offset_outcome = TIMEOUT
                tr.offset_time = self._offset_close
                events.append("offset_timeout")
                self._begin_overtravel(self._offset_close)
                active = None
                p_raw = np.nan
            else:
                self._ema = ema_update(self._ema, p_raw, cfg.ema_beta)
                tr.offset_trace.append(t, p_raw, self._ema)
                in_refractory = t < self._refractory_until
                if not in_refractory:
                    fired_pos = self._pos_hold.feed(self._ema)
                    fired_neg = self._neg_hold.feed(1.0 - self._ema)
                    stamp = t + cfg.hop_seconds
                    if fired_pos and stamp <= self._offset_close:
                        tr.offset_outcome = ONSET_HIT
                        tr.offset_time = stamp
                        tr.offset_latency = stamp - tr.movement_onset
                        events.extend(["stop_hit", "gate_down"])
                        self._close_gate(stamp)
                        self._phase = "post"
                    elif fired_neg and stamp <= self._offset_close:
                        tr.offset_outcome = MISS
                        tr.offset_time = stamp
                        events.append("stop_miss")
                        self._begin_overtravel(stamp)

        if self._phase == "overtravel" and t >= self._overtravel_end:
            events.append("gate_down")
            self._close_gate(self._overtravel_end)
            self._phase = "post"

        return FrameRecord(
            time=t,
            phase=self._phase,
            active=active,
            p_raw=p_raw,
            p_smooth=self._ema if active is not None else np.nan,
            gate=self._gate,
            progress=self._progress_at(t),
            events=tuple(events),
        )

    def finish_trial(self, t_end):
        """Finalize at the trial's end time and return the record."""
        if self._trial is None:
            raise ProtocolError("no active trial")
        tr = self._trial
        if self._phase in ("await_cue", "onset"):
            # stream ended inside (or before) the onset window
            tr.onset_outcome = TIMEOUT
            tr.onset_time = min(self._onset_close, float(t_end))
        elif self._phase == "moving":
            tr.offset_outcome = TIMEOUT
            tr.offset_time = min(self._offset_close, float(t_end))
            self._begin_overtravel(tr.offset_time)
        if self._phase == "overtravel" and self._gate == 1:
            # trial ends before the pre-programmed completion does
            self._close_gate(min(self._overtravel_end, float(t_end)))
        self._trial = None
        return tr


def classify_outcomes(record, cfg=None):
    """Re-derive ``(onset_outcome, offset_outcome)`` from stored traces.

    Feeds the recorded raw posteriors through a fresh machine under the
    thresholds stamped on the record, so the labels come out of the decision
    rule rather than the record's own outcome fields. The EMA recomputes from
    its seed over exactly the frames the live machine consumed, so the replay
    is bit-identical and the labels must agree.

    Raises :class:`BadArgumentError` when a trace stops short of both a
    decision and its window close: a truncated stream cannot be
    re-classified.
    """
    cfg = SessionConfig() if cfg is None else cfg
    on, off = record.onset_trace, record.offset_trace
    if len(on) == 0:
        raise BadArgumentError(
            f"trial {record.trial_id}: onset trace is empty")
    if np.isnan(record.theta_onset) or np.isnan(record.theta_offset):
        raise BadArgumentError(
            f"trial {record.trial_id}: record carries no thresholds")

    m = TrialStateMachine(cfg, record.theta_onset, record.theta_offset)
    m.start_trial(record.trial_id, record.cue_time, record.target_id)
    for t, p in zip(on.times, on.p_raw):
        m.advance(t, p, 0.0)
    if m._phase == "onset":
        # no decision in the trace; only a trace reaching the window close
        # can be called a timeout
        if on.times[-1] + cfg.hop_seconds <= m._onset_close:
            raise BadArgumentError(
                f"trial {record.trial_id}: onset trace ends before the "
                "window closes with no decision")
        if len(off):
            raise BadArgumentError(
                f"trial {record.trial_id}: offset trace present but the "
                "onset trace never yields a start decision")
        return TIMEOUT, NOT_ATTEMPTED
    if m._phase == "post":
        # onset resolved without opening the gate
        if len(off):
            raise BadArgumentError(
                f"trial {record.trial_id}: offset trace present but the "
                "onset trace never yields a start decision")
        out = m.finish_trial(on.times[-1] + cfg.hop_seconds)
        return out.onset_outcome, out.offset_outcome

    if len(off) == 0:
        raise BadArgumentError(
            f"trial {record.trial_id}: start decided but offset trace is "
            "empty")
    for t, p in zip(off.times, off.p_raw):
        m.advance(t, 0.0, p)
    if m._phase == "moving" and (
            off.times[-1] + cfg.hop_seconds <= m._offset_close):
        raise BadArgumentError(
            f"trial {record.trial_id}: offset trace ends before the window "
            "closes with no decision")
    out = m.finish_trial(off.times[-1] + cfg.hop_seconds)
    return out.onset_outcome, out.offset_outcome


def run_trial(cfg, theta_onset, theta_offset, trial_id, cue_time,
              times, p_onset_raw, p_offset_raw, t_end):
    """Feed a full trial's posterior frames through a fresh machine.

    Pure function of its inputs; replaying logged posteriors through it must
    reproduce the logged outcomes exactly.
    """
    m = TrialStateMachine(cfg, theta_onset, theta_offset)
    m.start_trial(trial_id, cue_time)
    frames = [
        m.advance(t, po, pf)
        for t, po, pf in zip(times, p_onset_raw, p_offset_raw)
    ]
    return m.finish_trial(t_end), frames
