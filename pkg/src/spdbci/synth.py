"""Synthetic motor-imagery EEG sessions with known ground truth.

The generative model is a sum of narrowband rhythm sources plus white sensor
noise. Each source is unit-variance band-limited noise (white noise through a
second-order Butterworth bandpass, normalized by the filter's impulse-response
energy) scaled stepwise by ``sqrt(base_power * phase_gain)`` and projected
onto a fixed spatial pattern. Trials follow a rigid phase schedule; phase
gains encode the physiology:

* central mu-band sources desynchronize during imagery and movement,
* a central beta source desynchronizes during imagery and rebounds strongly
  after the stop command (the post-movement rebound),
* posterior alpha and a focal high-beta source synchronize during the task,
  so imagery redistributes band power rather than only removing it,
* broadband movement sources switch on while the arm is in motion, displacing
  the covariance away from every imagery class; their power fluctuates in
  bursts (a lognormal block envelope) so held movement is far noisier than
  the brief stop-imagery interval.

Sensor-space drift between sessions is modeled as a fixed linear mixing
``x -> x @ W.T`` with ``W = expm(strength * D / ||D||_F)`` for a random
symmetric ``D``, which acts on covariances by congruence.

Randomness is split per trial: ``SeedSequence(seed)`` spawns one child for
the drift direction and one per trial, so any trial can be regenerated
independently and adding runs does not disturb earlier ones. Each trial
prepends one second of warmup (first-phase gains) that is discarded after
filtering.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal

from .errors import BadArgumentError
from .spd import sym_exp

PHASE_CODES = {
    "rest": 1,
    "countdown": 2,
    "start_mi": 3,
    "maintain": 4,
    "stop_mi": 5,
    "post_rest": 6,
    "return_home": 7,
}
MIXED_CODE = 0

OFFLINE_SCHEDULE = (
    ("rest", 3.0), ("countdown", 3.0), ("start_mi", 3.0), ("maintain", 3.0),
    ("stop_mi", 3.0), ("post_rest", 3.0), ("return_home", 3.0),
)
ONLINE_SCHEDULE = (
    # start_mi covers the go cue until the typical online start decision;
    # stop imagery begins mid-trajectory, a couple of seconds into movement
    ("rest", 3.0), ("countdown", 3.0), ("start_mi", 1.5), ("maintain", 1.5),
    ("stop_mi", 2.5), ("post_rest", 2.0), ("return_home", 1.5),
)

DEFAULT_CHANNELS = ("C3", "C4", "Cz", "FC3", "FC4", "CP3", "CP4", "Pz")

N_TARGETS = 3

WARMUP_SECONDS = 1.0
IMPULSE_TAPS = 8192
BURST_BLOCK_SECONDS = 0.5


@dataclass(eq=False)
class RhythmSource:
    """One narrowband source: band, spatial pattern, per-phase power gains.

    ``burst`` maps a phase name to the log-sd of a lognormal power envelope,
    drawn per half-second block with unit mean, so a phase can be made noisy
    without changing its expected power.
    """

    name: str
    center_hz: float
    bandwidth_hz: float
    pattern: np.ndarray
    base_power: float
    phase_gains: dict
    burst: dict = field(default_factory=dict)

    def __post_init__(self):
        self.pattern = np.asarray(self.pattern, dtype=np.float64)
        if self.pattern.ndim != 1:
            raise BadArgumentError(f"source {self.name}: pattern must be 1-D")
        if self.bandwidth_hz <= 0 or self.center_hz <= self.bandwidth_hz / 2:
            raise BadArgumentError(f"source {self.name}: bad band")
        if self.base_power < 0:
            raise BadArgumentError(f"source {self.name}: base_power must be >= 0")
        for phase, g in self.phase_gains.items():
            if phase not in PHASE_CODES:
                raise BadArgumentError(f"source {self.name}: unknown phase {phase}")
            if g < 0:
                raise BadArgumentError(f"source {self.name}: negative gain for {phase}")
        for phase, sd in self.burst.items():
            if phase not in PHASE_CODES:
                raise BadArgumentError(
                    f"source {self.name}: unknown burst phase {phase}")
            if sd < 0:
                raise BadArgumentError(
                    f"source {self.name}: negative burst sd for {phase}")

    def gain_for(self, phase):
        return self.phase_gains.get(phase, 0.0)

    def burst_for(self, phase):
        return self.burst.get(phase, 0.0)

    def dominant_channel(self):
        return int(np.argmax(np.abs(self.pattern)))

    def to_dict(self):
        return {
            "name": self.name,
            "center_hz": self.center_hz,
            "bandwidth_hz": self.bandwidth_hz,
            "pattern": [float(v) for v in self.pattern],
            "base_power": self.base_power,
            "phase_gains": dict(self.phase_gains),
            "burst": dict(self.burst),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            name=d["name"], center_hz=d["center_hz"],
            bandwidth_hz=d["bandwidth_hz"], pattern=np.asarray(d["pattern"]),
            base_power=d["base_power"], phase_gains=dict(d["phase_gains"]),
            burst=dict(d.get("burst", {})),
        )


@dataclass(eq=False)
class SessionSpec:
    """Full description of a synthetic session (geometry, schedule, noise)."""

    fs: int = 512
    channel_names: tuple = DEFAULT_CHANNELS
    n_runs: int = 2
    trials_per_run: int = 10
    schedule: tuple = ONLINE_SCHEDULE
    sources: tuple = ()
    noise_floor: float = 0.02
    drift_strength: float = 0.0

    def __post_init__(self):
        if self.fs <= 0 or self.n_runs < 1 or self.trials_per_run < 1:
            raise BadArgumentError("fs, n_runs, trials_per_run must be positive")
        if self.noise_floor <= 0:
            # zero noise would allow rank-deficient windows
            raise BadArgumentError("noise_floor must be positive")
        if self.drift_strength < 0:
            raise BadArgumentError("drift_strength must be >= 0")
        names = [p for p, _ in self.schedule]
        if len(names) != len(set(names)):
            raise BadArgumentError("schedule phases must be unique within a trial")
        for phase, dur in self.schedule:
            if phase not in PHASE_CODES:
                raise BadArgumentError(f"unknown schedule phase {phase}")
            if dur <= 0 or abs(dur * self.fs - round(dur * self.fs)) > 1e-9:
                raise BadArgumentError(
                    f"phase {phase}: duration must span a whole number of frames"
                )
        n_ch = len(self.channel_names)
        for src in self.sources:
            if src.pattern.shape != (n_ch,):
                raise BadArgumentError(
                    f"source {src.name}: pattern length {src.pattern.shape} "
                    f"does not match {n_ch} channels"
                )
            if src.center_hz + src.bandwidth_hz / 2 >= self.fs / 2:
                raise BadArgumentError(f"source {src.name}: band exceeds Nyquist")

    @property
    def n_channels(self):
        return len(self.channel_names)

    @property
    def trial_seconds(self):
        return sum(d for _, d in self.schedule)

    @property
    def trial_frames(self):
        return int(round(self.trial_seconds * self.fs))


@dataclass
class TrialTruth:
    """Ground-truth phase segmentation of one trial (frames within the run).

    ``target_id`` names the reach target (1..3). Targets rotate across trials
    and do not shape the EEG: the imagery signatures are target-independent,
    so the id is bookkeeping for per-target reporting only.
    """

    trial_id: int
    start_frame: int
    end_frame: int
    segments: tuple  # ((phase, start_frame, end_frame), ...)
    target_id: int = 1

    def segment(self, phase):
        for name, s, e in self.segments:
            if name == phase:
                return s, e
        raise BadArgumentError(f"trial {self.trial_id} has no phase {phase}")

    def cue_frame(self):
        """The go cue: start of the first imagery phase."""
        return self.segment("start_mi")[0]

    def to_dict(self):
        return {
            "trial_id": self.trial_id,
            "target_id": self.target_id,
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "segments": [[p, int(s), int(e)] for p, s, e in self.segments],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            trial_id=d["trial_id"], start_frame=d["start_frame"],
            end_frame=d["end_frame"],
            segments=tuple((p, int(s), int(e)) for p, s, e in d["segments"]),
            target_id=int(d.get("target_id", 1)),
        )


@dataclass
class RunTruth:
    run_id: int
    n_frames: int
    trials: list

    def to_dict(self):
        return {
            "run_id": self.run_id,
            "n_frames": self.n_frames,
            "trials": [t.to_dict() for t in self.trials],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            run_id=d["run_id"], n_frames=d["n_frames"],
            trials=[TrialTruth.from_dict(t) for t in d["trials"]],
        )


@dataclass
class GroundTruth:
    """Sidecar payload: spec echo plus per-run trial segmentations."""

    fs: int
    channel_names: tuple
    schedule: tuple
    noise_floor: float
    drift_strength: float
    sources: list
    runs: list = field(default_factory=list)

    def to_dict(self):
        return {
            "fs": self.fs,
            "channel_names": list(self.channel_names),
            "schedule": [[p, float(d)] for p, d in self.schedule],
            "noise_floor": self.noise_floor,
            "drift_strength": self.drift_strength,
            "sources": [s.to_dict() for s in self.sources],
            "runs": [r.to_dict() for r in self.runs],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            fs=d["fs"], channel_names=tuple(d["channel_names"]),
            schedule=tuple((p, float(dur)) for p, dur in d["schedule"]),
            noise_floor=d["noise_floor"],
            drift_strength=d["drift_strength"],
            sources=[RhythmSource.from_dict(s) for s in d["sources"]],
            runs=[RunTruth.from_dict(r) for r in d["runs"]],
        )

    def source(self, name):
        for s in self.sources:
            if s.name == name:
                return s
        raise BadArgumentError(f"no source named {name}")


def _pattern(rng, n_channels, dominant, zero=()):
    v = 0.25 * rng.standard_normal(n_channels)
    for ch in zero:
        v[ch] = 0.0
    v[dominant] = 1.0
    return v / np.linalg.norm(v)


def make_default_spec(subject_seed=0, n_runs=2, trials_per_run=10, online=True,
                      n_channels=8, noise_floor=0.02, drift_strength=0.0,
                      movement_broadband=2.5):
    """Build a spec with the standard seven-source subject model.

    ``subject_seed`` fixes the spatial patterns, so sessions generated from
    specs sharing it (for example a drift-free and a drifted one) describe the
    same subject. ``movement_broadband`` scales the power of the two
    movement-locked sources; it must comfortably exceed the imagery rhythm
    powers for movement to displace the covariance off the imagery axis.

    The task-positive (alpha/high-beta synchronization) and task-negative
    (mu/beta desynchronization) log-contrasts are chosen to nearly cancel, so
    the net trace of a window moves little between rest and imagery and a
    uniform power rescaling is nearly orthogonal to the class contrast. The
    synchronizing sources carry no weight on the mu source's dominant channel;
    band-power bookkeeping at that channel then reflects the mu gains alone.
    """
    if n_channels < 8:
        raise BadArgumentError("need at least 8 channels for the default sources")
    if movement_broadband < 0:
        raise BadArgumentError("movement_broadband must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence([1618, int(subject_seed)]))
    names = (DEFAULT_CHANNELS if n_channels == len(DEFAULT_CHANNELS)
             else tuple(f"ch{i:02d}" for i in range(n_channels)))
    sources = (
        RhythmSource(
            name="mu", center_hz=10.0, bandwidth_hz=3.0,
            pattern=_pattern(rng, n_channels, dominant=0), base_power=1.0,
            # countdown sits between rest and imagery: motor preparation
            # already suppresses the rhythms before the go cue
            phase_gains={"rest": 1.0, "countdown": 0.7, "start_mi": 0.56,
                         "maintain": 0.56, "stop_mi": 0.64, "post_rest": 1.0,
                         "return_home": 0.9},
        ),
        RhythmSource(
            name="mu2", center_hz=11.0, bandwidth_hz=4.0,
            pattern=_pattern(rng, n_channels, dominant=5), base_power=0.9,
            # rebound past the resting level already during stop imagery
            phase_gains={"rest": 1.0, "countdown": 0.75, "start_mi": 0.65,
                         "maintain": 0.65, "stop_mi": 1.15, "post_rest": 1.0,
                         "return_home": 0.9},
        ),
        RhythmSource(
            name="beta", center_hz=20.0, bandwidth_hz=6.0,
            pattern=_pattern(rng, n_channels, dominant=1), base_power=1.0,
            # strong post-movement rebound: the stop signature
            phase_gains={"rest": 1.0, "countdown": 0.8, "start_mi": 0.74,
                         "maintain": 0.74, "stop_mi": 3.20, "post_rest": 1.2,
                         "return_home": 1.0},
        ),
        RhythmSource(
            name="alpha", center_hz=12.0, bandwidth_hz=4.0,
            pattern=_pattern(rng, n_channels, dominant=7, zero=(0,)),
            base_power=0.8,
            # posterior alpha rises with task engagement
            phase_gains={"rest": 0.6, "countdown": 1.0, "start_mi": 1.53,
                         "maintain": 1.53, "stop_mi": 1.08, "post_rest": 0.8,
                         "return_home": 0.7},
        ),
        RhythmSource(
            name="beta2", center_hz=25.0, bandwidth_hz=6.0,
            pattern=_pattern(rng, n_channels, dominant=6, zero=(0,)),
            base_power=0.7,
            # focal desynchronization comes with surround synchronization
            phase_gains={"rest": 0.7, "countdown": 0.85, "start_mi": 1.04,
                         "maintain": 1.04, "stop_mi": 1.42, "post_rest": 0.9,
                         "return_home": 0.8},
        ),
        RhythmSource(
            name="move_low", center_hz=16.0, bandwidth_hz=9.0,
            pattern=_pattern(rng, n_channels, dominant=2),
            base_power=movement_broadband,
            # held movement is bursty; the short stop interval is steadier.
            # phase gains offset the lognormal envelope's log-median of
            # -sd^2/2 (unit mean), so held movement and stop windows carry
            # the same typical power and differ mainly in spread.
            phase_gains={"maintain": 1.83, "stop_mi": 1.0, "return_home": 1.6},
            burst={"maintain": 1.1, "stop_mi": 0.3, "return_home": 1.0},
        ),
        RhythmSource(
            name="move_high", center_hz=22.0, bandwidth_hz=11.0,
            pattern=_pattern(rng, n_channels, dominant=3),
            base_power=movement_broadband,
            phase_gains={"maintain": 1.83, "stop_mi": 1.0, "return_home": 1.6},
            burst={"maintain": 1.1, "stop_mi": 0.3, "return_home": 1.0},
        ),
    )
    return SessionSpec(
        fs=512, channel_names=names, n_runs=n_runs,
        trials_per_run=trials_per_run,
        schedule=ONLINE_SCHEDULE if online else OFFLINE_SCHEDULE,
        sources=sources, noise_floor=noise_floor,
        drift_strength=drift_strength,
    )


@lru_cache(maxsize=64)
def _band_filter(center_hz, bandwidth_hz, fs):
    lo = center_hz - bandwidth_hz / 2
    hi = center_hz + bandwidth_hz / 2
    sos = signal.butter(2, [lo, hi], btype="bandpass", fs=fs, output="sos")
    impulse = np.zeros(IMPULSE_TAPS)
    impulse[0] = 1.0
    energy = float(np.sum(signal.sosfilt(sos, impulse) ** 2))
    return sos, energy


def _trial_gain_track(spec, src, warmup_frames):
    """Per-sample amplitude sqrt(base_power * phase_gain), warmup prepended."""
    first = spec.schedule[0][0]
    parts = [np.full(warmup_frames, src.gain_for(first))]
    for phase, dur in spec.schedule:
        parts.append(np.full(int(round(dur * spec.fs)), src.gain_for(phase)))
    return np.sqrt(src.base_power * np.concatenate(parts))


def _block_phases(spec, warmup_frames):
    """Phase name at the first sample of each envelope block."""
    block = int(round(BURST_BLOCK_SECONDS * spec.fs))
    total = warmup_frames + spec.trial_frames
    bounds, names = [], []
    f = warmup_frames
    for phase, dur in spec.schedule:
        bounds.append(f)
        names.append(phase)
        f += int(round(dur * spec.fs))
    starts = np.arange(0, total, block)
    idx = np.searchsorted(np.asarray(bounds), starts, side="right") - 1
    first = spec.schedule[0][0]
    return block, [first if i < 0 else names[i] for i in idx]


def _generate_trial(spec, rng):
    warm = int(round(WARMUP_SECONDS * spec.fs))
    total = warm + spec.trial_frames
    block, block_phases = _block_phases(spec, warm)
    x = np.zeros((spec.trial_frames, spec.n_channels))
    for src in spec.sources:
        sos, energy = _band_filter(src.center_hz, src.bandwidth_hz, spec.fs)
        white = rng.standard_normal(total)
        # one draw per block regardless of burst settings, so the stream
        # layout is identical across source configurations
        z = rng.standard_normal(len(block_phases))
        y = signal.sosfilt(sos, white) / np.sqrt(energy)
        y *= _trial_gain_track(spec, src, warm)
        sd = np.array([src.burst_for(p) for p in block_phases])
        if np.any(sd > 0):
            # lognormal power envelope, unit mean per block
            env = np.exp(sd * z - 0.5 * sd * sd)
            y *= np.sqrt(np.repeat(env, block)[:total])
        x += np.outer(y[warm:], src.pattern)
    x += np.sqrt(spec.noise_floor) * rng.standard_normal(x.shape)
    return x


def _trial_truth(spec, trial_id, start_frame, target_id):
    segments = []
    f = start_frame
    for phase, dur in spec.schedule:
        nf = int(round(dur * spec.fs))
        segments.append((phase, f, f + nf))
        f += nf
    return TrialTruth(trial_id=trial_id, start_frame=start_frame,
                      end_frame=f, segments=tuple(segments),
                      target_id=target_id)


def generate_session(spec, seed):
    """Generate all runs of a session.

    Returns ``(runs, truth)`` where ``runs`` is a list of float arrays of
    shape ``(n_frames, n_channels)`` and ``truth`` the matching ground-truth
    record. Deterministic in ``(spec, seed)``.
    """
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(1 + spec.n_runs * spec.trials_per_run)
    drift_rng = np.random.default_rng(children[0])
    d = drift_rng.standard_normal((spec.n_channels, spec.n_channels))
    d = (d + d.T) / 2.0
    mix = None
    if spec.drift_strength > 0:
        mix = sym_exp(spec.drift_strength * d / np.linalg.norm(d))

    truth = GroundTruth(
        fs=spec.fs, channel_names=spec.channel_names, schedule=spec.schedule,
        noise_floor=spec.noise_floor, drift_strength=spec.drift_strength,
        sources=list(spec.sources),
    )
    runs = []
    child = 1
    for r in range(spec.n_runs):
        blocks, trials = [], []
        frame = 0
        for k in range(spec.trials_per_run):
            rng = np.random.default_rng(children[child])
            child += 1
            blocks.append(_generate_trial(spec, rng))
            trials.append(_trial_truth(
                spec, k, frame,
                (r * spec.trials_per_run + k) % N_TARGETS + 1))
            frame += spec.trial_frames
        x = np.concatenate(blocks, axis=0)
        if mix is not None:
            x = x @ mix.T
        runs.append(x)
        truth.runs.append(RunTruth(run_id=r, n_frames=frame, trials=trials))
    return runs, truth


def label_windows(end_frames, run_truth, window_samples):
    """Phase code per analysis window.

    A window ``[end - window_samples, end)`` gets a phase's code only when it
    lies fully inside that phase's segment; windows touching a boundary get
    ``MIXED_CODE``.
    """
    end_frames = np.asarray(end_frames, dtype=np.int64)
    codes = np.full(end_frames.shape, MIXED_CODE, dtype=np.int64)
    starts, stops, vals = [], [], []
    for tr in run_truth.trials:
        for phase, s, e in tr.segments:
            starts.append(s)
            stops.append(e)
            vals.append(PHASE_CODES[phase])
    starts = np.asarray(starts)
    stops = np.asarray(stops)
    vals = np.asarray(vals)
    order = np.argsort(starts)
    starts, stops, vals = starts[order], stops[order], vals[order]
    w_start = end_frames - int(window_samples)
    idx = np.searchsorted(starts, w_start, side="right") - 1
    ok = (idx >= 0) & (w_start >= starts[np.clip(idx, 0, None)]) \
        & (end_frames <= stops[np.clip(idx, 0, None)])
    codes[ok] = vals[idx[ok]]
    return codes


def fixation_window_mask(end_frames, run_truth, window_samples):
    """True for windows fully inside a trial's pre-cue interval."""
    end_frames = np.asarray(end_frames, dtype=np.int64)
    mask = np.zeros(end_frames.shape, dtype=bool)
    for tr in run_truth.trials:
        cue = tr.cue_frame()
        w_start = end_frames - int(window_samples)
        mask |= (w_start >= tr.start_frame) & (end_frames <= cue)
    return mask
