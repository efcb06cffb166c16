"""Flat key=value configuration with typed defaults and a content hash."""

import hashlib
import json
from pathlib import Path

from .errors import ConfigError
from .preprocess import StreamConfig
from .recenter import KINDS, FixationConfig
from .session import SessionConfig
from .spd import FrechetConfig

DEFAULTS = {
    "stream.fs": 512,
    "stream.band_lo": 8.0,
    "stream.band_hi": 30.0,
    "stream.filter_order": 4,
    "stream.window_seconds": 1.0,
    "stream.hop_seconds": 0.0625,
    "stream.diag_loading": 1e-5,
    "decoder.ema_beta": 0.2,
    "decoder.temperature": 0.0,  # 0 means auto-calibrate from prototypes
    "decision.hold_frames": 4,
    "decision.onset_window_seconds": 5.0,
    "decision.offset_window_seconds": 6.0,
    "decision.refractory_seconds": 1.0,
    "decision.latency_cap_seconds": 3.0,
    "trajectory.nominal_seconds": 6.4,
    "trajectory.overtravel_seconds": 5.0,
    "recenter.mode": "task",
    "fixation.trim_frac": 0.20,
    "fixation.alpha_identity": 0.25,
    "fixation.lambda_eig": 0.05,
    "fixation.beta_run": 0.30,
    "fixation.min_windows": 8,
    "fixation.window_stride": 4,
    "frechet.step": 1.0,
    "frechet.tol": 1e-7,
    "frechet.max_iter": 50,
    "calib.cv_folds": 4,
    "calib.window_stride": 2,
    "synth.subject_seed": 0,
    "synth.n_runs": 2,
    "synth.trials_per_run": 10,
    "synth.online": True,
    "synth.n_channels": 8,
    "synth.noise_floor": 0.02,
    "synth.drift_strength": 0.0,
    "synth.movement_broadband": 2.5,
    "analysis.max_freq_hz": 48.0,
    "analysis.spectrogram_window_seconds": 0.5,
    "analysis.spectrogram_hop_seconds": 0.0625,
    "analysis.bootstrap_resamples": 2000,
}


def _coerce(key, raw):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(str(raw), 0)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    return str(raw)


def parse_config_text(text, source="<config>"):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, raw.strip())
    return out


def load_config(path=None, overrides=()):
    """Defaults, optionally updated from a file, then from override strings."""
    cfg = dict(DEFAULTS)
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        cfg.update(parse_config_text(path.read_text(encoding="utf-8"), str(path)))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, raw.strip())
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if cfg["recenter.mode"] not in KINDS:
        raise ConfigError(
            f"recenter.mode must be one of {KINDS}, got {cfg['recenter.mode']!r}"
        )
    # constructing the typed views runs their own range checks
    stream_config(cfg)
    fixation_config(cfg)
    session_config(cfg)
    frechet_config(cfg)


def config_hash(cfg):
    """Hash of the semantic content, independent of file formatting."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def stream_config(cfg):
    return StreamConfig(
        fs=cfg["stream.fs"],
        band_lo=cfg["stream.band_lo"],
        band_hi=cfg["stream.band_hi"],
        filter_order=cfg["stream.filter_order"],
        window_seconds=cfg["stream.window_seconds"],
        hop_seconds=cfg["stream.hop_seconds"],
        diag_loading=cfg["stream.diag_loading"],
    )


def fixation_config(cfg):
    return FixationConfig(
        trim_frac=cfg["fixation.trim_frac"],
        alpha_identity=cfg["fixation.alpha_identity"],
        lambda_eig=cfg["fixation.lambda_eig"],
        beta_run=cfg["fixation.beta_run"],
        min_windows=cfg["fixation.min_windows"],
        window_stride=cfg["fixation.window_stride"],
    )


def session_config(cfg):
    return SessionConfig(
        hop_seconds=cfg["stream.hop_seconds"],
        hold_frames=cfg["decision.hold_frames"],
        onset_window_seconds=cfg["decision.onset_window_seconds"],
        offset_window_seconds=cfg["decision.offset_window_seconds"],
        refractory_seconds=cfg["decision.refractory_seconds"],
        ema_beta=cfg["decoder.ema_beta"],
        trajectory_seconds=cfg["trajectory.nominal_seconds"],
        overtravel_seconds=cfg["trajectory.overtravel_seconds"],
    )


def frechet_config(cfg):
    return FrechetConfig(
        step=cfg["frechet.step"],
        tol=cfg["frechet.tol"],
        max_iter=cfg["frechet.max_iter"],
    )
