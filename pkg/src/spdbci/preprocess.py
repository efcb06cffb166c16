"""Signal conditioning: band-pass, common average reference, window covariances.

The chain is causal and matches the online system: each channel runs through a
4th-order Butterworth band-pass (cascaded biquads), then the common average
reference is subtracted, then trace-normalized covariance matrices are taken
over sliding windows with diagonal loading.
"""

from dataclasses import dataclass

import numpy as np
import scipy.signal

from . import kernels
from .errors import BadArgumentError, DegenerateWindowError, ShapeError

# A window whose raw Gram trace falls below this floor carries no usable energy.
DEGENERATE_TRACE_FLOOR = 1e-20


@dataclass(frozen=True)
class StreamConfig:
    """Sampling and windowing parameters shared across the pipeline.

    Window ``k`` covers samples ``[k*hop, k*hop + length)``; only complete
    windows exist. Frame times are window-end times in seconds.
    """

    fs: float = 512.0
    band_lo: float = 8.0
    band_hi: float = 30.0
    filter_order: int = 4
    window_seconds: float = 1.0
    hop_seconds: float = 0.0625
    diag_loading: float = 1e-5

    def __post_init__(self):
        if self.fs <= 0:
            raise BadArgumentError(f"fs must be positive, got {self.fs}")
        if not (0.0 < self.band_lo < self.band_hi < 0.5 * self.fs):
            raise BadArgumentError(
                f"band ({self.band_lo}, {self.band_hi}) must satisfy "
                f"0 < lo < hi < fs/2 = {0.5 * self.fs}"
            )
        if self.filter_order < 1:
            raise BadArgumentError("filter_order must be >= 1")
        for name in ("window_seconds", "hop_seconds"):
            v = getattr(self, name)
            if v <= 0:
                raise BadArgumentError(f"{name} must be positive, got {v}")
            n = v * self.fs
            if abs(n - round(n)) > 1e-9:
                raise BadArgumentError(
                    f"{name} = {v} is not an integer number of samples at fs {self.fs}"
                )
        if self.hop_samples > self.window_samples:
            raise BadArgumentError("hop must not exceed the window length")
        if self.diag_loading <= 0:
            raise BadArgumentError("diag_loading must be positive")

    @property
    def window_samples(self):
        return int(round(self.window_seconds * self.fs))

    @property
    def hop_samples(self):
        return int(round(self.hop_seconds * self.fs))

    def n_windows(self, n_samples):
        """Number of complete windows in a stream of ``n_samples``."""
        if n_samples < self.window_samples:
            return 0
        return 1 + (n_samples - self.window_samples) // self.hop_samples

    def window_end_frames(self, n_samples):
        """End-sample index (exclusive) of each complete window."""
        n = self.n_windows(n_samples)
        return self.window_samples + self.hop_samples * np.arange(n, dtype=np.int64)


def design_bandpass(cfg):
    """Second-order sections of the causal Butterworth band-pass for ``cfg``."""
    return scipy.signal.butter(
        cfg.filter_order,
        [cfg.band_lo, cfg.band_hi],
        btype="bandpass",
        fs=cfg.fs,
        output="sos",
    )


class OnlineBandpass:
    """Streaming band-pass filter holding delay-line state across chunks.

    Feeding a signal chunk-by-chunk produces bit-identical output to a single
    call, which is what makes pseudo-online replays reproducible.
    """

    def __init__(self, cfg, n_channels):
        if n_channels < 1:
            raise BadArgumentError("need at least one channel")
        self.sos = design_bandpass(cfg)
        self.n_channels = int(n_channels)
        self.reset()

    def reset(self):
        """Zero the delay lines (stream restart)."""
        self.zi = np.zeros((self.sos.shape[0], 2, self.n_channels))

    def process(self, chunk):
        """Filter one chunk of shape (n_samples, n_channels)."""
        x = np.asarray(chunk, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_channels:
            raise ShapeError(
                f"expected (n, {self.n_channels}) chunk, got shape {x.shape}"
            )
        y, self.zi = kernels.sosfilt_stream(self.sos, x, self.zi)
        return y


def common_average_reference(x):
    """Subtract the instantaneous mean across channels from every sample."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ShapeError(f"need (n_samples, n_channels >= 2), got shape {x.shape}")
    return x - x.mean(axis=1, keepdims=True)


def window_covariances(x, cfg):
    """Trace-normalized, diagonally loaded covariance per complete window.

    For each window ``X`` (window_samples, n_channels): ``C = X^T X / tr``,
    then ``C + eps * I`` renormalized back to unit trace. A window with raw
    trace below :data:`DEGENERATE_TRACE_FLOOR` raises
    :class:`DegenerateWindowError` naming the window.

    Returns
    -------
    covs : ndarray, shape (n_windows, n_channels, n_channels)
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected (n_samples, n_channels), got shape {x.shape}")
    if x.shape[0] < cfg.window_samples:
        return np.empty((0, x.shape[1], x.shape[1]))
    grams = kernels.window_grams(x, cfg.window_samples, cfg.hop_samples)
    traces = np.trace(grams, axis1=-2, axis2=-1)
    bad = np.flatnonzero(traces < DEGENERATE_TRACE_FLOOR)
    if bad.size:
        raise DegenerateWindowError(
            f"window {bad[0]} has trace {traces[bad[0]]:.3e} "
            f"(< {DEGENERATE_TRACE_FLOOR:.0e}); signal is degenerate"
        )
    c = x.shape[1]
    covs = grams / traces[:, None, None]
    covs += cfg.diag_loading * np.eye(c)
    covs /= 1.0 + c * cfg.diag_loading
    return covs


def preprocess_stream(x, cfg):
    """Full conditioning chain on a raw stream: filter, CAR, window covariances.

    Parameters
    ----------
    x : ndarray, shape (n_samples, n_channels)
        Raw signal.
    cfg : StreamConfig

    Returns
    -------
    covs : ndarray, shape (n_windows, c, c)
    end_frames : ndarray, shape (n_windows,)
        Window end-sample indices; divide by ``cfg.fs`` for frame times.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected (n_samples, n_channels), got shape {x.shape}")
    filt = OnlineBandpass(cfg, x.shape[1])
    y = common_average_reference(filt.process(x))
    covs = window_covariances(y, cfg)
    return covs, cfg.window_end_frames(x.shape[0])
