"""Tests for signal conditioning: band-pass response, common average
reference algebra, window/hop arithmetic, and covariance construction."""

import numpy as np
import pytest
import scipy.signal

from spdbci import (
    BadArgumentError,
    DegenerateWindowError,
    OnlineBandpass,
    ShapeError,
    StreamConfig,
    preprocess_stream,
)
from spdbci.preprocess import (
    common_average_reference,
    design_bandpass,
    window_covariances,
)
from spdbci.spd import check_spd


@pytest.fixture(scope="module")
def cfg():
    return StreamConfig()


class TestStreamConfig:
    def test_sample_arithmetic(self, cfg):
        assert cfg.window_samples == 512
        assert cfg.hop_samples == 32

    def test_window_end_frames(self, cfg):
        # Window k covers [32k, 32k + 512), so its end frame is 512 + 32k.
        ends = cfg.window_end_frames(512 + 32 * 4)
        assert np.array_equal(ends, [512, 544, 576, 608, 640])

    def test_n_windows(self, cfg):
        assert cfg.n_windows(511) == 0
        assert cfg.n_windows(512) == 1
        assert cfg.n_windows(512 + 31) == 1
        assert cfg.n_windows(512 + 32) == 2

    @pytest.mark.parametrize("kwargs", [
        {"fs": 0.0},
        {"fs": -1.0},
        {"band_lo": 0.0},
        {"band_lo": 30.0, "band_hi": 8.0},
        {"band_hi": 512.0},
        {"filter_order": 0},
        {"window_seconds": 0.3},       # 153.6 samples: not an integer count
        {"hop_seconds": 2.0},          # hop exceeds window
        {"diag_loading": 0.0},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(BadArgumentError):
            StreamConfig(**kwargs)


class TestBandpass:
    def gain_at(self, cfg, freq):
        sos = design_bandpass(cfg)
        w, h = scipy.signal.sosfreqz(sos, worN=[freq], fs=cfg.fs)
        return float(np.abs(h[0]))

    def test_passband_gain(self, cfg):
        assert self.gain_at(cfg, 15.0) >= 0.707

    def test_stopband_gain(self, cfg):
        assert self.gain_at(cfg, 2.0) <= 0.1
        assert self.gain_at(cfg, 100.0) <= 0.1

    def test_dc_rejected(self, cfg):
        filt = OnlineBandpass(cfg, 1)
        y = filt.process(np.ones((4096, 1)))
        assert np.max(np.abs(y[-512:])) < 1e-3

    def test_tone_amplitudes(self, cfg):
        # Steady-state amplitude of a pure tone matches the frequency response.
        fs = cfg.fs
        t = np.arange(int(8 * fs)) / fs
        filt = OnlineBandpass(cfg, 1)
        for freq in (15.0, 2.0):
            filt.reset()
            x = np.sin(2 * np.pi * freq * t)[:, None]
            y = filt.process(x)
            tail = y[int(4 * fs):, 0]
            measured = np.sqrt(2.0) * np.std(tail)
            assert abs(measured - self.gain_at(cfg, freq)) < 0.02

    def test_chunked_equals_single_shot(self, cfg, rng):
        x = rng.standard_normal((3000, 3))
        filt = OnlineBandpass(cfg, 3)
        y_full = filt.process(x)
        filt.reset()
        y_parts = np.vstack([filt.process(x[:1000]), filt.process(x[1000:])])
        assert np.array_equal(y_full, y_parts)

    def test_reset_restores_initial_state(self, cfg, rng):
        x = rng.standard_normal((500, 2))
        filt = OnlineBandpass(cfg, 2)
        y1 = filt.process(x)
        filt.reset()
        y2 = filt.process(x)
        assert np.array_equal(y1, y2)

    def test_rejects_wrong_channel_count(self, cfg, rng):
        filt = OnlineBandpass(cfg, 2)
        with pytest.raises(ShapeError):
            filt.process(rng.standard_normal((100, 3)))


class TestCommonAverageReference:
    def test_constant_vector_removed(self):
        x = np.ones((10, 3))
        assert np.allclose(common_average_reference(x), 0.0)

    def test_two_channel_example(self):
        out = common_average_reference(np.array([[2.0, 0.0]]))
        assert np.allclose(out, [[1.0, -1.0]])

    def test_row_sums_zero(self, rng):
        out = common_average_reference(rng.standard_normal((200, 60)))
        assert np.max(np.abs(out.sum(axis=1))) < 1e-12

    def test_idempotent(self, rng):
        x = rng.standard_normal((100, 8))
        once = common_average_reference(x)
        twice = common_average_reference(once)
        assert np.allclose(once, twice, atol=1e-12)

    def test_rejects_single_channel(self):
        with pytest.raises(ShapeError):
            common_average_reference(np.ones((10, 1)))


class TestWindowCovariances:
    def test_unit_trace(self, cfg, rng):
        x = rng.standard_normal((512 + 32 * 20, 8))
        covs = window_covariances(x, cfg)
        traces = np.trace(covs, axis1=1, axis2=2)
        assert np.max(np.abs(traces - 1.0)) < 1e-12

    def test_outputs_are_spd(self, cfg, rng):
        x = rng.standard_normal((512 * 2, 8))
        covs = window_covariances(x, cfg)
        for c in covs:
            check_spd(c)

    def test_uncorrelated_channels(self, rng):
        # Two independent unit-variance channels over a long window: close to
        # diag(0.5, 0.5) with small off-diagonal.
        cfg_long = StreamConfig(window_seconds=16.0, hop_seconds=16.0)
        x = rng.standard_normal((cfg_long.window_samples, 2))
        covs = window_covariances(x, cfg_long)
        assert covs.shape[0] == 1
        assert abs(covs[0, 0, 0] - 0.5) < 0.05
        assert abs(covs[0, 1, 1] - 0.5) < 0.05
        assert abs(covs[0, 0, 1]) < 0.05

    def test_duplicated_channel_still_spd(self, cfg, rng):
        # A rank-deficient window (channel duplicated) stays SPD thanks to
        # diagonal loading.
        base = rng.standard_normal((512, 1))
        x = np.hstack([base, base, rng.standard_normal((512, 1))])
        covs = window_covariances(x, cfg)
        assert np.linalg.eigvalsh(covs[0]).min() > 0

    def test_degenerate_window_raises(self, cfg):
        with pytest.raises(DegenerateWindowError, match="window 0"):
            window_covariances(np.zeros((512, 4)), cfg)

    def test_short_stream_gives_empty(self, cfg, rng):
        covs = window_covariances(rng.standard_normal((100, 4)), cfg)
        assert covs.shape == (0, 4, 4)

    def test_rejects_bad_shape(self, cfg):
        with pytest.raises(ShapeError):
            window_covariances(np.zeros(512), cfg)


class TestPreprocessStream:
    def test_shapes_and_frames(self, cfg, rng):
        x = rng.standard_normal((512 + 32 * 10, 8))
        covs, ends = preprocess_stream(x, cfg)
        assert covs.shape == (11, 8, 8)
        assert np.array_equal(ends, cfg.window_end_frames(x.shape[0]))

    def test_deterministic(self, cfg, rng):
        x = rng.standard_normal((2048, 4))
        covs1, _ = preprocess_stream(x, cfg)
        covs2, _ = preprocess_stream(x, cfg)
        assert np.array_equal(covs1, covs2)

    def test_all_windows_unit_trace_spd(self, cfg, rng):
        x = rng.standard_normal((4096, 6))
        covs, _ = preprocess_stream(x, cfg)
        traces = np.trace(covs, axis1=1, axis2=2)
        assert np.max(np.abs(traces - 1.0)) < 1e-12
        assert np.linalg.eigvalsh(covs).min() > 0

    def test_rejects_bad_shape(self, cfg):
        with pytest.raises(ShapeError):
            preprocess_stream(np.zeros((10, 2, 2)), cfg)
