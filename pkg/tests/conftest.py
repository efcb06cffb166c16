"""Shared fixtures: random SPD factories and one calibrated session bundle.

The calibration bundle (a two-run labeled session plus its fitted model) is
expensive, so it is built once per test session and shared; its build time is
recorded so acceptance tests can charge it against their runtime budgets.
"""

import time

import numpy as np
import pytest

from spdbci.config import load_config
from spdbci.pipeline import calibrate
from spdbci.synth import generate_session, make_default_spec

CALIB_SUBJECT = 0
CALIB_RUNS = 2
CALIB_TRIALS = 6
CALIB_SEED = 1000


def random_spd(rng, n, scale=1.0, spread=1.0):
    """Random SPD matrix with eigenvalues spread over ~e^{±spread}."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(spread * rng.standard_normal(n))
    return scale * (q * w) @ q.T


def random_invertible(rng, n, spread=0.5):
    """Random well-conditioned invertible matrix (not symmetric)."""
    m = rng.standard_normal((n, n))
    u, s, vt = np.linalg.svd(m)
    s = np.exp(spread * rng.standard_normal(n))
    return (u * s) @ vt


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_cfg():
    return load_config(None, [])


@pytest.fixture(scope="session")
def calib_bundle(default_cfg):
    """Dict with the labeled calibration session, its model, and build time."""
    t0 = time.perf_counter()
    spec = make_default_spec(subject_seed=CALIB_SUBJECT, n_runs=CALIB_RUNS,
                             trials_per_run=CALIB_TRIALS)
    runs, truth = generate_session(spec, seed=CALIB_SEED)
    model = calibrate(runs, truth, default_cfg)
    return {
        "spec": spec,
        "runs": runs,
        "truth": truth,
        "model": model,
        "build_seconds": time.perf_counter() - t0,
    }
