"""Hot numeric kernels: numba fast path with a numpy/scipy fallback.

Three inner loops dominate pipeline runtime: streaming second-order-section
filtering, sliding-window Gram accumulation, and batched affine-invariant
distances against a fixed set of references. Each has two implementations
with identical semantics:

- ``*_numba``: ``@njit`` kernels (compiled lazily, cached on disk),
- ``*_numpy``: vectorized numpy/scipy.

The public names (``sosfilt_stream``, ``window_grams``, ``airm_distances``)
dispatch according to availability and the ``SPDBCI_NO_NUMBA`` environment
variable (set to ``1`` to force the fallback). Both paths stay importable so
tests and ``benchmarks/bench_kernels.py`` can compare them directly.
"""

import os

import numpy as np
import scipy.signal
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "NUMBA_ENABLED",
    "backend_name",
    "sosfilt_stream",
    "window_grams",
    "airm_distances",
]

_FORCE_FALLBACK = os.environ.get("SPDBCI_NO_NUMBA", "").lower() in ("1", "true", "yes")

try:  # pragma: no cover - exercised indirectly through dispatch
    if _FORCE_FALLBACK:
        raise ImportError("fallback forced by SPDBCI_NO_NUMBA")
    from numba import njit, prange

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):  # noqa: D103 - stand-in so decorators still apply
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap

    prange = range


def backend_name():
    """Name of the active backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# streaming second-order-section filter (direct form II transposed)
# ---------------------------------------------------------------------------

def sosfilt_numpy(sos, x, zi):
    """Filter ``x`` (n_samples, n_channels) through cascaded biquads.

    Parameters
    ----------
    sos : ndarray, shape (n_sections, 6)
        Second-order sections, ``a0 == 1``.
    x : ndarray, shape (n_samples, n_channels)
    zi : ndarray, shape (n_sections, 2, n_channels)
        Delay-line state, carried across calls for gapless streaming.

    Returns
    -------
    y, zf : filtered signal and final state, same shapes as ``x`` / ``zi``.
    """
    y, zf = scipy.signal.sosfilt(sos, x, axis=0, zi=zi)
    return y, zf


@njit(cache=True)
def _sosfilt_kernel(sos, x, zi):
    n, c = x.shape
    ns = sos.shape[0]
    y = np.empty_like(x)
    z = zi.copy()
    for ch in range(c):
        for t in range(n):
            v = x[t, ch]
            for s in range(ns):
                w = sos[s, 0] * v + z[s, 0, ch]
                z[s, 0, ch] = sos[s, 1] * v - sos[s, 4] * w + z[s, 1, ch]
                z[s, 1, ch] = sos[s, 2] * v - sos[s, 5] * w
                v = w
            y[t, ch] = v
    return y, z


def sosfilt_numba(sos, x, zi):
    y, zf = _sosfilt_kernel(
        np.ascontiguousarray(sos, dtype=np.float64),
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(zi, dtype=np.float64),
    )
    return y, zf


# ---------------------------------------------------------------------------
# sliding-window Gram matrices
# ---------------------------------------------------------------------------

def window_grams_numpy(x, win, hop, block=512):
    """Gram matrix ``X_k^T X_k`` for each complete window of ``x``.

    Window ``k`` covers samples ``[k*hop, k*hop + win)``; only complete
    windows are produced. Returns shape (n_windows, n_channels, n_channels).
    """
    n = 1 + (x.shape[0] - win) // hop
    c = x.shape[1]
    v = sliding_window_view(x, win, axis=0)[:: hop]  # (n, c, win) strided
    out = np.empty((n, c, c), dtype=np.float64)
    for s in range(0, n, block):
        chunk = np.ascontiguousarray(v[s : s + block])
        out[s : s + block] = chunk @ chunk.transpose(0, 2, 1)
    return out


@njit(cache=True, parallel=True)
def _window_grams_kernel(x, win, hop):
    n = 1 + (x.shape[0] - win) // hop
    c = x.shape[1]
    out = np.empty((n, c, c))
    for k in prange(n):
        s = k * hop
        for i in range(c):
            for j in range(i, c):
                acc = 0.0
                for t in range(s, s + win):
                    acc += x[t, i] * x[t, j]
                out[k, i, j] = acc
                out[k, j, i] = acc
    return out


def window_grams_numba(x, win, hop):
    return _window_grams_kernel(
        np.ascontiguousarray(x, dtype=np.float64), int(win), int(hop)
    )


# ---------------------------------------------------------------------------
# batched affine-invariant distances to fixed references
# ---------------------------------------------------------------------------

_EIG_CLAMP = 1e-30


def airm_distances_numpy(covs, ref_invsqrts, block=256):
    """Affine-invariant distance from each covariance to each reference.

    Parameters
    ----------
    covs : ndarray, shape (n, c, c)
    ref_invsqrts : ndarray, shape (k, c, c)
        Symmetric inverse square roots ``R_j^{-1/2}`` of the references.

    Returns
    -------
    ndarray, shape (n, k)
        ``d[i, j] = || log(R_j^{-1/2} S_i R_j^{-1/2}) ||_F``.
    """
    n = covs.shape[0]
    k = ref_invsqrts.shape[0]
    out = np.empty((n, k), dtype=np.float64)
    r = ref_invsqrts[None, :, :, :]
    for s in range(0, n, block):
        c = covs[s : s + block, None, :, :]
        m = r @ c @ r
        m = 0.5 * (m + np.swapaxes(m, -1, -2))
        w = np.linalg.eigvalsh(m)
        lw = np.log(np.maximum(w, _EIG_CLAMP))
        out[s : s + block] = np.sqrt(np.sum(lw * lw, axis=-1))
    return out


@njit(cache=True, parallel=True)
def _airm_distances_kernel(covs, refs):
    n = covs.shape[0]
    k = refs.shape[0]
    out = np.empty((n, k))
    for i in prange(n):
        for j in range(k):
            m = refs[j] @ covs[i] @ refs[j]
            m = 0.5 * (m + m.T)
            w = np.linalg.eigh(m)[0]
            acc = 0.0
            for q in range(w.shape[0]):
                lam = w[q]
                if lam < _EIG_CLAMP:
                    lam = _EIG_CLAMP
                lv = np.log(lam)
                acc += lv * lv
            out[i, j] = np.sqrt(acc)
    return out


def airm_distances_numba(covs, ref_invsqrts):
    return _airm_distances_kernel(
        np.ascontiguousarray(covs, dtype=np.float64),
        np.ascontiguousarray(ref_invsqrts, dtype=np.float64),
    )


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if NUMBA_ENABLED:
    sosfilt_stream = sosfilt_numba
    window_grams = window_grams_numba
    airm_distances = airm_distances_numba
else:
    sosfilt_stream = sosfilt_numpy
    window_grams = window_grams_numpy
    airm_distances = airm_distances_numpy
