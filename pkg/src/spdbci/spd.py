"""Core geometry on the manifold of symmetric positive definite matrices.

All spectral operations go through a single eigendecomposition backend
(:func:`numpy.linalg.eigh`); matrix dimensions in this pipeline stay small
(<= 64), where dense eigendecomposition is both fastest and most predictable.
Functions accept stacked inputs ``(..., n, n)`` where noted.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadArgumentError, ConvergenceError, NumericDomainError, ShapeError

# Relative eigenvalue floor applied when constructing SPD matrices: eigenvalues
# below dim * SPD_FLOOR_RATIO * lambda_max are lifted to that floor.
SPD_FLOOR_RATIO = 1e-12

# Symmetry tolerance (relative to largest entry) accepted by validation.
SYMMETRY_RTOL = 1e-8


def symmetrize(mat):
    """Symmetric part ``(M + M^T) / 2`` of ``mat`` (stacked ok)."""
    return 0.5 * (mat + np.swapaxes(mat, -1, -2))


def check_sym(mat, name="matrix"):
    """Validate a square, finite, symmetric array; return it as float64.

    Raises
    ------
    ShapeError
        If not square in its last two axes.
    NumericDomainError
        If not finite or not symmetric within ``SYMMETRY_RTOL``.
    """
    arr = np.asarray(mat, dtype=np.float64)
    if arr.ndim < 2 or arr.shape[-1] != arr.shape[-2]:
        raise ShapeError(f"{name} must be square, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericDomainError(f"{name} contains non-finite entries")
    scale = np.max(np.abs(arr))
    asym = np.max(np.abs(arr - np.swapaxes(arr, -1, -2)))
    if asym > SYMMETRY_RTOL * max(scale, 1e-300):
        raise NumericDomainError(
            f"{name} is not symmetric (max asymmetry {asym:.3e} at scale {scale:.3e})"
        )
    return arr


def check_spd(mat, name="matrix"):
    """Validate symmetry and strict positive definiteness; return float64 array."""
    arr = check_sym(mat, name)
    w = np.linalg.eigvalsh(symmetrize(arr))
    if np.min(w) <= 0.0:
        raise NumericDomainError(
            f"{name} is not positive definite (min eigenvalue {np.min(w):.3e})"
        )
    return arr


def floor_spd(mat, floor_ratio=SPD_FLOOR_RATIO):
    """Lift tiny eigenvalues of a symmetric matrix onto a relative floor.

    The floor is ``dim * floor_ratio * lambda_max``. Returns ``(matrix, flag)``
    where ``flag`` is True when any eigenvalue was lifted.

    Parameters
    ----------
    mat : ndarray, shape (..., n, n)
        Symmetric input (validated).
    floor_ratio : float
        Relative floor; default :data:`SPD_FLOOR_RATIO`.
    """
    arr = check_sym(mat)
    w, v = np.linalg.eigh(symmetrize(arr))
    dim = arr.shape[-1]
    lam_max = np.max(w, axis=-1, keepdims=True)
    if np.any(lam_max <= 0.0):
        raise NumericDomainError("matrix has no positive eigenvalue to floor against")
    floor = dim * floor_ratio * lam_max
    flag = bool(np.any(w < floor))
    w = np.maximum(w, floor)
    out = (v * w[..., None, :]) @ np.swapaxes(v, -1, -2)
    return symmetrize(out), flag


def _eig_map(mat, fn, name, require_pd=True):
    """Apply ``fn`` to the eigenvalues of a symmetric matrix (stacked ok)."""
    arr = check_sym(mat, name)
    w, v = np.linalg.eigh(symmetrize(arr))
    if require_pd and np.min(w) <= 0.0:
        raise NumericDomainError(
            f"{name} requires a positive definite input (min eigenvalue {np.min(w):.3e})"
        )
    out = (v * fn(w)[..., None, :]) @ np.swapaxes(v, -1, -2)
    return symmetrize(out)


def spd_log(mat):
    """Matrix logarithm of an SPD matrix (stacked ok)."""
    return _eig_map(mat, np.log, "spd_log input")


def sym_exp(mat):
    """Matrix exponential of a symmetric matrix (stacked ok); result is SPD."""
    return _eig_map(mat, np.exp, "sym_exp input", require_pd=False)


def spd_sqrt(mat):
    """Principal square root of an SPD matrix."""
    return _eig_map(mat, np.sqrt, "spd_sqrt input")


def spd_invsqrt(mat):
    """Inverse principal square root of an SPD matrix."""
    return _eig_map(mat, lambda w: 1.0 / np.sqrt(w), "spd_invsqrt input")


def spd_sqrt_invsqrt(mat):
    """Square root and inverse square root from a single decomposition."""
    arr = check_sym(mat, "spd_sqrt_invsqrt input")
    w, v = np.linalg.eigh(symmetrize(arr))
    if np.min(w) <= 0.0:
        raise NumericDomainError(
            f"input is not positive definite (min eigenvalue {np.min(w):.3e})"
        )
    sq = np.sqrt(w)
    vt = np.swapaxes(v, -1, -2)
    s = (v * sq[..., None, :]) @ vt
    si = (v * (1.0 / sq)[..., None, :]) @ vt
    return symmetrize(s), symmetrize(si)


def spd_power(mat, t):
    """Fractional power ``mat**t`` of an SPD matrix."""
    return _eig_map(mat, lambda w: np.power(w, t), "spd_power input")


def congruence(mat, w):
    """Congruence transform ``W M W^T`` (symmetrized)."""
    return symmetrize(w @ mat @ np.swapaxes(w, -1, -2))


def airm_distance(a, b):
    """Affine-invariant Riemannian distance between two SPD matrices.

    Parameters
    ----------
    a, b : ndarray, shape (n, n)
        SPD matrices.

    Returns
    -------
    float
        ``|| log(a^{-1/2} b a^{-1/2}) ||_F``.
    """
    ia = spd_invsqrt(a)
    m = symmetrize(ia @ check_sym(b, "airm_distance input") @ ia)
    w = np.linalg.eigvalsh(m)
    if np.min(w) <= 0.0:
        raise NumericDomainError("airm_distance inputs must both be positive definite")
    lw = np.log(w)
    return float(np.sqrt(np.sum(lw * lw)))


def geodesic(a, b, t):
    """Point at parameter ``t`` on the affine-invariant geodesic from ``a`` to ``b``.

    ``t = 0`` gives ``a``, ``t = 1`` gives ``b``:
    ``a^{1/2} (a^{-1/2} b a^{-1/2})^t a^{1/2}``.
    """
    if not np.isfinite(t):
        raise BadArgumentError("geodesic parameter must be finite")
    sa, isa = spd_sqrt_invsqrt(a)
    inner = spd_power(symmetrize(isa @ check_spd(b, "geodesic endpoint") @ isa), t)
    return symmetrize(sa @ inner @ sa)


def log_euclidean_mean(mats, weights=None):
    """Log-Euclidean mean ``exp(sum_i w_i log S_i)`` of a stack of SPD matrices."""
    arr = np.asarray(mats, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"expected a stack (k, n, n), got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise BadArgumentError("mean of an empty stack is undefined")
    w = _norm_weights(weights, arr.shape[0])
    logs = spd_log(arr)
    return sym_exp(np.tensordot(w, logs, axes=(0, 0)))


def _norm_weights(weights, k):
    if weights is None:
        return np.full(k, 1.0 / k)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (k,):
        raise ShapeError(f"weights must have shape ({k},), got {w.shape}")
    if np.any(w < 0.0) or not np.all(np.isfinite(w)):
        raise BadArgumentError("weights must be finite and non-negative")
    tot = w.sum()
    if tot <= 0.0:
        raise BadArgumentError("weights must not sum to zero")
    return w / tot


@dataclass(frozen=True)
class FrechetConfig:
    """Settings for the Frechet (Karcher) mean fixed-point iteration.

    Attributes
    ----------
    step : float
        Step size on the tangent update, in (0, 1].
    tol : float
        Convergence threshold on the Frobenius norm of the tangent-space
        gradient, measured in whitened coordinates.
    max_iter : int
        Iteration budget before :class:`ConvergenceError` is raised.
    """

    step: float = 1.0
    tol: float = 1e-7
    max_iter: int = 50

    def __post_init__(self):
        if not (0.0 < self.step <= 1.0):
            raise BadArgumentError(f"step must be in (0, 1], got {self.step}")
        if self.tol <= 0.0:
            raise BadArgumentError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise BadArgumentError(f"max_iter must be >= 1, got {self.max_iter}")


def frechet_mean(mats, weights=None, config=None):
    """Frechet mean of SPD matrices under the affine-invariant metric.

    Fixed-point flow initialized at the log-Euclidean mean: at each step the
    samples are whitened by the current iterate, the mean of their logs is the
    tangent gradient, and the iterate moves along it. Convergence is declared
    when the gradient's Frobenius norm drops below ``config.tol``.

    Parameters
    ----------
    mats : ndarray, shape (k, n, n)
        Stack of SPD matrices, k >= 1.
    weights : ndarray, shape (k,), optional
        Non-negative sample weights (normalized internally).
    config : FrechetConfig, optional

    Returns
    -------
    ndarray, shape (n, n)

    Raises
    ------
    ConvergenceError
        If the flow does not reach tolerance within ``config.max_iter``
        iterations; the error carries the last iterate and residual.
    """
    cfg = config if config is not None else FrechetConfig()
    arr = np.asarray(mats, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"expected a stack (k, n, n), got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise BadArgumentError("mean of an empty stack is undefined")
    check_spd(arr, "frechet_mean input")
    w = _norm_weights(weights, arr.shape[0])
    if arr.shape[0] == 1:
        return arr[0].copy()

    mean = log_euclidean_mean(arr, w)
    residual = np.inf
    for _ in range(cfg.max_iter):
        s, si = spd_sqrt_invsqrt(mean)
        logs = spd_log(symmetrize(si @ arr @ si))
        grad = np.tensordot(w, logs, axes=(0, 0))
        residual = float(np.linalg.norm(grad))
        if residual < cfg.tol:
            return mean
        mean = symmetrize(s @ sym_exp(cfg.step * grad) @ s)
    raise ConvergenceError(
        f"Frechet mean did not converge in {cfg.max_iter} iterations "
        f"(residual {residual:.3e}, tol {cfg.tol:.1e})",
        last_iterate=mean,
        residual=residual,
    )


def identity_shrink(mat, alpha):
    """Shrink an SPD matrix toward the identity in the log domain.

    Returns ``exp((1 - alpha) * log(mat))``; ``alpha = 0`` is a no-op and
    ``alpha = 1`` returns the identity.
    """
    if not (0.0 <= alpha <= 1.0):
        raise BadArgumentError(f"alpha must be in [0, 1], got {alpha}")
    return sym_exp((1.0 - alpha) * spd_log(mat))


def eigenvalue_shrink(mat, lam):
    """Blend eigenvalues toward their mean, preserving trace and eigenvectors.

    Eigenvalues ``l_i`` become ``(1 - lam) * l_i + lam * mean(l)``; the trace
    is unchanged and conditioning improves monotonically with ``lam``.
    """
    if not (0.0 <= lam <= 1.0):
        raise BadArgumentError(f"lam must be in [0, 1], got {lam}")
    arr = check_spd(mat, "eigenvalue_shrink input")
    w, v = np.linalg.eigh(symmetrize(arr))
    w = (1.0 - lam) * w + lam * np.mean(w)
    return symmetrize((v * w[None, :]) @ v.T)
