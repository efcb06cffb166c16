"""Recentering references: identity, task-based running mean, fixation-based.

A reference ``S`` whitens incoming covariances as ``S^{-1/2} C S^{-1/2}``
before distances to class prototypes are taken. ``identity`` bypasses
whitening entirely (and the decoder then compares against unwhitened
prototypes, keeping both sides in the original geometry). ``task`` maintains
a running Riemannian mean over the windows the decoder actually consumed.
``fixation`` is fit per run from pre-cue windows with trimming and shrinkage,
then blended across runs in the log domain.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, spd
from .errors import BadArgumentError, ReferenceUnavailableError, ShapeError

KINDS = ("identity", "task", "fixation")


@dataclass(frozen=True)
class FixationConfig:
    """Fixation-reference estimation parameters."""

    trim_frac: float = 0.20
    alpha_identity: float = 0.25
    lambda_eig: float = 0.05
    beta_run: float = 0.30
    min_windows: int = 8
    window_stride: int = 4

    def __post_init__(self):
        if not (0.0 <= self.trim_frac < 1.0):
            raise BadArgumentError(f"trim_frac must be in [0, 1), got {self.trim_frac}")
        for name in ("alpha_identity", "lambda_eig", "beta_run"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise BadArgumentError(f"{name} must be in [0, 1], got {v}")
        if self.min_windows < 1:
            raise BadArgumentError("min_windows must be >= 1")
        if self.window_stride < 1:
            raise BadArgumentError("window_stride must be >= 1")


@dataclass
class RecenterReference:
    """Current whitening reference.

    ``matrix`` is None for the identity kind and for a task reference that has
    not yet absorbed a sample (bootstrap state, which whitens as identity).
    ``count`` tracks task-mode updates; ``reused`` flags a fixation reference
    carried over from the previous run because too few windows were available.
    """

    kind: str
    matrix: np.ndarray | None = None
    count: int = 0
    reused: bool = False
    _invsqrt: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadArgumentError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "identity" and self.matrix is not None:
            raise BadArgumentError("identity reference must not carry a matrix")

    def invsqrt(self):
        """Cached ``S^{-1/2}``; None when whitening is a no-op."""
        if self.matrix is None:
            return None
        if self._invsqrt is None:
            self._invsqrt = spd.spd_invsqrt(self.matrix)
        return self._invsqrt


def update_task_reference(ref, cov):
    """Absorb one covariance into a task-based running Riemannian mean.

    The mean follows the geodesic schedule ``S <- geodesic(S, C, 1/(n+1))``,
    bootstrapping directly at the first sample. Returns a new reference.
    """
    if ref.kind != "task":
        raise BadArgumentError(f"cannot task-update a {ref.kind!r} reference")
    cov = spd.check_spd(cov, "task reference update")
    if ref.matrix is None:
        return RecenterReference("task", cov.copy(), count=1)
    new = spd.geodesic(ref.matrix, cov, 1.0 / (ref.count + 1.0))
    return RecenterReference("task", new, count=ref.count + 1)


def fit_fixation_reference(covs, cfg, previous=None):
    """Fit a per-run fixation reference from pre-cue window covariances.

    Steps: log-Euclidean mean; trim the ``ceil(trim_frac * n)`` windows
    farthest from it (affine-invariant distance); recompute the mean on the
    kept windows; shrink toward identity by ``alpha_identity`` in the log
    domain; shrink eigenvalues toward their mean by ``lambda_eig`` (trace
    preserved); finally blend with the previous run's reference in the log
    domain with weight ``beta_run`` on the current estimate.

    With fewer than ``min_windows`` windows the previous reference is reused
    unchanged (flagged ``reused``); if there is none,
    :class:`ReferenceUnavailableError` is raised.
    """
    arr = np.asarray(covs, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[-1] != arr.shape[-2]:
        raise ShapeError(f"expected a stack (n, c, c), got shape {arr.shape}")
    if previous is not None and previous.kind != "fixation":
        raise BadArgumentError("previous reference must be fixation-kind")
    n = arr.shape[0]
    if n < cfg.min_windows:
        if previous is not None and previous.matrix is not None:
            return RecenterReference("fixation", previous.matrix.copy(), reused=True)
        raise ReferenceUnavailableError(
            f"only {n} fixation windows (< {cfg.min_windows}) and no previous reference"
        )

    center = spd.log_euclidean_mean(arr)
    n_trim = int(np.ceil(cfg.trim_frac * n))
    if n_trim > 0:
        d = kernels.airm_distances(arr, spd.spd_invsqrt(center)[None])[:, 0]
        keep = np.argsort(d, kind="stable")[: n - n_trim]
        kept = arr[np.sort(keep)]
    else:
        kept = arr
    center = spd.log_euclidean_mean(kept)
    center = spd.identity_shrink(center, cfg.alpha_identity)
    center = spd.eigenvalue_shrink(center, cfg.lambda_eig)
    if previous is not None and previous.matrix is not None:
        blended = spd.sym_exp(
            (1.0 - cfg.beta_run) * spd.spd_log(previous.matrix)
            + cfg.beta_run * spd.spd_log(center)
        )
        return RecenterReference("fixation", blended)
    return RecenterReference("fixation", center)


def apply_recenter(ref, cov):
    """Whiten one covariance by the reference; identity passes through."""
    w = ref.invsqrt()
    if w is None:
        return np.asarray(cov, dtype=np.float64)
    return spd.congruence(np.asarray(cov, dtype=np.float64), w)


def apply_recenter_batch(ref, covs):
    """Whiten a stack (n, c, c) by one fixed reference."""
    arr = np.asarray(covs, dtype=np.float64)
    w = ref.invsqrt()
    if w is None:
        return arr
    return spd.symmetrize(w[None] @ arr @ w[None])
