"""Triplet conditional-independence statistic and threshold search.

Under triplet conditional independence the ratio ``T_{j1 j2 j3} / Sigma_{j1 j2}``
does not depend on the pair ``(j1, j2)``, so the spread of those ratios for
each ``j3`` measures how far a set of (binarized) verifiers is from the
assumption.  :func:`optimize_thresholds` picks per-verifier binarization
thresholds that make the spread as small as possible.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_scores
from .exceptions import DegenerateError, InsufficientVerifiersError
from .moments import MomentSet, empirical_moments

CLIP_DELTA = 1e-3
QUANTILES = np.arange(1, 20) / 20.0
INDEX_SETS = ("below", "exclude")


@dataclass(frozen=True, eq=False)
class TciReport:
    statistic: float
    per_j3_variance: np.ndarray
    clip_count: int


@dataclass(eq=False)
class TransformSpec:
    tau: np.ndarray
    active: np.ndarray
    family: str = "binary"
    fallback: bool = False
    trace: list = field(default_factory=list)
    moves: list = field(default_factory=list)

    @property
    def n_active(self):
        return int(self.active.sum())


def _groups(m, index_set):
    """(j3, j1 array, j2 array) for every ratio collection."""
    if index_set not in INDEX_SETS:
        raise ValueError(f"index_set must be one of {INDEX_SETS}, got {index_set!r}")
    out = []
    if index_set == "below":
        for j3 in range(2, m):
            pairs = np.array(list(combinations(range(j3), 2)), dtype=int)
            out.append((j3, pairs[:, 0], pairs[:, 1]))
    else:
        for j3 in range(m):
            rest = [j for j in range(m) if j != j3]
            pairs = np.array(list(combinations(rest, 2)), dtype=int)
            out.append((j3, pairs[:, 0], pairs[:, 1]))
    return out


def _statistic(sigma, tensor3, clip_delta, index_set="below"):
    """Vectorized statistic; leading axes of ``sigma``/``tensor3`` are batch axes."""
    m = sigma.shape[-1]
    per_j3, clips = [], 0
    for j3, j1, j2 in _groups(m, index_set):
        den = sigma[..., j1, j2]
        small = np.abs(den) < clip_delta
        clips = clips + small.sum(axis=-1)
        den = np.where(small, np.where(den >= 0, clip_delta, -clip_delta), den)
        ratio = tensor3[..., j1, j2, j3] / den
        per_j3.append(ratio.var(axis=-1))
    if not per_j3:
        shape = sigma.shape[:-2]
        return np.zeros(shape), np.zeros(shape + (0,)), np.zeros(shape, dtype=int)
    per_j3 = np.stack(per_j3, axis=-1)
    return per_j3.sum(axis=-1), per_j3, clips


def tci_statistic(moments, clip_delta=CLIP_DELTA, index_set="below"):
    """Sum over ``j3`` of the population variance of ``T_{j1 j2 j3} / Sigma_{j1 j2}``.

    Denominators smaller than ``clip_delta`` in magnitude are replaced by
    ``+/- clip_delta`` (sign kept, zero counts as positive).  With the default
    ``index_set="below"`` the pairs for each ``j3`` are those with
    ``j1 < j2 < j3``; ``"exclude"`` uses every pair not containing ``j3``.
    """
    if moments.n_verifiers < 3:
        raise InsufficientVerifiersError(
            f"the TCI statistic needs at least 3 verifiers, got {moments.n_verifiers}")
    stat, per_j3, clips = _statistic(moments.sigma, moments.tensor3, clip_delta, index_set)
    return TciReport(float(stat), per_j3, int(clips))


def _snap(distinct, q):
    """Midpoint between the distinct values that bracket ``q``."""
    k = np.searchsorted(distinct, q, side="left")
    k = np.clip(k, 1, distinct.shape[0] - 1)
    lo, hi = distinct[k - 1], distinct[k]
    mid = lo + 0.5 * (hi - lo)
    # adjacent floats: the midpoint rounds onto lo, so split at hi instead
    return np.where(mid > lo, mid, hi)


def threshold_candidates(column, quantiles=QUANTILES):
    """Quantile grid for one verifier, snapped between adjacent distinct values.

    Every candidate splits the column into two non-empty groups.  A constant
    column has no candidates.
    """
    col = np.asarray(column, dtype=np.float64).ravel()
    distinct = np.unique(col)
    if distinct.shape[0] < 2:
        return np.empty(0)
    return np.unique(_snap(distinct, np.quantile(col, quantiles)))


def median_threshold(column):
    col = np.asarray(column, dtype=np.float64).ravel()
    distinct = np.unique(col)
    if distinct.shape[0] < 2:
        return np.nan
    return float(_snap(distinct, np.quantile(col, 0.5)))


def apply_transform(scores, spec):
    """``+1`` where a score is at or above its threshold, ``-1`` below.

    Inactive columns come out as all ``+1``.
    """
    X = np.asarray(scores, dtype=np.float64)
    active = np.asarray(spec.active, dtype=bool)
    if X.ndim != 2 or X.shape[1] != active.shape[0]:
        raise ValueError(f"scores have {X.shape[-1]} columns, transform expects {active.shape[0]}")
    tau = np.where(active, spec.tau, 0.0)
    out = np.where(X >= tau, 1.0, -1.0)
    out[:, ~active] = 1.0
    return out


def _binarize(X, tau):
    return np.where(X >= tau, 1.0, -1.0)


def optimize_thresholds(scores, clip_delta=CLIP_DELTA, max_sweeps=10, index_set="below"):
    """Coordinate descent on the TCI statistic over per-verifier thresholds.

    Starts at (snapped) column medians and sweeps verifiers in column order.
    For each verifier every candidate threshold is scored with the others
    held fixed and the minimizer is kept; ties go to the candidate closest
    to the median.  Stops after a sweep without changes or ``max_sweeps``.

    Fewer than four usable verifiers leave the statistic without signal, so
    the median thresholds are returned with ``spec.fallback`` set.

    Returns
    -------
    spec : TransformSpec
        ``spec.trace`` holds the statistic after each sweep (entry 0 is the
        starting value) and ``spec.moves`` the value after each accepted move.
    report : TciReport
        Statistic at the returned thresholds, over the active columns.
    """
    X = check_scores(scores, min_samples=2, min_verifiers=1)
    n, m = X.shape
    cands = [threshold_candidates(X[:, j]) for j in range(m)]
    active = np.array([c.shape[0] > 0 for c in cands])
    if not active.any():
        raise DegenerateError(
            f"all verifiers are constant; deactivated columns: {list(range(m))}")
    tau = np.array([median_threshold(X[:, j]) if active[j] else np.nan for j in range(m)])
    act = np.flatnonzero(active)
    ma = act.shape[0]

    if ma < 3:
        spec = TransformSpec(tau, active, fallback=True)
        return spec, TciReport(0.0, np.zeros(0), 0)

    Xa = X[:, act]
    ta = tau[act].copy()
    medians = ta.copy()
    B = _binarize(Xa, ta)
    mom = empirical_moments(B)
    current = tci_statistic(mom, clip_delta, index_set)

    if ma < 4:
        return TransformSpec(tau, active, fallback=True, trace=[current.statistic]), current

    trace = [current.statistic]
    moves = []
    for _ in range(max_sweeps):
        changed = False
        for jj in range(ma):
            grid = cands[act[jj]]
            if not np.any(grid == ta[jj]):
                grid = np.sort(np.append(grid, ta[jj]))
            stats = _coordinate_scores(B, mom, Xa[:, jj], jj, grid, clip_delta, index_set)
            best = stats.min()
            tied = np.flatnonzero(stats <= best + 1e-12 * max(1.0, abs(best)))
            pick = tied[np.argmin(np.abs(grid[tied] - medians[jj]))]
            if grid[pick] != ta[jj]:
                ta[jj] = grid[pick]
                B[:, jj] = _binarize(Xa[:, jj], ta[jj])
                mom = empirical_moments(B)
                current = tci_statistic(mom, clip_delta, index_set)
                moves.append(current.statistic)
                changed = True
        trace.append(current.statistic)
        if not changed:
            break

    tau[act] = ta
    return TransformSpec(tau, active, trace=trace, moves=moves), current


def _coordinate_scores(B, mom, column, jj, grid, clip_delta, index_set):
    """Statistic for each threshold in ``grid`` applied to active column ``jj``."""
    n, m = B.shape
    C = B - mom.mu
    K = np.where(column[:, None] >= grid[None, :], 1.0, -1.0)
    Kc = K - K.mean(axis=0)
    sig_row = Kc.T @ C / n
    t_slab = np.einsum("ik,ia,ib->kab", Kc, C, C, optimize=True) / n
    k = grid.shape[0]
    sigma = np.broadcast_to(mom.sigma, (k, m, m)).copy()
    sigma[:, jj, :] = sig_row
    sigma[:, :, jj] = sig_row
    T = np.broadcast_to(mom.tensor3, (k, m, m, m)).copy()
    # entries with a repeated jj index are never read by the statistic
    T[:, jj, :, :] = t_slab
    T[:, :, jj, :] = t_slab
    T[:, :, :, jj] = t_slab
    stats, _, _ = _statistic(sigma, T, clip_delta, index_set)
    return stats


class ThresholdBinarizer(TransformerMixin, BaseEstimator):
    """Learn per-verifier thresholds that minimize the TCI statistic.

    Parameters
    ----------
    clip_delta : float, default=1e-3
        Magnitude floor for covariance denominators.
    max_sweeps : int, default=10
    index_set : {"below", "exclude"}, default="below"

    Attributes
    ----------
    thresholds_ : ndarray of shape (n_verifiers,)
    active_ : ndarray of bool
    report_ : TciReport
    fallback_ : bool
        True when the median thresholds were kept for lack of verifiers.
    """

    def __init__(self, clip_delta=CLIP_DELTA, max_sweeps=10, index_set="below"):
        self.clip_delta = clip_delta
        self.max_sweeps = max_sweeps
        self.index_set = index_set

    def fit(self, X, y=None):
        spec, report = optimize_thresholds(X, self.clip_delta, self.max_sweeps, self.index_set)
        self.spec_ = spec
        self.thresholds_ = spec.tau
        self.active_ = spec.active
        self.report_ = report
        self.fallback_ = spec.fallback
        self.n_features_in_ = spec.tau.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        X = check_scores(X, min_samples=1, min_verifiers=self.n_features_in_)
        return apply_transform(X, self.spec_)


def moments_of_active(verdicts, active):
    """Moments restricted to the active columns of a verdict matrix."""
    return empirical_moments(np.asarray(verdicts)[:, np.asarray(active, bool)])


__all__ = [
    "MomentSet", "TciReport", "TransformSpec", "ThresholdBinarizer", "apply_transform",
    "median_threshold", "moments_of_active", "optimize_thresholds", "tci_statistic",
    "threshold_candidates",
]
