"""End-to-end unsupervised score ensembling.

Thresholds are chosen to make the binarized verifiers look triplet
conditionally independent, verifier quality is recovered by the method of
moments, triplet posteriors become soft pseudo-labels, and a logistic model
over the normalized scores is fitted to agree with them.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._logistic import newton_logistic
from ._validation import check_mask, check_scores
from .baselines import naive_ensemble
from .exceptions import AssumptionViolation, DegenerateError, FuseError
from .moments import EPS, VerifierQuality, estimate_verifier_quality
from .posterior import aggregate_posteriors
from .selection import SelectionResult, select_by
from .tci import CLIP_DELTA, apply_transform, optimize_thresholds

FALLBACK_TAG = "naive-ensemble"


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    weights: np.ndarray
    intercept: float
    active: np.ndarray
    converged: bool = True
    n_iter: int = 0

    def decision_function(self, scores):
        X = np.asarray(scores, dtype=np.float64)
        return X @ self.weights + self.intercept

    def predict_proba(self, scores):
        return expit(self.decision_function(scores))

    def predict(self, scores):
        return np.where(self.decision_function(scores) >= 0, 1, -1)


def drop_verifiers(quality):
    """Keep verifiers with estimated balanced accuracy above 1/2 (at least three)."""
    pi = np.asarray(quality.pi, dtype=np.float64)
    keep = pi > 0.5
    if keep.sum() < 3:
        keep = np.zeros(pi.shape[0], dtype=bool)
        keep[np.argsort(-pi, kind="stable")[:3]] = True
    return keep


def estimated_accuracy(model, scores, labels_pm=None, pseudo=None):
    """``sum_i (2 p_i - 1) * prediction_i``; predictions default to ``model``'s."""
    if labels_pm is None:
        labels_pm = model.predict(scores)
    pred = np.asarray(labels_pm, dtype=np.float64)
    return float(np.asarray(pseudo.margin, dtype=np.float64) @ pred)


def fit_weighted_logistic(scores, pseudo, reg=1e-3, active=None):
    """Logistic fit to the margin signs, each row weighted by its margin size."""
    X = check_scores(scores, min_samples=1)
    n, m = X.shape
    active = check_mask(active, m)
    margin = np.asarray(pseudo.margin, dtype=np.float64)
    if margin.shape != (n,):
        raise ValueError(f"pseudo-labels cover {margin.shape[0]} rows, scores have {n}")
    weight = np.abs(margin)
    if not np.any(weight > 0):
        raise DegenerateError("all pseudo-label margins are zero")
    y = np.where(margin >= 0, 1.0, -1.0)
    w_act, c, converged, n_iter = newton_logistic(X[:, active], y, weight, reg)
    w = np.zeros(m)
    w[active] = w_act
    return EnsembleModel(w, c, active, converged, n_iter)


def select(model, block, method="fuse"):
    """Select the rows of highest predicted probability (full tie set)."""
    z = model.decision_function(block.norm_scores)
    return select_by(block.query_id, z, method, scores=expit(z))


def _expand_quality(quality, active):
    """Place active-column estimates into full-width arrays (inactive: 1/2)."""
    m = active.shape[0]
    psi, eta, pi = np.full(m, 0.5), np.full(m, 0.5), np.full(m, 0.5)
    psi[active], eta[active], pi[active] = quality.psi, quality.eta, quality.pi
    idx = np.flatnonzero(active)
    clipped = {k: [int(idx[j]) for j in v] for k, v in quality.clipped.items()}
    return VerifierQuality(psi, eta, pi, quality.b_hat, clipped)


class FUSESelector(ClassifierMixin, BaseEstimator):
    """Unsupervised ensemble of verifier scores.

    ``fit`` needs only the (N, m) matrix of normalized scores.  When a stage
    cannot run (too few verifiers, degenerate moments, ...) the estimator
    falls back to the row mean of the scores and records why.

    Parameters
    ----------
    clip_delta : float, default=1e-3
        Denominator floor of the TCI statistic.
    reg : float, default=1e-3
        Ridge weight of the ensemble fit.
    max_sweeps : int, default=10
        Coordinate-descent sweeps of the threshold search.
    index_set : {"below", "exclude"}, default="below"
    drop : bool, default=True
        Exclude verifiers estimated to be worse than random.
    fallback : {"naive"}, default="naive"
    eps : float, default=1e-3
        Clipping margin for quality estimates.

    Attributes
    ----------
    spec_ : TransformSpec
    tci_report_ : TciReport
    quality_ : VerifierQuality
        Full-width estimates; inactive columns hold 1/2.
    mask_ : ndarray of bool
        Columns used by the ensemble.
    pseudo_labels_ : PseudoLabels
    model_ : EnsembleModel
    coef_, intercept_
    fallback_ : str or None
    fallback_reason_ : str or None
    """

    def __init__(self, clip_delta=CLIP_DELTA, reg=1e-3, max_sweeps=10, index_set="below",
                 drop=True, fallback="naive", eps=EPS):
        self.clip_delta = clip_delta
        self.reg = reg
        self.max_sweeps = max_sweeps
        self.index_set = index_set
        self.drop = drop
        self.fallback = fallback
        self.eps = eps

    def fit(self, X, y=None):
        X = check_scores(X, min_samples=2)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([-1, 1])
        self.spec_ = self.tci_report_ = self.quality_ = None
        self.mask_ = self.pseudo_labels_ = self.model_ = None
        self.fallback_ = self.fallback_reason_ = None
        try:
            self._fit_pipeline(X)
        except FuseError as exc:
            self.fallback_ = FALLBACK_TAG
            self.fallback_reason_ = f"{type(exc).__name__}: {exc}"
            self.coef_ = np.full(X.shape[1], 1.0 / X.shape[1])
            self.intercept_ = 0.0
        return self

    def _fit_pipeline(self, X):
        spec, report = optimize_thresholds(X, self.clip_delta, self.max_sweeps, self.index_set)
        self.spec_, self.tci_report_ = spec, report
        V = apply_transform(X, spec)
        active = spec.active
        quality = estimate_verifier_quality(V[:, active], eps=self.eps)
        if not np.any(quality.pi > 0.5):
            raise AssumptionViolation("no verifier has estimated balanced accuracy above 1/2")
        self.quality_ = _expand_quality(quality, active)
        mask = active.copy()
        if self.drop:
            mask[active] = drop_verifiers(quality)
        self.mask_ = mask
        self.pseudo_labels_ = aggregate_posteriors(V, self.quality_, mask)
        self.model_ = fit_weighted_logistic(X, self.pseudo_labels_, self.reg, mask)
        self.coef_ = self.model_.weights
        self.intercept_ = self.model_.intercept

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_scores(X, min_samples=1, min_verifiers=self.n_features_in_)
        if self.fallback_ is not None:
            return X.mean(axis=1)
        return X @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        z = self.decision_function(X)
        p = expit(z) if self.fallback_ is None else (z + 1.0) / 2.0
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0, 1, -1)

    def select(self, X):
        """Row indices of the highest ensemble score (ties kept)."""
        z = self.decision_function(X)
        return tuple(int(i) for i in np.flatnonzero(z == z.max()))


def _selector(config):
    return FUSESelector(clip_delta=config.clip_delta, reg=config.reg,
                        max_sweeps=config.max_sweeps, index_set=config.index_set,
                        fallback=config.fallback)


def _fallback_result(block):
    r = naive_ensemble(block)
    return SelectionResult(r.query_id, r.selected, r.scores, "fuse", FALLBACK_TAG)


def _result(est, block):
    if est.fallback_ is not None:
        return _fallback_result(block)
    return select(est.model_, block)


def _fit_block(block, config):
    try:
        est = _selector(config).fit(block.norm_scores)
    except FuseError:
        return _fallback_result(block)
    return _result(est, block)


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_fuse(batch, config):
    """Selections for every block of ``batch``, in block order.

    Query mode fits one ensemble per block.  Batched mode fits a single
    ensemble on the stacked blocks and applies it to each block.  A block
    whose fit fails gets the naive-ensemble selection, tagged as a fallback.
    """
    workers = int(config.workers)
    if config.mode == "query":
        return _map(lambda b: _fit_block(b, config), batch.blocks, workers)
    try:
        est = _selector(config).fit(batch.concat_view)
    except FuseError:
        return [_fallback_result(b) for b in batch.blocks]
    return _map(lambda b: _result(est, b), batch.blocks, workers)


__all__ = [
    "EnsembleModel", "FALLBACK_TAG", "FUSESelector", "drop_verifiers", "estimated_accuracy",
    "fit_weighted_logistic", "run_fuse", "select",
]
