"""Comparison methods: unsupervised, semi-supervised and oracle selectors.

Batch-level methods take a :class:`~fuse_ensemble.dataset.Batch` and return
one :class:`~fuse_ensemble.selection.SelectionResult` per block, in block
order.  Probabilistic methods rank rows by log-odds rather than by the
probability itself so that saturated probabilities do not create spurious
ties.
"""

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from ._logistic import newton_logistic
from .exceptions import (DegenerateError, FuseError, InsufficientVerifiersError,
                         UnavailableBaselineError)
from .moments import EPS, estimate_verifier_quality
from .selection import SelectionResult, select_by


@dataclass(frozen=True)
class LabeledSplit:
    train_query_ids: frozenset
    fraction: float = 0.05


def make_split(batch, fraction=0.05, seed=0):
    """Reveal labels for a random ``fraction`` of queries (at least one)."""
    ids = batch.query_ids
    k = max(1, int(round(fraction * len(ids))))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x5EED])))
    picked = rng.choice(len(ids), size=min(k, len(ids)), replace=False)
    return LabeledSplit(frozenset(ids[i] for i in sorted(picked)), fraction)


def _require_labels(batch, what):
    if not batch.has_labels:
        raise UnavailableBaselineError(f"{what} needs ground-truth labels")


def median_binarize(scores):
    """Top half of each column (strictly above the median) to +1, the rest to -1."""
    X = np.asarray(scores, dtype=np.float64)
    return np.where(X > np.median(X, axis=0), 1.0, -1.0)


def pass_at_k(c, n, k):
    """Unbiased pass@k: ``1 - C(n - c, k) / C(n, k)``."""
    if not 0 <= c <= n:
        raise ValueError(f"need 0 <= c <= n, got c={c}, n={n}")
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    return 1.0 - math.comb(n - c, k) / math.comb(n, k)


def pass1(block, literal=False):
    """Random-selection rule (all rows tied), or the first response if ``literal``."""
    n = block.n_responses
    if literal:
        ranking = np.zeros(n)
        ranking[0] = 1.0
        return select_by(block.query_id, ranking, "pass1")
    return select_by(block.query_id, np.zeros(n), "pass1")


def naive_ensemble(block):
    """Highest mean normalized score."""
    scores = block.norm_scores.mean(axis=1)
    return select_by(block.query_id, scores, "naive_ensemble")


def majority_vote(block):
    """Rows whose answer belongs to the most frequent answer (ties: union)."""
    if block.answer_keys is None:
        raise UnavailableBaselineError(
            f"majority vote needs answer keys (query {block.query_id!r})")
    counts = Counter(block.answer_keys)
    ranking = np.array([counts[a] for a in block.answer_keys], dtype=np.float64)
    return select_by(block.query_id, ranking, "majority_vote")


def verdict_vote(block):
    """Sum of median-binarized verdicts: the JCI rule with identical uninformed verifiers."""
    return select_by(block.query_id, median_binarize(block.norm_scores).sum(axis=1),
                     "verdict_vote")


def jci_mle(binarized, quality, compat=False):
    """Per-row log-likelihood ratio under joint conditional independence.

    ``score = sum_j v_j * w_j + sum_j c_j + log((1 + b) / (1 - b))`` with
    ``w_j = 0.5 log(psi eta / ((1 - psi)(1 - eta)))`` and
    ``c_j = 0.5 log(psi (1 - psi) / (eta (1 - eta)))``.  The sign is the
    label estimate.  ``compat=True`` instead uses
    ``log(psi (1 - psi) / (eta (1 - eta)))`` for both the verdict weight and
    the offset and drops the prior term.
    """
    V = np.asarray(binarized, dtype=np.float64)
    psi, eta = np.asarray(quality.psi, float), np.asarray(quality.eta, float)
    if compat:
        c = np.log(psi * (1 - psi) / (eta * (1 - eta)))
        return V @ c + c.sum()
    w = 0.5 * np.log(psi * eta / ((1 - psi) * (1 - eta)))
    c = 0.5 * np.log(psi * (1 - psi) / (eta * (1 - eta)))
    b = float(quality.b_hat)
    return V @ w + c.sum() + np.log((1 + b) / (1 - b))


def jci_ensemble(batch, per_query=True, compat=False):
    """Median binarization, moment-based qualities, then the JCI likelihood ratio."""
    def run(blocks):
        V = np.vstack([median_binarize(b.norm_scores) for b in blocks])
        active = np.ptp(V, axis=0) > 0
        out = []
        try:
            if active.sum() < 3:
                raise InsufficientVerifiersError(
                    f"{int(active.sum())} informative verdict columns, need 3")
            quality = estimate_verifier_quality(V[:, active])
            scores = jci_mle(V[:, active], quality, compat=compat)
        except FuseError:
            return [naive_ensemble(b) for b in blocks], "naive-ensemble"
        off = 0
        for b in blocks:
            s = scores[off:off + b.n_responses]
            off += b.n_responses
            out.append(select_by(b.query_id, s, "jci"))
        return out, None

    results = []
    groups = [[b] for b in batch.blocks] if per_query else [list(batch.blocks)]
    for blocks in groups:
        res, fb = run(blocks)
        if fb:
            res = [SelectionResult(r.query_id, r.selected, r.scores, "jci", fb) for r in res]
        results.extend(res)
    return results


def naive_bayes(batch, split):
    """Naive Bayes on median-binarized scores, fitted on the labeled queries."""
    _require_labels(batch, "naive Bayes")
    train = [b for b in batch.blocks if b.query_id in split.train_query_ids]
    if not train:
        raise UnavailableBaselineError("naive Bayes needs at least one labeled query")
    V = np.vstack([median_binarize(b.norm_scores) for b in train])
    y = np.concatenate([b.labels for b in train])
    log_ratio_fn = naive_bayes_fit(V, y)
    return [select_by(b.query_id, log_ratio_fn(median_binarize(b.norm_scores)), "naive_bayes")
            for b in batch.blocks]


def naive_bayes_fit(V, y):
    """Add-one smoothed tables; returns a function mapping verdict rows to log ratios."""
    V = np.asarray(V, dtype=np.float64)
    y = np.asarray(y)
    pos, neg = y > 0, y < 0
    n_pos, n_neg = pos.sum(), neg.sum()
    prior = np.log((n_pos + 1) / (n_neg + 1))
    p_up_pos = ((V[pos] > 0).sum(axis=0) + 1) / (n_pos + 2)
    p_up_neg = ((V[neg] > 0).sum(axis=0) + 1) / (n_neg + 2)
    w_up = np.log(p_up_pos / p_up_neg)
    w_down = np.log((1 - p_up_pos) / (1 - p_up_neg))

    def log_ratio(rows):
        rows = np.asarray(rows, dtype=np.float64)
        return prior + np.where(rows > 0, w_up, w_down).sum(axis=1)

    return log_ratio


def supervised_logistic(batch, split, reg=0.5):
    """Logistic regression on normalized scores of the labeled queries.

    ``reg`` is the ridge weight on ``||w||^2``; 0.5 corresponds to
    scikit-learn's default ``C=1``.
    """
    _require_labels(batch, "logistic regression")
    train = [b for b in batch.blocks if b.query_id in split.train_query_ids]
    if not train:
        raise UnavailableBaselineError("logistic regression needs at least one labeled query")
    X = np.vstack([b.norm_scores for b in train])
    y = np.concatenate([b.labels for b in train]).astype(np.float64)
    if np.all(y == y[0]):
        raise DegenerateError("training labels contain a single class")
    w, c, _, _ = newton_logistic(X, y, np.ones_like(y), reg)
    return [select_by(b.query_id, b.norm_scores @ w + c, "logistic",
                      scores=expit(b.norm_scores @ w + c)) for b in batch.blocks]


def oracle_best_verifier(batch):
    """Select with the single verifier of highest true balanced accuracy."""
    _require_labels(batch, "the oracle best verifier")
    j = int(np.argmax(true_balanced_accuracy(batch)))
    return [select_by(b.query_id, b.norm_scores[:, j], "oracle_best_verifier")
            for b in batch.blocks]


def true_balanced_accuracy(batch):
    V = np.vstack([median_binarize(b.norm_scores) for b in batch.blocks])
    y = np.concatenate([b.labels for b in batch.blocks])
    return balanced_accuracy(V, y)


def balanced_accuracy(verdicts, labels):
    V = np.asarray(verdicts, dtype=np.float64)
    y = np.asarray(labels)
    pos, neg = y > 0, y < 0
    tpr = (V[pos] > 0).mean(axis=0) if pos.any() else np.full(V.shape[1], 0.5)
    tnr = (V[neg] < 0).mean(axis=0) if neg.any() else np.full(V.shape[1], 0.5)
    return 0.5 * (tpr + tnr)


# --- EM baselines -----------------------------------------------------------

def _majority_init(V):
    s = V.sum(axis=1)
    return np.where(s > 0, 1.0, np.where(s < 0, 0.0, 0.5))


def dawid_skene_em(verdicts, init=None, max_iter=200, tol=1e-8, pseudocount=1.0):
    """Two-class Dawid-Skene EM on +/-1 verdicts.

    Each parameter gets ``pseudocount`` extra successes and failures (a
    symmetric Beta prior), so the tracked objective is the log posterior,
    which EM never decreases.

    Returns
    -------
    dict with ``psi``, ``eta``, ``prior`` (P(y=+1)), ``posterior``,
    ``log_odds``, ``objective`` (per-iteration trace) and ``n_iter``.
    """
    V = np.asarray(verdicts, dtype=np.float64)
    n, m = V.shape
    init = _majority_init(V) if init is None else np.asarray(init, dtype=np.float64)
    q = init.copy()
    up = V > 0
    a = pseudocount
    trace = []
    for it in range(1, max_iter + 1):
        wp, wn = q.sum(), (1 - q).sum()
        psi = (q @ up + a) / (wp + 2 * a)
        eta = ((1 - q) @ ~up + a) / (wn + 2 * a)
        prior = (wp + a) / (n + 2 * a)
        # without pseudo-counts parameters can reach 0 or 1; log(0) = -inf is intended
        with np.errstate(divide="ignore"):
            lp = np.log(prior) + np.where(up, np.log(psi), np.log(1 - psi)).sum(axis=1)
            ln = np.log(1 - prior) + np.where(up, np.log(1 - eta), np.log(eta)).sum(axis=1)
            objective = float(np.logaddexp(lp, ln).sum())
            if a > 0:
                objective += float(a * (np.log(psi) + np.log(1 - psi)
                                        + np.log(eta) + np.log(1 - eta)).sum()
                                   + a * (np.log(prior) + np.log(1 - prior)))
        if trace and objective < trace[-1] - 1e-9 * max(1.0, abs(trace[-1])):
            raise AssertionError(f"Dawid-Skene objective decreased at iteration {it}")
        trace.append(objective)
        q_new = expit(lp - ln)
        delta = np.max(np.abs(q_new - q))
        q = q_new
        if delta < tol:
            break
    log_odds = lp - ln
    if (q - q.mean()) @ (init - init.mean()) < 0:
        q, log_odds = 1 - q, -log_odds
        psi, eta, prior = 1 - eta, 1 - psi, 1 - prior
    return {"psi": psi, "eta": eta, "prior": prior, "posterior": q, "log_odds": log_odds,
            "objective": trace, "n_iter": it}


def dawid_skene(batch):
    V = np.vstack([median_binarize(b.norm_scores) for b in batch.blocks])
    fit = dawid_skene_em(V)
    return [select_by(b.query_id, lo, "dawid_skene", scores=p)
            for b, lo, p in zip(batch.blocks, batch.split(fit["log_odds"]),
                                batch.split(fit["posterior"]))]


def _gauss_logpdf(X, mean, cov):
    m = X.shape[1]
    L = np.linalg.cholesky(cov)
    z = np.linalg.solve(L, (X - mean).T)
    return -0.5 * (z * z).sum(axis=0) - np.log(np.diag(L)).sum() - 0.5 * m * np.log(2 * np.pi)


def gaussian_mixture_em(X, init=None, ridge=1e-4, max_iter=200, tol=1e-8):
    """Two-component full-covariance Gaussian mixture fitted by EM.

    The covariance update ``(S_k + ridge I) / n_k`` is the exact maximizer
    of the log-likelihood penalized by ``-ridge/2 * tr(Sigma_k^-1)``, so the
    penalized objective is non-decreasing.  Component 1 is the one with the
    higher responsibility-weighted mean row score.
    """
    X = np.asarray(X, dtype=np.float64)
    n, m = X.shape
    row_mean = X.mean(axis=1)
    if init is None:
        split = row_mean > np.median(row_mean)
        r1 = np.where(split, 1.0, 0.0) if 0 < split.sum() < n else np.full(n, 0.5)
    else:
        r1 = np.asarray(init, dtype=np.float64)
    R = np.column_stack([1 - r1, r1])
    eye = np.eye(m)
    diagonal = False
    trace = []
    for it in range(1, max_iter + 1):
        nk = np.maximum(R.sum(axis=0), 1e-12)
        weights = nk / n
        means = (R.T @ X) / nk[:, None]
        covs = []
        for k in range(2):
            D = X - means[k]
            S = (D * R[:, k:k + 1]).T @ D
            cov = (S + ridge * eye) / nk[k]
            covs.append(np.diag(np.diag(cov)) if diagonal else cov)
        try:
            logp = np.column_stack([np.log(weights[k]) + _gauss_logpdf(X, means[k], covs[k])
                                    for k in range(2)])
        except np.linalg.LinAlgError:
            diagonal = True
            covs = [np.diag(np.diag(c)) for c in covs]
            logp = np.column_stack([np.log(weights[k]) + _gauss_logpdf(X, means[k], covs[k])
                                    for k in range(2)])
        penalty = sum(np.trace(np.linalg.inv(c)) for c in covs)
        objective = float(logsumexp(logp, axis=1).sum() - 0.5 * ridge * penalty)
        if trace and objective < trace[-1] - 1e-9 * max(1.0, abs(trace[-1])):
            raise AssertionError(f"GMM objective decreased at iteration {it}")
        trace.append(objective)
        R_new = np.exp(logp - logsumexp(logp, axis=1, keepdims=True))
        delta = np.max(np.abs(R_new - R))
        R = R_new
        if delta < tol:
            break
    log_odds = logp[:, 1] - logp[:, 0]
    resp = R[:, 1]
    nk = np.maximum(R.sum(axis=0), 1e-12)
    score_mean = (R.T @ row_mean) / nk
    if score_mean[0] > score_mean[1]:
        log_odds, resp = -log_odds, R[:, 0]
    return {"responsibility": resp, "log_odds": log_odds, "objective": trace,
            "n_iter": it, "diagonal": diagonal}


def gmm_em(batch):
    fit = gaussian_mixture_em(batch.concat_view)
    tag = "diagonal-covariance" if fit["diagonal"] else None
    return [select_by(b.query_id, lo, "gmm", scores=r, fallback=tag)
            for b, lo, r in zip(batch.blocks, batch.split(fit["log_odds"]),
                                batch.split(fit["responsibility"]))]


__all__ = [
    "EPS", "LabeledSplit", "balanced_accuracy", "dawid_skene", "dawid_skene_em",
    "gaussian_mixture_em", "gmm_em", "jci_ensemble", "jci_mle", "majority_vote",
    "make_split", "median_binarize", "naive_bayes", "naive_bayes_fit", "naive_ensemble",
    "oracle_best_verifier", "pass1", "pass_at_k", "supervised_logistic",
    "true_balanced_accuracy", "verdict_vote",
]
