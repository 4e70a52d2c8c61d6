"""Method-of-moments recovery of verifier sensitivity and specificity.

For +/-1 verifier outputs that are conditionally independent in triplets given
the true label, the off-diagonal central second moments are rank one,
``sigma_jk = u_j u_k`` with ``u = sqrt(1 - b^2) (2 pi - 1)``, and the
distinct-index third moments are ``lambda3 * u_j u_k u_l`` with
``lambda3 = -2 b / sqrt(1 - b^2)``.  Inverting those two identities gives the
class imbalance ``b`` and, together with the means, every verifier's
sensitivity and specificity.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.optimize import least_squares

from ._validation import check_scores
from .exceptions import ConvergenceError, DegenerateError, InsufficientVerifiersError

EPS = 1e-3


@dataclass(frozen=True, eq=False)
class MomentSet:
    mu: np.ndarray
    sigma: np.ndarray
    tensor3: np.ndarray
    n_samples: int

    @property
    def n_verifiers(self):
        return self.mu.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return MomentSet(self.mu[idx], self.sigma[np.ix_(idx, idx)],
                         self.tensor3[np.ix_(idx, idx, idx)], self.n_samples)


@dataclass(frozen=True, eq=False)
class RankOneFit:
    u: np.ndarray
    lambda3: float
    b_hat: float
    n_iter: int = 0
    residual: float = 0.0
    degenerate_scale: bool = False


@dataclass(frozen=True, eq=False)
class VerifierQuality:
    psi: np.ndarray
    eta: np.ndarray
    pi: np.ndarray
    b_hat: float
    clipped: dict = field(default_factory=dict)

    @property
    def n_verifiers(self):
        return self.psi.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return VerifierQuality(self.psi[idx], self.eta[idx], self.pi[idx], self.b_hat,
                               dict(self.clipped))


def empirical_moments(scores):
    """Mean, central second moments and central third moments (1/N form)."""
    V = check_scores(scores, min_samples=2)
    n = V.shape[0]
    mu = V.mean(axis=0)
    C = V - mu
    sigma = C.T @ C / n
    # symmetrize away rounding differences between (j, k) and (k, j)
    sigma = 0.5 * (sigma + sigma.T)
    tensor3 = np.einsum("ij,ik,il->jkl", C, C, C, optimize=True) / n
    return MomentSet(mu, sigma, tensor3, n)


def _offdiag_residual(sigma, u):
    R = sigma - np.outer(u, u)
    np.fill_diagonal(R, 0.0)
    return float(np.sqrt((R ** 2).sum()))


def _polish(S, u):
    """Levenberg-Marquardt refinement of ``u`` on the off-diagonal residuals."""
    m = u.shape[0]
    rows, cols = np.triu_indices(m, k=1)
    target = S[rows, cols]
    ar = np.arange(rows.shape[0])

    def resid(v):
        return v[rows] * v[cols] - target

    def jac(v):
        J = np.zeros((rows.shape[0], m))
        J[ar, rows] = v[cols]
        J[ar, cols] = v[rows]
        return J

    res = least_squares(resid, u, jac=jac, method="lm", xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, max_nfev=100 * m)
    return res.x, float(np.max(np.abs(jac(res.x).T @ resid(res.x))))


def fit_rank_one_sym(sigma, tol=1e-8, max_iter=200, grad_tol=1e-6):
    """Fit ``sigma_jk ~ u_j u_k`` on the off-diagonal entries.

    Alternates between filling the diagonal with ``u_j**2`` and taking the
    leading eigenpair of the completed matrix, stopping once ``u`` moves by
    less than ``tol`` or after ``max_iter`` rounds.  That fixed point solves
    the off-diagonal least-squares problem; Levenberg-Marquardt steps on the
    same objective then remove the slow linear tail of the alternation.

    Returns
    -------
    u : ndarray of shape (m,)
        Defined up to a global sign; see :func:`resolve_sign`.
    n_iter : int
        Diagonal-completion rounds used.
    residual : float
        Frobenius norm of the off-diagonal misfit.
    """
    S = np.array(sigma, dtype=np.float64)
    m = S.shape[0]
    if S.shape != (m, m):
        raise ValueError("sigma must be square")
    if m < 3:
        raise InsufficientVerifiersError(f"rank-one fit needs m >= 3, got {m}")
    S = 0.5 * (S + S.T)
    off = S.copy()
    np.fill_diagonal(off, 0.0)
    if not np.any(off):
        raise DegenerateError("all off-diagonal covariances are zero")

    M = off.copy()
    np.fill_diagonal(M, np.abs(off).max(axis=1))
    u = None
    for it in range(1, max_iter + 1):
        evals, evecs = np.linalg.eigh(M)
        lam, x = evals[-1], evecs[:, -1]
        if lam <= 0:
            raise DegenerateError("completed covariance has no positive eigenvalue")
        u_new = np.sqrt(lam) * x
        if u is not None and u_new @ u < 0:
            u_new = -u_new
        moved = np.inf if u is None else np.max(np.abs(u_new - u))
        u = u_new
        if moved < tol:
            break
        np.fill_diagonal(M, u ** 2)

    u, grad = _polish(S, u)
    scale = max(1.0, float(np.abs(off).max()))
    if grad > grad_tol * scale:
        raise ConvergenceError(
            f"rank-one fit did not converge (gradient {grad:.3g} after {it} rounds)",
            residual=_offdiag_residual(S, u))
    return u, it, _offdiag_residual(S, u)


def resolve_sign(u):
    """Flip ``u`` so most entries are positive (ties: non-negative sum)."""
    u = np.asarray(u, dtype=np.float64)
    if not np.any(u):
        raise DegenerateError("cannot resolve the sign of a zero vector")
    pos, neg = int((u > 0).sum()), int((u < 0).sum())
    if neg > pos or (neg == pos and u.sum() < 0):
        return -u
    return u.copy()


def _distinct_triples(m):
    if m < 3:
        return np.empty((0, 3), dtype=int)
    return np.array(list(combinations(range(m), 3)), dtype=int)


def estimate_tensor_scale(tensor3, u, floor=1e-12):
    """Least-squares ``lambda3`` in ``T ~ lambda3 * u (x) u (x) u`` over j1<j2<j3.

    Returns ``(lambda3, degenerate)``; a vanishing denominator yields 0.
    """
    T = np.asarray(tensor3, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    tri = _distinct_triples(u.shape[0])
    if tri.shape[0] == 0:
        raise InsufficientVerifiersError("tensor scale needs m >= 3")
    prod = u[tri[:, 0]] * u[tri[:, 1]] * u[tri[:, 2]]
    den = float(prod @ prod)
    if den < floor:
        return 0.0, True
    num = float(T[tri[:, 0], tri[:, 1], tri[:, 2]] @ prod)
    return num / den, False


def invert_class_imbalance(lambda3, eps=EPS):
    """Solve ``lambda3 = -2 b / sqrt(1 - b^2)`` for ``b``."""
    t = float(lambda3)
    b = -t / np.sqrt(4.0 + t * t)
    return float(np.clip(b, -1.0 + eps, 1.0 - eps))


def estimate_quality(mu, u, b_hat, eps=EPS):
    """Sensitivity/specificity from means, the rank-one factor and imbalance.

    ``psi = (1 + mu + u sqrt((1-b)/(1+b))) / 2`` and
    ``eta = (1 - mu + u sqrt((1+b)/(1-b))) / 2``, both clipped to
    ``[eps, 1 - eps]``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    b = float(b_hat)
    if abs(b) > 1 - eps + 1e-15:
        raise ValueError(f"|b_hat| must be <= 1 - eps, got {b}")
    psi = 0.5 * (1.0 + mu + u * np.sqrt((1.0 - b) / (1.0 + b)))
    eta = 0.5 * (1.0 - mu + u * np.sqrt((1.0 + b) / (1.0 - b)))
    clipped = {
        "psi": np.flatnonzero((psi < eps) | (psi > 1 - eps)).tolist(),
        "eta": np.flatnonzero((eta < eps) | (eta > 1 - eps)).tolist(),
    }
    psi = np.clip(psi, eps, 1 - eps)
    eta = np.clip(eta, eps, 1 - eps)
    return VerifierQuality(psi, eta, 0.5 * (psi + eta), b, clipped)


def fit_rank_one(moments, tol=1e-8, max_iter=200, eps=EPS):
    """Sign-resolved ``u``, tensor scale and imbalance from a :class:`MomentSet`."""
    u, n_iter, residual = fit_rank_one_sym(moments.sigma, tol=tol, max_iter=max_iter)
    u = resolve_sign(u)
    lambda3, degenerate = estimate_tensor_scale(moments.tensor3, u)
    b_hat = invert_class_imbalance(lambda3, eps=eps)
    return RankOneFit(u, lambda3, b_hat, n_iter, residual, degenerate)


def estimate_verifier_quality(verdicts, eps=EPS, return_fit=False):
    """Full unsupervised quality estimate from an (N, m) matrix of +/-1 verdicts."""
    mom = empirical_moments(verdicts)
    fit = fit_rank_one(mom, eps=eps)
    quality = estimate_quality(mom.mu, fit.u, fit.b_hat, eps=eps)
    if return_fit:
        return quality, fit, mom
    return quality
