"""Triplet posteriors and the pseudo-labels built from them."""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from ._validation import check_mask
from .exceptions import InsufficientVerifiersError


@dataclass(frozen=True, eq=False)
class PseudoLabels:
    p_hat: np.ndarray
    n_triplets: int

    @property
    def margin(self):
        return 2.0 * self.p_hat - 1.0


def _kernels(verdicts, psi, eta):
    """Per-verifier likelihood factors (up to a factor 2) under y=+1 and y=-1."""
    v = np.asarray(verdicts, dtype=np.float64)
    pos = 1.0 - v + 2.0 * v * psi
    neg = 1.0 + v - 2.0 * v * eta
    return pos, neg


def triplet_posterior(verdicts, psi, eta, b):
    """P(y = +1 | three +/-1 verdicts) for verifiers independent given y.

    The unnormalized weight of label ``y`` is
    ``(1 + b y) * prod_l [1 - y v_l + v_l ((1 + y) psi_l - (1 - y) eta_l)]``.
    """
    verdicts = np.asarray(verdicts, dtype=np.float64)
    if verdicts.shape[-1] != 3:
        raise ValueError("triplet_posterior expects exactly three verdicts")
    pos, neg = _kernels(verdicts, np.asarray(psi, float), np.asarray(eta, float))
    w_pos = (1.0 + b) * pos.prod(axis=-1)
    w_neg = (1.0 - b) * neg.prod(axis=-1)
    return w_pos / (w_pos + w_neg)


def aggregate_posteriors(binarized, quality, active=None):
    """Average the triplet posterior over every triplet of active verifiers.

    ``quality`` must cover all columns of ``binarized`` (entries of inactive
    columns are ignored).
    """
    V = np.asarray(binarized, dtype=np.float64)
    n, m = V.shape
    active = check_mask(active, m)
    idx = np.flatnonzero(active)
    if idx.shape[0] < 3:
        raise InsufficientVerifiersError(
            f"posterior aggregation needs 3 active verifiers, got {idx.shape[0]}")
    psi = np.asarray(quality.psi, dtype=np.float64)
    eta = np.asarray(quality.eta, dtype=np.float64)
    b = float(quality.b_hat)
    pos, neg = _kernels(V[:, idx], psi[idx], eta[idx])
    tri = np.array(list(combinations(range(idx.shape[0]), 3)), dtype=int)
    w_pos = (1.0 + b) * pos[:, tri].prod(axis=-1)
    w_neg = (1.0 - b) * neg[:, tri].prod(axis=-1)
    p = w_pos / (w_pos + w_neg)
    return PseudoLabels(p.mean(axis=1), tri.shape[0])
