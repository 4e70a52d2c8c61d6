"""Synthetic verifier worlds with known ground truth.

Every draw comes from a Philox generator keyed on ``(seed, query index)``, so
a spec reproduces bit-identical data regardless of generation order.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import Batch, Manifest, ScoreBlock, VerifierSpec, normalize_block
from .moments import MomentSet


@dataclass
class SynthSpec:
    """Parameters of a synthetic dataset.

    ``b_spread`` draws each query's imbalance uniformly from
    ``[b - b_spread, b + b_spread]``.  ``dependence`` is ``None`` or a dict
    ``{"groups": [[0, 1, 2], ...], "rho": 0.5}``.
    """

    m: int
    N: int
    psi: list
    eta: list
    n_queries: int = 1
    b: float = 0.0
    b_spread: float = 0.0
    value_kind: str = "binary"
    tau_true: list = None
    dependence: dict = None
    seed: int = 0
    n_wrong_answers: int = 3
    dataset_id: str = "synth"

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=np.float64)
        self.eta = np.asarray(self.eta, dtype=np.float64)
        if self.psi.shape != (self.m,) or self.eta.shape != (self.m,):
            raise ValueError("psi and eta must have length m")
        if np.any((self.psi < 0) | (self.psi > 1) | (self.eta < 0) | (self.eta > 1)):
            raise ValueError("psi and eta must lie in [0, 1]")
        if self.m < 1 or self.N < 2 or self.n_queries < 1:
            raise ValueError("need m >= 1, N >= 2 and n_queries >= 1")
        if not abs(self.b) < 1 or self.b_spread < 0 or abs(self.b) + self.b_spread >= 1:
            raise ValueError("class imbalance must stay inside (-1, 1)")
        if self.value_kind not in ("binary", "real"):
            raise ValueError(f"value_kind must be 'binary' or 'real', got {self.value_kind!r}")
        if self.value_kind == "real":
            tau = np.zeros(self.m) if self.tau_true is None else np.asarray(self.tau_true, float)
            if tau.shape != (self.m,) or np.any((tau <= -1) | (tau >= 1)):
                raise ValueError("tau_true must have length m with entries in (-1, 1)")
            self.tau_true = tau
        if self.dependence is not None:
            rho = float(self.dependence.get("rho", 0.0))
            if not 0.0 <= rho <= 1.0:
                raise ValueError(f"rho must lie in [0, 1], got {rho}")
            _check_groups(self.dependence.get("groups", []), self.m)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        return cls(**data)

    def to_dict(self):
        out = asdict(self)
        for key in ("psi", "eta", "tau_true"):
            if out[key] is not None:
                out[key] = np.asarray(out[key]).tolist()
        return out


def _check_groups(groups, m):
    seen = set()
    for g in groups:
        for j in g:
            if not 0 <= j < m:
                raise ValueError(f"group member {j} outside [0, {m})")
            if j in seen:
                raise ValueError(f"groups overlap at column {j}; they must be disjoint")
            seen.add(j)


def query_rng(seed, query_index):
    seq = np.random.SeedSequence([int(seed), int(query_index)])
    return np.random.Generator(np.random.Philox(seq))


def _channel(labels, psi, eta, u):
    """+/-1 verdicts: correct with probability psi (y=+1) or eta (y=-1)."""
    y = labels[:, None]
    right = np.where(y > 0, u < psi, u < eta)
    return np.where(right, y, -y).astype(np.int8)


def draw_labels(rng, n, b):
    return np.where(rng.random(n) < (1.0 + b) / 2.0, 1, -1).astype(np.int8)


def inject_dependence(verdicts, labels, psi, eta, groups, rho, seed):
    """Couple verdicts within groups of columns.

    For each response and group, with probability ``rho`` every member's
    verdict is replaced by a single fresh draw from the first member's
    channel.  ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    _check_groups(groups, verdicts.shape[1])
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    rng = seed if isinstance(seed, np.random.Generator) else query_rng(seed, 0)
    out = np.array(verdicts, copy=True)
    labels = np.asarray(labels)
    psi, eta = np.asarray(psi, float), np.asarray(eta, float)
    n = out.shape[0]
    for g in groups:
        g = list(g)
        if not g:
            continue
        hit = rng.random(n) < rho
        u = rng.random((n, 1))
        shared = _channel(labels, psi[g[:1]], eta[g[:1]], u)[:, 0]
        out[np.ix_(hit, g)] = shared[hit, None]
    return out


def _real_scores(verdicts, tau, rng):
    """Uniform on (tau, 1] for +1 verdicts and on [-1, tau) for -1 verdicts."""
    r = 1.0 - rng.random(verdicts.shape)  # in (0, 1]
    return np.where(verdicts > 0, tau + r * (1.0 - tau), tau - r * (1.0 + tau))


def _manifest(spec):
    kind = "binary" if spec.value_kind == "binary" else "real"
    return Manifest(tuple(VerifierSpec(f"v{j + 1}", kind, (-1.0, 1.0)) for j in range(spec.m)),
                    spec.dataset_id)


def _answer_keys(labels, rng, n_wrong):
    wrong = np.array([chr(ord("B") + k) for k in range(max(n_wrong, 1))])
    picks = wrong[rng.integers(0, wrong.shape[0], labels.shape[0])]
    return tuple(np.where(labels > 0, "A", picks).tolist())


def _generate(spec, allow_dependence=True):
    manifest = _manifest(spec)
    blocks, latent = [], []
    for q in range(spec.n_queries):
        rng = query_rng(spec.seed, q)
        b_q = spec.b + spec.b_spread * (2.0 * rng.random() - 1.0)
        labels = draw_labels(rng, spec.N, b_q)
        verdicts = _channel(labels, spec.psi, spec.eta, rng.random((spec.N, spec.m)))
        if spec.dependence is not None and allow_dependence:
            verdicts = inject_dependence(verdicts, labels, spec.psi, spec.eta,
                                         spec.dependence.get("groups", []),
                                         float(spec.dependence.get("rho", 0.0)), rng)
        if spec.value_kind == "real":
            raw = _real_scores(verdicts, spec.tau_true, rng)
        else:
            raw = verdicts.astype(np.float64)
        keys = _answer_keys(labels, rng, spec.n_wrong_answers)
        rids = tuple(f"r{i:04d}" for i in range(spec.N))
        blocks.append(ScoreBlock(f"q{q:04d}", rids, raw, normalize_block(raw), manifest,
                                 labels=labels, answer_keys=keys))
        latent.append(verdicts)
    return Batch(tuple(blocks), manifest), latent


def gen_tci_binary(spec, return_latent=False):
    """Binary verdicts, conditionally independent given the label."""
    if spec.value_kind != "binary":
        raise ValueError("gen_tci_binary needs value_kind='binary'")
    if spec.dependence is not None:
        raise ValueError("gen_tci_binary does not inject dependence; use generate()")
    batch, latent = _generate(spec)
    return (batch, latent) if return_latent else batch


def gen_real_valued(spec, return_latent=False):
    """Real scores whose thresholding at ``tau_true`` gives the latent verdicts."""
    if spec.value_kind != "real":
        raise ValueError("gen_real_valued needs value_kind='real'")
    batch, latent = _generate(spec)
    return (batch, latent) if return_latent else batch


def generate(spec, return_latent=False):
    batch, latent = _generate(spec)
    return (batch, latent) if return_latent else batch


def oracle_posterior(verdicts, spec=None, psi=None, eta=None, b=None):
    """Exact P(y=+1 | verdicts) from explicit likelihood tables.

    Pass either a dependence-free ``spec`` or ``psi``/``eta``/``b`` directly.
    """
    if spec is not None:
        if spec.dependence is not None:
            raise ValueError("oracle posterior is only defined without injected dependence")
        psi, eta, b = spec.psi, spec.eta, spec.b
    v = np.asarray(verdicts)
    psi, eta = np.asarray(psi, float), np.asarray(eta, float)
    # rows: true label (+1, -1); columns: verdict (+1, -1)
    like_pos = 1.0
    like_neg = 1.0
    for j in range(v.shape[-1]):
        table = np.array([[psi[j], 1.0 - psi[j]],
                          [1.0 - eta[j], eta[j]]])
        col = 0 if v[j] > 0 else 1
        like_pos *= table[0, col]
        like_neg *= table[1, col]
    prior_pos, prior_neg = (1.0 + b) / 2.0, (1.0 - b) / 2.0
    return prior_pos * like_pos / (prior_pos * like_pos + prior_neg * like_neg)


def population_moments(psi, eta, b):
    """Exact central moments of +/-1 verifiers independent given the label."""
    psi, eta = np.asarray(psi, float), np.asarray(eta, float)
    m = psi.shape[0]
    p = (1.0 + b) / 2.0
    cond_mean = {1: 2.0 * psi - 1.0, -1: 1.0 - 2.0 * eta}
    mu = p * cond_mean[1] + (1.0 - p) * cond_mean[-1]
    sigma = np.zeros((m, m))
    T = np.zeros((m, m, m))
    idx = np.arange(m)
    for y, w in ((1, p), (-1, 1.0 - p)):
        d = cond_mean[y] - mu
        # E[(v - mu)^2 | y] and E[(v - mu)^3 | y] for v in {+1, -1}
        s2 = 1.0 - 2.0 * mu * cond_mean[y] + mu ** 2
        s3 = cond_mean[y] - 3.0 * mu + 3.0 * mu ** 2 * cond_mean[y] - mu ** 3
        G2 = np.outer(d, d)
        G2[idx, idx] = s2
        G3 = np.einsum("i,j,k->ijk", d, d, d)
        for j in range(m):
            G3[j, j, :] = s2[j] * d
            G3[j, :, j] = s2[j] * d
            G3[:, j, j] = s2[j] * d
            G3[j, j, j] = s3[j]
        sigma += w * G2
        T += w * G3
    return MomentSet(mu, sigma, T, np.inf)


def analytic_moments(spec):
    if spec.dependence is not None:
        raise ValueError("analytic moments assume no injected dependence")
    return population_moments(spec.psi, spec.eta, spec.b)

