"""Selection accuracy, pass@k and comparison reports."""

from dataclasses import dataclass, field

import numpy as np

from .baselines import pass_at_k
from .exceptions import PartialResultsError, UnavailableBaselineError


def tie_broken_accuracy(result, labels):
    """Fraction of the selected (tied) rows that are correct."""
    if labels is None:
        raise UnavailableBaselineError(f"query {result.query_id!r} has no labels")
    labels = np.asarray(labels)
    sel = np.asarray(result.selected, dtype=int)
    return float((labels[sel] > 0).mean())


def expected_balanced_accuracy(scores, labels):
    """Per-column ``(psi + eta) / 2`` with ``psi = E[(1 + v) / 2 | y = +1]`` and
    ``eta = E[(1 - v) / 2 | y = -1]`` for scores in [-1, 1]."""
    X = np.asarray(scores, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(labels)
    pos, neg = y > 0, y < 0
    if not pos.any() or not neg.any():
        raise ValueError("balanced accuracy needs both classes")
    psi = ((1.0 + X[pos]) / 2.0).mean(axis=0)
    eta = ((1.0 - X[neg]) / 2.0).mean(axis=0)
    return (psi + eta) / 2.0


def resolve_ks(ks, n):
    """Concrete k values for a query with ``n`` responses (``"N"`` means n)."""
    return [n if k == "N" else min(int(k), n) for k in ks]


def _k_label(k):
    return "N" if k == "N" else str(int(k))


@dataclass
class EvalReport:
    dataset_id: str
    config_hash: str
    ks: list
    methods: dict = field(default_factory=dict)
    queries: list = field(default_factory=list)

    def to_dict(self):
        return {"dataset_id": self.dataset_id, "config_hash": self.config_hash,
                "ks": [_k_label(k) for k in self.ks], "methods": self.methods,
                "queries": self.queries}

    def to_table(self):
        ks = [_k_label(k) for k in self.ks if _k_label(k) != "1"]
        head = ["method", "accuracy", "pass@1"] + [f"pass@{k}" for k in ks] + ["fallback"]
        rows = [head]
        for name, m in self.methods.items():
            rows.append([name, f"{m['selection_accuracy']:.4f}", f"{m['pass_at_1']:.4f}"]
                        + [f"{m['pass_at_k'][k]:.4f}" for k in ks]
                        + [f"{m['fallback_rate']:.4f}"])
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                           for i, (c, w) in enumerate(zip(r, widths))) for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        title = f"dataset {self.dataset_id}  config {self.config_hash[:12]}"
        return "\n".join([title] + lines) + "\n"


def evaluate(batch, results_by_method, ks=(1, 5, "N"), dataset_id=None, config_hash=""):
    """Aggregate per-query accuracy and pass@k for every method.

    ``results_by_method`` maps a method id to its selection results (any
    order).  Every method must cover every query of ``batch``.
    """
    if not batch.has_labels:
        raise UnavailableBaselineError("evaluation needs ground-truth labels")
    ks = list(ks)
    qids = batch.query_ids
    pass_rows = []
    for b in batch.blocks:
        n = b.n_responses
        c = int((np.asarray(b.labels) > 0).sum())
        pk = {_k_label(k): pass_at_k(c, n, kk) for k, kk in zip(ks, resolve_ks(ks, n))}
        pass_rows.append({"query_id": b.query_id, "n": n, "correct": c,
                          "pass_at_1": c / n, "pass_at_k": pk})
    methods, per_query = {}, [dict(r, accuracy={}, fallback={}) for r in pass_rows]
    for name, results in results_by_method.items():
        by_q = {r.query_id: r for r in results}
        missing = [q for q in qids if q not in by_q]
        if missing:
            raise PartialResultsError(
                f"method {name!r} has no result for queries {missing}", missing)
        accs, fbs = [], []
        for row, b in zip(per_query, batch.blocks):
            r = by_q[b.query_id]
            a = tie_broken_accuracy(r, b.labels)
            row["accuracy"][name] = a
            row["fallback"][name] = r.fallback
            accs.append(a)
            fbs.append(r.fallback is not None)
        methods[name] = {
            "selection_accuracy": float(np.mean(accs)),
            "selection_accuracy_se": float(np.std(accs, ddof=1) / np.sqrt(len(accs)))
            if len(accs) > 1 else 0.0,
            "pass_at_1": float(np.mean([r["pass_at_1"] for r in pass_rows])),
            "pass_at_k": {_k_label(k): float(np.mean([r["pass_at_k"][_k_label(k)]
                                                      for r in pass_rows])) for k in ks},
            "fallback_rate": float(np.mean(fbs)),
        }
    dataset_id = batch.manifest.dataset_id if dataset_id is None else dataset_id
    return EvalReport(dataset_id, config_hash, ks, methods, per_query)
