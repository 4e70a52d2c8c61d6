"""Per-query selection results shared by FUSE and the baselines."""

from dataclasses import dataclass

import numpy as np

from ._validation import argmax_set


@dataclass(frozen=True, eq=False)
class SelectionResult:
    """Rows chosen for one query.

    ``selected`` is the full tie set of row indices (0-based) attaining the
    maximum ranking value; ``scores`` are the per-row values reported for the
    method (probabilities where the method produces them).
    """

    query_id: str
    selected: tuple
    scores: np.ndarray
    method: str = ""
    fallback: str = None

    def __post_init__(self):
        if not self.selected:
            raise ValueError(f"query {self.query_id!r}: empty selection")

    def to_dict(self, response_ids=None, include_scores=False):
        out = {"query_id": self.query_id, "method": self.method,
               "selected": [int(i) for i in self.selected]}
        if response_ids is not None:
            out["selected_ids"] = [response_ids[i] for i in self.selected]
        if self.fallback:
            out["fallback"] = self.fallback
        if include_scores:
            out["scores"] = [float(repr(float(s))) for s in self.scores]
        return out


def select_by(query_id, ranking, method, scores=None, fallback=None):
    """Build a result selecting ``argmax(ranking)`` (all ties kept)."""
    ranking = np.asarray(ranking, dtype=np.float64)
    scores = ranking if scores is None else np.asarray(scores, dtype=np.float64)
    return SelectionResult(query_id, argmax_set(ranking), scores, method, fallback)
