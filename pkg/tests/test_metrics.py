import json
import math

import numpy as np
import pytest

from fuse_ensemble.baselines import naive_ensemble, pass1
from fuse_ensemble.exceptions import PartialResultsError, UnavailableBaselineError
from fuse_ensemble.metrics import (evaluate, expected_balanced_accuracy, resolve_ks,
                                   tie_broken_accuracy)
from fuse_ensemble.selection import SelectionResult
from fuse_ensemble.synth import SynthSpec, generate

from conftest import make_batch, make_block


def _pick(block, rows, method="m"):
    return SelectionResult(block.query_id, tuple(rows), np.zeros(block.n_responses), method)


def _batch(n_queries=50, N=12, seed=0):
    spec = SynthSpec(m=4, N=N, psi=[0.8, 0.7, 0.6, 0.75], eta=[0.7, 0.8, 0.65, 0.7],
                     n_queries=n_queries, b=-0.2, b_spread=0.5, seed=seed)
    return generate(spec)


def test_tie_broken_examples():
    blk = make_block(np.zeros((3, 1)), labels=[-1, 1, -1])
    assert tie_broken_accuracy(_pick(blk, (1, 2)), blk.labels) == 0.5
    assert tie_broken_accuracy(_pick(blk, (1,)), blk.labels) == 1.0
    assert tie_broken_accuracy(pass1(blk), blk.labels) == pytest.approx(1 / 3)
    with pytest.raises(UnavailableBaselineError):
        tie_broken_accuracy(_pick(blk, (0,)), None)


def test_resolve_ks():
    assert resolve_ks([1, 5, "N"], 3) == [1, 3, 3]
    assert resolve_ks([2, "N"], 10) == [2, 10]


def test_expected_balanced_accuracy_binary_matches_counts():
    y = np.array([1, 1, 1, -1, -1])
    v = np.array([1, 1, -1, -1, 1])
    # tpr 2/3, tnr 1/2
    assert expected_balanced_accuracy(v, y)[0] == pytest.approx((2 / 3 + 1 / 2) / 2)
    with pytest.raises(ValueError):
        expected_balanced_accuracy(v, np.ones(5))


def test_perfect_selector():
    batch = _batch()
    perfect = {"oracle": [_pick(b, [int(np.argmax(b.labels))]) for b in batch.blocks]}
    rep = evaluate(batch, perfect)
    has_correct = np.mean([np.any(b.labels > 0) for b in batch.blocks])
    assert rep.methods["oracle"]["selection_accuracy"] == pytest.approx(has_correct)
    assert rep.methods["oracle"]["pass_at_k"]["N"] == pytest.approx(has_correct)


def test_random_selector_within_three_sigma():
    batch = _batch(n_queries=400, seed=1)
    rng = np.random.default_rng(2)
    picks = [_pick(b, [int(rng.integers(b.n_responses))]) for b in batch.blocks]
    acc = evaluate(batch, {"random": picks}).methods["random"]["selection_accuracy"]
    frac = np.array([np.mean(b.labels > 0) for b in batch.blocks])
    sigma = math.sqrt(np.sum(frac * (1 - frac))) / len(frac)
    assert abs(acc - frac.mean()) < 3 * sigma


def test_accuracy_bounded_by_pass_at_n_and_pass_monotone():
    batch = _batch(seed=3)
    rep = evaluate(batch, {"naive": [naive_ensemble(b) for b in batch.blocks]},
                   ks=[1, 2, 4, 8, "N"])
    m = rep.methods["naive"]
    assert m["selection_accuracy"] <= m["pass_at_k"]["N"] + 1e-12
    seq = [m["pass_at_k"][k] for k in ("1", "2", "4", "8", "N")]
    assert all(a <= b + 1e-12 for a, b in zip(seq, seq[1:]))
    assert m["pass_at_1"] == pytest.approx(m["pass_at_k"]["1"])
    for row in rep.queries:
        assert row["pass_at_k"]["N"] == float(row["correct"] > 0)


def test_partial_results_rejected():
    batch = _batch(n_queries=3)
    results = [naive_ensemble(b) for b in batch.blocks[:2]]
    with pytest.raises(PartialResultsError) as info:
        evaluate(batch, {"naive": results})
    assert info.value.missing == [batch.query_ids[2]]


def test_label_free_batch_rejected():
    batch = make_batch([make_block(np.ones((3, 2)))])
    with pytest.raises(UnavailableBaselineError):
        evaluate(batch, {})


def test_fallback_rate_and_outputs():
    batch = _batch(n_queries=4)
    res = [naive_ensemble(b) for b in batch.blocks]
    tagged = [SelectionResult(r.query_id, r.selected, r.scores, "fuse",
                              "naive-ensemble" if i % 2 else None) for i, r in enumerate(res)]
    rep = evaluate(batch, {"naive": res, "fuse": tagged}, config_hash="abc123")
    assert rep.methods["fuse"]["fallback_rate"] == 0.5
    assert rep.methods["naive"]["fallback_rate"] == 0.0
    assert rep.methods["naive"]["selection_accuracy"] == rep.methods["fuse"]["selection_accuracy"]
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["ks"] == ["1", "5", "N"] and d["config_hash"] == "abc123"
    assert set(d["methods"]) == {"naive", "fuse"} and len(d["queries"]) == 4
    table = rep.to_table().splitlines()
    assert "pass@5" in table[1] and "pass@N" in table[1] and table[1].count("pass@1") == 1
    assert table[3].startswith("naive") and table[4].startswith("fuse")
