from itertools import product
from types import SimpleNamespace

import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from fuse_ensemble.baselines import (LabeledSplit, balanced_accuracy, dawid_skene, dawid_skene_em,
                                     gaussian_mixture_em, gmm_em, jci_ensemble, jci_mle,
                                     majority_vote, make_split, median_binarize, naive_bayes,
                                     naive_bayes_fit, naive_ensemble, oracle_best_verifier, pass1,
                                     pass_at_k, supervised_logistic, verdict_vote)
from fuse_ensemble.exceptions import DegenerateError, UnavailableBaselineError
from fuse_ensemble.synth import SynthSpec, generate

from conftest import make_batch, make_block


def _q(psi, eta, b=0.0):
    return SimpleNamespace(psi=np.asarray(psi, float), eta=np.asarray(eta, float), b_hat=b)


def test_majority_vote_examples():
    assert majority_vote(make_block(np.zeros((3, 1)), answer_keys="AAB")).selected == (0, 1)
    assert majority_vote(make_block(np.zeros((2, 1)), answer_keys="AB")).selected == (0, 1)
    assert majority_vote(make_block(np.zeros((5, 1)), answer_keys="ABCBA")).selected == (
        0, 1, 3, 4)
    with pytest.raises(UnavailableBaselineError):
        majority_vote(make_block(np.zeros((2, 1))))


def test_naive_ensemble_examples():
    blk = make_block([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0]])
    res = naive_ensemble(blk)
    assert res.selected == (0,)
    np.testing.assert_array_equal(res.scores, [1.0, 0.0, -1.0])
    assert naive_ensemble(make_block(np.ones((3, 2)))).selected == (0, 1, 2)
    assert naive_ensemble(make_block([[0.2], [0.9], [0.1]])).selected == (1,)


def test_pass_at_k_examples():
    assert abs(pass_at_k(2, 4, 2) - 5 / 6) < 1e-15
    assert all(pass_at_k(0, 6, k) == 0.0 for k in range(1, 7))
    assert pass_at_k(1, 5, 5) == 1.0 and pass_at_k(0, 5, 5) == 0.0
    assert pass_at_k(3, 10, 1) == pytest.approx(0.3, abs=1e-15)
    for bad in ((1, 4, 5), (1, 4, 0), (5, 4, 1), (-1, 4, 1)):
        with pytest.raises(ValueError):
            pass_at_k(*bad)


def test_pass1_rules():
    blk = make_block(np.arange(4.0)[:, None], labels=[1, -1, -1, 1])
    assert pass1(blk).selected == (0, 1, 2, 3)
    assert pass1(blk, literal=True).selected == (0,)


def test_median_binarize_top_half():
    np.testing.assert_array_equal(median_binarize([[1.0], [2.0], [3.0], [4.0]])[:, 0],
                                  [-1, -1, 1, 1])
    np.testing.assert_array_equal(median_binarize([[1.0], [1.0], [1.0]])[:, 0], [-1, -1, -1])


def test_verdict_vote():
    # medians 0.2, 0.8, 0.2: verdict sums (-1, 1, -3)
    blk = make_block([[0.9, 0.8, 0.1], [0.1, 0.9, 0.9], [0.2, 0.1, 0.2]])
    res = verdict_vote(blk)
    assert res.selected == (1,)
    np.testing.assert_array_equal(res.scores, [-1, 1, -3])


# --- naive Bayes -----------------------------------------------------------

def test_naive_bayes_aligned_verifier():
    y = np.array([1, -1, 1, -1, 1, -1])
    train = make_block(np.c_[y * 1.0, np.zeros(6)], "train", labels=y)
    test = make_block(np.c_[[0.9, 0.1, 0.8, 0.2], np.zeros(4)], "test",
                      labels=[1, -1, 1, -1])
    res = naive_bayes(make_batch([train, test]), LabeledSplit(frozenset({"train"})))
    assert res[1].selected == (0, 2)


def test_naive_bayes_uninformative_is_full_tie():
    y = np.array([1, 1, -1, -1])
    V = np.array([[1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, 1.0]])
    ratio = naive_bayes_fit(V, y)
    out = ratio(np.array(list(product((-1.0, 1.0), repeat=2))))
    assert np.ptp(out) < 1e-15


def test_naive_bayes_hand_computed():
    # 3 positives, 2 negatives
    V = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1], [1, -1]], dtype=float)
    y = np.array([1, 1, 1, -1, -1])
    ratio = naive_bayes_fit(V, y)
    # counts of +1 verdicts: v1 pos 2/3, neg 1/2; v2 pos 2/3, neg 0/2; add-one smoothing
    p1p, p1n = (2 + 1) / 5, (1 + 1) / 4
    p2p, p2n = (2 + 1) / 5, (0 + 1) / 4
    prior = np.log(4 / 3)
    expect = {
        (1, 1): prior + np.log(p1p / p1n) + np.log(p2p / p2n),
        (1, -1): prior + np.log(p1p / p1n) + np.log((1 - p2p) / (1 - p2n)),
        (-1, 1): prior + np.log((1 - p1p) / (1 - p1n)) + np.log(p2p / p2n),
        (-1, -1): prior + np.log((1 - p1p) / (1 - p1n)) + np.log((1 - p2p) / (1 - p2n)),
    }
    for row, val in expect.items():
        assert ratio(np.array([row], float))[0] == pytest.approx(val, abs=1e-14)


def test_supervised_need_labels():
    blk = make_block(np.random.default_rng(0).normal(size=(4, 2)))
    batch = make_batch([blk])
    with pytest.raises(UnavailableBaselineError):
        naive_bayes(batch, LabeledSplit(frozenset({"q0"})))
    with pytest.raises(UnavailableBaselineError):
        supervised_logistic(batch, LabeledSplit(frozenset({"q0"})))
    labelled = make_batch([make_block(blk.raw_scores, labels=[1, -1, 1, -1])])
    with pytest.raises(UnavailableBaselineError):
        naive_bayes(labelled, LabeledSplit(frozenset()))


# --- supervised logistic -----------------------------------------------------

def test_logistic_separable_feature():
    y = np.array([1, -1, 1, -1, 1, -1])
    train = make_block(np.c_[np.where(y > 0, 2.0, 0.0) + np.arange(6) * 0.01, np.zeros(6)],
                       "train", labels=y)
    test = make_block(np.c_[[0.1, 0.7, 0.3], np.zeros(3)], "test", labels=[-1, 1, -1])
    res = supervised_logistic(make_batch([train, test]), LabeledSplit(frozenset({"train"})))
    assert res[1].selected == (1,)


def test_logistic_single_class():
    blk = make_block(np.random.default_rng(0).normal(size=(4, 2)), labels=[1, 1, 1, 1])
    with pytest.raises(DegenerateError):
        supervised_logistic(make_batch([blk]), LabeledSplit(frozenset({"q0"})))


def test_logistic_matches_sklearn():
    rng = np.random.default_rng(4)
    raw = rng.normal(size=(120, 4))
    y = np.where(raw @ [1.0, -0.5, 0.3, 0.0] + 0.5 * rng.normal(size=120) > 0, 1, -1)
    blk = make_block(raw, labels=y)
    res = supervised_logistic(make_batch([blk]), LabeledSplit(frozenset({"q0"})), reg=0.5)
    ref = LogisticRegression(C=1.0, tol=1e-12, max_iter=10000).fit(blk.norm_scores, y)
    expect = blk.norm_scores @ ref.coef_[0] + ref.intercept_[0]
    np.testing.assert_allclose(np.log(res[0].scores / (1 - res[0].scores)), expect, atol=1e-6)


def test_make_split_is_seeded():
    batch = generate(SynthSpec(m=3, N=4, psi=[0.8] * 3, eta=[0.8] * 3, n_queries=40))
    a, b = make_split(batch, seed=1), make_split(batch, seed=1)
    assert a == b and len(a.train_query_ids) == 2
    assert len(make_split(batch, fraction=0.0).train_query_ids) == 1


# --- Dawid-Skene ---------------------------------------------------------------

def test_dawid_skene_identical_columns():
    col = np.array([0.9, 0.1, 0.5, 0.95, 0.2])
    blk = make_block(np.tile(col[:, None], (1, 3)))
    res = dawid_skene(make_batch([blk]))[0]
    V = median_binarize(blk.norm_scores)
    assert res.selected == tuple(np.flatnonzero(V[:, 0] == V[:, 0].max()))
    assert np.all((res.scores > 0.9) | (res.scores < 0.1))


def test_dawid_skene_recovers_jci_parameters():
    psi = np.array([0.9, 0.8, 0.75, 0.7, 0.85])
    spec = SynthSpec(m=5, N=5000, psi=psi, eta=psi, b=0.0, seed=5)
    V = generate(spec).blocks[0].raw_scores
    fit = dawid_skene_em(V)
    np.testing.assert_allclose(fit["psi"], psi, atol=0.05)
    np.testing.assert_allclose(fit["eta"], psi, atol=0.05)
    assert np.all(np.diff(fit["objective"]) >= -1e-9 * np.abs(fit["objective"][:-1]))


def test_dawid_skene_single_verifier_follows_it():
    v = np.array([[1.0], [-1.0], [1.0], [-1.0], [-1.0]])
    flat = dawid_skene_em(v, pseudocount=0.0)
    np.testing.assert_array_equal(flat["posterior"], (v[:, 0] > 0).astype(float))
    # with the default pseudo-counts the fit is nearly flat but keeps the verifier's order
    fit = dawid_skene_em(v)
    up, down = fit["log_odds"][v[:, 0] > 0], fit["log_odds"][v[:, 0] < 0]
    assert up.min() > down.max()


# --- Gaussian mixture ---------------------------------------------------------

def test_gmm_separated_clusters():
    rng = np.random.default_rng(6)
    hi = rng.normal(0.8, 0.03, (20, 2))
    lo = rng.normal(-0.8, 0.03, (20, 2))
    X = np.vstack([lo, hi])
    fit = gaussian_mixture_em(X)
    r = fit["responsibility"]
    assert np.all(r[20:] > 1 - 1e-6) and np.all(r[:20] < 1e-6)
    blk = make_block(X)
    res = gmm_em(make_batch([blk]))[0]
    assert set(res.selected) <= set(range(20, 40))


def test_gmm_identical_rows_full_tie():
    blk = make_block(np.ones((6, 3)) * 0.3)
    res = gmm_em(make_batch([blk]))[0]
    assert res.selected == tuple(range(6))
    np.testing.assert_allclose(res.scores, 0.5)


def test_gmm_objective_nondecreasing():
    rng = np.random.default_rng(7)
    y = rng.random(400) < 0.4
    X = np.where(y[:, None], 0.4, -0.2) + rng.normal(0, 0.3, (400, 3)) @ np.array(
        [[1.0, 0.3, 0.0], [0.0, 1.0, 0.4], [0.0, 0.0, 1.0]])
    fit = gaussian_mixture_em(X)
    obj = np.array(fit["objective"])
    assert fit["n_iter"] > 2
    assert np.all(np.diff(obj) >= -1e-9 * np.abs(obj[:-1]))
    assert np.mean((fit["responsibility"] > 0.5) == y) > 0.75


# --- JCI likelihood ratio ----------------------------------------------------

def test_jci_mle_symmetric_reduces_to_weighted_vote():
    psi = np.array([0.9, 0.7, 0.6])
    V = np.array(list(product((-1.0, 1.0), repeat=3)))
    score = jci_mle(V, _q(psi, psi))
    np.testing.assert_allclose(score, V @ np.log(psi / (1 - psi)), atol=1e-12)


def test_jci_mle_brute_force_single_verifier():
    for v in (1.0, -1.0):
        s = jci_mle(np.array([[v]]), _q([0.9], [0.6]))[0]
        like_pos = 0.9 if v > 0 else 0.1
        like_neg = 0.4 if v > 0 else 0.6
        assert s == pytest.approx(np.log(like_pos / like_neg), abs=1e-12)


def test_jci_mle_uninformative_full_tie():
    V = np.array(list(product((-1.0, 1.0), repeat=3)))
    assert np.ptp(jci_mle(V, _q([0.5] * 3, [0.5] * 3))) == 0.0


def test_jci_mle_compat_flag():
    psi, eta = np.array([0.9, 0.7]), np.array([0.6, 0.8])
    V = np.array([[1.0, -1.0]])
    c = np.log(psi * (1 - psi) / (eta * (1 - eta)))
    assert jci_mle(V, _q(psi, eta), compat=True)[0] == pytest.approx(V[0] @ c + c.sum())


def test_jci_equal_quality_matches_vote():
    rng = np.random.default_rng(8)
    V = np.where(rng.random((40, 5)) < 0.5, 1.0, -1.0)
    score = jci_mle(V, _q([0.8] * 5, [0.8] * 5))
    vote = V.sum(axis=1)
    assert np.array_equal(np.flatnonzero(score == score.max()), np.flatnonzero(vote == vote.max()))


def test_jci_ensemble_runs_and_falls_back():
    batch = generate(SynthSpec(m=5, N=200, psi=[0.85, 0.8, 0.75, 0.7, 0.8],
                               eta=[0.8, 0.75, 0.85, 0.7, 0.75], n_queries=2, b=0.2,
                               value_kind="real", seed=9))
    res = jci_ensemble(batch, per_query=False)
    assert [r.query_id for r in res] == list(batch.query_ids)
    assert all(r.fallback is None for r in res)
    tiny = make_batch([make_block(np.random.default_rng(0).normal(size=(4, 2)))])
    out = jci_ensemble(tiny)
    assert out[0].fallback == "naive-ensemble"
    assert out[0].selected == naive_ensemble(tiny.blocks[0]).selected


# --- oracle best verifier ----------------------------------------------------

def test_oracle_best_verifier_perfect_among_noise():
    rng = np.random.default_rng(10)
    y = np.where(rng.random(30) < 0.5, 1, -1)
    raw = np.c_[rng.normal(size=30), y + 0.01 * rng.normal(size=30), rng.normal(size=30)]
    blk = make_block(raw, labels=y)
    res = oracle_best_verifier(make_batch([blk]))[0]
    assert all(y[i] == 1 for i in res.selected)
    assert res.selected == (int(np.argmax(raw[:, 1])),)


def test_oracle_best_verifier_identical_columns_take_first():
    col = np.array([0.1, 0.5, 0.9, 0.3])
    blk = make_block(np.c_[col, col, col], labels=[-1, 1, 1, -1])
    batch = make_batch([blk])
    assert np.ptp(balanced_accuracy(median_binarize(blk.norm_scores), blk.labels)) == 0
    assert oracle_best_verifier(batch)[0].selected == (2,)


def test_oracle_best_verifier_matches_ground_truth():
    psi = np.array([0.6, 0.7, 0.95, 0.65])
    spec = SynthSpec(m=4, N=500, psi=psi, eta=psi, n_queries=4, seed=11)
    batch = generate(spec)
    ba = balanced_accuracy(np.vstack([b.raw_scores for b in batch.blocks]),
                           np.concatenate([b.labels for b in batch.blocks]))
    assert int(np.argmax(ba)) == 2
    res = oracle_best_verifier(batch)
    for blk, r in zip(batch.blocks, res):
        col = blk.norm_scores[:, 2]
        assert r.selected == tuple(np.flatnonzero(col == col.max()))
    with pytest.raises(UnavailableBaselineError):
        oracle_best_verifier(make_batch([make_block(np.ones((3, 2)))]))
