"""Registry of selection methods addressable by a stable string id.

Every entry maps ``(batch, config)`` to one selection result per block, in
block order.
"""

from . import baselines
from .ensemble import run_fuse


def _per_block(fn):
    def run(batch, config):
        return [fn(b) for b in batch.blocks]
    return run


def _pass1(batch, config):
    return [baselines.pass1(b, literal=config.pass1_literal) for b in batch.blocks]


def _split(batch, config):
    return baselines.make_split(batch, config.label_fraction, config.seed)


def _jci(batch, config):
    return baselines.jci_ensemble(batch, per_query=config.mode == "query",
                                  compat=config.eq9_compat)


METHODS = {
    "fuse": run_fuse,
    "naive_ensemble": _per_block(baselines.naive_ensemble),
    "majority_vote": _per_block(baselines.majority_vote),
    "pass1": _pass1,
    "verdict_vote": _per_block(baselines.verdict_vote),
    "jci": _jci,
    "dawid_skene": lambda batch, config: baselines.dawid_skene(batch),
    "gmm": lambda batch, config: baselines.gmm_em(batch),
    "naive_bayes": lambda batch, config: baselines.naive_bayes(batch, _split(batch, config)),
    "logistic": lambda batch, config: baselines.supervised_logistic(batch, _split(batch, config)),
    "oracle_best_verifier": lambda batch, config: baselines.oracle_best_verifier(batch),
}


def run_method(name, batch, config):
    try:
        fn = METHODS[name]
    except KeyError:
        raise KeyError(f"unknown method {name!r}; known: {sorted(METHODS)}") from None
    return fn(batch, config)
