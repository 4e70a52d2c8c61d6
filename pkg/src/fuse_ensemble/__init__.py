"""Fully unsupervised ensembling of verifier scores for best-of-N selection."""

from .baselines import (dawid_skene, gmm_em, jci_mle, majority_vote, naive_bayes,
                        naive_ensemble, oracle_best_verifier, pass_at_k, supervised_logistic)
from .config import RunConfig
from .dataset import Batch, Manifest, ScoreBlock, VerifierSpec, load_dataset, write_dataset
from .ensemble import (EnsembleModel, FUSESelector, drop_verifiers, estimated_accuracy,
                       fit_weighted_logistic, run_fuse, select)
from .metrics import EvalReport, evaluate, tie_broken_accuracy
from .moments import (MomentSet, VerifierQuality, empirical_moments, estimate_verifier_quality,
                      fit_rank_one_sym, invert_class_imbalance, resolve_sign)
from .posterior import PseudoLabels, aggregate_posteriors, triplet_posterior
from .selection import SelectionResult
from .synth import SynthSpec, gen_real_valued, gen_tci_binary, generate, inject_dependence
from .tci import ThresholdBinarizer, optimize_thresholds, tci_statistic

__version__ = "0.1.0"

__all__ = [
    "Batch", "EnsembleModel", "EvalReport", "FUSESelector", "Manifest", "MomentSet",
    "PseudoLabels", "RunConfig", "ScoreBlock", "SelectionResult", "SynthSpec",
    "ThresholdBinarizer", "VerifierQuality", "VerifierSpec", "aggregate_posteriors",
    "dawid_skene", "drop_verifiers", "empirical_moments", "estimate_verifier_quality",
    "estimated_accuracy", "evaluate", "fit_rank_one_sym", "fit_weighted_logistic",
    "gen_real_valued", "gen_tci_binary", "generate", "gmm_em", "inject_dependence",
    "invert_class_imbalance", "jci_mle", "load_dataset", "majority_vote", "naive_bayes",
    "naive_ensemble", "optimize_thresholds", "oracle_best_verifier", "pass_at_k",
    "resolve_sign", "run_fuse", "select", "supervised_logistic", "tci_statistic",
    "tie_broken_accuracy", "triplet_posterior", "write_dataset",
]
