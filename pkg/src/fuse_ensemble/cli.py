"""Command-line entry point: ``fuse synth | run | eval | inspect``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 partial
results (some methods skipped).
"""

import argparse
import json
import os
import sys

import numpy as np

from .config import ENV_PREFIX, RunConfig
from .dataset import load_dataset, write_dataset
from .exceptions import (ConfigError, DatasetError, FuseError, PartialResultsError,
                         UnavailableBaselineError)
from .methods import METHODS, run_method
from .metrics import evaluate
from .moments import estimate_verifier_quality
from .selection import SelectionResult
from .synth import SynthSpec, generate
from .tci import apply_transform

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 2, 3, 4


def _dump(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _parse_ks(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok == "N":
            out.append("N")
            continue
        try:
            out.append(int(tok))
        except ValueError:
            raise ConfigError(f"bad k value {tok!r}; use positive ints or N") from None
    return out


def _load_config(args):
    data = {}
    if getattr(args, "config", None):
        data = RunConfig.load(args.config).to_dict()
    overrides = {
        "manifest": args.manifest, "records": args.records,
        "output": getattr(args, "output", None), "mode": getattr(args, "mode", None),
        "workers": getattr(args, "workers", None), "seed": getattr(args, "seed", None),
    }
    if getattr(args, "methods", None):
        overrides["methods"] = [m.strip() for m in args.methods.split(",") if m.strip()]
    if getattr(args, "ks", None):
        overrides["ks"] = _parse_ks(args.ks)
    for flag in ("pass1_literal", "eq9_compat", "tci_index_alt", "global_norm"):
        if getattr(args, flag, False):
            overrides[flag] = True
    data.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig.from_dict(data).with_env()
    if not cfg.manifest or not cfg.records:
        raise ConfigError("dataset paths missing: pass --manifest and --records "
                          f"(or set {ENV_PREFIX}MANIFEST / {ENV_PREFIX}RECORDS)")
    return cfg


def _load(cfg):
    return load_dataset(cfg.manifest, cfg.records, global_norm=cfg.global_norm)


def cmd_synth(args):
    try:
        with open(args.spec, encoding="utf-8") as fh:
            spec = SynthSpec.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad synth spec {args.spec}: {exc}") from exc
    batch = generate(spec)
    write_dataset(batch, args.out)
    print(f"wrote {len(batch)} queries to {args.out}", file=sys.stderr)
    return EXIT_OK


def selection_lines(batch, cfg, include_scores=False):
    """JSON lines for every requested method, plus the ids of skipped methods."""
    lines, skipped = [], []
    for name in cfg.method_list:
        try:
            results = run_method(name, batch, cfg)
        except (UnavailableBaselineError, FuseError) as exc:
            print(f"skipping {name}: {exc}", file=sys.stderr)
            skipped.append(name)
            continue
        for b, r in zip(batch.blocks, results):
            rec = r.to_dict(response_ids=b.response_ids, include_scores=include_scores)
            rec["method"] = name
            lines.append(_dump(rec))
    return lines, skipped


def cmd_run(args):
    cfg = _load_config(args)
    batch = _load(cfg)
    lines, skipped = selection_lines(batch, cfg, include_scores=args.scores)
    _write_text(cfg.output, "".join(line + "\n" for line in lines))
    return EXIT_PARTIAL if skipped else EXIT_OK


def read_selections(path, batch):
    """Selection results grouped by method from a ``run`` output file."""
    by_method = {}
    blocks = {b.query_id: b for b in batch.blocks}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                qid, sel = rec["query_id"], tuple(int(i) for i in rec["selected"])
                method = rec["method"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"{path} line {lineno}: bad selection record ({exc})") from exc
            if qid not in blocks:
                raise DatasetError(f"{path} line {lineno}: unknown query {qid!r}")
            n = blocks[qid].n_responses
            if not sel or min(sel) < 0 or max(sel) >= n:
                raise DatasetError(f"{path} line {lineno}: selection out of range for {qid!r}")
            scores = np.asarray(rec.get("scores", np.zeros(n)), dtype=np.float64)
            by_method.setdefault(method, []).append(
                SelectionResult(qid, sel, scores, method, rec.get("fallback")))
    return by_method


def cmd_eval(args):
    cfg = _load_config(args)
    batch = _load(cfg)
    results = read_selections(args.selections, batch)
    report = evaluate(batch, results, cfg.ks, config_hash=cfg.hash())
    sys.stdout.write(report.to_table())
    if args.json:
        _write_text(args.json, _dump(report.to_dict()) + "\n")
    return EXIT_OK


def _tolist(a):
    return None if a is None else np.asarray(a, dtype=np.float64).tolist()


def inspect_block(block, cfg):
    """Diagnostics of the query-mode pipeline on one block."""
    from .ensemble import FUSESelector

    est = FUSESelector(clip_delta=cfg.clip_delta, reg=cfg.reg, max_sweeps=cfg.max_sweeps,
                       index_set=cfg.index_set).fit(block.norm_scores)
    out = {"query_id": block.query_id, "n_responses": block.n_responses,
           "verifier_ids": list(block.manifest.verifier_ids),
           "fallback": est.fallback_, "fallback_reason": est.fallback_reason_,
           "tci_fallback": None, "thresholds": None, "active": None, "tci_trace": [],
           "tci_statistic": None, "mu": None, "u": None, "lambda3": None, "b_hat": None,
           "psi": None, "eta": None, "clipped": None, "kept": None, "p_hat_histogram": None,
           "weights": None, "intercept": None}
    spec = est.spec_
    if spec is not None:
        out.update(tci_fallback=bool(spec.fallback),
                   thresholds=[None if np.isnan(t) else float(t) for t in spec.tau],
                   active=spec.active.tolist(), tci_trace=[float(s) for s in spec.trace],
                   tci_statistic=float(est.tci_report_.statistic))
        V = apply_transform(block.norm_scores, spec)
        try:
            _, fit, mom = estimate_verifier_quality(V[:, spec.active], return_fit=True)
            out.update(mu=_tolist(mom.mu), u=_tolist(fit.u), lambda3=float(fit.lambda3),
                       b_hat=float(fit.b_hat))
        except FuseError:
            pass
    if est.quality_ is not None:
        out.update(psi=_tolist(est.quality_.psi), eta=_tolist(est.quality_.eta),
                   b_hat=float(est.quality_.b_hat), kept=est.mask_.tolist(),
                   clipped=est.quality_.clipped)
    if est.pseudo_labels_ is not None:
        counts, edges = np.histogram(est.pseudo_labels_.p_hat, bins=10, range=(0.0, 1.0))
        out["p_hat_histogram"] = {"counts": counts.tolist(), "edges": edges.tolist()}
    if est.model_ is not None:
        out.update(weights=_tolist(est.model_.weights), intercept=float(est.model_.intercept))
    return out


def cmd_inspect(args):
    cfg = _load_config(args)
    batch = _load(cfg)
    try:
        block = batch.block(args.query_id)
    except KeyError:
        raise DatasetError(f"unknown query id {args.query_id!r}") from None
    _write_text(args.out, json.dumps(inspect_block(block, cfg), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _dataset_args(p, config=True):
    p.add_argument("--manifest", help="manifest JSON (env FUSE_MANIFEST)")
    p.add_argument("--records", help="records JSONL, optionally gzipped (env FUSE_RECORDS)")
    if config:
        p.add_argument("--config", help="RunConfig JSON file")
    p.add_argument("--global-norm", dest="global_norm", action="store_true",
                   help="min-max normalize over the whole batch instead of per query")


def build_parser():
    parser = argparse.ArgumentParser(prog="fuse", description="Unsupervised verifier ensembling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("spec", help="JSON file with SynthSpec fields")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="select responses with one or more methods")
    _dataset_args(p)
    p.add_argument("--output", help="selections JSONL (default stdout; env FUSE_OUTPUT)")
    p.add_argument("--mode", choices=("query", "batched"))
    p.add_argument("--methods", help=f"comma-separated ids from: {', '.join(METHODS)}")
    p.add_argument("--workers", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scores", action="store_true", help="include per-row scores")
    p.add_argument("--pass1-literal", dest="pass1_literal", action="store_true")
    p.add_argument("--eq9-compat", dest="eq9_compat", action="store_true")
    p.add_argument("--tci-index-alt", dest="tci_index_alt", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score selections against labels")
    _dataset_args(p)
    p.add_argument("selections", help="output of `fuse run`")
    p.add_argument("--ks", help="comma-separated k values, N for all responses")
    p.add_argument("--json", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="dump pipeline diagnostics for one query")
    _dataset_args(p)
    p.add_argument("query_id")
    p.add_argument("--out", help="output JSON (default stdout)")
    p.add_argument("--tci-index-alt", dest="tci_index_alt", action="store_true")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, UnavailableBaselineError, PartialResultsError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
