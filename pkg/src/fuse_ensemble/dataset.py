"""Score-matrix ingestion: manifests, per-query blocks and batched views.

A dataset is two files. The manifest is a JSON object::

    {"dataset_id": "gpqa-70b",
     "verifiers": [{"id": "rm1", "kind": "real", "range": [-5, 5]}, ...]}

and the records file holds one JSON object per line (optionally gzipped)::

    {"query_id": "q1", "response_id": "r003",
     "scores": {"rm1": 0.4, "judge": null}, "label": 1, "answer_key": "B"}

Missing scores (``null`` or an absent key) are imputed as raw 0 before the
per-block min-max rescaling to [-1, 1].
"""

import gzip
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DatasetError, DuplicateError, ParseError, ShapeError

VERIFIER_KINDS = ("binary", "discrete", "real")


@dataclass(frozen=True)
class VerifierSpec:
    verifier_id: str
    kind: str = "real"
    declared_range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if self.kind not in VERIFIER_KINDS:
            raise DatasetError(f"verifier {self.verifier_id!r}: unknown kind {self.kind!r}")
        lo, hi = self.declared_range
        if not lo < hi:
            raise DatasetError(f"verifier {self.verifier_id!r}: range needs lo < hi")


@dataclass(frozen=True)
class Manifest:
    verifiers: tuple
    dataset_id: str = "dataset"

    def __post_init__(self):
        ids = [v.verifier_id for v in self.verifiers]
        if len(set(ids)) != len(ids):
            raise DatasetError("manifest: verifier ids must be unique")

    @property
    def verifier_ids(self):
        return [v.verifier_id for v in self.verifiers]

    @property
    def n_verifiers(self):
        return len(self.verifiers)

    def column(self, verifier_id):
        return self.verifier_ids.index(verifier_id)

    @classmethod
    def from_dict(cls, data):
        try:
            verifiers = tuple(
                VerifierSpec(str(v["id"]), v.get("kind", "real"),
                             tuple(float(x) for x in v.get("range", (-1.0, 1.0))))
                for v in data["verifiers"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"manifest: {exc}") from exc
        return cls(verifiers, str(data.get("dataset_id", "dataset")))

    def to_dict(self):
        return {
            "dataset_id": self.dataset_id,
            "verifiers": [{"id": v.verifier_id, "kind": v.kind,
                           "range": list(v.declared_range)} for v in self.verifiers],
        }

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"manifest {path}: {exc.msg}", exc.lineno) from exc
        return cls.from_dict(data)


def _frozen(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScoreBlock:
    """One query's responses and their verifier scores.

    ``raw_scores`` holds the imputed raw values, ``missing`` flags the entries
    that were imputed, and ``norm_scores`` the per-column [-1, 1] rescaling.
    """

    query_id: str
    response_ids: tuple
    raw_scores: np.ndarray
    norm_scores: np.ndarray
    manifest: Manifest
    missing: np.ndarray = None
    labels: np.ndarray = None
    answer_keys: tuple = None

    def __post_init__(self):
        raw = np.asarray(self.raw_scores, dtype=np.float64)
        norm = np.asarray(self.norm_scores, dtype=np.float64)
        n = len(self.response_ids)
        if n < 2:
            raise ShapeError(f"query {self.query_id!r}: need N >= 2 responses, got {n}")
        if raw.shape != (n, self.manifest.n_verifiers) or norm.shape != raw.shape:
            raise ShapeError(f"query {self.query_id!r}: score matrix shape {raw.shape} "
                             f"does not match ({n}, {self.manifest.n_verifiers})")
        if norm.size and (norm.min() < -1 or norm.max() > 1):
            raise ShapeError(f"query {self.query_id!r}: normalized scores outside [-1, 1]")
        object.__setattr__(self, "raw_scores", _frozen(raw))
        object.__setattr__(self, "norm_scores", _frozen(norm))
        missing = np.zeros(raw.shape, bool) if self.missing is None else self.missing
        object.__setattr__(self, "missing", _frozen(np.asarray(missing, bool)))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,) or not np.all(np.isin(labels, (-1, 1))):
                raise ShapeError(f"query {self.query_id!r}: labels must be N values in {{+1,-1}}")
            object.__setattr__(self, "labels", _frozen(labels.astype(np.int8)))
        if self.answer_keys is not None:
            if len(self.answer_keys) != n:
                raise ShapeError(f"query {self.query_id!r}: answer_keys must have length N")
            object.__setattr__(self, "answer_keys", tuple(str(a) for a in self.answer_keys))
        object.__setattr__(self, "response_ids", tuple(str(r) for r in self.response_ids))

    @property
    def n_responses(self):
        return self.raw_scores.shape[0]

    @property
    def n_verifiers(self):
        return self.raw_scores.shape[1]

    @property
    def active(self):
        """Columns that are not constant within the block."""
        return np.ptp(self.raw_scores, axis=0) > 0

    @classmethod
    def from_raw(cls, query_id, response_ids, raw_scores, manifest, labels=None,
                 answer_keys=None):
        """Build a block from raw scores (NaN marks a missing score)."""
        raw = np.asarray(raw_scores, dtype=np.float64)
        missing = np.isnan(raw)
        raw = impute_missing(raw)
        return cls(query_id, tuple(response_ids), raw, normalize_block(raw), manifest,
                   missing=missing, labels=labels, answer_keys=answer_keys)


@dataclass(frozen=True, eq=False)
class Batch:
    """Blocks sharing a manifest, with a stacked view over all rows."""

    blocks: tuple
    manifest: Manifest = field(default=None)

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if not blocks:
            raise ShapeError("a batch needs at least one block")
        manifest = self.manifest or blocks[0].manifest
        for blk in blocks:
            if blk.manifest != manifest:
                raise ShapeError(
                    f"query {blk.query_id!r}: manifest differs from the batch manifest")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "manifest", manifest)

    def __len__(self):
        return len(self.blocks)

    def __iter__(self):
        return iter(self.blocks)

    @property
    def query_ids(self):
        return [b.query_id for b in self.blocks]

    def block(self, query_id):
        for blk in self.blocks:
            if blk.query_id == query_id:
                return blk
        raise KeyError(query_id)

    @property
    def offsets(self):
        sizes = [b.n_responses for b in self.blocks]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    @property
    def concat_view(self):
        return np.vstack([b.norm_scores for b in self.blocks])

    @property
    def row_index(self):
        """(block index, row within block) for every row of ``concat_view``."""
        return np.array([(k, i) for k, b in enumerate(self.blocks)
                         for i in range(b.n_responses)], dtype=int).reshape(-1, 2)

    def split(self, stacked):
        """Cut a row-aligned array back into per-block pieces."""
        stacked = np.asarray(stacked)
        off = self.offsets
        if stacked.shape[0] != off[-1]:
            raise ShapeError(f"expected {off[-1]} rows, got {stacked.shape[0]}")
        return [stacked[off[k]:off[k + 1]] for k in range(len(self.blocks))]

    @property
    def has_labels(self):
        return all(b.labels is not None for b in self.blocks)

    @property
    def has_answer_keys(self):
        return all(b.answer_keys is not None for b in self.blocks)


def impute_missing(raw_scores):
    """Replace gaps (NaN or None) with raw score 0."""
    raw = np.array(raw_scores, dtype=np.float64)
    raw[np.isnan(raw)] = 0.0
    return raw


def normalize_block(raw):
    """Min-max rescale each column to [-1, 1]; constant columns become 0."""
    raw = np.asarray(raw, dtype=np.float64)
    if np.isnan(raw).any():
        raise ValueError("normalize_block: impute missing scores first")
    lo = raw.min(axis=0)
    span = raw.max(axis=0) - lo
    out = np.zeros_like(raw)
    ok = span > 0
    out[:, ok] = 2.0 * (raw[:, ok] - lo[ok]) / span[ok] - 1.0
    # guard the endpoints against rounding
    return np.clip(out, -1.0, 1.0)


def concat_batch(blocks):
    blocks = list(blocks)
    if not blocks:
        raise ShapeError("concat_batch: no blocks")
    m = blocks[0].n_verifiers
    for blk in blocks:
        if blk.n_verifiers != m:
            raise ShapeError(
                f"query {blk.query_id!r}: has {blk.n_verifiers} verifiers, expected {m}")
    return Batch(tuple(blocks))


def renormalize_global(batch):
    """Return a copy of ``batch`` normalized per column over all blocks at once."""
    raw = np.vstack([b.raw_scores for b in batch.blocks])
    norm = batch.split(normalize_block(raw))
    return Batch(tuple(
        ScoreBlock(b.query_id, b.response_ids, b.raw_scores, nb, b.manifest,
                   missing=b.missing, labels=b.labels, answer_keys=b.answer_keys)
        for b, nb in zip(batch.blocks, norm)))


def _open_text(path):
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def _parse_record(obj, lineno, known):
    if not isinstance(obj, dict):
        raise ParseError("record must be a JSON object", lineno)
    for key in ("query_id", "response_id", "scores"):
        if key not in obj:
            raise ParseError(f"missing field {key!r}", lineno)
    scores = obj["scores"]
    if not isinstance(scores, dict):
        raise ParseError("'scores' must be an object", lineno)
    for vid, val in scores.items():
        if vid not in known:
            raise ParseError(f"unknown verifier {vid!r}", lineno)
        if val is not None and (isinstance(val, bool) or not isinstance(val, (int, float))):
            raise ParseError(f"score for {vid!r} must be a number or null", lineno)
    label = obj.get("label")
    if label is not None and label not in (1, -1):
        raise ParseError(f"label must be +1 or -1, got {label!r}", lineno)
    return obj


def load_dataset(manifest_path, records_path, global_norm=False):
    """Read a manifest and a JSONL record file into a :class:`Batch`.

    Blocks are ordered by ``query_id`` and rows by ``response_id``.
    """
    manifest = Manifest.load(manifest_path)
    known = set(manifest.verifier_ids)
    grouped = {}
    with _open_text(records_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
            rec = _parse_record(obj, lineno, known)
            qid, rid = str(rec["query_id"]), str(rec["response_id"])
            rows = grouped.setdefault(qid, {})
            if rid in rows:
                raise DuplicateError(f"line {lineno}: duplicate record ({qid!r}, {rid!r})")
            rows[rid] = rec

    too_small = sorted(q for q, rows in grouped.items() if len(rows) < 2)
    if too_small:
        raise ShapeError(f"blocks with fewer than 2 responses: {', '.join(too_small)}")

    ids = manifest.verifier_ids
    blocks = []
    for qid in sorted(grouped):
        rows = grouped[qid]
        rids = sorted(rows)
        raw = np.array([[np.nan if rows[r]["scores"].get(v) is None else rows[r]["scores"][v]
                         for v in ids] for r in rids], dtype=np.float64)
        labels = [rows[r].get("label") for r in rids]
        if all(lab is None for lab in labels):
            labels = None
        elif any(lab is None for lab in labels):
            raise DatasetError(f"query {qid!r}: labels present on some responses only")
        keys = [rows[r].get("answer_key") for r in rids]
        if all(k is None for k in keys):
            keys = None
        elif any(k is None for k in keys):
            raise DatasetError(f"query {qid!r}: answer_key present on some responses only")
        blocks.append(ScoreBlock.from_raw(qid, rids, raw, manifest, labels=labels,
                                          answer_keys=keys))
    batch = Batch(tuple(blocks), manifest)
    return renormalize_global(batch) if global_norm else batch


def _fmt(x):
    return float(repr(float(x))) if np.isfinite(x) else None


def write_dataset(batch, out_dir, records_name="records.jsonl"):
    """Write ``manifest.json`` and a JSONL records file; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.json"
    records_path = out_dir / records_name
    manifest_path.write_text(json.dumps(batch.manifest.to_dict(), indent=2, sort_keys=True) + "\n")
    ids = batch.manifest.verifier_ids
    with open(records_path, "w", encoding="utf-8") as fh:
        for blk in batch.blocks:
            for i, rid in enumerate(blk.response_ids):
                rec = {"query_id": blk.query_id, "response_id": rid,
                       "scores": {v: (None if blk.missing[i, j] else _fmt(blk.raw_scores[i, j]))
                                  for j, v in enumerate(ids)}}
                if blk.labels is not None:
                    rec["label"] = int(blk.labels[i])
                if blk.answer_keys is not None:
                    rec["answer_key"] = blk.answer_keys[i]
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return manifest_path, records_path
