"""Run configuration shared by the pipeline and the command line."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

from .exceptions import ConfigError
from .tci import INDEX_SETS

MODES = ("query", "batched")
FALLBACKS = ("naive",)
PATH_KEYS = ("manifest", "records", "output")
ENV_PREFIX = "FUSE_"


def _default_ks():
    return [1, 5, "N"]


@dataclass
class RunConfig:
    """Pipeline settings.

    ``ks`` entries are positive ints or the string ``"N"`` (each query's
    response count).  Larger ks are clipped to N per query.
    """

    mode: str = "query"
    methods: list = None
    clip_delta: float = 1e-3
    reg: float = 1e-3
    max_sweeps: int = 10
    ks: list = field(default_factory=_default_ks)
    seed: int = 0
    manifest: str = None
    records: str = None
    output: str = None
    pass1_literal: bool = False
    eq9_compat: bool = False
    tci_index_alt: bool = False
    global_norm: bool = False
    workers: int = 1
    fallback: str = "naive"
    label_fraction: float = 0.05

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.fallback not in FALLBACKS:
            raise ConfigError(f"fallback must be one of {FALLBACKS}, got {self.fallback!r}")
        if not self.clip_delta > 0:
            raise ConfigError(f"clip_delta must be positive, got {self.clip_delta}")
        if self.reg < 0:
            raise ConfigError(f"reg must be non-negative, got {self.reg}")
        if int(self.max_sweeps) < 0:
            raise ConfigError(f"max_sweeps must be non-negative, got {self.max_sweeps}")
        if int(self.workers) < 1:
            raise ConfigError(f"workers must be at least 1, got {self.workers}")
        if not 0 < self.label_fraction <= 1:
            raise ConfigError(f"label_fraction must lie in (0, 1], got {self.label_fraction}")
        for k in self.ks:
            if k != "N" and not (isinstance(k, int) and not isinstance(k, bool) and k >= 1):
                raise ConfigError(f"ks entries must be positive ints or 'N', got {k!r}")
        if self.methods is not None:
            from .methods import METHODS
            unknown = [m for m in self.methods if m not in METHODS]
            if unknown:
                raise ConfigError(f"unknown methods {unknown}; known: {sorted(METHODS)}")

    @property
    def index_set(self):
        return INDEX_SETS[1] if self.tci_index_alt else INDEX_SETS[0]

    @property
    def method_list(self):
        from .methods import METHODS
        return list(METHODS) if self.methods is None else list(self.methods)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        return cls.from_dict(data)

    def with_env(self, environ=None):
        """Copy with io paths overridden by ``FUSE_MANIFEST`` and friends."""
        environ = os.environ if environ is None else environ
        data = asdict(self)
        for key in PATH_KEYS:
            value = environ.get(ENV_PREFIX + key.upper())
            if value:
                data[key] = value
        return type(self)(**data)

    def to_dict(self):
        return asdict(self)

    def hash(self):
        """SHA-256 of the settings that affect results (io paths and workers excluded)."""
        data = {k: v for k, v in asdict(self).items() if k not in PATH_KEYS + ("workers",)}
        data["methods"] = self.method_list
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()
