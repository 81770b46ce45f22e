"""Experiment configuration: one schema for every subcommand, JSON or TOML."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # 3.11+
except ModuleNotFoundError:  # pragma: no cover - version dependent
    import tomli as tomllib

KINDS = ("rates", "lemma1", "coverage", "sieve", "envelope", "bayes-risk")
_LOSSES = ("l2", "linf")
_SIGNAL_KINDS = ("extremal", "random", "zero", "custom")


def _fail(path: str, msg: str):
    raise ValueError(f"E:harness:config: {path}: {msg}")


@dataclass
class ExperimentConfig:
    kind: str
    prior: dict = field(default_factory=lambda: {"family": "spike", "slab": {"kind": "uniform", "L0": 2.0}})
    signal: dict = field(default_factory=lambda: {"kind": "extremal", "L": 1.0})
    n_grid: list = field(default_factory=lambda: [2**p for p in range(10, 17)])
    beta_grid: list = field(default_factory=lambda: [1.0])
    loss: str = "linf"
    draws: int = 2000
    replicates: int = 50
    seed: int = 0
    out_dir: str = "."
    format: str = "csv"
    params: dict = field(default_factory=dict)  # kind-specific knobs

    def __post_init__(self):
        if self.kind not in KINDS:
            _fail("kind", f"must be one of {KINDS}, got {self.kind!r}")
        if not isinstance(self.prior, dict) or "family" not in self.prior:
            _fail("prior.family", "missing")
        if self.prior["family"] not in ("spike", "block"):
            _fail("prior.family", f"must be spike or block, got {self.prior['family']!r}")
        sk = self.signal.get("kind")
        if sk not in _SIGNAL_KINDS:
            _fail("signal.kind", f"must be one of {_SIGNAL_KINDS}, got {sk!r}")
        if sk == "custom" and "flat" not in self.signal:
            _fail("signal.flat", "custom signal needs explicit coefficients")
        grid = list(self.n_grid)
        if not grid:
            _fail("n_grid", "must be nonempty")
        for i, n in enumerate(grid):
            if int(n) != n or n < 8:
                _fail(f"n_grid[{i}]", f"entries must be integers >= 8, got {n}")
            if i and grid[i] <= grid[i - 1]:
                _fail(f"n_grid[{i}]", "grid must be strictly increasing")
        self.n_grid = [int(n) for n in grid]
        if not self.beta_grid or any(b <= 0 for b in self.beta_grid):
            _fail("beta_grid", "needs at least one β > 0")
        self.beta_grid = [float(b) for b in self.beta_grid]
        if self.loss not in _LOSSES:
            _fail("loss", f"must be one of {_LOSSES}, got {self.loss!r}")
        if self.draws < 1:
            _fail("draws", f"must be >= 1, got {self.draws}")
        if self.replicates < 1:
            _fail("replicates", f"must be >= 1, got {self.replicates}")
        if self.format not in ("csv", "jsonl"):
            _fail("format", f"must be csv or jsonl, got {self.format!r}")
        self.seed = int(self.seed)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if "kind" not in d:
            _fail("kind", "missing")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            _fail(sorted(extra)[0], "unknown field")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "prior": self.prior, "signal": self.signal,
            "n_grid": self.n_grid, "beta_grid": self.beta_grid, "loss": self.loss,
            "draws": self.draws, "replicates": self.replicates, "seed": self.seed,
            "out_dir": self.out_dir, "format": self.format, "params": self.params,
        }


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.exists():
        _fail("config", f"no such file: {p}")
    text = p.read_bytes()
    if p.suffix == ".json":
        d = json.loads(text)
    elif p.suffix == ".toml":
        d = tomllib.loads(text.decode())
    else:
        _fail("config", f"unsupported extension {p.suffix!r} (use .json or .toml)")
    if not isinstance(d, dict):
        _fail("config", "top level must be a table/object")
    return ExperimentConfig.from_dict(d)
