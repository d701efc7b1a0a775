"""Run configuration: defaults, JSON loading, environment overrides, validation."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

ENV_PREFIX = "MIBRACKET_"


@dataclass
class RunConfig:
    # inputs
    combinations: list = field(default_factory=list)
    pairs: list = field(default_factory=list)
    synthetic_pairs: list = field(default_factory=list)
    attribution: dict = field(default_factory=dict)
    pairing: str = "random"
    sample_size: int = 500

    # ensemble protocol
    ensemble: int = 3
    epochs: int = 100
    batch_size: int = 128
    lr: float = 1e-4
    weight_decay: float = 1e-5
    decoupled_weight_decay: bool = True
    clip_norm: float = 1.0
    scheduler_factor: float = 0.5
    scheduler_patience: int = 10
    scheduler_metric: str = "loss"
    early_stop_delta: float = 0.1
    early_stop_patience: int = 7
    final_window: int = 10

    # networks
    hidden: int = 256
    leaky_slope: float = 0.2
    bias_init: str = "uniform"
    ema_alpha: float = 0.01
    ema_eps: float = 1e-8
    ema_cadence: str = "batch"
    marginal_sampling: str = "batch"
    club_marginal: str = "permute"
    logvar_min: float = -6.0
    logvar_max: float = 2.0

    # KSG and attribution
    ksg_k: int = 5
    ksg_noise: float = 1e-10
    bootstrap: int = 10
    ci_level: float = 0.95

    seed: int = 0
    workers: int = 1

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data, env=None):
        """Build from a mapping, apply ``MIBRACKET_*`` overrides, validate."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        problems = [f"unknown field {k!r}" for k in unknown]
        kwargs = {k: v for k, v in data.items() if k in known}
        kwargs.update(_env_overrides(os.environ if env is None else env, problems))
        cfg = cls(**kwargs)
        try:
            cfg.validate()
        except ConfigError as exc:
            problems.extend(exc.problems)
        if problems:
            raise ConfigError(problems)
        return cfg

    @classmethod
    def load(cls, path, env=None):
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        cfg = cls.from_dict(data, env)
        cfg._base = path.parent
        return cfg

    def resolve(self, p):
        """Resolve a data path relative to the config file's directory."""
        p = Path(p)
        base = getattr(self, "_base", None)
        return p if p.is_absolute() or base is None else base / p

    def validate(self):
        problems = []

        def need(ok, msg):
            if not ok:
                problems.append(msg)

        for name in ("sample_size", "ensemble", "epochs", "batch_size", "final_window",
                     "hidden", "scheduler_patience", "early_stop_patience", "bootstrap"):
            v = getattr(self, name)
            need(isinstance(v, int) and not isinstance(v, bool) and v >= 1,
                 f"{name} must be a positive integer, got {v!r}")
        need(isinstance(self.batch_size, int) and self.batch_size >= 2, "batch_size must be >= 2")
        need(isinstance(self.bootstrap, int) and self.bootstrap >= 2, "bootstrap must be >= 2")
        need(isinstance(self.ksg_k, int) and not isinstance(self.ksg_k, bool) and self.ksg_k >= 1,
             f"ksg_k must be a positive integer, got {self.ksg_k!r}")
        for name in ("lr", "clip_norm", "ema_alpha", "ema_eps"):
            v = getattr(self, name)
            need(_is_number(v) and v > 0, f"{name} must be positive, got {v!r}")
        need(_is_number(self.weight_decay) and self.weight_decay >= 0, "weight_decay must be >= 0")
        need(_is_number(self.ksg_noise) and self.ksg_noise >= 0, "ksg_noise must be >= 0")
        need(_is_number(self.scheduler_factor) and 0 < self.scheduler_factor < 1,
             "scheduler_factor must lie in (0, 1)")
        need(_is_number(self.early_stop_delta) and self.early_stop_delta >= 0, "early_stop_delta must be >= 0")
        need(_is_number(self.ema_alpha) and self.ema_alpha < 1, "ema_alpha must be < 1")
        need(_is_number(self.ci_level) and 0 < self.ci_level < 1, "ci_level must lie in (0, 1)")
        need(_is_number(self.leaky_slope) and 0 <= self.leaky_slope < 1, "leaky_slope must lie in [0, 1)")
        need(_is_number(self.logvar_min) and _is_number(self.logvar_max) and self.logvar_min < self.logvar_max,
             "logvar_min must be below logvar_max")
        need(self.pairing in ("same-rows", "random"), f"pairing must be 'same-rows' or 'random', got {self.pairing!r}")
        need(self.scheduler_metric in ("delta", "loss"),
             f"scheduler_metric must be 'delta' or 'loss', got {self.scheduler_metric!r}")
        need(self.ema_cadence in ("batch", "epoch"), f"ema_cadence must be 'batch' or 'epoch', got {self.ema_cadence!r}")
        need(self.marginal_sampling in ("batch", "dataset"),
             f"marginal_sampling must be 'batch' or 'dataset', got {self.marginal_sampling!r}")
        need(self.club_marginal in ("permute", "all-pairs"),
             f"club_marginal must be 'permute' or 'all-pairs', got {self.club_marginal!r}")
        need(self.bias_init in ("uniform", "zero"), f"bias_init must be 'uniform' or 'zero', got {self.bias_init!r}")
        need(isinstance(self.seed, int) and not isinstance(self.seed, bool) and 0 <= self.seed < 2**64,
             f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        need(isinstance(self.workers, int) and self.workers >= 1, "workers must be >= 1")

        names = set()
        for i, combo in enumerate(self.combinations):
            if not isinstance(combo, dict) or not isinstance(combo.get("dimensions"), dict):
                problems.append(f"combinations[{i}] must be an object with a 'dimensions' mapping")
                continue
            names.update(combo["dimensions"])
        for i, pair in enumerate(self.pairs):
            if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
                problems.append(f"pairs[{i}] must be a two-element list")
            elif self.combinations and not set(pair) <= names:
                problems.append(f"pairs[{i}] names a dimension missing from every combination: {pair}")
        for i, sp in enumerate(self.synthetic_pairs):
            if not isinstance(sp, dict):
                problems.append(f"synthetic_pairs[{i}] must be an object")
                continue
            rho = sp.get("rho", 0.0)
            if not (_is_number(rho) and -1 < rho < 1):
                problems.append(f"synthetic_pairs[{i}].rho must lie in (-1, 1), got {rho!r}")
            fam = sp.get("family", "correlated-gaussian")
            if fam not in ("correlated-gaussian", "independent-uniform", "deterministic-map"):
                problems.append(f"synthetic_pairs[{i}].family is invalid: {fam!r}")
        if self.attribution:
            for key in ("source", "filter", "dimensions"):
                if key not in self.attribution:
                    problems.append(f"attribution.{key} is required")
            dims = self.attribution.get("dimensions")
            if dims is not None and (not isinstance(dims, dict) or not dims):
                problems.append("attribution.dimensions must be a non-empty mapping")
        if problems:
            raise ConfigError(problems)


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def env_key(name):
    return ENV_PREFIX + name.upper()


def _env_overrides(env, problems):
    """Scalar fields may be overridden by ``MIBRACKET_<FIELD>``; list/dict fields take JSON."""
    out = {}
    for f in dataclasses.fields(RunConfig):
        raw = env.get(env_key(f.name))
        if raw is None:
            continue
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        try:
            if isinstance(default, bool):
                low = raw.strip().lower()
                if low not in ("1", "0", "true", "false", "yes", "no"):
                    raise ValueError(raw)
                out[f.name] = low in ("1", "true", "yes")
            elif isinstance(default, int):
                out[f.name] = int(raw)
            elif isinstance(default, float):
                out[f.name] = float(raw)
            elif isinstance(default, (list, dict)):
                out[f.name] = json.loads(raw)
            else:
                out[f.name] = raw
        except (ValueError, json.JSONDecodeError):
            problems.append(f"environment override {env_key(f.name)}={raw!r} is not a valid {type(default).__name__}")
    return out
