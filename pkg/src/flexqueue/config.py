"""Run configuration: YAML (or JSON) file, environment overrides, CLI flags.

Precedence, lowest first: built-in defaults, the config file, environment
variables, command-line flags.  Environment variables are named
``FLEXQ_<SECTION>__<KEY>`` (``FLEXQ_SEED`` for top-level keys) and their
values are parsed as YAML scalars or flow sequences, e.g.
``FLEXQ_MARKET__LAM="[40, 60]"``.

Unknown keys anywhere are rejected.  A sweep manifest is itself a valid
config file; its ``manifest`` block is ignored on load.
"""
from __future__ import annotations

import copy
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .model import (InputError, MarketParams, PatienceModel, PolicySpec, StrategyProfile,
                    make_policy)

ENV_PREFIX = "FLEXQ_"


class ConfigError(InputError):
    """Malformed or out-of-range configuration."""


DEFAULTS: dict = {
    "market": {"ell": 1, "lam": [40.0, 60.0], "mu": [30.0, 40.0], "theta": 4.0,
               "patience": {"kind": "perfect", "K": None}},
    "policy": {"kind": "acr", "pooled": False},
    "sigma": "truthful",
    "solver": {"cap": None, "eps": 1e-10, "tail_target": 1e-8, "budget": 400_000,
               "method": "auto", "which": "all", "grid": 11, "tol": 1e-7,
               "step": 1.0, "damping": 0.5, "max_iter": 500, "ne_tol": 1e-6},
    "sim": {"horizon": 0.0, "replications": 0, "warmup": None, "batches": 32},
    "sweep": {"grid": None, "workers": 1, "scalar_grid": 5, "ell": 1, "n_params": 20,
              "n_sigmas": 6, "budget": None},
    "couple": {"base": [1, 1], "i": 1, "log_replications": 0},
    "seed": 12345,
    "output": {"path": None, "format": "csv"},
}

# knob -> (type check, description of the allowed range)
_RANGES = {
    ("market", "ell"): (lambda v: isinstance(v, int) and v >= 0, "integer >= 0"),
    ("market", "theta"): (lambda v: _num(v) and 0 < v < math.inf, "positive number"),
    ("policy", "kind"): (lambda v: v in ("ncr", "acr", "rcr"), "ncr, acr or rcr"),
    ("policy", "pooled"): (lambda v: isinstance(v, bool), "boolean"),
    ("solver", "eps"): (lambda v: _num(v) and 0 < v < 1, "number in (0, 1)"),
    ("solver", "tail_target"): (lambda v: _num(v) and 0 < v < 1, "number in (0, 1)"),
    ("solver", "budget"): (lambda v: isinstance(v, int) and v > 0, "positive integer"),
    ("solver", "method"): (lambda v: v in ("auto", "direct", "iterative"),
                           "auto, direct or iterative"),
    ("solver", "which"): (lambda v: v in ("all", "largest", "smallest"),
                          "all, largest or smallest"),
    ("solver", "grid"): (lambda v: isinstance(v, int) and v >= 2, "integer >= 2"),
    ("solver", "tol"): (lambda v: _num(v) and 0 < v < 1, "number in (0, 1)"),
    ("solver", "step"): (lambda v: _num(v) and v > 0, "positive number"),
    ("solver", "damping"): (lambda v: _num(v) and 0 < v <= 1, "number in (0, 1]"),
    ("solver", "max_iter"): (lambda v: isinstance(v, int) and v >= 1, "positive integer"),
    ("solver", "ne_tol"): (lambda v: _num(v) and v > 0, "positive number"),
    ("sim", "horizon"): (lambda v: _num(v) and 0 <= v < math.inf, "number >= 0"),
    ("sim", "replications"): (lambda v: isinstance(v, int) and v >= 0, "integer >= 0"),
    ("sim", "warmup"): (lambda v: v is None or (_num(v) and v >= 0), "null or number >= 0"),
    ("sim", "batches"): (lambda v: isinstance(v, int) and v >= 2, "integer >= 2"),
    ("sweep", "workers"): (lambda v: isinstance(v, int) and v >= 1, "positive integer"),
    ("sweep", "scalar_grid"): (lambda v: isinstance(v, int) and v >= 2, "integer >= 2"),
    ("sweep", "ell"): (lambda v: v in (1, 2), "1 or 2"),
    ("sweep", "n_params"): (lambda v: isinstance(v, int) and v >= 1, "positive integer"),
    ("sweep", "n_sigmas"): (lambda v: isinstance(v, int) and v >= 1, "positive integer"),
    ("sweep", "budget"): (lambda v: v is None or (isinstance(v, int) and v > 0),
                          "null or positive integer"),
    ("couple", "i"): (lambda v: isinstance(v, int) and v >= 1, "integer >= 1"),
    ("couple", "log_replications"): (lambda v: isinstance(v, int) and v >= 0, "integer >= 0"),
    ("seed",): (lambda v: isinstance(v, int) and 0 <= v < 2**63, "integer in [0, 2^63)"),
    ("output", "format"): (lambda v: v in ("csv", "json"), "csv or json"),
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-7`` (no dot) as a float, as JSON writes it."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                  |[0-9][0-9_]*[eE][-+]?[0-9]+
                  |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                  |[-+]?\.(?:inf|Inf|INF)
                  |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."))


def _parse(text: str):
    return yaml.load(text, Loader=_Loader)


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _merge(base: dict, over: Mapping, path=()) -> dict:
    """Recursive merge that rejects keys absent from ``base``."""
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            dotted = ".".join(path + (str(k),))
            raise ConfigError(f"unknown config key {dotted!r}")
        if isinstance(base[k], dict) and not (k == "patience" and v is None):
            if not isinstance(v, Mapping):
                raise ConfigError(f"config key {'.'.join(path + (k,))!r} must be a mapping")
            out[k] = _merge(base[k], v, path + (k,))
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_manifest(path) -> dict:
    """The whole document of a config or manifest file, ``manifest`` block included."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from None
    try:
        doc = _parse(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config file is not valid YAML: {e}") from None
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a mapping")
    return doc


def load_file(path) -> dict:
    """Config mapping from a YAML or JSON file; a manifest block is dropped."""
    doc = load_manifest(path)
    doc.pop("manifest", None)
    return doc


def env_overrides(environ: Mapping[str, str] | None = None) -> dict:
    """Nested override dict from ``FLEXQ_*`` variables."""
    environ = os.environ if environ is None else environ
    out: dict = {}
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        parts = name[len(ENV_PREFIX):].lower().split("__")
        try:
            value = _parse(environ[name])
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {name}: {e}") from None
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


def _set(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def resolve(file: str | None = None, flags: Mapping[str, Any] | None = None,
            environ: Mapping[str, str] | None = None) -> "RunConfig":
    """Defaults, then file, then environment, then ``flags`` (dotted keys)."""
    doc = DEFAULTS
    if file is not None:
        doc = _merge(doc, load_file(file))
    doc = _merge(doc, env_overrides(environ))
    over: dict = {}
    for k, v in (flags or {}).items():
        if v is not None:
            _set(over, k, v)
    doc = _merge(doc, over)
    return RunConfig.from_dict(doc)


def _market(d: dict) -> MarketParams:
    for key in ("lam", "mu"):
        v = d[key]
        if not isinstance(v, (list, tuple)) or not all(_num(x) for x in v):
            raise ConfigError(f"market.{key} must be a list of numbers")
    pat = d.get("patience") or {"kind": "perfect", "K": None}
    kind = pat.get("kind", "perfect")
    if kind == "perfect":
        patience = PatienceModel.perfect()
    elif kind in ("max_rejections", "K"):
        K = pat.get("K")
        if not isinstance(K, int) or K < 0:
            raise ConfigError("market.patience.K must be an integer >= 0")
        patience = PatienceModel.max_rejections(K)
    else:
        raise ConfigError(f"market.patience.kind must be perfect or max_rejections, got {kind!r}")
    try:
        return MarketParams(ell=d["ell"], lam=tuple(d["lam"]), mu=tuple(d["mu"]),
                            theta=d["theta"], patience=patience)
    except InputError as e:
        raise ConfigError(f"market: {e}") from None


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration plus the plain dict it came from."""

    raw: dict
    market: MarketParams
    policy: PolicySpec

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RunConfig":
        doc = _merge(DEFAULTS, doc)
        for path, (check, what) in _RANGES.items():
            node = doc
            for k in path:
                node = node[k]
            if not check(node):
                raise ConfigError(f"{'.'.join(path)} must be {what}, got {node!r}")
        market = _market(doc["market"])
        try:
            policy = make_policy(doc["policy"]["kind"], market.ell, doc["policy"]["pooled"])
        except InputError as e:
            raise ConfigError(f"policy: {e}") from None
        cap = doc["solver"]["cap"]
        if cap is not None and not (isinstance(cap, int) and cap > 0 or
                                    isinstance(cap, list) and len(cap) == len(policy.queues)
                                    and all(isinstance(c, int) and c > 0 for c in cap)):
            raise ConfigError("solver.cap must be null, a positive integer or one per queue")
        grid = doc["sweep"]["grid"]
        if grid is not None:
            if not isinstance(grid, list) or not grid or not all(_num(x) and x > 0 for x in grid):
                raise ConfigError("sweep.grid must be null or a nonempty list of positive numbers")
            if any(b <= a for a, b in zip(grid[:-1], grid[1:])):
                raise ConfigError("sweep.grid must be strictly increasing")
        base = doc["couple"]["base"]
        if (not isinstance(base, list) or len(base) != market.ell + 1
                or not all(isinstance(c, int) and c >= 0 for c in base)):
            raise ConfigError("couple.base must list one nonnegative count per agent type")
        cfg = cls(raw=doc, market=market, policy=policy)
        cfg.sigma_profile()  # validate eagerly
        return cfg

    # -- accessors -----------------------------------------------------------------

    def __getitem__(self, section: str):
        return self.raw[section]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def cap(self):
        cap = self.raw["solver"]["cap"]
        return tuple(cap) if isinstance(cap, list) else cap

    def sigma_profile(self) -> StrategyProfile | None:
        """The configured profile, or ``None`` when it is to be solved for."""
        s = self.raw["sigma"]
        if s == "solve":
            return None
        if s == "truthful":
            return StrategyProfile.truthful(self.policy, self.market.ell)
        try:
            prof = StrategyProfile(np.array(s, dtype=float))
            prof.check_against(self.market, self.policy)
        except (InputError, ValueError, TypeError) as e:
            raise ConfigError(f"sigma: {e}") from None
        return prof

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)
