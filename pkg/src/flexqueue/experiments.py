"""Parameter sweeps and exact or coupled property suites.

Every sweep writes one CSV (rows flushed as they are computed) and a JSON
manifest next to it.  The manifest carries the resolved configuration, its
sha256, the seed and the package version, and can be passed back as a
config file to reproduce the run.

Floats are written with 17 significant digits so that reruns with the same
configuration compare byte for byte.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .ctmc.chain import CapacityError, ChainFamily
from .equilibrium import WaitEvaluator, braess_comparison, envelope_family, solve_scalar_two_type
from .model import (InputError, MarketParams, PatienceModel, StrategyProfile, SystemState,
                    make_acr, make_ncr, make_policy, make_rcr)
from .sim import EventStream, coupled_value_of_flexibility

log = logging.getLogger(__name__)

TWO_TYPE_SUPPORT = np.array([[True, True], [False, True]])
FIG4_BASE = MarketParams(ell=1, lam=(40.0, 60.0), mu=(30.0, 40.0), theta=4.0)
FIG6_BASE = MarketParams(ell=1, lam=(15.0, 60.0), mu=(30.0, 40.0), theta=4.0)


def fmt(x) -> str:
    """CSV cell for numbers: shortest exact repr for ints, 17 digits for floats."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def default_grid(stop: float, n: int = 61, first: float = 0.05) -> tuple:
    """``n`` points on ``(0, stop]``: the evenly spaced grid ``0, stop/(n-1), ...``
    with the zero replaced by ``first``."""
    g = np.linspace(0.0, stop, n)
    g[0] = first
    return tuple(float(x) for x in g)


@dataclass(frozen=True)
class SweepSpec:
    """One-dimensional sweep of a rate over a grid.

    ``parameter`` is ``"mu0"``, ``"lam0"``, ``"mu1"`` and so on: the rate
    vector name followed by the type index.
    """

    base: MarketParams
    parameter: str
    grid: tuple
    policies: tuple = ("ncr", "acr", "rcr")
    method: str = "scalar"
    out: str | None = None

    def __post_init__(self):
        if not self.grid:
            raise InputError("sweep grid is empty")
        g = np.asarray(self.grid, dtype=float)
        if np.any(np.diff(g) <= 0):
            raise InputError("sweep grid must be strictly increasing")
        if np.any(~np.isfinite(g)):
            raise InputError("sweep grid must be finite")
        self.split_parameter()

    def split_parameter(self) -> tuple[str, int]:
        name, idx = self.parameter[:-1], self.parameter[-1:]
        if name not in ("lam", "mu") or not idx.isdigit() or int(idx) > self.base.ell:
            raise InputError(f"cannot sweep {self.parameter!r}; use lam<i> or mu<i>")
        return name, int(idx)

    def markets(self) -> list[MarketParams]:
        name, idx = self.split_parameter()
        return [self.base.with_rate(name, idx, float(v)) for v in self.grid]


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

class RowWriter:
    """CSV writer that flushes after every row; a no-op when ``path`` is None."""

    def __init__(self, path, header: Sequence[str]):
        self.path = Path(path) if path is not None else None
        self.header = list(header)
        self._fh = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", newline="")
            self._w = csv.writer(self._fh, lineterminator="\n")
            self._w.writerow(self.header)
            self._fh.flush()

    def write(self, row: dict) -> None:
        if self._fh is None:
            return
        self._w.writerow([fmt(row[k]) for k in self.header])
        self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serialisable: {type(x).__name__}")


def write_manifest(path, config: dict, seed: int | None, files: Sequence[str],
                   command: Sequence[str] = (), info: dict | None = None) -> dict:
    """Write ``config`` plus a ``manifest`` block; returns the whole document.

    ``config`` should use the run-configuration layout so that the file can
    be loaded back as a config.  ``command`` (e.g. ``("sweep", "fig6")``)
    and ``info`` (anything else worth recording) go into the manifest block.
    """
    doc = json.loads(json.dumps(config, default=_jsonable))
    doc["manifest"] = {
        "command": list(command),
        "config_sha256": config_hash(config),
        "seed": seed,
        "version": __version__,
        "files": [Path(f).name for f in files],
    }
    if info:
        doc["manifest"]["info"] = json.loads(json.dumps(info, default=_jsonable))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return doc


def params_record(p: MarketParams) -> dict:
    rec = {"ell": p.ell, "lam": list(p.lam), "mu": list(p.mu), "theta": p.theta}
    if not p.patience.is_perfect:
        rec["patience"] = {"kind": p.patience.kind, "K": p.patience.K}
    return rec


def _chunks(n: int, k: int) -> list[range]:
    k = max(1, min(k, n))
    bounds = np.linspace(0, n, k + 1).round().astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def _map_chunks(fn: Callable, items: list, workers: int, on_rows: Callable) -> list:
    """Apply ``fn`` to contiguous chunks of ``items`` and hand rows to
    ``on_rows`` in grid order.  Chunking depends only on ``workers``."""
    parts = _chunks(len(items), workers)
    out = []
    if workers <= 1 or len(parts) == 1:
        for part in parts:
            for row in fn([items[k] for k in part], on_rows):
                out.append(row)
        return out
    with ProcessPoolExecutor(max_workers=len(parts)) as pool:
        futures = [pool.submit(fn, [items[k] for k in part], None) for part in parts]
        for f in futures:
            rows = f.result()
            for row in rows:
                on_rows(row)
            out.extend(rows)
    return out


# ---------------------------------------------------------------------------
# sweep over the type-0 job rate
# ---------------------------------------------------------------------------

FIG4_COLUMNS = ["mu0", "fb", "tp_ncr", "tp_acr", "tp_rcr", "frac_ncr", "frac_acr", "frac_rcr",
                "sigma01_acr", "sigma01_rcr", "n_eq_acr", "residual_acr", "residual_rcr",
                "degenerate_acr"]


def first_best(params: MarketParams, eps: float = 1e-16) -> float:
    """Full-information optimum: ACR with truthful joining, truncated far out."""
    policy = make_acr(params.ell)
    support = np.zeros((params.ell + 1, len(policy.queues)), dtype=bool)
    for i in range(params.ell + 1):
        support[i, policy.queue_index(i)] = True
    fam = ChainFamily(params, policy, support, eps=eps)
    sigma = StrategyProfile.truthful(policy, params.ell)
    return fam.throughput(fam.stationary(sigma))


def ncr_throughput(params: MarketParams, eps: float = 1e-16) -> float:
    policy = make_ncr(params.ell)
    fam = ChainFamily(params, policy, np.ones((params.ell + 1, 1), dtype=bool), eps=eps)
    return fam.throughput(fam.stationary(StrategyProfile.truthful(policy, params.ell)))


def _at_equilibrium(tp: float, sigma01: float, fb: float) -> float:
    """With truthful joining both reservation policies dispatch exactly as the
    first-best policy, so the solved throughput can only differ from ``fb``
    by solver round-off; report ``fb`` itself."""
    return fb if sigma01 == 0.0 else tp


def _fig4_rows(markets, on_row, grid=5, tol=1e-7, eps=1e-10):
    acr, rcr = make_acr(1), make_rcr(1)
    fam_a = envelope_family(markets, acr, TWO_TYPE_SUPPORT, eps)
    fam_r = envelope_family(markets, rcr, TWO_TYPE_SUPPORT, eps)
    rows = []
    for p in markets:
        ev_a = WaitEvaluator(p, acr, TWO_TYPE_SUPPORT, family=fam_a)
        ev_r = WaitEvaluator(p, rcr, TWO_TYPE_SUPPORT, family=fam_r)
        # every ACR equilibrium (cheap, two cells); the smallest is reported
        eqs = solve_scalar_two_type(p, acr, 11, tol, "all", ev_a, full_table=False)
        ea = eqs[0]
        er = solve_scalar_two_type(p, rcr, grid, tol, "largest", ev_r, full_table=False)[0]
        fb = first_best(p)
        tp = {"ncr": ncr_throughput(p),
              "acr": _at_equilibrium(ev_a.throughput(ea.sigma_star), ea.sigma01, fb),
              "rcr": _at_equilibrium(ev_r.throughput(er.sigma_star), er.sigma01, fb)}
        row = {"mu0": p.mu[0], "fb": fb,
               **{f"tp_{k}": v for k, v in tp.items()},
               **{f"frac_{k}": v / fb for k, v in tp.items()},
               "sigma01_acr": ea.sigma01, "sigma01_rcr": er.sigma01, "n_eq_acr": len(eqs),
               "residual_acr": ea.residual, "residual_rcr": er.residual,
               "degenerate_acr": ea.degenerate}
        log.info("fig4_7 mu0=%g sigma_acr=%.6f sigma_rcr=%.6f", p.mu[0], ea.sigma01, er.sigma01)
        if on_row is not None:
            on_row(row)
        rows.append(row)
    return rows


def sweep_fig4_7(out=None, grid: Sequence[float] | None = None,
                 base: MarketParams = FIG4_BASE, workers: int = 1,
                 scalar_grid: int = 5, tol: float = 1e-7,
                 manifest: dict | None = None) -> list[dict]:
    """Throughput fractions and equilibria as the type-0 job rate varies.

    For each ``mu0`` the row holds the first-best throughput, the NCR
    throughput, the smallest ACR equilibrium and the largest RCR
    equilibrium with their throughputs, and each throughput divided by the
    first best.  Returns the rows; writes ``out`` (CSV) and
    ``out.manifest.json`` when ``out`` is given.  ``manifest`` replaces the
    configuration recorded in the manifest (the CLI passes its own).
    """
    spec = SweepSpec(base, "mu0", tuple(grid) if grid is not None else default_grid(60.0),
                     policies=("ncr", "acr", "rcr"), out=None if out is None else str(out))
    markets = spec.markets()
    with RowWriter(out, FIG4_COLUMNS) as w:
        rows = _map_chunks(_Fig4Worker(scalar_grid, tol), markets, workers, w.write)
    if out is not None:
        cfg = {"market": params_record(base), "solver": {"tol": tol},
               "sweep": {"grid": list(spec.grid), "workers": workers, "scalar_grid": scalar_grid}}
        write_manifest(_manifest_path(out), manifest or cfg, None, [out], ("sweep", "fig4_7"))
    return rows


@dataclass(frozen=True)
class _Fig4Worker:
    scalar_grid: int
    tol: float

    def __call__(self, markets, on_row):
        return _fig4_rows(markets, on_row, self.scalar_grid, self.tol)


def _manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


# ---------------------------------------------------------------------------
# sweep over the flexible agent rate
# ---------------------------------------------------------------------------

FIG6_COLUMNS = ["lam0", "fb", "tp_acr", "tp_rcr", "frac_acr", "frac_rcr",
                "sigma01_acr", "sigma01_rcr", "residual_acr", "residual_rcr"]


def _fig6_rows(markets, on_row, grid=5, tol=1e-7, eps=1e-10):
    rows = []
    for b in braess_comparison(markets, grid, tol, eps):
        fb = first_best(b.params)
        tp_acr = _at_equilibrium(b.tp_acr, b.sigma_acr, fb)
        tp_rcr = _at_equilibrium(b.tp_rcr, b.sigma_rcr, fb)
        row = {"lam0": b.params.lam[0], "fb": fb, "tp_acr": tp_acr, "tp_rcr": tp_rcr,
               "frac_acr": tp_acr / fb, "frac_rcr": tp_rcr / fb,
               "sigma01_acr": b.sigma_acr, "sigma01_rcr": b.sigma_rcr,
               "residual_acr": b.residual_acr, "residual_rcr": b.residual_rcr}
        log.info("fig6 lam0=%g sigma_acr=%.6f sigma_rcr=%.6f", b.params.lam[0],
                 b.sigma_acr, b.sigma_rcr)
        if on_row is not None:
            on_row(row)
        rows.append(row)
    return rows


@dataclass(frozen=True)
class _Fig6Worker:
    scalar_grid: int
    tol: float

    def __call__(self, markets, on_row):
        return _fig6_rows(markets, on_row, self.scalar_grid, self.tol)


def sweep_fig6(out=None, grid: Sequence[float] | None = None, base: MarketParams = FIG6_BASE,
               workers: int = 1, scalar_grid: int = 5, tol: float = 1e-7,
               manifest: dict | None = None) -> list[dict]:
    """ACR against RCR as the flexible agent rate ``lam0`` varies.

    Equilibria follow the extremal rule of
    :func:`flexqueue.equilibrium.braess_comparison`: smallest for ACR,
    largest for RCR.
    """
    spec = SweepSpec(base, "lam0", tuple(grid) if grid is not None else default_grid(30.0),
                     policies=("acr", "rcr"), out=None if out is None else str(out))
    markets = spec.markets()
    # one envelope family per chunk; chunks are fixed by ``workers``
    with RowWriter(out, FIG6_COLUMNS) as w:
        rows = _map_chunks(_Fig6Worker(scalar_grid, tol), markets, workers, w.write)
    if out is not None:
        cfg = {"market": params_record(base), "solver": {"tol": tol},
               "sweep": {"grid": list(spec.grid), "workers": workers, "scalar_grid": scalar_grid}}
        write_manifest(_manifest_path(out), manifest or cfg, None, [out], ("sweep", "fig6"))
    return rows


# ---------------------------------------------------------------------------
# RCR against NCR on random markets
# ---------------------------------------------------------------------------

@dataclass
class Theorem2Report:
    rows: list
    violations: list
    max_gap: float
    redraws: int

    @property
    def n_pairs(self) -> int:
        return len(self.rows)

    @property
    def holds(self) -> bool:
        return not self.violations


def _draw_market(rng: np.random.Generator, ell: int, rate_range, theta_range) -> MarketParams:
    lo, hi = np.log(rate_range[0]), np.log(rate_range[1])
    lam = np.exp(rng.uniform(lo, hi, ell + 1))
    mu = np.exp(rng.uniform(lo, hi, ell + 1))
    theta = rng.uniform(*theta_range)
    return MarketParams(ell=ell, lam=tuple(lam), mu=tuple(mu), theta=float(theta))


def flexible_rows(rng: np.random.Generator, ell: int, n: int) -> list[np.ndarray]:
    """Flexible-agent rows: fixed grid points first, then Dirichlet(1) draws."""
    k = ell + 1
    if ell == 1:
        fixed = [np.array([1 - x, x]) for x in (0.0, 0.25, 0.5, 0.75, 1.0)]
    else:
        fixed = [np.eye(k)[q] for q in range(k)] + [np.full(k, 1.0 / k)]
    rows = fixed[:n]
    while len(rows) < n:
        rows.append(rng.dirichlet(np.ones(k)))
    return rows


THEOREM2_DEFAULTS = {
    1: {"rate_range": (1.0, 100.0), "theta_range": (0.5, 10.0), "eps": 1e-15, "budget": 30_000},
    2: {"rate_range": (0.3, 3.0), "theta_range": (2.0, 8.0), "eps": 1e-11, "budget": 40_000},
}


def theorem2_grid(ell: int, n_params: int, n_sigmas: int, seed: int, out=None,
                  budget: int | None = None, rate_range=None, theta_range=None,
                  eps: float | None = None, tol: float = 1e-9, max_redraws: int = 10_000,
                  manifest: dict | None = None) -> Theorem2Report:
    """Compare exact RCR and NCR throughput on random markets.

    Draws ``n_params`` markets (log-uniform rates, uniform ``theta``) and
    evaluates ``n_sigmas`` flexible-agent rows on each, specialized agents
    staying in their own queue.  A draw whose RCR chain would exceed
    ``budget`` states is discarded and redrawn; the count is reported.

    Unset ranges, ``eps`` and ``budget`` take per-``ell`` defaults from
    ``THEOREM2_DEFAULTS``.  With two specialized queues the chain has five
    cells, so the defaults keep queues short (``theta`` large against the
    rates) to stay within the budget.
    """
    if ell not in (1, 2):
        raise InputError("theorem2_grid supports ell = 1 or 2")
    if n_params < 1 or n_sigmas < 1:
        raise InputError("need at least one market and one profile")
    dflt = THEOREM2_DEFAULTS[ell]
    budget = budget or dflt["budget"]
    rate_range = rate_range or dflt["rate_range"]
    theta_range = theta_range or dflt["theta_range"]
    eps = eps or dflt["eps"]
    rng = EventStream(seed).rng("theorem2", ell)
    rcr = make_rcr(ell)
    support = np.zeros((ell + 1, ell + 1), dtype=bool)
    support[0] = True
    for i in range(1, ell + 1):
        support[i, rcr.queue_index(i)] = True
    cols = (["draw", "pair"] + [f"lam{i}" for i in range(ell + 1)]
            + [f"mu{i}" for i in range(ell + 1)] + ["theta"]
            + [f"sigma0{q}" for q in range(ell + 1)] + ["tp_rcr", "tp_ncr", "gap", "ok"])
    rows, violations = [], []
    redraws = 0
    max_gap = -math.inf
    with RowWriter(out, cols) as w:
        for d in range(n_params):
            while True:
                p = _draw_market(rng, ell, rate_range, theta_range)
                try:
                    fam = ChainFamily(p, rcr, support, eps=eps, budget=budget)
                    break
                except CapacityError as e:
                    redraws += 1
                    log.info("theorem2 redraw: %s", e)
                    if redraws > max_redraws:
                        raise
            tp_ncr = ncr_throughput(p, eps)
            for k, row0 in enumerate(flexible_rows(rng, ell, n_sigmas)):
                sigma = StrategyProfile.flexible_row(row0, ell)
                tp = fam.throughput(fam.stationary(sigma))
                gap = tp - tp_ncr
                ok = gap >= -tol
                max_gap = max(max_gap, gap)
                rec = {"draw": d, "pair": k, **{f"lam{i}": p.lam[i] for i in range(ell + 1)},
                       **{f"mu{i}": p.mu[i] for i in range(ell + 1)}, "theta": p.theta,
                       **{f"sigma0{q}": row0[q] for q in range(ell + 1)},
                       "tp_rcr": tp, "tp_ncr": tp_ncr, "gap": gap, "ok": ok}
                w.write(rec)
                rows.append(rec)
                if not ok:
                    violations.append({"market": params_record(p), "sigma0": list(row0),
                                       "seed": seed, "draw": d, "pair": k, "gap": gap})
    if out is not None:
        cfg = {"seed": seed, "sweep": {"ell": ell, "n_params": n_params, "n_sigmas": n_sigmas,
                                       "budget": budget}}
        info = {"rate_range": list(rate_range), "theta_range": list(theta_range), "eps": eps,
                "tol": tol, "redraws": redraws, "violations": violations, "max_gap": max_gap}
        write_manifest(_manifest_path(out), manifest or cfg, seed, [out], ("sweep", "thm2"), info)
    return Theorem2Report(rows, violations, max_gap, redraws)


# ---------------------------------------------------------------------------
# coupled value-of-flexibility suite
# ---------------------------------------------------------------------------

LEMMA_MARKET = MarketParams(ell=1, lam=(2.0, 3.0), mu=(2.0, 2.5), theta=1.0)
LEMMA_BASE_COUNTS = ((0, 0), (1, 0), (0, 1), (1, 1), (2, 1), (1, 3), (3, 2), (0, 4), (4, 0), (2, 5))


def place_agents(policy_kind: str, counts: Sequence[int]) -> SystemState:
    """Base state with ``counts[i]`` type-``i`` agents.

    Specialized agents sit in their own queue (the single queue under NCR).
    Flexible agents sit in the flexible queue, except under RCR where they
    are dealt round-robin over all queues.
    """
    ell = len(counts) - 1
    policy = make_policy(policy_kind, ell)
    state = SystemState.empty()
    for i in range(1, ell + 1):
        if counts[i]:
            q = policy.queues[0] if policy_kind == "ncr" else i
            state = state.add(i, q, counts[i])
    for k in range(counts[0]):
        q = policy.queues[k % len(policy.queues)] if policy_kind == "rcr" else policy.queues[0]
        state = state.add(0, q)
    return state


LEMMA_COLUMNS = ["policy", "patience", "base", "i", "horizon", "replications", "seed",
                 "first", "first_se", "second", "second_se", "ok"]


@dataclass
class LemmaReport:
    rows: list

    @property
    def failures(self) -> list:
        return [r for r in self.rows if not r["ok"]]

    @property
    def holds(self) -> bool:
        return not self.failures


def lemma_suite(seed: int, out=None, replications: int = 10_000,
                params: MarketParams = LEMMA_MARKET,
                base_counts: Sequence[Sequence[int]] = LEMMA_BASE_COUNTS,
                horizon_multiples: Sequence[float] = (1.0, 10.0),
                policies: Sequence[str] = ("acr", "ncr", "rcr"),
                patience: Sequence[str] = ("perfect", "K1"), z: float = 3.0,
                manifest: dict | None = None) -> LemmaReport:
    """Coupled dominance checks over base states, horizons, policies and patience models.

    Each configuration gets its own seed derived from ``seed`` and its
    position in the loop, recorded in the output so that any failure can be
    rerun alone.  Under limited patience RCR uses the pooled fallback.
    """
    models = {"perfect": PatienceModel.perfect(), "K1": PatienceModel.max_rejections(1)}
    for name in patience:
        if name not in models:
            raise InputError(f"unknown patience model {name!r}; use perfect or K1")
    seeds = np.random.SeedSequence(seed).generate_state(
        len(policies) * len(patience) * len(base_counts) * len(horizon_multiples) * params.ell,
        dtype=np.uint32)
    rows = []
    k = 0
    with RowWriter(out, LEMMA_COLUMNS) as w:
        for kind in policies:
            for pname in patience:
                p = params.replace(patience=models[pname])
                pooled = kind == "rcr" and pname != "perfect"
                for counts in base_counts:
                    base = place_agents(kind, counts)
                    for mult in horizon_multiples:
                        for i in range(1, params.ell + 1):
                            s = int(seeds[k])
                            k += 1
                            T = mult / p.theta
                            res = coupled_value_of_flexibility(p, kind, base, i, T, replications,
                                                               s, pooled=pooled)
                            row = {"policy": kind, "patience": pname,
                                   "base": "-".join(str(c) for c in counts), "i": i, "horizon": T,
                                   "replications": replications, "seed": s,
                                   "first": res.first, "first_se": res.first_se,
                                   "second": res.second, "second_se": res.second_se,
                                   "ok": res.holds(z)}
                            w.write(row)
                            rows.append(row)
    if out is not None:
        cfg = {"seed": seed, "market": params_record(params),
               "sim": {"replications": replications}}
        info = {"base_counts": [list(c) for c in base_counts],
                "horizon_multiples": list(horizon_multiples), "policies": list(policies),
                "patience": list(patience), "z": z}
        write_manifest(_manifest_path(out), manifest or cfg, seed, [out], ("sweep", "lemmas"),
                       info)
    return LemmaReport(rows)
