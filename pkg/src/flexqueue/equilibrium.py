"""Nash equilibria of the queue-joining game.

A profile is an equilibrium when no agent type puts mass on a queue whose
expected wait exceeds that type's best queue.  Two solvers:

* ``solve_scalar_two_type`` for two agent types.  Specialized agents stay in
  their own queue, so the profile is the single number ``x = sigma_01``.
  Equilibria are the sign changes of ``delta(x) = W00(x) - W01(x)`` plus the
  corners (``x = 1`` when ``delta(1) >= 0``, ``x = 0`` when ``delta(0) <= 0``).
* ``solve_projection`` for any number of types: a damped projected
  fixed-point iteration on per-type rescaled waits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .ctmc.chain import ChainFamily, WaitTable, dominating_caps, build_cells, queue_birth_rates
from .model import InputError, MarketParams, PolicySpec, StrategyProfile, make_acr, make_rcr

DEFAULT_EPS = 1e-9


# ---------------------------------------------------------------------------
# residuals and projection
# ---------------------------------------------------------------------------

def project_simplex(v: Sequence[float]) -> np.ndarray:
    """Euclidean projection of ``v`` onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise InputError("project_simplex expects a nonempty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.flatnonzero(u - css / k > 0)[-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


def ne_residual(sigma: np.ndarray, waits: np.ndarray, eps: float = DEFAULT_EPS) -> float:
    """``max`` over ``sigma_iq > eps`` of ``W_iq - min_q' W_iq'`` (0 if none).

    An infinite wait on a supported cell gives an infinite residual.
    """
    sigma = np.asarray(sigma, dtype=float)
    waits = np.asarray(waits, dtype=float)
    worst = 0.0
    for i in range(sigma.shape[0]):
        row = waits[i]
        best = np.nanmin(row)
        for q in np.flatnonzero(sigma[i] > eps):
            w = row[q]
            if math.isinf(w) and math.isinf(best):
                continue
            gap = w - best
            worst = max(worst, gap)
    return float(worst)


def rescale_waits(waits: np.ndarray, support: np.ndarray, mode: str = "relative") -> np.ndarray:
    """Per-type positive affine rescaling of a wait table.

    Infinite entries are first replaced by the row's largest finite entry
    plus one.  ``"minmax"`` maps each row onto ``[0, 1]``; ``"relative"``
    subtracts the row minimum and divides by the row maximum, which keeps
    small wait differences small near an interior equilibrium.
    """
    W = np.array(waits, dtype=float)
    out = np.zeros_like(W)
    for i in range(W.shape[0]):
        cols = np.flatnonzero(support[i])
        row = W[i, cols]
        finite = np.isfinite(row)
        if not finite.any():
            continue
        row = np.where(finite, row, row[finite].max() + 1.0)
        lo, hi = row.min(), row.max()
        if mode == "minmax":
            scaled = (row - lo) / (hi - lo) if hi > lo else np.zeros_like(row)
        elif mode == "relative":
            scaled = (row - lo) / hi if hi > 0 else np.zeros_like(row)
        else:
            raise InputError(f"unknown rescaling mode {mode!r}")
        out[i, cols] = scaled
    return out


# ---------------------------------------------------------------------------
# wait evaluation
# ---------------------------------------------------------------------------

def default_support(params: MarketParams, policy: PolicySpec) -> np.ndarray:
    """Flexible agents may join any queue; specialized type ``i`` joins
    queue ``i`` when it exists and the first queue otherwise."""
    S = np.zeros((params.ell + 1, len(policy.queues)), dtype=bool)
    S[0] = True
    for i in range(1, params.ell + 1):
        S[i, policy.queue_index(i) if i in policy.queues else 0] = True
    return S


def envelope_family(params_list: Sequence[MarketParams], policy: PolicySpec, support,
                    eps: float = 1e-10, **kw) -> ChainFamily:
    """One family whose caps cover every market in ``params_list``."""
    support = np.asarray(support, dtype=bool)
    cells = build_cells(policy, support)
    caps = np.zeros(len(policy.queues), dtype=int)
    for p in params_list:
        caps = np.maximum(caps, dominating_caps(p, policy, cells,
                                                queue_birth_rates(p, policy, support), eps))
    return ChainFamily(params_list[0], policy, support, caps=tuple(int(c) for c in caps), **kw)


class WaitEvaluator:
    """Wait tables and throughputs for one market/policy over many profiles."""

    def __init__(self, params: MarketParams, policy: PolicySpec, support=None,
                 family: ChainFamily | None = None, eps: float = 1e-10, **kw):
        self.params = params
        self.policy = policy
        self.support = default_support(params, policy) if support is None else np.asarray(support, bool)
        self.family = family or ChainFamily(params, policy, self.support, eps=eps, **kw)
        self.calls = 0

    def table(self, sigma: StrategyProfile, pairs=None) -> WaitTable:
        self.calls += 1
        if pairs is None:
            pairs = [(i, q) for i in range(self.params.ell + 1)
                     for qi, q in enumerate(self.policy.queues)]
        dist = self.family.stationary(sigma, self.params)
        return self.family.wait_table(sigma, pairs, dist, self.params)

    def throughput(self, sigma: StrategyProfile) -> float:
        return self.family.throughput(self.family.stationary(sigma, self.params), self.params)


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquilibriumResult:
    sigma_star: StrategyProfile
    wait_table: WaitTable | None
    residual: float
    iterations: int
    method: str
    converged: bool = True
    kind: str = ""            # "corner" or "interior" for the scalar solver
    degenerate: bool = False  # delta is flat in sigma_01

    @property
    def sigma01(self) -> float:
        return float(self.sigma_star.sigma[0, 1])


@dataclass(frozen=True)
class ResidualReport:
    residual: float
    ok: bool
    waits: WaitTable


def verify_ne(params: MarketParams, policy: PolicySpec, sigma: StrategyProfile,
              eps: float = DEFAULT_EPS, tol: float = 1e-6, evaluator: WaitEvaluator | None = None,
              **kw) -> ResidualReport:
    """Equilibrium residual of ``sigma`` from a fresh wait computation."""
    sigma.check_against(params, policy)
    if evaluator is None:
        support = default_support(params, policy) | (np.asarray(sigma.sigma) > 0)
        evaluator = WaitEvaluator(params, policy, support, **kw)
    W = evaluator.table(sigma)
    r = ne_residual(sigma.sigma, W.waits, eps)
    return ResidualReport(residual=r, ok=r <= tol, waits=W)


# ---------------------------------------------------------------------------
# two-type scalar solver
# ---------------------------------------------------------------------------

class TwoTypeDelta:
    """``x -> W00(x) - W01(x)`` with memoisation."""

    def __init__(self, evaluator: WaitEvaluator):
        self.ev = evaluator
        self.cache: dict[float, float] = {}

    def __call__(self, x: float) -> float:
        x = float(min(max(x, 0.0), 1.0))
        if x not in self.cache:
            W = self.ev.table(StrategyProfile.two_type(x), pairs=[(0, 0), (0, 1)])
            self.cache[x] = W[0, 0] - W[0, 1]
        return self.cache[x]


def _check_two_type(params, policy):
    if params.ell != 1:
        raise InputError("the scalar solver needs ell = 1")
    if len(policy.queues) != 2:
        raise InputError("the scalar solver needs a two-queue policy (acr or rcr)")


def _delta_residual(x: float, d: float, eps: float) -> float:
    """Flexible-row residual from ``d = W00 - W01`` at ``sigma_01 = x``."""
    r = 0.0
    if x > eps:          # mass on queue 1
        r = max(r, -d)
    if 1.0 - x > eps:    # mass on queue 0
        r = max(r, d)
    return r


def _finish(params, policy, ev, x, kind, iterations, method, eps, degenerate=False,
            full_table=True, delta=None):
    sigma = StrategyProfile.two_type(x)
    if full_table:
        W = ev.table(sigma)
        res = ne_residual(sigma.sigma, W.waits, eps)
    else:
        W = None
        res = _delta_residual(x, delta(x), eps)
    return EquilibriumResult(sigma_star=sigma, wait_table=W, residual=res, iterations=iterations,
                             method=method, converged=True, kind=kind, degenerate=degenerate)


def solve_scalar_two_type(params: MarketParams, policy: PolicySpec,
                          grid: Sequence[float] | int = 11, tol: float = 1e-7,
                          which: str = "all", evaluator: WaitEvaluator | None = None,
                          eps: float = DEFAULT_EPS, flat_tol: float = 1e-9,
                          full_table: bool = True) -> list[EquilibriumResult]:
    """Equilibria in ``sigma_01`` for two types, specialized agents fixed in queue 1.

    ``which="all"`` scans the whole grid and returns every corner and
    bracketed interior equilibrium in increasing order.  ``"largest"`` and
    ``"smallest"`` scan from one end and stop at the first equilibrium, which
    is the extreme one unless a pair of roots hides between grid points.
    Interior roots are refined with Brent's method to ``tol``.
    """
    _check_two_type(params, policy)
    if which not in ("all", "largest", "smallest"):
        raise InputError(f"which must be all, largest or smallest, got {which!r}")
    if isinstance(grid, int):
        grid = np.linspace(0.0, 1.0, grid)
    grid = np.unique(np.clip(np.concatenate([[0.0], np.asarray(grid, float), [1.0]]), 0, 1))
    if evaluator is None:
        support = np.array([[True, True], [False, True]])
        evaluator = WaitEvaluator(params, policy, support)
    delta = TwoTypeDelta(evaluator)
    method = f"scalar-{which}"

    def refine(a, b):
        fa, fb = delta(a), delta(b)
        if fa == 0:
            return a
        if fb == 0:
            return b
        return brentq(delta, a, b, xtol=tol, rtol=4 * np.finfo(float).eps)

    def out(xs_kinds, degenerate=False):
        return [_finish(params, policy, evaluator, x, k, len(delta.cache), method, eps,
                        degenerate, full_table, delta) for x, k in xs_kinds]

    if which == "largest":
        if delta(1.0) >= 0:
            return out([(1.0, "corner")])
        desc = grid[::-1]
        for hi, lo in zip(desc[:-1], desc[1:]):
            if delta(lo) >= 0:
                return out([(refine(lo, hi), "interior")])
        return out([(0.0, "corner")])
    if which == "smallest":
        if delta(0.0) <= 0:
            return out([(0.0, "corner")])
        for lo, hi in zip(grid[:-1], grid[1:]):
            if delta(hi) <= 0:
                return out([(refine(lo, hi), "interior")])
        return out([(1.0, "corner")])

    vals = np.array([delta(x) for x in grid])
    degenerate = bool(np.ptp(vals) <= flat_tol * max(1.0, np.abs(vals).max()))
    found = []
    if vals[0] <= 0:
        found.append((0.0, "corner"))
    for k in range(len(grid) - 1):
        a, b = vals[k], vals[k + 1]
        if a > 0 and b < 0 or a < 0 and b > 0:
            found.append((refine(grid[k], grid[k + 1]), "interior"))
        elif b == 0 and 0 < k + 1 < len(grid) - 1:
            found.append((float(grid[k + 1]), "interior"))
    if vals[-1] >= 0:
        found.append((1.0, "corner"))
    return out(sorted(set(found)), degenerate)


# ---------------------------------------------------------------------------
# projection solver
# ---------------------------------------------------------------------------

def solve_projection(params: MarketParams, policy: PolicySpec, sigma_init: StrategyProfile,
                     step: float = 1.0, damping: float = 0.5, max_iter: int = 500,
                     tol: float = 1e-6, eps: float = DEFAULT_EPS, scaling: str = "relative",
                     support=None, evaluator: WaitEvaluator | None = None) -> EquilibriumResult:
    """Damped projected iteration ``sigma <- (1-d) sigma + d P(sigma - step * W_hat)``.

    Each row is projected onto the simplex over the queues its type may
    join (``support``; by default flexible agents anywhere and specialized
    agents in their own queue).  Stops when the equilibrium residual is at
    most ``tol``; otherwise returns the best iterate with ``converged=False``.
    """
    sigma_init.check_against(params, policy)
    if not 0 < damping <= 1:
        raise InputError("damping must lie in (0, 1]")
    if step <= 0:
        raise InputError("step must be positive")
    if evaluator is None:
        support = default_support(params, policy) if support is None else np.asarray(support, bool)
        evaluator = WaitEvaluator(params, policy, support)
    support = evaluator.support
    s = np.array(sigma_init.sigma, dtype=float)
    if np.any(s[~support] > 0):
        raise InputError("initial profile puts mass outside the support")
    best = None
    for it in range(1, max_iter + 1):
        sigma = StrategyProfile(s)
        W = evaluator.table(sigma)
        r = ne_residual(s, W.waits, eps)
        if best is None or r < best[0]:
            best = (r, sigma, W, it)
        if r <= tol:
            return EquilibriumResult(sigma, W, r, it, f"projection-{scaling}", True)
        scaled = rescale_waits(W.waits, support, scaling)
        new = np.zeros_like(s)
        for i in range(s.shape[0]):
            cols = np.flatnonzero(support[i])
            proj = project_simplex(s[i, cols] - step * scaled[i, cols])
            row = (1 - damping) * s[i, cols] + damping * proj
            row = np.where(row < 1e-15, 0.0, row)
            new[i, cols] = row / row.sum()
        s = new
    r, sigma, W, it = best
    return EquilibriumResult(sigma, W, r, max_iter, f"projection-{scaling}", False)


# ---------------------------------------------------------------------------
# ACR versus RCR
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BraessRow:
    params: MarketParams
    sigma_acr: float
    sigma_rcr: float
    tp_acr: float
    tp_rcr: float
    residual_acr: float
    residual_rcr: float


def braess_comparison(params_grid: Sequence[MarketParams], grid: Sequence[float] | int = 5,
                      tol: float = 1e-7, eps: float = 1e-10) -> list[BraessRow]:
    """Smallest ACR and largest RCR equilibrium per market, with throughputs.

    All markets must share ``theta`` and the patience model; one chain
    family per policy is built with caps covering the whole grid.
    """
    if not params_grid:
        return []
    support = np.array([[True, True], [False, True]])
    acr, rcr = make_acr(1), make_rcr(1)
    fam_a = envelope_family(params_grid, acr, support, eps)
    fam_r = envelope_family(params_grid, rcr, support, eps)
    rows = []
    for p in params_grid:
        ev_a = WaitEvaluator(p, acr, support, family=fam_a)
        ev_r = WaitEvaluator(p, rcr, support, family=fam_r)
        ea = solve_scalar_two_type(p, acr, grid, tol, "smallest", ev_a, full_table=False)[0]
        er = solve_scalar_two_type(p, rcr, grid, tol, "largest", ev_r, full_table=False)[0]
        rows.append(BraessRow(p, ea.sigma01, er.sigma01,
                              ev_a.throughput(ea.sigma_star), ev_r.throughput(er.sigma_star),
                              ea.residual, er.residual))
    return rows

