"""Birth-death chains: product-form stationary laws and first-passage times.

These are the one-dimensional reductions of the two-type ACR market.  Queue 1
under ACR is only served by type-1 jobs, so its head count is an M/M/1+M
(Erlang-A) chain with births ``lam1 + lam0 * sigma01``, service ``mu1`` and
abandonment ``theta`` per waiting agent.  Two passage times on that chain are
compared here:

* ``Y^c(n)``: time until a type-1 job finds queue 1 empty, from ``n`` agents;
* ``W01(n)``: time until a non-abandoning flexible agent placed behind ``n``
  others in queue 1 is matched (uniform dispatch inside the queue).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..model import InputError, MarketParams

RateFn = Callable[[np.ndarray], np.ndarray]


class NoAbsorptionError(ValueError):
    """Every absorption rate of a birth-death passage problem is zero."""


def _as_rates(fn, n: np.ndarray) -> np.ndarray:
    if callable(fn):
        out = np.asarray(fn(n), dtype=float)
        if out.ndim == 0:
            out = np.full(n.shape, float(out))
    else:
        out = np.asarray(fn, dtype=float)
        if out.ndim == 0:
            out = np.full(n.shape, float(out))
    if out.shape != n.shape:
        raise InputError(f"rate function returned shape {out.shape}, expected {n.shape}")
    return out


@dataclass(frozen=True)
class BirthDeathSpec:
    """Rates of a birth-death chain on ``0..cap`` with killing.

    ``up``, ``down`` and ``absorb`` are either callables of the state vector
    ``n = 0..cap`` or arrays/scalars.  The chain is reflected at ``cap``
    (no births there) and ``down`` is ignored at ``n = 0``.
    """

    up: RateFn
    down: RateFn
    absorb: RateFn
    cap: int

    def __post_init__(self):
        if int(self.cap) != self.cap or self.cap < 1:
            raise InputError(f"cap must be an integer >= 1, got {self.cap!r}")
        object.__setattr__(self, "cap", int(self.cap))

    def rates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = np.arange(self.cap + 1)
        up = _as_rates(self.up, n).copy()
        down = _as_rates(self.down, n).copy()
        absorb = _as_rates(self.absorb, n).copy()
        if np.any(up < 0) or np.any(down < 0) or np.any(absorb < 0):
            raise InputError("birth-death rates must be nonnegative")
        up[-1] = 0.0
        down[0] = 0.0
        return up, down, absorb


def solve_birth_death_passage(spec: BirthDeathSpec) -> np.ndarray:
    """Expected time to absorption from each state ``0..cap``.

    Solves ``(up + down + absorb)(n) tau(n) = 1 + up(n) tau(n+1) + down(n) tau(n-1)``
    by elimination upwards from 0 then back substitution.  The diagonal is
    never formed by subtraction: each pivot is ``up(n)`` plus the rate of
    leaving without coming back below ``n``, which is carried separately.
    All terms stay positive, so the relative accuracy holds even when the
    passage times are astronomically long.
    """
    up, down, absorb = spec.rates()
    if not np.any(absorb > 0):
        raise NoAbsorptionError("no state has a positive absorption rate")
    size = spec.cap + 1
    pivot = np.empty(size)
    rhs = np.empty(size)
    excess = 0.0
    prev_pivot, prev_rhs = 1.0, 0.0
    for n in range(size):
        share = down[n] / prev_pivot if n else 0.0
        excess = absorb[n] + share * excess
        pivot[n] = up[n] + excess
        if pivot[n] <= 0:
            raise NoAbsorptionError(f"state {n} can never reach absorption")
        rhs[n] = 1.0 + share * prev_rhs
        prev_pivot, prev_rhs = pivot[n], rhs[n]
    if excess <= 0:
        raise NoAbsorptionError("absorption is not certain from every state")
    tau = np.empty(size)
    nxt = 0.0
    for n in range(size - 1, -1, -1):
        nxt = tau[n] = (rhs[n] + up[n] * nxt) / pivot[n]
    if not np.all(np.isfinite(tau)):
        raise NoAbsorptionError("absorption is not certain from every state")
    return tau


def product_form(birth, death, cap: int) -> np.ndarray:
    """Stationary law of a birth-death chain on ``0..cap``.

    ``birth(n)`` is the rate ``n -> n+1`` and ``death(n)`` the rate
    ``n -> n-1``; both may be callables or arrays.  Computed in log space so
    long chains do not overflow.
    """
    n = np.arange(cap + 1)
    b = _as_rates(birth, n)
    d = _as_rates(death, n)
    if cap == 0:
        return np.ones(1)
    if np.any(d[1:] <= 0):
        raise InputError("death rates must be positive above state 0")
    with np.errstate(divide="ignore"):
        steps = np.log(b[:-1]) - np.log(d[1:])
    logp = np.concatenate([[0.0], np.cumsum(steps)])
    logp -= logp.max()
    p = np.exp(logp)
    return p / p.sum()


def mm1m_stationary(birth: float, service: float, theta: float, cap: int) -> np.ndarray:
    """M/M/1+M head-count law with constant birth rate, truncated at ``cap``."""
    return product_form(birth, lambda n: np.where(n > 0, service + n * theta, 0.0), cap)


def mm1m_tail_cap(birth: float, service: float, theta: float, eps: float,
                  max_cap: int = 100_000) -> int:
    """Smallest ``N`` with ``P(n >= N) <= eps`` for the untruncated M/M/1+M chain."""
    if birth <= 0:
        return 1
    # walk the unnormalised weights in log space until the remaining tail is negligible
    logw = [0.0]
    n = 0
    while True:
        n += 1
        logw.append(logw[-1] + np.log(birth) - np.log(service + n * theta))
        if n > (birth - service) / theta + 1 and logw[-1] - max(logw) < np.log(eps) - 40:
            break
        if n >= max_cap:
            break
    w = np.exp(np.array(logw) - max(logw))
    p = w / w.sum()
    tail = np.cumsum(p[::-1])[::-1]      # tail[k] = P(n >= k)
    ok = np.flatnonzero(tail <= eps)
    return max(1, int(ok[0])) if ok.size else n


def _acr_queue1_rates(params: MarketParams, sigma01: float):
    if params.ell != 1:
        raise InputError("the two-type reduction needs ell = 1")
    if not 0.0 <= sigma01 <= 1.0:
        raise InputError(f"sigma01 must lie in [0, 1], got {sigma01!r}")
    birth = float(params.lam[1] + params.lam[0] * sigma01)
    return birth, float(params.mu[1]), params.theta


def yc_spec(params: MarketParams, sigma01: float, cap: int) -> BirthDeathSpec:
    """Passage to 'type-1 job meets an empty queue 1'."""
    birth, mu1, theta = _acr_queue1_rates(params, sigma01)
    return BirthDeathSpec(up=birth,
                          down=lambda n: n * theta + mu1,
                          absorb=lambda n: np.where(n == 0, mu1, 0.0),
                          cap=cap)


def w01_spec(params: MarketParams, sigma01: float, cap: int) -> BirthDeathSpec:
    """Passage to the match of a tagged flexible agent behind ``n`` others in queue 1."""
    birth, mu1, theta = _acr_queue1_rates(params, sigma01)
    return BirthDeathSpec(up=birth,
                          down=lambda n: n * theta + n * mu1 / (n + 1),
                          absorb=lambda n: mu1 / (n + 1),
                          cap=cap)


@dataclass(frozen=True)
class GapReport:
    """Stationary averages of the two passage times and the explicit lower
    bound on their difference."""

    yc: float
    w01: float
    gap_bound: float
    yc_by_state: np.ndarray
    w01_by_state: np.ndarray
    probs: np.ndarray

    @property
    def difference(self) -> float:
        return self.yc - self.w01

    @property
    def holds(self) -> bool:
        return self.difference >= self.gap_bound


def queue1_cap(params: MarketParams, sigma01: float, eps: float = 1e-14) -> int:
    birth, mu1, theta = _acr_queue1_rates(params, sigma01)
    return mm1m_tail_cap(birth, mu1, theta, eps)


def yc_wait_gap(params: MarketParams, sigma01: float, cap: int | None = None,
                tol: float = 1e-9) -> GapReport:
    """Average ``Y^c`` and ``W01`` over the queue-1 stationary law and check
    ``E[Y^c] - E[W01] >= p_0 * birth * g_1 / (2 (mu1 + theta))``.

    Raises ``AssertionError`` if the inequality fails by more than ``tol``.
    """
    birth, mu1, theta = _acr_queue1_rates(params, sigma01)
    if cap is None:
        cap = queue1_cap(params, sigma01)
    p = mm1m_stationary(birth, mu1, theta, cap)
    yc_n = solve_birth_death_passage(yc_spec(params, sigma01, cap))
    w_n = solve_birth_death_passage(w01_spec(params, sigma01, cap))
    g1 = 1.0 / (birth + mu1 + theta)
    gap = p[0] * birth * g1 / (2.0 * (mu1 + theta))
    rep = GapReport(yc=float(p @ yc_n), w01=float(p @ w_n), gap_bound=float(gap),
                    yc_by_state=yc_n, w01_by_state=w_n, probs=p)
    if rep.difference < gap - tol:
        raise AssertionError(
            f"E[Y^c] - E[W01] = {rep.difference:.12g} below bound {gap:.12g}")
    return rep
