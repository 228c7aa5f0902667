"""Full-information matching policies on a small truncated state space.

Here the platform sees the type of every waiting agent and, on each job
arrival, picks which compatible type to match (or drops the job).  The state
is the vector of agent counts per type.  Agent arrivals are turned away once
the truncation bound is hit: with ``truncation="total"`` the bound applies to
the total head count, with ``"box"`` to every type separately.

Two routes find the best stationary policy on the truncated chain:
exhaustive enumeration of every deterministic policy (batched linear solves)
and average-reward policy iteration.  Both are compared against ACR.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..model import InputError, MarketParams, compatible, full_info_policy_table

LOSE = -1


class FullInfoSpace:
    """States, agent-side generator and per-action job transitions."""

    def __init__(self, params: MarketParams, bound: int, truncation: str = "total"):
        if int(bound) != bound or bound <= 0:
            raise InputError(f"truncation bound must be a positive integer, got {bound!r}")
        if truncation not in ("total", "box"):
            raise InputError(f"truncation must be 'total' or 'box', got {truncation!r}")
        self.params = params
        self.bound = int(bound)
        self.truncation = truncation
        k = params.ell + 1
        boxes = itertools.product(range(self.bound + 1), repeat=k)
        if truncation == "total":
            self.states = [A for A in boxes if sum(A) <= self.bound]
        else:
            self.states = list(boxes)
        self.index = {A: n for n, A in enumerate(self.states)}
        n = len(self.states)
        base = np.zeros((n, n))
        for s, A in enumerate(self.states):
            for i in range(k):
                up = A[:i] + (A[i] + 1,) + A[i + 1:]
                if up in self.index and params.lam[i] > 0:
                    base[s, self.index[up]] += params.lam[i]
                if A[i] > 0:
                    base[s, self.index[self._minus(A, i)]] += A[i] * params.theta
        base -= np.diag(base.sum(axis=1))
        self.base = base

    @staticmethod
    def _minus(A, i):
        return A[:i] + (A[i] - 1,) + A[i + 1:]

    @property
    def n_states(self) -> int:
        return len(self.states)

    def actions(self, s: int, job: int) -> list[int]:
        """Admissible deterministic actions: drop the job or match a present compatible type."""
        A = self.states[s]
        return [LOSE] + [i for i in range(self.params.ell + 1) if A[i] > 0 and compatible(i, job)]

    def target(self, s: int, action: int) -> int:
        return s if action == LOSE else self.index[self._minus(self.states[s], action)]

    def evaluate(self, choose) -> tuple[float, np.ndarray]:
        """Gain and stationary law of the (possibly randomised) policy
        ``choose(s, job) -> {action: prob}``."""
        Q = self.base.copy()
        r = np.zeros(self.n_states)
        for s in range(self.n_states):
            for j, mu_j in enumerate(self.params.mu):
                for action, p in choose(s, j).items():
                    if action == LOSE or p == 0:
                        continue
                    t = self.target(s, action)
                    Q[s, t] += mu_j * p
                    Q[s, s] -= mu_j * p
                    r[s] += mu_j * p
        pi = _stationary_dense(Q)
        return float(pi @ r), pi


def _stationary_dense(Q: np.ndarray) -> np.ndarray:
    A = np.swapaxes(Q, -1, -2).copy()
    A[..., 0, :] = 1.0
    b = np.zeros(Q.shape[-1])
    b[0] = 1.0
    if Q.ndim == 2:
        return np.linalg.solve(A, b)
    return np.linalg.solve(A, np.broadcast_to(b, Q.shape[:-1])[..., None])[..., 0]


def acr_choice(space: FullInfoSpace):
    """ACR in full information: own type first, flexible as fallback."""
    def choose(s, j):
        A = space.states[s]
        if j > 0 and A[j] > 0:
            return {j: 1.0}
        if A[0] > 0:
            return {0: 1.0}
        return {LOSE: 1.0}
    return choose


def table_choice(space: FullInfoSpace, table: dict):
    """Adapter for tables produced by :func:`flexqueue.model.full_info_policy_table`."""
    def choose(s, j):
        return table[(space.states[s], j)]
    return choose


def full_info_throughput(params: MarketParams, kind: str, bound: int,
                         truncation: str = "box") -> float:
    """Throughput of the full-information ACR or NCR table on the truncated space."""
    space = FullInfoSpace(params, bound, truncation)
    table = full_info_policy_table(params, kind, bound)
    return space.evaluate(table_choice(space, table))[0]


def enumerate_deterministic(space: FullInfoSpace, chunk: int = 16384):
    """Gains of every deterministic stationary policy.

    Returns ``(gains, decode)`` where ``decode(k)`` maps a policy number to
    its ``{(state, job): action}`` dictionary.
    """
    pairs = [(s, j) for s in range(space.n_states) for j in range(space.params.ell + 1)]
    options = [space.actions(s, j) for s, j in pairs]
    radix = np.array([len(o) for o in options], dtype=np.int64)
    total = int(np.prod(radix))
    n = space.n_states
    mu = space.params.mu
    # contribution of each (pair, option) to Q and to the reward
    dQ = []
    dr = []
    for (s, j), opts in zip(pairs, options):
        mats, rews = [], []
        for action in opts:
            M = np.zeros((n, n))
            rr = np.zeros(n)
            if action != LOSE:
                M[s, space.target(s, action)] += mu[j]
                M[s, s] -= mu[j]
                rr[s] = mu[j]
            mats.append(M)
            rews.append(rr)
        dQ.append(np.array(mats))
        dr.append(np.array(rews))
    gains = np.empty(total)
    for start in range(0, total, chunk):
        ks = np.arange(start, min(total, start + chunk))
        digits = _mixed_radix(ks, radix)
        Q = np.broadcast_to(space.base, (len(ks), n, n)).copy()
        r = np.zeros((len(ks), n))
        for p in range(len(pairs)):
            Q += dQ[p][digits[:, p]]
            r += dr[p][digits[:, p]]
        pi = _stationary_dense(Q)
        gains[start:start + len(ks)] = np.einsum("ks,ks->k", pi, r)

    def decode(k):
        d = _mixed_radix(np.array([k]), radix)[0]
        return {pairs[p]: options[p][d[p]] for p in range(len(pairs))}

    return gains, decode


def _mixed_radix(ks: np.ndarray, radix: np.ndarray) -> np.ndarray:
    out = np.empty((len(ks), len(radix)), dtype=np.int64)
    rem = ks.copy()
    for p in range(len(radix) - 1, -1, -1):
        out[:, p] = rem % radix[p]
        rem //= radix[p]
    return out


def policy_iteration(space: FullInfoSpace, max_iter: int = 200) -> tuple[float, dict]:
    """Average-reward policy iteration; returns the optimal gain and a policy."""
    n = space.n_states
    jobs = range(space.params.ell + 1)
    mu = space.params.mu
    policy = {(s, j): LOSE for s in range(n) for j in jobs}

    def rates(pol):
        Q = space.base.copy()
        r = np.zeros(n)
        for (s, j), a in pol.items():
            if a != LOSE:
                Q[s, space.target(s, a)] += mu[j]
                Q[s, s] -= mu[j]
                r[s] += mu[j]
        return Q, r

    for _ in range(max_iter):
        Q, r = rates(policy)
        # g * 1 - Q h = r with h[0] = 0
        M = np.column_stack([np.ones(n), -Q[:, 1:]])
        sol = np.linalg.solve(M, r)
        g, h = sol[0], np.concatenate([[0.0], sol[1:]])
        changed = False
        new = {}
        for (s, j), cur in policy.items():
            def value(a):
                return 0.0 if a == LOSE else mu[j] * (1.0 + h[space.target(s, a)] - h[s])
            best = max(space.actions(s, j), key=value)
            if value(best) > value(cur) + 1e-12:
                new[(s, j)] = best
                changed = True
            else:
                new[(s, j)] = cur
        policy = new
        if not changed:
            return float(g), policy
    raise RuntimeError("policy iteration did not stabilise")


@dataclass(frozen=True)
class DominanceReport:
    acr: float
    best_enumerated: float
    best_policy: dict
    policy_iteration: float
    n_policies: int
    n_violations: int
    tol: float

    @property
    def holds(self) -> bool:
        return self.n_violations == 0


def acr_dominance_check(params: MarketParams, bound: int = 3, truncation: str = "total",
                        tol: float = 1e-9) -> DominanceReport:
    """Compare ACR against every deterministic full-information policy."""
    if params.ell != 1:
        raise InputError("the exhaustive check is sized for ell = 1")
    space = FullInfoSpace(params, bound, truncation)
    acr, _ = space.evaluate(acr_choice(space))
    gains, decode = enumerate_deterministic(space)
    best = int(np.argmax(gains))
    pi_gain, _ = policy_iteration(space)
    return DominanceReport(acr=acr, best_enumerated=float(gains[best]), best_policy=decode(best),
                           policy_iteration=pi_gain, n_policies=len(gains),
                           n_violations=int(np.sum(gains > acr + tol)), tol=tol)
