"""Truncated Markov chain of the matching market.

State.  Agents sitting in one queue are grouped into *cells*.  A cell holds
the agent types of that queue which accept exactly the same jobs among those
the policy ever offers to the queue; dispatch cannot tell them apart, so
merging them is an exact lumping (e.g. ACR queue 1 holds flexible and type-1
agents in one cell).  With ``lump=False`` every type gets its own cell.

Truncation.  Each queue has a cap on its *total* head count; an agent that
arrives to a full queue is turned away (self-loop), so the generator stays
conservative.  Caps are picked from a birth-death chain that stochastically
dominates the queue length: births at the full arrival rate into the queue,
deaths ``n * theta`` plus the rate of jobs that always match in that queue
when it is nonempty.

Generator.  For a fixed cell layout the generator is affine in the strategy
profile, ``Q(sigma) = F + sum_c w_c(sigma) A_c`` with ``w_c`` the arrival rate
into cell ``c``.  :class:`ChainFamily` keeps ``F`` and the ``A_c`` so that
equilibrium searches can rebuild ``Q`` (and the tagged-agent matrices) for a
new ``sigma`` without redoing the state enumeration or dispatch resolution.
"""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from ..model import (Cell, InputError, MarketParams, PolicySpec, StrategyProfile,
                     SystemState, compatible, dispatch_kernel)
from . import linalg
from .birth_death import mm1m_tail_cap

DEFAULT_EPS = 1e-10
DEFAULT_BUDGET = 400_000


class CapacityError(RuntimeError):
    """The truncated state space would exceed the configured budget."""

    def __init__(self, required: int, budget: int):
        super().__init__(f"state space needs {required} states, budget is {budget}")
        self.required = int(required)
        self.budget = int(budget)


# ---------------------------------------------------------------------------
# layout
# ---------------------------------------------------------------------------

def default_support(policy: PolicySpec, sigma: StrategyProfile) -> np.ndarray:
    return np.asarray(sigma.sigma) > 0


def build_cells(policy: PolicySpec, support: np.ndarray, lump: bool = True) -> list[Cell]:
    """Cells in queue order; within a queue, ordered by smallest member type."""
    support = np.asarray(support, dtype=bool)
    cells = []
    for qi, q in enumerate(policy.queues):
        present = [i for i in range(support.shape[0]) if support[i, qi]]
        if not lump:
            cells.extend(Cell(q, (i,)) for i in present)
            continue
        jobs = policy.jobs_reaching(q)
        groups: dict[tuple, list[int]] = {}
        for i in present:
            groups.setdefault(tuple(compatible(i, j) for j in jobs), []).append(i)
        for members in sorted(groups.values(), key=min):
            cells.append(Cell(q, tuple(members)))
    return cells


@functools.lru_cache(maxsize=64)
def _compositions(parts: int, total: int) -> np.ndarray:
    """All vectors of ``parts`` nonnegative ints with sum <= ``total``, lexicographic."""
    if parts == 0:
        return np.zeros((1, 0), dtype=np.int64)
    blocks = []
    for k in range(total + 1):
        rest = _compositions(parts - 1, total - k)
        blocks.append(np.hstack([np.full((rest.shape[0], 1), k, dtype=np.int64), rest]))
    out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def _n_compositions(parts: int, total: int) -> int:
    return math.comb(total + parts, parts)


@dataclass
class _QueueBlock:
    cells: list[int]             # global cell indices living in this queue
    cap: int
    local: np.ndarray            # (size, len(cells)) counts
    inc: np.ndarray              # (size, len(cells)) local target or -1
    dec: np.ndarray

    @property
    def size(self) -> int:
        return self.local.shape[0]


def _queue_block(cell_ids: list[int], cap: int) -> _QueueBlock:
    m = len(cell_ids)
    local = _compositions(m, cap)
    size = local.shape[0]
    base = cap + 1
    weights = base ** np.arange(m - 1, -1, -1, dtype=np.int64) if m else np.zeros(0, np.int64)
    keys = local @ weights if m else np.zeros(size, np.int64)
    inc = np.full((size, m), -1, dtype=np.int64)
    dec = np.full((size, m), -1, dtype=np.int64)
    room = local.sum(axis=1) < cap
    for d in range(m):
        up = np.flatnonzero(room)
        inc[up, d] = np.searchsorted(keys, keys[up] + weights[d])
        down = np.flatnonzero(local[:, d] > 0)
        dec[down, d] = np.searchsorted(keys, keys[down] - weights[d])
    return _QueueBlock(cell_ids, cap, local, inc, dec)


class ChainLayout:
    """Enumerated truncated state space for a fixed set of cells and caps.

    States are ordered queue-major, lexicographically in the cell counts, so
    the ordinal of a state is a mixed-radix number over per-queue indices.
    """

    def __init__(self, policy: PolicySpec, cells: Sequence[Cell], caps: Sequence[int],
                 budget: int = DEFAULT_BUDGET):
        self.policy = policy
        self.cells = tuple(cells)
        caps = tuple(int(c) for c in caps)
        if len(caps) != len(policy.queues):
            raise InputError(f"need one cap per queue ({len(policy.queues)}), got {len(caps)}")
        if any(c < 1 for c in caps):
            raise InputError("caps must be >= 1")
        self.caps = caps
        per_queue = [[k for k, c in enumerate(self.cells) if c.queue == q] for q in policy.queues]
        required = 1
        for ids, cap in zip(per_queue, caps):
            required *= _n_compositions(len(ids), cap)
        if required > budget:
            raise CapacityError(required, budget)
        self.blocks = [_queue_block(ids, cap) for ids, cap in zip(per_queue, caps)]
        sizes = [b.size for b in self.blocks]
        self.n_states = int(np.prod(sizes))
        strides = np.ones(len(sizes), dtype=np.int64)
        for q in range(len(sizes) - 2, -1, -1):
            strides[q] = strides[q + 1] * sizes[q + 1]
        self.strides = strides
        g = np.arange(self.n_states, dtype=np.int64)
        m = len(self.cells)
        self.counts = np.zeros((self.n_states, m), dtype=np.int64)
        self.inc = np.full((self.n_states, m), -1, dtype=np.int64)
        self.dec = np.full((self.n_states, m), -1, dtype=np.int64)
        at_cap = np.zeros(self.n_states, dtype=bool)
        for qi, blk in enumerate(self.blocks):
            loc = (g // strides[qi]) % blk.size
            at_cap |= blk.local[loc].sum(axis=1) == blk.cap
            for d, k in enumerate(blk.cells):
                self.counts[:, k] = blk.local[loc, d]
                for src, dst in ((blk.inc, self.inc), (blk.dec, self.dec)):
                    tgt = src[loc, d]
                    ok = tgt >= 0
                    dst[ok, k] = g[ok] + (tgt[ok] - loc[ok]) * strides[qi]
        self.at_cap = at_cap

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def index_of(self, counts: Sequence[int]) -> int:
        """Ordinal of the state with the given per-cell counts."""
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (self.n_cells,) or np.any(counts < 0):
            raise InputError("counts must be one nonnegative integer per cell")
        g = 0
        for qi, blk in enumerate(self.blocks):
            sub = counts[blk.cells]
            if sub.sum() > blk.cap:
                raise InputError(f"queue {self.policy.queues[qi]} exceeds its cap")
            base = blk.cap + 1
            w = base ** np.arange(len(sub) - 1, -1, -1, dtype=np.int64)
            keys = blk.local @ w if len(sub) else np.zeros(1, np.int64)
            loc = int(np.searchsorted(keys, sub @ w)) if len(sub) else 0
            g += loc * int(self.strides[qi])
        return int(g)

    def state_counts(self, k: int) -> tuple[int, ...]:
        return tuple(int(x) for x in self.counts[k])

    def system_state(self, k: int) -> SystemState:
        """The state as a :class:`SystemState`; only defined for unlumped cells."""
        out = {}
        for c, n in zip(self.cells, self.counts[k]):
            if len(c.types) != 1:
                raise InputError("lumped cells have no per-type state; build with lump=False")
            out[(c.types[0], c.queue)] = int(n)
        return SystemState(out)

    def cell_labels(self) -> list[str]:
        return [f"q{c.queue}[{'+'.join(str(t) for t in c.types)}]" for c in self.cells]

    def queue_totals(self) -> np.ndarray:
        return np.stack([self.counts[:, b.cells].sum(axis=1) for b in self.blocks], axis=1)


# ---------------------------------------------------------------------------
# caps
# ---------------------------------------------------------------------------

def _guaranteed_service(params: MarketParams, policy: PolicySpec, cells: Sequence[Cell], q) -> float:
    """Rate of jobs that are certain to match in queue ``q`` whenever it is nonempty."""
    types = {t for c in cells if c.queue == q for t in c.types}
    if not types:
        return 0.0
    total = 0.0
    for j, order in enumerate(policy.rho):
        if order and order[0] == q and all(compatible(t, j) for t in types):
            total += float(params.mu[j])
    return total


def queue_birth_rates(params: MarketParams, policy: PolicySpec, sigma_or_support) -> np.ndarray:
    s = np.asarray(sigma_or_support, dtype=float)
    return params.lam @ s


def dominating_caps(params: MarketParams, policy: PolicySpec, cells: Sequence[Cell],
                    births: Sequence[float], eps: float = DEFAULT_EPS) -> tuple[int, ...]:
    """Per-queue caps with dominating-chain tail probability at most ``eps``."""
    caps = []
    for qi, q in enumerate(policy.queues):
        svc = _guaranteed_service(params, policy, cells, q)
        caps.append(mm1m_tail_cap(float(births[qi]), svc, params.theta, eps))
    return tuple(caps)


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StationaryDist:
    """Stationary probabilities on a layout, in layout order."""

    pi: np.ndarray
    layout: ChainLayout
    tail_mass_bound: float
    residual: float

    @property
    def probs(self) -> dict:
        """Mapping from per-cell count tuples to probability (nonzero entries)."""
        nz = np.flatnonzero(self.pi)
        return {self.layout.state_counts(k): float(self.pi[k]) for k in nz}

    def queue_marginal(self, queue) -> np.ndarray:
        qi = self.layout.policy.queue_index(queue)
        tot = self.layout.queue_totals()[:, qi]
        return np.bincount(tot, weights=self.pi, minlength=self.layout.caps[qi] + 1)

    def cell_marginal(self, cell: int) -> np.ndarray:
        c = self.layout.counts[:, cell]
        return np.bincount(c, weights=self.pi)


@dataclass(frozen=True)
class WaitTable:
    """Expected virtual waits ``E[W_iq]``, rows agent types, columns queues.

    An entry is ``math.inf`` when the tagged agent can never be matched in
    that queue; ``nan`` marks entries that were not requested.
    """

    waits: np.ndarray
    queues: tuple

    def __getitem__(self, key) -> float:
        i, q = key
        return float(self.waits[i, self.queues.index(q)])

    def row(self, i: int) -> np.ndarray:
        return self.waits[i].copy()

    def items(self):
        for i in range(self.waits.shape[0]):
            for qi, q in enumerate(self.queues):
                yield (i, q), float(self.waits[i, qi])


# ---------------------------------------------------------------------------
# family of generators sharing one layout
# ---------------------------------------------------------------------------

def _transition(n, rows, cols, rates):
    ok = (cols >= 0) & (rates > 0)
    return sp.csr_matrix((rates[ok], (rows[ok], cols[ok])), shape=(n, n))


def _sum_transitions(n, parts):
    rows, cols, rates = (np.concatenate(x) for x in zip(*parts)) if parts else ([], [], [])
    return _transition(n, np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
                       np.asarray(rates, dtype=float))


def _with_diagonal(off: sp.csr_matrix, extra_out=None) -> sp.csr_matrix:
    out = np.asarray(off.sum(axis=1)).ravel()
    if extra_out is not None:
        out = out + extra_out
    return (off - sp.diags(out)).tocsr()


class ChainFamily:
    """All generators over one cell layout and one set of caps.

    The generator is affine in the cell arrival rates and in the job rates,
    so one family serves every strategy profile on its support and every
    market that differs only in ``lam`` and ``mu``.  Solvers keep warm starts
    and preconditioners between calls, which is what makes scans over
    ``sigma`` or over a parameter grid cheap.

    Parameters
    ----------
    params, policy
        Market and dispatch policy.  ``params`` also fixes ``theta`` and the
        patience model for the whole family.
    support
        Boolean matrix ``(ell+1, n_queues)``: which types may sit in which
        queue.  Every profile later passed in must vanish off the support.
    caps
        Per-queue caps, a single cap for all queues, or ``None`` to pick them
        from the dominating chain with every supported type joining at full
        rate under ``params``.
    """

    def __init__(self, params: MarketParams, policy: PolicySpec, support, caps=None,
                 eps: float = DEFAULT_EPS, lump: bool = True, budget: int = DEFAULT_BUDGET,
                 method: str = "auto"):
        if policy.n_job_types != params.ell + 1:
            raise InputError("policy and market disagree on the number of types")
        support = np.array(support, dtype=bool)
        if support.shape != (params.ell + 1, len(policy.queues)):
            raise InputError(f"support must have shape {(params.ell + 1, len(policy.queues))}")
        self.params = params
        self.policy = policy
        self.support = support
        self.method = method
        cells = build_cells(policy, support, lump)
        if caps is None:
            caps = dominating_caps(params, policy, cells,
                                   queue_birth_rates(params, policy, support), eps)
        elif np.isscalar(caps):
            caps = (int(caps),) * len(policy.queues)
        self.layout = ChainLayout(policy, cells, caps, budget)
        lay = self.layout
        n, m = lay.n_states, lay.n_cells
        self._rows = np.arange(n)
        self._arrivals = [_with_diagonal(_transition(n, self._rows, lay.inc[:, k],
                                                     np.ones(n)))
                          for k in range(m)]
        self._abandon = _with_diagonal(_sum_transitions(
            n, [(self._rows, lay.dec[:, k], lay.counts[:, k] * params.theta) for k in range(m)]))
        self._lost = np.zeros((params.ell + 1, n))
        self._jobs = []
        for j in range(params.ell + 1):
            res = dispatch_kernel(policy, params.patience, lay.cells, lay.counts, j)
            self._lost[j] = res.lost
            self._jobs.append(_with_diagonal(_sum_transitions(
                n, [(self._rows, lay.dec[:, k], res.match[:, k]) for k in range(m)])))
        self._tagged = {}
        self._precond = {}
        self._warm = {}

    # -- rates ----------------------------------------------------------------------

    def _market(self, params: MarketParams | None) -> MarketParams:
        if params is None:
            return self.params
        if (params.ell != self.params.ell or params.theta != self.params.theta
                or params.patience != self.params.patience):
            raise InputError("a family only varies lam and mu; ell, theta and patience are fixed")
        return params

    def _check_sigma(self, sigma: StrategyProfile) -> np.ndarray:
        sigma.check_against(self.params, self.policy)
        s = np.asarray(sigma.sigma)
        if np.any(s[~self.support] > 0):
            raise InputError("strategy puts mass outside the family's support")
        return s

    def cell_weights(self, sigma: StrategyProfile, params: MarketParams | None = None) -> np.ndarray:
        """Arrival rate into each cell under ``sigma``."""
        s = self._check_sigma(sigma)
        lam = self._market(params).lam
        w = np.zeros(self.layout.n_cells)
        for k, c in enumerate(self.layout.cells):
            qi = self.policy.queue_index(c.queue)
            w[k] = sum(lam[i] * s[i, qi] for i in c.types)
        return w

    def _combine(self, base, jobs, sigma, params):
        p = self._market(params)
        M = base
        for mu_j, J in zip(p.mu, jobs):
            if mu_j:
                M = M + mu_j * J
        for wk, A in zip(self.cell_weights(sigma, p), self._arrivals):
            if wk:
                M = M + wk * A
        return M.tocsr()

    def generator(self, sigma: StrategyProfile, params: MarketParams | None = None) -> sp.csr_matrix:
        return self._combine(self._abandon, self._jobs, sigma, params)

    def _tag_parts(self, agent_type: int, queue):
        key = (agent_type, queue)
        if key not in self._tagged:
            if queue not in self.policy.queues:
                raise InputError(f"unknown queue {queue!r}")
            if not 0 <= agent_type <= self.params.ell:
                raise InputError(f"unknown agent type {agent_type!r}")
            lay, n = self.layout, self.layout.n_states
            jobs, absorbs = [], []
            for j in range(self.params.ell + 1):
                res = dispatch_kernel(self.policy, self.params.patience, lay.cells, lay.counts,
                                      j, tag=key)
                off = _sum_transitions(
                    n, [(self._rows, lay.dec[:, k], res.match[:, k]) for k in range(lay.n_cells)])
                jobs.append(_with_diagonal(off, res.tag))
                absorbs.append(res.tag)
            self._tagged[key] = (jobs, np.array(absorbs))
        return self._tagged[key]

    def tagged_generator(self, sigma: StrategyProfile, agent_type: int, queue,
                         params: MarketParams | None = None):
        """Sub-generator of the chain with a non-abandoning tagged agent, and
        the rate at which the tagged agent is matched from each state."""
        jobs, absorbs = self._tag_parts(agent_type, queue)
        p = self._market(params)
        return self._combine(self._abandon, jobs, sigma, p), p.mu @ absorbs

    # -- solves -------------------------------------------------------------------

    def stationary(self, sigma: StrategyProfile, params: MarketParams | None = None,
                   tol: float = linalg.RESIDUAL_TOL) -> StationaryDist:
        Q = self.generator(sigma, params)
        pi, pre, res = linalg.stationary_vector(Q, self._warm.get("pi"), self._precond.get("pi"),
                                                dims=self.layout.n_cells, method=self.method,
                                                tol=tol)
        self._precond["pi"] = pre
        self._warm["pi"] = pi
        tail = float(pi[self.layout.at_cap].sum())
        return StationaryDist(pi=pi, layout=self.layout, tail_mass_bound=tail, residual=res)

    def throughput(self, dist: StationaryDist, params: MarketParams | None = None) -> float:
        """Long-run match rate ``sum_j mu_j P(job j is matched)``."""
        p_match = 1.0 - self._lost @ dist.pi
        return float(self._market(params).mu @ p_match)

    def loss_probabilities(self, dist: StationaryDist) -> np.ndarray:
        return self._lost @ dist.pi

    def wait(self, sigma: StrategyProfile, agent_type: int, queue, dist: StationaryDist,
             params: MarketParams | None = None, tol: float = linalg.RESIDUAL_TOL) -> float:
        """Expected time to match of a tagged agent arriving to the stationary state."""
        T, absorb = self.tagged_generator(sigma, agent_type, queue, params)
        if not np.any(absorb > 0):
            return math.inf
        finite = _certain_absorption(T, absorb)
        pi = dist.pi
        if np.any(pi[~finite] > 0):
            return math.inf
        key = ("tag", agent_type, queue)
        if finite.all():
            t, pre, _ = linalg.absorption_times(T, self._warm.get(key), self._precond.get(key),
                                                dims=self.layout.n_cells, method=self.method,
                                                tol=tol)
            self._precond[key] = pre
            self._warm[key] = t
        else:
            idx = np.flatnonzero(finite)
            t, _, _ = linalg.absorption_times(T[idx][:, idx], dims=self.layout.n_cells,
                                              method=self.method, tol=tol)
            pi = pi[idx]
        return float(pi @ t)

    def wait_table(self, sigma: StrategyProfile, pairs: Iterable[tuple] | None = None,
                   dist: StationaryDist | None = None,
                   params: MarketParams | None = None) -> WaitTable:
        if dist is None:
            dist = self.stationary(sigma, params)
        queues = self.policy.queues
        W = np.full((self.params.ell + 1, len(queues)), math.nan)
        if pairs is None:
            pairs = [(i, q) for i in range(self.params.ell + 1) for q in queues]
        for i, q in pairs:
            W[i, queues.index(q)] = self.wait(sigma, i, q, dist, params)
        W.setflags(write=False)
        return WaitTable(waits=W, queues=queues)


def _certain_absorption(T: sp.csr_matrix, absorb: np.ndarray) -> np.ndarray:
    """States from which the tagged agent is matched with probability one.

    A state fails when it can reach a state that cannot reach absorption.
    """
    reach = linalg.transient_support(T, absorb)
    if reach.all():
        return reach
    bad = ~reach
    G = sp.csr_matrix(T, copy=True)
    G.setdiag(0)
    G.eliminate_zeros()
    GT = G.T.tocsr()
    frontier = np.flatnonzero(bad)
    while frontier.size:
        preds = np.unique(GT[frontier].indices)
        new = preds[~bad[preds]]
        bad[new] = True
        frontier = new
    return ~bad


# ---------------------------------------------------------------------------
# single-profile API
# ---------------------------------------------------------------------------

@dataclass
class TruncatedChain:
    """A generator for one strategy profile together with its layout."""

    params: MarketParams
    policy: PolicySpec
    sigma: StrategyProfile
    family: ChainFamily
    generator: sp.csr_matrix = field(repr=False)

    @property
    def layout(self) -> ChainLayout:
        return self.family.layout

    @property
    def n_states(self) -> int:
        return self.layout.n_states


def build_chain(params: MarketParams, policy: PolicySpec, sigma: StrategyProfile,
                cap=None, eps: float = DEFAULT_EPS, lump: bool = True,
                budget: int = DEFAULT_BUDGET, method: str = "auto") -> TruncatedChain:
    """Generator of the market under ``sigma``.

    ``cap`` is an int (same cap for every queue), a per-queue sequence, or
    ``None`` for caps whose dominating-chain tail is below ``eps``.  Only
    (type, queue) pairs with positive joining probability get cells.
    """
    sigma.check_against(params, policy)
    fam = ChainFamily(params, policy, default_support(policy, sigma), caps=cap, eps=eps,
                      lump=lump, budget=budget, method=method)
    return TruncatedChain(params, policy, sigma, fam, fam.generator(sigma))


def stationary(chain: TruncatedChain, tol: float = linalg.RESIDUAL_TOL) -> StationaryDist:
    return chain.family.stationary(chain.sigma, tol=tol)


def solve_truncated(params: MarketParams, policy: PolicySpec, sigma: StrategyProfile, cap=None,
                    eps: float = DEFAULT_EPS, tail_target: float = 1e-8,
                    budget: int = DEFAULT_BUDGET, method: str = "auto"):
    """Build and solve; returns ``(chain, dist)``.

    With ``cap=None`` the caps are raised by a quarter until the mass on
    states with a full queue is below ``tail_target``.  A given ``cap`` is
    used as is.
    """
    chain = build_chain(params, policy, sigma, cap=cap, eps=eps, budget=budget, method=method)
    dist = stationary(chain)
    if cap is not None:
        return chain, dist
    while dist.tail_mass_bound > tail_target:
        caps = tuple(int(math.ceil(c * 1.25)) + 1 for c in chain.layout.caps)
        chain = build_chain(params, policy, sigma, cap=caps, budget=budget, method=method)
        dist = stationary(chain)
    return chain, dist


def exact_throughput(params: MarketParams, policy: PolicySpec, sigma: StrategyProfile,
                     cap=None, eps: float = DEFAULT_EPS, tail_target: float = 1e-8,
                     budget: int = DEFAULT_BUDGET, method: str = "auto") -> float:
    """Stationary match rate of the truncated chain."""
    chain, dist = solve_truncated(params, policy, sigma, cap, eps, tail_target, budget, method)
    return chain.family.throughput(dist)


def virtual_wait_table(params: MarketParams, policy: PolicySpec, sigma: StrategyProfile,
                       cap=None, pairs=None, eps: float = DEFAULT_EPS,
                       tail_target: float = 1e-8, budget: int = DEFAULT_BUDGET,
                       method: str = "auto") -> WaitTable:
    """Expected virtual waits for every (type, queue) pair, or just ``pairs``."""
    chain, dist = solve_truncated(params, policy, sigma, cap, eps, tail_target, budget, method)
    return chain.family.wait_table(sigma, pairs, dist)


# ---------------------------------------------------------------------------
# CSV dumps
# ---------------------------------------------------------------------------

def write_generator_csv(chain: TruncatedChain, path) -> None:
    """One row per nonzero generator entry: source cells, target cells, rate."""
    labels = chain.layout.cell_labels()
    Q = chain.generator.tocoo()
    order = np.lexsort((Q.col, Q.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"from_{x}" for x in labels] + [f"to_{x}" for x in labels] + ["rate"])
        for k in order:
            w.writerow(list(chain.layout.counts[Q.row[k]]) + list(chain.layout.counts[Q.col[k]])
                       + [format(float(Q.data[k]), ".17g")])


def write_stationary_csv(dist: StationaryDist, path) -> None:
    labels = dist.layout.cell_labels()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(labels + ["probability"])
        for k in range(dist.layout.n_states):
            w.writerow(list(dist.layout.counts[k]) + [format(float(dist.pi[k]), ".17g")])
