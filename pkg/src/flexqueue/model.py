"""Market primitives, dispatch policies and single-job dispatch resolution.

Agents of type 0 are flexible (compatible with every job type); an agent of
type ``i >= 1`` only accepts jobs of type ``i``.  A policy is a set of queues
plus, for every job type, an ordered list of queues the job is offered to.
Agents pick a queue on arrival according to a row-stochastic strategy matrix
and never switch afterwards.

The dispatch kernel in this module is the one source of truth for what
happens when a job arrives; the exact chain builder and both simulators
call it.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

__all__ = [
    "InputError",
    "MarketParams",
    "PatienceModel",
    "PolicySpec",
    "StrategyProfile",
    "SystemState",
    "Matched",
    "LOST",
    "DispatchDistribution",
    "Cell",
    "compatible",
    "make_ncr",
    "make_acr",
    "make_rcr",
    "make_policy",
    "dispatch_kernel",
    "resolve_dispatch",
    "full_info_policy_table",
    "check_admissible",
]


class InputError(ValueError):
    """Invalid model input (rates, policies, strategies, states)."""


def compatible(agent_type: int, job_type: int) -> bool:
    return agent_type == 0 or agent_type == job_type


# ---------------------------------------------------------------------------
# patience
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatienceModel:
    """Match success probability ``beta(a, b)`` for a job offered to ``b``
    agents of which ``a`` are compatible.

    ``kind="perfect"`` gives ``beta = 1{a > 0}`` (rejections cost nothing).
    ``kind="max_rejections"`` lets the job survive ``K`` rejections, i.e. it is
    offered to at most ``K + 1`` agents drawn without replacement.
    """

    kind: str = "perfect"
    K: int | None = None

    def __post_init__(self):
        if self.kind == "perfect":
            if self.K is not None:
                raise InputError("perfect patience takes no K")
        elif self.kind == "max_rejections":
            if self.K is None or int(self.K) != self.K or self.K < 0:
                raise InputError(f"max_rejections needs an integer K >= 0, got {self.K!r}")
        else:
            raise InputError(f"unknown patience kind {self.kind!r}")

    @classmethod
    def perfect(cls) -> "PatienceModel":
        return cls("perfect")

    @classmethod
    def max_rejections(cls, K: int) -> "PatienceModel":
        return cls("max_rejections", int(K))

    @property
    def is_perfect(self) -> bool:
        return self.kind == "perfect"

    def beta(self, a, b):
        """Vectorised success probability; scalars in, float out."""
        a_arr = np.asarray(a, dtype=float)
        b_arr = np.asarray(b, dtype=float)
        if self.is_perfect:
            out = (a_arr > 0).astype(float)
        else:
            # P(no compatible agent among the first m = min(K+1, b) draws)
            miss = np.ones(np.broadcast(a_arr, b_arr).shape)
            for t in range(self.K + 1):
                live = t < b_arr
                num = np.maximum(b_arr - a_arr - t, 0.0)
                den = np.where(live, b_arr - t, 1.0)
                miss = miss * np.where(live, num / den, 1.0)
            out = np.where(a_arr > 0, 1.0 - miss, 0.0)
        if out.ndim == 0:
            return float(out)
        return out


# ---------------------------------------------------------------------------
# market and policies
# ---------------------------------------------------------------------------

def _rate_vector(name, values, length):
    arr = np.array(values, dtype=float).reshape(-1)
    if arr.shape[0] != length:
        raise InputError(f"{name} must have length ell+1 = {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} must be finite")
    if np.any(arr < 0):
        raise InputError(f"{name} must be nonnegative")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class MarketParams:
    """Arrival rates of agents (``lam``) and jobs (``mu``) per type, the
    abandonment rate ``theta`` and the job patience model.

    Zero rates are accepted so that degenerate limits (no jobs, no arrivals)
    can be evaluated; the market model proper has all rates positive, see
    :meth:`is_regular`.
    """

    ell: int
    lam: np.ndarray
    mu: np.ndarray
    theta: float
    patience: PatienceModel = field(default_factory=PatienceModel)

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 0:
            raise InputError(f"ell must be a nonnegative integer, got {self.ell!r}")
        object.__setattr__(self, "ell", int(self.ell))
        object.__setattr__(self, "lam", _rate_vector("lambda", self.lam, self.ell + 1))
        object.__setattr__(self, "mu", _rate_vector("mu", self.mu, self.ell + 1))
        theta = float(self.theta)
        if not (math.isfinite(theta) and theta > 0):
            raise InputError(f"theta must be positive and finite, got {self.theta!r}")
        object.__setattr__(self, "theta", theta)
        if not isinstance(self.patience, PatienceModel):
            raise InputError("patience must be a PatienceModel")

    @property
    def types(self) -> range:
        return range(self.ell + 1)

    def is_regular(self) -> bool:
        return bool(np.all(self.lam > 0) and np.all(self.mu > 0))

    def replace(self, **changes) -> "MarketParams":
        kw = dict(ell=self.ell, lam=self.lam, mu=self.mu, theta=self.theta,
                  patience=self.patience)
        kw.update(changes)
        return MarketParams(**kw)

    def with_rate(self, name: str, index: int | None, value: float) -> "MarketParams":
        """Copy with one rate changed, e.g. ``with_rate("mu", 0, 5.0)``."""
        if name == "theta":
            return self.replace(theta=value)
        arr = np.array(getattr(self, name), dtype=float)
        arr[index] = value
        return self.replace(**{name: arr})

    def __eq__(self, other):
        if not isinstance(other, MarketParams):
            return NotImplemented
        return (self.ell == other.ell and np.array_equal(self.lam, other.lam)
                and np.array_equal(self.mu, other.mu) and self.theta == other.theta
                and self.patience == other.patience)

    def __repr__(self):
        return (f"MarketParams(ell={self.ell}, lam={self.lam.tolist()}, "
                f"mu={self.mu.tolist()}, theta={self.theta}, patience={self.patience})")


@dataclass(frozen=True)
class PolicySpec:
    """Queue set plus, per job type, the ordered queues a job is offered to.

    With ``pooled_fallback`` the queues after the first one in each list are
    offered as a single pooled set instead of one after another.
    """

    queues: tuple
    rho: tuple
    pooled_fallback: bool = False
    name: str = "custom"

    def __post_init__(self):
        queues = tuple(self.queues)
        if len(set(queues)) != len(queues) or not queues:
            raise InputError("queues must be a nonempty set of distinct identifiers")
        rho = tuple(tuple(r) for r in self.rho)
        for j, order in enumerate(rho):
            if len(set(order)) != len(order):
                raise InputError(f"rho[{j}] repeats a queue: {order}")
            for q in order:
                if q not in queues:
                    raise InputError(f"rho[{j}] names unknown queue {q!r}")
        object.__setattr__(self, "queues", queues)
        object.__setattr__(self, "rho", rho)

    @property
    def n_job_types(self) -> int:
        return len(self.rho)

    def queue_index(self, q) -> int:
        return self.queues.index(q)

    def dispatch_sets(self, job_type: int) -> list[tuple]:
        """Queue sets visited in order by a job of the given type."""
        order = self.rho[job_type]
        if self.pooled_fallback and len(order) > 1:
            return [order[:1], order[1:]]
        return [(q,) for q in order]

    def jobs_reaching(self, q) -> list[int]:
        return [j for j, order in enumerate(self.rho) if q in order]


def _check_ell(ell, minimum=1):
    if int(ell) != ell or ell < minimum:
        raise InputError(f"ell must be an integer >= {minimum}, got {ell!r}")
    return int(ell)


def make_ncr(ell: int) -> PolicySpec:
    """No capacity reservation: one queue serving every job type."""
    ell = _check_ell(ell, minimum=0)
    return PolicySpec(queues=(0,), rho=tuple((0,) for _ in range(ell + 1)), name="ncr")


def make_acr(ell: int) -> PolicySpec:
    """Aggressive capacity reservation: job ``j >= 1`` tries queue ``j`` then 0."""
    ell = _check_ell(ell)
    rho = ((0,),) + tuple((j, 0) for j in range(1, ell + 1))
    return PolicySpec(queues=tuple(range(ell + 1)), rho=rho, name="acr")


def make_rcr(ell: int, pooled: bool = False) -> PolicySpec:
    """Robust capacity reservation: job ``j`` tries queue ``j`` first, then the
    other queues in ascending order (or all of them at once when ``pooled``)."""
    ell = _check_ell(ell)
    queues = tuple(range(ell + 1))
    rho = tuple((j,) + tuple(q for q in queues if q != j) for j in queues)
    return PolicySpec(queues=queues, rho=rho, pooled_fallback=bool(pooled), name="rcr")


def make_policy(kind: str, ell: int, pooled: bool = False) -> PolicySpec:
    kind = kind.lower()
    if kind == "ncr":
        if pooled:
            raise InputError("pooled fallback only applies to rcr")
        return make_ncr(ell)
    if kind == "acr":
        if pooled:
            raise InputError("pooled fallback only applies to rcr")
        return make_acr(ell)
    if kind == "rcr":
        return make_rcr(ell, pooled)
    raise InputError(f"unknown policy kind {kind!r}")


# ---------------------------------------------------------------------------
# strategies and states
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StrategyProfile:
    """Row ``i`` gives the probabilities with which a type-``i`` agent joins
    each queue, columns ordered as ``policy.queues``."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float)
        if s.ndim != 2:
            raise InputError("sigma must be a matrix")
        if np.any(~np.isfinite(s)) or np.any(s < 0) or np.any(s > 1):
            raise InputError("sigma entries must lie in [0, 1]")
        if np.any(np.abs(s.sum(axis=1) - 1.0) > 1e-12):
            raise InputError(f"sigma rows must sum to 1, got {s.sum(axis=1).tolist()}")
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def truthful(cls, policy: PolicySpec, ell: int) -> "StrategyProfile":
        """Type ``i`` joins queue ``i`` when it exists, otherwise the first queue."""
        s = np.zeros((ell + 1, len(policy.queues)))
        for i in range(ell + 1):
            col = policy.queue_index(i) if i in policy.queues else 0
            s[i, col] = 1.0
        return cls(s)

    @classmethod
    def two_type(cls, sigma01: float) -> "StrategyProfile":
        """ell = 1 profile with specialized agents in queue 1 and a fraction
        ``sigma01`` of flexible agents in queue 1."""
        x = float(sigma01)
        if not 0.0 <= x <= 1.0:
            raise InputError(f"sigma01 must lie in [0, 1], got {sigma01!r}")
        return cls([[1.0 - x, x], [0.0, 1.0]])

    @classmethod
    def flexible_row(cls, row: Sequence[float], ell: int) -> "StrategyProfile":
        """Flexible agents use ``row``; specialized type ``i`` joins queue ``i``."""
        s = np.eye(ell + 1)
        s[0] = np.asarray(row, dtype=float)
        return cls(s)

    @property
    def shape(self):
        return self.sigma.shape

    def check_against(self, params: MarketParams, policy: PolicySpec) -> None:
        if self.sigma.shape != (params.ell + 1, len(policy.queues)):
            raise InputError(
                f"sigma has shape {self.sigma.shape}, expected "
                f"({params.ell + 1}, {len(policy.queues)})")
        if policy.n_job_types != params.ell + 1:
            raise InputError("policy and market disagree on the number of types")

    def __eq__(self, other):
        if not isinstance(other, StrategyProfile):
            return NotImplemented
        return np.array_equal(self.sigma, other.sigma)

    def __repr__(self):
        return f"StrategyProfile({self.sigma.tolist()})"


class SystemState:
    """Agent counts keyed by ``(agent_type, queue)``; zero cells are dropped."""

    __slots__ = ("_counts",)

    def __init__(self, counts: Mapping[tuple, int] | None = None):
        items = {}
        for key, n in (counts or {}).items():
            i, q = key
            if int(n) != n or n < 0:
                raise InputError(f"count for {key} must be a nonnegative integer")
            if n:
                items[(int(i), q)] = int(n)
        self._counts = dict(sorted(items.items(), key=lambda kv: (kv[0][1], kv[0][0])))

    @classmethod
    def empty(cls) -> "SystemState":
        return cls()

    @property
    def counts(self) -> dict:
        return dict(self._counts)

    def __getitem__(self, key) -> int:
        return self._counts.get(key, 0)

    def agents_of_type(self, i: int) -> int:
        return sum(n for (t, _), n in self._counts.items() if t == i)

    def queue_total(self, q) -> int:
        return sum(n for (_, qq), n in self._counts.items() if qq == q)

    def total(self) -> int:
        return sum(self._counts.values())

    def add(self, i: int, q, n: int = 1) -> "SystemState":
        c = dict(self._counts)
        c[(i, q)] = c.get((i, q), 0) + n
        return SystemState(c)

    def items(self):
        return self._counts.items()

    def __eq__(self, other):
        return isinstance(other, SystemState) and self._counts == other._counts

    def __hash__(self):
        return hash(tuple(self._counts.items()))

    def __repr__(self):
        return f"SystemState({self._counts})"


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

class Cell(NamedTuple):
    """A group of agents in one queue that dispatch cannot tell apart.

    Usually one agent type; several types share a cell only when they accept
    exactly the same jobs among those offered to the queue.
    """

    queue: object
    types: tuple

    def compatible_with(self, job_type: int) -> bool:
        return compatible(self.types[0], job_type)


class Matched(NamedTuple):
    agent_type: int
    queue: object


class _Lost:
    __slots__ = ()

    def __repr__(self):
        return "LOST"

    def __reduce__(self):
        return "LOST"


LOST = _Lost()


@dataclass(frozen=True)
class DispatchDistribution:
    """Outcome probabilities of one job arrival.

    ``trace`` lists, for every dispatched set visited, ``(queues, a, b, beta)``
    with ``a`` compatible agents among ``b`` in the set.
    """

    probs: dict
    trace: tuple

    def __getitem__(self, outcome) -> float:
        return self.probs.get(outcome, 0.0)

    @property
    def p_lost(self) -> float:
        return self.probs.get(LOST, 0.0)

    @property
    def p_match(self) -> float:
        return 1.0 - self.p_lost


@dataclass
class KernelResult:
    match: np.ndarray        # (n_states, n_cells): P(job taken by an untagged agent of the cell)
    tag: np.ndarray          # (n_states,): P(job taken by the tagged agent)
    lost: np.ndarray         # (n_states,)
    sets: list               # per visited set: (queues, a, b, beta) arrays


def dispatch_kernel(policy: PolicySpec, patience: PatienceModel, cells: Sequence[Cell],
                    counts: np.ndarray, job_type: int, tag: tuple | None = None) -> KernelResult:
    """Outcome distribution of a type ``job_type`` job for many states at once.

    ``counts`` has one row per state and one column per cell.  ``tag`` is an
    optional ``(agent_type, queue)`` for an extra agent sitting in the system
    on top of ``counts``; its match probability is reported separately.
    """
    if not 0 <= job_type < policy.n_job_types:
        raise InputError(f"unknown job type {job_type!r}")
    counts = np.asarray(counts, dtype=float)
    if counts.ndim == 1:
        counts = counts[None, :]
    n = counts.shape[0]
    match = np.zeros_like(counts)
    tag_match = np.zeros(n)
    remaining = np.ones(n)
    sets = []
    for qset in policy.dispatch_sets(job_type):
        members = [k for k, c in enumerate(cells) if c.queue in qset]
        comp = [k for k in members if cells[k].compatible_with(job_type)]
        b = counts[:, members].sum(axis=1) if members else np.zeros(n)
        a = counts[:, comp].sum(axis=1) if comp else np.zeros(n)
        tag_here = tag is not None and tag[1] in qset
        tag_comp = tag_here and compatible(tag[0], job_type)
        if tag_here:
            b = b + 1.0
        if tag_comp:
            a = a + 1.0
        beta = np.asarray(patience.beta(a, b), dtype=float)
        sets.append((qset, a, b, beta))
        p_here = remaining * beta
        safe_a = np.where(a > 0, a, 1.0)
        for k in comp:
            match[:, k] += p_here * counts[:, k] / safe_a
        if tag_comp:
            tag_match += p_here / safe_a
        remaining = remaining * (1.0 - beta)
    return KernelResult(match=match, tag=tag_match, lost=remaining, sets=sets)


def _state_cells(state: SystemState) -> tuple[list[Cell], np.ndarray]:
    keys = list(state.items())
    cells = [Cell(q, (i,)) for (i, q), _ in keys]
    counts = np.array([n for _, n in keys], dtype=float)
    return cells, counts


def resolve_dispatch(params: MarketParams, policy: PolicySpec, state: SystemState,
                     job_type: int) -> DispatchDistribution:
    """Exact outcome distribution when a job of ``job_type`` arrives to ``state``.

    Returns probabilities for every ``Matched(agent_type, queue)`` cell and for
    ``LOST``; the matched agent is uniform among compatible agents of the
    dispatched set that accepted.
    """
    if not 0 <= job_type <= params.ell:
        raise InputError(f"unknown job type {job_type!r} for ell={params.ell}")
    for (i, q), _ in state.items():
        if q not in policy.queues or not 0 <= i <= params.ell:
            raise InputError(f"state cell {(i, q)} is not valid for this market/policy")
    cells, counts = _state_cells(state)
    res = dispatch_kernel(policy, params.patience, cells, counts[None, :] if cells
                          else np.zeros((1, 0)), job_type)
    probs = {}
    for k, c in enumerate(cells):
        p = float(res.match[0, k])
        if p > 0:
            probs[Matched(c.types[0], c.queue)] = p
    p_lost = float(res.lost[0])
    if p_lost > 0 or not probs:
        probs[LOST] = p_lost
    trace = tuple((qs, int(a[0]), int(b[0]), float(beta[0])) for qs, a, b, beta in res.sets)
    return DispatchDistribution(probs=probs, trace=trace)


# ---------------------------------------------------------------------------
# full-information policies
# ---------------------------------------------------------------------------

def full_info_policy_table(params: MarketParams, policy_kind: str, bound: int) -> dict:
    """Action distributions of the full-information ACR or NCR policy.

    Keys are ``(A, j)`` with ``A`` a tuple of agent counts per type, each at
    most ``bound``; values map an action (agent type, or ``-1`` for losing the
    job) to its probability.
    """
    if int(bound) != bound or bound <= 0:
        raise InputError(f"truncation bound must be a positive integer, got {bound!r}")
    kind = policy_kind.lower()
    if kind not in ("acr", "ncr"):
        raise InputError(f"full-information table only defined for acr/ncr, got {policy_kind!r}")
    ell = params.ell
    table = {}
    for A in itertools.product(range(int(bound) + 1), repeat=ell + 1):
        for j in range(ell + 1):
            a0, aj = A[0], A[j]
            if kind == "acr":
                if aj > 0:
                    nu = {j: 1.0}
                elif a0 > 0:
                    nu = {0: 1.0}
                else:
                    nu = {-1: 1.0}
            else:
                if j == 0:
                    nu = {0: 1.0} if a0 > 0 else {-1: 1.0}
                elif a0 + aj > 0:
                    nu = {k: v for k, v in ((j, aj / (a0 + aj)), (0, a0 / (a0 + aj))) if v > 0}
                else:
                    nu = {-1: 1.0}
            table[(A, j)] = nu
    return table


def check_admissible(table: Mapping, ell: int, tol: float = 0.0) -> list[str]:
    """Violations of the admissibility constraints; empty when the table is admissible.

    Checks that each row is a probability measure over ``{-1, 0, ..., ell}``,
    that no mass goes to a type with no agents, and that mass only goes to
    types compatible with the job.
    """
    problems = []
    for (A, j), nu in table.items():
        total = 0.0
        for action, p in nu.items():
            if action not in range(-1, ell + 1):
                problems.append(f"{(A, j)}: unknown action {action}")
                continue
            if p < -tol or p > 1 + tol:
                problems.append(f"{(A, j)}: probability {p} outside [0,1]")
            total += p
            if action >= 0 and p > tol and A[action] == 0:
                problems.append(f"{(A, j)}: assigns to empty type {action}")
            if action >= 0 and p > tol and not compatible(action, j):
                problems.append(f"{(A, j)}: assigns to incompatible type {action}")
        if abs(total - 1.0) > tol:
            problems.append(f"{(A, j)}: probabilities sum to {total}")
    return problems
