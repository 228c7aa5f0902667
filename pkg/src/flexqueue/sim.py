"""Discrete-event simulation of the matching market.

Every agent draws an exponential patience when it arrives and leaves at that
deadline unless matched first.  Agent and job arrivals form one superposed
Poisson stream.  Each job is resolved by sampling the outcome distribution of
:func:`flexqueue.model.dispatch_kernel`, so the simulator and the exact
solver share one dispatch semantics.

Two engines live here:

* a sequential engine (``run``, ``tagged_wait``).  Waiting agents are kept as
  sorted lists of deadlines per (type, queue) cell, so abandonments are
  purged lazily as a prefix before each arrival.  An abandonment that ties
  with an arrival is processed first.
* a lockstep engine (``coupled_value_of_flexibility``) that advances many
  independent replications of three coupled systems with numpy.
"""
from __future__ import annotations

import bisect
import csv
import math
import zlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import (Cell, InputError, MarketParams, PolicySpec, StrategyProfile, SystemState,
                    dispatch_kernel, make_policy)

N_BATCHES = 32


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

class EventStream:
    """Seeded family of independent generators keyed by purpose.

    ``stream.rng("arrivals", 3)`` always returns a fresh generator positioned
    at the start of the same sequence for the same seed.
    """

    def __init__(self, seed: int):
        if int(seed) != seed or seed < 0 or seed >= 2 ** 64:
            raise InputError(f"seed must be an integer in [0, 2**64), got {seed!r}")
        self.seed = int(seed)

    def rng(self, purpose: str, index: int = 0) -> np.random.Generator:
        key = (zlib.crc32(purpose.encode()), int(index))
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=key)))

    def __repr__(self):
        return f"EventStream(seed={self.seed})"


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _all_cells(params: MarketParams, policy: PolicySpec) -> list[Cell]:
    """One cell per (type, queue), ordered type-major."""
    return [Cell(q, (i,)) for i in range(params.ell + 1) for q in policy.queues]


def _cell_index(params, policy, i, q) -> int:
    return i * len(policy.queues) + policy.queue_index(q)


def _batch_means(per_batch: np.ndarray) -> tuple[float, float]:
    """Mean and standard error from batch totals."""
    per_batch = np.asarray(per_batch, dtype=float)
    k = len(per_batch)
    if k < 2:
        return float(per_batch.mean()) if k else 0.0, math.inf
    return float(per_batch.mean()), float(per_batch.std(ddof=1) / math.sqrt(k))


class _Tape:
    """Pre-drawn superposed arrival stream, extended on demand.

    Columns: time, kind (agent type ``i`` or ``n_types + j`` for job ``j``),
    queue choice for agents, patience for agents, two dispatch uniforms.
    """

    CHUNK = 65536

    def __init__(self, params: MarketParams, sigma: np.ndarray, rng: np.random.Generator,
                 t0: float = 0.0):
        self.rng = rng
        self.n_types = params.ell + 1
        rates = np.concatenate([params.lam, params.mu])
        self.total_rate = float(rates.sum())
        self.cum_kind = np.cumsum(rates) / self.total_rate if self.total_rate > 0 else None
        self.cum_sigma = np.cumsum(sigma, axis=1)
        self.theta = params.theta
        self.t_last = t0
        self.time = np.empty(0)
        self.kind = np.empty(0, dtype=np.int64)
        self.queue = np.empty(0, dtype=np.int64)
        self.patience = np.empty(0)
        self.u1 = np.empty(0)
        self.u2 = np.empty(0)

    def ensure(self, k: int) -> bool:
        """Make sure event ``k`` exists; returns False if no events ever occur."""
        if self.total_rate <= 0:
            return False
        while k >= len(self.time):
            n = self.CHUNK
            rng = self.rng
            gaps = rng.exponential(1.0 / self.total_rate, n)
            times = self.t_last + np.cumsum(gaps)
            self.t_last = float(times[-1])
            kind = np.searchsorted(self.cum_kind, rng.random(n), side="right")
            kind = np.minimum(kind, len(self.cum_kind) - 1)
            uq = rng.random(n)
            pat = rng.exponential(1.0 / self.theta, n)
            u1 = rng.random(n)
            u2 = rng.random(n)
            queue = np.zeros(n, dtype=np.int64)
            agents = kind < self.n_types
            for i in range(self.n_types):
                sel = kind == i
                if sel.any():
                    queue[sel] = np.minimum(np.searchsorted(self.cum_sigma[i], uq[sel], side="right"),
                                            self.cum_sigma.shape[1] - 1)
            queue[~agents] = -1
            self.time = np.concatenate([self.time, times])
            self.kind = np.concatenate([self.kind, kind])
            self.queue = np.concatenate([self.queue, queue])
            self.patience = np.concatenate([self.patience, pat])
            self.u1 = np.concatenate([self.u1, u1])
            self.u2 = np.concatenate([self.u2, u2])
        return True


class _Dispatcher:
    """Cumulative outcome tables keyed by (job type, cell counts, tagged?)."""

    def __init__(self, params, policy, cells, tag=None):
        self.params = params
        self.policy = policy
        self.cells = cells
        self.tag = tag
        self.cache = {}

    def table(self, job: int, counts: tuple, tagged: bool):
        key = (job, counts, tagged)
        hit = self.cache.get(key)
        if hit is None:
            res = dispatch_kernel(self.policy, self.params.patience, self.cells,
                                  np.array(counts, dtype=float)[None, :], job,
                                  tag=self.tag if tagged else None)
            probs = list(res.match[0]) + [float(res.tag[0])]
            hit = list(np.cumsum(probs))
            self.cache[key] = hit
        return hit


class _System:
    """Waiting agents as sorted deadline lists, one per cell."""

    __slots__ = ("cells", "tag_in")

    def __init__(self, n_cells: int):
        self.cells = [[] for _ in range(n_cells)]
        self.tag_in = False

    def copy(self) -> "_System":
        s = _System.__new__(_System)
        s.cells = [c.copy() for c in self.cells]
        s.tag_in = self.tag_in
        return s

    def purge(self, t: float) -> None:
        for lst in self.cells:
            if lst and lst[0] <= t:
                del lst[:bisect.bisect_right(lst, t)]

    def counts(self) -> tuple:
        return tuple(len(c) for c in self.cells)


def _seed_state(system: _System, params, policy, state: SystemState | None, rng, t0=0.0):
    if state is None:
        return
    for (i, q), n in state.items():
        if q not in policy.queues or not 0 <= i <= params.ell:
            raise InputError(f"initial state cell {(i, q)} is not valid")
        c = _cell_index(params, policy, i, q)
        for d in rng.exponential(1.0 / params.theta, n):
            bisect.insort(system.cells[c], t0 + float(d))


# ---------------------------------------------------------------------------
# plain runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimResult:
    """Counters of one simulated run over ``[warmup, warmup + horizon]``.

    ``wait_samples`` maps ``(type, queue)`` to ``(n, mean)`` of the sojourn
    of agents matched in the window; ``throughput_estimate`` is
    ``matches / horizon`` and ``ci_halfwidth`` a 95% half-width from batch
    means.
    """

    matches: int
    lost_jobs: tuple
    job_arrivals: tuple
    agent_arrivals: tuple
    abandonments: int
    horizon: float
    warmup: float
    throughput_estimate: float
    std_error: float
    ci_halfwidth: float
    wait_samples: dict = field(default_factory=dict)
    batch_matches: tuple = ()

    @property
    def total_jobs(self) -> int:
        return int(sum(self.job_arrivals))


def _check_inputs(params, policy, sigma):
    if not isinstance(sigma, StrategyProfile):
        sigma = StrategyProfile(sigma)
    sigma.check_against(params, policy)
    return np.asarray(sigma.sigma)


def run(params: MarketParams, policy: PolicySpec, sigma: StrategyProfile, horizon: float,
        initial_state: SystemState | None = None, stream: EventStream | None = None,
        warmup: float = 0.0, n_batches: int = N_BATCHES, event_log: list | None = None) -> SimResult:
    """Simulate for ``warmup + horizon`` time units and count matches after warmup.

    ``event_log``, if given, receives one ``(time, kind, type, queue, outcome)``
    row per event in the measured window (``queue`` is the joined queue for
    agent arrivals and the matched queue for jobs; ``outcome`` is
    ``"join"``, ``"match:<type>"`` or ``"lost"``).
    """
    if not horizon > 0:
        raise InputError(f"horizon must be positive, got {horizon!r}")
    if warmup < 0:
        raise InputError("warmup must be nonnegative")
    s = _check_inputs(params, policy, sigma)
    stream = stream or EventStream(0)
    cells = _all_cells(params, policy)
    nq = len(policy.queues)
    n_types = params.ell + 1
    system = _System(len(cells))
    _seed_state(system, params, policy, initial_state, stream.rng("initial"))
    tape = _Tape(params, s, stream.rng("events"))
    disp = _Dispatcher(params, policy, cells)
    t_end = warmup + horizon
    batch_len = horizon / n_batches
    batches = np.zeros(n_batches, dtype=np.int64)
    lost = [0] * n_types
    jobs = [0] * n_types
    agents = [0] * n_types
    matches = 0
    abandon = 0
    wait_n = np.zeros(len(cells), dtype=np.int64)
    wait_sum = np.zeros(len(cells))
    arrival_of: dict[float, float] = {}   # deadline -> arrival time, for sojourns
    k = 0
    while tape.ensure(k):
        t = float(tape.time[k])
        if t > t_end:
            break
        before = sum(len(c) for c in system.cells)
        system.purge(t)
        if t >= warmup:
            abandon += before - sum(len(c) for c in system.cells)
        kind = int(tape.kind[k])
        measured = t >= warmup
        if kind < n_types:
            qi = int(tape.queue[k])
            d = t + float(tape.patience[k])
            bisect.insort(system.cells[kind * nq + qi], d)
            arrival_of[d] = t
            if measured:
                agents[kind] += 1
                if event_log is not None:
                    event_log.append((t, "agent", kind, policy.queues[qi], "join"))
        else:
            j = kind - n_types
            cum = disp.table(j, system.counts(), False)
            u = float(tape.u1[k])
            c = bisect.bisect_right(cum, u)
            if c < len(cells) and u < cum[-2]:
                lst = system.cells[c]
                pick = min(int(float(tape.u2[k]) * len(lst)), len(lst) - 1)
                d = lst.pop(pick)
                t_arr = arrival_of.pop(d, None)
                if measured:
                    matches += 1
                    batches[min(int((t - warmup) / batch_len), n_batches - 1)] += 1
                    if t_arr is not None and t_arr >= 0:
                        wait_n[c] += 1
                        wait_sum[c] += t - t_arr
                    if event_log is not None:
                        event_log.append((t, "job", j, cells[c].queue, f"match:{cells[c].types[0]}"))
            elif measured:
                lost[j] += 1
                if event_log is not None:
                    event_log.append((t, "job", j, None, "lost"))
            if measured:
                jobs[j] += 1
        if len(arrival_of) > 4 * (sum(len(c) for c in system.cells) + 64):
            live = {d for lst in system.cells for d in lst}
            arrival_of = {d: a for d, a in arrival_of.items() if d in live}
        k += 1
    rate_batches = batches / batch_len
    mean, se = _batch_means(rate_batches)
    waits = {(cells[c].types[0], cells[c].queue): (int(wait_n[c]), float(wait_sum[c] / wait_n[c]))
             for c in range(len(cells)) if wait_n[c]}
    return SimResult(matches=matches, lost_jobs=tuple(lost), job_arrivals=tuple(jobs),
                     agent_arrivals=tuple(agents), abandonments=abandon, horizon=float(horizon),
                     warmup=float(warmup), throughput_estimate=matches / horizon,
                     std_error=se, ci_halfwidth=1.96 * se, wait_samples=waits,
                     batch_matches=tuple(int(b) for b in batches))


# ---------------------------------------------------------------------------
# tagged-agent waits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaitEstimate:
    """Monte Carlo estimate of a virtual wait.

    ``infinite`` is set when the first injections all outlived the censoring
    time, which happens when no dispatch ever reaches the tagged agent.
    """

    mean: float
    std_error: float
    ci_halfwidth: float
    n: int
    censored: int
    infinite: bool
    samples: np.ndarray = field(repr=False, default=None)


def tagged_wait(params: MarketParams, policy: PolicySpec, sigma: StrategyProfile,
                agent_type: int, queue, replications: int = 10_000, warmup: float | None = None,
                stream: EventStream | None = None, injection_rate: float | None = None,
                censor_multiple: float = 200.0, infinite_after: int = 20,
                n_batches: int = N_BATCHES) -> WaitEstimate:
    """Estimate ``E[W_iq]`` by injecting non-abandoning tagged agents.

    The base system runs continuously.  At Poisson injection epochs (rate
    ``theta`` by default) it is copied, a tagged agent is added to ``queue``
    and the copy replays the base system's future arrivals until the tagged
    agent is matched.  The tagged agent does not replace any arrival.
    """
    s = _check_inputs(params, policy, sigma)
    if queue not in policy.queues:
        raise InputError(f"queue {queue!r} is not one of {policy.queues}")
    if not 0 <= agent_type <= params.ell:
        raise InputError(f"unknown agent type {agent_type!r}")
    if replications < 1:
        raise InputError("replications must be >= 1")
    stream = stream or EventStream(0)
    warmup = 20.0 / params.theta if warmup is None else float(warmup)
    rate = params.theta if injection_rate is None else float(injection_rate)
    censor = censor_multiple / params.theta
    cells = _all_cells(params, policy)
    nq = len(policy.queues)
    n_types = params.ell + 1
    tag = (agent_type, queue)
    disp = _Dispatcher(params, policy, cells, tag=tag)
    tape = _Tape(params, s, stream.rng("events"))
    inj = stream.rng("injections")
    system = _System(len(cells))
    inject_at = warmup + inj.exponential(1.0 / rate)
    samples = np.empty(replications)
    censored = 0
    done = 0
    k = 0

    def step(sys_, k_, tagged):
        """Apply event ``k_`` to ``sys_``; returns True if the tag was matched."""
        t = float(tape.time[k_])
        sys_.purge(t)
        kind = int(tape.kind[k_])
        if kind < n_types:
            bisect.insort(sys_.cells[kind * nq + int(tape.queue[k_])], t + float(tape.patience[k_]))
            return False
        cum = disp.table(kind - n_types, sys_.counts(), tagged)
        u = float(tape.u1[k_])
        c = bisect.bisect_right(cum, u)
        if c < len(cells):
            lst = sys_.cells[c]
            lst.pop(min(int(float(tape.u2[k_]) * len(lst)), len(lst) - 1))
            return False
        return tagged and c == len(cells) and u < cum[-1]

    if not tape.ensure(0):
        return WaitEstimate(math.inf, math.nan, math.nan, 0, replications, True, np.full(0, math.inf))
    while done < replications:
        tape.ensure(k)
        t = float(tape.time[k])
        while inject_at <= t and done < replications:
            # fork at the injection epoch and replay the future with the tag present
            fork = system.copy()
            fork.purge(inject_at)
            kk = k
            matched_at = None
            while True:
                tape.ensure(kk)
                tk = float(tape.time[kk])
                if tk - inject_at > censor:
                    break
                if step(fork, kk, True):
                    matched_at = tk
                    break
                kk += 1
            if matched_at is None:
                censored += 1
                samples[done] = math.inf
                if censored == done + 1 and censored >= infinite_after:
                    return WaitEstimate(math.inf, math.nan, math.nan, done + 1, censored, True,
                                        samples[:done + 1].copy())
            else:
                samples[done] = matched_at - inject_at
            done += 1
            inject_at += inj.exponential(1.0 / rate)
        step(system, k, False)
        k += 1
    finite = samples[np.isfinite(samples)]
    if finite.size == 0:
        return WaitEstimate(math.inf, math.nan, math.nan, replications, censored, True, samples)
    kb = min(n_batches, finite.size)
    batches = np.array([b.mean() for b in np.array_split(finite, kb)])
    mean = float(finite.mean())
    _, se = _batch_means(batches)
    return WaitEstimate(mean, se, 1.96 * se, replications, censored, False, samples)


# ---------------------------------------------------------------------------
# coupled value-of-flexibility runs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoupledResult:
    """Paired match counts of the systems started from ``A``, ``A + e0``
    and ``A + ei`` on common random numbers.

    ``first`` estimates ``1 + E[M|A] - E[M|A+e0]`` and ``second`` estimates
    ``E[M|A+e0] - E[M|A+ei]``; both are nonnegative in theory.
    """

    means: tuple
    first: float
    first_se: float
    second: float
    second_se: float
    replications: int
    horizon: float
    event_logs: tuple = ()

    def holds(self, z: float = 3.0) -> bool:
        return self.first >= -z * self.first_se and self.second >= -z * self.second_se


def default_coupling_sigma(policy: PolicySpec, ell: int) -> StrategyProfile:
    """Truthful joining, except that under RCR flexible agents spread evenly."""
    if policy.name == "rcr":
        row = np.full(len(policy.queues), 1.0 / len(policy.queues))
        return StrategyProfile.flexible_row(row, ell)
    return StrategyProfile.truthful(policy, ell)


def extra_agent_queue(policy: PolicySpec, i: int):
    """Queue of the extra agents: queue ``i`` under RCR, the flexible queue otherwise."""
    return i if policy.name == "rcr" else policy.queues[0]


def coupled_value_of_flexibility(params: MarketParams, policy_kind: str, base_state: SystemState,
                                 i: int, horizon: float, replications: int, seed: int,
                                 sigma: StrategyProfile | None = None, pooled: bool = False,
                                 log_replications: int = 0) -> CoupledResult:
    """Run the three coupled systems ``A``, ``A + e0``, ``A + ei``.

    All systems share arrival times and types, queue choices, patience of
    every agent present in ``A`` or arriving later, and the dispatch
    uniforms.  The two extra agents share one patience draw.  The extra
    flexible agent and the extra type-``i`` agent both join
    :func:`extra_agent_queue`, except that under ACR and NCR the type-``i``
    agent joins its own queue (queue ``i`` or the single queue).
    """
    if not 1 <= i <= params.ell:
        raise InputError(f"i must lie in 1..ell, got {i!r}")
    if horizon < 0:
        raise InputError("horizon must be nonnegative")
    if replications < 2:
        raise InputError("need at least two replications")
    policy = make_policy(policy_kind, params.ell, pooled)
    sigma = sigma or default_coupling_sigma(policy, params.ell)
    s = _check_inputs(params, policy, sigma)
    stream = EventStream(seed)
    cells = _all_cells(params, policy)
    nc, nq, n_types = len(cells), len(policy.queues), params.ell + 1
    R = int(replications)
    theta = params.theta

    q0 = extra_agent_queue(policy, i)
    qi = i if i in policy.queues and policy.name != "ncr" else policy.queues[0]
    extra_cells = (_cell_index(params, policy, 0, q0), _cell_index(params, policy, i, qi))
    base_counts = np.zeros(nc, dtype=np.int64)
    for (t_, q), n in base_state.items():
        if q not in policy.queues or not 0 <= t_ <= params.ell:
            raise InputError(f"base state cell {(t_, q)} is not valid")
        base_counts[_cell_index(params, policy, t_, q)] = n

    init = stream.rng("coupled-initial")
    rates = np.concatenate([params.lam, params.mu])
    total = float(rates.sum())
    ev = stream.rng("coupled-events")
    if total > 0 and horizon > 0:
        # enough steps that every replication passes the horizon w.h.p.; checked below
        mean_n = total * horizon
        n_steps = int(mean_n + 10 * math.sqrt(mean_n) + 20)
    else:
        n_steps = 0
    slots = int(base_counts.max(initial=0)) + 2 + min(n_steps, int(2 * max(params.lam.max(), 0) *
                                                                   horizon + 20))
    slots = max(slots, 4)

    D = np.full((3, R, nc, slots), np.inf)
    for c in range(nc):
        n = int(base_counts[c])
        if n:
            D[:, :, c, :n] = init.exponential(1.0 / theta, (R, n))[None]
    extra = init.exponential(1.0 / theta, R)
    D[1, :, extra_cells[0], slots - 1] = extra
    D[2, :, extra_cells[1], slots - 1] = extra

    matches = np.zeros((3, R))
    t = np.zeros(R)
    cum_kind = np.cumsum(rates) / total if total > 0 else None
    cum_sigma = np.cumsum(s, axis=1)
    logs = [[] for _ in range(3)] if log_replications else None
    rows = np.arange(R)
    step = 0
    while step < n_steps:
        t = t + ev.exponential(1.0 / total, R)
        kind = np.minimum(np.searchsorted(cum_kind, ev.random(R), side="right"), len(rates) - 1)
        uq = ev.random(R)
        pat = ev.exponential(1.0 / theta, R)
        u1 = ev.random(R)
        u2 = ev.random(R)
        active = t <= horizon
        step += 1
        if not active.any():
            break
        if step == n_steps and active.any():
            n_steps += 50          # rare: a replication still inside the horizon
        for sysno in range(3):
            Dsys = D[sysno]
            Dsys[Dsys <= t[:, None, None]] = np.inf
        # agent arrivals
        is_agent = active & (kind < n_types)
        if is_agent.any():
            r_idx = rows[is_agent]
            types = kind[is_agent]
            u_sel = uq[is_agent]
            qs = np.zeros(len(types), dtype=np.int64)
            for a in range(n_types):
                sel = types == a
                if sel.any():
                    qs[sel] = np.searchsorted(cum_sigma[a], u_sel[sel], side="right")
            qs = np.minimum(qs, nq - 1)
            c_idx = types * nq + qs
            for sysno in range(3):
                Dsys = D[sysno]
                free = np.isinf(Dsys[r_idx, c_idx, :slots - 1])
                if not free.any(axis=1).all():
                    D = _grow(D, slots)
                    slots = D.shape[-1]
                    Dsys = D[sysno]
                    free = np.isinf(Dsys[r_idx, c_idx, :slots - 1])
                slot = np.argmax(free, axis=1)
                Dsys[r_idx, c_idx, slot] = t[is_agent] + pat[is_agent]
                if logs is not None:
                    for r, a, q in zip(r_idx, types, qs):
                        if r < log_replications:
                            logs[sysno].append((int(r), float(t[r]), "agent", int(a),
                                                policy.queues[q], "join"))
        # job arrivals
        for j in range(n_types):
            is_job = active & (kind == n_types + j)
            if not is_job.any():
                continue
            r_idx = rows[is_job]
            for sysno in range(3):
                Dsys = D[sysno]
                occ = np.isfinite(Dsys[r_idx])
                counts = occ.sum(axis=2)
                res = dispatch_kernel(policy, params.patience, cells, counts, j)
                cum = np.cumsum(res.match, axis=1)
                u = u1[r_idx]
                c_pick = (cum <= u[:, None]).sum(axis=1)
                hit = c_pick < nc
                if hit.any():
                    rr = r_idx[hit]
                    cc = c_pick[hit]
                    occ_c = occ[hit, cc, :]
                    n_c = occ_c.sum(axis=1)
                    kth = np.minimum((u2[rr] * n_c).astype(np.int64), n_c - 1)
                    slot = np.argmax(np.cumsum(occ_c, axis=1) > kth[:, None], axis=1)
                    Dsys[rr, cc, slot] = np.inf
                    matches[sysno, rr] += 1
                if logs is not None:
                    for r, c, h in zip(r_idx, c_pick, hit):
                        if r < log_replications:
                            out = f"match:{cells[c].types[0]}" if h else "lost"
                            logs[sysno].append((int(r), float(t[r]), "job", j,
                                                cells[c].queue if h else None, out))
    if n_steps and (t <= horizon).any():
        raise RuntimeError("event budget exhausted before the horizon")  # pragma: no cover
    first = 1.0 + matches[0] - matches[1]
    second = matches[1] - matches[2]
    se = lambda x: float(x.std(ddof=1) / math.sqrt(R))
    return CoupledResult(means=tuple(float(m.mean()) for m in matches),
                         first=float(first.mean()), first_se=se(first),
                         second=float(second.mean()), second_se=se(second),
                         replications=R, horizon=float(horizon),
                         event_logs=tuple(tuple(l) for l in logs) if logs is not None else ())


def _grow(D: np.ndarray, slots: int) -> np.ndarray:
    """Double the slot dimension, keeping the reserved last slot last."""
    extra = np.full(D.shape[:-1] + (slots,), np.inf)
    body, last = D[..., :slots - 1], D[..., slots - 1:]
    return np.concatenate([body, extra, last], axis=-1)


def write_event_log(rows: Sequence[tuple], path) -> None:
    """CSV of event-log rows ``(replication, time, kind, type, queue, outcome)``.

    Rows from :func:`run` carry no replication number and are written as
    replication 0.
    """
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "time", "kind", "type", "queue", "outcome"])
        for r in rows:
            if len(r) == 5:
                r = (0,) + tuple(r)
            w.writerow([r[0], format(r[1], ".17g"), r[2], r[3], "" if r[4] is None else r[4], r[5]])
