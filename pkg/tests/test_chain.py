import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flexqueue.ctmc import (CapacityError, ChainFamily, build_chain, mm1m_stationary,
                            solve_birth_death_passage, solve_truncated, stationary, w01_spec,
                            write_generator_csv, write_stationary_csv)
from flexqueue.model import (InputError, MarketParams, PatienceModel, StrategyProfile, make_acr,
                             make_ncr, make_policy, make_rcr)

from oracles import DenseMarket


def _patience(K):
    return PatienceModel.perfect() if K is None else PatienceModel.max_rejections(K)


def _policy(kind, ell):
    return make_rcr(ell, pooled=True) if kind == "rcr_pooled" else make_policy(kind, ell)


def _compare(kind, lam, mu, theta, sigma, caps, K, lump):
    ell = len(lam) - 1
    p = MarketParams(ell=ell, lam=lam, mu=mu, theta=theta, patience=_patience(K))
    policy = _policy(kind, ell)
    prof = StrategyProfile(np.array(sigma, float))
    fam = ChainFamily(p, policy, np.array(sigma) > 0, caps=caps, lump=lump)
    dist = fam.stationary(prof)
    ref = DenseMarket(kind, lam, mu, theta, sigma, caps, K)
    pi = ref.stationary()
    assert fam.throughput(dist) == pytest.approx(ref.throughput(pi), rel=1e-10)
    for qi, q in enumerate(policy.queues):
        cells = [c for c in ref.cells if c[1] == qi]
        m = ref.marginal(pi, cells)
        want = np.array([m.get(n, 0.0) for n in range(caps[qi] + 1)])
        assert np.allclose(dist.queue_marginal(q), want, atol=1e-12)
    for i in range(ell + 1):
        for qi, q in enumerate(policy.queues):
            got, want = fam.wait(prof, i, q, dist), ref.wait(i, qi, pi)
            if math.isinf(want):
                assert math.isinf(got)
            else:
                assert got == pytest.approx(want, rel=1e-8)


CASES_ELL1 = [
    ("ncr", [[1.0], [1.0]], (6,)),
    ("acr", [[0.6, 0.4], [0.0, 1.0]], (4, 5)),
    ("acr", [[1.0, 0.0], [0.0, 1.0]], (4, 5)),
    ("rcr", [[0.3, 0.7], [0.0, 1.0]], (4, 5)),
    ("rcr", [[0.5, 0.5], [0.5, 0.5]], (3, 4)),
]


@pytest.mark.parametrize("kind,sigma,caps", CASES_ELL1)
@pytest.mark.parametrize("K", [None, 0, 1])
@pytest.mark.parametrize("lump", [True, False])
def test_matches_unlumped_dense_oracle_one_flexible(kind, sigma, caps, K, lump):
    _compare(kind, (1.3, 0.9), (0.8, 1.1), 0.7, sigma, caps, K, lump)


@pytest.mark.parametrize("kind", ["acr", "rcr", "rcr_pooled"])
def test_matches_dense_oracle_two_flexible_types(kind):
    if kind == "acr":
        sigma = [[0.4, 0.3, 0.3], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    else:
        sigma = [[0.4, 0.3, 0.3], [0.2, 0.8, 0.0], [0.1, 0.0, 0.9]]
    _compare(kind, (1.0, 0.7, 0.5), (0.6, 0.9, 0.8), 0.5, sigma, (2, 2, 2), 1, False)


def test_single_type_market_is_mm1m():
    p = MarketParams(ell=0, lam=(2.5,), mu=(1.5,), theta=0.4)
    policy = make_ncr(0)
    prof = StrategyProfile.truthful(policy, 0)
    chain = build_chain(p, policy, prof, cap=40)
    dist = stationary(chain)
    ref = mm1m_stationary(2.5, 1.5, 0.4, 40)
    assert np.allclose(dist.queue_marginal(0), ref, atol=1e-13)
    assert chain.family.throughput(dist) == pytest.approx(1.5 * (1 - ref[0]), rel=1e-12)


def test_lumping_preserves_answers():
    p = MarketParams(ell=1, lam=(1.2, 1.4), mu=(1.0, 1.3), theta=0.6)
    policy = make_acr(1)
    prof = StrategyProfile.two_type(0.4)
    # both types in queue 1 serve exactly the jobs that reach it
    full = ChainFamily(p, policy, [[True, True], [False, True]], caps=(6, 6), lump=False)
    lumped = ChainFamily(p, policy, [[True, True], [False, True]], caps=(6, 6), lump=True)
    assert lumped.layout.n_states < full.layout.n_states
    d1, d2 = full.stationary(prof), lumped.stationary(prof)
    assert full.throughput(d1) == pytest.approx(lumped.throughput(d2), rel=1e-11)
    w1, w2 = full.wait_table(prof, dist=d1), lumped.wait_table(prof, dist=d2)
    for (key, a) in w1.items():
        assert w2[key] == pytest.approx(a, rel=1e-9)


def test_flexible_wait_in_queue1_is_birth_death_passage():
    p = MarketParams(ell=1, lam=(40.0, 60.0), mu=(5.0, 40.0), theta=4.0)
    policy = make_acr(1)
    prof = StrategyProfile.two_type(0.3)
    fam = ChainFamily(p, policy, [[True, True], [False, True]], caps=(30, 60))
    dist = fam.stationary(prof)
    tau = solve_birth_death_passage(w01_spec(p, 0.3, 60))
    want = dist.queue_marginal(1) @ tau
    assert fam.wait(prof, 0, 1, dist) == pytest.approx(want, rel=1e-9)


@settings(max_examples=25)
@given(kind=st.sampled_from(["ncr", "acr", "rcr"]), x=st.floats(0, 1), y=st.floats(0, 1),
       K=st.sampled_from([None, 0, 2]), theta=st.floats(0.1, 5))
def test_generator_rows_sum_to_zero(kind, x, y, K, theta):
    p = MarketParams(ell=1, lam=(1.0, 2.0), mu=(1.5, 0.5), theta=theta, patience=_patience(K))
    policy = make_policy(kind, 1)
    if kind == "ncr":
        sigma = [[1.0], [1.0]]
    elif kind == "acr":
        sigma = [[1 - x, x], [0.0, 1.0]]
    else:
        sigma = [[1 - x, x], [y, 1 - y]]
    chain = build_chain(p, policy, StrategyProfile(sigma), cap=5)
    Q = chain.generator
    assert np.allclose(np.asarray(Q.sum(axis=1)).ravel(), 0.0, atol=1e-12)
    off = Q.copy()
    off.setdiag(0)
    assert off.min() >= 0


def test_family_reuse_matches_fresh_build():
    p = MarketParams(ell=1, lam=(3.0, 2.0), mu=(2.0, 2.5), theta=1.0)
    policy = make_acr(1)
    fam = ChainFamily(p, policy, [[True, True], [False, True]], caps=(12, 14))
    for s in (0.1, 0.9, 0.5):
        prof = StrategyProfile.two_type(s)
        d = fam.stationary(prof)
        fresh = ChainFamily(p, policy, [[True, True], [False, True]], caps=(12, 14))
        d2 = fresh.stationary(prof)
        assert np.allclose(d.pi, d2.pi, atol=1e-12)
        assert fam.wait(prof, 0, 1, d) == pytest.approx(fresh.wait(prof, 0, 1, d2), rel=1e-9)
    p2 = p.with_rate("mu", 0, 3.5)
    d3 = fam.stationary(StrategyProfile.two_type(0.5), p2)
    ref = ChainFamily(p2, policy, [[True, True], [False, True]], caps=(12, 14))
    assert np.allclose(d3.pi, ref.stationary(StrategyProfile.two_type(0.5)).pi, atol=1e-12)


def test_iterative_and_direct_agree():
    p = MarketParams(ell=1, lam=(3.0, 2.0), mu=(2.0, 2.5), theta=1.0)
    policy = make_rcr(1)
    prof = StrategyProfile([[0.6, 0.4], [0.2, 0.8]])
    sup = [[True, True], [True, True]]
    a = ChainFamily(p, policy, sup, caps=(10, 10), method="direct")
    b = ChainFamily(p, policy, sup, caps=(10, 10), method="iterative")
    da, db = a.stationary(prof), b.stationary(prof)
    assert np.allclose(da.pi, db.pi, atol=1e-9)
    assert a.wait(prof, 1, 1, da) == pytest.approx(b.wait(prof, 1, 1, db), rel=1e-7)


def test_unmatchable_agent_has_infinite_wait():
    p = MarketParams(ell=1, lam=(1.0, 1.0), mu=(1.0, 0.0), theta=1.0)
    policy = make_ncr(1)
    prof = StrategyProfile.truthful(policy, 1)
    chain, dist = solve_truncated(p, policy, prof, cap=6)
    assert math.isinf(chain.family.wait(prof, 1, 0, dist))
    assert math.isfinite(chain.family.wait(prof, 0, 0, dist))


def test_tail_target_is_met():
    p = MarketParams(ell=1, lam=(40.0, 60.0), mu=(5.0, 40.0), theta=4.0)
    chain, dist = solve_truncated(p, make_acr(1), StrategyProfile.two_type(0.5),
                                  eps=1e-3, tail_target=1e-9)
    assert dist.tail_mass_bound <= 1e-9
    assert dist.pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(dist.pi >= -1e-15)


def test_throughput_increases_with_caps():
    p = MarketParams(ell=1, lam=(4.0, 6.0), mu=(3.0, 4.0), theta=1.0)
    policy = make_acr(1)
    prof = StrategyProfile.two_type(0.4)
    tps = []
    for c in (2, 4, 8, 16):
        chain, dist = solve_truncated(p, policy, prof, cap=c)
        tps.append(chain.family.throughput(dist))
    assert all(b >= a - 1e-12 for a, b in zip(tps, tps[1:]))


def test_capacity_budget_enforced():
    p = MarketParams(ell=1, lam=(1.0, 1.0), mu=(1.0, 1.0), theta=1.0)
    with pytest.raises(CapacityError):
        ChainFamily(p, make_rcr(1), [[True, True], [True, True]], caps=(50, 50), budget=1000)


def test_profile_off_support_rejected():
    p = MarketParams(ell=1, lam=(1.0, 1.0), mu=(1.0, 1.0), theta=1.0)
    fam = ChainFamily(p, make_acr(1), [[True, False], [False, True]], caps=(3, 3))
    with pytest.raises(InputError):
        fam.stationary(StrategyProfile.two_type(0.5))
    with pytest.raises(InputError):
        fam.stationary(StrategyProfile.truthful(make_acr(1), 1), p.replace(theta=2.0))


def test_layout_indexing_round_trip():
    p = MarketParams(ell=1, lam=(1.0, 1.0), mu=(1.0, 1.0), theta=1.0)
    fam = ChainFamily(p, make_rcr(1), [[True, True], [True, True]], caps=(3, 4), lump=False)
    lay = fam.layout
    for k in range(lay.n_states):
        assert lay.index_of(lay.state_counts(k)) == k
    s = lay.system_state(5)
    assert sum(s.counts.values()) == sum(lay.state_counts(5))


def test_csv_dumps(tmp_path):
    p = MarketParams(ell=1, lam=(1.0, 1.0), mu=(1.0, 1.0), theta=1.0)
    chain = build_chain(p, make_acr(1), StrategyProfile.two_type(0.5), cap=3)
    write_generator_csv(chain, tmp_path / "q.csv")
    write_stationary_csv(stationary(chain), tmp_path / "pi.csv")
    rows = list(csv.reader(open(tmp_path / "q.csv")))
    assert len(rows) == chain.generator.nnz + 1
    prob = [float(r[-1]) for r in list(csv.reader(open(tmp_path / "pi.csv")))[1:]]
    assert len(prob) == chain.n_states and sum(prob) == pytest.approx(1.0)
