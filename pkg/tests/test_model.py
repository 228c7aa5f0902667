import numpy as np
import pytest
from hypothesis import given, strategies as st

from flexqueue.model import (LOST, Cell, InputError, MarketParams, Matched, PatienceModel,
                             PolicySpec, StrategyProfile, SystemState, check_admissible,
                             compatible, dispatch_kernel, full_info_policy_table, make_acr,
                             make_ncr, make_policy, make_rcr, resolve_dispatch)

from oracles import beta_by_draws, job_outcomes


# -- patience ---------------------------------------------------------------------

def test_perfect_beta_is_indicator():
    pm = PatienceModel.perfect()
    assert pm.beta(0, 5) == 0.0
    assert pm.beta(1, 5) == 1.0
    assert pm.beta(3, 3) == 1.0


def test_max_rejections_one_of_five():
    # one compatible among five, two asks: 1 - (4/5)(3/4)
    assert PatienceModel.max_rejections(1).beta(1, 5) == pytest.approx(2 / 5, abs=1e-15)


def test_max_rejections_zero_is_single_ask():
    assert PatienceModel.max_rejections(0).beta(2, 7) == pytest.approx(2 / 7)


@given(K=st.integers(0, 6), b=st.integers(1, 12), data=st.data())
def test_beta_matches_draw_tree(K, b, data):
    a = data.draw(st.integers(0, b))
    got = PatienceModel.max_rejections(K).beta(a, b)
    assert got == pytest.approx(beta_by_draws(a, b, K), abs=1e-13)


@given(K=st.integers(0, 5), b=st.integers(1, 10), data=st.data())
def test_beta_monotone_in_compatible_count(K, b, data):
    a = data.draw(st.integers(0, b - 1))
    pm = PatienceModel.max_rejections(K)
    assert pm.beta(a + 1, b) >= pm.beta(a, b) - 1e-15


def test_beta_vectorised():
    pm = PatienceModel.max_rejections(1)
    out = pm.beta(np.array([0, 1, 2]), np.array([3, 3, 3]))
    assert out.shape == (3,)
    assert out[0] == 0.0


@pytest.mark.parametrize("kw", [dict(kind="perfect", K=1), dict(kind="max_rejections"),
                                dict(kind="max_rejections", K=-1), dict(kind="other")])
def test_patience_rejects_bad_input(kw):
    with pytest.raises(InputError):
        PatienceModel(**kw)


# -- market and policies ------------------------------------------------------------

def test_market_validation():
    with pytest.raises(InputError):
        MarketParams(ell=1, lam=(1.0,), mu=(1.0, 1.0), theta=1.0)
    with pytest.raises(InputError):
        MarketParams(ell=1, lam=(1.0, -1.0), mu=(1.0, 1.0), theta=1.0)
    with pytest.raises(InputError):
        MarketParams(ell=1, lam=(1.0, 1.0), mu=(1.0, 1.0), theta=0.0)
    with pytest.raises(InputError):
        MarketParams(ell=1, lam=(1.0, np.inf), mu=(1.0, 1.0), theta=1.0)


def test_market_replace_and_with_rate():
    p = MarketParams(ell=1, lam=(1.0, 2.0), mu=(3.0, 4.0), theta=1.0)
    q = p.with_rate("mu", 0, 9.0)
    assert q.mu.tolist() == [9.0, 4.0] and p.mu.tolist() == [3.0, 4.0]
    assert p.replace(theta=2.0).theta == 2.0
    assert p == MarketParams(ell=1, lam=(1.0, 2.0), mu=(3.0, 4.0), theta=1.0)
    assert p.is_regular() and not p.with_rate("lam", 1, 0.0).is_regular()


def test_policy_priorities():
    assert make_ncr(2).rho == ((0,), (0,), (0,))
    assert make_acr(2).rho == ((0,), (1, 0), (2, 0))
    assert make_rcr(2).rho == ((0, 1, 2), (1, 0, 2), (2, 0, 1))
    pooled = make_rcr(2, pooled=True)
    assert pooled.dispatch_sets(1) == [(1,), (0, 2)]
    assert make_rcr(2).dispatch_sets(1) == [(1,), (0,), (2,)]
    assert make_acr(1).jobs_reaching(0) == [0, 1]
    assert make_acr(1).jobs_reaching(1) == [1]


def test_policy_spec_validation():
    with pytest.raises(InputError):
        PolicySpec(queues=(0, 1), rho=((0, 0),))
    with pytest.raises(InputError):
        PolicySpec(queues=(0,), rho=((1,),))
    with pytest.raises(InputError):
        make_policy("acr", 1, pooled=True)
    with pytest.raises(InputError):
        make_policy("xyz", 1)


def test_compatibility():
    assert compatible(0, 3) and compatible(2, 2) and not compatible(2, 1)


# -- strategies and states ----------------------------------------------------------

def test_strategy_rows_must_sum_to_one():
    with pytest.raises(InputError):
        StrategyProfile([[0.5, 0.4], [0.0, 1.0]])
    with pytest.raises(InputError):
        StrategyProfile([[1.5, -0.5], [0.0, 1.0]])
    s = StrategyProfile.two_type(0.25)
    assert s.sigma.tolist() == [[0.75, 0.25], [0.0, 1.0]]


def test_truthful_profiles():
    assert StrategyProfile.truthful(make_ncr(2), 2).sigma.tolist() == [[1.0], [1.0], [1.0]]
    assert np.array_equal(StrategyProfile.truthful(make_acr(2), 2).sigma, np.eye(3))


def test_system_state_accessors():
    s = SystemState({(0, 0): 2, (0, 1): 1, (1, 1): 3})
    assert s.agents_of_type(0) == 3
    assert s.queue_total(1) == 4
    assert s.total() == 6
    assert s.add(1, 1)[(1, 1)] == 4
    with pytest.raises(InputError):
        SystemState({(0, 0): -1})


# -- dispatch ------------------------------------------------------------------------

def test_acr_type1_job_prefers_queue1():
    p = MarketParams(ell=1, lam=(1, 1), mu=(1, 1), theta=1)
    d = resolve_dispatch(p, make_acr(1), SystemState({(0, 0): 2, (1, 1): 1}), 1)
    assert d[Matched(1, 1)] == 1.0 and d.p_lost == 0.0


def test_acr_falls_back_to_flexible_queue():
    p = MarketParams(ell=1, lam=(1, 1), mu=(1, 1), theta=1)
    d = resolve_dispatch(p, make_acr(1), SystemState({(0, 0): 2}), 1)
    assert d[Matched(0, 0)] == 1.0


def test_ncr_uniform_over_compatible():
    p = MarketParams(ell=1, lam=(1, 1), mu=(1, 1), theta=1)
    d = resolve_dispatch(p, make_ncr(1), SystemState({(0, 0): 1, (1, 0): 3}), 1)
    assert d[Matched(0, 0)] == pytest.approx(0.25)
    assert d[Matched(1, 0)] == pytest.approx(0.75)
    d0 = resolve_dispatch(p, make_ncr(1), SystemState({(1, 0): 3}), 0)
    assert d0.p_lost == 1.0 and d0[LOST] == 1.0


def test_rcr_type0_job_probes_queue1():
    p = MarketParams(ell=1, lam=(1, 1), mu=(1, 1), theta=1)
    d = resolve_dispatch(p, make_rcr(1), SystemState({(0, 1): 1, (1, 1): 4}), 0)
    assert d[Matched(0, 1)] == 1.0


def test_rcr_limited_patience_can_lose_job():
    p = MarketParams(ell=1, lam=(1, 1), mu=(1, 1), theta=1,
                     patience=PatienceModel.max_rejections(1))
    d = resolve_dispatch(p, make_rcr(1), SystemState({(0, 1): 1, (1, 1): 4}), 0)
    assert d[Matched(0, 1)] == pytest.approx(2 / 5)
    assert d.p_lost == pytest.approx(3 / 5)
    assert d.trace[-1][1:3] == (1, 5)


def test_dispatch_rejects_unknown_cells():
    p = MarketParams(ell=1, lam=(1, 1), mu=(1, 1), theta=1)
    with pytest.raises(InputError):
        resolve_dispatch(p, make_ncr(1), SystemState({(0, 1): 1}), 0)
    with pytest.raises(InputError):
        resolve_dispatch(p, make_ncr(1), SystemState(), 5)


_counts = st.lists(st.integers(0, 4), min_size=6, max_size=6)


@given(kind=st.sampled_from(["ncr", "acr", "rcr", "rcr_pooled"]), c=_counts,
       K=st.sampled_from([None, 0, 1, 2]), j=st.integers(0, 2))
def test_dispatch_matches_hand_walk(kind, c, K, j):
    ell = 2
    policy = make_rcr(ell, pooled=True) if kind == "rcr_pooled" else make_policy(kind, ell)
    nq = len(policy.queues)
    cells = [(i, q) for i in range(3) for q in range(nq)]
    state = {cell: n for cell, n in zip(cells, c)}
    patience = PatienceModel.perfect() if K is None else PatienceModel.max_rejections(K)
    p = MarketParams(ell=ell, lam=(1, 1, 1), mu=(1, 1, 1), theta=1, patience=patience)
    d = resolve_dispatch(p, policy, SystemState(state), j)
    ref = job_outcomes(kind, ell, {k: v for k, v in state.items() if v}, j, K)
    assert d.p_lost == pytest.approx(ref["lost"], abs=1e-12)
    for cell in cells:
        assert d[Matched(*cell)] == pytest.approx(ref.get(cell, 0.0), abs=1e-12)
    assert sum(d.probs.values()) == pytest.approx(1.0, abs=1e-12)


def test_kernel_tag_probability():
    cells = [Cell(0, (0,)), Cell(1, (0, 1))]
    res = dispatch_kernel(make_acr(1), PatienceModel.perfect(), cells, np.array([[0, 3]]), 1,
                          tag=(0, 1))
    assert res.tag[0] == pytest.approx(1 / 4)
    assert res.match[0, 1] == pytest.approx(3 / 4)


# -- full-information tables ----------------------------------------------------------

@pytest.mark.parametrize("kind", ["acr", "ncr"])
def test_full_info_tables_admissible(kind):
    p = MarketParams(ell=2, lam=(1, 1, 1), mu=(1, 1, 1), theta=1)
    table = full_info_policy_table(p, kind, 2)
    assert check_admissible(table, 2, 1e-12) == []


def test_admissibility_checker_flags_problems():
    bad = {((0, 1), 0): {1: 1.0}, ((0, 0), 1): {0: 1.0}, ((1, 0), 0): {0: 0.5}}
    msgs = check_admissible(bad, 1)
    assert any("incompatible" in m for m in msgs)
    assert any("empty" in m for m in msgs)
    assert any("sum" in m for m in msgs)
