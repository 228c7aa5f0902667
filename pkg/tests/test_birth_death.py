import numpy as np
import pytest
from hypothesis import given, strategies as st

from flexqueue.ctmc import (BirthDeathSpec, NoAbsorptionError, mm1m_stationary, mm1m_tail_cap,
                            product_form, solve_birth_death_passage, w01_spec, yc_spec,
                            yc_wait_gap)
from flexqueue.model import InputError, MarketParams

from oracles import erlang_a_pmf, w01_dense, yc_dense

rates = st.floats(0.1, 50.0)


@given(lam=rates, mu=rates, theta=st.floats(0.2, 10.0), cap=st.integers(1, 120))
def test_mm1m_matches_high_precision(lam, mu, theta, cap):
    p = mm1m_stationary(lam, mu, theta, cap)
    assert np.max(np.abs(p - erlang_a_pmf(lam, mu, theta, cap))) <= 1e-12


def test_product_form_balance():
    birth = lambda n: 3.0 + 0 * n  # noqa: E731
    death = lambda n: 1.0 + 0.5 * n  # noqa: E731
    p = product_form(birth, death, 50)
    n = np.arange(50)
    assert np.allclose(p[:-1] * 3.0, p[1:] * (1.0 + 0.5 * (n + 1)), rtol=1e-12)


def test_product_form_long_chain_no_overflow():
    p = product_form(500.0, lambda n: 1.0 + 0.01 * n, 3000)
    assert np.isfinite(p).all() and p.sum() == pytest.approx(1.0)


def test_tail_cap_meets_target():
    cap = mm1m_tail_cap(60.0, 40.0, 4.0, 1e-10)
    big = erlang_a_pmf(60.0, 40.0, 4.0, cap + 200)
    assert big[cap:].sum() <= 1e-10
    assert big[cap - 1:].sum() > 1e-10


@given(Lam=st.floats(0.5, 80.0), mu1=st.floats(0.5, 60.0), theta=st.floats(0.5, 8.0),
       cap=st.integers(2, 80))
def test_w01_recursion_matches_dense_solve(Lam, mu1, theta, cap):
    p = MarketParams(ell=1, lam=(0.0, Lam), mu=(1.0, mu1), theta=theta)
    tau = solve_birth_death_passage(w01_spec(p, 0.0, cap))
    ref = w01_dense(Lam, mu1, theta, cap)
    assert np.allclose(tau, ref, rtol=1e-9, atol=0)


@given(Lam=st.floats(0.5, 80.0), mu1=st.floats(0.5, 60.0), theta=st.floats(0.5, 8.0),
       cap=st.integers(2, 80))
def test_yc_recursion_matches_dense_solve(Lam, mu1, theta, cap):
    p = MarketParams(ell=1, lam=(0.0, Lam), mu=(1.0, mu1), theta=theta)
    tau = solve_birth_death_passage(yc_spec(p, 0.0, cap))
    assert np.allclose(tau, yc_dense(Lam, mu1, theta, cap), rtol=1e-9, atol=0)


def test_w01_empty_queue_value():
    # alone in queue 1 with blocked arrivals: exp(mu1) wait
    p = MarketParams(ell=1, lam=(0.0, 0.0), mu=(1.0, 2.5), theta=1.0)
    assert solve_birth_death_passage(w01_spec(p, 0.0, 3))[0] == pytest.approx(0.4)


def test_passage_requires_absorption():
    with pytest.raises(NoAbsorptionError):
        solve_birth_death_passage(BirthDeathSpec(up=1.0, down=1.0, absorb=0.0, cap=5))


def test_spec_validation():
    with pytest.raises(InputError):
        BirthDeathSpec(up=1.0, down=1.0, absorb=1.0, cap=0)
    p = MarketParams(ell=1, lam=(1.0, 1.0), mu=(1.0, 1.0), theta=1.0)
    with pytest.raises(InputError):
        w01_spec(p, 1.5, 10)


@pytest.mark.parametrize("s", [0.0, 0.25, 0.5, 0.75, 1.0])
def test_yc_dominates_w01_with_gap(fig4_market, s):
    rep = yc_wait_gap(fig4_market, s)
    assert np.all(rep.yc_by_state >= rep.w01_by_state - 1e-12)
    assert rep.holds


def test_gap_report_numbers_agree_with_dense(fig4_market):
    rep = yc_wait_gap(fig4_market, 0.5, cap=90)
    Lam = 60.0 + 40.0 * 0.5
    p = erlang_a_pmf(Lam, 40.0, 4.0, 90)
    assert rep.w01 == pytest.approx(p @ w01_dense(Lam, 40.0, 4.0, 90), rel=1e-10)
    assert rep.yc == pytest.approx(p @ yc_dense(Lam, 40.0, 4.0, 90), rel=1e-10)
