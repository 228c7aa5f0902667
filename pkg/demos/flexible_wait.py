"""Three routes to the wait of a flexible agent in the specialised queue.

Under ACR the specialised queue behaves like an M/M/1+M queue, so the wait
of a flexible agent who joins it reduces to a birth-death passage time.
Here it is computed from the full two-queue chain, from the one-dimensional
recursion, and by injecting tagged agents into a simulation.

    python demos/flexible_wait.py
"""
from flexqueue.ctmc import ChainFamily, mm1m_stationary, solve_birth_death_passage, w01_spec
from flexqueue.ctmc.birth_death import queue1_cap
from flexqueue.experiments import TWO_TYPE_SUPPORT
from flexqueue.model import MarketParams, StrategyProfile, make_acr
from flexqueue.sim import EventStream, tagged_wait

market = MarketParams(ell=1, lam=(1.3, 0.9), mu=(0.8, 1.1), theta=0.7)
share = 0.4                     # fraction of flexible agents joining queue 1
profile = StrategyProfile.two_type(share)

fam = ChainFamily(market, make_acr(1), TWO_TYPE_SUPPORT, eps=1e-14)
chain_wait = fam.wait(profile, 0, 1, fam.stationary(profile))

cap = queue1_cap(market, share)
birth = market.lam[1] + share * market.lam[0]
occupancy = mm1m_stationary(birth, market.mu[1], market.theta, cap)
recursion_wait = occupancy @ solve_birth_death_passage(w01_spec(market, share, cap))

est = tagged_wait(market, make_acr(1), profile, 0, 1, replications=5000, stream=EventStream(7))

print(f"chain        {chain_wait:.10f}  ({fam.layout.n_states} states)")
print(f"recursion    {recursion_wait:.10f}  (cap {cap})")
print(f"monte carlo  {est.mean:.4f} +- {est.ci_halfwidth:.4f}  ({est.n} injections)")
