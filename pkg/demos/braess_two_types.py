"""Flexible agents who are told about both queues can cost the market matches.

With slow type-0 jobs every flexible agent joins the specialised queue under
the pooled-information policy (ACR), crowding out the type-1 agents.  The
same market under no reservation (NCR) or with reserved queues (RCR) keeps
more matches.

    python demos/braess_two_types.py
"""
from flexqueue.ctmc import ChainFamily
from flexqueue.equilibrium import solve_scalar_two_type
from flexqueue.experiments import FIG4_BASE, TWO_TYPE_SUPPORT, first_best, ncr_throughput
from flexqueue.model import make_acr, make_rcr


def equilibrium_throughput(p, policy, which):
    eq = solve_scalar_two_type(p, policy, grid=5, which=which)[0]
    fam = ChainFamily(p, policy, TWO_TYPE_SUPPORT)
    return eq.sigma01, fam.throughput(fam.stationary(eq.sigma_star))


def main():
    print(f"{'mu0':>5} {'first best':>11} {'NCR':>9} {'ACR':>9} {'sigma01':>8} "
          f"{'RCR':>9} {'sigma01':>8}")
    for mu0 in (1.0, 2.0, 5.0, 20.0):
        p = FIG4_BASE.with_rate("mu", 0, mu0)
        x_a, tp_a = equilibrium_throughput(p, make_acr(1), "smallest")
        x_r, tp_r = equilibrium_throughput(p, make_rcr(1), "largest")
        print(f"{mu0:5.1f} {first_best(p):11.4f} {ncr_throughput(p):9.4f} {tp_a:9.4f} "
              f"{x_a:8.3f} {tp_r:9.4f} {x_r:8.3f}")


if __name__ == "__main__":
    main()
