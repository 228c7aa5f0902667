"""Exact analysis of the truncated market chain and its birth-death reductions."""
from .birth_death import (BirthDeathSpec, GapReport, NoAbsorptionError, mm1m_stationary,
                          mm1m_tail_cap, product_form, solve_birth_death_passage, w01_spec,
                          yc_spec, yc_wait_gap)
from .chain import (CapacityError, ChainFamily, ChainLayout, StationaryDist, TruncatedChain,
                    WaitTable, build_chain, exact_throughput, solve_truncated, stationary,
                    virtual_wait_table,
                    write_generator_csv, write_stationary_csv)
from .linalg import ConvergenceError

__all__ = [
    "BirthDeathSpec", "GapReport", "NoAbsorptionError", "mm1m_stationary", "mm1m_tail_cap",
    "product_form", "solve_birth_death_passage", "w01_spec", "yc_spec", "yc_wait_gap",
    "CapacityError", "ChainFamily", "ChainLayout", "StationaryDist", "TruncatedChain",
    "WaitTable", "build_chain", "exact_throughput", "solve_truncated", "stationary", "virtual_wait_table",
    "write_generator_csv", "write_stationary_csv", "ConvergenceError",
]
