import csv
import json

import numpy as np
import pytest

from flexqueue.config import RunConfig, load_file
from flexqueue.experiments import (FIG4_BASE, FIG4_COLUMNS, FIG6_COLUMNS, LEMMA_COLUMNS,
                                   SweepSpec, config_hash, default_grid, first_best,
                                   flexible_rows, fmt, lemma_suite, ncr_throughput,
                                   place_agents, sweep_fig4_7, sweep_fig6, theorem2_grid)
from flexqueue.model import InputError


def test_fmt():
    assert fmt(3) == "3"
    assert fmt(True) == "1"
    assert fmt(0.1) == "0.10000000000000001"
    assert float(fmt(1 / 3)) == 1 / 3
    assert fmt(float("inf")) == "inf"
    assert fmt("acr") == "acr"


def test_default_grid():
    g = default_grid(60.0)
    assert len(g) == 61 and g[0] == 0.05 and g[1] == 1.0 and g[-1] == 60.0


@pytest.mark.parametrize("grid", [(), (1.0, 1.0), (2.0, 1.0), (1.0, float("inf"))])
def test_sweep_spec_rejects_bad_grids(grid):
    with pytest.raises(InputError):
        SweepSpec(FIG4_BASE, "mu0", grid)


def test_sweep_spec_markets():
    spec = SweepSpec(FIG4_BASE, "lam0", (1.0, 2.0))
    assert [m.lam[0] for m in spec.markets()] == [1.0, 2.0]
    with pytest.raises(InputError):
        SweepSpec(FIG4_BASE, "theta0", (1.0,))


def test_config_hash_is_key_order_free():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})


def test_first_best_bounds_ncr():
    p = FIG4_BASE.with_rate("mu", 0, 20.0)
    assert ncr_throughput(p) <= first_best(p) + 1e-9


def test_fig6_sweep_outputs_and_determinism(tmp_path):
    grid = (5.0, 25.0)
    a = tmp_path / "a" / "fig6.csv"
    b = tmp_path / "b" / "fig6.csv"
    rows = sweep_fig6(a, grid=grid)
    sweep_fig6(b, grid=grid)
    assert a.read_bytes() == b.read_bytes()
    text = list(csv.reader(open(a)))
    assert text[0] == FIG6_COLUMNS and len(text) == 3
    for r in rows:
        assert r["sigma01_rcr"] >= r["sigma01_acr"] - 1e-9
        for k in ("frac_acr", "frac_rcr"):
            assert r[k] <= 1 + 1e-12
    man = json.loads((tmp_path / "a" / "fig6.csv.manifest.json").read_text())
    assert man["manifest"]["command"] == ["sweep", "fig6"]
    assert man["manifest"]["files"] == ["fig6.csv"]
    # a manifest loads back as a run configuration
    cfg = RunConfig.from_dict(load_file(tmp_path / "a" / "fig6.csv.manifest.json"))
    assert cfg["sweep"]["grid"] == list(grid)


def test_fig4_sweep_small_grid(tmp_path):
    rows = sweep_fig4_7(tmp_path / "fig4.csv", grid=(2.0, 40.0))
    assert list(rows[0]) == FIG4_COLUMNS
    low, high = rows
    assert low["sigma01_acr"] == 1.0
    for r in rows:
        assert r["tp_rcr"] >= r["tp_ncr"] - 1e-9
        for k in ("frac_ncr", "frac_acr", "frac_rcr"):
            assert 0 < r[k] <= 1.0
        assert r["residual_acr"] <= 1e-6 and r["residual_rcr"] <= 1e-6


def test_flexible_rows():
    rng = np.random.default_rng(0)
    rows = flexible_rows(rng, 2, 6)
    assert len(rows) == 6
    assert np.allclose(rows[3], 1 / 3)
    for r in rows:
        assert r.sum() == pytest.approx(1.0) and np.all(r >= 0)


def test_theorem2_small_grid(tmp_path):
    rep = theorem2_grid(1, 2, 3, seed=4, out=tmp_path / "t.csv")
    again = theorem2_grid(1, 2, 3, seed=4)
    assert rep.n_pairs == 6 and rep.holds
    assert [r["gap"] for r in rep.rows] == [r["gap"] for r in again.rows]
    man = json.loads((tmp_path / "t.csv.manifest.json").read_text())
    assert man["manifest"]["seed"] == 4
    assert man["manifest"]["info"]["violations"] == []


def test_theorem2_input_checks():
    with pytest.raises(InputError):
        theorem2_grid(3, 1, 1, seed=0)
    with pytest.raises(InputError):
        theorem2_grid(1, 0, 1, seed=0)


def test_place_agents():
    s = place_agents("rcr", (3, 2))
    assert s[(0, 0)] + s[(0, 1)] == 3 and s[(1, 1)] == 2
    assert place_agents("ncr", (1, 2))[(1, 0)] == 2
    assert place_agents("acr", (1, 2))[(0, 0)] == 1


def test_lemma_suite_small(tmp_path):
    rep = lemma_suite(seed=3, out=tmp_path / "lem.csv", replications=300,
                      base_counts=((0, 0), (1, 2)), horizon_multiples=(1.0,))
    assert len(rep.rows) == 3 * 2 * 2
    assert rep.holds, rep.failures
    rows = list(csv.reader(open(tmp_path / "lem.csv")))
    assert rows[0] == LEMMA_COLUMNS
    rep2 = lemma_suite(seed=3, replications=300, base_counts=((0, 0), (1, 2)),
                       horizon_multiples=(1.0,))
    assert [r["first"] for r in rep.rows] == [r["first"] for r in rep2.rows]
    with pytest.raises(InputError):
        lemma_suite(seed=3, patience=("K7",))
