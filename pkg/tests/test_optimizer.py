import math
from dataclasses import replace

import numpy as np
import pytest

from randnoma.channel import ParameterError, SystemConfig, db_to_linear
from randnoma.markov import analytical_sum_rate
from randnoma.optimizer import (
    TABLE_HEADER,
    GridSpec,
    build_lookup_table,
    coarse_to_fine,
    grid_search_analytical,
    grid_search_simulated,
    read_table,
    sweep_k,
)


def test_axis_has_no_float_drift():
    g = GridSpec(0.01, 1.0, 0.01, 1.0, 2.0, 0.05)
    ps = g.p_values()
    assert len(ps) == 100 and ps[0] == 0.01 and ps[-1] == 1.0
    assert 0.59 in ps and 0.3 in ps
    assert len(g.R_values()) == 21 and g.size == 2100


@pytest.mark.parametrize("kw", [
    dict(p_min=0.0), dict(p_max=1.5), dict(p_min=0.6, p_max=0.5), dict(R_min=0.0),
    dict(p_step=0.0), dict(refinement_rounds=-1), dict(refinement_shrink=1.0),
])
def test_grid_rejects_bad_bounds(kw):
    base = dict(p_min=0.1, p_max=1.0, p_step=0.1, R_min=1.0, R_max=3.0, R_step=0.5)
    with pytest.raises(ParameterError):
        GridSpec(**{**base, **kw})


def test_single_point_grid():
    g = GridSpec(0.4, 0.4, 0.1, 3.0, 3.0, 0.1, refinement_rounds=3)
    res = grid_search_analytical(25.0, g)
    assert (res.p_star, res.R_star) == (0.4, 3.0)
    assert res.Rs_star == analytical_sum_rate(0.4, 3.0, db_to_linear(25.0))[1]


def test_constant_objective_breaks_ties_low():
    g = GridSpec(0.2, 1.0, 0.2, 1.0, 5.0, 1.0, refinement_rounds=1)
    p, R, v, _ = coarse_to_fine(lambda p, R: 1.0, g)
    assert (p, R, v) == (0.2, 1.0, 1.0)


def test_recovers_known_maximiser():
    f = lambda p, R: -((p - 0.373) ** 2) - 0.5 * (R - 2.437) ** 2
    g = GridSpec(0.1, 1.0, 0.1, 1.0, 4.0, 0.1, refinement_rounds=2)
    p, R, _, evals = coarse_to_fine(f, g)
    assert p == pytest.approx(0.373, abs=0.0005 + 1e-12)
    assert R == pytest.approx(2.437, abs=0.0005 + 1e-12)
    assert len(evals) < g.size + 2 * 21 * 21


def test_incumbent_is_best_evaluated_point():
    g = GridSpec.default_analytical(25.0, p_step=0.05, R_step=0.25, refinement_rounds=1)
    res = grid_search_analytical(25.0, g)
    assert res.Rs_star == max(res.evaluations.values())
    assert res.n_evaluations == len(res.evaluations)


def test_refinement_never_hurts():
    coarse = GridSpec.default_analytical(15.0, p_step=0.05, R_step=0.25, refinement_rounds=0)
    base = grid_search_analytical(15.0, coarse)
    fine = grid_search_analytical(15.0, replace(coarse, refinement_rounds=2))
    assert fine.Rs_star >= base.Rs_star


def test_analytical_surface_is_smooth_near_optimum():
    B = db_to_linear(25.0)
    Rs = [analytical_sum_rate(0.59, R, B)[1] for R in np.arange(5.0, 7.0, 0.01)]
    assert np.abs(np.diff(Rs)).max() < 0.02


def test_refinement_stays_inside_bounds():
    g = GridSpec(0.5, 1.0, 0.1, 1.0, 2.0, 0.1, refinement_rounds=2)
    res = grid_search_analytical(15.0, g)
    assert all(0.5 <= p <= 1.0 and 1.0 <= R <= 2.0 for p, R in res.evaluations)
    assert res.p_star == 1.0


def test_simulated_two_user_optimum_matches_closed_form():
    # long horizons keep the cold-start bias negligible
    template = SystemConfig(K=2, snr_db=25.0, n_slots=2000, n_experiments=200, seed=11)
    g = GridSpec(0.5, 0.7, 0.05, 5.6, 6.6, 0.2, refinement_rounds=0)
    sim = grid_search_simulated(template, g)
    exact = grid_search_analytical(25.0)
    assert abs(sim.Rs_star - exact.Rs_star) <= 3 * sim.stderr + 0.02
    B = db_to_linear(25.0)
    # the simulated incumbent is near-optimal on the true surface
    assert analytical_sum_rate(sim.p_star, sim.R_star, B)[1] >= exact.Rs_star - 0.05


def test_simulated_search_reports_stderr():
    template = SystemConfig(K=3, snr_db=15.0, n_slots=100, n_experiments=20, seed=1)
    g = GridSpec(0.5, 1.0, 0.5, 1.0, 2.0, 1.0, refinement_rounds=0)
    res = grid_search_simulated(template, g)
    assert res.method == "simulated" and res.stderr > 0 and res.n_evaluations == 4


def test_sweep_pins_deterministic_scheme():
    template = SystemConfig(snr_db=15.0, n_slots=100, n_experiments=10, seed=3)
    g = GridSpec(0.5, 1.0, 0.25, 0.5, 1.5, 0.5, refinement_rounds=0)
    rows = sweep_k(template, [3], grid=g)
    assert [r.scheme for r in rows] == ["cross-slot", "intra-only", "deterministic"]
    assert rows[2].p_star == 1.0
    with pytest.raises(ParameterError):
        sweep_k(template, [3], schemes=["aloha"], grid=g)


def test_optimal_p_falls_with_users(sweep_25db):
    ks = sorted(k for k, s in sweep_25db if s == "cross-slot")
    ps = [sweep_25db[(k, "cross-slot")].p_star for k in ks]
    assert ps == sorted(ps, reverse=True) and ps[0] > ps[-1]


def _small_grids():
    a = GridSpec(0.1, 1.0, 0.1, 1.0, 8.0, 0.5, refinement_rounds=1)
    s = GridSpec(0.25, 1.0, 0.25, 0.5, 2.0, 0.5, refinement_rounds=0)
    return a, s


def test_lookup_table_cells(tmp_path):
    a, s = _small_grids()
    template = SystemConfig(n_slots=100, n_experiments=10, seed=2)
    path = tmp_path / "table.csv"
    rows = build_lookup_table([15.0, 25.0], [2, 3], path, template, a, s)
    assert len(rows) == 4
    back = read_table(path)
    assert list(back[0]) == list(TABLE_HEADER)
    assert [(r["K"], r["B_dB"], r["method"]) for r in back] == [
        ("2", "15", "analytical"), ("2", "25", "analytical"),
        ("3", "15", "simulated"), ("3", "25", "simulated"),
    ]
    assert back[0]["stderr"] == "" and float(back[2]["stderr"]) > 0
    assert float(back[0]["Rs_star"]) == pytest.approx(grid_search_analytical(15.0, a).Rs_star, rel=1e-9)
    assert math.isclose(float(back[1]["p_star"]), 0.6, abs_tol=0.05)


def test_lookup_table_is_byte_reproducible(tmp_path):
    a, s = _small_grids()
    template = SystemConfig(n_slots=100, n_experiments=10, seed=2)
    build_lookup_table([15.0], [2, 4], tmp_path / "a.csv", template, a, s)
    build_lookup_table([15.0], [2, 4], tmp_path / "b.csv", template, a, s)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
