import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from randnoma.channel import AnalyticalDomainError, ParameterError, is_potential, rho_threshold, sic_prefix_length
from randnoma.markov import (
    EventProbabilities,
    SteadyStateError,
    TransitionPolynomial,
    analytical_sum_rate,
    build_transition_model,
    event_probabilities,
    event_probabilities_mc,
    power_iteration,
    steady_state,
    throughput_matrix,
)
from randnoma.validation import random_event_probabilities, transcribed_throughput_matrix

B25 = 10**2.5
B15 = 10**1.5


def test_full_activity_is_degenerate():
    ev = event_probabilities(1.0, 2.0, B15)
    assert ev.E00 == ev.E11 == ev.E10 == 0.0
    assert ev.E22 + ev.E21 + ev.E20 == pytest.approx(1.0, abs=1e-15)


def test_direct_substitution():
    ev = event_probabilities(0.5, 1.0, 10.0)
    assert ev.E00 == 0.25
    assert ev.E11 == pytest.approx(0.5 * math.exp(-0.1), rel=1e-15)
    assert ev.E11 == pytest.approx(0.45242, abs=5e-6)


def test_domain_errors():
    with pytest.raises(AnalyticalDomainError):
        event_probabilities(0.5, 0.9, B25)
    with pytest.raises(ParameterError):
        event_probabilities(0.0, 2.0, B25)
    with pytest.raises(ParameterError):
        event_probabilities(0.5, 2.0, 0.0)


@given(st.floats(0.01, 1.0), st.floats(1.0, 10.0), st.floats(1.0, 1e4))
def test_closed_form_invariants(p, R, B):
    ev = event_probabilities(p, R, B)
    ev.validate(tol=1e-13)
    assert ev.E00 + ev.E11 + ev.E10 + ev.E22 + ev.E21 + ev.E20 == pytest.approx(1.0, abs=1e-14)
    assert ev.col0 + ev.col1 + ev.col2 == pytest.approx(ev.E20, abs=1e-14)


def test_mc_idle_channel():
    ev = event_probabilities_mc(0.0, 2.0, B25, 1000, np.random.default_rng(0))
    assert ev.E00 == 1.0


def test_mc_deterministic():
    a = event_probabilities_mc(0.4, 3.0, B15, 10_000, np.random.default_rng(8))
    b = event_probabilities_mc(0.4, 3.0, B15, 10_000, np.random.default_rng(8))
    assert a == b


def test_mc_converges_to_substitution_value():
    n = 2_000_000
    ev = event_probabilities_mc(0.5, 1.0, 10.0, n, np.random.default_rng(2))
    q = 0.5 * math.exp(-0.1)
    assert abs(ev.E11 - q) < 3 * math.sqrt(q * (1 - q) / n)


def test_mc_agrees_with_scalar_classification():
    """Vectorised MC classification against a per-slot loop over the same draws."""
    p, R, B, n = 0.7, 0.6, 5.0, 4000  # R < 1: outside the closed-form domain
    rho = rho_threshold(R)
    rng = np.random.default_rng(12)
    act = rng.random((n, 2)) < p
    b = -B * np.log(1.0 - rng.random((n, 2)))
    owner = (rng.random(n) < 0.5).astype(int)
    names = [k for k in EventProbabilities.__dataclass_fields__]
    counts = dict.fromkeys(names, 0)
    for i in range(n):
        users = [u for u in range(2) if act[i, u]]
        snrs = [b[i, u] for u in users]
        m = sic_prefix_length(snrs, rho)
        key = f"E{len(users)}{m}"
        counts[key] += 1
        if key in ("E11", "E21"):
            winner = max(users, key=lambda u: (b[i, u], -u))
            counts["rec_pot" if winner == owner[i] else "rec_nop"] += 1
        if key == "E22":
            counts["rec_nop"] += 1
        if key == "E20":
            pots = [u for u in users if is_potential(b[i, u], rho)]
            counts[f"col{len(pots)}"] += 1
            if len(pots) == 2 or (len(pots) == 1 and pots[0] != owner[i]):
                counts["col_new"] += 1
            else:
                counts["col_old"] += 1
    est = event_probabilities_mc(p, R, B, n, np.random.default_rng(12))
    for k in names:
        assert getattr(est, k) == counts[k] / n, k


def test_mc_matches_closed_form_at_operating_point():
    n = 10**7
    ev = event_probabilities(0.59, 6.129, B25)
    est = event_probabilities_mc(0.59, 6.129, B25, n, np.random.default_rng(2024))
    for k, q in ev.as_dict().items():
        assert abs(getattr(est, k) - q) <= 3 * math.sqrt(q * (1 - q) / n) + 1e-12, k


@given(st.floats(0.01, 1.0), st.floats(1.0, 10.0), st.floats(1.0, 1e4))
def test_rows_are_stochastic(p, R, B):
    P = build_transition_model(event_probabilities(p, R, B)).stochastic
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert (P >= 0).all()


def test_no_collision_events_keep_chain_in_s0():
    ev = EventProbabilities(0.25, 0.3, 0.2, 0.1, 0.15, 0.0, 0.0, 0.0, 0.0,
                            0.325, 0.225, 0.0, 0.0)
    model = build_transition_model(ev)
    P = model.stochastic
    assert P[0, 1] == P[0, 2] == 0.0
    np.testing.assert_array_equal(steady_state(model), [1.0, 0.0, 0.0])


def test_invalid_events_rejected():
    ev = event_probabilities(0.5, 2.0, B25)
    bad = EventProbabilities(**{**ev.as_dict(), "col_new": ev.col_new + 0.01})
    with pytest.raises(ParameterError):
        build_transition_model(bad)


def test_s21_row_layout():
    ev = event_probabilities(0.59, 6.129, B25)
    fixed = build_transition_model(ev).stochastic
    printed = build_transition_model(ev, as_printed=True).stochastic
    assert fixed[2, 2] == pytest.approx(ev.E00 + ev.E10 + ev.col_old)
    assert fixed[2, 1] == pytest.approx(ev.col_new)
    assert printed[2, 1] == fixed[2, 2] and printed[2, 2] == fixed[2, 1]
    np.testing.assert_array_equal(printed[:2], fixed[:2])


def test_polynomial_basics():
    poly = TransitionPolynomial({0: 0.2, 1: 0.3, 2: 0.5})
    assert poly(1.0) == pytest.approx(1.0)
    assert poly.derivative_at_one() == pytest.approx(0.3 + 1.0)
    with pytest.raises(ParameterError):
        TransitionPolynomial({1: -0.1})
    with pytest.raises(ParameterError):
        TransitionPolynomial({-1: 0.1})


def test_constant_polynomials_have_zero_throughput():
    ev = EventProbabilities(1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    np.testing.assert_array_equal(throughput_matrix(build_transition_model(ev)), np.zeros((3, 3)))


def test_throughput_matrix_entry_by_substitution():
    ev = event_probabilities(0.5, 1.0, 10.0)
    tt = throughput_matrix(build_transition_model(ev))
    assert tt[1, 0] == pytest.approx(2 * (ev.E11 + ev.E22 + ev.E21), rel=1e-15)


def test_throughput_matrix_matches_transcription():
    rng = np.random.default_rng(77)
    for _ in range(500):
        ev = random_event_probabilities(rng)
        got = throughput_matrix(build_transition_model(ev))
        assert np.abs(got - transcribed_throughput_matrix(ev)).max() <= 1e-15


def test_steady_state_identity_and_uniform():
    np.testing.assert_array_equal(steady_state(np.eye(3)), [1.0, 0.0, 0.0])
    np.testing.assert_allclose(steady_state(np.full((3, 3), 1 / 3)), [1 / 3] * 3, atol=1e-15)


def test_steady_state_restricts_to_reachable_class():
    # S0 leaks into the closed class {S22, S21}
    P = np.array([[0.5, 0.5, 0.0], [0.0, 0.2, 0.8], [0.0, 0.6, 0.4]])
    v = steady_state(P)
    assert v[0] == 0.0
    np.testing.assert_allclose(v @ P, v, atol=1e-14)


def test_steady_state_ambiguous_absorption():
    P = np.array([[0.2, 0.4, 0.4], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SteadyStateError):
        steady_state(P)


def test_steady_state_against_power_iteration():
    model = build_transition_model(event_probabilities(0.59, 6.129, B25))
    v = steady_state(model)
    assert np.abs(v - power_iteration(model.stochastic, n_iter=1000)).max() <= 1e-10
    assert np.abs(v @ model.stochastic - v).max() <= 1e-10
    assert v.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("p, R, B, Rs", [(1.0, 1.263, B15, 1.933), (0.59, 6.129, B25, 3.431)])
def test_reference_sum_rates(p, R, B, Rs):
    assert analytical_sum_rate(p, R, B)[1] == pytest.approx(Rs, abs=0.005)


def test_swapped_layout_misses_reference_value():
    assert abs(analytical_sum_rate(0.59, 6.129, B25, as_printed=True)[1] - 3.431) > 0.005


def test_vanishing_rate_at_huge_threshold():
    T, Rs = analytical_sum_rate(0.5, 30.0, B15)
    assert T < 1e-12 and Rs < 1e-10


@given(st.floats(0.01, 1.0), st.floats(1.0, 10.0), st.floats(1.0, 1e4))
def test_throughput_bounded_by_offered_load(p, R, B):
    T, Rs = analytical_sum_rate(p, R, B)
    assert -1e-12 <= T <= 2 * p + 1e-12
    assert Rs == R * T
