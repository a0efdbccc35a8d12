import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orlicz_lab.errors import DegenerateFunctionError, DomainError, ExtrapolationError, ParameterError
from orlicz_lab.young import (check_delta2, check_nabla2, default_scan, evaluate, exp_type, is_convex,
                              is_monotone, is_young, linear, load_tabulated_csv, parse_phi, power,
                              power_log, stieltjes_increments, tabulated)


def test_closed_form_values():
    assert evaluate(power(2), 3.0) == 9.0
    assert evaluate(power_log(2), 1.0) == 1.0
    assert evaluate(linear(), 0.0) == 0.0
    assert evaluate(exp_type(), 0.0) == 0.0


def test_exp_type_small_argument_matches_series():
    t = np.array([1e-8, 1e-4, 5e-3, 0.0099, 0.0101, 0.5])
    ref = np.array([math.expm1(x) - x for x in t])
    # expm1 - t loses digits near 0, compare against the exact quadratic leading term there
    assert np.allclose(evaluate(exp_type(), t)[:1], t[:1] ** 2 / 2, rtol=1e-12)
    assert np.allclose(evaluate(exp_type(), t)[3:], ref[3:], rtol=1e-10)


def test_domain_and_extrapolation_errors():
    with pytest.raises(DomainError):
        evaluate(power(2), -1.0)
    phi = tabulated([0.0, 1.0, 2.0], [0.0, 1.0, 4.0])
    assert evaluate(phi, 1.5) == pytest.approx(2.5)
    with pytest.raises(ExtrapolationError):
        evaluate(phi, 3.0)


def test_parse_phi_names_round_trip(tmp_path):
    for spec in ["power:p=2", "powerlog:alpha=2", "linear", "exp"]:
        assert parse_phi(spec).name == spec
    path = tmp_path / "phi.csv"
    path.write_text("t,phi\n0,0\n1,1\n2,4\n")
    phi = load_tabulated_csv(path)
    assert parse_phi(f"table:{path}").table_phi == phi.table_phi
    with pytest.raises(ParameterError):
        parse_phi("cubic")


def test_power_delta2_constant():
    for p in (1.5, 2.0, 3.0):
        rep = check_delta2(power(p))
        assert rep.satisfied
        assert rep.K == pytest.approx(2.0**p, rel=1e-9)
        assert rep.alpha1 == pytest.approx(p, rel=1e-9)


def test_powerlog_delta2_against_dense_scan():
    # oracle: 10^6-point scan of the closed-form ratio 4 (1 + |ln 2t|) / (1 + |ln t|)
    t = np.geomspace(1e-6, 1e6, 1_000_001)  # odd count puts the cusp t = 1 on the grid
    dense = np.max(4.0 * (1 + np.abs(np.log(2 * t))) / (1 + np.abs(np.log(t))))
    rep = check_delta2(power_log(2))
    assert rep.satisfied
    assert rep.K == pytest.approx(dense, rel=1e-12)
    assert rep.K == pytest.approx(4.0 * (1.0 + math.log(2.0)), rel=1e-9)
    assert rep.witness_t == pytest.approx(1.0)


def test_exp_fails_delta2():
    rep = check_delta2(exp_type())
    assert not rep.satisfied
    assert evaluate(exp_type(), 100.0) / evaluate(exp_type(), 50.0) > 1e15


def test_nabla2_examples():
    rep = check_nabla2(power(2))
    assert rep.satisfied and rep.a == pytest.approx(2.0) and rep.alpha2 == pytest.approx(2.0)
    rep = check_nabla2(power(1.5))
    assert rep.satisfied and rep.a == pytest.approx(4.0) and rep.alpha2 == pytest.approx(1.5)
    assert not check_nabla2(linear()).satisfied
    assert check_nabla2(exp_type()).satisfied


@pytest.mark.parametrize("p", [1.25, 1.5, 1.8, 2.0, 2.5, 3.0])
def test_nabla2_picks_smallest_candidate(p):
    rep = check_nabla2(power(p))
    target = 2.0 ** (1.0 / (p - 1.0))
    step = 2.0 ** (1.0 / 8.0)
    assert target * (1 - 1e-9) <= rep.a < target * step * (1 + 1e-12)


def test_degenerate_function():
    phi = tabulated([0.0, 1.0, 1e7], [0.0, 0.0, 1.0])
    with pytest.raises(DegenerateFunctionError):
        check_delta2(phi)
    with pytest.raises(DegenerateFunctionError):
        check_nabla2(phi)


def test_young_flags():
    assert is_young(power(2)) and is_young(power(1.5)) and is_young(exp_type())
    assert not is_young(linear())
    # t^2 (1 + |ln t|) has phi'' = -1 - 2 ln t < 0 on (e^{-1/2}, 1)
    assert not is_young(power_log(2))
    assert not is_convex(power_log(2), np.linspace(0.62, 0.99, 50))


def test_stieltjes_examples():
    assert list(stieltjes_increments(power(2), [0, 1, 2])) == [1.0, 3.0]
    assert stieltjes_increments(power(2), [0.0]).size == 0
    grid = np.linspace(0, 10, 1000)
    inc = stieltjes_increments(power_log(2), grid)
    assert np.sum(inc) == pytest.approx(evaluate(power_log(2), 10.0), rel=1e-12)
    with pytest.raises(ParameterError):
        stieltjes_increments(power(2), [0, 2, 1])
    with pytest.raises(ParameterError):
        stieltjes_increments(power(2), [1, 2])


families = st.sampled_from([power(1.5), power(2), power(3), exp_type()])


@settings(max_examples=40, deadline=None)
@given(families, st.integers(0, 2**31 - 1))
def test_young_families_monotone_convex_on_random_grid(phi, seed):
    t = np.sort(np.random.default_rng(seed).uniform(0, 50, 10_000))
    assert is_monotone(phi, t)
    assert is_convex(phi, t, tol=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([power(1.5), power(2), power(3), power_log(2)]),
       st.floats(1e-3, 1.0), st.floats(1.0, 1e3), st.integers(0, 1200))
def test_exponent_inequalities(phi, theta1, theta2, k):
    t = default_scan()[k]
    d2, n2 = check_delta2(phi), check_nabla2(phi)
    tol = 1e-9
    assert evaluate(phi, theta1 * t) <= 2 * n2.a * theta1**n2.alpha2 * evaluate(phi, t) * (1 + tol)
    assert evaluate(phi, theta2 * t) <= d2.K * theta2**d2.alpha1 * evaluate(phi, t) * (1 + tol)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(1e-3, 20.0), min_size=1, max_size=50, unique=True))
def test_increments_nonnegative_and_telescope(points):
    grid = np.concatenate([[0.0], np.sort(points)])
    for phi in (power(2), power_log(2), exp_type()):
        inc = stieltjes_increments(phi, grid)
        assert np.all(inc >= 0)
        assert np.sum(inc) == pytest.approx(evaluate(phi, grid[-1]), rel=1e-12)
