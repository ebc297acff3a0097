import numpy as np
import pandas as pd
import pytest
from scipy.optimize import brentq

from core.errors import InvalidParametersError, NoHorizonError, OutOfDomainError, ProfileError
from core.warp_profiles import (ambient_curvature, check_hypotheses, default_grid, h3_quantity,
                                h4_quantity, make_profile, unit_sphere_volume)


def test_unit_sphere_volume():
    assert unit_sphere_volume(1) == pytest.approx(2 * np.pi)
    assert unit_sphere_volume(2) == pytest.approx(4 * np.pi)


def test_spaceform_closed_forms(sphere, hyperbolic, euclidean):
    r = 0.3
    assert sphere.eval(r, 3) == pytest.approx(-np.cos(r))
    assert hyperbolic.eval(r, 2) == pytest.approx(np.sinh(r))
    assert euclidean.eval(r, 1) == pytest.approx(1.0)
    assert float(hyperbolic.third_over_first(r)) == pytest.approx(1.0)
    assert float(sphere.lap_v_over_v(r)) == pytest.approx(-3.0)


def test_schwarzschild_horizon_and_second_derivative(schwarzschild):
    assert schwarzschild.theta0 == pytest.approx(1.0, rel=1e-12)
    assert schwarzschild.eval(0.0, 0) == pytest.approx(1.0, abs=1e-10)
    assert schwarzschild.eval(0.0, 2) == pytest.approx(0.5, abs=1e-8)


def test_schwarzschild_third_over_first_where_theta_is_two(schwarzschild):
    r2 = brentq(lambda r: schwarzschild.eval(r, 0) - 2.0, 0.1, 5.0, xtol=1e-14)
    assert float(schwarzschild.third_over_first(r2)) == pytest.approx(-0.125, abs=1e-8)
    # the quotient agrees with the ratio of the derivatives away from r = 0
    assert schwarzschild.eval(r2, 3) / schwarzschild.eval(r2, 1) == pytest.approx(-0.125, abs=1e-8)


def test_h3_and_h4_closed_forms(schwarzschild):
    r = np.linspace(0.2, 3.0, 7)
    th = schwarzschild.eval(r, 0)
    np.testing.assert_allclose(h3_quantity(schwarzschild, r), 0.0, atol=1e-9)
    np.testing.assert_allclose(h4_quantity(schwarzschild, r), 1.5 / th**3, rtol=1e-8)


@pytest.mark.parametrize("params", [
    {"kappa": 0.0, "m": 0.5},
    {"kappa": 1.0, "m": 0.5},
    {"kappa": -1.0, "m": 0.1},
])
def test_schwarzschild_satisfies_all_hypotheses(params):
    profile = make_profile("schwarzschild", {"n": 2, **params})
    report = check_hypotheses(profile, default_grid(profile, 200))
    assert report.all_passed, report.to_records()


def test_reissner_nordstrom_satisfies_all_hypotheses():
    profile = make_profile("reissner-nordstrom", {"n": 2, "m": 0.5, "q": 0.3})
    assert profile.theta0 == pytest.approx(0.9, rel=1e-10)
    report = check_hypotheses(profile, default_grid(profile, 200))
    assert report.all_passed, report.to_records()


@pytest.mark.parametrize("kind", ["spaceform-hyperbolic", "euclidean"])
def test_spaceforms_fail_h1(kind):
    profile = make_profile(kind, {"n": 2, "r_bar": 3.0})
    report = check_hypotheses(profile, default_grid(profile, 50))
    assert not report.passed("H1")
    assert report.passed("H2")


def test_hypothesis_records_schema(schwarzschild):
    frame = check_hypotheses(schwarzschild, default_grid(schwarzschild, 40)).to_frame()
    assert list(frame.columns) == ["hypothesis", "pass", "witness_r", "value"]
    assert list(frame["hypothesis"]) == ["H1", "H2", "H3", "H4", "H5"]


def test_grid_must_lie_inside_the_range(schwarzschild):
    with pytest.raises(InvalidParametersError):
        check_hypotheses(schwarzschild, [0.0, 1.0])
    with pytest.raises(InvalidParametersError):
        check_hypotheses(schwarzschild, [1.0, 0.5])


def test_no_horizon_for_heavy_negative_kappa():
    with pytest.raises(NoHorizonError):
        make_profile("schwarzschild", {"n": 2, "kappa": -1.0, "m": 0.5})


def test_invalid_parameters():
    with pytest.raises(ProfileError):
        make_profile("anti-de-sitter", {})
    with pytest.raises(InvalidParametersError):
        make_profile("spaceform-sphere", {"n": 2, "r_bar": 2.0})
    with pytest.raises(InvalidParametersError):
        make_profile("reissner-nordstrom", {"n": 2, "m": 0.5, "q": 0.0})


def test_out_of_domain(sphere):
    with pytest.raises(OutOfDomainError):
        sphere.eval(np.pi / 2, 0)
    with pytest.raises(InvalidParametersError):
        sphere.eval(0.1, 4)


def test_third_derivative_matches_finite_differences(schwarzschild):
    radii = [0.5, 1.2, 2.0, 3.0]
    coarse = max(abs(schwarzschild.finite_difference(r, 3, 2e-3) - schwarzschild.eval(r, 3)) for r in radii)
    fine = max(abs(schwarzschild.finite_difference(r, 3, 1e-3) - schwarzschild.eval(r, 3)) for r in radii)
    assert fine < 1e-6
    assert np.log2(coarse / fine) > 1.8


def test_ambient_curvature_of_hyperbolic_space(hyperbolic):
    curv = ambient_curvature(hyperbolic, 0.7)
    assert curv.ricci_radial == pytest.approx(-2.0)
    assert curv.ricci_tangential == pytest.approx(-2.0)
    assert curv.lap_v_over_v == pytest.approx(3.0)


def test_tabulated_profile_reproduces_its_source():
    r = np.linspace(0.0, 2.0, 401)
    table = pd.DataFrame({"r": r, "theta": np.sinh(r), "dtheta": np.cosh(r),
                          "d2theta": np.sinh(r), "d3theta": np.cosh(r)})
    profile = make_profile("tabulated", {"n": 2, "table": table})
    assert profile.r_bar == pytest.approx(2.0)
    assert profile.eval(0.37, 0) == pytest.approx(np.sinh(0.37), rel=1e-6)
    assert profile.eval(0.37, 2) == pytest.approx(np.sinh(0.37), rel=1e-6)
    assert float(profile.third_over_first(0.37)) == pytest.approx(1.0, abs=1e-6)


def test_tabulated_profile_needs_all_columns():
    table = pd.DataFrame({"r": [0.0, 1.0], "theta": [0.0, 1.0]})
    with pytest.raises(InvalidParametersError):
        make_profile("tabulated", {"table": table})


def test_tabulate_columns(hyperbolic):
    frame = hyperbolic.tabulate([0.1, 0.2])
    assert list(frame.columns) == ["r", "theta", "dtheta", "d2theta", "d3theta"]
    assert frame["dtheta"].iloc[1] == pytest.approx(np.cosh(0.2))
