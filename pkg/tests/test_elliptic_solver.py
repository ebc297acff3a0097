import numpy as np
import pytest

from core.config import SolverConfig
from core.elliptic_solver import (SERRIN, WARPED, closed_form_serrin, field_from_function,
                                  make_source, neumann_trace, radial_oracle, recover_gradient,
                                  recover_hessian, solve_serrin, solve_warped_torsion, torsion_c0)
from core.errors import DomainError, OracleError
from core.meridian_domain import BoundarySpec, build_domain
from core.meridian_mesh import build_mesh


def test_source_antiderivatives():
    affine = make_source("affine", 0.5)
    assert float(affine.phi(2.0)) == pytest.approx(2.0)
    assert float(affine.Phi(2.0)) == pytest.approx(3.0)
    assert float(affine.Psi(2.0)) == pytest.approx(2.0 + 0.5 * 8 / 6)
    expo = make_source("exponential")
    assert float(expo.Phi(1.0)) == pytest.approx(np.e - 1)
    assert float(expo.Psi(1.0)) == pytest.approx(np.e - 2)
    assert make_source().is_unit
    with pytest.raises(ValueError):
        make_source("cubic")


@pytest.mark.parametrize("which", ["hyperbolic", "sphere", "euclidean"])
def test_radial_oracle_matches_closed_form(which, request):
    profile = request.getfixturevalue(which)
    oracle = radial_oracle(SERRIN, profile, 1.0)
    r = np.linspace(0.0, 1.0, 41)
    np.testing.assert_allclose(oracle(r), closed_form_serrin(profile, 1.0)(r), atol=1e-8)


def test_euclidean_neumann_value(euclidean):
    assert radial_oracle(SERRIN, euclidean, 1.0).f_nu == pytest.approx(1.0 / 3.0, abs=1e-9)


def test_serrin_oracle_rejects_hemisphere(sphere):
    with pytest.raises(OracleError):
        radial_oracle(SERRIN, sphere, np.pi / 2 - 1e-4)


def test_serrin_ball_matches_closed_form(serrin_ball_field, hyperbolic):
    fld = serrin_ball_field
    exact = closed_form_serrin(hyperbolic, 1.0)(fld.mesh.r)
    assert np.max(np.abs(fld.values - exact)) < 1e-3
    assert np.all(fld.values[fld.interior_mask()] < 0)
    np.testing.assert_allclose(fld.values[fld.mesh.boundary_nodes], 0.0, atol=1e-14)
    assert fld.kind == SERRIN and fld.K == -1.0


def test_serrin_neumann_trace(serrin_ball_field):
    expected = np.sinh(1.0) / (3 * np.cosh(1.0))
    np.testing.assert_allclose(neumann_trace(serrin_ball_field), expected, atol=2e-3)
    grad = recover_gradient(serrin_ball_field)
    assert grad.shape == (len(serrin_ball_field.values), 2)


def test_serrin_nonlinear_source(hyperbolic_ball, hyperbolic):
    source = make_source("affine", 0.5)
    fld = solve_serrin(hyperbolic_ball, source, 0.2)
    assert fld.newton_iterations >= 1
    assert fld.residual_norm <= SolverConfig().newton_tol
    oracle = radial_oracle(SERRIN, hyperbolic, 1.0, source)
    assert np.max(np.abs(fld.values - oracle(fld.mesh.r))) < 2e-3


def test_serrin_direct_solver_agrees(hyperbolic_ball, serrin_ball_field):
    fld = solve_serrin(hyperbolic_ball, make_source(), 0.1, SolverConfig(h=0.1, linear_solver="direct"))
    np.testing.assert_allclose(fld.values, serrin_ball_field.values, atol=1e-8)


def test_serrin_domain_errors(slab, sphere):
    with pytest.raises(DomainError):
        solve_serrin(slab, make_source(), 0.2)
    near_hemisphere = build_domain(sphere, BoundarySpec(kind="ball", radius=1.55))
    with pytest.raises(DomainError):
        solve_serrin(near_hemisphere, make_source(), 0.2)


def test_torsion_constant(schwarzschild):
    assert torsion_c0(schwarzschild) == pytest.approx(-2.0 / 3.0, rel=1e-8)


def test_warped_slab_matches_radial_oracle(warped_slab_field, schwarzschild):
    fld = warped_slab_field
    oracle = radial_oracle(WARPED, schwarzschild, 2.0)
    assert oracle.f[-1] == pytest.approx(0.0, abs=1e-10)
    assert np.max(np.abs(fld.values - oracle(fld.mesh.r))) < 2e-3
    np.testing.assert_allclose(fld.values[fld.mesh.inner_nodes], fld.c0)
    np.testing.assert_allclose(fld.values[fld.mesh.boundary_nodes], 0.0, atol=1e-14)


def test_warped_torsion_on_a_hyperbolic_ball(hyperbolic_ball):
    fld = solve_warped_torsion(hyperbolic_ball, 0.25)
    assert fld.c0 is None
    assert np.all(fld.values[fld.interior_mask()] < 0)


def test_field_from_function(euclidean_ball):
    mesh = build_mesh(euclidean_ball, 0.25)
    fld = field_from_function(mesh, lambda r, s: r**2 - 1.0)
    assert fld.kind == "given"
    np.testing.assert_allclose(recover_hessian(fld).H_rr, 2.0, atol=1e-8)


@pytest.mark.slow
def test_fine_ball_against_the_oracles(hyperbolic_ball, hyperbolic):
    fld = solve_serrin(hyperbolic_ball, make_source(), 0.02)
    assert np.max(np.abs(fld.values - closed_form_serrin(hyperbolic, 1.0)(fld.mesh.r))) < 1e-4
    source = make_source("quadratic", 1.0)
    fld = solve_serrin(hyperbolic_ball, source, 0.02)
    assert fld.newton_iterations >= 1
    oracle = radial_oracle(SERRIN, hyperbolic, 1.0, source)
    assert np.max(np.abs(fld.values - oracle(fld.mesh.r))) < 1e-6


def test_serrin_quadratic_source(hyperbolic_ball, hyperbolic):
    source = make_source("quadratic", 1.0)
    fld = solve_serrin(hyperbolic_ball, source, 0.2)
    assert fld.residual_norm <= SolverConfig().newton_tol
    oracle = radial_oracle(SERRIN, hyperbolic, 1.0, source)
    assert np.max(np.abs(fld.values - oracle(fld.mesh.r))) < 2e-3


def test_recovered_hessian_of_the_potential(hyperbolic_ball, hyperbolic):
    # Hess V = -K V g with K = -1; the r = 0 column inherits its neighbour's values
    errors, sizes = [], []
    for h in (0.08, 0.04, 0.02):
        mesh = build_mesh(hyperbolic_ball, h)
        V = field_from_function(mesh, lambda r, s: hyperbolic.eval(r, 1))
        hess = recover_hessian(V)
        err = max(float(np.max(np.abs(H - V.values))) for H in (hess.H_rr, hess.H_ss, hess.H_hoop))
        errors.append(max(err, float(np.max(np.abs(hess.H_rs)))))
        sizes.append(mesh.d_xi)
    assert errors[-1] < 1e-3
    order = np.log(errors[0] / errors[-1]) / np.log(sizes[0] / sizes[-1])
    assert 1.7 < order < 2.5, errors
