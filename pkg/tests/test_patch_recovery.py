import numpy as np
import pytest

from core.meridian_mesh import build_mesh
from core.patch_recovery import (ambient_derivatives, recover, traceless_v_norm2,
                                 warped_traceless_norm2)


def test_quadratic_radial_field_is_recovered_exactly(euclidean_ball):
    mesh = build_mesh(euclidean_ball, 0.2)
    rec = recover(mesh, mesh.r**2 - 1.0)
    nd = rec.nodal
    off_axis = mesh.xi > 0
    np.testing.assert_allclose(nd.f_r[off_axis], 2 * mesh.r[off_axis], atol=1e-9)
    for H in (nd.H_rr, nd.H_ss, nd.H_hoop):
        np.testing.assert_allclose(H, 2.0, atol=1e-8)
    np.testing.assert_allclose(nd.H_rs, 0.0, atol=1e-8)
    np.testing.assert_allclose(nd.laplacian, 6.0, atol=1e-7)
    assert np.max(np.abs(nd.traceless_norm2)) < 1e-12
    np.testing.assert_allclose(rec.quad.H_rr, 2.0, atol=1e-8)
    np.testing.assert_allclose(rec.quad.f_r, 2 * mesh.quad["r"], atol=1e-9)


def test_linear_field_has_unit_gradient_and_no_hessian(euclidean_ball):
    mesh = build_mesh(euclidean_ball, 0.1)
    nd = recover(mesh, mesh.r * np.cos(mesh.s)).nodal
    away = mesh.xi >= 0.5
    np.testing.assert_allclose(nd.grad_norm2[away], 1.0, atol=1e-4)
    for H in (nd.H_rr, nd.H_rs, nd.H_ss, nd.H_hoop):
        assert np.max(np.abs(H[away])) < 1e-3


def test_reference_partials_present(hyperbolic_ball):
    mesh = build_mesh(hyperbolic_ball, 0.25)
    rec = recover(mesh, np.zeros_like(mesh.r))
    assert set(rec.reference) == {"F_xi", "F_s", "F_xixi", "F_xis", "F_ss"}
    assert rec.quad.H_rr.shape == mesh.quad["r"].shape


def test_traceless_v_vanishes_in_spaceforms(hyperbolic, sphere):
    r = np.linspace(0.1, 1.4, 9)
    assert np.max(traceless_v_norm2(hyperbolic, r)) < 1e-28
    assert np.max(traceless_v_norm2(sphere, r)) < 1e-28


def test_traceless_v_in_schwarzschild(schwarzschild):
    r = np.array([0.5, 1.5])
    qr = schwarzschild.third_over_first(r)
    qs = schwarzschild.second_over_theta(r)
    # radial eigenvalue against n equal spherical ones, n = 2
    expected = 2.0 / 3.0 * (qr - qs) ** 2
    np.testing.assert_allclose(traceless_v_norm2(schwarzschild, r), expected, rtol=1e-12)


@pytest.mark.parametrize("which", ["hyperbolic", "schwarzschild"])
def test_potential_has_no_warped_traceless_part(which, request):
    profile = request.getfixturevalue(which)
    u0 = 1.0 if which == "hyperbolic" else 2.0
    xi, s = np.meshgrid(np.linspace(0.05, 1.0, 12), np.linspace(0.0, np.pi, 9))
    xi, s = xi.ravel(), s.ravel()
    u, zero = np.full_like(xi, u0), np.zeros_like(xi)
    r = xi * u0
    # F(xi, s) = V(xi * u0)
    d = ambient_derivatives(profile, xi, s, u, zero, zero,
                            u0 * profile.eval(r, 2), zero, u0**2 * profile.eval(r, 3), zero, zero)
    assert np.max(warped_traceless_norm2(d, profile.eval(r, 1), profile, r)) < 1e-20


def test_normal_hessian_on_the_boundary(euclidean_ball):
    mesh = build_mesh(euclidean_ball, 0.2)
    nd = recover(mesh, mesh.r**2 - 1.0).nodal
    nodes = mesh.boundary_nodes
    # nu = d_r on the unit sphere
    one, zero = np.ones(len(nodes)), np.zeros(len(nodes))
    np.testing.assert_allclose(nd.hessian_nn(one, zero, nodes), 2.0, atol=1e-8)
    assert nd.hessian_nn(one, zero, nodes).shape == nodes.shape
