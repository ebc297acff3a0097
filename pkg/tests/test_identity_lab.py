import numpy as np
import pytest

from core.elliptic_solver import field_from_function, make_source, solve_serrin, solve_warped_torsion
from core.errors import SolverError
from core.identity_lab import (IdentityResidual, all_identities, convergence_study,
                               divergence_residual, flux_residuals, pohozaev_residual,
                               pohozaev_sub_residuals, reilly_residual, serrin_constant,
                               serrin_flux_residual, serrin_master_residual)
from core.meridian_domain import BoundarySpec, build_domain
from core.meridian_mesh import build_mesh
from core.report_store import CONVERGENCE_COLUMNS


def test_residual_arithmetic():
    res = IdentityResidual("demo", left=1.0, right=1.1, h=0.1, scale=10.0)
    assert res.abs_residual == pytest.approx(0.1)
    assert res.rel_residual == pytest.approx(0.1 / 2.1)
    assert not res.within(1e-3)
    assert res.within(1e-3, floor=0.02)
    assert res.to_dict()["identity"] == "demo"


def test_pohozaev_on_the_ball(serrin_ball_field):
    res = pohozaev_residual(serrin_ball_field)
    assert res.rel_residual < 1e-2
    assert res.scale == pytest.approx(4 * np.pi * np.sinh(1.0) ** 3 / 3, rel=1e-8)
    assert set(res.terms) == {"K_f2", "Phi", "f_phi", "boundary"}


def test_pohozaev_sub_identities(serrin_ball_field):
    subs = pohozaev_sub_residuals(serrin_ball_field)
    assert [r.identity for r in subs] == ["pohozaev_boundary_form", "pohozaev_volume_form",
                                         "pohozaev_gradient_reduction"]
    for res in subs:
        assert res.rel_residual < 1e-2, res.to_dict()


def test_serrin_flux_and_constant(serrin_ball_field):
    assert serrin_flux_residual(serrin_ball_field).rel_residual < 1e-2
    # on a ball f_nu is constant, so R equals it
    expected = np.sinh(1.0) / (3 * np.cosh(1.0))
    assert serrin_constant(serrin_ball_field) == pytest.approx(expected, rel=1e-4)


def test_master_identity_vanishes_on_the_ball(serrin_ball_field):
    res = serrin_master_residual(serrin_ball_field)
    assert abs(res.left) < 1e-3 * res.scale
    assert res.within(0.05, floor=1e-3)


def test_serrin_identities_need_a_spaceform_field(warped_slab_field):
    with pytest.raises(SolverError):
        pohozaev_residual(warped_slab_field, make_source())


def test_reilly_for_a_radial_quadratic(euclidean_ball):
    # int (Lap f)^2 - |Hess f|^2 = 24 |B| against n H f_nu^2 on the sphere
    mesh = build_mesh(euclidean_ball, 0.2)
    res = reilly_residual(field_from_function(mesh, lambda r, s: r**2 - 1.0))
    assert res.left == pytest.approx(32 * np.pi, rel=1e-5)
    assert res.terms["mean_curvature"] == pytest.approx(32 * np.pi, rel=1e-5)
    assert res.rel_residual < 1e-5


def test_reilly_on_the_slab(warped_slab_field):
    res = reilly_residual(warped_slab_field)
    assert "inner_slice" in res.terms
    assert res.rel_residual < 5e-2


def test_flux_identities_on_the_slab(warped_slab_field):
    volume, support, balance = flux_residuals(warped_slab_field)
    assert support.rel_residual < 1e-5
    assert volume.rel_residual < 1e-2
    assert balance.rel_residual < 1e-2


def test_flux_identities_on_a_perturbed_slab(warped_wavy_field):
    for res in flux_residuals(warped_wavy_field):
        assert res.rel_residual < 2e-2, res.to_dict()


def test_divergence_over_shells(warped_slab_field):
    whole = divergence_residual(warped_slab_field)
    assert whole.rel_residual < 1e-2
    n_xi = warped_slab_field.mesh.n_xi
    shell = divergence_residual(warped_slab_field, columns=(n_xi // 2 * 2, 2 * n_xi))
    assert shell.rel_residual < 1e-2
    with pytest.raises(ValueError):
        divergence_residual(warped_slab_field, columns=(1, 4))


def test_all_identities_by_kind(serrin_ball_field, warped_slab_field):
    assert len(all_identities(serrin_ball_field)) == 6
    assert [r.identity for r in all_identities(warped_slab_field)] == [
        "reilly", "flux_volume", "flux_support", "flux_balance", "divergence"]


def test_pohozaev_on_a_perturbed_ball(hyperbolic):
    domain = build_domain(hyperbolic, BoundarySpec(kind="graph", r0=1.0, coefficients=(0.0, 0.1)))
    res = pohozaev_residual(solve_serrin(domain, make_source(), 0.1))
    assert res.rel_residual < 1e-2, res.to_dict()


def test_pohozaev_on_a_spherical_ball(sphere):
    domain = build_domain(sphere, BoundarySpec(kind="ball", radius=1.0))
    fld = solve_serrin(domain, make_source(), 0.1)
    assert fld.K == 1.0
    res = pohozaev_residual(fld)
    assert res.terms["K_f2"] > 0
    assert res.rel_residual < 1e-2, res.to_dict()


def test_reilly_on_a_perturbed_slab(warped_wavy_field):
    res = reilly_residual(warped_wavy_field)
    assert "inner_slice" in res.terms
    assert res.rel_residual < 5e-2, res.to_dict()


def test_master_identity_with_an_exponential_source(hyperbolic_ball):
    fld = solve_serrin(hyperbolic_ball, make_source("exponential"), 0.1)
    res = serrin_master_residual(fld)
    # phi != 1, so the deficit terms no longer vanish
    for key in ("R2_one_minus_phi", "phi_minus_one_f2", "f_phi_phi_minus_one", "Phi_minus_f_phi"):
        assert abs(res.terms[key]) > 1e-8, key
    assert res.within(0.05, floor=1e-3), res.to_dict()


LEVELS = [0.2, 0.1, 0.05]


def _overall_orders(table):
    """Order between the coarsest and finest level; residuals at roundoff count as converged."""
    orders = {}
    for name, grp in table.groupby("identity"):
        coarse, fine = grp.iloc[0], grp.iloc[-1]
        if fine["residual"] <= 1e-9:
            orders[name] = np.inf
            continue
        orders[name] = np.log(coarse["abs_residual"] / fine["abs_residual"]) / np.log(coarse["h"] / fine["h"])
    return orders


def test_convergence_study_layout(hyperbolic_ball):
    table = convergence_study(lambda h: solve_serrin(hyperbolic_ball, make_source(), h),
                              serrin_flux_residual, LEVELS)
    assert list(table.columns) == CONVERGENCE_COLUMNS
    assert list(table["h"]) == LEVELS
    assert np.isnan(table["observed_order"].iloc[0])
    assert np.all(np.isfinite(table["observed_order"].iloc[1:]))
    with pytest.raises(ValueError):
        convergence_study(lambda h: None, serrin_flux_residual, [0.1])


@pytest.mark.parametrize("spec", [BoundarySpec(kind="ball", radius=1.0),
                                  BoundarySpec(kind="graph", r0=1.0, coefficients=(0.0, 0.1))],
                         ids=["radial", "perturbed"])
def test_serrin_residuals_converge(hyperbolic, spec):
    domain = build_domain(hyperbolic, spec)
    table = convergence_study(lambda h: solve_serrin(domain, make_source(), h),
                              lambda fld: [pohozaev_residual(fld), serrin_flux_residual(fld)], LEVELS)
    orders = _overall_orders(table)
    assert set(orders) == {"pohozaev", "serrin_flux"}
    for name, order in orders.items():
        assert order >= 1.0, (name, table)


@pytest.mark.parametrize("coefficients", [(), (0.1,)], ids=["radial", "perturbed"])
def test_warped_residuals_converge(schwarzschild, coefficients):
    domain = build_domain(schwarzschild, BoundarySpec(kind="graph", r0=2.0, coefficients=coefficients))
    table = convergence_study(lambda h: solve_warped_torsion(domain, h), all_identities, LEVELS)
    orders = _overall_orders(table)
    assert set(orders) == {"reilly", "flux_volume", "flux_support", "flux_balance", "divergence"}
    for name, order in orders.items():
        assert order >= 1.0, (name, table)


@pytest.mark.slow
def test_identities_at_fine_resolution(hyperbolic_ball, hyperbolic, wavy_slab):
    ball = solve_serrin(hyperbolic_ball, make_source(), 0.02)
    assert pohozaev_residual(ball).rel_residual < 1e-3
    domain = build_domain(hyperbolic, BoundarySpec(kind="graph", r0=1.0, coefficients=(0.0, 0.1)))
    perturbed = solve_serrin(domain, make_source(), 0.02)
    assert pohozaev_residual(perturbed).rel_residual < 1e-3
    master = serrin_master_residual(perturbed)
    assert master.rel_residual < 0.05, master.to_dict()
    reilly = reilly_residual(solve_warped_torsion(wavy_slab, 0.02))
    assert reilly.within(1e-3), reilly.to_dict()
