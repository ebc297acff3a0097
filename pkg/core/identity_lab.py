# core/identity_lab.py
"""
Both sides of the integral identities evaluated on solved fields.
- pohozaev_residual (+ pohozaev_sub_residuals, serrin_flux_residual): Serrin fields.
- serrin_master_residual: weighted traceless-Hessian identity for Serrin fields.
- reilly_residual: weighted Reilly formula with V = theta' for any C^2 field,
  boundary terms on M and on the inner slice with outward normals.
- flux_residuals: the three flux identities of the torsion problem.
- divergence_residual: int (V Lap f - f Lap V) over a shell vs the flux of
  V grad f - f grad V through its two row surfaces.
- convergence_study: residual of one identity over a list of mesh sizes.
Every residual itemizes its sub-terms and carries scale = int_Omega V.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .elliptic_solver import SERRIN, ScalarField, SourceSpec
from .errors import DomainError, SolverError
from .meridian_domain import (boundary_geometry, inner_slice_weights, integrate_boundary,
                              volume_integral_of_v)
from .report_store import CONVERGENCE_COLUMNS, _ensure_cols

logger = logging.getLogger(__name__)

_GUARD = 1e3 * np.finfo(float).eps


@dataclass(frozen=True)
class IdentityResidual:
    identity: str
    left: float
    right: float
    h: float
    scale: float = 1.0
    terms: Dict[str, float] = field(default_factory=dict)

    @property
    def abs_residual(self) -> float:
        return abs(self.left - self.right)

    @property
    def rel_residual(self) -> float:
        return self.abs_residual / (abs(self.left) + abs(self.right) + _GUARD)

    def within(self, tol: float, floor: float = 1e-6) -> bool:
        """Relative residual below tol, or absolute residual below floor * scale."""
        return self.rel_residual <= tol or self.abs_residual <= floor * self.scale

    def to_dict(self) -> Dict:
        return {"identity": self.identity, "left": self.left, "right": self.right,
                "abs_residual": self.abs_residual, "rel_residual": self.rel_residual,
                "h": self.h, "scale": self.scale, "terms": dict(sorted(self.terms.items()))}


def _residual(name: str, fld: ScalarField, left: float, right: float, terms: Dict[str, float]) -> IdentityResidual:
    res = IdentityResidual(identity=name, left=float(left), right=float(right), h=fld.h,
                           scale=volume_integral_of_v(fld.domain),
                           terms={k: float(v) for k, v in terms.items()})
    logger.info("%s: left=%.8g right=%.8g rel=%.3e", name, res.left, res.right, res.rel_residual)
    return res


def _require_serrin(fld: ScalarField, source: Optional[SourceSpec]) -> SourceSpec:
    if fld.K is None:
        raise SolverError("Serrin identities need a field solved on a spaceform")
    src = source or fld.source
    if src is None:
        raise SolverError("no source term attached to the field")
    return src


def _boundary_data(fld: ScalarField):
    """Boundary surface plus recovered f_nu, f_tau, Lap f, Hess f(nu, nu) on M."""
    surf = fld.surface
    nodes = fld.mesh.boundary_nodes
    nd = fld.recovered.nodal
    f_r, f_t = nd.f_r[nodes], nd.grad_s[nodes]
    return {
        "surface": surf,
        "f": fld.values[nodes],
        "f_nu": f_r * surf.nu_r + f_t * surf.nu_s,
        "f_tau": f_r * surf.tau_r + f_t * surf.tau_s,
        "lap": nd.laplacian[nodes],
        "hess_nn": nd.hessian_nn(surf.nu_r, surf.nu_s, nodes),
    }


# ====== Serrin identities ======
def _serrin_volume_terms(fld: ScalarField, source: SourceSpec) -> Dict[str, float]:
    mesh = fld.mesh
    q = mesh.quad
    f = fld.values_q
    V = q["dtheta"]
    phi = source.phi(f)
    dq = fld.recovered.quad
    return {
        "int_V_f2": mesh.integrate_q(V * f**2),
        "int_V_Phi": mesh.integrate_q(V * source.Phi(f)),
        "int_V_f_phi": mesh.integrate_q(V * f * phi),
        "int_V_grad2": mesh.integrate_q(V * dq.grad_norm2),
        "int_X_grad_lap": mesh.integrate_q(q["theta"] * dq.f_r * (phi - (fld.profile.n + 1) * fld.K * f)),
    }


def pohozaev_residual(fld: ScalarField, source: Optional[SourceSpec] = None) -> IdentityResidual:
    """1/2 int_dOmega <X,nu> f_nu^2 vs (n+1)(n+3)K/4 int V f^2 - (n+1) int V Phi + (n-1)/2 int V f phi."""
    source = _require_serrin(fld, source)
    n, K = fld.profile.n, fld.K
    vol = _serrin_volume_terms(fld, source)
    bd = _boundary_data(fld)
    left = 0.5 * integrate_boundary(bd["surface"], bd["surface"].support * bd["f_nu"] ** 2)
    terms = {
        "K_f2": (n + 1) * (n + 3) * K / 4.0 * vol["int_V_f2"],
        "Phi": -(n + 1) * vol["int_V_Phi"],
        "f_phi": 0.5 * (n - 1) * vol["int_V_f_phi"],
    }
    return _residual("pohozaev", fld, left, sum(terms.values()), {**terms, "boundary": left})


def pohozaev_sub_residuals(fld: ScalarField, source: Optional[SourceSpec] = None) -> List[IdentityResidual]:
    """The two evaluations of int <X, grad f> Lap f and the int V |grad f|^2 reduction."""
    source = _require_serrin(fld, source)
    n, K = fld.profile.n, fld.K
    vol = _serrin_volume_terms(fld, source)
    bd = _boundary_data(fld)
    flux = 0.5 * integrate_boundary(bd["surface"], bd["surface"].support * bd["f_nu"] ** 2)
    lhs = vol["int_X_grad_lap"]
    a = {"boundary": flux, "gradient": 0.5 * (n - 1) * vol["int_V_grad2"]}
    b = {"K_f2": 0.5 * (n + 1) ** 2 * K * vol["int_V_f2"], "Phi": -(n + 1) * vol["int_V_Phi"]}
    c = {"K_f2": 0.5 * (n + 1) * K * vol["int_V_f2"], "f_phi": -vol["int_V_f_phi"]}
    return [
        _residual("pohozaev_boundary_form", fld, lhs, sum(a.values()), a),
        _residual("pohozaev_volume_form", fld, lhs, sum(b.values()), b),
        _residual("pohozaev_gradient_reduction", fld, vol["int_V_grad2"], sum(c.values()), c),
    ]


def serrin_flux_residual(fld: ScalarField, source: Optional[SourceSpec] = None) -> IdentityResidual:
    """int_dOmega V f_nu = int_Omega V phi."""
    source = _require_serrin(fld, source)
    bd = _boundary_data(fld)
    left = integrate_boundary(bd["surface"], bd["surface"].dtheta * bd["f_nu"])
    right = fld.mesh.integrate_q(fld.mesh.quad["dtheta"] * source.phi(fld.values_q))
    return _residual("serrin_flux", fld, left, right, {})


def serrin_constant(fld: ScalarField, source: Optional[SourceSpec] = None) -> float:
    """R = int_Omega V phi / int_dOmega V."""
    source = _require_serrin(fld, source)
    surf = fld.surface
    num = fld.mesh.integrate_q(fld.mesh.quad["dtheta"] * source.phi(fld.values_q))
    return num / integrate_boundary(surf, surf.dtheta)


def serrin_master_residual(fld: ScalarField, source: Optional[SourceSpec] = None,
                           R: Optional[float] = None) -> IdentityResidual:
    """int V f |traceless Hess f|^2 against its boundary and deficit terms."""
    source = _require_serrin(fld, source)
    n, K = fld.profile.n, fld.K
    mesh = fld.mesh
    V = mesh.quad["dtheta"]
    f = fld.values_q
    phi, Phi, Psi = source.phi(f), source.Phi(f), source.Psi(f)
    R = serrin_constant(fld, source) if R is None else R
    left = mesh.integrate_q(V * f * fld.recovered.quad.traceless_norm2)
    bd = _boundary_data(fld)
    surf = bd["surface"]
    f_nu = bd["f_nu"]
    terms = {
        "R2_one_minus_phi": 0.5 * R**2 * mesh.integrate_q(V * (1.0 - phi)),
        "boundary": -0.5 * integrate_boundary(surf, (surf.dtheta * f_nu - surf.support / (n + 1)) * (f_nu**2 - R**2)),
        "Phi_f_Psi": 0.5 * (n + 1) * K * mesh.integrate_q(V * (Phi * f - Psi - 0.5 * f**2)),
        "phi_minus_one_f2": 0.5 * K * mesh.integrate_q(V * (phi - 1.0) * f**2),
        "f_phi_phi_minus_one": -(n + 3) / (2.0 * (n + 1)) * mesh.integrate_q(V * f * phi * (phi - 1.0)),
        "Phi_minus_f_phi": mesh.integrate_q(V * (1.0 - 1.5 * phi) * (Phi - f * phi)),
    }
    return _residual("serrin_master", fld, left, sum(terms.values()), {**terms, "R": R})


# ====== warped identities ======
def _hessian_v_terms(profile, r):
    return profile.third_over_first(r), profile.second_over_theta(r), profile.lap_v_over_v(r)


def reilly_residual(fld: ScalarField) -> IdentityResidual:
    """int V (Lap f - (Lap V/V) f)^2 - int V |Hess f - (Hess V/V) f|^2 vs boundary and curvature terms."""
    profile = fld.profile
    n = profile.n
    mesh = fld.mesh
    q = mesh.quad
    dq = fld.recovered.quad
    f = fld.values_q
    V = q["dtheta"]
    qr, qs, lvv = _hessian_v_terms(profile, q["r"])
    lap_part = dq.laplacian - lvv * f
    hess_part = ((dq.H_rr - qr * f) ** 2 + 2 * dq.H_rs**2 + (dq.H_ss - qs * f) ** 2
                 + (n - 1) * (dq.H_hoop - qs * f) ** 2)
    left = mesh.integrate_q(V * lap_part**2) - mesh.integrate_q(V * hess_part)
    # only the tangential gradient sees the weighted Ricci form
    comb = profile.laplace_combination(q["r"])
    volume_term = mesh.integrate_q(V * comb / q["theta"] ** 2 * dq.grad_s**2)

    bd = _boundary_data(fld)
    surf = bd["surface"]
    fb, f_nu, f_tau = bd["f"], bd["f_nu"], bd["f_tau"]
    Vb = surf.dtheta
    d2 = profile.eval(surf.r, 2)
    qr_b, qs_b, lvv_b = _hessian_v_terms(profile, surf.r)
    lap_M = bd["lap"] - bd["hess_nn"] - n * surf.H1 * f_nu
    nr, ns, tr, ts = surf.nu_r, surf.nu_s, surf.tau_r, surf.tau_s
    boundary = {
        "second_form": Vb * surf.kappa_m * f_tau**2,
        "tangential_laplacian": 2 * Vb * f_nu * lap_M,
        "mean_curvature": n * Vb * surf.H1 * f_nu**2,
        "potential_normal": d2 * nr * f_tau**2,
        "hessian_v_mixed": 2 * fb * Vb * (qr_b * tr * nr + qs_b * ts * ns) * f_tau,
        "hessian_v_normal": -2 * fb * f_nu * Vb * (lvv_b - (qr_b * nr**2 + qs_b * ns**2)),
        "traceless_v": -fb**2 * d2 * nr * (qr_b - lvv_b),
    }
    terms = {k: integrate_boundary(surf, v) for k, v in boundary.items()}
    terms["curvature_volume"] = volume_term
    if fld.domain.is_homologous:
        inner = fld.mesh.inner_nodes
        th0 = profile.theta0
        d20 = profile.eval(0.0, 2)
        f0 = fld.values[inner]
        fs0 = fld.recovered.nodal.f_s[inner]
        w = inner_slice_weights(fld.domain, fld.mesh.s[inner])
        terms["inner_slice"] = float(np.dot(w, -d20 * (fs0 / th0) ** 2 - n * d20**2 * f0**2 / th0))
    return _residual("reilly", fld, left, sum(terms.values()), terms)


def flux_residuals(fld: ScalarField) -> List[IdentityResidual]:
    """Volume, support and balance flux identities of the torsion problem."""
    domain = fld.domain
    n = domain.n
    vol_v = volume_integral_of_v(domain)
    inner = domain.inner_slice_term
    bd = _boundary_data(fld)
    surf = bd["surface"]
    flux = integrate_boundary(surf, surf.dtheta * bd["f_nu"])
    support = integrate_boundary(surf, surf.support)
    return [
        _residual("flux_volume", fld, vol_v, flux - inner / (n + 1),
                  {"boundary_flux": flux, "inner_slice": -inner / (n + 1)}),
        _residual("flux_support", fld, (n + 1) * vol_v, support - inner,
                  {"support": support, "inner_slice": -inner}),
        _residual("flux_balance", fld, support, (n + 1) * flux, {}),
    ]


def _row_flux(fld: ScalarField, column: int) -> float:
    """Outward (increasing r) flux of V grad f - f grad V through the lattice column."""
    mesh = fld.mesh
    scale = column / (2 * mesh.n_xi)
    if scale == 0.0 and not fld.domain.is_homologous:
        return 0.0
    surf = boundary_geometry(fld.domain, resolution=mesh.n_s, scale=scale)
    nodes = mesh.node(column, np.arange(2 * mesh.n_s + 1))
    nd = fld.recovered.nodal
    f_nu = nd.f_r[nodes] * surf.nu_r + nd.grad_s[nodes] * surf.nu_s
    v_nu = fld.profile.eval(surf.r, 2) * surf.nu_r
    return integrate_boundary(surf, surf.dtheta * f_nu - fld.values[nodes] * v_nu)


def divergence_residual(fld: ScalarField, columns: Optional[Sequence[int]] = None) -> IdentityResidual:
    """int_shell (V Lap f - f Lap V) against the flux through the shell's row surfaces."""
    mesh = fld.mesh
    c1, c2 = columns if columns is not None else (0, 2 * mesh.n_xi)
    if c1 % 2 or c2 % 2 or not 0 <= c1 < c2 <= 2 * mesh.n_xi:
        raise ValueError(f"shell columns must be even and ordered within the lattice, got {(c1, c2)}")
    lo, hi = mesh.element_xi_range()
    x1, x2 = c1 / (2 * mesh.n_xi), c2 / (2 * mesh.n_xi)
    inside = ((lo >= x1 - 1e-12) & (hi <= x2 + 1e-12))[:, None].astype(float)
    q = mesh.quad
    V = q["dtheta"]
    if np.any((V <= 0) & (inside > 0)):
        raise DomainError("theta' vanishes inside the shell")
    lap_v = V * fld.profile.lap_v_over_v(q["r"])
    left = mesh.integrate_q(V * fld.recovered.quad.laplacian - fld.values_q * lap_v, mask=inside)
    outer, inner = _row_flux(fld, c2), _row_flux(fld, c1)
    return _residual("divergence", fld, left, outer - inner,
                     {"outer_flux": outer, "inner_flux": -inner})


def all_identities(fld: ScalarField) -> List[IdentityResidual]:
    """Every identity that applies to the field kind."""
    if fld.kind == SERRIN:
        return ([pohozaev_residual(fld), *pohozaev_sub_residuals(fld), serrin_flux_residual(fld),
                 serrin_master_residual(fld)])
    return [reilly_residual(fld), *flux_residuals(fld), divergence_residual(fld)]


# ====== refinement ======
IdentityFn = Callable[[ScalarField], Union[IdentityResidual, List[IdentityResidual]]]


def convergence_study(make_field: Callable[[float], ScalarField], identity: IdentityFn,
                      h_levels: Sequence[float]) -> pd.DataFrame:
    """Rows (identity, h, residual, abs_residual, observed_order) per mesh size."""
    if len(h_levels) < 2:
        raise ValueError("a convergence study needs at least two mesh sizes")
    rows = []
    for h in sorted(h_levels, reverse=True):
        out = identity(make_field(h))
        for res in (out if isinstance(out, list) else [out]):
            rows.append({"identity": res.identity, "h": h, "residual": res.rel_residual,
                         "abs_residual": res.abs_residual})
    df = pd.DataFrame(rows).sort_values(["identity", "h"], ascending=[True, False], kind="stable")
    orders = []
    for _, grp in df.groupby("identity", sort=False):
        e, hh = grp["abs_residual"].to_numpy(), grp["h"].to_numpy()
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = np.log(e[:-1] / e[1:]) / np.log(hh[:-1] / hh[1:])
        orders.append(pd.Series(np.concatenate([[np.nan], rate]), index=grp.index))
    df["observed_order"] = pd.concat(orders)
    return _ensure_cols(df.reset_index(drop=True), CONVERGENCE_COLUMNS)
