# core/level_sets.py
"""
Level sets of solved fields near the boundary.
- FieldSurrogate: quintic tensor spline of the nodal lattice in (s, xi), evenly
  reflected across s = 0 and s = pi, with ambient derivatives by the chain rule.
- flow_time(...): T = min of the gradient/Hessian bound, the deficit cap, the
  r0-clearance cap (warped) and T_cap.
- level_set_flow(fld, ...): integrates dF/dt = -grad f / |grad f|^2 from the
  boundary nodes; level sets come from the flow and from contouring f along rays,
  cross-checked by Hausdorff distance.
- level_set_A2(...): ||A°||^2 of a level curve from the Hessian of f.
- coarea_band_estimate(fld, ...): band integral of |traceless Hess f|^2 over
  {-T < f < -T/2}, per-level ||A°||^2, best level and transfer error.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import brentq

from .elliptic_solver import WARPED, ScalarField
from .errors import FlowError
from .meridian_domain import _sphere_density
from .patch_recovery import (AmbientDerivatives, ambient_derivatives, traceless_v_norm2,
                             warped_traceless_norm2)

logger = logging.getLogger(__name__)

_REFLECT = 6


class FieldSurrogate:
    """Smooth stand-in for a P2 field, exact at the lattice nodes."""

    def __init__(self, fld: ScalarField):
        mesh = fld.mesh
        self.fld = fld
        self.domain = fld.domain
        self.profile = fld.profile
        lat = mesh.lattice(fld.values)                  # rows along s
        s = mesh.s[mesh.boundary_nodes]
        xi = mesh.xi[: mesh.shape[1]]
        k = min(_REFLECT, len(s) - 1)
        s_ext = np.concatenate([-s[k:0:-1], s, 2 * np.pi - s[-2:-k - 2:-1]])
        F_ext = np.concatenate([lat[k:0:-1], lat, lat[-2:-k - 2:-1]], axis=0)
        deg = min(5, len(xi) - 1)
        self._spline = RectBivariateSpline(s_ext, xi, F_ext, kx=5, ky=deg)

    def _xi(self, r, s):
        u, du, d2u = self.domain.graph(s)
        return np.asarray(r, dtype=float) / u, u, du, d2u

    def value(self, r, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        xi, *_ = self._xi(r, s)
        return self._spline.ev(s, xi)

    def derivatives(self, r, s) -> AmbientDerivatives:
        s = np.asarray(s, dtype=float)
        xi, u, du, d2u = self._xi(r, s)
        ev = self._spline.ev
        return ambient_derivatives(self.profile, xi, s, u, du, d2u,
                                   ev(s, xi, dy=1), ev(s, xi, dx=1), ev(s, xi, dy=2),
                                   ev(s, xi, dx=1, dy=1), ev(s, xi, dx=2))


@dataclass(frozen=True)
class LevelSet:
    t: float
    r: np.ndarray
    s: np.ndarray

    def distance_to(self, other: "LevelSet", profile) -> float:
        """Hausdorff distance with the local metric dr^2 + theta^2 ds^2."""
        dr = self.r[:, None] - other.r[None, :]
        ds = self.s[:, None] - other.s[None, :]
        th = profile.eval(0.5 * (self.r[:, None] + other.r[None, :]), 0)
        d = np.sqrt(dr**2 + (th * ds) ** 2)
        return float(max(np.max(np.min(d, axis=1)), np.max(np.min(d, axis=0))))


@dataclass(frozen=True)
class LevelSetFamily:
    T: float
    times: np.ndarray
    flowed: List[LevelSet]
    contoured: List[LevelSet]
    hausdorff: np.ndarray
    flow_defect: float            # max |f(F(t, x)) + t|
    grad_floor_ratio: float       # min |grad f| on trajectories / min_M |grad f|
    min_r: float
    caps: Dict[str, float] = field(default_factory=dict)

    @property
    def gradient_floor_ok(self) -> bool:
        return self.grad_floor_ratio >= 0.5

    def to_dict(self) -> Dict:
        return {"T": self.T, "times": self.times, "hausdorff": self.hausdorff,
                "flow_defect": self.flow_defect, "grad_floor_ratio": self.grad_floor_ratio,
                "gradient_floor_ok": self.gradient_floor_ok, "min_r": self.min_r,
                "caps": dict(sorted(self.caps.items()))}


# ---------------- flow time
def flow_time(fld: ScalarField, eps: float = 0.0, beta: float = 0.5,
              T_cap: Optional[float] = None) -> Dict[str, float]:
    """Candidate caps and their minimum under key 'T'."""
    nd = fld.recovered.nodal
    nodes = fld.mesh.boundary_nodes
    g_min = float(np.sqrt(np.min(nd.grad_norm2[nodes])))
    if g_min <= 0:
        raise FlowError("grad f vanishes on the boundary")
    hess_max = float(np.sqrt(np.max(nd.hess_norm2)))
    caps = {"gradient": g_min**2 / (4.0 * hess_max) if hess_max > 0 else np.inf}
    warped = fld.kind == WARPED
    if eps > 0:
        caps["deficit"] = eps ** (1.0 / ((1.0 if warped else 2.0) + beta))
    if warped:
        caps["clearance"] = g_min * fld.domain.extent()[0] / 4.0
    if T_cap is not None:
        caps["T_cap"] = float(T_cap)
    caps["grad_min"] = g_min
    caps["T"] = float(min(v for k, v in caps.items() if k != "grad_min"))
    return caps


# ---------------- flow and contours
def _flow(sur: FieldSurrogate, times: np.ndarray, rtol: float, atol: float):
    mesh = sur.fld.mesh
    s0 = mesh.s[mesh.boundary_nodes]
    r0 = sur.domain.u(s0)
    npts = len(s0)

    def rhs(_t, y):
        r, s = y[:npts], y[npts:]
        d = sur.derivatives(r, s)
        g2 = d.grad_norm2
        return np.concatenate([-d.f_r / g2, -(d.f_s / d.theta**2) / g2])

    def escape(_t, y):
        r, s = y[:npts], y[npts:]
        return float(np.min(np.minimum(1.0 + 1e-9 - r / sur.domain.u(np.clip(s, 0, np.pi)), r)))

    escape.terminal = True
    sol = solve_ivp(rhs, (0.0, float(times[-1])), np.concatenate([r0, s0]), method="DOP853",
                    t_eval=times, rtol=rtol, atol=atol, events=escape)
    if sol.status == 1:
        raise FlowError(f"flow left the domain at t={sol.t_events[0][0]:.4g}")
    if not sol.success:
        raise FlowError(f"flow integration failed: {sol.message}")
    return [LevelSet(t=float(t), r=sol.y[:npts, k], s=np.clip(sol.y[npts:, k], 0.0, np.pi))
            for k, t in enumerate(sol.t)]


def _contour(sur: FieldSurrogate, t: float, s: np.ndarray) -> LevelSet:
    """Points of {f = -t} on the rays s = const, searched inward from M."""
    u = sur.domain.u(s)
    r = np.empty_like(s)
    for j, (sj, uj) in enumerate(zip(s, u)):
        g = lambda x: float(sur.value(x, sj)) + t
        lo = uj
        for k in range(1, 41):
            lo = uj * (1.0 - 0.025 * k)
            if g(lo) < 0:
                break
        else:
            raise FlowError(f"level {-t:.4g} not found on the ray s={sj:.4g}")
        r[j] = brentq(g, lo, uj, xtol=1e-13)
    return LevelSet(t=t, r=r, s=np.array(s, dtype=float))


def level_set_flow(fld: ScalarField, levels: int = 8, eps: float = 0.0, beta: float = 0.5,
                   T_cap: Optional[float] = None, rtol: float = 1e-10, atol: float = 1e-12,
                   surrogate: Optional[FieldSurrogate] = None) -> LevelSetFamily:
    """Level surfaces M_{-t}, 0 < t <= T, from the flow and from contours."""
    sur = surrogate or FieldSurrogate(fld)
    caps = flow_time(fld, eps=eps, beta=beta, T_cap=T_cap)
    T = caps["T"]
    times = T * np.arange(1, levels + 1) / levels
    flowed = _flow(sur, times, rtol, atol)
    s_rays = fld.mesh.s[fld.mesh.boundary_nodes]
    contoured = [_contour(sur, ls.t, s_rays) for ls in flowed]
    defect, floor, min_r = 0.0, np.inf, np.inf
    for ls in flowed:
        defect = max(defect, float(np.max(np.abs(sur.value(ls.r, ls.s) + ls.t))))
        floor = min(floor, float(np.sqrt(np.min(sur.derivatives(ls.r, ls.s).grad_norm2))))
        min_r = min(min_r, float(np.min(ls.r)))
    haus = np.array([a.distance_to(b, fld.profile) for a, b in zip(flowed, contoured)])
    fam = LevelSetFamily(T=T, times=times, flowed=flowed, contoured=contoured, hausdorff=haus,
                         flow_defect=defect, grad_floor_ratio=floor / caps["grad_min"], min_r=min_r,
                         caps=caps)
    if not fam.gradient_floor_ok:
        logger.warning("|grad f| fell to %.3g of its boundary minimum along the flow", fam.grad_floor_ratio)
    logger.info("level-set flow: T=%.4g, defect %.2e, max Hausdorff %.3g", T, defect, float(np.max(haus)))
    return fam


# ---------------- level-set curvature
def _curve_integral(profile, ls: LevelSet, values: np.ndarray) -> float:
    """int over the rotation hypersurface of the meridian polyline ls."""
    n = profile.n
    th = profile.eval(ls.r, 0)
    seg = np.sqrt(np.diff(ls.r) ** 2 + (0.5 * (th[1:] + th[:-1]) * np.diff(ls.s)) ** 2)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    density = th ** (n - 1) * _sphere_density(n, ls.s)
    return float(trapezoid(values * density, arc))


def level_set_A2(sur: FieldSurrogate, ls: LevelSet) -> float:
    """||A°||^2 of the level hypersurface, second form Hess f(e_i, e_j)/|grad f|."""
    d = sur.derivatives(ls.r, ls.s)
    g = np.sqrt(d.grad_norm2)
    tr, ts = -d.grad_s / g, d.f_r / g
    h_tt = (d.H_rr * tr**2 + 2 * d.H_rs * tr * ts + d.H_ss * ts**2) / g
    h_hoop = d.H_hoop / g
    n = d.n
    return _curve_integral(sur.profile, ls, (n - 1) / n * (h_tt - h_hoop) ** 2)


@dataclass(frozen=True)
class BandReport:
    T: float
    band_integral: float
    band_measure: float
    levels: np.ndarray
    level_A2: np.ndarray
    coarea_integral: float
    mean_value: float
    best_level: float
    best_A2: float
    boundary_A2: float
    transfer_error: float
    triangle_bound: Optional[float] = None
    sup_bound: Optional[float] = None

    def to_dict(self) -> Dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def coarea_band_estimate(fld: ScalarField, T: Optional[float] = None, levels: int = 9,
                         region_energy: Optional[float] = None,
                         surrogate: Optional[FieldSurrogate] = None,
                         family: Optional[LevelSetFamily] = None) -> BandReport:
    """Band {-T < f < -T/2}: volume integral, per-level ||A°||^2 and the co-area layout."""
    sur = surrogate or FieldSurrogate(fld)
    if T is None:
        T = family.T if family is not None else flow_time(fld)["T"]
    mesh = fld.mesh
    q = mesh.quad
    f = fld.values_q
    band = ((f > -T) & (f < -0.5 * T)).astype(float)
    measure = mesh.integrate_q(np.ones_like(f), mask=band)
    if measure <= 0:
        raise FlowError(f"the band (-{T:.4g}, -{T / 2:.4g}) holds no quadrature points")
    dq = fld.recovered.quad
    band_integral = mesh.integrate_q(dq.traceless_norm2, mask=band)

    times = np.linspace(0.5 * T, T, levels)
    flowed = _flow(sur, times, 1e-10, 1e-12)
    A2 = np.array([level_set_A2(sur, ls) for ls in flowed])
    per_level = []
    for ls in flowed:
        d = sur.derivatives(ls.r, ls.s)
        per_level.append(_curve_integral(fld.profile, ls, d.traceless_norm2 / np.sqrt(d.grad_norm2)))
    coarea = float(trapezoid(per_level, times))
    best = int(np.argmin(A2))
    boundary_A2 = float(np.dot(fld.surface.weights, fld.surface.ring_A2))
    triangle = sup = None
    if fld.kind == WARPED:
        tv = traceless_v_norm2(fld.profile, q["r"])
        if region_energy is None:
            region_mask = (q["r"] >= 0.5 * fld.domain.extent()[0]).astype(float)
            region_energy = mesh.integrate_q(warped_traceless_norm2(dq, f, fld.profile, q["r"]), mask=region_mask)
        triangle = 2.0 * region_energy + 2.0 * mesh.integrate_q(tv * f**2, mask=band)
        sup = 2.0 * float(np.max(tv)) * T**2 * measure
    report = BandReport(T=T, band_integral=band_integral, band_measure=measure, levels=times,
                        level_A2=A2, coarea_integral=coarea, mean_value=band_integral / (0.5 * T),
                        best_level=float(-times[best]), best_A2=float(A2[best]), boundary_A2=boundary_A2,
                        transfer_error=abs(float(A2[best]) - boundary_A2),
                        triangle_bound=triangle, sup_bound=sup)
    logger.info("band [-%.4g, -%.4g]: integral %.4g, best level %.4g", T, T / 2, band_integral, report.best_level)
    return report
