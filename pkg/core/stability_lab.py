# core/stability_lab.py
"""
Stability deficits and closeness measures.
- serrin_deficit, hk_deficit, cmc_deficit: the three deficits (boundary M only).
- traceless_energy(field, mode, region): E_serrin / E_warped, optionally on {r >= r0/2}.
- ring_A_norm, graphicality, slice_distance, codazzi_term: geometry of M.
- evaluate_configuration(...): one DeficitReport per (profile, boundary, problem).
- stability_sweep(...): members t*family over the amplitudes in a multiprocessing
  pool, log-log exponent by scikit-learn LinearRegression, monotone-trend verdicts.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from multiprocessing import Pool
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.linear_model import LinearRegression

from .config import SolverConfig
from .elliptic_solver import (SERRIN, WARPED, ScalarField, SourceSpec, make_source, neumann_trace,
                              solve_serrin, solve_warped_torsion)
from .errors import HypothesisError, SurfaceError
from .identity_lab import serrin_constant
from .meridian_domain import (BoundarySpec, BoundarySurface, MeridianDomain, _sphere_density,
                              boundary_geometry, build_domain, integrate_boundary, simpson_weights,
                              volume_integral_of_v)
from .patch_recovery import warped_traceless_norm2
from .report_store import SWEEP_COLUMNS, _ensure_cols
from .warp_profiles import WarpingProfile

logger = logging.getLogger(__name__)

PROBLEM_DEFICIT = {"hk": "hk_deficit", "cmc": "cmc_deficit", "serrin": "serrin_eps"}


# ====== Serrin ======
def serrin_deficit(fld: ScalarField, source: Optional[SourceSpec] = None) -> Dict[str, float]:
    """The four L1 components of eps, their sum and R."""
    source = source or fld.source or make_source()
    mesh = fld.mesh
    f = fld.values_q
    phi, Phi, Psi = source.phi(f), source.Phi(f), source.Psi(f)
    R = serrin_constant(fld, source)
    surf = fld.surface
    parts = {
        "f_nu_minus_R": integrate_boundary(surf, np.abs(neumann_trace(fld, surf) - R)),
        "phi_minus_one": mesh.integrate_q(np.abs(phi - 1.0)),
        "Phi_minus_f_phi": mesh.integrate_q(np.abs(Phi - f * phi)),
        "f_Phi_Psi": mesh.integrate_q(np.abs(f * Phi - Psi - 0.5 * f**2)),
    }
    return {**parts, "eps": float(sum(parts.values())), "R": float(R)}


# ====== Heintze-Karcher and CMC ======
def hk_deficit(surface: BoundarySurface, domain: MeridianDomain) -> Dict[str, float]:
    """int_M (V/H1 - <X,nu>) and delta = int V/H1 / int <X,nu> - 1."""
    H1 = surface.H1
    if np.min(H1) <= 0:
        i = int(np.argmin(H1))
        raise SurfaceError(f"M is not strictly mean convex: H1={H1[i]:.4g} at s={surface.s[i]:.4g}")
    hk = integrate_boundary(surface, surface.dtheta / H1)
    support = integrate_boundary(surface, surface.support)
    by_flux = (domain.n + 1) * volume_integral_of_v(domain) + domain.inner_slice_term
    return {
        "hk_deficit": hk - support,
        "delta": hk / support - 1.0,
        "support": support,
        "support_by_flux": by_flux,
        "denominator_check": abs(support - by_flux) / abs(by_flux),
    }


def cmc_constant(surface: BoundarySurface, domain: MeridianDomain) -> float:
    """int_M V / ((n+1) int_Omega V + theta(0)^{n+1} |S^n|)."""
    return integrate_boundary(surface, surface.dtheta) / (
        (domain.n + 1) * volume_integral_of_v(domain) + domain.inner_slice_term)


def cmc_deficit(surface: BoundarySurface, domain: MeridianDomain) -> Dict[str, float]:
    Hc = cmc_constant(surface, domain)
    return {"cmc_deficit": integrate_boundary(surface, np.abs(surface.H1 - Hc)), "H_cal": Hc}


# ====== energies ======
def traceless_energy(fld: ScalarField, mode: str, region: bool = False) -> float:
    """E_serrin = int V(-f)|traceless Hess f|^2, E_warped = int V |traceless(Hess f - (Hess V/V) f)|^2.

    region=True gives the unweighted warped energy over {r >= r0/2}, r0 = min_M r.
    """
    mesh = fld.mesh
    q = mesh.quad
    dq = fld.recovered.quad
    f = fld.values_q
    if mode == SERRIN:
        return mesh.integrate_q(q["dtheta"] * (-f) * dq.traceless_norm2)
    if mode != WARPED:
        raise ValueError(f"unknown energy mode '{mode}'")
    density = warped_traceless_norm2(dq, f, fld.profile, q["r"])
    if region:
        mask = (q["r"] >= 0.5 * fld.domain.extent()[0]).astype(float)
        return mesh.integrate_q(density, mask=mask)
    return mesh.integrate_q(q["dtheta"] * density)


def region_min_v(domain: MeridianDomain, samples: int = 401) -> float:
    """min V over r in [r0/2, max u]."""
    lo, hi = domain.extent()
    return float(np.min(domain.profile.eval(np.linspace(0.5 * lo, hi, samples), 1)))


# ====== boundary geometry ======
def ring_A_norm(surface: BoundarySurface) -> float:
    return integrate_boundary(surface, surface.ring_A2)


def codazzi_term(surface: BoundarySurface, profile: WarpingProfile) -> float:
    """int_M Ric(tau, nu)^2 = int ((rho_r - rho_t) tau_r nu_r)^2."""
    n = profile.n
    so = profile.second_over_theta(surface.r)
    rho_r = -n * so
    rho_t = (n - 1) * profile.one_minus_v2_over_theta2(surface.r) - so
    return integrate_boundary(surface, ((rho_r - rho_t) * surface.tau_r * surface.nu_r) ** 2)


@dataclass(frozen=True)
class Graphicality:
    min_cos: float
    tangential: float            # int |d_r^T|^2 <d_r, nu>^2
    quarter_fraction: float      # area fraction with <d_r, nu> >= 1/4
    pair_left: float             # int (1 - <d_r, nu>^2)
    pair_right: float            # 16 int |d_r^T|^2 <d_r, nu>^2
    graph_identity_error: float

    @property
    def above_quarter(self) -> bool:
        return self.min_cos >= 0.25

    @property
    def pair_holds(self) -> Optional[bool]:
        """Only asserted when min <d_r, nu> >= 1/4."""
        if not self.above_quarter:
            return None
        return self.pair_left <= self.pair_right * (1 + 1e-9) + 1e-14

    def to_dict(self) -> Dict:
        return {**asdict(self), "above_quarter": self.above_quarter, "pair_holds": self.pair_holds}


def graphicality(surface: BoundarySurface) -> Graphicality:
    c = surface.radial_cos
    tan2 = surface.radial_tangent2
    slope = (surface.du / surface.theta) ** 2
    identity_err = float(np.max(np.abs(tan2 - slope / (1.0 + slope))))
    return Graphicality(
        min_cos=float(np.min(c)),
        tangential=integrate_boundary(surface, tan2 * c**2),
        quarter_fraction=integrate_boundary(surface, (c >= 0.25).astype(float)) / surface.area,
        pair_left=integrate_boundary(surface, 1.0 - c**2),
        pair_right=16.0 * integrate_boundary(surface, tan2 * c**2),
        graph_identity_error=identity_err,
    )


@dataclass(frozen=True)
class SliceDistance:
    distance: float
    r0_star: float
    oscillation: float     # ||u - u_bar||_2 on S^n
    gradient: float        # int |grad^sigma u|^2
    poincare_left: float   # ||u - u_bar||_2^2
    poincare_right: float  # (1/n) ||grad^sigma u||_2^2

    @property
    def poincare_holds(self) -> bool:
        return self.poincare_left <= self.poincare_right * (1 + 1e-6) + 1e-15

    def to_dict(self) -> Dict:
        return {**asdict(self), "poincare_holds": self.poincare_holds}


def slice_distance(surface: BoundarySurface) -> SliceDistance:
    """Distance to the closest slice along the radial geodesics, and the Poincare pair on S^n."""
    if np.min(surface.nu_r) <= 0:
        raise SurfaceError("M is not a radial graph")
    u, s = surface.r, surface.s
    n = surface.n
    w = simpson_weights(len(s), s[1] - s[0]) * _sphere_density(n, s)
    u_bar = float(np.dot(w, u) / np.sum(w))
    osc2 = float(np.dot(w, (u - u_bar) ** 2))
    grad2 = float(np.dot(w, surface.du**2))
    return SliceDistance(distance=0.5 * float(np.max(u) - np.min(u)),
                         r0_star=0.5 * float(np.max(u) + np.min(u)),
                         oscillation=float(np.sqrt(osc2)), gradient=grad2,
                         poincare_left=osc2, poincare_right=grad2 / n)


# ====== reports ======
@dataclass
class DeficitReport:
    problem: str
    t: float = 0.0
    h: Optional[float] = None
    scale: float = 1.0
    serrin: Dict[str, float] = field(default_factory=dict)
    hk: Dict[str, float] = field(default_factory=dict)
    cmc: Dict[str, float] = field(default_factory=dict)
    E_serrin: Optional[float] = None
    E_warped: Optional[float] = None
    E_region: Optional[float] = None
    chain_hk: Dict[str, Any] = field(default_factory=dict)
    chain_cmc: Dict[str, Any] = field(default_factory=dict)
    ring_A_norm: float = 0.0
    codazzi: float = 0.0
    graphicality: Dict[str, Any] = field(default_factory=dict)
    slice: Dict[str, Any] = field(default_factory=dict)
    flags: Dict[str, Any] = field(default_factory=dict)

    def row(self) -> Dict[str, Any]:
        return {
            "t": self.t,
            "hk_deficit": self.hk.get("hk_deficit"),
            "delta": self.hk.get("delta"),
            "cmc_deficit": self.cmc.get("cmc_deficit"),
            "serrin_eps": self.serrin.get("eps"),
            "ring_A_norm": self.ring_A_norm,
            "slice_distance": self.slice.get("distance"),
            "E_warped": self.E_warped,
            "E_serrin": self.E_serrin,
        }

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def chain_checks(fld: ScalarField, surface: BoundarySurface, hk: Dict[str, float], cmc: Dict[str, float],
                 tol: float = 1e-6, rel_slack: float = 0.05) -> Tuple[Dict, Dict, float, float]:
    """E_warped against the HK bound and the termwise CMC bound, plus the region form."""
    n = fld.profile.n
    scale = volume_integral_of_v(fld.domain)
    E = traceless_energy(fld, WARPED)
    E_region = traceless_energy(fld, WARPED, region=True)
    hk_factor = n / ((n + 1) ** 2 * (1.0 + hk["delta"]))
    hk_bound = hk_factor * hk["hk_deficit"]
    region_bound = hk_bound / region_min_v(fld.domain)
    f_nu = neumann_trace(fld, surface)
    cmc_bound = n * integrate_boundary(surface, surface.dtheta * (cmc["H_cal"] - surface.H1) * f_nu**2)
    chain_hk = {"lhs": E, "bound": hk_bound, "holds": bool(E <= hk_bound * (1 + rel_slack) + tol * scale),
                "region_lhs": E_region, "region_bound": region_bound,
                "region_holds": bool(E_region <= region_bound * (1 + rel_slack) + tol * scale)}
    chain_cmc = {"lhs": E, "bound": cmc_bound, "holds": bool(E <= cmc_bound * (1 + rel_slack) + tol * scale)}
    return chain_hk, chain_cmc, E, E_region


def evaluate_configuration(profile: WarpingProfile, spec: BoundarySpec, problem: str, h: float,
                           source: Optional[SourceSpec] = None, solver: Optional[SolverConfig] = None,
                           t: float = 0.0, resolution: int = 128, beta1: float = 0.5,
                           beta2: float = 1.0, topology: Optional[str] = None,
                           with_field: bool = True) -> DeficitReport:
    """Deficits, energies and boundary geometry of one configuration."""
    domain = build_domain(profile, spec, topology=topology, beta2=beta2)
    surface = boundary_geometry(domain, resolution=resolution)
    report = DeficitReport(problem=problem, t=t, h=h if with_field else None,
                           scale=volume_integral_of_v(domain))
    report.ring_A_norm = ring_A_norm(surface)
    report.codazzi = codazzi_term(surface, profile)
    graph = graphicality(surface)
    report.graphicality = graph.to_dict()
    report.flags["graphical_quarter"] = graph.above_quarter
    report.slice = slice_distance(surface).to_dict()
    report.cmc = cmc_deficit(surface, domain)
    if problem == SERRIN:
        if with_field:
            source = source or make_source()
            fld = solve_serrin(domain, source, h, solver)
            report.serrin = serrin_deficit(fld, source)
            report.E_serrin = traceless_energy(fld, SERRIN)
        return report
    try:
        report.hk = hk_deficit(surface, domain)
    except SurfaceError as exc:
        if problem == "hk":
            raise
        report.flags["mean_convex"] = False
        logger.warning("%s", exc)
        return report
    report.flags["mean_convex"] = True
    if not with_field:
        return report
    try:
        fld = solve_warped_torsion(domain, h, solver, beta1=beta1)
    except HypothesisError as exc:
        if problem == "hk":
            raise
        report.flags["torsion"] = str(exc)
        logger.warning("warped torsion skipped: %s", exc)
        return report
    # chain bounds use f_nu on the field's own boundary lattice
    chain_hk, chain_cmc, E, E_region = chain_checks(fld, fld.surface, hk_deficit(fld.surface, domain),
                                                    cmc_deficit(fld.surface, domain))
    report.E_warped, report.E_region = E, E_region
    report.chain_hk, report.chain_cmc = chain_hk, chain_cmc
    return report


# ====== sweeps ======
@dataclass
class SweepResult:
    problem: str
    table: pd.DataFrame
    reports: List[DeficitReport]
    exponent: Optional[float]
    intercept: Optional[float]
    monotone: Dict[str, bool]

    def footer(self) -> Dict[str, Any]:
        return {"problem": self.problem, "fitted_exponent": self.exponent,
                **{f"monotone_{k}": v for k, v in self.monotone.items()}}


def _sweep_member(args) -> DeficitReport:
    profile, spec, family, t, problem, h, source_kind, source_coef, solver, resolution, beta1, beta2 = args
    return evaluate_configuration(profile, spec.perturbed(t, family), problem, h,
                                  source=make_source(source_kind, source_coef), solver=solver, t=t,
                                  resolution=resolution, beta1=beta1, beta2=beta2)


def fit_exponent(x: Sequence[float], y: Sequence[float]) -> Tuple[Optional[float], Optional[float]]:
    """Least-squares slope and intercept of log y against log x over positive pairs."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if np.count_nonzero(ok) < 2:
        return None, None
    model = LinearRegression().fit(np.log(x[ok]).reshape(-1, 1), np.log(y[ok]))
    return float(model.coef_[0]), float(model.intercept_)


def _strictly_increasing(values: pd.Series) -> bool:
    v = values.to_numpy(dtype=float)
    return bool(np.all(np.isfinite(v)) and np.all(np.diff(v) > 0))


def stability_sweep(profile: WarpingProfile, base: BoundarySpec, family: Sequence[float],
                    amplitudes: Sequence[float], problem: str, h: float,
                    source: Tuple[str, float] = ("constant", 1.0), solver: Optional[SolverConfig] = None,
                    workers: int = 1, resolution: int = 128, beta1: float = 0.5,
                    beta2: float = 1.0) -> SweepResult:
    """DeficitReport per amplitude, fitted exponent of ||A°||^2 against the problem's deficit."""
    if problem not in PROBLEM_DEFICIT:
        raise ValueError(f"unknown problem '{problem}'")
    amps = sorted(float(a) for a in amplitudes)
    jobs = [(profile, base, tuple(family), t, problem, h, source[0], source[1], solver, resolution, beta1, beta2)
            for t in amps]
    if workers > 1 and len(jobs) > 1:
        with Pool(processes=min(workers, len(jobs))) as pool:
            reports = pool.map(_sweep_member, jobs)
    else:
        reports = [_sweep_member(job) for job in jobs]
    table = _ensure_cols(pd.DataFrame([rep.row() for rep in reports]), SWEEP_COLUMNS)
    key = PROBLEM_DEFICIT[problem]
    positive = table[table["t"] > 0]
    exponent, intercept = fit_exponent(positive[key], positive["ring_A_norm"])
    tracked = [key, "ring_A_norm", "slice_distance"]
    monotone = {c: _strictly_increasing(positive[c]) for c in tracked if positive[c].notna().all()}
    logger.info("sweep %s over %d amplitudes: exponent %s, monotone %s", problem, len(amps), exponent, monotone)
    return SweepResult(problem=problem, table=table, reports=reports, exponent=exponent,
                       intercept=intercept, monotone=monotone)
