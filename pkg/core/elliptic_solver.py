# core/elliptic_solver.py
"""
Boundary-value problems on meridian meshes.
- SourceSpec / make_source: phi with phi', Phi = int_0^f phi, Psi = int_0^f Phi.
- solve_serrin(domain, source, h): Delta f + (n+1) K f = phi(f), f = 0 on M, by
  damped Newton from the phi = 1 linear solve.
- solve_warped_torsion(domain, h): Delta f - (Delta V / V) f = 1, f = 0 on M and
  f = c0 on the inner slice.
- recover_gradient / recover_hessian / neumann_trace on a solved ScalarField.
- radial_oracle(kind, profile, source, R): 1-D reference solutions by shooting.
Linear systems: Jacobi-preconditioned scipy cg, spsolve as fallback.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.sparse.linalg import LinearOperator, cg, spsolve

from .config import SolverConfig
from .errors import DomainError, HypothesisError, OracleError, SolverError
from .meridian_domain import BoundarySurface, MeridianDomain, boundary_geometry
from .meridian_mesh import MeridianMesh, build_mesh
from .patch_recovery import AmbientDerivatives, RecoveredField, recover
from .warp_profiles import WarpingProfile, check_hypotheses

logger = logging.getLogger(__name__)

SERRIN = "serrin"
WARPED = "warped"


# ====== sources ======
@dataclass(frozen=True)
class SourceSpec:
    kind: str
    coefficient: float
    phi: Callable = field(repr=False, compare=False)
    dphi: Callable = field(repr=False, compare=False)
    Phi: Callable = field(repr=False, compare=False)
    Psi: Callable = field(repr=False, compare=False)

    @property
    def is_unit(self) -> bool:
        return self.kind == "constant" and self.coefficient == 1.0

    def check_positive(self, values: np.ndarray) -> None:
        lo = float(np.min(self.phi(np.asarray(values, dtype=float))))
        if lo <= 0:
            raise SolverError(f"source {self.kind} is not positive on the range of f (min phi = {lo:.3g})")


def _constant(c):
    return (lambda f: np.full_like(np.asarray(f, dtype=float), c),
            lambda f: np.zeros_like(np.asarray(f, dtype=float)),
            lambda f: c * np.asarray(f, dtype=float),
            lambda f: 0.5 * c * np.asarray(f, dtype=float) ** 2)


def _affine(a):
    return (lambda f: 1.0 + a * np.asarray(f, dtype=float),
            lambda f: np.full_like(np.asarray(f, dtype=float), a),
            lambda f: f + 0.5 * a * np.asarray(f, dtype=float) ** 2,
            lambda f: 0.5 * np.asarray(f, dtype=float) ** 2 + a * np.asarray(f, dtype=float) ** 3 / 6.0)


def _quadratic(b):
    return (lambda f: 1.0 + b * np.asarray(f, dtype=float) ** 2,
            lambda f: 2.0 * b * np.asarray(f, dtype=float),
            lambda f: f + b * np.asarray(f, dtype=float) ** 3 / 3.0,
            lambda f: 0.5 * np.asarray(f, dtype=float) ** 2 + b * np.asarray(f, dtype=float) ** 4 / 12.0)


def _exponential(_):
    return (lambda f: np.exp(f),
            lambda f: np.exp(f),
            lambda f: np.expm1(f),
            lambda f: np.expm1(f) - np.asarray(f, dtype=float))


_SOURCES = {"constant": _constant, "affine": _affine, "quadratic": _quadratic, "exponential": _exponential}


def make_source(kind: str = "constant", coefficient: float = 1.0) -> SourceSpec:
    """constant c | affine 1 + a f | quadratic 1 + b f^2 | exponential e^f."""
    if kind not in _SOURCES:
        raise ValueError(f"unknown source kind '{kind}'")
    phi, dphi, Phi, Psi = _SOURCES[kind](float(coefficient))
    return SourceSpec(kind=kind, coefficient=float(coefficient), phi=phi, dphi=dphi, Phi=Phi, Psi=Psi)


# ====== fields ======
@dataclass
class ScalarField:
    """Nodal P2 field on a meridian mesh; treated as immutable once built."""
    mesh: MeridianMesh
    values: np.ndarray
    kind: str = "given"
    K: Optional[float] = None
    source: Optional[SourceSpec] = None
    c0: Optional[float] = None
    newton_iterations: int = 0
    linear_iterations: int = 0
    residual_norm: float = 0.0

    @property
    def domain(self) -> MeridianDomain:
        return self.mesh.domain

    @property
    def profile(self) -> WarpingProfile:
        return self.mesh.domain.profile

    @property
    def h(self) -> float:
        return self.mesh.h

    @cached_property
    def recovered(self) -> RecoveredField:
        return recover(self.mesh, self.values)

    @cached_property
    def values_q(self) -> np.ndarray:
        return self.mesh.at_quadrature(self.values)

    @cached_property
    def surface(self) -> BoundarySurface:
        """Geometry of M on the boundary lattice nodes."""
        return boundary_geometry(self.domain, resolution=self.mesh.n_s)

    def interior_mask(self) -> np.ndarray:
        """Nodes off every Dirichlet row."""
        lat = np.ones(self.mesh.shape, dtype=bool)
        lat[:, -1] = False
        if self.domain.is_homologous:
            lat[:, 0] = False
        return lat.ravel()


def field_from_function(mesh: MeridianMesh, fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                        kind: str = "given") -> ScalarField:
    """Nodal interpolant of fn(r, s)."""
    return ScalarField(mesh=mesh, values=np.asarray(fn(mesh.r, mesh.s), dtype=float), kind=kind)


# ------------ linear algebra ------------
def _solve_linear(A, b: np.ndarray, cfg: SolverConfig) -> Tuple[np.ndarray, int]:
    if cfg.linear_solver == "direct":
        return spsolve(A.tocsc(), b), 0
    diag = A.diagonal()
    if np.any(diag <= 0):
        logger.warning("matrix diagonal not positive; using the direct solver")
        return spsolve(A.tocsc(), b), 0
    precond = LinearOperator(A.shape, matvec=lambda x: x / diag)
    count = {"it": 0}

    def _tick(_xk):
        count["it"] += 1

    x, info = cg(A, b, rtol=cfg.linear_tol, atol=0.0, maxiter=cfg.linear_max_iter, M=precond, callback=_tick)
    if info != 0:
        if not cfg.direct_fallback:
            raise SolverError(f"cg did not converge (info={info}) and direct fallback is off")
        logger.warning("cg stopped with info=%d after %d iterations; falling back to spsolve", info, count["it"])
        return spsolve(A.tocsc(), b), count["it"]
    logger.info("cg converged in %d iterations", count["it"])
    return x, count["it"]


def _split(mesh: MeridianMesh, fixed_values: Dict[int, float]):
    """Free dof mask and the Dirichlet vector."""
    g = np.zeros(mesh.n_dof)
    fixed = np.zeros(mesh.n_dof, dtype=bool)
    for node_set, value in fixed_values.items():
        d = mesh.dof[np.asarray(node_set)]
        fixed[d] = True
        g[d] = value
    return ~fixed, g


def _dirichlet_solve(A, rhs, free, g, cfg):
    Aff = A[free][:, free]
    b = rhs[free] - A[free][:, ~free] @ g[~free]
    x_f, its = _solve_linear(Aff, b, cfg)
    x = g.copy()
    x[free] = x_f
    return x, its


def _check_negative(fld: ScalarField, label: str) -> None:
    inner = fld.values[fld.interior_mask()]
    if inner.size and np.max(inner) >= 0:
        raise SolverError(f"{label}: maximum principle violated (max interior f = {np.max(inner):.3g})")


# ---------------- Public API: solvers
def solve_serrin(domain: MeridianDomain, source: SourceSpec, h: float,
                 cfg: Optional[SolverConfig] = None) -> ScalarField:
    """Delta f + (n+1) K f = phi(f) in Omega, f = 0 on M (spaceforms only)."""
    cfg = cfg or SolverConfig(h=h)
    profile = domain.profile
    K = profile.curvature_K
    if K is None:
        raise DomainError("solve_serrin needs a spaceform profile")
    if domain.is_homologous:
        raise DomainError("the Serrin problem is posed on null-homologous domains")
    if K > 0 and domain.extent()[1] > np.pi / 2 - cfg.hemisphere_margin:
        raise DomainError(f"hemisphere domains need max r <= pi/2 - {cfg.hemisphere_margin}")
    n = profile.n
    mesh = build_mesh(domain, h)
    A = mesh.stiffness()
    M = mesh.mass()
    base = (A - (n + 1) * K * M).tocsr()
    free, g = _split(mesh, {tuple(mesh.boundary_nodes): 0.0})
    unit = mesh.load()

    x, its = _dirichlet_solve(base, -unit, free, g, cfg)
    total_its = its
    newton_it = 0
    scale = max(float(np.linalg.norm(unit[free])), 1e-300)

    def residual(vec):
        phi_q = source.phi(mesh.at_quadrature(mesh.nodal_from_dofs(vec)))
        return base @ vec + mesh.load(phi_q)

    if source.is_unit:
        res = float(np.linalg.norm(residual(x)[free])) / scale
    else:
        res_vec = residual(x)
        res = float(np.linalg.norm(res_vec[free])) / scale
        while res > cfg.newton_tol:
            if newton_it >= cfg.newton_max_iter:
                raise SolverError(f"Newton did not converge in {cfg.newton_max_iter} iterations (residual {res:.3e})")
            f_q = mesh.at_quadrature(mesh.nodal_from_dofs(x))
            J = (base + mesh.mass(source.dphi(f_q))).tocsr()
            step = np.zeros(mesh.n_dof)
            step_f, its = _solve_linear(J[free][:, free], -res_vec[free], cfg)
            total_its += its
            step[free] = step_f
            alpha = 1.0
            for _ in range(12):
                trial = x + alpha * step
                trial_vec = residual(trial)
                trial_res = float(np.linalg.norm(trial_vec[free])) / scale
                if trial_res < (1.0 - 1e-4 * alpha) * res:
                    break
                alpha *= 0.5
            else:
                raise SolverError("Newton line search failed; linearisation may be indefinite")
            x, res_vec, res = trial, trial_vec, trial_res
            newton_it += 1
            logger.info("newton %d: residual %.3e (step %.3g)", newton_it, res, alpha)
    fld = ScalarField(mesh=mesh, values=mesh.nodal_from_dofs(x), kind=SERRIN, K=K, source=source,
                      newton_iterations=newton_it, linear_iterations=total_its, residual_norm=res)
    _check_negative(fld, "serrin")
    source.check_positive(fld.values)
    return fld


def torsion_c0(profile: WarpingProfile) -> float:
    """c0 = -theta(0) / ((n+1) theta''(0))."""
    return -profile.theta0 / ((profile.n + 1) * profile.eval(0.0, 2))


def _require_hypotheses(domain: MeridianDomain, beta1: float) -> None:
    profile = domain.profile
    r_top = domain.extent()[1]
    grid = np.linspace(0.0, r_top, 202)[1:]
    grid = grid[grid < profile.r_bar]
    report = check_hypotheses(profile, grid, beta1=beta1)
    # H1 and H4 concern the inner slice and the Ricci sign; balls about a pole have
    # no inner slice and spaceforms satisfy H4 with equality
    needed = ("H1", "H2", "H3", "H4", "H5") if domain.is_homologous else ("H2", "H3", "H5")
    failed = [name for name in needed if not report.passed(name)]
    if failed:
        raise HypothesisError(f"profile {profile.kind} fails {failed} on [0, {r_top:.4g}]")


def solve_warped_torsion(domain: MeridianDomain, h: float, cfg: Optional[SolverConfig] = None,
                         beta1: float = 0.5) -> ScalarField:
    """Delta f - (Delta V/V) f = 1, f = 0 on M, f = c0 on {r = 0} in the homologous case."""
    cfg = cfg or SolverConfig(h=h)
    _require_hypotheses(domain, beta1)
    profile = domain.profile
    mesh = build_mesh(domain, h)
    q = mesh.quad
    coeff = profile.lap_v_over_v(q["r"])
    A = (mesh.stiffness() + mesh.mass(coeff)).tocsr()
    fixed = {tuple(mesh.boundary_nodes): 0.0}
    c0 = None
    if domain.is_homologous:
        c0 = torsion_c0(profile)
        fixed[tuple(mesh.inner_nodes)] = c0
    free, g = _split(mesh, fixed)
    x, its = _dirichlet_solve(A, -mesh.load(), free, g, cfg)
    res = float(np.linalg.norm((A @ x + mesh.load())[free]))
    fld = ScalarField(mesh=mesh, values=mesh.nodal_from_dofs(x), kind=WARPED, c0=c0,
                      linear_iterations=its, residual_norm=res)
    _check_negative(fld, "warped torsion")
    return fld


# ---------------- Public API: derivatives
def recover_gradient(fld: ScalarField) -> np.ndarray:
    """Nodal ambient gradient, orthonormal components (f_r, f_s/theta), shape (N, 2)."""
    nd = fld.recovered.nodal
    return np.stack([nd.f_r, nd.grad_s], axis=1)


def recover_hessian(fld: ScalarField) -> AmbientDerivatives:
    """Nodal ambient Hessian: meridian block H_rr, H_rs, H_ss and the hoop eigenvalue."""
    return fld.recovered.nodal


def neumann_trace(fld: ScalarField, surface: Optional[BoundarySurface] = None) -> np.ndarray:
    """f_nu on M at the boundary lattice nodes."""
    surface = surface or fld.surface
    nodes = fld.mesh.boundary_nodes
    if len(nodes) != len(surface.s):
        raise ValueError("surface resolution must match the mesh boundary row")
    nd = fld.recovered.nodal
    return nd.f_r[nodes] * surface.nu_r + nd.grad_s[nodes] * surface.nu_s


# ====== 1-D reference solutions ======
@dataclass(frozen=True)
class RadialSolution:
    kind: str
    R: float
    r: np.ndarray
    f: np.ndarray
    df: np.ndarray
    start: float
    _dense: Callable = field(repr=False, compare=False, default=None)

    @property
    def f_nu(self) -> float:
        return float(self.df[-1])

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.asarray(self._dense(np.clip(r, self.start, self.R))[0])
        near = r < self.start
        if np.any(near):
            out = np.where(near, self.f[0] + 0.5 * self._curv * r**2, out)
        return out

    @property
    def _curv(self) -> float:
        return float(self.df[0] / self.start) if self.start > 0 else 0.0


def _serrin_oracle(profile: WarpingProfile, source: SourceSpec, R: float, points: int,
                   rtol: float) -> RadialSolution:
    K = profile.curvature_K
    n = profile.n
    if K is None:
        raise OracleError("the Serrin oracle needs a spaceform profile")
    if K > 0 and R >= np.pi / 2 - 1e-3:
        raise OracleError(f"R={R} reaches the hemisphere boundary; the radial problem blows up")
    r0 = 1e-4 * R

    def rhs(r, y):
        return [y[1], float(source.phi(y[0])) - n * profile.eval(r, 1) / profile.eval(r, 0) * y[1] - (n + 1) * K * y[0]]

    def shoot(a, dense=False):
        curv = (float(source.phi(a)) - (n + 1) * K * a) / (n + 1)
        y0 = [a + 0.5 * curv * r0**2, curv * r0]
        sol = solve_ivp(rhs, (r0, R), y0, method="DOP853", rtol=rtol, atol=rtol * 1e-2, dense_output=dense)
        if not sol.success:
            raise OracleError(f"shooting failed: {sol.message}")
        return sol

    if K == 0:
        guess = -R**2 / (2 * (n + 1))
    else:
        guess = (1.0 - 1.0 / _cs(K, R)) / ((n + 1) * K)
    g = lambda a: shoot(a).y[0, -1]
    lo, hi = guess - 0.5 * abs(guess) - 1e-3, guess + 0.5 * abs(guess) + 1e-3
    g_lo, g_hi = g(lo), g(hi)
    for _ in range(40):
        if g_lo * g_hi <= 0:
            break
        lo, hi = lo - (hi - lo), hi + (hi - lo)
        g_lo, g_hi = g(lo), g(hi)
    else:
        raise OracleError("could not bracket the shooting parameter")
    a = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    sol = shoot(a, dense=True)
    r = np.linspace(r0, R, points)
    y = sol.sol(r)
    return RadialSolution(kind=SERRIN, R=R, r=r, f=y[0], df=y[1], start=r0, _dense=sol.sol)


def _cs(K, R):
    return np.cos(R) if K > 0 else np.cosh(R)


def _warped_oracle(profile: WarpingProfile, R: float, points: int, rtol: float) -> RadialSolution:
    n = profile.n
    if profile.theta0 <= 0:
        raise OracleError("the warped oracle is posed on slabs over an inner slice")
    c0 = torsion_c0(profile)

    def rhs(r, y, forcing):
        return [y[1], forcing - n * profile.eval(r, 1) / profile.eval(r, 0) * y[1]
                + float(profile.lap_v_over_v(r)) * y[0]]

    kw = dict(method="DOP853", rtol=rtol, atol=rtol * 1e-2, dense_output=True)
    part = solve_ivp(rhs, (0.0, R), [c0, 0.0], args=(1.0,), **kw)
    homo = solve_ivp(rhs, (0.0, R), [0.0, 1.0], args=(0.0,), **kw)
    if not (part.success and homo.success):
        raise OracleError("warped shooting failed")
    if abs(homo.y[0, -1]) < 1e-14:
        raise OracleError("homogeneous solution vanishes at R; zero is an eigenvalue")
    alpha = -part.y[0, -1] / homo.y[0, -1]
    dense = lambda r: part.sol(r) + alpha * homo.sol(r)
    r = np.linspace(0.0, R, points)
    y = dense(r)
    return RadialSolution(kind=WARPED, R=R, r=r, f=y[0], df=y[1], start=0.0, _dense=dense)


def radial_oracle(kind: str, profile: WarpingProfile, R: float, source: Optional[SourceSpec] = None,
                  points: int = 401, rtol: float = 1e-12) -> RadialSolution:
    """Radial solution of the Serrin problem on a ball or of the torsion problem on a slab."""
    if kind == SERRIN:
        return _serrin_oracle(profile, source or make_source(), R, points, rtol)
    if kind == WARPED:
        return _warped_oracle(profile, R, points, rtol)
    raise OracleError(f"unknown oracle kind '{kind}'")


def closed_form_serrin(profile: WarpingProfile, R: float):
    """phi = 1 solution f = (1 - V/V(R)) / ((n+1) K), or (r^2 - R^2)/(2(n+1)) when K = 0."""
    K, n = profile.curvature_K, profile.n
    if K == 0:
        return lambda r: (np.asarray(r) ** 2 - R**2) / (2 * (n + 1))
    return lambda r: (1.0 - profile.eval(r, 1) / profile.eval(R, 1)) / ((n + 1) * K)
