# core/meridian_domain.py
"""
Axisymmetric domains in the warped product, described by their meridian section.
- BoundarySpec: a cosine-series graph r = u(s) or a geodesic ball whose centre lies
  on the axis (spaceforms only).
- build_domain(profile, spec, topology): validated MeridianDomain with rho.
- boundary_geometry(domain, resolution): BoundarySurface (normal, curvatures, H1,
  |A°|^2, area weights) on a uniform s-grid integrated by Simpson's rule.
- integrate_boundary(surface, values), volume_integral_of_v(domain), volume(domain).
- interior_ball_radius(domain): min of the curvature comparison radius and a
  graph distance-transform inradius (networkx multi-source Dijkstra).
Coordinates: s in [0, pi] is the polar angle on S^n; e_r, e_s = d_s/theta are the
orthonormal meridian directions.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import DomainError
from .warp_profiles import WarpingProfile, unit_sphere_volume

logger = logging.getLogger(__name__)

NULL_HOMOLOGOUS = "null-homologous"
HOMOLOGOUS = "homologous-to-inner-slice"


# ------------ boundary description ------------
@dataclass(frozen=True)
class BoundarySpec:
    """graph: u(s) = r0 + sum_k a_k cos(k s); ball: centre at signed axial distance `center`."""
    kind: str = "graph"
    r0: float = 2.0
    coefficients: Tuple[float, ...] = ()
    center: float = 0.0
    radius: float = 1.0

    def perturbed(self, t: float, family: Sequence[float]) -> "BoundarySpec":
        """u_t = u + t * sum_k family[k-1] cos(k s)."""
        size = max(len(self.coefficients), len(family))
        base = np.zeros(size)
        base[: len(self.coefficients)] = self.coefficients
        base[: len(family)] += t * np.asarray(family, dtype=float)
        return replace(self, coefficients=tuple(float(a) for a in base))


def _cs_sn(K: float, x):
    if K > 0:
        return np.cos(x), np.sin(x)
    return np.cosh(x), np.sinh(x)


@dataclass(frozen=True)
class MeridianDomain:
    profile: WarpingProfile
    spec: BoundarySpec
    topology: str
    rho: float = float("nan")
    beta2: float = 1.0

    @property
    def n(self) -> int:
        return self.profile.n

    @property
    def is_homologous(self) -> bool:
        return self.topology == HOMOLOGOUS

    @property
    def inner_slice_term(self) -> float:
        """theta(0)^{n+1} |S^n|; zero for null-homologous domains."""
        if not self.is_homologous:
            return 0.0
        return self.profile.theta0 ** (self.n + 1) * unit_sphere_volume(self.n)

    # ---------------- graph function and derivatives
    def graph(self, s) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(u, u', u'') at polar angles s."""
        s = np.asarray(s, dtype=float)
        if self.spec.kind == "graph":
            u = np.full_like(s, self.spec.r0)
            du = np.zeros_like(s)
            d2u = np.zeros_like(s)
            for k, a in enumerate(self.spec.coefficients, start=1):
                u = u + a * np.cos(k * s)
                du = du - k * a * np.sin(k * s)
                d2u = d2u - k * k * a * np.cos(k * s)
            return u, du, d2u
        return self._ball_graph(s)

    def _ball_graph(self, s):
        K = self.profile.curvature_K
        c, R = self.spec.center, self.spec.radius
        if K == 0:
            root = np.sqrt(R**2 - (c * np.sin(s)) ** 2)
            u = c * np.cos(s) + root
            g_r = 2 * u - 2 * c * np.cos(s)
            g_rr = np.full_like(s, 2.0)
            g_s = 2 * u * c * np.sin(s)
            g_ss = 2 * u * c * np.cos(s)
            g_rs = 2 * c * np.sin(s)
        else:
            cs_c, sn_c = _cs_sn(K, c)
            A, B = cs_c, sn_c * np.cos(s)
            C = _cs_sn(K, R)[0]
            if K > 0:
                u = np.arctan2(B, A) + np.arccos(np.clip(C / np.hypot(A, B), -1.0, 1.0))
            else:
                rho = np.sqrt(A**2 - B**2)
                u = np.arctanh(B / A) + np.arccosh(np.maximum(C / rho, 1.0))
            cs_u, sn_u = _cs_sn(K, u)
            # G(r, s) = cs(r) cs(c) + K sn(r) sn(c) cos s - cs(R)
            g_r = -K * A * sn_u + K * sn_c * np.cos(s) * cs_u
            g_rr = -K * A * cs_u - K * K * sn_c * np.cos(s) * sn_u
            g_s = -K * sn_u * sn_c * np.sin(s)
            g_ss = -K * sn_u * sn_c * np.cos(s)
            g_rs = -K * cs_u * sn_c * np.sin(s)
        du = -g_s / g_r
        d2u = -(g_ss + 2 * g_rs * du + g_rr * du**2) / g_r
        return u, du, d2u

    def u(self, s):
        return self.graph(s)[0]

    def extent(self, samples: int = 721) -> Tuple[float, float]:
        u = self.u(np.linspace(0.0, np.pi, samples))
        return float(np.min(u)), float(np.max(u))

    def to_dict(self) -> Dict:
        return {
            "boundary": self.spec.kind, "r0": self.spec.r0,
            "coefficients": list(self.spec.coefficients), "center": self.spec.center,
            "radius": self.spec.radius, "topology": self.topology,
            "rho": self.rho, "beta2": self.beta2,
        }


# ------------ boundary surface ------------
@dataclass(frozen=True)
class BoundarySurface:
    """Meridian curve r = scale*u(s) with geometry sampled at Simpson nodes."""
    n: int
    s: np.ndarray
    r: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    line_density: np.ndarray   # L = sqrt(u'^2 + theta^2)
    nu_r: np.ndarray
    nu_s: np.ndarray           # orthonormal e_s component
    kappa_m: np.ndarray
    kappa_p: np.ndarray
    area_density: np.ndarray   # dA/ds
    weights: np.ndarray        # Simpson weight * dA/ds
    scale: float = 1.0
    extra: Dict = field(default_factory=dict, compare=False)

    @property
    def tau_r(self) -> np.ndarray:
        return -self.nu_s

    @property
    def tau_s(self) -> np.ndarray:
        return self.nu_r

    @property
    def support(self) -> np.ndarray:
        """<X, nu> with X = theta d_r."""
        return self.theta * self.nu_r

    @property
    def radial_cos(self) -> np.ndarray:
        return self.nu_r

    @property
    def radial_tangent2(self) -> np.ndarray:
        """|d_r^T|^2 = 1 - <d_r, nu>^2."""
        return np.clip(1.0 - self.nu_r**2, 0.0, 1.0)

    @property
    def H1(self) -> np.ndarray:
        return (self.kappa_m + (self.n - 1) * self.kappa_p) / self.n

    @property
    def ring_A2(self) -> np.ndarray:
        return (self.n - 1) / self.n * (self.kappa_m - self.kappa_p) ** 2

    @property
    def arclength(self) -> np.ndarray:
        ds = np.diff(self.s)
        mid = 0.5 * (self.line_density[1:] + self.line_density[:-1])
        return np.concatenate([[0.0], np.cumsum(mid * ds)])

    @property
    def area(self) -> float:
        return float(np.sum(self.weights))


def simpson_weights(count: int, step: float) -> np.ndarray:
    if count < 3 or count % 2 == 0:
        raise DomainError(f"Simpson's rule needs an odd node count >= 3, got {count}")
    w = np.ones(count)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * step / 3.0


def _sphere_density(n: int, s: np.ndarray) -> np.ndarray:
    """sin^{n-1}(s) |S^{n-1}|; |S^0| = 2 counts both half-planes for n = 1."""
    return np.sin(s) ** (n - 1) * unit_sphere_volume(n - 1)


def surface_from_graph(profile: WarpingProfile, s: np.ndarray, u: np.ndarray, du: np.ndarray,
                       d2u: np.ndarray, scale: float = 1.0) -> BoundarySurface:
    """Geometry of r = u(s) on a uniform odd-sized s-grid covering [0, pi]."""
    n = profile.n
    th = profile.eval(u, 0)
    v = profile.eval(u, 1)
    L = np.sqrt(du**2 + th**2)
    cot_term = np.empty_like(s)
    axis = (s < 1e-12) | (s > np.pi - 1e-12)
    cot_term[~axis] = du[~axis] / np.tan(s[~axis])
    cot_term[axis] = d2u[axis]
    kappa_m = (th**2 * v + 2.0 * v * du**2 - th * d2u) / L**3
    kappa_p = (v - cot_term / th) / L
    density = th ** (n - 1) * _sphere_density(n, s) * L
    w = simpson_weights(len(s), s[1] - s[0]) * density
    return BoundarySurface(n=n, s=s, r=u, du=du, d2u=d2u, theta=th, dtheta=v, line_density=L,
                           nu_r=th / L, nu_s=-du / L, kappa_m=kappa_m, kappa_p=kappa_p,
                           area_density=density, weights=w, scale=scale)


# ---------------- Public API
def build_domain(profile: WarpingProfile, spec: BoundarySpec, topology: Optional[str] = None,
                 beta2: float = 1.0, rho_resolution: int = 48) -> MeridianDomain:
    """Validate the boundary against the profile and attach the interior-ball radius."""
    if topology is None:
        topology = HOMOLOGOUS if profile.theta0 > 0 else NULL_HOMOLOGOUS
    if topology not in (NULL_HOMOLOGOUS, HOMOLOGOUS):
        raise DomainError(f"unknown topology '{topology}'")
    if topology == HOMOLOGOUS and profile.theta0 <= 0:
        raise DomainError("homologous-to-inner-slice needs theta(0) > 0; the inner slice is a point here")
    if topology == NULL_HOMOLOGOUS and profile.theta0 > 0:
        raise DomainError("null-homologous graphs over r = 0 need theta(0) = 0")
    if spec.kind == "ball":
        if not profile.is_spaceform:
            raise DomainError("geodesic balls are only available in spaceforms")
        if topology != NULL_HOMOLOGOUS:
            raise DomainError("geodesic balls are null-homologous")
        if abs(spec.center) >= spec.radius:
            raise DomainError(f"ball centre {spec.center} must lie within the radius {spec.radius} of the origin")
    elif spec.kind != "graph":
        raise DomainError(f"unknown boundary kind '{spec.kind}'")
    domain = MeridianDomain(profile=profile, spec=spec, topology=topology, beta2=beta2)
    s = np.linspace(0.0, np.pi, 721)
    u, du, d2u = domain.graph(s)
    if not np.all(np.isfinite(u)) or not np.all(np.isfinite(d2u)):
        raise DomainError("boundary graph is not C^2 on [0, pi]")
    if np.min(u) <= 0:
        raise DomainError(f"boundary graph reaches r = {np.min(u):.4g} <= 0")
    if np.max(u) >= profile.r_bar:
        raise DomainError(f"boundary graph reaches r = {np.max(u):.4g} >= r_bar = {profile.r_bar:.4g}")
    rho = interior_ball_radius(domain, resolution=rho_resolution)
    logger.info("domain %s (%s): u in [%.4g, %.4g], rho=%.4g", spec.kind, topology, np.min(u), np.max(u), rho)
    return replace(domain, rho=rho)


def boundary_geometry(domain: MeridianDomain, resolution: int = 128, scale: float = 1.0) -> BoundarySurface:
    """BoundarySurface of M (scale=1) or of the row surface {r = scale*u(s)}."""
    s = np.linspace(0.0, np.pi, 2 * resolution + 1)
    u, du, d2u = domain.graph(s)
    return surface_from_graph(domain.profile, s, scale * u, scale * du, scale * d2u, scale=scale)


def integrate_boundary(surface: BoundarySurface, values) -> float:
    vals = np.asarray(values, dtype=float)
    if vals.shape != surface.weights.shape:
        raise ValueError(f"expected {surface.weights.shape} boundary values, got {vals.shape}")
    return float(np.dot(surface.weights, vals))


def inner_slice_weights(domain: MeridianDomain, s: np.ndarray) -> np.ndarray:
    """Simpson weights * area density of {r = 0} x S^n on the grid s."""
    n = domain.n
    return simpson_weights(len(s), s[1] - s[0]) * domain.profile.theta0**n * _sphere_density(n, s)


def volume_integral_of_v(domain: MeridianDomain, resolution: int = 256) -> float:
    """int_Omega V, exact in r: |S^{n-1}| int sin^{n-1}(s) (theta(u)^{n+1} - theta(0)^{n+1})/(n+1) ds."""
    n = domain.n
    s = np.linspace(0.0, np.pi, 2 * resolution + 1)
    th = domain.profile.eval(domain.u(s), 0)
    inner = (th ** (n + 1) - domain.profile.theta0 ** (n + 1)) / (n + 1)
    return float(np.dot(simpson_weights(len(s), s[1] - s[0]), _sphere_density(n, s) * inner))


def volume(domain: MeridianDomain, resolution: int = 128, radial_points: int = 32) -> float:
    """vol(Omega) by Simpson in s and Gauss-Legendre in r."""
    n = domain.n
    s = np.linspace(0.0, np.pi, 2 * resolution + 1)
    u = domain.u(s)
    x, w = np.polynomial.legendre.leggauss(radial_points)
    r = 0.5 * (x[None, :] + 1.0) * u[:, None]
    inner = 0.5 * u * np.sum(w[None, :] * domain.profile.eval(r, 0) ** n, axis=1)
    return float(np.dot(simpson_weights(len(s), s[1] - s[0]), _sphere_density(n, s) * inner))


def curvature_radius(profile: WarpingProfile, kappa_max: float) -> float:
    """Radius of the comparison sphere whose principal curvature is kappa_max."""
    if kappa_max <= 0:
        return float("inf")
    K = profile.curvature_K
    if K is not None and K < 0:
        return float(np.arctanh(1.0 / kappa_max)) if kappa_max > 1.0 else float("inf")
    if K is not None and K > 0:
        return float(np.arctan(1.0 / kappa_max))
    return 1.0 / kappa_max


def _lattice_inradius(domain: MeridianDomain, resolution: int) -> float:
    """Max over lattice nodes of the warped graph distance to the boundary."""
    profile = domain.profile
    n_xi = resolution
    n_s = 2 * resolution
    xi = np.linspace(0.0, 1.0, n_xi + 1)
    s = np.linspace(0.0, np.pi, n_s + 1)
    r = xi[None, :] * domain.u(s)[:, None]     # [j, i]
    th = profile.eval(r, 0)
    G = nx.Graph()
    for j in range(n_s + 1):
        for i in range(n_xi + 1):
            for dj, di in ((0, 1), (1, 0), (1, 1), (1, -1)):
                jj, ii = j + dj, i + di
                if jj > n_s or ii < 0 or ii > n_xi:
                    continue
                dr = r[jj, ii] - r[j, i]
                th_mid = 0.5 * (th[jj, ii] + th[j, i])
                G.add_edge((j, i), (jj, ii), weight=float(np.hypot(dr, th_mid * (s[jj] - s[j]))))
    sources = [(j, n_xi) for j in range(n_s + 1)]
    if domain.is_homologous:
        sources += [(j, 0) for j in range(n_s + 1)]
    dist = nx.multi_source_dijkstra_path_length(G, sources, weight="weight")
    return float(max(dist.values()))


def interior_ball_radius(domain: MeridianDomain, resolution: int = 48) -> float:
    """Diagnostic rho = min(curvature comparison radius, lattice inradius)."""
    surface = boundary_geometry(domain, resolution=4 * resolution)
    kmax = float(np.max(np.maximum(surface.kappa_m, surface.kappa_p)))
    rho_curv = curvature_radius(domain.profile, kmax)
    rho_in = _lattice_inradius(domain, resolution)
    logger.debug("rho: curvature %.6g, inradius %.6g", rho_curv, rho_in)
    return float(min(rho_curv, rho_in))
