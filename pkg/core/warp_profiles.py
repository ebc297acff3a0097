# core/warp_profiles.py
"""
Warping-function algebra for metrics dr^2 + theta(r)^2 sigma on [0, r_bar) x S^n.
- make_profile(kind, params): closed-form spaceforms, implicit Schwarzschild /
  Reissner-Nordstrom profiles (integrated from the horizon), tabulated profiles.
- WarpingProfile.eval(r, k): theta^(k)(r) for k = 0..3.
- ambient_curvature(profile, r): Ricci and Hessian-of-V eigenvalues.
- check_hypotheses(profile, grid): (H1)..(H5) with witness points.
- unit_sphere_volume(n): |S^n|.
Implicit kinds use theta'' and theta''' from the radicand relation, never from
numerical differentiation.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
from numpy.polynomial import Chebyshev
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.optimize import brentq
from scipy.special import gamma

from .errors import InvalidParametersError, NoHorizonError, OutOfDomainError

logger = logging.getLogger(__name__)

SPHERE = "spaceform-sphere"
HYPERBOLIC = "spaceform-hyperbolic"
EUCLIDEAN = "euclidean"
SCHWARZSCHILD = "schwarzschild"
REISSNER_NORDSTROM = "reissner-nordstrom"
TABULATED = "tabulated"

KINDS = (SPHERE, HYPERBOLIC, EUCLIDEAN, SCHWARZSCHILD, REISSNER_NORDSTROM, TABULATED)
SPACEFORM_K = {SPHERE: 1.0, HYPERBOLIC: -1.0, EUCLIDEAN: 0.0}

# tabulated schema
TABLE_COLUMNS = ["r", "theta", "dtheta", "d2theta", "d3theta"]

DEFAULT_R_BAR = {SPHERE: np.pi / 2, HYPERBOLIC: 10.0, EUCLIDEAN: 10.0}
DEFAULT_THETA_CAP = 10.0
_CHEB_POINTS = 161


def unit_sphere_volume(n: int) -> float:
    """|S^n| = 2 pi^{(n+1)/2} / Gamma((n+1)/2)."""
    return float(2.0 * np.pi ** ((n + 1) / 2.0) / gamma((n + 1) / 2.0))


# ------------ radicand helpers (implicit kinds) ------------
def _radicand(theta, n, kappa, m, q):
    return 1.0 + kappa * theta**2 - 2.0 * m * theta ** (1 - n) + q**2 * theta ** (2 - 2 * n)


def _radicand_d1(theta, n, kappa, m, q):
    return (2.0 * kappa * theta + 2.0 * m * (n - 1) * theta ** (-n)
            - 2.0 * (n - 1) * q**2 * theta ** (1 - 2 * n))


def _radicand_d2(theta, n, kappa, m, q):
    return (2.0 * kappa - 2.0 * m * n * (n - 1) * theta ** (-n - 1)
            + 2.0 * (n - 1) * (2 * n - 1) * q**2 * theta ** (-2 * n))


def _horizon(n: int, kappa: float, m: float, q: float) -> float:
    """Largest positive root of the radicand at which it turns positive."""
    # theta^{2n-2} * radicand is a polynomial of degree 2n in theta
    coeffs = np.zeros(2 * n + 1)
    coeffs[2 * n] += kappa
    coeffs[2 * n - 2] += 1.0
    coeffs[n - 1] += -2.0 * m
    coeffs[0] += q**2
    roots = np.roots(coeffs[::-1]) if np.any(coeffs[1:] != 0) else np.array([])
    real = sorted(
        float(z.real) for z in roots
        if abs(z.imag) < 1e-9 * max(1.0, abs(z)) and z.real > 0
    )
    candidates = []
    for root in real:
        lo, hi = root * (1 - 1e-7), root * (1 + 1e-7)
        p_lo, p_hi = _radicand(lo, n, kappa, m, q), _radicand(hi, n, kappa, m, q)
        if p_lo <= 0.0 < p_hi:
            root = brentq(_radicand, lo, hi, args=(n, kappa, m, q), xtol=1e-15)
            candidates.append(root)
    if not candidates:
        raise NoHorizonError(
            f"radicand 1 + {kappa} th^2 - 2*{m} th^(1-n) + {q}^2 th^(2-2n) has no admissible root (n={n})"
        )
    return max(candidates)


# ------------ data types ------------
@dataclass(frozen=True)
class AmbientCurvature:
    """Curvature scalars at one radius (per unit g-bar unless stated)."""
    r: float
    ricci_radial: float
    ricci_tangential: float
    hess_v_spherical: float  # coefficient of sigma in Hess(V)/V, i.e. theta*theta''
    hess_v_radial: float     # theta'''/theta'
    lap_v_over_v: float
    hessian_defined: bool = True


@dataclass(frozen=True)
class HypothesisRecord:
    hypothesis: str
    passed: bool
    witness_r: float
    value: float

    def to_dict(self) -> Dict:
        return {"hypothesis": self.hypothesis, "pass": bool(self.passed),
                "witness_r": float(self.witness_r), "value": float(self.value)}


@dataclass(frozen=True)
class HypothesisReport:
    kind: str
    records: List[HypothesisRecord]
    beta1: float
    holder_bound: float

    def passed(self, name: str) -> bool:
        for rec in self.records:
            if rec.hypothesis == name:
                return rec.passed
        raise KeyError(name)

    @property
    def all_passed(self) -> bool:
        return all(rec.passed for rec in self.records)

    def to_records(self) -> List[Dict]:
        return [rec.to_dict() for rec in self.records]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.to_records())


@dataclass(frozen=True)
class WarpingProfile:
    """Immutable warping profile; all evaluations are pure."""
    kind: str
    n: int
    r_bar: float
    kappa: float = 0.0
    mass: float = 0.0
    charge: float = 0.0
    theta0: float = 0.0
    _cheb: Optional[Chebyshev] = field(default=None, repr=False, compare=False)
    _table: Optional[Dict] = field(default=None, repr=False, compare=False)

    # ---------------- basic properties
    @property
    def curvature_K(self) -> Optional[float]:
        return SPACEFORM_K.get(self.kind)

    @property
    def is_spaceform(self) -> bool:
        return self.kind in SPACEFORM_K

    @property
    def is_implicit(self) -> bool:
        return self.kind in (SCHWARZSCHILD, REISSNER_NORDSTROM)

    def _check(self, r) -> np.ndarray:
        arr = np.asarray(r, dtype=float)
        if np.any(arr < 0.0) or np.any(arr >= self.r_bar):
            bad = arr[(arr < 0.0) | (arr >= self.r_bar)]
            raise OutOfDomainError(f"r={bad.ravel()[0]:.6g} outside [0, {self.r_bar:.6g}) for {self.kind}")
        return arr

    # ---------------- evaluation
    def eval(self, r, k: int = 0):
        """theta^(k)(r), k in {0,1,2,3}; scalar in, scalar out."""
        if k not in (0, 1, 2, 3):
            raise InvalidParametersError(f"derivative order {k} not in 0..3")
        arr = self._check(r)
        out = self._derivative(arr, k)
        return float(out) if np.ndim(out) == 0 else out

    def theta(self, r):
        return self.eval(r, 0)

    def dtheta(self, r):
        return self.eval(r, 1)

    def _derivative(self, r: np.ndarray, k: int) -> np.ndarray:
        if self.kind == SPHERE:
            return (np.sin(r), np.cos(r), -np.sin(r), -np.cos(r))[k]
        if self.kind == HYPERBOLIC:
            return (np.sinh(r), np.cosh(r), np.sinh(r), np.cosh(r))[k]
        if self.kind == EUCLIDEAN:
            return (np.asarray(r, dtype=float), np.ones_like(r), np.zeros_like(r), np.zeros_like(r))[k]
        if self.is_implicit:
            th = self._cheb(r)
            if k == 0:
                return th
            args = (self.n, self.kappa, self.mass, self.charge)
            v = np.sqrt(np.maximum(_radicand(th, *args), 0.0))
            if k == 1:
                return v
            if k == 2:
                return 0.5 * _radicand_d1(th, *args)
            return v * 0.5 * _radicand_d2(th, *args)
        # tabulated
        return self._table["splines"][k](r)

    # ---------------- quotients that stay finite where theta or theta' vanish
    def third_over_first(self, r):
        """theta'''/theta' (radial Hessian-of-V coefficient)."""
        arr = self._check(r)
        if self.is_spaceform:
            return np.full_like(arr, -SPACEFORM_K[self.kind] if self.kind != EUCLIDEAN else 0.0) + 0.0
        if self.is_implicit:
            th = self._cheb(arr)
            return 0.5 * _radicand_d2(th, self.n, self.kappa, self.mass, self.charge)
        return self._table["quotient"](arr)

    def second_over_theta(self, r):
        """theta''/theta."""
        arr = self._check(r)
        if self.is_spaceform:
            return np.full_like(arr, -SPACEFORM_K[self.kind]) + 0.0
        return self._derivative(arr, 2) / self._derivative(arr, 0)

    def one_minus_v2_over_theta2(self, r):
        """(1 - theta'^2)/theta^2."""
        arr = self._check(r)
        if self.is_spaceform:
            return np.full_like(arr, SPACEFORM_K[self.kind]) + 0.0
        th = self._derivative(arr, 0)
        return (1.0 - self._derivative(arr, 1) ** 2) / th**2

    def lap_v_over_v(self, r):
        """Delta V / V = theta'''/theta' + n theta''/theta."""
        return self.third_over_first(r) + self.n * self.second_over_theta(r)

    def laplace_combination(self, r):
        """theta^2 theta'''/theta' + (n-2) theta theta'' + (n-1)(1 - theta'^2)."""
        arr = self._check(r)
        th = self._derivative(arr, 0)
        return (th**2 * self.third_over_first(arr) + (self.n - 2) * th * self._derivative(arr, 2)
                + (self.n - 1) * (1.0 - self._derivative(arr, 1) ** 2))

    def finite_difference(self, r: float, k: int, step: float) -> float:
        """Central difference of theta^(k-1); compare with eval(r, k)."""
        if k < 1:
            raise InvalidParametersError("finite differences need k >= 1")
        return (self.eval(r + step, k - 1) - self.eval(r - step, k - 1)) / (2.0 * step)

    def tabulate(self, r_grid) -> pd.DataFrame:
        r_grid = np.asarray(r_grid, dtype=float)
        return pd.DataFrame({col: self.eval(r_grid, k) for k, col in enumerate(TABLE_COLUMNS[1:])} | {"r": r_grid})[TABLE_COLUMNS]

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "n": self.n, "r_bar": self.r_bar, "kappa": self.kappa,
                "m": self.mass, "q": self.charge, "theta0": self.theta0}


# ------------ construction ------------
def _implicit_profile(kind: str, params: Dict) -> WarpingProfile:
    n = int(params.get("n", 2))
    kappa = float(params.get("kappa", 0.0))
    m = float(params.get("m", 0.5))
    q = float(params.get("q", 0.0)) if kind == REISSNER_NORDSTROM else 0.0
    if kappa not in (-1.0, 0.0, 1.0):
        raise InvalidParametersError(f"kappa must be -1, 0 or 1, got {kappa}")
    if m < 0 or q < 0:
        raise InvalidParametersError("mass and charge must be non-negative")
    if kind == REISSNER_NORDSTROM and q == 0.0:
        raise InvalidParametersError("reissner-nordstrom needs q > 0")
    theta0 = _horizon(n, kappa, m, q)
    cap = float(params.get("theta_cap", DEFAULT_THETA_CAP))
    if cap <= theta0:
        raise InvalidParametersError(f"theta_cap={cap} must exceed the horizon {theta0:.6g}")
    args = (n, kappa, m, q)

    def rhs(_r, y):
        return [y[1], 0.5 * _radicand_d1(y[0], *args)]

    def hit_cap(_r, y):
        return y[0] - cap
    hit_cap.terminal = True

    def turn_back(r, y):
        return y[1] if r > 0 else 1.0
    turn_back.terminal = True
    turn_back.direction = -1

    r_request = params.get("r_bar")
    r_max = float(r_request) * 1.05 if r_request else 200.0
    sol = solve_ivp(rhs, (0.0, r_max), [theta0, 0.0], method="DOP853",
                    rtol=1e-13, atol=1e-14, events=(hit_cap, turn_back))
    r_stop = float(sol.t[-1])
    if sol.status == 1:
        which = "theta cap" if sol.t_events[0].size else "cosmological horizon"
        logger.info("%s profile: integration stopped at r=%.6g (%s)", kind, r_stop, which)
    r_bar = float(r_request) if r_request else r_stop
    if r_bar > r_stop:
        logger.warning("requested r_bar=%.6g exceeds admissible range, clamped to %.6g", r_bar, r_stop)
        r_bar = r_stop
    # Chebyshev interpolant on [0, r_fit]; r_fit >= r_bar keeps the fit analytic on the domain
    r_fit = min(r_stop, r_bar * 1.02) if r_stop > r_bar else r_bar
    nodes = 0.5 * r_fit * (1.0 - np.cos(np.linspace(0.0, np.pi, _CHEB_POINTS)))
    dense = solve_ivp(rhs, (0.0, r_fit), [theta0, 0.0], method="DOP853",
                      rtol=1e-13, atol=1e-14, t_eval=nodes)
    if not dense.success:
        raise InvalidParametersError(f"could not integrate {kind} profile: {dense.message}")
    cheb = Chebyshev.fit(nodes, dense.y[0], _CHEB_POINTS - 1, domain=[0.0, r_fit])
    return WarpingProfile(kind=kind, n=n, r_bar=r_bar, kappa=kappa, mass=m, charge=q,
                          theta0=theta0, _cheb=cheb)


def _load_table(table: Union[pd.DataFrame, str, Path]) -> pd.DataFrame:
    df = pd.read_csv(table) if isinstance(table, (str, Path)) else table.copy()
    missing = [c for c in TABLE_COLUMNS if c not in df.columns]
    if missing:
        raise InvalidParametersError(f"tabulated profile lacks columns {missing}")
    df = df[TABLE_COLUMNS].astype(float).sort_values("r").reset_index(drop=True)
    if not np.all(np.diff(df["r"].to_numpy()) > 0):
        raise InvalidParametersError("tabulated r must be strictly increasing")
    return df


def _tabulated_profile(params: Dict) -> WarpingProfile:
    df = _load_table(params["table"])
    r = df["r"].to_numpy()
    cols = [df[c].to_numpy() for c in TABLE_COLUMNS[1:]]
    if r[0] != 0.0:
        raise InvalidParametersError("tabulated profile must start at r = 0")
    if np.any(cols[0][1:] <= 0):
        raise InvalidParametersError("tabulated theta must be positive on (0, r_bar)")
    splines = [
        CubicHermiteSpline(r, cols[0], cols[1]),
        CubicHermiteSpline(r, cols[1], cols[2]),
        CubicHermiteSpline(r, cols[2], cols[3]),
        CubicSpline(r, cols[3]),
    ]
    # theta'''/theta' where theta' > 0, continued by a cubic fit into theta' = 0
    ok = np.abs(cols[1]) > 1e-8
    quot = np.empty_like(r)
    quot[ok] = cols[3][ok] / cols[1][ok]
    if not np.all(ok):
        good = np.flatnonzero(ok)[:6]
        coeff = np.polyfit(r[good], quot[good], deg=min(3, len(good) - 1))
        quot[~ok] = np.polyval(coeff, r[~ok])
    r_bar = float(params.get("r_bar", r[-1]))
    if r_bar > r[-1]:
        raise InvalidParametersError(f"r_bar={r_bar} beyond table end {r[-1]}")
    return WarpingProfile(kind=TABULATED, n=int(params.get("n", 2)), r_bar=r_bar,
                          theta0=float(cols[0][0]),
                          _table={"splines": splines, "quotient": CubicSpline(r, quot)})


def make_profile(kind: str, params: Optional[Dict] = None) -> WarpingProfile:
    """Build a profile; params keys: n, r_bar, kappa, m, q, theta_cap, table."""
    params = dict(params or {})
    if kind not in KINDS:
        raise InvalidParametersError(f"unknown profile kind '{kind}', expected one of {KINDS}")
    n = int(params.get("n", 2))
    if n < 1:
        raise InvalidParametersError(f"n must be >= 1, got {n}")
    if kind in SPACEFORM_K:
        r_bar = float(params.get("r_bar", DEFAULT_R_BAR[kind]))
        if r_bar <= 0:
            raise InvalidParametersError("r_bar must be positive")
        if kind == SPHERE and r_bar > np.pi / 2 + 1e-12:
            raise InvalidParametersError("spaceform-sphere requires r_bar <= pi/2")
        return WarpingProfile(kind=kind, n=n, r_bar=r_bar, kappa=SPACEFORM_K[kind])
    if kind == TABULATED:
        if "table" not in params:
            raise InvalidParametersError("tabulated profile needs a 'table'")
        return _tabulated_profile(params)
    return _implicit_profile(kind, params)


# ---------------- Public API: curvature
def ambient_curvature(profile: WarpingProfile, r: float) -> AmbientCurvature:
    n = profile.n
    s_over = float(profile.second_over_theta(r))
    ricci_radial = -n * s_over
    ricci_tangential = (n - 1) * float(profile.one_minus_v2_over_theta2(r)) - s_over
    v = profile.eval(r, 1)
    if v <= 1e-14 and not profile.is_implicit:
        return AmbientCurvature(r=float(r), ricci_radial=ricci_radial, ricci_tangential=ricci_tangential,
                                hess_v_spherical=float("nan"), hess_v_radial=float("nan"),
                                lap_v_over_v=float("nan"), hessian_defined=False)
    th = profile.eval(r, 0)
    radial = float(profile.third_over_first(r))
    return AmbientCurvature(
        r=float(r),
        ricci_radial=ricci_radial,
        ricci_tangential=ricci_tangential,
        hess_v_spherical=th * profile.eval(r, 2),
        hess_v_radial=radial,
        lap_v_over_v=radial + n * s_over,
        hessian_defined=v > 1e-14,
    )


def h3_quantity(profile: WarpingProfile, r):
    """q(r) = 2 theta''/theta - (n-1)(1 - theta'^2)/theta^2."""
    return 2.0 * profile.second_over_theta(r) - (profile.n - 1) * profile.one_minus_v2_over_theta2(r)


def h4_quantity(profile: WarpingProfile, r):
    return profile.second_over_theta(r) + profile.one_minus_v2_over_theta2(r)


def holder_quotient(values: np.ndarray, grid: np.ndarray, beta: float) -> float:
    """sup |g(r) - g(r')| / |r - r'|^beta over all sampled pairs."""
    if len(grid) < 2:
        return 0.0
    dg = np.abs(values[:, None] - values[None, :])
    dr = np.abs(grid[:, None] - grid[None, :])
    mask = dr > 0
    return float(np.max(dg[mask] / dr[mask] ** beta))


def check_hypotheses(profile: WarpingProfile, grid, beta1: float = 0.5,
                     tol: float = 1e-10) -> HypothesisReport:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InvalidParametersError("hypothesis grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise InvalidParametersError("hypothesis grid must be strictly increasing")
    if grid[0] <= 0 or grid[-1] >= profile.r_bar:
        raise InvalidParametersError("hypothesis grid must lie inside (0, r_bar)")
    records: List[HypothesisRecord] = []

    # H1: endpoint values
    d1_0 = profile.eval(0.0, 1)
    d2_0 = profile.eval(0.0, 2)
    # theta'(0) of the implicit kinds is only accurate to sqrt(fit error)
    h1 = abs(d1_0) <= 1e-5 and d2_0 > 0
    records.append(HypothesisRecord("H1", h1, 0.0, d2_0 if abs(d1_0) <= 1e-5 else d1_0))

    # H2: theta' > 0
    v = profile.eval(grid, 1)
    i = int(np.argmin(v))
    records.append(HypothesisRecord("H2", bool(np.all(v > 0)), grid[i], v[i]))

    # H3: non-decreasing, checked against the running maximum
    q = np.asarray(h3_quantity(profile, grid), dtype=float)
    scale = max(1.0, float(np.max(np.abs(q))))
    drop = np.maximum.accumulate(q) - q
    j = int(np.argmax(drop))
    records.append(HypothesisRecord("H3", bool(drop[j] <= tol * scale), grid[j], q[j]))

    # H4: positivity
    q4 = np.asarray(h4_quantity(profile, grid), dtype=float)
    k = int(np.argmin(q4))
    records.append(HypothesisRecord("H4", bool(np.all(q4 > 0)), grid[k], q4[k]))

    # H5: sampled Hoelder quotient of theta'''/theta' stays bounded under refinement
    sample = grid if grid.size <= 400 else grid[np.linspace(0, grid.size - 1, 400).astype(int)]
    g = np.asarray(profile.third_over_first(sample), dtype=float)
    fine = holder_quotient(g, sample, beta1)
    coarse = holder_quotient(g[::2], sample[::2], beta1)
    finite = bool(np.all(np.isfinite(g))) and np.isfinite(fine)
    h5 = finite and fine <= 2.0 * coarse + 1e-9
    records.append(HypothesisRecord("H5", h5, float(sample[0]), fine))
    logger.info("hypotheses for %s: %s", profile.kind,
                ", ".join(f"{rec.hypothesis}={'ok' if rec.passed else 'FAIL'}" for rec in records))
    return HypothesisReport(kind=profile.kind, records=records, beta1=beta1, holder_bound=fine)


def default_grid(profile: WarpingProfile, points: int = 400) -> np.ndarray:
    """Strictly increasing sample of (0, r_bar)."""
    return np.linspace(0.0, profile.r_bar, points + 2)[1:-1]
