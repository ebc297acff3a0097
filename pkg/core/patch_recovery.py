# core/patch_recovery.py
"""
Patch recovery of first and second derivatives of P2 fields on the meridian lattice.
- recover_reference(mesh, nodal): least-squares quartic on the 5 x 5 node window
  around each lattice node (the window shifts inward at the edges) giving
  F_xi, F_s, F_xixi, F_xis, F_ss in reference coordinates.
- ambient_derivatives(...): chain rule through r = xi*u(s), then the orthonormal
  ambient Hessian: meridian block (rr, rs, ss) plus the (n-1)-fold hoop eigenvalue.
- recover(mesh, nodal): RecoveredField with nodal and quadrature-point values.
Quadrature-point values are interpolated from the recovered reference partials and
converted there, so nothing is evaluated on r = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Dict, Tuple

import numpy as np

from .errors import RecoveryError
from .warp_profiles import WarpingProfile

WINDOW = 5
_EXPONENTS = [(p, t - p) for t in range(5) for p in range(t, -1, -1)]
_COL = {e: k for k, e in enumerate(_EXPONENTS)}
_PATTERNS: Dict[Tuple[int, int], np.ndarray] = {}


def _pattern(pI: int, pJ: int) -> np.ndarray:
    """pinv of the quartic design matrix for a node at offset (pI, pJ) inside its window."""
    key = (pI, pJ)
    if key not in _PATTERNS:
        dI, dJ = np.meshgrid(np.arange(WINDOW) - pI, np.arange(WINDOW) - pJ)
        x, y = dI.ravel().astype(float), dJ.ravel().astype(float)
        design = np.stack([x**p * y**q for p, q in _EXPONENTS], axis=1)
        _PATTERNS[key] = np.linalg.pinv(design)
    return _PATTERNS[key]


@dataclass(frozen=True)
class AmbientDerivatives:
    """Ambient derivatives in the orthonormal frame (e_r, e_s, hoop)."""
    f_r: np.ndarray
    f_s: np.ndarray          # coordinate derivative d f / d s
    theta: np.ndarray
    dtheta: np.ndarray
    H_rr: np.ndarray
    H_rs: np.ndarray
    H_ss: np.ndarray
    H_hoop: np.ndarray
    n: int

    @property
    def grad_s(self) -> np.ndarray:
        """Orthonormal e_s component f_s / theta."""
        return self.f_s / self.theta

    @property
    def grad_norm2(self) -> np.ndarray:
        return self.f_r**2 + self.grad_s**2

    @property
    def laplacian(self) -> np.ndarray:
        return self.H_rr + self.H_ss + (self.n - 1) * self.H_hoop

    @property
    def hess_norm2(self) -> np.ndarray:
        return self.H_rr**2 + 2 * self.H_rs**2 + self.H_ss**2 + (self.n - 1) * self.H_hoop**2

    @property
    def traceless_norm2(self) -> np.ndarray:
        """|Hess f - (Delta f)/(n+1) g|^2 with the (n+1)-dimensional trace."""
        return self.hess_norm2 - self.laplacian**2 / (self.n + 1)

    def hessian_nn(self, nu_r, nu_s, nodes=slice(None)) -> np.ndarray:
        """Hess f(nu, nu) at the selected nodes."""
        return (self.H_rr[nodes] * nu_r**2 + 2 * self.H_rs[nodes] * nu_r * nu_s
                + self.H_ss[nodes] * nu_s**2)


def ambient_derivatives(profile: WarpingProfile, xi, s, u, du, d2u,
                        Fx, Fs, Fxx, Fxs, Fss) -> AmbientDerivatives:
    """Convert reference partials of F(xi, s) = f(xi*u(s), s) to ambient derivatives."""
    a = 1.0 / u
    b = -xi * du / u
    da = -du / u**2
    db = -xi * d2u / u + 2.0 * xi * du**2 / u**2
    f_r = a * Fx
    f_s = Fs + b * Fx
    f_rr = a * a * Fxx
    f_rs = da * Fx + a * (Fxs + b * Fxx)
    f_ss = Fss + 2.0 * b * Fxs + db * Fx + b * b * Fxx
    r = xi * u
    th = profile.eval(r, 0)
    v = profile.eval(r, 1)
    axis = (s < 1e-12) | (s > np.pi - 1e-12)
    with np.errstate(divide="ignore", invalid="ignore"):
        cot_term = np.where(axis, f_ss, f_s / np.tan(np.where(axis, 1.0, s)))
        H_rs = (f_rs - v * f_s / th) / th
        H_ss = (f_ss + th * v * f_r) / th**2
        H_hoop = (v / th) * f_r + cot_term / th**2
    return AmbientDerivatives(f_r=f_r, f_s=f_s, theta=th, dtheta=v, H_rr=f_rr, H_rs=H_rs,
                              H_ss=H_ss, H_hoop=H_hoop, n=profile.n)


def recover_reference(mesh, nodal: np.ndarray) -> Dict[str, np.ndarray]:
    """Nodal reference partials of a lattice field by windowed quartic least squares."""
    nJ, nI = mesh.shape
    if nI < WINDOW or nJ < WINDOW:
        raise RecoveryError(f"lattice {nI} x {nJ} is smaller than the {WINDOW} x {WINDOW} recovery window")
    F = np.asarray(nodal, dtype=float).reshape(nJ, nI)
    I, J = np.meshgrid(np.arange(nI), np.arange(nJ))
    I0 = np.clip(I - 2, 0, nI - WINDOW)
    J0 = np.clip(J - 2, 0, nJ - WINDOW)
    pI, pJ = I - I0, J - J0
    coef = np.empty((nJ, nI, len(_EXPONENTS)))
    dI, dJ = np.meshgrid(np.arange(WINDOW), np.arange(WINDOW))
    for a in range(WINDOW):
        for b in range(WINDOW):
            sel = (pI == a) & (pJ == b)
            if not np.any(sel):
                continue
            rows = J0[sel][:, None] + dJ.ravel()[None, :]
            cols = I0[sel][:, None] + dI.ravel()[None, :]
            coef[sel] = F[rows, cols] @ _pattern(a, b).T
    hx, hs = mesh.d_xi / 2.0, mesh.d_s / 2.0
    out = {
        "F_xi": coef[..., _COL[(1, 0)]] / hx,
        "F_s": coef[..., _COL[(0, 1)]] / hs,
        "F_xixi": 2.0 * coef[..., _COL[(2, 0)]] / hx**2,
        "F_xis": coef[..., _COL[(1, 1)]] / (hx * hs),
        "F_ss": 2.0 * coef[..., _COL[(0, 2)]] / hs**2,
    }
    return {k: v.ravel() for k, v in out.items()}


@dataclass(frozen=True)
class RecoveredField:
    reference: Dict[str, np.ndarray]
    nodal: AmbientDerivatives
    quad: AmbientDerivatives


def _copy_next_column(mesh, arr: np.ndarray) -> np.ndarray:
    """The collapsed r = 0 column takes the values of the next lattice column."""
    lat = np.array(arr, dtype=float).reshape(mesh.shape)
    lat[:, 0] = lat[:, 1]
    return lat.ravel()


def recover(mesh, nodal: np.ndarray) -> RecoveredField:
    ref = recover_reference(mesh, nodal)
    profile = mesh.domain.profile
    u, du, d2u = mesh.domain.graph(mesh.s)
    node = ambient_derivatives(profile, mesh.xi, mesh.s, u, du, d2u,
                               ref["F_xi"], ref["F_s"], ref["F_xixi"], ref["F_xis"], ref["F_ss"])
    if profile.theta0 == 0.0:
        node = replace(node, **{f.name: _copy_next_column(mesh, getattr(node, f.name))
                                for f in fields(node) if f.name != "n"})
    q = mesh.quad
    Fq = {k: mesh.at_quadrature(v) for k, v in ref.items()}
    quad = ambient_derivatives(profile, q["xi"], q["s"], q["u"], q["du"], q["d2u"],
                               Fq["F_xi"], Fq["F_s"], Fq["F_xixi"], Fq["F_xis"], Fq["F_ss"])
    return RecoveredField(reference=ref, nodal=node, quad=quad)


def traceless_v_norm2(profile: WarpingProfile, r) -> np.ndarray:
    """|traceless(Hess V)/V|^2 with eigenvalues theta'''/theta' (radial) and theta''/theta (n-fold)."""
    qr = np.asarray(profile.third_over_first(r), dtype=float)
    qs = np.asarray(profile.second_over_theta(r), dtype=float)
    n = profile.n
    mean = (qr + n * qs) / (n + 1)
    return (qr - mean) ** 2 + n * (qs - mean) ** 2


def warped_traceless_norm2(d: AmbientDerivatives, f, profile: WarpingProfile, r) -> np.ndarray:
    """|traceless(Hess f) - traceless(Hess V/V) f|^2 at the sample points of d."""
    qr = profile.third_over_first(r)
    qs = profile.second_over_theta(r)
    m = (d.laplacian - profile.lap_v_over_v(r) * f) / (d.n + 1)
    return ((d.H_rr - qr * f - m) ** 2 + 2 * d.H_rs**2 + (d.H_ss - qs * f - m) ** 2
            + (d.n - 1) * (d.H_hoop - qs * f - m) ** 2)
