# core/meridian_mesh.py
"""
Quadratic (P2) triangle meshes of the meridian region {0 <= r <= u(s), 0 <= s <= pi}.
- build_mesh(domain, h): structured mesh of the reference rectangle (xi, s) in
  [0,1] x [0,pi], mapped by r = xi * u(s); the boundary M and the inner slice are
  rows of the node lattice, so the geometry is exact.
- MeridianMesh: node lattice, elements, a 7-point degree-5 rule per element with
  the axisymmetric weight w = theta^n sin^{n-1}(s) |S^{n-1}| folded in.
- stiffness / mass / load assembly (scipy.sparse COO -> CSR), integrate_volume.
Lattice numbering: node (I, J) -> J * (2*n_xi + 1) + I, I along xi, J along s.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from .errors import MeshError
from .meridian_domain import MeridianDomain, _sphere_density

logger = logging.getLogger(__name__)

# ====== reference element ======
_SQ15 = math.sqrt(15.0)
_A, _B = (6 - _SQ15) / 21, (9 + 2 * _SQ15) / 21
_C, _D = (6 + _SQ15) / 21, (9 - 2 * _SQ15) / 21
QUAD_POINTS = np.array([
    [1 / 3, 1 / 3],
    [_A, _A], [_B, _A], [_A, _B],
    [_C, _C], [_D, _C], [_C, _D],
])
QUAD_WEIGHTS = 0.5 * np.array([9 / 40] + [(155 - _SQ15) / 1200] * 3 + [(155 + _SQ15) / 1200] * 3)


def p2_basis(x: np.ndarray, y: np.ndarray):
    """Values (..., 6) and reference gradients (..., 6, 2); order v0 v1 v2 m01 m12 m20."""
    l1, l2, l3 = 1.0 - x - y, x, y
    vals = np.stack([l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), l3 * (2 * l3 - 1),
                     4 * l1 * l2, 4 * l2 * l3, 4 * l3 * l1], axis=-1)
    gx = np.stack([-(4 * l1 - 1), 4 * l2 - 1, 0 * x, 4 * (l1 - l2), 4 * l3, -4 * l3], axis=-1)
    gy = np.stack([-(4 * l1 - 1), 0 * x, 4 * l3 - 1, -4 * l2, 4 * l2, 4 * (l1 - l3)], axis=-1)
    return vals, np.stack([gx, gy], axis=-1)


BASIS, BASIS_GRAD = p2_basis(QUAD_POINTS[:, 0], QUAD_POINTS[:, 1])


@dataclass
class MeridianMesh:
    domain: MeridianDomain
    h: float
    n_xi: int
    n_s: int
    xi: np.ndarray          # node reference coordinates
    s: np.ndarray
    r: np.ndarray           # node physical radius xi * u(s)
    elements: np.ndarray    # (E, 6)
    origin: np.ndarray      # (E, 2) reference origin of each element map
    sign: np.ndarray        # (E,) +1 lower, -1 upper triangle
    dof: np.ndarray         # node -> dof (the collapsed r = 0 row shares one dof)
    n_dof: int

    # ---------------- lattice helpers
    @property
    def shape(self):
        """Lattice shape (rows along s, columns along xi)."""
        return 2 * self.n_s + 1, 2 * self.n_xi + 1

    @property
    def d_xi(self) -> float:
        return 1.0 / self.n_xi

    @property
    def d_s(self) -> float:
        return math.pi / self.n_s

    def node(self, I, J):
        return np.asarray(J) * (2 * self.n_xi + 1) + np.asarray(I)

    def lattice(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)

    @property
    def boundary_nodes(self) -> np.ndarray:
        """Nodes on M (xi = 1), ordered by s."""
        return self.node(2 * self.n_xi, np.arange(2 * self.n_s + 1))

    @property
    def inner_nodes(self) -> np.ndarray:
        """Nodes on xi = 0 (the inner slice, or the origin for null-homologous domains)."""
        return self.node(0, np.arange(2 * self.n_s + 1))

    @property
    def boundary_s(self) -> np.ndarray:
        return self.s[self.boundary_nodes]

    def element_xi_range(self):
        xi0 = self.origin[:, 0]
        return np.where(self.sign > 0, xi0, xi0 - self.d_xi), np.where(self.sign > 0, xi0 + self.d_xi, xi0)

    # ---------------- quadrature data
    @cached_property
    def quad(self) -> dict:
        """Per-element quadrature data, arrays of shape (E, Q)."""
        profile = self.domain.profile
        n = profile.n
        sx = self.sign[:, None]
        xi_q = self.origin[:, 0:1] + sx * QUAD_POINTS[None, :, 0] * self.d_xi
        s_q = self.origin[:, 1:2] + sx * QUAD_POINTS[None, :, 1] * self.d_s
        u, du, d2u = self.domain.graph(s_q)
        r_q = xi_q * u
        th = profile.eval(r_q, 0)
        weight = (QUAD_WEIGHTS[None, :] * self.d_xi * self.d_s) * th**n * _sphere_density(n, s_q) * u
        # reference (xi, s) gradients of the basis, then physical (r, s) coordinate gradients
        g_xi = BASIS_GRAD[None, :, :, 0] / (sx[:, :, None] * self.d_xi)
        g_s = BASIS_GRAD[None, :, :, 1] / (sx[:, :, None] * self.d_s)
        g_r = g_xi / u[:, :, None]
        g_sp = g_s - (xi_q * du / u)[:, :, None] * g_xi
        return {"xi": xi_q, "s": s_q, "r": r_q, "u": u, "du": du, "d2u": d2u,
                "theta": th, "dtheta": profile.eval(r_q, 1), "W": weight,
                "grad_r": g_r, "grad_s": g_sp}

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    # ---------------- interpolation / integration
    def at_quadrature(self, nodal: np.ndarray) -> np.ndarray:
        nodal = np.asarray(nodal, dtype=float)
        if nodal.shape != self.r.shape:
            raise ValueError(f"expected {self.r.shape} nodal values, got {nodal.shape}")
        return np.einsum("qi,ei->eq", BASIS, nodal[self.elements])

    def integrate_q(self, values_q: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
        W = self.quad["W"]
        if mask is not None:
            W = W * mask
        return float(np.sum(W * values_q))

    def nodal_from_dofs(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[self.dof]

    # ---------------- assembly
    def _assemble(self, local: np.ndarray) -> csr_matrix:
        d = self.dof[self.elements]
        rows = np.broadcast_to(d[:, :, None], local.shape).ravel()
        cols = np.broadcast_to(d[:, None, :], local.shape).ravel()
        return coo_matrix((local.ravel(), (rows, cols)), shape=(self.n_dof, self.n_dof)).tocsr()

    def stiffness(self) -> csr_matrix:
        """A_ij = int w <grad N_i, grad N_j>_g over Omega."""
        q = self.quad
        inv_th2 = 1.0 / q["theta"] ** 2
        local = (np.einsum("eq,eqi,eqj->eij", q["W"], q["grad_r"], q["grad_r"])
                 + np.einsum("eq,eqi,eqj->eij", q["W"] * inv_th2, q["grad_s"], q["grad_s"]))
        return self._assemble(local)

    def mass(self, coefficient_q: Optional[np.ndarray] = None) -> csr_matrix:
        W = self.quad["W"] if coefficient_q is None else self.quad["W"] * coefficient_q
        local = np.einsum("eq,qi,qj->eij", W, BASIS, BASIS)
        return self._assemble(local)

    def load(self, values_q: Optional[np.ndarray] = None) -> np.ndarray:
        W = self.quad["W"] if values_q is None else self.quad["W"] * values_q
        local = np.einsum("eq,qi->ei", W, BASIS)
        return np.bincount(self.dof[self.elements].ravel(), weights=local.ravel(), minlength=self.n_dof)


def build_mesh(domain: MeridianDomain, h: float) -> MeridianMesh:
    """Structured P2 mesh of the meridian region with cells of size about h."""
    if not h > 0:
        raise MeshError(f"mesh size must be positive, got {h}")
    u_min, u_max = domain.extent()
    if h >= u_min:
        raise MeshError(f"h={h} is not smaller than the domain thickness {u_min:.4g}")
    n_xi = max(2, math.ceil(u_max / h))
    n_s = max(4, math.ceil(math.pi / h))
    nI, nJ = 2 * n_xi + 1, 2 * n_s + 1
    I, J = np.meshgrid(np.arange(nI), np.arange(nJ))
    xi = (I / (2 * n_xi)).ravel()
    s = (J * math.pi / (2 * n_s)).ravel()
    r = xi * domain.u(s)

    ci, cj = np.meshgrid(np.arange(n_xi), np.arange(n_s))
    ci, cj = ci.ravel(), cj.ravel()

    def idx(a, b):
        return b * nI + a

    lower = np.stack([idx(2 * ci, 2 * cj), idx(2 * ci + 2, 2 * cj), idx(2 * ci, 2 * cj + 2),
                      idx(2 * ci + 1, 2 * cj), idx(2 * ci + 1, 2 * cj + 1), idx(2 * ci, 2 * cj + 1)], axis=1)
    upper = np.stack([idx(2 * ci + 2, 2 * cj + 2), idx(2 * ci, 2 * cj + 2), idx(2 * ci + 2, 2 * cj),
                      idx(2 * ci + 1, 2 * cj + 2), idx(2 * ci + 1, 2 * cj + 1), idx(2 * ci + 2, 2 * cj + 1)], axis=1)
    d_xi, d_s = 1.0 / n_xi, math.pi / n_s
    origin = np.concatenate([np.stack([ci * d_xi, cj * d_s], axis=1),
                             np.stack([(ci + 1) * d_xi, (cj + 1) * d_s], axis=1)])
    sign = np.concatenate([np.ones(len(ci)), -np.ones(len(ci))])
    elements = np.concatenate([lower, upper])

    dof = np.arange(nI * nJ)
    if not domain.is_homologous:
        # xi = 0 collapses to the origin: one shared unknown
        axis_nodes = idx(0, np.arange(nJ))
        keep = np.ones(nI * nJ, dtype=bool)
        keep[axis_nodes[1:]] = False
        renum = np.cumsum(keep) - 1
        dof = renum.copy()
        dof[axis_nodes] = renum[axis_nodes[0]]
    n_dof = int(dof.max()) + 1
    mesh = MeridianMesh(domain=domain, h=h, n_xi=n_xi, n_s=n_s, xi=xi, s=s, r=r,
                        elements=elements, origin=origin, sign=sign, dof=dof, n_dof=n_dof)
    logger.info("mesh h=%.4g: %d x %d cells, %d elements, %d dofs", h, n_xi, n_s, len(elements), n_dof)
    return mesh


def integrate_volume(mesh: MeridianMesh, nodal_values) -> float:
    """int_Omega of a P2 nodal field."""
    return mesh.integrate_q(mesh.at_quadrature(nodal_values))
