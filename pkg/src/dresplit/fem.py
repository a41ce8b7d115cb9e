"""P1 finite elements on a uniformly triangulated periodic unit square.

The mesh cuts [0,1)^2 into nx * nx squares, each split along the
(+1,+1) diagonal into two triangles. Opposite edges are identified, so
there are exactly nx^2 nodes and 2 nx^2 triangles, and every node belongs
to six triangles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .linalg import cholesky, symmetrize

__all__ = [
    "PeriodicMesh",
    "GalerkinDRE",
    "build_mesh",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_load",
    "assemble_half_domain",
    "build_problem",
    "get_field",
    "FIELD_CATALOG",
]

# Degree-4 exact 6-point triangle rule (barycentric points / weights,
# weights normalized to sum to 1).
_QW1, _QA1 = 0.223381589678011, 0.445948490915965
_QW2, _QA2 = 0.109951743655322, 0.091576213509771
_QUAD_BARY = np.array(
    [
        [1 - 2 * _QA1, _QA1, _QA1],
        [_QA1, 1 - 2 * _QA1, _QA1],
        [_QA1, _QA1, 1 - 2 * _QA1],
        [1 - 2 * _QA2, _QA2, _QA2],
        [_QA2, 1 - 2 * _QA2, _QA2],
        [_QA2, _QA2, 1 - 2 * _QA2],
    ]
)
_QUAD_W = np.array([_QW1, _QW1, _QW1, _QW2, _QW2, _QW2])


@dataclass(frozen=True)
class PeriodicMesh:
    nx: int
    h: float
    nodes: np.ndarray  # (N, 2) coordinates in [0,1)^2
    triangles: np.ndarray  # (2 nx^2, 3) periodic node indices
    tri_coords: np.ndarray  # (2 nx^2, 3, 2) unwrapped vertex coordinates

    @property
    def n_nodes(self) -> int:
        return self.nx * self.nx

    @property
    def n_triangles(self) -> int:
        return 2 * self.nx * self.nx


def build_mesh(nx: int) -> PeriodicMesh:
    """Uniform periodic triangulation with nx squares per direction.

    nx must be even and at least 2 so that the line x = 1/2 lies on the
    grid (the half-domain observation functional is then exact).
    """
    if nx < 2 or nx % 2 != 0:
        raise ValueError(f"nx must be even and >= 2, got {nx}")
    h = 1.0 / nx
    ii, jj = np.meshgrid(np.arange(nx), np.arange(nx), indexing="ij")
    # node index = j * nx + i, coordinates (i h, j h)
    nodes = np.column_stack([ii.T.ravel() * h, jj.T.ravel() * h])

    triangles = np.empty((2 * nx * nx, 3), dtype=int)
    tri_coords = np.empty((2 * nx * nx, 3, 2))
    k = 0
    for j in range(nx):
        for i in range(nx):
            ip, jp = (i + 1) % nx, (j + 1) % nx
            g00 = j * nx + i
            g10 = j * nx + ip
            g01 = jp * nx + i
            g11 = jp * nx + ip
            x0, y0 = i * h, j * h
            triangles[k] = (g00, g10, g11)
            tri_coords[k] = ((x0, y0), (x0 + h, y0), (x0 + h, y0 + h))
            triangles[k + 1] = (g00, g11, g01)
            tri_coords[k + 1] = ((x0, y0), (x0 + h, y0 + h), (x0, y0 + h))
            k += 2
    return PeriodicMesh(nx=nx, h=h, nodes=nodes, triangles=triangles, tri_coords=tri_coords)


def _tri_area(coords: np.ndarray) -> float:
    (x0, y0), (x1, y1), (x2, y2) = coords
    return 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))


# Local P1 mass matrix divided by the triangle area.
_LOCAL_MASS = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def assemble_mass(mesh: PeriodicMesh) -> np.ndarray:
    """Mass matrix M_ij = int phi_i phi_j with periodic identification."""
    n = mesh.n_nodes
    m = np.zeros((n, n))
    for tri, coords in zip(mesh.triangles, mesh.tri_coords):
        local = _tri_area(coords) * _LOCAL_MASS
        m[np.ix_(tri, tri)] += local
    return symmetrize(m)


def assemble_stiffness(mesh: PeriodicMesh) -> np.ndarray:
    """Stiffness kernel A_ij = -int grad phi_i . grad phi_j (neg. semidef.)."""
    n = mesh.n_nodes
    a = np.zeros((n, n))
    for tri, coords in zip(mesh.triangles, mesh.tri_coords):
        area = _tri_area(coords)
        x, y = coords[:, 0], coords[:, 1]
        b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]])
        c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]])
        local = (np.outer(b, b) + np.outer(c, c)) / (4.0 * area)
        a[np.ix_(tri, tri)] -= local
    return symmetrize(a)


def assemble_load(mesh: PeriodicMesh, f: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """Load vector l_j = int f phi_j via the degree-4 6-point rule."""
    ell = np.zeros(mesh.n_nodes)
    # physical quadrature points per triangle, shape (ntri, 6, 2)
    pts = np.einsum("qk,tkd->tqd", _QUAD_BARY, mesh.tri_coords)
    vals = f(pts[:, :, 0], pts[:, :, 1])
    vals = np.broadcast_to(np.asarray(vals, dtype=float), pts.shape[:2])
    if not np.isfinite(vals).all():
        raise ValueError("f evaluated to non-finite values at quadrature points")
    areas = np.array([_tri_area(c) for c in mesh.tri_coords])
    # weight * basis value (= barycentric coordinate) per point and vertex
    contrib = np.einsum("t,q,tq,qk->tk", areas, _QUAD_W, vals, _QUAD_BARY)
    for tri, local in zip(mesh.triangles, contrib):
        ell[tri] += local
    return ell


def assemble_half_domain(mesh: PeriodicMesh) -> np.ndarray:
    """Load of the indicator of (1/2,1)x(0,1); exact per triangle.

    Every triangle lies wholly inside or outside the half-domain because
    nx is even, and int_T phi_j = |T|/3 for each of its vertices.
    """
    ell = np.zeros(mesh.n_nodes)
    for tri, coords in zip(mesh.triangles, mesh.tri_coords):
        if coords[:, 0].min() >= 0.5 - 1e-12:
            ell[tri] += _tri_area(coords) / 3.0
    return ell


def _field_default_xi(amplitude: float):
    def f(x, y):
        return amplitude * 0.5 * (1 + np.cos(2 * np.pi * x)) * (1 + np.cos(2 * np.pi * y))

    return f


def _field_default_zeta(amplitude: float):
    def f(x, y):
        return amplitude * (np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y) + 1.0)

    return f


def _field_gaussian_bump(amplitude: float):
    def f(x, y):
        return amplitude * np.exp(-(((x - 0.5) ** 2 + (y - 0.5) ** 2)) / 0.02)

    return f


def _field_constant(amplitude: float):
    def f(x, y):
        return amplitude * np.ones_like(np.asarray(x, dtype=float))

    return f


FIELD_CATALOG = {
    "default-xi": _field_default_xi,
    "default-zeta": _field_default_zeta,
    "gaussian-bump": _field_gaussian_bump,
    "constant": _field_constant,
}


def get_field(name: str, amplitude: float = 1.0):
    """Look up a named scalar field from the built-in catalog."""
    try:
        factory = FIELD_CATALOG[name]
    except KeyError:
        known = ", ".join(sorted(FIELD_CATALOG))
        raise KeyError(f"unknown field {name!r}; known fields: {known}") from None
    return factory(amplitude)


@dataclass(frozen=True)
class GalerkinDRE:
    """Assembled Galerkin data of the matrix-valued DRE.

    Kernel-coordinate convention: an operator is stored as a symmetric
    kernel P acting on coefficient vectors through the mass matrix,
    c -> P M c. In these coordinates the DRE reads

        P' = Ahat P + P Ahat^T + q q^T - P (l l^T) P,

    with Ahat = M^{-1} A - shift * I, q = M^{-1} l_E and l = l_xi.
    """

    mass: np.ndarray
    stiffness: np.ndarray
    ell_xi: np.ndarray
    q_vec: np.ndarray
    z_vec: np.ndarray
    shift: float = 0.0
    horizon: float = 1.0
    nx: int | None = None
    mass_chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.shift < 0:
            raise ValueError("shift must be nonnegative")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        object.__setattr__(self, "mass_chol", cholesky(self.mass))

    @property
    def dim(self) -> int:
        return self.mass.shape[0]

    def generator(self) -> np.ndarray:
        """Kernel-coordinate generator Ahat = M^{-1} A - shift * I."""
        ahat = scipy.linalg.cho_solve((self.mass_chol, True), self.stiffness)
        if self.shift:
            ahat = ahat - self.shift * np.eye(self.dim)
        return ahat

    def q_hat(self) -> np.ndarray:
        return np.outer(self.q_vec, self.q_vec)

    def s_hat(self) -> np.ndarray:
        return np.outer(self.ell_xi, self.ell_xi)

    def initial_kernel(self) -> np.ndarray:
        return np.outer(self.z_vec, self.z_vec)


def build_problem(
    nx: int,
    xi="default-xi",
    zeta="default-zeta",
    lambda_shift: float = 0.0,
    horizon: float = 1.0,
    xi_amplitude: float = 1.0,
    zeta_amplitude: float = 1.0,
) -> GalerkinDRE:
    """Assemble the periodic-square LQR problem on an nx * nx grid.

    ``xi`` and ``zeta`` may be catalog names or callables (x, y) -> value.
    """
    xi_f = get_field(xi, xi_amplitude) if isinstance(xi, str) else xi
    zeta_f = get_field(zeta, zeta_amplitude) if isinstance(zeta, str) else zeta

    mesh = build_mesh(nx)
    mass = assemble_mass(mesh)
    stiff = assemble_stiffness(mesh)
    ell_xi = assemble_load(mesh, xi_f)
    ell_e = assemble_half_domain(mesh)
    ell_zeta = assemble_load(mesh, zeta_f)

    chol = cholesky(mass)
    q_vec = scipy.linalg.cho_solve((chol, True), ell_e)
    z_vec = scipy.linalg.cho_solve((chol, True), ell_zeta)
    return GalerkinDRE(
        mass=mass,
        stiffness=stiff,
        ell_xi=ell_xi,
        q_vec=q_vec,
        z_vec=z_vec,
        shift=lambda_shift,
        horizon=horizon,
        nx=nx,
    )
