"""P1 finite elements for the Helmholtz and heat equations on a ``MeshGrid``.

The complex Helmholtz system with impedance condition
``dp/dn - i kappa p = 0`` on the absorbing edges is stored in its real
2x2 block form ``[[K, C], [-C, K]]`` acting on ``(Re p, Im p)``, where
``K = stiffness - k^2 mass`` and ``C = kappa * boundary_mass``.  The adjoint
problem (``+i kappa``) is the transposed block system, so one LU
factorisation serves both directions.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .mesh import MeshGrid, triangle_areas

logger = logging.getLogger(__name__)


class FEMError(RuntimeError):
    pass


def stiffness_matrix(mesh: MeshGrid) -> sparse.csr_matrix:
    p = mesh.nodes[mesh.triangles]
    area = triangle_areas(mesh)
    # gradients of the barycentric coordinates, exact for straight triangles
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (
        4.0 * area[:, None, None]
    )
    return _scatter(mesh.triangles, local, mesh.n_nodes)


def mass_matrix(mesh: MeshGrid) -> sparse.csr_matrix:
    area = triangle_areas(mesh)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = area[:, None, None] * ref[None]
    return _scatter(mesh.triangles, local, mesh.n_nodes)


def boundary_mass_matrix(mesh: MeshGrid, tag: str = "Z") -> sparse.csr_matrix:
    edges = mesh.edges_with_tag(tag)
    n = mesh.n_nodes
    if edges.size == 0:
        return sparse.csr_matrix((n, n))
    d = mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]]
    length = np.hypot(d[:, 0], d[:, 1])
    ref = (np.ones((2, 2)) + np.eye(2)) / 6.0
    local = length[:, None, None] * ref[None]
    return _scatter(edges, local, n)


def _scatter(cells: np.ndarray, local: np.ndarray, n: int) -> sparse.csr_matrix:
    k = cells.shape[1]
    rows = np.repeat(cells, k, axis=1).ravel()
    cols = np.tile(cells, (1, k)).ravel()
    return sparse.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


@dataclass
class FrequencySystem:
    """Assembled Helmholtz operator for one wavenumber."""

    mesh: MeshGrid
    k: float
    kappa: float
    block_matrix: sparse.csc_matrix
    _lu: object = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    def factorize(self):
        with self._lock:
            if self._lu is None:
                try:
                    self._lu = spla.splu(self.block_matrix, permc_spec="COLAMD")
                except RuntimeError as exc:
                    raise FEMError(
                        f"factorisation failed for k={self.k}, kappa={self.kappa}: {exc}"
                    ) from exc
                logger.debug(
                    "factorised k=%.6g: %d unknowns, fill %d",
                    self.k,
                    self.block_matrix.shape[0],
                    self._lu.L.nnz + self._lu.U.nnz,
                )
        return self._lu

    def release(self) -> None:
        """Drop the cached factorisation."""
        with self._lock:
            self._lu = None

    def _solve(self, rhs: np.ndarray, trans: str) -> np.ndarray:
        lu = self.factorize()
        n = self.n_nodes
        real = np.concatenate([rhs.real, rhs.imag], axis=0)
        sol = lu.solve(np.ascontiguousarray(real), trans=trans)
        return sol[:n] + 1j * sol[n:]

    def solve_rhs(self, rhs: np.ndarray, adjoint: bool = False) -> np.ndarray:
        """Solve for complex nodal load vector(s) ``rhs`` of shape (N_h,) or (N_h, r)."""
        rhs = np.asarray(rhs, dtype=complex)
        if rhs.shape[0] != self.n_nodes:
            raise FEMError(f"load vector has {rhs.shape[0]} rows, expected {self.n_nodes}")
        if not np.any(rhs):
            return np.zeros_like(rhs)
        return self._solve(rhs, "T" if adjoint else "N")


def assemble(mesh: MeshGrid, k: float, kappa: float | None = None) -> FrequencySystem:
    """Assemble the block Helmholtz system; ``kappa`` defaults to ``k``."""
    if kappa is None:
        kappa = k
    if not k > 0:
        raise FEMError(f"wavenumber must be positive, got {k}")
    if not kappa > 0:
        raise FEMError(f"impedance coefficient must be positive, got {kappa}")
    if mesh.edges_with_tag("Z").size == 0:
        raise FEMError("mesh has no absorbing (Z) edge; the Helmholtz problem may be singular")
    K = stiffness_matrix(mesh) - k**2 * mass_matrix(mesh)
    C = kappa * boundary_mass_matrix(mesh, "Z")
    block = sparse.bmat([[K, C], [-C, K]], format="csc")
    return FrequencySystem(mesh=mesh, k=float(k), kappa=float(kappa), block_matrix=block)


def point_loads(n_nodes: int, loads) -> np.ndarray:
    """Nodal load vector of a sum of Dirac masses ``[(node, amplitude), ...]``.

    For P1 elements the Dirac at a node is the canonical unit vector there.
    """
    rhs = np.zeros(n_nodes, dtype=complex)
    for node, amp in loads:
        node = int(node)
        if not 0 <= node < n_nodes:
            raise FEMError(f"node id {node} out of range")
        rhs[node] += amp
    return rhs


def solve_point_sources(system: FrequencySystem, loads) -> np.ndarray:
    """Pressure field generated by point sources ``[(node, amplitude), ...]``."""
    return system.solve_rhs(point_loads(system.n_nodes, loads))


def solve_adjoint(system: FrequencySystem, loads) -> np.ndarray:
    """Adjoint field (impedance sign flipped) for point loads."""
    return system.solve_rhs(point_loads(system.n_nodes, loads), adjoint=True)


class HeatSemigroup:
    """Implicit Euler approximation of the Neumann heat flow up to ``T = sigma^2/2``.

    Factorisations are cached per ``(sigma, steps)``.
    """

    def __init__(self, mesh: MeshGrid):
        self.mesh = mesh
        self.mass = mass_matrix(mesh).tocsc()
        self.stiffness = stiffness_matrix(mesh).tocsc()
        self._mass_lu = None
        self._step_lu = {}

    def project(self, rhs: np.ndarray) -> np.ndarray:
        if self._mass_lu is None:
            self._mass_lu = spla.splu(self.mass)
        return self._mass_lu.solve(rhs)

    def _stepper(self, dt: float):
        if dt not in self._step_lu:
            self._step_lu[dt] = spla.splu((self.mass + dt * self.stiffness).tocsc())
        return self._step_lu[dt]

    def apply(self, rhs: np.ndarray, sigma: float, steps: int = 5, history: bool = False):
        """Evolve the L2 projection of the nodal load ``rhs`` (complex, (N_h,) or (N_h, r))."""
        if sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {sigma}")
        if steps < 1:
            raise ValueError(f"steps must be positive, got {steps}")
        rhs = np.asarray(rhs, dtype=complex)
        flat = rhs.ndim == 1
        rhs2 = rhs[:, None] if flat else rhs
        r = rhs2.shape[1]
        u = self.project(np.concatenate([rhs2.real, rhs2.imag], axis=1))
        states = [u]
        T = 0.5 * sigma**2
        if T > 0:
            lu = self._stepper(T / steps)
            for _ in range(steps):
                u = lu.solve(self.mass @ u)
                states.append(u)

        def to_complex(v):
            out = v[:, :r] + 1j * v[:, r:]
            return out[:, 0] if flat else out

        if history:
            return [to_complex(v) for v in states]
        return to_complex(u)

    def integral(self, field: np.ndarray) -> np.ndarray:
        """Mass-weighted integral of nodal values."""
        return np.ones(self.mesh.n_nodes) @ (self.mass @ field)


def heat_semigroup(mesh: MeshGrid, loads, sigma: float, steps: int = 5) -> np.ndarray:
    """Heat flow of a Dirac load sequence ``[(node, amplitude), ...]``."""
    return HeatSemigroup(mesh).apply(point_loads(mesh.n_nodes, loads), sigma, steps)
