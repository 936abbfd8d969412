"""Optimality checks, dual certificates, reconstruction errors and noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import HeatSemigroup
from .measure import DiscreteMeasure, group_norm, weighted_norm
from .mesh import MeshGrid
from .observation import MixingMatrix, WeightTable, adjoint_field, forward


def _scaled_adjoint(u, mixing, weight, p_d):
    """``xi / w`` for the unweighted measure ``u`` and unweighted mixing."""
    if mixing.weighted:
        raise ValueError("pass the unweighted mixing matrix together with its weight")
    q = -(forward(mixing, u) - p_d)
    return adjoint_field(mixing, q) / weight.values


def optimality_residuals(u: DiscreteMeasure, mixing: MixingMatrix, weight: WeightTable,
                         alpha: float, p_d: np.ndarray) -> tuple[float, float]:
    """Relative violations of the first-order conditions of the weighted problem.

    Returns ``(r1, r2)`` with ``r1 = max(0, |xi/w|_inf - alpha) / alpha`` and
    ``r2 = max_j |alpha v_j/|v_j| - (xi/w)(x_j)| / alpha`` over the support,
    where ``v = w u``.
    """
    scaled = _scaled_adjoint(u, mixing, weight, p_d)
    r1 = max(0.0, float(np.linalg.norm(scaled, axis=0).max()) - alpha) / alpha
    if len(u) == 0:
        return r1, 0.0
    cols = mixing.columns(u.nodes)
    v = weight.values[:, cols].T * u.coeffs
    direction = v / np.linalg.norm(v, axis=1)[:, None]
    defect = np.linalg.norm(alpha * direction - scaled[:, cols].T, axis=1)
    return r1, float(defect.max()) / alpha


@dataclass
class CertificateField:
    values: np.ndarray  # (N, N_c) complex, xi / (alpha w)
    magnitude: np.ndarray  # (N_c,)
    controls: np.ndarray
    max_node: int
    max_value: float
    second_node: int | None
    second_value: float


def _local_maxima(mesh: MeshGrid, controls: np.ndarray, mag: np.ndarray) -> np.ndarray:
    full = np.full(mesh.n_nodes, -np.inf)
    full[controls] = mag
    grid = full.reshape(mesh.ny + 1, mesh.nx + 1)
    is_max = np.isfinite(grid)
    padded = np.pad(grid, 1, constant_values=-np.inf)
    c = padded[1:-1, 1:-1]
    for dy, dx in ((0, 1), (0, -1), (1, 0), (-1, 0), (1, 1), (-1, -1)):
        nb = padded[1 + dy:padded.shape[0] - 1 + dy, 1 + dx:padded.shape[1] - 1 + dx]
        is_max &= c >= nb
    return np.flatnonzero(is_max.ravel())


def certificate(u_alpha: DiscreteMeasure, mixing: MixingMatrix, weight: WeightTable,
                alpha: float, p_d: np.ndarray, mesh: MeshGrid | None = None) -> CertificateField:
    """Approximate dual certificate ``-S^*(S u_alpha - p_d) / (alpha w)``.

    With ``mesh`` given, the second value is the largest local maximum (over
    mesh neighbours) away from the global maximiser; otherwise the second
    largest node value.
    """
    values = _scaled_adjoint(u_alpha, mixing, weight, p_d) / alpha
    mag = np.linalg.norm(values, axis=0)
    j = int(np.argmax(mag))
    second_node, second_value = None, 0.0
    if mesh is not None:
        peaks = _local_maxima(mesh, mixing.controls, mag)
        peaks = peaks[peaks != mixing.controls[j]]
        if peaks.size:
            pm = mag[np.searchsorted(mixing.controls, peaks)]
            best = int(np.argmax(pm))
            second_node, second_value = int(peaks[best]), float(pm[best])
    elif mag.size > 1:
        order = np.argsort(mag)[::-1]
        second_node, second_value = int(mixing.controls[order[1]]), float(mag[order[1]])
    return CertificateField(values, mag, mixing.controls, int(mixing.controls[j]),
                            float(mag[j]), second_node, second_value)


def error_e1(u_star: DiscreteMeasure, u_dag: DiscreteMeasure, weight: WeightTable) -> float:
    """Relative difference of weighted norms."""
    ref = weighted_norm(u_star, weight)
    if ref == 0:
        raise ValueError("the exact source has zero norm")
    return (ref - weighted_norm(u_dag, weight)) / ref


def error_e2(u_star: DiscreteMeasure, u_dag: DiscreteMeasure, sigma: float, mesh: MeshGrid,
             heat: HeatSemigroup | None = None, steps: int = 5) -> float:
    """L1 norm of the heat-smoothed difference, relative to ``|u_star|``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    ref = group_norm(u_star)
    if ref == 0:
        raise ValueError("the exact source has zero norm")
    heat = heat or HeatSemigroup(mesh)
    diff = u_star - u_dag
    n_freq = u_star.n_freq
    rhs = np.zeros((mesh.n_nodes, n_freq), dtype=complex)
    if len(diff):
        np.add.at(rhs, diff.nodes, diff.coeffs)
    field = heat.apply(rhs, sigma, steps)
    return l1_norm(heat, field) / ref


def l1_norm(heat: HeatSemigroup, field: np.ndarray) -> float:
    """Consistent-mass quadrature of the nodal group magnitudes."""
    mag = np.linalg.norm(field, axis=1) if field.ndim == 2 else np.abs(field)
    return float(heat.integral(mag))


def add_noise(p_exact: np.ndarray, level: float, seed: int) -> np.ndarray:
    """Complex Gaussian perturbation with ``|f| / |p_exact| = level`` exactly."""
    if level < 0:
        raise ValueError(f"noise level must be nonnegative, got {level}")
    p_exact = np.asarray(p_exact, dtype=complex)
    if level == 0:
        return p_exact.copy()
    scale = np.linalg.norm(p_exact)
    if scale == 0:
        raise ValueError("cannot scale noise relative to zero data")
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(p_exact.shape) + 1j * rng.standard_normal(p_exact.shape)
    f *= level * scale / np.linalg.norm(f)
    return p_exact + f
