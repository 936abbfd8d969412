"""Conditional gradient solvers for sparse recovery on the control nodes.

All solvers minimise ``j(u) = 1/2 |Su - p_d|^2 + alpha sum_j |u_j|`` for a
(possibly column-weighted) mixing matrix.  Weighted problems are solved in
the rescaled variable ``v = w u`` using the weighted mixing matrix.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..measure import DiscreteMeasure, DROP_RTOL, group_norm
from ..observation import MixingMatrix, adjoint_field, forward
from .prune import prune_coeffs
from .subproblem import prox_coeff_step, solve_subproblem, spectral_norm_sq

logger = logging.getLogger(__name__)

ALGORITHMS = ("gcg", "spinat", "pdap")


@dataclass
class SolverSettings:
    alpha: float
    algorithm: str = "pdap"
    gap_tol: float = 1e-12
    subproblem_tol: float = 1e-12
    max_iter: int = 1000
    prune: bool = True
    deterministic: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if not (self.gap_tol > 0 and self.subproblem_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass
class TraceEntry:
    iteration: int
    objective: float
    gap: float
    support_size: int
    candidate: int


@dataclass
class SolveReport:
    trace: list
    measure: DiscreteMeasure
    adjoint: np.ndarray
    termination: str
    alpha: float
    algorithm: str
    subproblem_failures: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.termination != "max_iter"

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def objective(self) -> float:
        return self.trace[-1].objective

    @property
    def gap(self) -> float:
        return self.trace[-1].gap


def objective(u: DiscreteMeasure, mixing: MixingMatrix, p_d: np.ndarray, alpha: float) -> float:
    r = forward(mixing, u) - p_d
    return 0.5 * float(np.vdot(r, r).real) + alpha * group_norm(u)


def insert_candidate(xi: np.ndarray, controls: np.ndarray | None = None) -> tuple[int, float]:
    """Position of the largest ``|xi(x_j)|_{C^N}``; ties go to the smallest index.

    Returns the control node id when ``controls`` is given, else the column.
    """
    mag = np.linalg.norm(xi, axis=0)
    j = int(np.argmax(mag))
    node = int(controls[j]) if controls is not None else j
    return node, float(mag[j])


def duality_gap(u: DiscreteMeasure | tuple, xi: np.ndarray, alpha: float, p_d: np.ndarray,
                mixing: MixingMatrix | None = None) -> float:
    """Upper bound on ``j(u) - min j``.

    ``xi`` must be ``-S^*(Su - p_d)`` over all control nodes.  With
    ``M0 = |p_d|^2 / (2 alpha)`` bounding the norm of every minimiser,
    ``gap = alpha |u| - <xi, u> + M0 max(|xi|_inf - alpha, 0)``.
    """
    if isinstance(u, DiscreteMeasure):
        if mixing is None:
            raise ValueError("mixing is required to locate the support of u")
        cols, coeffs = mixing.columns(u.nodes), u.coeffs
    else:
        cols, coeffs = u
    return _gap(cols, coeffs, xi, alpha, float(np.vdot(p_d, p_d).real))


def _gap(cols, coeffs, xi, alpha, pd_norm2) -> float:
    norm_u = float(np.linalg.norm(coeffs, axis=1).sum()) if len(cols) else 0.0
    pair = float(np.real(np.vdot(xi[:, cols].T, coeffs))) if len(cols) else 0.0
    xmax = float(np.linalg.norm(xi, axis=0).max())
    m0 = pd_norm2 / (2.0 * alpha)
    return max(alpha * norm_u - pair + m0 * max(xmax - alpha, 0.0), 0.0)


def _observe(mixing, cols, coeffs):
    if len(cols) == 0:
        return np.zeros((mixing.n_freq, mixing.n_mics), dtype=complex)
    return np.einsum("nmj,jn->nm", mixing.matrix[:, :, cols], coeffs)


def _drop_small(cols, coeffs):
    if len(cols) == 0:
        return cols, coeffs
    mag = np.linalg.norm(coeffs, axis=1)
    keep = mag > DROP_RTOL * mag.max() if mag.max() > 0 else np.zeros(len(cols), bool)
    return cols[keep], coeffs[keep]


def _merge(cols, coeffs, j, value):
    hit = np.flatnonzero(cols == j)
    if hit.size:
        coeffs = coeffs.copy()
        coeffs[hit[0]] += value
        return cols, coeffs
    order = np.searchsorted(cols, j)
    return np.insert(cols, order, j), np.insert(coeffs, order, value, axis=0)


def gcg_step_size(r, d, alpha, theta_norm, u_norm) -> float:
    """Exact minimiser over ``[0, 1]`` of the convex surrogate along ``d``.

    ``phi(s) = 1/2 |r + s d|^2 + alpha ((1-s) |u| + s |theta|)``.
    """
    dd = float(np.vdot(d, d).real)
    if dd == 0:
        return 1.0 if alpha * (theta_norm - u_norm) < 0 else 0.0
    s = -(float(np.vdot(d, r).real) + alpha * (theta_norm - u_norm)) / dd
    return min(max(s, 0.0), 1.0)


def gcg_update(cols, coeffs, xi, j_hat, mixing, p_d, alpha, pd_norm2=None):
    """Insertion step with exact step size; returns ``(cols, coeffs, s)``.

    ``theta = (|p_d|^2 / (2 alpha^2)) xi(x_hat)`` when ``|xi|_inf > alpha``
    (``xi`` is the negative gradient ``-S^*(Su - p_d)``), else ``0``.
    """
    if pd_norm2 is None:
        pd_norm2 = float(np.vdot(p_d, p_d).real)
    xi_hat = xi[:, j_hat]
    if np.linalg.norm(xi_hat) <= alpha:
        theta = np.zeros_like(xi_hat)
    else:
        theta = (pd_norm2 / (2.0 * alpha**2)) * xi_hat
    r = _observe(mixing, cols, coeffs) - p_d
    s_theta = mixing.matrix[:, :, j_hat] * theta[:, None]
    d = s_theta - (r + p_d)
    u_norm = float(np.linalg.norm(coeffs, axis=1).sum()) if len(cols) else 0.0
    s = gcg_step_size(r, d, alpha, float(np.linalg.norm(theta)), u_norm)
    new_cols, new_coeffs = cols, (1.0 - s) * coeffs
    if s > 0 and np.any(theta):
        new_cols, new_coeffs = _merge(new_cols, new_coeffs, j_hat, s * theta)
    return new_cols, new_coeffs, s


def _initial(mixing, initial):
    if initial is None or len(initial) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, mixing.n_freq), dtype=complex)
    return mixing.columns(initial.nodes), initial.coeffs.copy()


def run(mixing: MixingMatrix, p_d: np.ndarray, settings: SolverSettings,
        initial: DiscreteMeasure | None = None) -> SolveReport:
    """Run GCG, SPINAT or PDAP from ``initial`` (default zero)."""
    p_d = np.asarray(p_d, dtype=complex)
    if p_d.shape != (mixing.n_freq, mixing.n_mics):
        raise ValueError(f"data has shape {p_d.shape}, expected {(mixing.n_freq, mixing.n_mics)}")
    alpha = settings.alpha
    algo = settings.algorithm
    bound = 2 * mixing.n_freq * mixing.n_mics
    pd_norm2 = float(np.vdot(p_d, p_d).real)
    cols, coeffs = _initial(mixing, initial)
    trace = []
    termination = "max_iter"
    failures = 0
    xi = None
    sub_ok, repeated = True, False
    for k in range(settings.max_iter):
        r = _observe(mixing, cols, coeffs) - p_d
        xi = adjoint_field(mixing, -r)
        mag = np.linalg.norm(xi, axis=0)
        j_hat = int(np.argmax(mag))
        norm_u = float(np.linalg.norm(coeffs, axis=1).sum()) if len(cols) else 0.0
        obj = 0.5 * float(np.vdot(r, r).real) + alpha * norm_u
        gap = _gap(cols, coeffs, xi, alpha, pd_norm2)
        trace.append(TraceEntry(k, obj, gap, len(cols), int(mixing.controls[j_hat])))
        if gap <= settings.gap_tol:
            termination = "gap_tol"
            break
        if algo == "pdap":
            # stop on a repeated active set only once the coefficients are optimal on it
            if k > 0 and sub_ok and (repeated or mag[j_hat] <= alpha or j_hat in cols):
                termination = "active_set_repeat"
                break
            active = cols if j_hat in cols else np.sort(np.append(cols, j_hat))
            warm = np.zeros((active.size, mixing.n_freq), dtype=complex)
            warm[np.searchsorted(active, cols)] = coeffs
            A = mixing.matrix[:, :, active]
            res = solve_subproblem(A, p_d, alpha, warm, tol=settings.subproblem_tol)
            sub_ok = res.converged
            if not res.converged:
                failures += 1
            new = res.coeffs
            if settings.prune and np.count_nonzero(np.linalg.norm(new, axis=1)) > bound:
                new = prune_coeffs(A, new, bound)
            prev = cols
            cols, coeffs = _drop_small(active, new)
            # the candidate was rejected by the subproblem: nothing new to try
            repeated = np.array_equal(cols, prev)
        else:
            cols, coeffs, _ = gcg_update(cols, coeffs, xi, j_hat, mixing, p_d, alpha, pd_norm2)
            if algo == "spinat" and len(cols):
                A = mixing.matrix[:, :, cols]
                L = spectral_norm_sq(A)
                if L > 0:
                    coeffs = prox_coeff_step(coeffs, A, p_d, alpha, 1.0 / L)
                if settings.prune and len(cols) > bound:
                    coeffs = prune_coeffs(A, coeffs, bound)
                cols, coeffs = _drop_small(cols, coeffs)
            elif algo == "gcg":
                cols, coeffs = _drop_small(cols, coeffs)
    else:
        # max_iter reached: record the final iterate
        r = _observe(mixing, cols, coeffs) - p_d
        xi = adjoint_field(mixing, -r)
        j_hat = int(np.argmax(np.linalg.norm(xi, axis=0)))
        norm_u = float(np.linalg.norm(coeffs, axis=1).sum()) if len(cols) else 0.0
        obj = 0.5 * float(np.vdot(r, r).real) + alpha * norm_u
        trace.append(TraceEntry(settings.max_iter, obj, _gap(cols, coeffs, xi, alpha, pd_norm2),
                                len(cols), int(mixing.controls[j_hat])))
        logger.warning("%s stopped at max_iter=%d with gap %.3e", algo, settings.max_iter, trace[-1].gap)
    measure = DiscreteMeasure(mixing.controls[cols], coeffs)
    return SolveReport(
        trace=trace,
        measure=measure,
        adjoint=xi,
        termination=termination,
        alpha=alpha,
        algorithm=algo,
        subproblem_failures=failures,
    )


@dataclass
class ContinuationStep:
    alpha: float
    report: SolveReport
    misfit: float
    norm: float
    support_size: int


def continuation(mixing: MixingMatrix, p_d: np.ndarray, alphas, settings: SolverSettings,
                 initial: DiscreteMeasure | None = None) -> list[ContinuationStep]:
    """Solve along a strictly decreasing ``alphas`` schedule with warm starts."""
    alphas = [float(a) for a in alphas]
    if any(b >= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("the alpha schedule must be strictly decreasing")
    steps = []
    current = initial
    for a in alphas:
        opts = SolverSettings(**{**settings.__dict__, "alpha": a})
        rep = run(mixing, p_d, opts, current)
        current = rep.measure
        misfit = float(np.linalg.norm(forward(mixing, current) - p_d))
        steps.append(ContinuationStep(a, rep, misfit, group_norm(current), len(current)))
    return steps
