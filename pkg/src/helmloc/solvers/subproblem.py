"""Group lasso on a fixed set of positions.

Solves ``min_c 1/2 sum_n |A_n c_n - b_n|^2 + alpha sum_j |c_j|`` where
``c_j`` in ``C^N`` collects the frequency components of position ``j``.
Matrices are passed as ``A`` of shape ``(N, M, P)``, data ``b`` as ``(N, M)``
and coefficients as ``(P, N)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

logger = logging.getLogger(__name__)


def group_shrink(z: np.ndarray, thresh: float) -> np.ndarray:
    """Row-wise soft thresholding ``max(0, 1 - thresh/|z_j|) z_j``."""
    mag = np.linalg.norm(z, axis=1)
    scale = np.where(mag > thresh, 1.0 - thresh / np.where(mag > 0, mag, 1.0), 0.0)
    return scale[:, None] * z


def residual(A: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    return (A @ c.T[:, :, None])[..., 0] - b


def gradient(A: np.ndarray, b: np.ndarray, c: np.ndarray, AH: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the misfit; ``AH`` is an optional precomputed ``A.conj().transpose(0, 2, 1)``."""
    r = residual(A, b, c)
    if AH is None:
        AH = A.conj().transpose(0, 2, 1)
    return (AH @ r[:, :, None])[..., 0].T


def objective(A: np.ndarray, b: np.ndarray, c: np.ndarray, alpha: float) -> float:
    r = residual(A, b, c)
    return 0.5 * float(np.vdot(r, r).real) + alpha * float(np.linalg.norm(c, axis=1).sum())


def spectral_norm_sq(A: np.ndarray, rtol: float = 1e-6) -> float:
    """Largest ``|A_n|_2^2`` over frequencies from the smaller Gram matrix.

    The value is inflated by ``rtol`` so that ``1/L`` stays a safe step.
    """
    if A.size == 0:
        return 0.0
    best = 0.0
    for An in A:
        G = An @ An.conj().T if An.shape[0] <= An.shape[1] else An.conj().T @ An
        best = max(best, float(np.linalg.eigvalsh(G)[-1]))
    return best * (1.0 + rtol)


def prox_coeff_step(c: np.ndarray, A: np.ndarray, b: np.ndarray, alpha: float, gamma: float) -> np.ndarray:
    """One proximal gradient step with step size ``gamma``."""
    z = c - gamma * gradient(A, b, c)
    return group_shrink(z, gamma * alpha)


@dataclass
class SubproblemResult:
    coeffs: np.ndarray
    residual: float
    iterations: int
    converged: bool
    newton_steps: int = 0
    fallback_steps: int = 0


def _to_real(c: np.ndarray) -> np.ndarray:
    return np.stack([c.real, c.imag], axis=-1).reshape(-1)


def _to_complex(x: np.ndarray, shape) -> np.ndarray:
    x = x.reshape(shape + (2,))
    return x[..., 0] + 1j * x[..., 1]


def _real_operator(A: np.ndarray) -> np.ndarray:
    """Real matrix of ``c -> (A_n c_n)_n`` with ``c`` laid out as ``(j, n, re/im)``."""
    N, M, P = A.shape
    B = np.zeros((N, M, 2, P, N, 2))
    for n in range(N):
        B[n, :, 0, :, n, 0] = A[n].real
        B[n, :, 0, :, n, 1] = -A[n].imag
        B[n, :, 1, :, n, 0] = A[n].imag
        B[n, :, 1, :, n, 1] = A[n].real
    return B.reshape(2 * N * M, 2 * N * P)


def _shrink_jacobian(z: np.ndarray, thresh: float, shape) -> np.ndarray:
    """Diagonal blocks ``(P, 2N, 2N)`` of a generalized Jacobian of the group shrinkage."""
    P, N = shape
    zr = z.reshape(P, 2 * N)
    mag = np.linalg.norm(zr, axis=1)
    blocks = np.zeros((P, 2 * N, 2 * N))
    act = mag > thresh
    if np.any(act):
        za = zr[act]
        ma = mag[act]
        blocks[act] = (1.0 - thresh / ma)[:, None, None] * np.eye(2 * N) + (thresh / ma**3)[
            :, None, None
        ] * (za[:, :, None] * za[:, None, :])
    return blocks


def _newton_direction(D: np.ndarray, Bt: np.ndarray, H: np.ndarray, s: float,
                      F: np.ndarray, mu: float) -> np.ndarray:
    """Solve ``(E + s D H) d = -F`` with ``E = (1 + mu) I - D`` and ``H = B^T B``.

    ``Bt`` holds the transposed per-frequency blocks of ``B``, shape
    ``(N, P, 2, 2M)``.  ``D`` is block diagonal with symmetric blocks whose
    spectrum lies in ``[0, 1]``, so ``E`` is invertible and ``G = E^-1 D`` is
    symmetric positive semidefinite.  When ``B`` has fewer rows than columns
    the Woodbury identity reduces the step to one positive definite solve
    with ``I + s B G B^T``.
    """
    P, n, _ = D.shape
    N, _, _, m2 = Bt.shape
    E = (1.0 + mu) * np.eye(n) - D
    if N * m2 < P * n:
        Einv = np.linalg.inv(E)
        G = (Einv @ D).reshape(P, N, 2, N, 2)
        v = (Einv @ F.reshape(P, n, 1)).reshape(P, N, 2)
        # Q[k, l] = (B_k G_kl)^T with rows (j, re/im); the sum over re/im is unrolled
        Gq = G.transpose(1, 3, 0, 4, 2)
        Q = Gq[..., 0, None] * Bt[:, None, :, None, 0, :] + Gq[..., 1, None] * Bt[:, None, :, None, 1, :]
        Q = Q.reshape(N, N, 2 * P, m2)
        Bf = Bt.reshape(N, 2 * P, m2)
        K = (Q.transpose(0, 1, 3, 2) @ Bf[None]).transpose(0, 2, 1, 3).reshape(N * m2, N * m2)
        K *= s
        K.flat[:: N * m2 + 1] += 1.0
        Bv = np.concatenate([v[:, k, :].reshape(-1) @ Bf[k] for k in range(N)])
        # only the lower triangle of K is read
        chol, info = lapack.dpotrf(K, lower=1)
        if info == 0:
            w, info = lapack.dpotrs(chol, Bv, lower=1)
        if info != 0:
            w = np.linalg.lstsq(K, Bv, rcond=None)[0]
        w = w.reshape(N, m2)
        corr = (Q @ w[:, None, :, None]).sum(axis=0).reshape(N, P, 2).transpose(1, 0, 2)
        return -(v - s * corr).reshape(-1)
    J = s * (D @ H.reshape(P, n, -1)).reshape(H.shape)
    for j in range(P):
        J[j * n:(j + 1) * n, j * n:(j + 1) * n] += E[j]
    try:
        return np.linalg.solve(J, -F)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(J, -F, rcond=None)[0]


def solve_subproblem(
    A: np.ndarray,
    b: np.ndarray,
    alpha: float,
    warm_start: np.ndarray | None = None,
    tol: float = 1e-12,
    max_iter: int = 500,
    newton_scale: float = 1e4,
    damping: float = 0.1,
    stall: int = 5,
) -> SubproblemResult:
    """Semi-smooth Newton method on the proximal fixed-point equation.

    Newton steps target ``F_s(c) = c - prox(c - s grad f(c))`` starting from
    ``s = newton_scale / L``; every ``s > 0`` has the same zeros, and a large
    ``s`` keeps the generalized Jacobian well conditioned when more spikes
    than measurements make the Hessian singular.  Steps solve
    ``(J + mu I) d = -F_s`` with ``mu = damping * |F_s|`` and a backtracking
    line search on ``|F_s|``; when it fails a proximal gradient step with
    ``gamma = 1/L`` is taken, and after ``stall`` consecutive failures ``s``
    grows by a factor 100 (at most ``1e12 / L``).

    Convergence is measured by ``F(c)`` with ``gamma = 1/L``:
    ``|F| <= tol * max(1, |c|)``.  The returned point never has a larger
    objective than the warm start.
    """
    N, M, P = A.shape
    shape = (P, N)
    c = np.zeros(shape, dtype=complex) if warm_start is None else np.array(warm_start, dtype=complex)
    if P == 0:
        return SubproblemResult(c, 0.0, 0, True)
    L = spectral_norm_sq(A)
    if L == 0:
        return SubproblemResult(np.zeros(shape, dtype=complex), 0.0, 0, True)
    gamma = 1.0 / L
    s_newton = newton_scale / L
    B = _real_operator(A)
    H = B.T @ B
    Bt = np.ascontiguousarray(
        np.stack([B.reshape(N, 2 * M, P, N, 2)[k, :, :, k, :] for k in range(N)]).transpose(0, 2, 3, 1)
    )

    AH = A.conj().transpose(0, 2, 1)

    def evaluate(cc):
        # residual, gradient and objective share one product with A
        r = residual(A, b, cc)
        g = (AH @ r[:, :, None])[..., 0].T
        obj = 0.5 * float(np.vdot(r, r).real) + alpha * float(np.linalg.norm(cc, axis=1).sum())
        return g, obj

    def fixed_point(cc, g, step):
        z = cc - step * g
        return cc - group_shrink(z, step * alpha), z

    g, obj = evaluate(c)
    Fs, z = fixed_point(c, g, s_newton)
    normFs = np.linalg.norm(Fs)
    normF = np.linalg.norm(fixed_point(c, g, gamma)[0])
    best, best_obj = c, obj
    newton = fallback = failed = 0
    it = 0
    converged = normF <= tol * max(1.0, np.linalg.norm(c))
    while not converged and it < max_iter:
        it += 1
        D = _shrink_jacobian(_to_real(z), s_newton * alpha, shape)
        d = _to_complex(_newton_direction(D, Bt, H, s_newton, _to_real(Fs), damping * normFs), shape)
        t = 1.0
        accepted = False
        while t > 1e-6:
            trial = c + t * d
            gt, objt = evaluate(trial)
            Ft, zt = fixed_point(trial, gt, s_newton)
            nFt = np.linalg.norm(Ft)
            if nFt <= (1.0 - 1e-4 * t) * normFs:
                accepted = True
                break
            t *= 0.5
        if accepted:
            c, g, obj, Fs, z, normFs = trial, gt, objt, Ft, zt, nFt
            newton += 1
            failed = 0
        else:
            c = c - fixed_point(c, g, gamma)[0]
            g, obj = evaluate(c)
            fallback += 1
            failed += 1
            if failed >= stall and s_newton * L < 1e12:
                s_newton *= 100.0
                failed = 0
            Fs, z = fixed_point(c, g, s_newton)
            normFs = np.linalg.norm(Fs)
        normF = np.linalg.norm(fixed_point(c, g, gamma)[0])
        converged = normF <= tol * max(1.0, np.linalg.norm(c))
        if obj <= best_obj:
            best, best_obj = c, obj

    if not converged and best is not c:
        # Newton and fallback steps do not decrease the objective monotonically
        c = best
        normF = np.linalg.norm(fixed_point(c, evaluate(c)[0], gamma)[0])
    if not converged:
        logger.warning(
            "group lasso subproblem stopped after %d iterations with residual %.3e", it, normF
        )
    return SubproblemResult(c, float(normF), it, bool(converged), newton, fallback)
