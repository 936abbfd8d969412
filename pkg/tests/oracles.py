"""Independent reference solvers used as test oracles."""
import numpy as np


def group_lasso_objective(A, b, c, alpha):
    r = np.einsum("nmj,jn->nm", A, c) - b
    return 0.5 * np.vdot(r, r).real + alpha * np.linalg.norm(c, axis=1).sum()


def _shrink(z, t):
    mag = np.linalg.norm(z, axis=1, keepdims=True)
    return np.where(mag > t, 1 - t / np.maximum(mag, 1e-300), 0.0) * z


def fista(A, b, alpha, tol=1e-13, max_iter=500_000):
    """Accelerated proximal gradient with adaptive restart.

    Stops when the fixed-point residual ``|c - prox(c - grad/L)|`` is below
    ``tol``.  Returns ``(coeffs, residual, iterations)``.
    """
    L = max(np.linalg.norm(An, 2) ** 2 for An in A) * (1 + 1e-12)
    grad = lambda c: np.einsum("nmj,nm->jn", A.conj(), np.einsum("nmj,jn->nm", A, c) - b)
    c = np.zeros((A.shape[2], A.shape[0]), dtype=complex)
    y, t = c.copy(), 1.0
    for it in range(max_iter):
        c_new = _shrink(y - grad(y) / L, alpha / L)
        if np.vdot(y - c_new, c_new - c).real > 0:
            y, t = c.copy(), 1.0  # restart
            continue
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = c_new + (t - 1) / t_new * (c_new - c)
        c, t = c_new, t_new
        res = np.linalg.norm(c - _shrink(c - grad(c) / L, alpha / L))
        if res <= tol:
            return c, res, it
    return c, res, max_iter


def golden_section(f, a=0.0, b=1.0, tol=1e-12):
    g = (np.sqrt(5) - 1) / 2
    x1, x2 = b - g * (b - a), a + g * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def random_group_lasso(rng, n_freq=2, n_mics=5, n_cols=6):
    A = rng.standard_normal((n_freq, n_mics, n_cols)) + 1j * rng.standard_normal((n_freq, n_mics, n_cols))
    b = rng.standard_normal((n_freq, n_mics)) + 1j * rng.standard_normal((n_freq, n_mics))
    xi = np.linalg.norm(np.einsum("nmj,nm->jn", A.conj(), b), axis=1).max()
    return A, b, xi
