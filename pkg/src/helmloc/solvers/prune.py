"""Reduce the support of a discrete measure without changing its observations."""
from __future__ import annotations

import numpy as np
from scipy import linalg

from ..measure import DiscreteMeasure
from ..observation import MixingMatrix


class PruneError(RuntimeError):
    pass


def _spike_columns(A: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    # real embedding of S(c_j/|c_j| delta_j), one column per spike
    v = coeffs / np.linalg.norm(coeffs, axis=1)[:, None]
    w = np.einsum("nmj,jn->nmj", A, v).reshape(-1, coeffs.shape[0])
    return np.vstack([w.real, w.imag])


def _kernel_vector(W: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    scale = max(np.linalg.norm(W), 1e-300)
    _, _, vt = np.linalg.svd(W, full_matrices=True)
    lam = vt[-1]
    if np.linalg.norm(W @ lam) <= 1e-12 * scale:
        return lam
    # retry on a shuffled column subset of minimal size
    k = W.shape[0] + 1
    for _ in range(5):
        pick = rng.permutation(W.shape[1])[:k]
        ns = linalg.null_space(W[:, pick])
        if ns.shape[1]:
            lam = np.zeros(W.shape[1])
            lam[pick] = ns[:, 0]
            if np.linalg.norm(W @ lam) <= 1e-12 * scale:
                return lam
    raise PruneError("could not find a kernel element of the spike observation matrix")


def prune_coeffs(A: np.ndarray, coeffs: np.ndarray, bound: int) -> np.ndarray:
    """Zero coefficients until at most ``bound`` rows are nonzero.

    ``A`` has shape ``(N, M, P)`` and ``coeffs`` shape ``(P, N)``.  The
    observation ``sum_j A[:, :, j] c_j`` is unchanged and ``sum_j |c_j|``
    does not increase.
    """
    c = np.array(coeffs, dtype=complex)
    rng = np.random.default_rng(0)
    active = np.flatnonzero(np.linalg.norm(c, axis=1) > 0)
    while active.size > bound:
        sub = c[active]
        W = _spike_columns(A[:, :, active], sub)
        lam = _kernel_vector(W, rng)
        if lam.sum() < 0:
            lam = -lam
        mag = np.linalg.norm(sub, axis=1)
        ratio = lam / mag
        hat = int(np.argmax(ratio))
        tau = ratio[hat]
        if not tau > 0:
            raise PruneError("degenerate kernel element")
        factor = 1.0 - lam / (tau * mag)
        factor[hat] = 0.0
        # ties with the argmax vanish up to roundoff
        factor[factor < 1e-13] = 0.0
        c[active] = factor[:, None] * sub
        active = active[factor > 0]
    return c


def prune_support(u: DiscreteMeasure, mixing: MixingMatrix, bound: int | None = None) -> DiscreteMeasure:
    """Carathéodory-type support reduction down to ``bound`` (default ``2NM``) points."""
    if bound is None:
        bound = 2 * mixing.n_freq * mixing.n_mics
    if len(u) <= bound:
        return u
    A = mixing.restrict(u.nodes)
    c = prune_coeffs(A, u.coeffs, bound)
    keep = np.linalg.norm(c, axis=1) > 0
    return DiscreteMeasure(u.nodes[keep], c[keep])
