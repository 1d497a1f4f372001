"""Small dense linear-algebra helpers used by the exact engines.

Vectorization is row-major throughout: vec(rho) = rho.reshape(-1), and a
superoperator acting as rho -> sum_b K_b rho K_b^dag has transfer matrix
sum_b kron(K_b, K_b.conj()).
"""

from __future__ import annotations

import numpy as np

HERMITICITY_ATOL = 1e-12
TRACE_ATOL = 1e-10
CP_ATOL = 1e-9
FIXED_POINT_ATOL = 1e-10


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).reshape(-1)


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    return v.reshape(d, d)


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def trace_norm(m: np.ndarray) -> float:
    """Sum of singular values (Schatten 1-norm)."""
    return float(np.linalg.svd(np.asarray(m), compute_uv=False).sum())


def transfer_from_kraus(kraus: np.ndarray) -> np.ndarray:
    """Transfer matrix sum_b kron(K_b, K_b*) from a stack of Kraus operators.

    `kraus` has shape (n, d, d); the result is (d*d, d*d).
    """
    k = np.asarray(kraus)
    n, d, _ = k.shape
    # kron over a batch: T[(i,j),(m,n)] = sum_b K[b,i,m] * conj(K[b,j,n])
    t = np.einsum("bim,bjn->ijmn", k, k.conj())
    return t.reshape(d * d, d * d)


def choi_from_transfer(t: np.ndarray) -> np.ndarray:
    """Choi matrix (unnormalized) of a transfer matrix in row-major vec.

    C[(m,i),(n,j)] = S(|m><n|)_{ij} = T[(i,j),(m,n)].
    """
    d2 = t.shape[0]
    d = int(round(np.sqrt(d2)))
    t4 = t.reshape(d, d, d, d)  # (i, j, m, n)
    c = np.transpose(t4, (2, 0, 3, 1))  # (m, i, n, j)
    return c.reshape(d2, d2)


def is_trace_preserving(t: np.ndarray, atol: float = TRACE_ATOL) -> bool:
    d = int(round(np.sqrt(t.shape[0])))
    vec_id = vec(np.eye(d, dtype=complex))
    return bool(np.max(np.abs(vec_id @ t - vec_id)) <= atol)


def choi_min_eig(t: np.ndarray) -> float:
    c = choi_from_transfer(t)
    return float(np.linalg.eigvalsh(hermitize(c)).min())


def apply_transfer(t: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    return (t @ vec(rho)).reshape(d, d)
