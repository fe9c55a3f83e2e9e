"""Batched matrix exponential.

Scaling and squaring with a degree-13 Pade approximant (Higham 2005). Works
on real or complex stacks of square matrices with shape ``(..., n, n)``;
every matrix in the stack gets its own scaling power.
"""

from __future__ import annotations

import numpy as np

_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def _pade13(A: np.ndarray) -> np.ndarray:
    b = _PADE13
    n = A.shape[-1]
    ident = np.broadcast_to(np.eye(n, dtype=A.dtype), A.shape)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (
        A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
        + b[7] * A6
        + b[5] * A4
        + b[3] * A2
        + b[1] * ident
    )
    V = (
        A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
        + b[6] * A6
        + b[4] * A4
        + b[2] * A2
        + b[0] * ident
    )
    return np.linalg.solve(V - U, V + U)


def expm(A) -> np.ndarray:
    """Matrix exponential of ``A`` (shape ``(n, n)`` or ``(..., n, n)``).

    Raises
    ------
    ValueError
        If ``A`` is not a stack of square matrices or contains non-finite
        entries.
    """
    A = np.asarray(A)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite entries")
    if not np.iscomplexobj(A):
        A = A.astype(np.float64, copy=False)

    batch_shape = A.shape[:-2]
    n = A.shape[-1]
    flat = A.reshape((-1, n, n))

    norms = np.abs(flat).sum(axis=-2).max(axis=-1)  # induced 1-norm
    with np.errstate(divide="ignore"):
        s = np.where(norms > _THETA13, np.ceil(np.log2(norms / _THETA13)), 0.0)
    s = s.astype(np.int64)
    scale = np.ldexp(1.0, -s)
    X = _pade13(flat * scale[:, None, None])

    for i in range(int(s.max(initial=0))):
        sel = s > i
        X[sel] = X[sel] @ X[sel]
    X[norms == 0] = np.eye(n)  # Pade rounding leaves 1-ulp noise at A = 0
    return X.reshape(batch_shape + (n, n))
