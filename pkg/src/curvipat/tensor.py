"""Dense order-1/2/3 tensor kernels: mu-mode products, the Tucker operator,
Hadamard products and vec/unvec.

Fields are plain ``numpy.ndarray`` objects.  The linearization convention is
first-index-fastest: element (i, j, k) of a field with dims (n1, n2, n3)
sits at flat position i + j*n1 + k*n1*n2 (0-based), i.e. ``order='F'`` in
numpy terms.  Mode products are 1-based: mode 1 acts on columns, mode 2 on
rows, mode 3 on tubes.
"""

from __future__ import annotations

import numpy as np

KRON_ORACLE_CAP = 4096


def vec(field: np.ndarray) -> np.ndarray:
    """Flatten a field with the first index fastest."""
    return np.asarray(field).reshape(-1, order="F")


def unvec(w: np.ndarray, dims: tuple[int, ...]) -> np.ndarray:
    """Inverse of :func:`vec` for the given dims."""
    w = np.asarray(w)
    if w.size != int(np.prod(dims)):
        raise ValueError(f"cannot reshape {w.size} values into dims {dims}")
    return w.reshape(dims, order="F")


def mode_product(mu: int, L: np.ndarray, field: np.ndarray) -> np.ndarray:
    """Multiply the square matrix L along mode ``mu`` of the field.

    mode_product(1, L, T)[i, j, k] = sum_m L[i, m] T[m, j, k], and
    analogously along the other modes.  Realized as a single BLAS-shaped
    contraction over the matching unfolding.
    """
    L = np.asarray(L)
    field = np.asarray(field)
    if not 1 <= mu <= field.ndim:
        raise ValueError(f"mode {mu} out of range for order-{field.ndim} field")
    axis = mu - 1
    if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[1] != field.shape[axis]:
        raise ValueError(
            f"matrix of shape {L.shape} does not fit mode {mu} of field "
            f"with dims {field.shape}"
        )
    out = np.tensordot(L, field, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def tucker(
    field: np.ndarray,
    matrices,
    skip: set[int] | None = None,
) -> np.ndarray:
    """Concatenated mode products in ascending mode order.

    ``matrices`` holds one matrix per mode (entry ``None`` leaves the mode
    untouched, as does listing the mode in ``skip``).  Equivalent to applying
    the Kronecker product L_d x ... x L_1 to ``vec(field)``.
    """
    field = np.asarray(field)
    if len(matrices) != field.ndim:
        raise ValueError(
            f"expected {field.ndim} mode matrices, got {len(matrices)}"
        )
    skip = skip or set()
    out = field
    for mu, L in enumerate(matrices, start=1):
        if mu in skip or L is None:
            continue
        out = mode_product(mu, L, out)
    return out


def hadamard(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Elementwise product of two fields with identical dims."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return A * B


def kron_assemble(matrices) -> np.ndarray:
    """Explicit dense Kronecker product L_d x ... x L_1 from per-mode
    matrices listed in ascending mode order.  Oracle-sized only."""
    if not matrices:
        raise ValueError("need at least one matrix")
    total = 1
    for L in matrices:
        total *= np.asarray(L).shape[0]
    if total > KRON_ORACLE_CAP:
        raise ValueError(
            f"assembled dimension {total} exceeds the oracle cap {KRON_ORACLE_CAP}"
        )
    out = np.asarray(matrices[0])
    for L in matrices[1:]:
        out = np.kron(np.asarray(L), out)
    return out
