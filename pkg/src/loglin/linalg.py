"""Dense double-precision kernels every other module is built on.

Matrices are C-order float64 ``numpy`` arrays (rows x cols); vectors are 1-D
float64 arrays.  Functions here never mutate their inputs, so results are safe
to share across threads.  Triangular systems are solved by substitution; no
inverse is ever formed explicitly.
"""

from __future__ import annotations

import numpy as np

from .counters import FlopCounter
from .errors import ContractViolation

Array = np.ndarray


def as_matrix(data) -> Array:
    a = np.ascontiguousarray(data, dtype=np.float64)
    if a.ndim != 2:
        raise ContractViolation(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def as_vector(data) -> Array:
    a = np.ascontiguousarray(data, dtype=np.float64)
    if a.ndim != 1:
        raise ContractViolation(f"expected a 1-D vector, got ndim={a.ndim}")
    return a


def matmul(a: Array, b: Array, counter: FlopCounter | None = None) -> Array:
    """Standard matrix product; dims (a.rows, b.cols)."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ContractViolation(f"matmul dims {a.shape} x {b.shape}")
    if counter is not None:
        counter.add(a.shape[0] * a.shape[1] * b.shape[1])
    return a @ b


def outer(u: Array, v: Array, counter: FlopCounter | None = None) -> Array:
    """Rank-1 product: result[i, j] = u[i] * v[j]."""
    u = as_vector(u)
    v = as_vector(v)
    if counter is not None:
        counter.add(u.shape[0] * v.shape[0])
    return np.outer(u, v)


def elementwise(a: Array, b: Array, op: str) -> Array:
    """Entrywise mul/add/sub of equally shaped matrices."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise ContractViolation(f"elementwise dims {a.shape} vs {b.shape}")
    if op == "mul":
        return a * b
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    raise ContractViolation(f"unknown elementwise op {op!r}")


def solve_unit_lower_triangular(
    l: Array, b: Array, counter: FlopCounter | None = None
) -> Array:
    """Solve l @ X = b by forward substitution.

    ``l`` must be square with an exact unit diagonal and a zero strict upper
    part; ``b`` is a matrix with matching row count.
    """
    l = as_matrix(l)
    b = as_matrix(b)
    n = l.shape[0]
    if l.shape[1] != n:
        raise ContractViolation(f"triangular factor must be square, got {l.shape}")
    if b.shape[0] != n:
        raise ContractViolation(f"rhs rows {b.shape[0]} != system size {n}")
    if not np.all(np.diagonal(l) == 1.0):
        raise ContractViolation("triangular factor must have a unit diagonal")
    if np.any(np.triu(l, 1) != 0.0):
        raise ContractViolation("triangular factor must have a zero strict upper part")
    x = b.copy()
    for i in range(1, n):
        x[i] -= l[i, :i] @ x[:i]
    if counter is not None:
        counter.add(n * (n - 1) // 2 * b.shape[1])
    return x
