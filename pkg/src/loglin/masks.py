"""Masking and score matrices for the attention variants.

All masks are lower triangular and materialized densely only here and in the
dense reference module (the oracle tier); the decoder and the chunkwise
algorithm never build a T x T object.

Gate products are accumulated in log space: ``segsum`` places the summed log
gates below the diagonal and ``-inf`` above it, so a single ``exp`` at the end
yields the product mask with exact zeros above the diagonal.  This keeps long
products of gates < 1 from underflowing intermediate terms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import fenwick
from .counters import FlopCounter
from .errors import ContractViolation
from .linalg import as_matrix, solve_unit_lower_triangular


@dataclass(frozen=True, eq=False)
class GateSequence:
    """Per-step decay gates alpha in (0, 1] and delta strengths beta in [0, 2].

    beta defaults to all ones.  beta == 0 is the boundary at which the delta
    correction disappears entirely; it is accepted so that degenerate cases
    stay expressible.
    """

    alpha: np.ndarray
    beta: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        alpha = np.ascontiguousarray(self.alpha, dtype=np.float64)
        if alpha.ndim != 1:
            raise ContractViolation("alpha must be a 1-D sequence")
        if not np.all((alpha > 0.0) & (alpha <= 1.0)):
            raise ContractViolation("gates alpha must lie in (0, 1]")
        beta = self.beta
        if beta is None:
            beta = np.ones_like(alpha)
        beta = np.ascontiguousarray(beta, dtype=np.float64)
        if beta.shape != alpha.shape:
            raise ContractViolation("alpha and beta must have equal length")
        if not np.all((beta >= 0.0) & (beta <= 2.0)):
            raise ContractViolation("delta strengths beta must lie in [0, 2]")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def t_len(self) -> int:
        return self.alpha.shape[0]

    @classmethod
    def all_ones(cls, t_len: int) -> "GateSequence":
        return cls(np.ones(t_len))


@dataclass(frozen=True, eq=False)
class LambdaSchedule:
    """Nonnegative per-step, per-level weights, shape (T, num_levels(T))."""

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.ascontiguousarray(self.lambdas, dtype=np.float64)
        if lam.ndim != 2:
            raise ContractViolation("lambda table must be 2-D (T x levels)")
        t_len = lam.shape[0]
        want = fenwick.num_levels(t_len) if t_len >= 1 else 0
        if t_len < 1 or lam.shape[1] != want:
            raise ContractViolation(
                f"lambda table shape {lam.shape} != ({t_len}, {want})"
            )
        if not np.all(lam >= 0.0):
            raise ContractViolation("level weights must be nonnegative")
        object.__setattr__(self, "lambdas", lam)

    @property
    def t_len(self) -> int:
        return self.lambdas.shape[0]

    @property
    def num_levels(self) -> int:
        return self.lambdas.shape[1]

    @classmethod
    def all_ones(cls, t_len: int) -> "LambdaSchedule":
        return cls(np.ones((t_len, fenwick.num_levels(t_len))))


def lower_ones(t_len: int) -> np.ndarray:
    return np.tril(np.ones((t_len, t_len)))


def segsum(a) -> np.ndarray:
    """Pairwise range sums: out[t, s] = sum(a[s+1 .. t]) for s <= t, -inf above."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ContractViolation("segsum input must be 1-D")
    if not np.all(np.isfinite(a)):
        raise ContractViolation("segsum input must be finite")
    cs = np.cumsum(a)
    diff = cs[:, None] - cs[None, :]
    t_len = a.shape[0]
    lower = np.tril(np.ones((t_len, t_len), dtype=bool))
    return np.where(lower, diff, -np.inf)


def sss_mask(gates: GateSequence) -> np.ndarray:
    """Gated causal mask M[i, j] = prod(alpha[j+1 .. i]); unit diagonal."""
    return np.exp(segsum(np.log(gates.alpha)))


def hier_mask(lam: LambdaSchedule) -> np.ndarray:
    """Level-weight mask: entry (t, s) = lam[t, level_of(t, s)] for s <= t."""
    t_len = lam.t_len
    out = np.zeros((t_len, t_len))
    for lev in range(lam.num_levels):
        out += lam.lambdas[:, lev, None] * fenwick.level_mask(lev, t_len)
    return out


def compose_mask(ms: np.ndarray, mh: np.ndarray) -> np.ndarray:
    """Entrywise product of the gated and level-weight masks."""
    ms = as_matrix(ms)
    mh = as_matrix(mh)
    if ms.shape != mh.shape:
        raise ContractViolation(f"mask dims {ms.shape} vs {mh.shape}")
    if np.any(np.triu(ms, 1) != 0.0) or np.any(np.triu(mh, 1) != 0.0):
        raise ContractViolation("compose_mask expects lower-triangular inputs")
    return ms * mh


def deltanet_scores(
    q: np.ndarray, k: np.ndarray, gates: GateSequence, counter: FlopCounter | None = None
) -> np.ndarray:
    """Delta-rule score matrix.

    Scores A satisfy (A o ones-mask) V == stepwise output of the recurrence
    S_t = S_{t-1} (I - beta_t k_t k_t^T) + v_t k_t^T,  o_t = S_t q_t.

    Computed as (Q K^T o L) (I + (diag(beta) K K^T) o (L - I))^{-1} where L is
    lower-triangular ones; the strictly-lower placement of the Gram term is
    the one consistent with the recurrence (see tests for the worked 2-step
    case).  The inverse is applied through unit-triangular substitution on the
    transposed system, never formed.
    """
    q = as_matrix(q)
    k = as_matrix(k)
    if q.shape != k.shape:
        raise ContractViolation(f"q/k dims {q.shape} vs {k.shape}")
    t_len = q.shape[0]
    if gates.t_len != t_len:
        raise ContractViolation("gate length must match q/k rows")
    gram = k @ k.T
    corr = np.tril(gates.beta[:, None] * gram, -1)  # (diag(beta) K K^T) o (L - I)
    target = np.tril(q @ k.T)
    if counter is not None:
        counter.add(2 * t_len * t_len * q.shape[1] + t_len * t_len)
    # Right-apply (I + corr)^{-1}: flip the transposed unit-upper system into a
    # unit-lower one so forward substitution applies.
    system = (np.eye(t_len) + corr).T[::-1, ::-1]
    rhs = target.T[::-1]
    sol = solve_unit_lower_triangular(system, rhs, counter=counter)
    return np.ascontiguousarray(sol[::-1].T)


MASK_CSV_HEADER = ("t", "s", "value")


def write_mask_csv(mask: np.ndarray, fileobj) -> int:
    """Dump the causal entries (s <= t) of a dense mask as t,s,value rows."""
    mask = as_matrix(mask)
    writer = csv.writer(fileobj, lineterminator="\n")
    writer.writerow(MASK_CSV_HEADER)
    rows = 0
    for t in range(mask.shape[0]):
        for s in range(t + 1):
            writer.writerow((t, s, repr(float(mask[t, s]))))
            rows += 1
    return rows


def read_mask_csv(fileobj) -> np.ndarray:
    """Rebuild the dense lower-triangular mask written by write_mask_csv."""
    reader = csv.reader(fileobj)
    header = next(reader)
    if tuple(header) != MASK_CSV_HEADER:
        raise ContractViolation(f"unexpected mask CSV header {header!r}")
    entries = [(int(t), int(s), float(v)) for t, s, v in reader]
    t_len = max(t for t, _, _ in entries) + 1
    out = np.zeros((t_len, t_len))
    for t, s, v in entries:
        out[t, s] = v
    return out
