"""Factored storage and fast matvec for the composed causal mask.

The composed mask (gate products times level weights) is stored as a
diagonal plus one rank-1 block per bucket occurrence: the block for level l
and an odd-indexed aligned run covers rows [m*h, (m+1)*h) x cols
[(m-1)*h, m*h) with h = 2**(l-1), and inside it every entry factors as

    lam[t] * u_t * v_s,   u_t = prod(alpha[0..t]),  v_s = 1 / u_s.

The u/v sequences are kept as logarithms and each block is anchored at its
last column, so only differences of nearby log-prefixes are ever
exponentiated; raw u or v would overflow for long sequences of small gates.
Storage and matvec are O(T log T).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fenwick
from .counters import FlopCounter
from .errors import ContractViolation
from .masks import GateSequence, LambdaSchedule


@dataclass(frozen=True, eq=False)
class HBlock:
    level: int
    row_start: int
    row_stop: int
    col_start: int
    col_stop: int
    row_lam: np.ndarray  # (h,) level weights over the block rows
    row_logdec: np.ndarray  # (h,) log u_t - log u_anchor, <= 0
    col_logdec: np.ndarray  # (h,) log u_anchor - log u_s, <= 0

    @property
    def rows(self) -> slice:
        return slice(self.row_start, self.row_stop)

    @property
    def cols(self) -> slice:
        return slice(self.col_start, self.col_stop)


@dataclass(frozen=True, eq=False)
class QuasiHMatrix:
    t_len: int
    diagonal: np.ndarray  # (T,) level-0 weights
    log_u: np.ndarray  # (T,) cumulative log gates
    lam_table: np.ndarray  # (T, L) level weights (the tau factors)
    blocks: tuple  # HBlock per level >= 1 per odd aligned run

    def storage_scalars(self) -> int:
        n = self.diagonal.size + self.log_u.size + self.lam_table.size
        for b in self.blocks:
            n += b.row_lam.size + b.row_logdec.size + b.col_logdec.size
        return n


def from_params(gates: GateSequence, lam: LambdaSchedule) -> QuasiHMatrix:
    """Factor the composed mask defined by the gates and level weights."""
    t_len = gates.t_len
    if lam.t_len != t_len:
        raise ContractViolation("gate and lambda lengths must match")
    if not np.all(gates.alpha > 0.0):
        raise ContractViolation("gates must be strictly positive")
    if t_len & (t_len - 1):
        raise ContractViolation("factored storage requires power-of-two T")
    log_u = np.cumsum(np.log(gates.alpha))
    levels = fenwick.num_levels(t_len)
    blocks = []
    for lev in range(1, levels):
        half = 1 << (lev - 1)
        for m in range(1, t_len // half, 2):
            r0, r1 = m * half, (m + 1) * half
            c0, c1 = (m - 1) * half, m * half
            anchor = log_u[c1 - 1]
            blocks.append(
                HBlock(
                    level=lev,
                    row_start=r0,
                    row_stop=r1,
                    col_start=c0,
                    col_stop=c1,
                    row_lam=lam.lambdas[r0:r1, lev].copy(),
                    row_logdec=log_u[r0:r1] - anchor,
                    col_logdec=anchor - log_u[c0:c1],
                )
            )
    return QuasiHMatrix(
        t_len=t_len,
        diagonal=lam.lambdas[:, 0].copy(),
        log_u=log_u,
        lam_table=lam.lambdas.copy(),
        blocks=tuple(blocks),
    )


def densify(h: QuasiHMatrix) -> np.ndarray:
    """Expand the factored form to a dense matrix (verification tier only)."""
    out = np.zeros((h.t_len, h.t_len))
    np.fill_diagonal(out, h.diagonal)
    for b in h.blocks:
        # Sum the anchored logs before exponentiating: the separate factors may
        # underflow even when the entry itself is representable.
        out[b.rows, b.cols] = b.row_lam[:, None] * np.exp(
            b.row_logdec[:, None] + b.col_logdec[None, :]
        )
    return out


def entry(h: QuasiHMatrix, t: int, s: int) -> float:
    """Single entry evaluated through the block factors."""
    if not 0 <= s <= t < h.t_len:
        raise ContractViolation(f"entry ({t}, {s}) outside the causal range")
    if s == t:
        return float(h.diagonal[t])
    lev = fenwick.level_of_fast(t, s)
    half = 1 << (lev - 1)
    m = t // half  # odd whenever the bucket exists, which level_of guarantees
    idx = (h.t_len - (h.t_len >> (lev - 1))) + (m - 1) // 2
    b = h.blocks[idx]
    assert b.level == lev and b.row_start <= t < b.row_stop and b.col_start <= s < b.col_stop
    return float(
        b.row_lam[t - b.row_start]
        * np.exp(b.row_logdec[t - b.row_start] + b.col_logdec[s - b.col_start])
    )


def matvec(
    h: QuasiHMatrix, x: np.ndarray, counter: FlopCounter | None = None
) -> np.ndarray:
    """densify(h) @ x without densifying; two inner products per block."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != h.t_len:
        raise ContractViolation(f"matvec length {x.shape} != ({h.t_len},)")
    y = h.diagonal * x
    if counter is not None:
        counter.add(h.t_len)
    for b in h.blocks:
        inner = np.exp(b.col_logdec) @ x[b.cols]
        y[b.rows] += (b.row_lam * np.exp(b.row_logdec)) * inner
        if counter is not None:
            counter.add(2 * (b.col_stop - b.col_start) + 2 * (b.row_stop - b.row_start))
    return y


def recovered_alpha(h: QuasiHMatrix) -> np.ndarray:
    """Per-step gates from the log-prefix factor: u_t / u_{t-1}."""
    out = np.empty(h.t_len)
    out[0] = np.exp(h.log_u[0])
    out[1:] = np.exp(np.diff(h.log_u))
    return out


def recovered_lambda(h: QuasiHMatrix) -> np.ndarray:
    """Level weights from the factors: tau * u * v with log v = -log u."""
    log_v = -h.log_u
    return h.lam_table * np.exp(h.log_u + log_v)[:, None]
