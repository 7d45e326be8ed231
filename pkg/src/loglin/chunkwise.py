"""Chunkwise training form for the scalar-gated log-linear variant.

The composed causal mask splits into a block-diagonal part D (everything at
levels finer than the chunk size) plus one scaled gated-product term per
coarser level.  The forward pass mirrors that split:

* Intra-chunk: each C x C diagonal block is materialized densely and applied
  as (Q K^T o block) V.  Levels 0..log2(C) live entirely inside blocks.
* Inter-chunk: one sequential state-passing sweep per coarser level.  Group
  chunks into runs of 2**j; at level j a run with an even index accumulates
  its chunks' states, a run with an odd index reads the previous run's
  aggregate (decayed across chunk boundaries) and injects nothing, and the
  aggregate is dropped when the odd run ends.  That parity schedule is
  exactly the bucket pattern: the bucket at the level is the previous
  aligned run, present when the run index is odd.

The forward pass never allocates a T x T (or chunks x chunks) object;
auxiliary memory is O(C^2) transient per block plus O((T/C) d^2) for the
per-chunk states, and each sweep holds a single d x d register.  The
densify helpers below are for the verification tier only.

The delta-rule variant has no chunkwise path here; it is verified through
its dense and recurrent forms instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fenwick
from .counters import FlopCounter
from .errors import ContractViolation
from .masks import GateSequence, LambdaSchedule, segsum
from .reference import AttentionInputs


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ChunkConfig:
    t_len: int
    chunk_len: int

    def __post_init__(self):
        if not _is_pow2(self.t_len):
            raise ContractViolation(f"T={self.t_len} must be a power of two")
        if not _is_pow2(self.chunk_len):
            raise ContractViolation(f"C={self.chunk_len} must be a power of two")
        if self.chunk_len > self.t_len:
            raise ContractViolation(
                f"chunk length {self.chunk_len} exceeds T={self.t_len}"
            )

    @property
    def num_chunks(self) -> int:
        return self.t_len // self.chunk_len

    @property
    def num_intra_levels(self) -> int:
        """Levels that collapse into the block-diagonal part: 0..log2(C)."""
        return self.chunk_len.bit_length()  # log2(C) + 1

    @property
    def num_inter_levels(self) -> int:
        return (self.t_len // self.chunk_len).bit_length() - 1  # log2(T/C)


@dataclass(frozen=True, eq=False)
class LevelTerm:
    """Factored data for one coarse level's scaled gated-product term.

    Entry (t, s) of the term densifies to
        lam[t] * dst_decay[t] * (chunk gate products strictly between the two
        chunks) * src_decay[s]
    over the chunk pairs picked out by chunk_mask; everything else is zero.
    """

    level: int  # global level index, >= log2(C) + 1
    lam: np.ndarray  # (T,) weight column for this level
    src_decay: np.ndarray  # (T,) gate product from the position (excl.) to its chunk end
    dst_decay: np.ndarray  # (T,) gate product from the chunk start through the position
    chunk_log_gate: np.ndarray  # (T/C,) summed log gates per chunk
    chunk_mask: np.ndarray  # (T/C, T/C) bool bucket pattern at chunk granularity


@dataclass(frozen=True, eq=False)
class MaskDecomposition:
    cfg: ChunkConfig
    d_blocks: tuple  # T/C dense (C x C) lower-triangular blocks
    level_terms: tuple  # one LevelTerm per level >= log2(C) + 1


def _chunk_quantities(gates: GateSequence, cfg: ChunkConfig):
    """Per-chunk gate geometry shared by the decomposition and the forward pass."""
    c, clen = cfg.num_chunks, cfg.chunk_len
    log_a = np.log(gates.alpha).reshape(c, clen)
    cum = np.cumsum(log_a, axis=1)
    dst_decay = np.exp(cum)  # product from chunk start through the position
    src_decay = np.exp(cum[:, -1:] - cum)  # product from the position (excl.) to chunk end
    chunk_log_gate = cum[:, -1].copy()  # whole-chunk log decay
    return dst_decay.reshape(-1), src_decay.reshape(-1), chunk_log_gate


def _intra_block(gates: GateSequence, lam: np.ndarray, cfg: ChunkConfig, i: int,
                 counter: FlopCounter | None = None) -> np.ndarray:
    """Dense composed mask restricted to diagonal chunk block i."""
    clen = cfg.chunk_len
    sl = slice(i * clen, (i + 1) * clen)
    decay = np.exp(segsum(np.log(gates.alpha[sl])))
    block = np.zeros((clen, clen))
    for lev in range(cfg.num_intra_levels):
        block += lam[sl, lev, None] * fenwick.level_mask(lev, clen)
        if counter is not None:
            counter.add(clen * clen)
    block *= decay
    if counter is not None:
        counter.add(clen * clen)
    return block


def decompose_mask(
    gates: GateSequence, lam: LambdaSchedule, cfg: ChunkConfig
) -> MaskDecomposition:
    """Split the composed mask into D plus one factored term per coarse level."""
    if gates.t_len != cfg.t_len or lam.t_len != cfg.t_len:
        raise ContractViolation("gate/lambda length must match the chunk config")
    d_blocks = tuple(
        _intra_block(gates, lam.lambdas, cfg, i) for i in range(cfg.num_chunks)
    )
    dst, src, chunk_log = _chunk_quantities(gates, cfg)
    terms = []
    for j in range(cfg.num_inter_levels):
        lev = cfg.num_intra_levels + j
        terms.append(
            LevelTerm(
                level=lev,
                lam=lam.lambdas[:, lev].copy(),
                src_decay=src,
                dst_decay=dst,
                chunk_log_gate=chunk_log,
                chunk_mask=fenwick.level_mask(j + 1, cfg.num_chunks),
            )
        )
    return MaskDecomposition(cfg, d_blocks, tuple(terms))


def densify_level_term(term: LevelTerm, cfg: ChunkConfig) -> np.ndarray:
    """Expand one factored level term to dense form (verification tier only)."""
    t_len, clen, c = cfg.t_len, cfg.chunk_len, cfg.num_chunks
    out = np.zeros((t_len, t_len))
    cum = np.concatenate(([0.0], np.cumsum(term.chunk_log_gate)))
    for z in range(c):
        rows = slice(z * clen, (z + 1) * clen)
        for w in range(c):
            if not term.chunk_mask[z, w]:
                continue
            cols = slice(w * clen, (w + 1) * clen)
            between = np.exp(cum[z] - cum[w + 1])  # chunks strictly between w and z
            out[rows, cols] = np.outer(
                term.lam[rows] * term.dst_decay[rows], term.src_decay[cols]
            ) * between
    return out


def densify_decomposition(dec: MaskDecomposition) -> np.ndarray:
    """D plus all level terms, as one dense mask (verification tier only)."""
    cfg = dec.cfg
    out = np.zeros((cfg.t_len, cfg.t_len))
    clen = cfg.chunk_len
    for i, block in enumerate(dec.d_blocks):
        sl = slice(i * clen, (i + 1) * clen)
        out[sl, sl] = block
    for term in dec.level_terms:
        out += densify_level_term(term, cfg)
    return out


def count_level_passes(cfg: ChunkConfig) -> int:
    """Inter-chunk sweeps the forward pass executes: log2(T / C)."""
    return cfg.num_inter_levels


def hattention_forward(
    inp: AttentionInputs, cfg: ChunkConfig, counter: FlopCounter | None = None
) -> np.ndarray:
    """Chunkwise forward pass for the scalar-gated log-linear variant."""
    if inp.lambdas is None:
        raise ContractViolation("chunkwise forward requires a lambda table")
    if inp.t_len != cfg.t_len:
        raise ContractViolation(
            f"input length {inp.t_len} does not match config T={cfg.t_len}"
        )
    t_len, dim = inp.t_len, inp.dim
    clen, c = cfg.chunk_len, cfg.num_chunks
    lam = inp.lambdas.lambdas
    out = np.zeros((t_len, dim))
    persistent = out.size

    # Intra-chunk: dense diagonal blocks.
    for i in range(c):
        sl = slice(i * clen, (i + 1) * clen)
        block = _intra_block(inp.gates, lam, cfg, i, counter=counter)
        scores = inp.q[sl] @ inp.k[sl].T
        out[sl] = (scores * block) @ inp.v[sl]
        if counter is not None:
            counter.add(2 * clen * clen * dim + clen * clen)
            counter.note_aux(persistent + 3 * clen * clen + clen * dim)

    if cfg.num_inter_levels == 0:
        return out

    dst_decay, src_decay, chunk_log = _chunk_quantities(inp.gates, cfg)
    g_chunk = np.exp(chunk_log)  # (c,) whole-chunk decay factors
    vs = (inp.v * src_decay[:, None]).reshape(c, clen, dim)
    states = np.matmul(vs.transpose(0, 2, 1), inp.k.reshape(c, clen, dim))
    persistent += dst_decay.size + src_decay.size + chunk_log.size + g_chunk.size
    persistent += states.size
    if counter is not None:
        counter.add(t_len * dim + t_len * dim * dim)
        counter.note_aux(persistent + vs.size)  # vs is live until states exist

    # Inter-chunk: one masked state-passing sweep per coarse level.
    for j in range(cfg.num_inter_levels):
        lev = cfg.num_intra_levels + j
        lam_col = (lam[:, lev] * dst_decay).reshape(c, clen)
        if counter is not None:
            counter.count_pass()
            counter.add(t_len)
            counter.note_aux(persistent + lam_col.size + dim * dim)
        reg = np.zeros((dim, dim))
        for z in range(c):
            run_odd = (z >> j) & 1
            if run_odd:
                sl = slice(z * clen, (z + 1) * clen)
                out[sl] += (inp.q[sl] @ reg.T) * lam_col[z][:, None]
                if counter is not None:
                    counter.add(clen * dim * dim + clen * dim)
            last_in_run = (z & ((1 << j) - 1)) == (1 << j) - 1
            if run_odd and last_in_run:
                reg = np.zeros((dim, dim))
            else:
                reg = g_chunk[z] * reg
                if counter is not None:
                    counter.add(dim * dim)
                if not run_odd:
                    reg = reg + states[z]
    return out


def flop_estimate(cfg: ChunkConfig, dim: int) -> int:
    """Multiply-add count of one forward pass, read off the counters."""
    rng = np.random.default_rng(0)
    t_len = cfg.t_len
    q = rng.uniform(-1.0, 1.0, (t_len, dim)) / np.sqrt(dim)
    k = rng.uniform(-1.0, 1.0, (t_len, dim)) / np.sqrt(dim)
    v = rng.uniform(-1.0, 1.0, (t_len, dim)) / np.sqrt(dim)
    inp = AttentionInputs(
        q, k, v, GateSequence(np.full(t_len, 0.9)), LambdaSchedule.all_ones(t_len)
    )
    counter = FlopCounter()
    hattention_forward(inp, cfg, counter=counter)
    return counter.madds
