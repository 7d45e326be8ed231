"""Dense O(T^2) reference forms: the ground truth the fast paths must match.

Every variant is the same three-step computation: build a score matrix A,
build a causal mask M, return (A o M) V.  Scores are either raw dot products
Q K^T or the delta-rule scores; the mask is ones, gated, level-weighted, or
the composition of the last two.  Simplicity is the point: this module always
materializes A and M, and is capped at a sequence length where that stays
cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import masks
from .counters import FlopCounter
from .errors import ContractViolation
from .linalg import as_matrix
from .masks import GateSequence, LambdaSchedule

ORACLE_CAP = 512

SCORE_KINDS = ("plain_qk", "deltanet")
TEMPORAL_KINDS = (
    "ones",
    "semiseparable",
    "hierarchical",
    "semiseparable_and_hierarchical",
)
_HIER_KINDS = ("hierarchical", "semiseparable_and_hierarchical")


@dataclass(frozen=True)
class VariantSpec:
    score_kind: str
    temporal_kind: str

    def __post_init__(self):
        if self.score_kind not in SCORE_KINDS:
            raise ContractViolation(f"unknown score kind {self.score_kind!r}")
        if self.temporal_kind not in TEMPORAL_KINDS:
            raise ContractViolation(f"unknown temporal kind {self.temporal_kind!r}")

    @property
    def needs_lambdas(self) -> bool:
        return self.temporal_kind in _HIER_KINDS


@dataclass(frozen=True, eq=False)
class AttentionInputs:
    """One head's inputs: q/k/v are (T x d); gates length T; lambdas optional."""

    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    gates: GateSequence
    lambdas: LambdaSchedule | None = field(default=None)

    def __post_init__(self):
        q = as_matrix(self.q)
        k = as_matrix(self.k)
        v = as_matrix(self.v)
        if not (q.shape == k.shape == v.shape):
            raise ContractViolation(
                f"q/k/v must share dims, got {q.shape}/{k.shape}/{v.shape}"
            )
        if self.gates.t_len != q.shape[0]:
            raise ContractViolation("gate length must equal the sequence length")
        if self.lambdas is not None and self.lambdas.t_len != q.shape[0]:
            raise ContractViolation("lambda table length must equal the sequence length")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "v", v)

    @property
    def t_len(self) -> int:
        return self.q.shape[0]

    @property
    def dim(self) -> int:
        return self.q.shape[1]


def output_ref(
    inp: AttentionInputs,
    variant: VariantSpec,
    oracle_cap: int = ORACLE_CAP,
    counter: FlopCounter | None = None,
) -> np.ndarray:
    """(A o M) V for the requested variant; returns the (T x d) output."""
    t_len, dim = inp.t_len, inp.dim
    if t_len > oracle_cap:
        raise ContractViolation(f"T={t_len} exceeds the oracle cap {oracle_cap}")
    if variant.needs_lambdas:
        if inp.lambdas is None:
            raise ContractViolation("hierarchical variants require a lambda table")
        if t_len & (t_len - 1):
            raise ContractViolation("hierarchical variants require power-of-two T")

    if variant.score_kind == "plain_qk":
        scores = inp.q @ inp.k.T
        if counter is not None:
            counter.add(t_len * t_len * dim)
    else:
        scores = masks.deltanet_scores(inp.q, inp.k, inp.gates, counter=counter)

    if variant.temporal_kind == "ones":
        mask = masks.lower_ones(t_len)
    elif variant.temporal_kind == "semiseparable":
        mask = masks.sss_mask(inp.gates)
    elif variant.temporal_kind == "hierarchical":
        mask = masks.hier_mask(inp.lambdas)
    else:
        mask = masks.compose_mask(masks.sss_mask(inp.gates), masks.hier_mask(inp.lambdas))
    if counter is not None:
        counter.add(2 * t_len * t_len + t_len * t_len * dim)  # mask apply + PV
    return (scores * mask) @ inp.v


def loglinear_mamba2_ref(inp: AttentionInputs, **kwargs) -> np.ndarray:
    """Scalar-gated scores under the composed gated/level-weight mask."""
    return output_ref(inp, VariantSpec("plain_qk", "semiseparable_and_hierarchical"), **kwargs)


def loglinear_gated_deltanet_ref(inp: AttentionInputs, **kwargs) -> np.ndarray:
    """Delta-rule scores under the composed gated/level-weight mask."""
    return output_ref(inp, VariantSpec("deltanet", "semiseparable_and_hierarchical"), **kwargs)
