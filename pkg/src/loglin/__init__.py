"""Log-linear attention: reference forms, recurrent decoding, chunkwise training.

The package provides three independently implemented routes to the same
outputs -- dense parallel forms, an O(log T)-state stepwise decoder, and a
chunkwise forward pass -- plus the mask/factorization machinery they share
and a verification harness that holds them against each other.
"""

from .chunkwise import ChunkConfig, count_level_passes, decompose_mask, flop_estimate, hattention_forward
from .counters import FlopCounter
from .decoder import decode_sequence, step_linear_family, step_loglinear
from .errors import ContractViolation
from .fenwick import bucket_decomposition, level_mask, level_of, level_of_fast, lssb, num_levels
from .hmatrix import QuasiHMatrix, from_params, matvec
from .masks import GateSequence, LambdaSchedule, compose_mask, deltanet_scores, hier_mask, segsum, sss_mask
from .reference import (
    AttentionInputs,
    VariantSpec,
    loglinear_gated_deltanet_ref,
    loglinear_mamba2_ref,
    output_ref,
)

__version__ = "0.1.0"

__all__ = [
    "AttentionInputs",
    "ChunkConfig",
    "ContractViolation",
    "FlopCounter",
    "GateSequence",
    "LambdaSchedule",
    "QuasiHMatrix",
    "VariantSpec",
    "bucket_decomposition",
    "compose_mask",
    "count_level_passes",
    "decode_sequence",
    "decompose_mask",
    "deltanet_scores",
    "flop_estimate",
    "from_params",
    "hattention_forward",
    "hier_mask",
    "level_mask",
    "level_of",
    "level_of_fast",
    "loglinear_gated_deltanet_ref",
    "loglinear_mamba2_ref",
    "lssb",
    "matvec",
    "num_levels",
    "output_ref",
    "segsum",
    "sss_mask",
    "step_linear_family",
    "step_loglinear",
]
