"""Step-by-step recurrent inference.

Two families:

* Flat O(1)-state recurrences over a single d x d memory S:
    plain        S <- S + v k^T
    gated        S <- alpha S + v k^T
    delta        S <- S (I - beta k k^T) + v k^T
    gated_delta  S <- alpha S (I - beta k k^T) + v k^T
  with output o = S q after the update.

* The O(log T)-state recurrence over one memory per level.  Each step:
    (1) apply the flat transition of the kind to every live level state;
    (2) for t >= 1, merge: the states at levels 0..lssb(t) sum into level
        lssb(t)+1 and those levels empty out (levels above are untouched);
    (3) the fresh outer product v k^T enters level 0;
    (4) o = sum_l lam[l] * (S^(l) q) over live levels.
  Transition-before-merge is what makes gating correct: the gate product for
  a source position spans (s, t] regardless of which bucket holds it, so the
  same per-step factor applies to every level.

Empty levels are held as None, so the live-level pattern mirrors the binary
representation of t exactly and memory accounting stays honest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fenwick
from .counters import FlopCounter
from .errors import ContractViolation
from .linalg import as_vector
from .reference import AttentionInputs

LINEAR_KINDS = ("plain", "gated", "delta", "gated_delta")
LOGLINEAR_KINDS = ("gated", "gated_delta")
DECODE_KINDS = LINEAR_KINDS + ("loglinear_gated", "loglinear_gated_delta")


@dataclass(frozen=True, eq=False)
class FlatState:
    s: np.ndarray  # (d, d) memory, rows index the value dimension
    t: int  # last processed step, -1 when fresh


@dataclass(eq=False)
class LevelStateSet:
    states: list  # index l -> (d, d) array or None when the level is empty
    t: int  # last processed step, -1 when fresh

    @property
    def present_count(self) -> int:
        return sum(1 for s in self.states if s is not None)


def empty_flat_state(dim: int) -> FlatState:
    return FlatState(np.zeros((dim, dim)), -1)


def empty_level_states(levels: int) -> LevelStateSet:
    return LevelStateSet([None] * levels, -1)


def _flat_transition(s, k, alpha, beta, kind):
    if kind == "plain":
        return s
    if kind == "gated":
        return alpha * s
    if kind == "delta":
        return s - beta * np.outer(s @ k, k)
    if kind == "gated_delta":
        return alpha * (s - beta * np.outer(s @ k, k))
    raise ContractViolation(f"unknown step kind {kind!r}")


def step_linear_family(
    state: FlatState, q, k, v, alpha: float, beta: float, kind: str
) -> tuple[FlatState, np.ndarray]:
    if kind not in LINEAR_KINDS:
        raise ContractViolation(f"unknown flat kind {kind!r}")
    q, k, v = as_vector(q), as_vector(k), as_vector(v)
    s = _flat_transition(state.s, k, alpha, beta, kind) + np.outer(v, k)
    return FlatState(s, state.t + 1), s @ q


def step_loglinear(
    state: LevelStateSet,
    q,
    k,
    v,
    alpha: float,
    beta: float,
    lam_row,
    kind: str,
    t: int | None = None,
) -> tuple[LevelStateSet, np.ndarray]:
    """Advance the level states by one step and read the output.

    ``t`` defaults to state.t + 1; passing anything else is a contract
    violation.  ``lam_row`` must cover every level that can be live at t.
    """
    if kind not in LOGLINEAR_KINDS:
        raise ContractViolation(f"unknown level-recurrence kind {kind!r}")
    if t is None:
        t = state.t + 1
    elif t != state.t + 1:
        raise ContractViolation(f"time mismatch: state at {state.t}, step asks {t}")
    q, k, v = as_vector(q), as_vector(k), as_vector(v)
    lam_row = np.ascontiguousarray(lam_row, dtype=np.float64)

    trans_kind = "gated" if kind == "gated" else "gated_delta"
    states = [
        None if s is None else _flat_transition(s, k, alpha, beta, trans_kind)
        for s in state.states
    ]

    if t >= 1:
        j = fenwick.lssb(t)
        if j + 1 >= len(states):
            raise ContractViolation(f"state list too short for step t={t}")
        merged = None
        for lev in range(j + 1):
            if states[lev] is not None:
                merged = states[lev] if merged is None else merged + states[lev]
                states[lev] = None
        states[j + 1] = merged

    # beta scales only the removal term, never the injected outer product.
    states[0] = np.outer(v, k)

    live = [lev for lev, s in enumerate(states) if s is not None]
    if lam_row.shape[0] < max(live) + 1:
        raise ContractViolation("lam_row shorter than the live level range")
    o = np.zeros(q.shape[0])
    for lev in live:
        o += lam_row[lev] * (states[lev] @ q)
    return LevelStateSet(states, t), o


def _loglinear_base_kind(kind: str) -> str:
    return "gated" if kind == "loglinear_gated" else "gated_delta"


def decode_sequence(
    inp: AttentionInputs, kind: str, counter: FlopCounter | None = None
) -> tuple[np.ndarray, int]:
    """Run the whole sequence through the stepwise recurrence.

    Returns the stacked (T x d) outputs and the peak number of simultaneously
    live state matrices (1 for the flat kinds).
    """
    if kind not in DECODE_KINDS:
        raise ContractViolation(f"unknown decode kind {kind!r}")
    t_len, dim = inp.t_len, inp.dim
    alpha, beta = inp.gates.alpha, inp.gates.beta
    out = np.empty((t_len, dim))

    if kind in LINEAR_KINDS:
        # per step: transition multiplies + the fresh outer product + the read
        per_step = {"plain": 2, "gated": 3, "delta": 5, "gated_delta": 6}[kind]
        state = empty_flat_state(dim)
        for t in range(t_len):
            state, out[t] = step_linear_family(
                state, inp.q[t], inp.k[t], inp.v[t], alpha[t], beta[t], kind
            )
            if counter is not None:
                counter.add(per_step * dim * dim)
        return out, 1

    if inp.lambdas is None:
        raise ContractViolation("log-linear decoding requires a lambda table")
    if t_len & (t_len - 1):
        raise ContractViolation("log-linear decoding requires power-of-two T")
    base = _loglinear_base_kind(kind)
    trans_cost = (1 if base == "gated" else 4) * dim * dim
    state = empty_level_states(fenwick.num_levels(t_len))
    peak = 0
    lam = inp.lambdas.lambdas
    for t in range(t_len):
        live_before = state.present_count
        state, out[t] = step_loglinear(
            state, inp.q[t], inp.k[t], inp.v[t], alpha[t], beta[t], lam[t], base, t=t
        )
        peak = max(peak, state.present_count)
        if counter is not None:
            # transitions hit the old live set, reads the new one; merge is adds
            counter.add(live_before * trans_cost + dim * dim
                        + state.present_count * (dim * dim + dim))
    return out, peak
