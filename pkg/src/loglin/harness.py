"""Verification suites, deterministic input generation, and benchmarks.

Every randomized case is described by a RunConfig; rebuilding inputs from the
same config is bit-identical, so any failure printed by the verifier can be
replayed exactly.  Relative error between two arrays is measured as
max|a - b| / max(max|a|, max|b|, tiny).
"""

from __future__ import annotations

import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import chunkwise, decoder, fenwick, hmatrix, masks, reference
from .counters import FlopCounter
from .errors import ContractViolation
from .masks import GateSequence, LambdaSchedule
from .reference import AttentionInputs, VariantSpec

PRNG_ID = "numpy:PCG64"

DEFAULT_ALPHA_RANGE = (0.6, 1.0)
DEFAULT_BETA_RANGE = (0.5, 1.5)
DEFAULT_LAMBDA_RANGE = (0.0, 1.5)

VARIANT_SPECS = {
    "linear": VariantSpec("plain_qk", "ones"),
    "mamba2": VariantSpec("plain_qk", "semiseparable"),
    "deltanet": VariantSpec("deltanet", "ones"),
    "gated-deltanet": VariantSpec("deltanet", "semiseparable"),
    "loglinear-mamba2": VariantSpec("plain_qk", "semiseparable_and_hierarchical"),
    "loglinear-gated-deltanet": VariantSpec("deltanet", "semiseparable_and_hierarchical"),
}
VARIANT_DECODE_KINDS = {
    "linear": "plain",
    "mamba2": "gated",
    "deltanet": "delta",
    "gated-deltanet": "gated_delta",
    "loglinear-mamba2": "loglinear_gated",
    "loglinear-gated-deltanet": "loglinear_gated_delta",
}
LOGLINEAR_VARIANTS = ("loglinear-mamba2", "loglinear-gated-deltanet")


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class RunConfig:
    seed: int
    t_len: int
    dim: int
    chunk_len: int
    variant: str
    alpha_range: tuple = DEFAULT_ALPHA_RANGE
    beta_range: tuple = DEFAULT_BETA_RANGE
    lambda_range: tuple = DEFAULT_LAMBDA_RANGE

    def __post_init__(self):
        if self.variant not in VARIANT_SPECS:
            raise ContractViolation(f"unknown variant {self.variant!r}")
        if self.t_len < 1 or self.dim < 1 or self.chunk_len < 1:
            raise ContractViolation("t_len, dim and chunk_len must be positive")
        lo, hi = self.alpha_range
        if not (0.0 < lo <= hi <= 1.0):
            raise ContractViolation(f"alpha range {self.alpha_range} not within (0, 1]")
        lo, hi = self.beta_range
        if not (0.0 < lo <= hi <= 2.0):
            raise ContractViolation(f"beta range {self.beta_range} not within (0, 2]")
        lo, hi = self.lambda_range
        if not (0.0 <= lo <= hi):
            raise ContractViolation(f"lambda range {self.lambda_range} invalid")
        if self.variant in LOGLINEAR_VARIANTS:
            if not (_is_pow2(self.t_len) and _is_pow2(self.chunk_len)):
                raise ContractViolation(
                    "log-linear variants need power-of-two T and chunk length"
                )
            if self.chunk_len > self.t_len:
                raise ContractViolation("chunk length exceeds sequence length")

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("alpha_range", "beta_range", "lambda_range"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        for key in ("alpha_range", "beta_range", "lambda_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


def generate_inputs(cfg: RunConfig) -> AttentionInputs:
    """Deterministic inputs for one case; same config -> bit-identical arrays."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    t_len, dim = cfg.t_len, cfg.dim
    scale = 1.0 / np.sqrt(dim)
    q = rng.uniform(-1.0, 1.0, (t_len, dim)) * scale
    k = rng.uniform(-1.0, 1.0, (t_len, dim)) * scale
    v = rng.uniform(-1.0, 1.0, (t_len, dim)) * scale
    alpha = rng.uniform(cfg.alpha_range[0], cfg.alpha_range[1], t_len)
    if cfg.alpha_range[0] == cfg.alpha_range[1]:
        alpha = np.full(t_len, cfg.alpha_range[0])
    beta = rng.uniform(cfg.beta_range[0], cfg.beta_range[1], t_len)
    if cfg.beta_range[0] == cfg.beta_range[1]:
        beta = np.full(t_len, cfg.beta_range[0])
    lambdas = None
    if cfg.variant in LOGLINEAR_VARIANTS:
        lam = rng.uniform(cfg.lambda_range[0], cfg.lambda_range[1],
                          (t_len, fenwick.num_levels(t_len)))
        if cfg.lambda_range[0] == cfg.lambda_range[1]:
            lam = np.full_like(lam, cfg.lambda_range[0])
        lam = lam * fenwick.level_presence(t_len)  # weights at empty levels are unused
        lambdas = LambdaSchedule(lam)
    return AttentionInputs(q, k, v, GateSequence(alpha, beta), lambdas)


def inputs_fingerprint(inp: AttentionInputs) -> bytes:
    parts = [inp.q.tobytes(), inp.k.tobytes(), inp.v.tobytes(),
             inp.gates.alpha.tobytes(), inp.gates.beta.tobytes()]
    if inp.lambdas is not None:
        parts.append(inp.lambdas.lambdas.tobytes())
    return b"".join(parts)


def rel_err(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b)) / denom)


# ---------------------------------------------------------------------------
# Verification suites
# ---------------------------------------------------------------------------


@dataclass
class CaseFailure:
    suite: str
    detail: str
    err: float
    config: dict | None = None


@dataclass
class SuiteResult:
    name: str
    cases: int
    max_err: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


class _Recorder:
    def __init__(self, name: str):
        self.name = name
        self.cases = 0
        self.max_err = 0.0
        self.failures: list[CaseFailure] = []

    def check(self, err: float, tol: float, detail: str, cfg: RunConfig | None = None):
        self.cases += 1
        err = float(err)
        if np.isfinite(err):
            self.max_err = max(self.max_err, err)
        if not err <= tol:  # catches NaN as well
            self.failures.append(
                CaseFailure(self.name, f"{detail} (err={err!r} tol={tol:.1e})",
                            err, cfg.to_dict() if cfg else None)
            )

    def expect(self, ok: bool, detail: str, cfg: RunConfig | None = None):
        self.cases += 1
        if not ok:
            self.failures.append(CaseFailure(self.name, detail, float("nan"),
                                             cfg.to_dict() if cfg else None))

    def result(self) -> SuiteResult:
        return SuiteResult(self.name, self.cases, self.max_err, self.failures)


def _bit_length_arr(x: np.ndarray) -> np.ndarray:
    # exact for x < 2**52
    x = np.asarray(x, dtype=np.int64)
    return np.where(x > 0, np.floor(np.log2(np.maximum(x, 1))).astype(np.int64) + 1, 0)


def _suite_fenwick(seeds: int) -> SuiteResult:
    rec = _Recorder("fenwick")
    for t in range(4096):
        dec = fenwick.bucket_decomposition(t)
        ordered = sorted(dec.buckets, key=lambda b: b.start)
        cover_ok = ordered[0].start == 0 and ordered[-1].end_inclusive == t
        for a, b in zip(ordered, ordered[1:]):
            cover_ok = cover_ok and (b.start == a.end_inclusive + 1)
        sizes_ok = all(
            (b.size == 1 if b.level == 0 else b.size == 1 << (b.level - 1))
            for b in dec.buckets
        )
        levels = sorted(b.level for b in dec.buckets)
        want = [0] + sorted(i + 1 for i in range(t.bit_length()) if (t >> i) & 1)
        rec.expect(cover_ok and sizes_ok and levels == want,
                   f"partition broken at t={t}")
        rec.expect(len(dec.buckets) <= int(np.ceil(np.log2(t + 1))) + 2 if t else True,
                   f"bucket count bound broken at t={t}")
    for t in range(1024):
        slow = fenwick.level_row(t)
        fast = _bit_length_arr(t ^ np.arange(t + 1))
        rec.expect(bool(np.array_equal(slow, fast)), f"level closed form != scan at t={t}")
    # monotone coarsening: level_of(t, s) is nondecreasing in t for fixed s
    t_max = 512
    grid = np.arange(t_max)
    for s in range(0, t_max - 1, 7):
        lv = _bit_length_arr(grid[s:] ^ s)
        rec.expect(bool(np.all(np.diff(lv) >= 0)), f"coarsening not monotone at s={s}")
    # spot-check the scalar entry points against each other
    rng = np.random.Generator(np.random.PCG64(7))
    for _ in range(2000):
        t = int(rng.integers(0, 1024))
        s = int(rng.integers(0, t + 1))
        rec.expect(fenwick.level_of(t, s) == fenwick.level_of_fast(t, s),
                   f"level_of mismatch at ({t}, {s})")
    return rec.result()


def _mask_case_cfg(seed: int, t_len: int, dim: int = 4,
                   variant: str = "loglinear-mamba2") -> RunConfig:
    return RunConfig(seed=seed, t_len=t_len, dim=dim, chunk_len=min(t_len, 4),
                     variant=variant)


def _suite_masks(seeds: int) -> SuiteResult:
    rec = _Recorder("masks")
    sizes = (8, 16, 32, 64)
    for i in range(seeds):
        cfg = _mask_case_cfg(i, sizes[i % len(sizes)])
        inp = generate_inputs(cfg)
        alpha, lam = inp.gates.alpha, inp.lambdas
        t_len = cfg.t_len
        ms = masks.sss_mask(inp.gates)
        # direct-product oracle for the gated mask
        direct = np.zeros((t_len, t_len))
        for t in range(t_len):
            prod = 1.0
            direct[t, t] = 1.0
            for s in range(t - 1, -1, -1):
                prod *= alpha[s + 1]
                direct[t, s] = prod
        rec.check(rel_err(ms, direct), 1e-12, "gated mask != direct products", cfg)
        # 1-semiseparable structure: sampled 2x2 minors in the strict lower part
        rng = np.random.Generator(np.random.PCG64(1000 + i))
        minors = 0.0
        for _ in range(500):
            i2 = int(rng.integers(2, t_len))
            i1 = int(rng.integers(1, i2))
            j2 = int(rng.integers(0, i1))
            j1 = int(rng.integers(0, j2 + 1))
            minors = max(minors, abs(ms[i1, j1] * ms[i2, j2] - ms[i1, j2] * ms[i2, j1]))
        rec.check(minors, 1e-10, "gated mask minor exceeds rank-1 tolerance", cfg)
        mh = masks.hier_mask(lam)
        # independent level lookup per entry
        direct_h = np.zeros_like(mh)
        for t in range(t_len):
            lev_row = fenwick.level_row(t)
            direct_h[t, : t + 1] = lam.lambdas[t, lev_row]
        rec.check(rel_err(mh, direct_h), 0.0, "level-weight mask != per-entry lookup", cfg)
        # inside one level block, rows are constant multiples of the ones row
        for lev in range(1, lam.num_levels):
            mask_l = fenwick.level_mask(lev, t_len)
            rows = np.where(mask_l.any(axis=1))[0]
            for t in rows[:4]:
                cols = np.where(mask_l[t])[0]
                rec.check(float(np.ptp(mh[t, cols])), 0.0,
                          f"level {lev} block row not constant", cfg)
        composed = masks.compose_mask(ms, mh)
        rec.check(rel_err(composed, ms * direct_h), 1e-12,
                  "composed mask != direct formula", cfg)
        buf = io.StringIO()
        masks.write_mask_csv(composed, buf)
        buf.seek(0)
        rec.expect(bool(np.array_equal(masks.read_mask_csv(buf), composed)),
                   "mask CSV round trip not exact", cfg)
    ones_g = GateSequence.all_ones(16)
    ones_l = LambdaSchedule.all_ones(16)
    collapse = masks.compose_mask(masks.sss_mask(ones_g), masks.hier_mask(ones_l))
    rec.check(rel_err(collapse, masks.lower_ones(16)), 0.0,
              "unit gates and weights must give the plain causal mask")
    return rec.result()


def _delta_recurrence_oracle(inp: AttentionInputs) -> np.ndarray:
    """Stepwise delta-rule reference, gates ignored (ungated)."""
    t_len, dim = inp.t_len, inp.dim
    out = np.empty((t_len, dim))
    s = np.zeros((dim, dim))
    for t in range(t_len):
        k, v, beta = inp.k[t], inp.v[t], inp.gates.beta[t]
        s = s - beta * np.outer(s @ k, k) + np.outer(v, k)
        out[t] = s @ inp.q[t]
    return out


def _suite_deltanet(seeds: int) -> SuiteResult:
    rec = _Recorder("deltanet")
    # worked 2-step scalar case
    k0, v0, k1, v1, q1 = 0.7, 1.3, 0.5, -0.4, 0.9
    g = GateSequence(np.ones(2), np.ones(2))
    scores = masks.deltanet_scores(
        np.array([[0.0], [q1]]), np.array([[k0], [k1]]), g
    )
    o1 = scores[1, 0] * v0 + scores[1, 1] * v1
    rec.check(abs(o1 - (q1 * k0 * (1 - k1 * k1) * v0 + q1 * k1 * v1)), 1e-12,
              "worked 2-step delta case")
    for i in range(seeds):
        cfg = RunConfig(seed=3000 + i, t_len=16, dim=4, chunk_len=4, variant="deltanet")
        inp = generate_inputs(cfg)
        scores = masks.deltanet_scores(inp.q, inp.k, inp.gates)
        dense = (scores * masks.lower_ones(16)) @ inp.v
        rec.check(rel_err(dense, _delta_recurrence_oracle(inp)), 1e-10,
                  "delta scores != stepwise recurrence", cfg)
    # orthogonal key rows kill the correction term
    rng = np.random.Generator(np.random.PCG64(99))
    t_len, dim = 4, 8
    k = np.zeros((t_len, dim))
    for t in range(t_len):
        k[t, t] = rng.uniform(0.5, 1.0)
    q = rng.uniform(-1.0, 1.0, (t_len, dim))
    beta = rng.uniform(0.5, 1.5, t_len)
    scores = masks.deltanet_scores(q, k, GateSequence(np.ones(t_len), beta))
    rec.check(rel_err(scores, np.tril(q @ k.T)), 1e-13,
              "orthogonal keys should leave plain causal scores")
    # beta == 0 disables the correction exactly
    cfg = RunConfig(seed=77, t_len=12, dim=3, chunk_len=4, variant="deltanet")
    inp = generate_inputs(cfg)
    zero = GateSequence(inp.gates.alpha, np.zeros(12))
    scores = masks.deltanet_scores(inp.q, inp.k, zero)
    rec.check(float(np.max(np.abs(scores - np.tril(inp.q @ inp.k.T)))), 0.0,
              "beta=0 must degenerate to plain causal scores", cfg)
    return rec.result()


def _suite_attention_ref(seeds: int) -> SuiteResult:
    rec = _Recorder("attention-ref")
    names = list(VARIANT_SPECS)
    for i in range(seeds):
        variant = names[i % len(names)]
        t_len = 32 if variant in LOGLINEAR_VARIANTS else 24
        cfg = RunConfig(seed=4000 + i, t_len=t_len, dim=4, chunk_len=4, variant=variant)
        inp = generate_inputs(cfg)
        spec = VARIANT_SPECS[variant]
        base = reference.output_ref(inp, spec)
        # linearity in V
        rng = np.random.Generator(np.random.PCG64(5000 + i))
        v2 = rng.uniform(-1.0, 1.0, inp.v.shape)
        out_sum = reference.output_ref(
            AttentionInputs(inp.q, inp.k, inp.v + v2, inp.gates, inp.lambdas), spec
        )
        out_v2 = reference.output_ref(
            AttentionInputs(inp.q, inp.k, v2, inp.gates, inp.lambdas), spec
        )
        rec.check(rel_err(out_sum, base + out_v2), 1e-11, "not linear in V", cfg)
        # causality: perturbing the tail cannot change earlier rows at all
        cut = t_len // 2
        q2, k2, vv2 = inp.q.copy(), inp.k.copy(), inp.v.copy()
        q2[cut:], k2[cut:], vv2[cut:] = 0.25, -0.5, 0.125
        a2 = inp.gates.alpha.copy()
        a2[cut:] = 0.5
        b2 = inp.gates.beta.copy()
        b2[cut:] = 1.25
        lam2 = inp.lambdas
        if lam2 is not None:
            arr = lam2.lambdas.copy()
            arr[cut:] = 0.75
            lam2 = LambdaSchedule(arr)
        perturbed = reference.output_ref(
            AttentionInputs(q2, k2, vv2, GateSequence(a2, b2), lam2), spec
        )
        rec.expect(bool(np.array_equal(perturbed[:cut], base[:cut])),
                   f"causality broken for {variant}", cfg)
        # scaling Q by a power of two scales O exactly
        doubled = reference.output_ref(
            AttentionInputs(2.0 * inp.q, inp.k, inp.v, inp.gates, inp.lambdas), spec
        )
        rec.expect(bool(np.array_equal(doubled, 2.0 * base)),
                   f"head scaling not exact for {variant}", cfg)
    # single-step case
    cfg = RunConfig(seed=1, t_len=1, dim=3, chunk_len=1, variant="loglinear-mamba2")
    inp = generate_inputs(cfg)
    out = reference.loglinear_mamba2_ref(inp)
    want = inp.lambdas.lambdas[0, 0] * float(inp.q[0] @ inp.k[0]) * inp.v[0]
    rec.check(rel_err(out[0], want), 1e-14, "single-step output", cfg)
    return rec.result()


def _suite_decoder_linear(seeds: int) -> SuiteResult:
    rec = _Recorder("decoder-linear")
    t_choices = (8, 16, 64, 128)
    d_choices = (1, 4, 8)
    for i in range(seeds):
        for variant in ("linear", "mamba2", "deltanet", "gated-deltanet"):
            cfg = RunConfig(seed=6000 + i, t_len=t_choices[i % 4],
                            dim=d_choices[i % 3], chunk_len=4, variant=variant)
            inp = generate_inputs(cfg)
            got, peak = decoder.decode_sequence(inp, VARIANT_DECODE_KINDS[variant])
            want = reference.output_ref(inp, VARIANT_SPECS[variant])
            tol = 1e-8 if "delta" in variant else 1e-9
            rec.check(rel_err(got, want), tol, f"decoder != dense for {variant}", cfg)
            rec.expect(peak == 1, f"flat decoder peak != 1 for {variant}", cfg)
    return rec.result()


def _suite_decoder_loglinear(seeds: int) -> SuiteResult:
    rec = _Recorder("decoder-loglinear")
    t_choices = (8, 16, 64, 128)
    d_choices = (1, 4, 8)
    for i in range(seeds):
        t_len = t_choices[i % 4]
        for variant, ref_fn, tol in (
            ("loglinear-mamba2", reference.loglinear_mamba2_ref, 1e-9),
            ("loglinear-gated-deltanet", reference.loglinear_gated_deltanet_ref, 1e-8),
        ):
            cfg = RunConfig(seed=7000 + i, t_len=t_len, dim=d_choices[i % 3],
                            chunk_len=4, variant=variant)
            inp = generate_inputs(cfg)
            got, peak = decoder.decode_sequence(inp, VARIANT_DECODE_KINDS[variant])
            rec.check(rel_err(got, ref_fn(inp)), tol,
                      f"level decoder != dense for {variant}", cfg)
            rec.expect(peak == int(np.log2(t_len)) + 1,
                       f"peak state count != log2(T)+1 for {variant}", cfg)
    # live-level pattern tracks the bits of t
    cfg = RunConfig(seed=8123, t_len=64, dim=4, chunk_len=4, variant="loglinear-mamba2")
    inp = generate_inputs(cfg)
    state = decoder.empty_level_states(fenwick.num_levels(64))
    ok = True
    for t in range(64):
        state, _ = decoder.step_loglinear(
            state, inp.q[t], inp.k[t], inp.v[t], inp.gates.alpha[t],
            inp.gates.beta[t], inp.lambdas.lambdas[t], "gated", t=t
        )
        for lev, s in enumerate(state.states):
            live = s is not None
            want = (lev == 0) or ((t >> (lev - 1)) & 1 == 1)
            ok = ok and (live == want)
    rec.expect(ok, "live-level pattern diverges from the bits of t", cfg)
    # exact bucket reconstruction with integer-valued inputs, no gating
    rng = np.random.Generator(np.random.PCG64(55))
    t_len, dim = 32, 3
    k = rng.integers(-2, 3, (t_len, dim)).astype(float)
    v = rng.integers(-2, 3, (t_len, dim)).astype(float)
    gates = GateSequence.all_ones(t_len)
    lam = LambdaSchedule.all_ones(t_len)
    state = decoder.empty_level_states(fenwick.num_levels(t_len))
    recon_ok = True
    for t in range(t_len):
        state, _ = decoder.step_loglinear(
            state, np.zeros(dim), k[t], v[t], 1.0, 1.0, lam.lambdas[t], "gated", t=t
        )
        for bucket in fenwick.bucket_decomposition(t).buckets:
            want = np.zeros((dim, dim))
            for s in range(bucket.start, bucket.end_inclusive + 1):
                want += np.outer(v[s], k[s])
            got = state.states[bucket.level]
            recon_ok = recon_ok and got is not None and np.array_equal(got, want)
    rec.expect(recon_ok, "level states do not reconstruct bucket sums exactly")
    return rec.result()


def _suite_chunkwise(seeds: int) -> SuiteResult:
    rec = _Recorder("chunkwise")
    t_choices = (8, 16, 32, 64, 128, 256)
    d_choices = (1, 4, 8, 16)
    for i in range(seeds):
        t_len = t_choices[i % len(t_choices)]
        cfg = RunConfig(seed=9000 + i, t_len=t_len, dim=d_choices[i % 4],
                        chunk_len=1, variant="loglinear-mamba2")
        inp = generate_inputs(cfg)
        dense = reference.loglinear_mamba2_ref(inp)
        dec_out, _ = decoder.decode_sequence(inp, "loglinear_gated")
        rec.check(rel_err(dense, dec_out), 1e-9, "dense != decoder", cfg)
        outputs = []
        clen = 1
        while clen <= t_len:
            ccfg = replace(cfg, chunk_len=clen)
            got = chunkwise.hattention_forward(
                inp, chunkwise.ChunkConfig(t_len, clen)
            )
            outputs.append(got)
            rec.check(rel_err(got, dense), 1e-9,
                      f"chunkwise != dense at C={clen}", ccfg)
            rec.check(rel_err(got, dec_out), 1e-9,
                      f"chunkwise != decoder at C={clen}", ccfg)
            clen *= 2
        spread = max(rel_err(outputs[0], o) for o in outputs[1:]) if len(outputs) > 1 else 0.0
        rec.check(spread, 1e-10, "output depends on the chunk size", cfg)
    rec.expect(chunkwise.count_level_passes(chunkwise.ChunkConfig(64, 8)) == 3,
               "level passes for T=64, C=8 should be 3")
    rec.expect(chunkwise.count_level_passes(chunkwise.ChunkConfig(64, 64)) == 0,
               "level passes for T=C should be 0")
    f1 = chunkwise.flop_estimate(chunkwise.ChunkConfig(256, 16), 8)
    f2 = chunkwise.flop_estimate(chunkwise.ChunkConfig(256, 16), 8)
    rec.expect(f1 == f2 and f1 > 0, "flop counters must be deterministic")
    return rec.result()


def _suite_mask_decomposition(seeds: int) -> SuiteResult:
    rec = _Recorder("mask-decomposition")
    t_choices = (8, 16, 32, 64)
    for i in range(seeds):
        t_len = t_choices[i % len(t_choices)]
        options = [1 << p for p in range(t_len.bit_length())]
        clen = options[i % len(options)]
        cfg = RunConfig(seed=11000 + i, t_len=t_len, dim=2, chunk_len=clen,
                        variant="loglinear-mamba2")
        inp = generate_inputs(cfg)
        ccfg = chunkwise.ChunkConfig(t_len, clen)
        dec = chunkwise.decompose_mask(inp.gates, inp.lambdas, ccfg)
        composed = masks.compose_mask(masks.sss_mask(inp.gates),
                                      masks.hier_mask(inp.lambdas))
        rec.check(rel_err(chunkwise.densify_decomposition(dec), composed), 1e-12,
                  f"decomposition reconstruction at C={clen}", cfg)
        if clen == t_len:
            rec.expect(len(dec.level_terms) == 0, "C=T should leave only D", cfg)
    return rec.result()


def _suite_hmatrix(seeds: int) -> SuiteResult:
    rec = _Recorder("hmatrix")
    t_choices = (8, 64, 256)
    for i in range(seeds):
        t_len = t_choices[i % len(t_choices)]
        cfg = RunConfig(seed=12000 + i, t_len=t_len, dim=2, chunk_len=min(t_len, 8),
                        variant="loglinear-mamba2", alpha_range=(0.05, 1.0))
        inp = generate_inputs(cfg)
        h = hmatrix.from_params(inp.gates, inp.lambdas)
        dense = hmatrix.densify(h)
        composed = masks.compose_mask(masks.sss_mask(inp.gates),
                                      masks.hier_mask(inp.lambdas))
        rec.check(rel_err(dense, composed), 1e-11, "densified factors != mask", cfg)
        rng = np.random.Generator(np.random.PCG64(13000 + i))
        x = rng.uniform(-1.0, 1.0, t_len)
        rec.check(rel_err(hmatrix.matvec(h, x), dense @ x), 1e-10,
                  "fast matvec != dense matvec", cfg)
        rec.check(rel_err(hmatrix.recovered_alpha(h), inp.gates.alpha), 1e-11,
                  "gate recovery from factors", cfg)
        rec.check(rel_err(hmatrix.recovered_lambda(h), inp.lambdas.lambdas), 1e-11,
                  "weight recovery from factors", cfg)
        bound = 4.0 * t_len * max(np.log2(t_len), 1.0)
        rec.expect(h.storage_scalars() <= bound,
                   f"stored scalars exceed 4 T log2 T at T={t_len}", cfg)
    # deep sequence with small gates: factors must stay finite
    t_len = 4096
    gates = GateSequence(np.full(t_len, 1e-3))
    lam = LambdaSchedule.all_ones(t_len)
    h = hmatrix.from_params(gates, lam)
    finite = np.isfinite(h.log_u).all() and all(
        np.isfinite(b.row_logdec).all() and np.isfinite(b.col_logdec).all()
        for b in h.blocks
    )
    rec.expect(bool(finite), "log factors overflowed on a deep small-gate sequence")
    rec.check(rel_err(hmatrix.recovered_alpha(h), gates.alpha), 1e-11,
              "gate recovery on a deep small-gate sequence")
    return rec.result()


def _suite_collapse(seeds: int) -> SuiteResult:
    rec = _Recorder("collapse")
    t_choices = (8, 16, 32, 64)
    for i in range(seeds):
        t_len = t_choices[i % len(t_choices)]
        cfg = RunConfig(seed=14000 + i, t_len=t_len, dim=4, chunk_len=4,
                        variant="loglinear-mamba2", lambda_range=(1.0, 1.0))
        inp = generate_inputs(cfg)
        flat = AttentionInputs(inp.q, inp.k, inp.v, inp.gates, None)
        ones = AttentionInputs(inp.q, inp.k, inp.v, inp.gates, LambdaSchedule.all_ones(t_len))
        dense_gated = reference.output_ref(flat, VARIANT_SPECS["mamba2"])
        rec.check(rel_err(reference.loglinear_mamba2_ref(ones), dense_gated), 1e-12,
                  "unit weights: dense log-linear != gated dense", cfg)
        dec_log, _ = decoder.decode_sequence(ones, "loglinear_gated")
        dec_flat, _ = decoder.decode_sequence(flat, "gated")
        rec.check(rel_err(dec_log, dec_flat), 1e-12,
                  "unit weights: level decoder != flat decoder", cfg)
        ck = chunkwise.hattention_forward(ones, chunkwise.ChunkConfig(t_len, 4))
        rec.check(rel_err(ck, dense_gated), 1e-12,
                  "unit weights: chunkwise != gated dense", cfg)
        dense_gdn = reference.output_ref(flat, VARIANT_SPECS["gated-deltanet"])
        rec.check(rel_err(reference.loglinear_gated_deltanet_ref(ones), dense_gdn), 1e-12,
                  "unit weights: dense log-linear delta != gated delta dense", cfg)
        dec_log_d, _ = decoder.decode_sequence(ones, "loglinear_gated_delta")
        dec_flat_d, _ = decoder.decode_sequence(flat, "gated_delta")
        rec.check(rel_err(dec_log_d, dec_flat_d), 1e-12,
                  "unit weights: level delta decoder != flat delta decoder", cfg)
    return rec.result()


SUITES = {
    "fenwick": _suite_fenwick,
    "masks": _suite_masks,
    "deltanet": _suite_deltanet,
    "attention-ref": _suite_attention_ref,
    "decoder-linear": _suite_decoder_linear,
    "decoder-loglinear": _suite_decoder_loglinear,
    "chunkwise": _suite_chunkwise,
    "mask-decomposition": _suite_mask_decomposition,
    "hmatrix": _suite_hmatrix,
    "collapse": _suite_collapse,
}


def run_verify(name_filter: str | None = None, seeds: int = 25, workers: int = 1,
               stream=None) -> int:
    """Run the verification suites; returns the process exit code."""
    stream = stream if stream is not None else sys.stdout
    names = [n for n in SUITES if name_filter is None or name_filter in n]
    if not names:
        print(f"verify: no suite matches filter {name_filter!r}", file=stream)
        return 2
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda n: SUITES[n](seeds), names))
    else:
        results = [SUITES[n](seeds) for n in names]
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"suite {res.name}: {res.cases} cases, max_err {res.max_err:.3e}, {status}",
              file=stream)
        for f in res.failures:
            replay = json.dumps(f.config) if f.config else "n/a"
            print(f"  FAIL {f.suite}: {f.detail} replay={replay}", file=stream)
        failed += 0 if res.passed else 1
    print(f"verify: {len(results) - failed}/{len(results)} suites passed "
          f"(prng={PRNG_ID}, seeds={seeds})", file=stream)
    return 0 if failed == 0 else 1


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------


BENCH_VARIANTS = ("chunkwise", "decode", "decode-delta", "dense-oracle")
BENCH_CSV_HEADER = "variant,T,d,C,flops,wall_ns,peak_states,max_rel_err"


@dataclass
class BenchRecord:
    variant: str
    t_len: int
    dim: int
    chunk_len: int
    flops: int | None
    wall_ns: int | None
    peak_states: int | None
    max_rel_err: float | None
    skipped: bool = False

    def csv_row(self) -> str:
        cells = [self.variant, str(self.t_len), str(self.dim), str(self.chunk_len)]
        for value in (self.flops, self.wall_ns, self.peak_states):
            cells.append("" if value is None else str(value))
        cells.append("" if self.max_rel_err is None else repr(self.max_rel_err))
        return ",".join(cells)


def _median_wall_ns(fn, reps: int = 5) -> int:
    samples = []
    for _ in range(reps):
        start = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - start)
    return int(np.median(samples))


def bench_records(variants, t_min: int, t_max: int, chunk_len: int, dim: int,
                  seed: int = 0, oracle_cap: int = reference.ORACLE_CAP) -> list:
    """Sweep T over powers of two and collect one record per (variant, T)."""
    if not (_is_pow2(t_min) and _is_pow2(t_max) and t_min <= t_max):
        raise ContractViolation("t range must be powers of two with t_min <= t_max")
    if not _is_pow2(chunk_len):
        raise ContractViolation("chunk length must be a power of two")
    for v in variants:
        if v not in BENCH_VARIANTS:
            raise ContractViolation(f"unknown bench variant {v!r}")
    records = []
    t_len = t_min
    while t_len <= t_max:
        clen = min(chunk_len, t_len)
        cfg = RunConfig(seed=seed, t_len=t_len, dim=dim, chunk_len=clen,
                        variant="loglinear-mamba2")
        inp = generate_inputs(cfg)
        oracle = None
        if t_len <= oracle_cap:
            oracle = reference.loglinear_mamba2_ref(inp)
        for variant in variants:
            records.append(_bench_one(variant, cfg, inp, oracle, oracle_cap))
        t_len *= 2
    return records


def _bench_one(variant: str, cfg: RunConfig, inp: AttentionInputs,
               oracle, oracle_cap: int) -> BenchRecord:
    t_len, dim, clen = cfg.t_len, cfg.dim, cfg.chunk_len
    if variant == "chunkwise":
        ccfg = chunkwise.ChunkConfig(t_len, clen)
        counter = FlopCounter()
        out = chunkwise.hattention_forward(inp, ccfg, counter=counter)
        wall = _median_wall_ns(lambda: chunkwise.hattention_forward(inp, ccfg))
        live_states = (t_len // clen) + 1 if ccfg.num_inter_levels > 0 else 0
        err = rel_err(out, oracle) if oracle is not None else None
        return BenchRecord(variant, t_len, dim, clen, counter.madds, wall,
                           live_states, err)
    if variant in ("decode", "decode-delta"):
        kind = "loglinear_gated" if variant == "decode" else "loglinear_gated_delta"
        counter = FlopCounter()
        out, peak = decoder.decode_sequence(inp, kind, counter=counter)
        wall = _median_wall_ns(lambda: decoder.decode_sequence(inp, kind))
        err = None
        if oracle is not None:
            ref = oracle if variant == "decode" else reference.loglinear_gated_deltanet_ref(inp)
            err = rel_err(out, ref)
        return BenchRecord(variant, t_len, dim, clen, counter.madds, wall, peak, err)
    if variant == "dense-oracle":
        if t_len > oracle_cap:
            return BenchRecord(variant, t_len, dim, clen, None, None, None, None,
                               skipped=True)
        counter = FlopCounter()
        reference.loglinear_mamba2_ref(inp, counter=counter)
        wall = _median_wall_ns(lambda: reference.loglinear_mamba2_ref(inp))
        return BenchRecord(variant, t_len, dim, clen, counter.madds, wall, 0, 0.0)
    raise ContractViolation(f"unknown bench variant {variant!r}")


def write_bench_csv(records, fileobj) -> None:
    fileobj.write(BENCH_CSV_HEADER + "\n")
    for rec in records:
        fileobj.write(rec.csv_row() + "\n")


def write_bench_json(records, fileobj, seed: int) -> None:
    payload = {
        "meta": {"prng": PRNG_ID, "seed": seed, "schema": BENCH_CSV_HEADER.split(",")},
        "records": [asdict(rec) for rec in records],
    }
    json.dump(payload, fileobj, indent=2)
    fileobj.write("\n")


# ---------------------------------------------------------------------------
# Mask dump
# ---------------------------------------------------------------------------


MASK_DUMP_HEADER = "t,s,level,value"


def run_mask_dump(cfg: RunConfig, fileobj) -> int:
    """Write t,s,level,value rows of the composed mask; returns the row count."""
    if cfg.t_len > reference.ORACLE_CAP:
        raise ContractViolation(f"T={cfg.t_len} exceeds the oracle cap")
    if cfg.variant not in LOGLINEAR_VARIANTS:
        raise ContractViolation("mask dumps need a log-linear variant config")
    inp = generate_inputs(cfg)
    composed = masks.compose_mask(masks.sss_mask(inp.gates),
                                  masks.hier_mask(inp.lambdas))
    fileobj.write(MASK_DUMP_HEADER + "\n")
    rows = 0
    for t in range(cfg.t_len):
        lev_row = fenwick.level_row(t)
        for s in range(t + 1):
            fileobj.write(f"{t},{s},{int(lev_row[s])},{float(composed[t, s])!r}\n")
            rows += 1
    return rows
