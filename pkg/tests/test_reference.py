import numpy as np
import pytest

from loglin import reference
from loglin.errors import ContractViolation
from loglin.harness import RunConfig, generate_inputs, rel_err
from loglin.masks import GateSequence, LambdaSchedule
from loglin.reference import AttentionInputs, VariantSpec


def make_inputs(seed, t_len, dim, variant="loglinear-mamba2", **kw):
    return generate_inputs(RunConfig(seed=seed, t_len=t_len, dim=dim,
                                     chunk_len=1, variant=variant, **kw))


def test_single_step_output():
    inp = make_inputs(0, 1, 3)
    out = reference.loglinear_mamba2_ref(inp)
    want = inp.lambdas.lambdas[0, 0] * float(inp.q[0] @ inp.k[0]) * inp.v[0]
    assert rel_err(out, want[None, :]) <= 1e-15


@pytest.mark.parametrize("seed", range(6))
def test_plain_linear_matches_cumulative_recurrence(seed):
    inp = make_inputs(seed, 24, 4, variant="linear")
    out = reference.output_ref(inp, VariantSpec("plain_qk", "ones"))
    s = np.zeros((4, 4))
    for t in range(24):
        s = s + np.outer(inp.v[t], inp.k[t])
        assert rel_err(out[t], s @ inp.q[t]) <= 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_gated_matches_gated_recurrence(seed):
    inp = make_inputs(seed, 24, 4, variant="mamba2")
    out = reference.output_ref(inp, VariantSpec("plain_qk", "semiseparable"))
    s = np.zeros((4, 4))
    for t in range(24):
        s = inp.gates.alpha[t] * s + np.outer(inp.v[t], inp.k[t])
        assert rel_err(out[t], s @ inp.q[t]) <= 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_gated_deltanet_matches_recurrence(seed):
    inp = make_inputs(seed, 20, 4, variant="gated-deltanet")
    out = reference.output_ref(inp, VariantSpec("deltanet", "semiseparable"))
    s = np.zeros((4, 4))
    for t in range(20):
        a, b = inp.gates.alpha[t], inp.gates.beta[t]
        k, v = inp.k[t], inp.v[t]
        s = a * (s - b * np.outer(s @ k, k)) + np.outer(v, k)
        assert rel_err(out[t], s @ inp.q[t]) <= 1e-10


def test_hierarchical_all_ones_collapses_to_plain():
    inp = make_inputs(3, 32, 4, lambda_range=(1.0, 1.0))
    ones = AttentionInputs(inp.q, inp.k, inp.v, GateSequence.all_ones(32),
                           LambdaSchedule.all_ones(32))
    flat = AttentionInputs(inp.q, inp.k, inp.v, GateSequence.all_ones(32), None)
    got = reference.output_ref(ones, VariantSpec("plain_qk", "hierarchical"))
    want = reference.output_ref(flat, VariantSpec("plain_qk", "ones"))
    assert rel_err(got, want) <= 1e-12


def test_level0_only_weights():
    inp = make_inputs(5, 16, 3)
    lam = np.zeros_like(inp.lambdas.lambdas)
    lam[:, 0] = inp.lambdas.lambdas[:, 0]
    only0 = AttentionInputs(inp.q, inp.k, inp.v, inp.gates, LambdaSchedule(lam))
    out = reference.loglinear_mamba2_ref(only0)
    for t in range(16):
        want = lam[t, 0] * float(inp.q[t] @ inp.k[t]) * inp.v[t]
        assert rel_err(out[t], want) <= 1e-12


def test_gated_deltanet_ref_beta_zero_equals_mamba2_ref():
    inp = make_inputs(7, 32, 4, variant="loglinear-gated-deltanet")
    zero_beta = AttentionInputs(
        inp.q, inp.k, inp.v,
        GateSequence(inp.gates.alpha, np.zeros(32)), inp.lambdas,
    )
    got = reference.loglinear_gated_deltanet_ref(zero_beta)
    want = reference.loglinear_mamba2_ref(zero_beta)
    assert np.array_equal(got, want)


def test_oracle_cap_and_power_of_two_contracts():
    inp = make_inputs(0, 8, 2)
    with pytest.raises(ContractViolation):
        reference.output_ref(inp, VariantSpec("plain_qk", "ones"), oracle_cap=4)
    flat = AttentionInputs(inp.q, inp.k, inp.v, inp.gates, None)
    with pytest.raises(ContractViolation):
        reference.output_ref(flat, VariantSpec("plain_qk", "hierarchical"))
    bad_len = make_inputs(0, 12, 2, variant="linear")
    with pytest.raises(ContractViolation):
        reference.output_ref(
            AttentionInputs(bad_len.q, bad_len.k, bad_len.v, bad_len.gates,
                            LambdaSchedule(np.ones((12, 5)))),
            VariantSpec("plain_qk", "hierarchical"),
        )


def test_linearity_in_values():
    inp = make_inputs(9, 32, 4)
    rng = np.random.Generator(np.random.PCG64(1))
    v2 = rng.uniform(-1, 1, inp.v.shape)
    spec = VariantSpec("plain_qk", "semiseparable_and_hierarchical")
    out_sum = reference.output_ref(
        AttentionInputs(inp.q, inp.k, inp.v + v2, inp.gates, inp.lambdas), spec)
    out_a = reference.output_ref(inp, spec)
    out_b = reference.output_ref(
        AttentionInputs(inp.q, inp.k, v2, inp.gates, inp.lambdas), spec)
    assert rel_err(out_sum, out_a + out_b) <= 1e-11
