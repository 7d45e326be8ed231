import io
import json

import numpy as np
import pytest

from loglin import harness, masks
from loglin.errors import ContractViolation
from loglin.harness import RunConfig, generate_inputs, inputs_fingerprint, rel_err


def test_same_seed_is_bit_identical():
    cfg = RunConfig(seed=42, t_len=32, dim=8, chunk_len=4, variant="loglinear-mamba2")
    assert inputs_fingerprint(generate_inputs(cfg)) == inputs_fingerprint(generate_inputs(cfg))
    other = RunConfig(seed=43, t_len=32, dim=8, chunk_len=4, variant="loglinear-mamba2")
    assert inputs_fingerprint(generate_inputs(cfg)) != inputs_fingerprint(generate_inputs(other))


def test_generated_ranges():
    cfg = RunConfig(seed=0, t_len=1024, dim=2, chunk_len=2, variant="loglinear-mamba2",
                    alpha_range=(0.3, 0.9), beta_range=(0.1, 1.9),
                    lambda_range=(0.0, 2.0))
    inp = generate_inputs(cfg)
    assert np.all((inp.gates.alpha > 0.0) & (inp.gates.alpha <= 1.0))
    assert np.all((inp.gates.alpha >= 0.3) & (inp.gates.alpha < 0.9))
    assert np.all((inp.gates.beta >= 0.1) & (inp.gates.beta < 1.9))
    assert np.all(inp.lambdas.lambdas >= 0.0)
    bound = 1.0 / np.sqrt(2)
    for arr in (inp.q, inp.k, inp.v):
        assert np.all(np.abs(arr) <= bound)


def test_degenerate_ranges_give_constants():
    cfg = RunConfig(seed=5, t_len=8, dim=2, chunk_len=2, variant="loglinear-mamba2",
                    alpha_range=(1.0, 1.0), lambda_range=(1.0, 1.0))
    inp = generate_inputs(cfg)
    assert np.all(inp.gates.alpha == 1.0)
    live = inp.lambdas.lambdas[np.nonzero(inp.lambdas.lambdas)]
    assert np.all(live == 1.0)


def test_lambda_zeroed_at_empty_levels():
    cfg = RunConfig(seed=1, t_len=16, dim=2, chunk_len=2, variant="loglinear-mamba2",
                    lambda_range=(0.5, 1.0))
    lam = generate_inputs(cfg).lambdas.lambdas
    for t in range(16):
        for lev in range(1, lam.shape[1]):
            if not (t >> (lev - 1)) & 1:
                assert lam[t, lev] == 0.0


def test_run_config_validation():
    with pytest.raises(ContractViolation):
        RunConfig(seed=0, t_len=24, dim=2, chunk_len=2, variant="loglinear-mamba2")
    with pytest.raises(ContractViolation):
        RunConfig(seed=0, t_len=8, dim=2, chunk_len=16, variant="loglinear-mamba2")
    with pytest.raises(ContractViolation):
        RunConfig(seed=0, t_len=8, dim=2, chunk_len=2, variant="mystery")
    with pytest.raises(ContractViolation):
        RunConfig(seed=0, t_len=8, dim=2, chunk_len=2, variant="linear",
                  alpha_range=(0.0, 1.0))
    cfg = RunConfig(seed=0, t_len=24, dim=2, chunk_len=2, variant="linear")
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_verify_all_suites_pass():
    buf = io.StringIO()
    assert harness.run_verify(seeds=3, stream=buf) == 0
    lines = buf.getvalue().splitlines()
    suite_lines = [l for l in lines if l.startswith("suite ")]
    assert len(suite_lines) >= 8
    assert all("PASS" in l for l in suite_lines)
    assert harness.PRNG_ID in lines[-1]


def test_verify_filter_runs_single_suite():
    buf = io.StringIO()
    assert harness.run_verify("fenwick", seeds=2, stream=buf) == 0
    suite_lines = [l for l in buf.getvalue().splitlines() if l.startswith("suite ")]
    assert len(suite_lines) == 1 and "fenwick" in suite_lines[0]


def test_verify_unknown_filter_is_usage_error():
    buf = io.StringIO()
    assert harness.run_verify("no-such-suite", seeds=2, stream=buf) == 2


def test_verify_parallel_matches_sequential():
    seq, par = io.StringIO(), io.StringIO()
    assert harness.run_verify("mask", seeds=3, stream=seq) == 0
    assert harness.run_verify("mask", seeds=3, workers=4, stream=par) == 0
    assert sorted(seq.getvalue().splitlines()) == sorted(par.getvalue().splitlines())


def test_verify_detects_injected_sign_flip(monkeypatch):
    true_scores = masks.deltanet_scores

    def flipped(q, k, gates, counter=None):
        import numpy as _np
        from loglin.linalg import solve_unit_lower_triangular as _solve
        t_len = q.shape[0]
        corr = -_np.tril(gates.beta[:, None] * (k @ k.T), -1)  # wrong sign
        system = (_np.eye(t_len) + corr).T[::-1, ::-1]
        rhs = _np.tril(q @ k.T).T[::-1]
        return _np.ascontiguousarray(_solve(system, rhs)[::-1].T)

    monkeypatch.setattr(masks, "deltanet_scores", flipped)
    buf = io.StringIO()
    code = harness.run_verify("deltanet", seeds=3, stream=buf)
    monkeypatch.setattr(masks, "deltanet_scores", true_scores)
    text = buf.getvalue()
    assert code == 1
    assert "suite deltanet" in text and "FAIL" in text


def test_failure_report_replays_bit_identically(monkeypatch):
    # break the chunkwise path, capture the replay config, and reproduce the
    # same error from it
    import loglin.chunkwise as ck
    true_forward = ck.hattention_forward

    def broken(inp, cfg, counter=None):
        out = true_forward(inp, cfg, counter=counter)
        out = out.copy()
        out[-1] += 1e-3
        return out

    monkeypatch.setattr(ck, "hattention_forward", broken)
    buf = io.StringIO()
    code = harness.run_verify("chunkwise", seeds=2, stream=buf)
    assert code == 1
    line = next(l for l in buf.getvalue().splitlines() if "replay=" in l)
    reported = float(line.split("err=")[1].split(" ")[0])
    cfg = RunConfig.from_dict(json.loads(line.split("replay=")[1]))
    inp = generate_inputs(cfg)
    from loglin import reference
    dense = reference.loglinear_mamba2_ref(inp)
    got = broken(inp, ck.ChunkConfig(cfg.t_len, cfg.chunk_len))
    assert rel_err(got, dense) == reported
    monkeypatch.setattr(ck, "hattention_forward", true_forward)


def test_bench_records_and_csv_schema():
    recs = harness.bench_records(("chunkwise", "decode", "dense-oracle"),
                                 t_min=64, t_max=256, chunk_len=16, dim=4)
    assert len(recs) == 9
    for rec in recs:
        assert rec.flops and rec.flops > 0
        assert rec.wall_ns is not None and rec.wall_ns > 0
        assert rec.max_rel_err is not None  # oracle ran at these lengths
        if rec.variant == "decode":
            assert rec.peak_states == int(np.log2(rec.t_len)) + 1
    buf = io.StringIO()
    harness.write_bench_csv(recs, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "variant,T,d,C,flops,wall_ns,peak_states,max_rel_err"
    assert len(lines) == 10


def test_bench_dense_rows_skipped_above_cap():
    recs = harness.bench_records(("dense-oracle",), t_min=256, t_max=1024,
                                 chunk_len=16, dim=2, oracle_cap=512)
    by_t = {r.t_len: r for r in recs}
    assert not by_t[256].skipped and not by_t[512].skipped
    assert by_t[1024].skipped
    buf = io.StringIO()
    harness.write_bench_csv(recs, buf)
    skipped_line = buf.getvalue().splitlines()[-1]
    assert skipped_line == "dense-oracle,1024,2,16,,,,"


def test_bench_json_mirrors_csv():
    recs = harness.bench_records(("chunkwise",), t_min=64, t_max=64,
                                 chunk_len=16, dim=2, seed=7)
    buf = io.StringIO()
    harness.write_bench_json(recs, buf, seed=7)
    payload = json.loads(buf.getvalue())
    assert payload["meta"]["prng"] == harness.PRNG_ID
    assert payload["meta"]["schema"] == harness.BENCH_CSV_HEADER.split(",")
    assert payload["records"][0]["variant"] == "chunkwise"
    assert payload["records"][0]["flops"] == recs[0].flops


def test_bench_csv_scaling_regressions():
    # chunkwise flops grow ~ T log(T/C): fitted log-log exponent in [1.0, 1.15]
    buf = io.StringIO()
    harness.write_bench_csv(
        harness.bench_records(("chunkwise",), t_min=1 << 10, t_max=1 << 16,
                              chunk_len=64, dim=8), buf)
    rows = [l.split(",") for l in buf.getvalue().splitlines()[1:]]
    ts = np.array([int(r[1]) for r in rows], dtype=float)
    fl = np.array([int(r[4]) for r in rows], dtype=float)
    slope = np.polyfit(np.log2(ts), np.log2(fl), 1)[0]
    assert 1.0 <= slope <= 1.15
    # dense oracle rows fit exponent 2.0 +/- 0.1 over their overlap range
    buf = io.StringIO()
    harness.write_bench_csv(
        harness.bench_records(("dense-oracle",), t_min=1 << 6, t_max=1 << 9,
                              chunk_len=16, dim=8), buf)
    rows = [l.split(",") for l in buf.getvalue().splitlines()[1:]]
    ts = np.array([int(r[1]) for r in rows], dtype=float)
    fl = np.array([int(r[4]) for r in rows], dtype=float)
    dense_slope = np.polyfit(np.log2(ts), np.log2(fl), 1)[0]
    assert 1.9 <= dense_slope <= 2.1
    # decode rows carry peak_states == log2(T) + 1
    buf = io.StringIO()
    harness.write_bench_csv(
        harness.bench_records(("decode",), t_min=1 << 3, t_max=1 << 10,
                              chunk_len=8, dim=2), buf)
    for line in buf.getvalue().splitlines()[1:]:
        r = line.split(",")
        assert int(r[6]) == int(np.log2(int(r[1]))) + 1


def test_bench_rejects_bad_ranges():
    with pytest.raises(ContractViolation):
        harness.bench_records(("chunkwise",), t_min=48, t_max=64, chunk_len=8, dim=2)
    with pytest.raises(ContractViolation):
        harness.bench_records(("nope",), t_min=64, t_max=64, chunk_len=8, dim=2)


def test_mask_dump_collapse_golden():
    cfg = RunConfig(seed=0, t_len=2, dim=1, chunk_len=1, variant="loglinear-mamba2",
                    alpha_range=(1.0, 1.0), lambda_range=(1.0, 1.0))
    buf = io.StringIO()
    rows = harness.run_mask_dump(cfg, buf)
    assert rows == 3
    assert buf.getvalue() == "t,s,level,value\n0,0,0,1.0\n1,0,1,1.0\n1,1,0,1.0\n"


def test_mask_dump_t8_collapse_has_36_unit_rows():
    cfg = RunConfig(seed=3, t_len=8, dim=1, chunk_len=1, variant="loglinear-mamba2",
                    alpha_range=(1.0, 1.0), lambda_range=(1.0, 1.0))
    buf = io.StringIO()
    assert harness.run_mask_dump(cfg, buf) == 36
    body = buf.getvalue().splitlines()[1:]
    assert len(body) == 36
    import loglin.fenwick as fenwick
    for line in body:
        t, s, lev, val = line.split(",")
        assert float(val) == 1.0
        assert int(lev) == fenwick.level_of(int(t), int(s))


def test_mask_dump_single_step():
    cfg = RunConfig(seed=9, t_len=1, dim=1, chunk_len=1, variant="loglinear-mamba2")
    buf = io.StringIO()
    assert harness.run_mask_dump(cfg, buf) == 1
    line = buf.getvalue().splitlines()[1]
    t, s, lev, val = line.split(",")
    assert (t, s, lev) == ("0", "0", "0")
    assert float(val) == generate_inputs(cfg).lambdas.lambdas[0, 0]


def test_mask_dump_round_trip_reconstructs_mask():
    cfg = RunConfig(seed=4, t_len=16, dim=1, chunk_len=1, variant="loglinear-mamba2")
    buf = io.StringIO()
    harness.run_mask_dump(cfg, buf)
    inp = generate_inputs(cfg)
    composed = masks.compose_mask(masks.sss_mask(inp.gates),
                                  masks.hier_mask(inp.lambdas))
    dense = np.zeros((16, 16))
    for line in buf.getvalue().splitlines()[1:]:
        t, s, _, val = line.split(",")
        dense[int(t), int(s)] = float(val)
    assert np.array_equal(dense, composed)


def test_mask_dump_rejects_above_cap():
    cfg = RunConfig(seed=0, t_len=1024, dim=1, chunk_len=1,
                    variant="loglinear-mamba2")
    with pytest.raises(ContractViolation):
        harness.run_mask_dump(cfg, io.StringIO())
