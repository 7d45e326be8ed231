"""Command-line driver: verification, scaling benchmarks, mask dumps.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys

from . import harness
from .errors import ContractViolation


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loglin",
        description="Log-linear attention verification and benchmarking harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run the invariant suites")
    p_verify.add_argument("--filter", default=None,
                          help="only run suites whose name contains this string")
    p_verify.add_argument("--seeds", type=int, default=25,
                          help="randomized cases per suite (default 25)")
    p_verify.add_argument("--workers", type=int, default=1,
                          help="suite worker pool size (default 1, sequential)")

    p_bench = sub.add_parser("bench", help="sweep sequence lengths and emit records")
    p_bench.add_argument("--variants", default="chunkwise,dense-oracle",
                         help=f"comma list from {', '.join(harness.BENCH_VARIANTS)}")
    p_bench.add_argument("--t-min", type=int, default=64,
                         help="smallest sequence length, power of two")
    p_bench.add_argument("--t-max", type=int, default=65536,
                         help="largest sequence length, power of two")
    p_bench.add_argument("--chunk", type=int, default=64, help="chunk length")
    p_bench.add_argument("--dim", type=int, default=8, help="head dimension")
    p_bench.add_argument("--seed", type=int, default=0, help="input seed")
    p_bench.add_argument("--out", default=None, help="output path (default stdout)")
    p_bench.add_argument("--format", choices=("csv", "json"), default="csv")

    p_dump = sub.add_parser("mask-dump", help="dump a composed mask as CSV")
    p_dump.add_argument("--t-len", type=int, default=8, help="sequence length")
    p_dump.add_argument("--seed", type=int, default=0, help="input seed")
    p_dump.add_argument("--out", default=None, help="output path (default stdout)")
    return parser


def _cmd_verify(args) -> int:
    if args.seeds < 1 or args.workers < 1:
        print("verify: --seeds and --workers must be positive", file=sys.stderr)
        return 2
    return harness.run_verify(args.filter, seeds=args.seeds, workers=args.workers)


def _cmd_bench(args) -> int:
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    try:
        records = harness.bench_records(
            variants, args.t_min, args.t_max, args.chunk, args.dim, seed=args.seed
        )
    except ContractViolation as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return 2
    def emit(fileobj):
        if args.format == "csv":
            harness.write_bench_csv(records, fileobj)
        else:
            harness.write_bench_json(records, fileobj, args.seed)
    if args.out:
        with open(args.out, "w") as fileobj:
            emit(fileobj)
        print(f"bench: wrote {len(records)} records to {args.out} "
              f"(prng={harness.PRNG_ID}, seed={args.seed})")
    else:
        emit(sys.stdout)
    return 0


def _cmd_mask_dump(args) -> int:
    try:
        cfg = harness.RunConfig(seed=args.seed, t_len=args.t_len, dim=1,
                                chunk_len=min(args.t_len, 1),
                                variant="loglinear-mamba2")
        if args.out:
            with open(args.out, "w") as fileobj:
                rows = harness.run_mask_dump(cfg, fileobj)
            print(f"mask-dump: wrote {rows} rows to {args.out} "
                  f"(prng={harness.PRNG_ID}, seed={args.seed})")
        else:
            harness.run_mask_dump(cfg, sys.stdout)
    except ContractViolation as exc:
        print(f"mask-dump: {exc}", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "verify":
        return _cmd_verify(args)
    if args.command == "bench":
        return _cmd_bench(args)
    return _cmd_mask_dump(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
