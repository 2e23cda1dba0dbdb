"""Command-line entry point: ``mucgf <command> ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .benchmarks import get_case
from .fuzz import CampaignConfig, ConfigError, Fuzzer, Policy, write_run
from .ir import IRSyntaxError, IRTypeError
from .mutation import MUTATORS, MutantPool, MutationConfig, MutationError, build_mutant_pool, parse_mutator_list
from .report import ReplayError, build_report, final_rates, load_run, parse_duration_ms, replay_corpus, rows_to_csv

RNG_SEED_ENV = "MUCGF_RNG_SEED"


class UsageError(Exception):
    pass


def _target_name(text: str) -> str:
    # built-in names stay names; case files are recorded by absolute path so replay finds them
    return str(Path(text).resolve()) if text.endswith(".ir") else text


def _load_pool(path, case):
    if path is None:
        return None
    try:
        return MutantPool.load(path, case.program)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load pool {path}: {exc}") from None


def cmd_mutate(args) -> int:
    case = get_case(args.target)
    config = MutationConfig(mutators=parse_mutator_list(args.mutators))
    pool = build_mutant_pool(case.program, config)
    pool.save(args.out)
    print(f"{len(pool)} mutants of {case.name} written to {args.out}")
    return 0


def _rng_seed(args) -> int:
    if args.rng_seed is not None:
        return args.rng_seed
    env = os.environ.get(RNG_SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{RNG_SEED_ENV} must be an integer, got {env!r}") from None


def cmd_fuzz(args) -> int:
    case = get_case(args.target)
    policy = Policy.parse(args.policy)
    if policy.uses_mutants and args.pool is None:
        raise UsageError(f"policy {policy.value} needs --pool (build one with `mucgf mutate`)")
    duration = parse_duration_ms(args.duration) / 1000 if args.duration else None
    if duration is None and args.max_execs is None:
        duration = 60.0
    config = CampaignConfig(
        policy=policy,
        base=args.base,
        factor=args.factor,
        kill_factor=args.kill_factor,
        kill_new_factor=args.kill_new_factor,
        k=args.mutants_per_exec,
        ratio=args.extra_time_ratio,
        fuel_cap=args.fuel_cap,
        rng_seed=_rng_seed(args),
        max_execs=args.max_execs,
        duration_s=duration,
        workers=args.workers,
        criterion=args.criterion,
        strategy=args.strategy,
    )
    pool = _load_pool(args.pool, case)
    fuzzer = Fuzzer(case, pool, config)
    try:
        fuzzer.run()
    finally:
        fuzzer.close()
    out = write_run(args.out, fuzzer, _target_name(args.target))
    killed = len(fuzzer.pool.killed) if fuzzer.pool is not None else 0
    print(
        f"{fuzzer.execs} execs, {len(fuzzer.queue)} seeds, {len(fuzzer.failures)} failures, "
        f"{len(fuzzer.coverage)}/{case.program.branch_universe()} edges, {killed} mutants killed -> {out}"
    )
    return 0


def cmd_replay(args) -> int:
    run = load_run(args.run_dir)
    case = get_case(run.target)
    pool = _load_pool(args.pool, case) or build_mutant_pool(case.program)
    replays = replay_corpus(run, pool, case, incremental=not args.full, workers=args.workers)
    cov, kill = final_rates(replays, case.program.branch_universe(), len(pool))
    if args.out:
        records = [
            {
                "seed_id": r.seed_id,
                "exec_index": r.exec_index,
                "time_ms": r.time_ms,
                "edges": sorted([s, o] for s, o in r.coverage),
                "kills": sorted(r.kills),
            }
            for r in replays
        ]
        Path(args.out).write_text(json.dumps(records, sort_keys=True) + "\n")
    print(f"{len(replays)} seeds replayed: branch coverage {cov:.4f}%, kill rate {kill:.4f}%")
    return 0


def cmd_report(args) -> int:
    pool = None
    if args.pool is not None:
        case = get_case(load_run(args.run_dirs[0]).target)
        pool = _load_pool(args.pool, case)
    rows = build_report(args.run_dirs, args.buckets, pool, workers=args.workers)
    text = rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_dump_case(args) -> int:
    case = get_case(args.name)
    if args.decoder:
        print(json.dumps(case.decoder_spec, indent=2))
    else:
        sys.stdout.write(case.program_text)
    return 0


def cmd_list_mutators(args) -> int:
    for name, m in MUTATORS.items():
        print(f"{name:22} {m.description}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mucgf", description="Mutation-guided greybox fuzzing on a small IR.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mutate", help="build a mutant pool for a case")
    p.add_argument("--target", required=True, help="built-in case name or path to a .ir file")
    p.add_argument("--mutators", default="all", help='comma-separated mutator names or "all"')
    p.add_argument("--out", required=True, help="pool JSON file to write")
    p.set_defaults(func=cmd_mutate)

    p = sub.add_parser("fuzz", help="run one campaign")
    p.add_argument("--target", required=True)
    p.add_argument("--policy", default="baseline", help="baseline, generic, negative or positive")
    p.add_argument("--pool", help="mutant pool JSON (required for the mutant-aware policies)")
    p.add_argument("--out", required=True, help="run directory to write")
    p.add_argument("--duration", help='wall-clock budget, e.g. "60s" or "10m" (default 60s)')
    p.add_argument("--max-execs", type=int, help="execution budget")
    p.add_argument("--rng-seed", type=int, help=f"falls back to ${RNG_SEED_ENV}, then 0")
    p.add_argument("--workers", type=int, default=1, help="threads for mutant execution")
    p.add_argument("--mutants-per-exec", type=int, default=10, help="k, mutants sampled per execution")
    p.add_argument("--extra-time-ratio", type=float, default=0.1, help="mutant fuel budget slack r")
    p.add_argument("--base", type=int, default=50)
    p.add_argument("--factor", type=int, default=20)
    p.add_argument("--kill-factor", type=int, default=20)
    p.add_argument("--kill-new-factor", type=int, default=20)
    p.add_argument("--criterion", default="bytes", help='"bytes" or "float-eps:<eps>"')
    p.add_argument("--fuel-cap", type=int, default=1_000_000)
    p.add_argument("--strategy", default="basic_random", help="basic_random or unkilled_random")
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("replay", help="replay a run's corpus against the full pool")
    p.add_argument("run_dir")
    p.add_argument("--pool", help="pool JSON (default: all mutators)")
    p.add_argument("--out", help="write per-seed records as JSON")
    p.add_argument("--full", action="store_true", help="run every mutant on every seed")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="average replayed curves into a CSV")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--buckets", default="1m", help="1m/10m/30m/1h/3h, time:<step>:<max> or exec:<step>[:<max>]")
    p.add_argument("--pool", help="pool JSON (default: all mutators)")
    p.add_argument("--out", help="CSV file (default: stdout)")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("dump-case", help="print a case's IR source")
    p.add_argument("name")
    p.add_argument("--decoder", action="store_true", help="print the decoder spec instead")
    p.set_defaults(func=cmd_dump_case)

    p = sub.add_parser("list-mutators", help="list mutation operators")
    p.set_defaults(func=cmd_list_mutators)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ReplayError, MutationError, IRSyntaxError, IRTypeError, KeyError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"mucgf: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
