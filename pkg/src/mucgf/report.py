"""Corpus replay against the full mutant pool, and averaged CSV reports."""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .benchmarks import BenchmarkCase, get_case
from .fuzz import SeedReplay, run_snapshot
from .ir import site_guards
from .mutation import MutantPool, build_mutant_pool
from .runner import TestEngine, parse_criterion

CSV_COLUMNS = ("technique", "bucket", "mean_branch_cov_pct", "mean_kill_pct", "rep_count")

# preset -> (step, horizon) in milliseconds; 60 points each
PRESETS = {
    "1m": (1_000, 60_000),
    "10m": (10_000, 600_000),
    "30m": (30_000, 1_800_000),
    "1h": (60_000, 3_600_000),
    "3h": (180_000, 10_800_000),
}


class ReplayError(ValueError):
    pass


@dataclass
class RunDir:
    path: Optional[Path]  # None for an in-memory run
    config: dict
    seeds: list  # (seed id, bytes, meta) in discovery order

    @property
    def target(self) -> str:
        return self.config["target"]

    @property
    def technique(self) -> str:
        return self.config["config"]["policy"]


def load_run(path) -> RunDir:
    path = Path(path)
    cfg_path = path / "config.json"
    if not cfg_path.exists():
        raise ReplayError(f"{path} is not a run directory (no config.json)")
    config = json.loads(cfg_path.read_text())
    seeds = []
    corpus = path / "corpus"
    if corpus.is_dir():
        for f in sorted(corpus.glob("id_*")):
            if f.name.endswith(".meta.json"):
                continue
            meta = json.loads(f.with_name(f.name + ".meta.json").read_text())
            seeds.append((int(f.name[3:]), f.read_bytes(), meta))
    seeds.sort(key=lambda s: (s[2]["exec_index"], s[0]))
    return RunDir(path, config, seeds)


def run_in_memory(fuzzer) -> RunDir:
    """A finished Fuzzer viewed as a run directory, without touching disk."""
    seeds = [(e.id, e.data, e.meta()) for e in fuzzer.queue]
    seeds.sort(key=lambda s: (s[2]["exec_index"], s[0]))
    return RunDir(None, run_snapshot(fuzzer), seeds)


def pool_for_run(run: RunDir, case: BenchmarkCase, pool: Optional[MutantPool]) -> MutantPool:
    if pool is None:
        pool = build_mutant_pool(case.program)
    if pool.program_digest != run.config["program_digest"]:
        raise ReplayError("mutant pool digest does not match the run's program")
    return pool


def replay_corpus(
    run,
    pool: Optional[MutantPool] = None,
    case: Optional[BenchmarkCase] = None,
    incremental: bool = False,
    workers: int = 1,
) -> list:
    """Re-run every saved seed, in discovery order, against the whole pool.

    With ``incremental`` a seed only runs mutants no earlier seed killed.
    The cumulative kill sets are the same either way; per-seed kill sets
    then hold just the seed's new kills.
    """
    if not isinstance(run, RunDir):
        run = load_run(run)
    if case is None:
        case = get_case(run.target)
    if case.program.digest != run.config["program_digest"]:
        raise ReplayError("case program digest does not match the run")
    pool = pool_for_run(run, case, pool)
    cfg = run.config["config"]
    out = []
    killed: set = set()
    with TestEngine(
        case.program,
        None,
        ratio=cfg.get("ratio", 0.1),
        fuel_cap=cfg.get("fuel_cap", 1_000_000),
        criterion=parse_criterion(cfg.get("criterion", "bytes")),
        workers=workers,
        guards=site_guards(case.program, set(case.behaviors)),
    ) as engine:
        for seed_id, data, meta in run.seeds:
            invocations = case.decode(data)
            mutants = [m for m in pool.mutants if m.id not in killed] if incremental else pool.mutants
            fb = engine.run(mutants, invocations)
            kills = fb.stat.killed_ids if fb.res.ok else frozenset()
            killed |= kills
            out.append(SeedReplay(seed_id, meta["exec_index"], meta["time_ms"], fb.cov, kills))
    return out


@dataclass
class Curve:
    """Cumulative coverage and kill percentages of one run, per bucket."""

    technique: str
    cov_pct: list
    kill_pct: list


def cumulative_curve(
    replays: list, buckets: list, by: str, branch_universe: int, pool_size: int, technique: str = ""
) -> Curve:
    """Attach each bucket to the most recent seed at or before it."""
    key = (lambda r: r.exec_index) if by == "exec" else (lambda r: r.time_ms)
    ordered = sorted(replays, key=key)
    cov: set = set()
    kills: set = set()
    cov_pct, kill_pct = [], []
    i = 0
    for b in buckets:
        while i < len(ordered) and key(ordered[i]) <= b:
            cov |= ordered[i].coverage
            kills |= ordered[i].kills
            i += 1
        cov_pct.append(100.0 * len(cov) / branch_universe if branch_universe else 0.0)
        kill_pct.append(100.0 * len(kills) / pool_size if pool_size else 0.0)
    return Curve(technique, cov_pct, kill_pct)


_DURATION_RE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(ms|s|m|h)?\s*$")
_UNIT_MS = {"ms": 1, "s": 1000, "m": 60_000, "h": 3_600_000, None: 1000}


def parse_duration_ms(text: str) -> int:
    """``"500ms"``, ``"60s"``, ``"10m"``, ``"3h"``; a bare number is seconds."""
    m = _DURATION_RE.match(str(text))
    if not m:
        raise ValueError(f"bad duration {text!r}")
    return int(round(float(m.group(1)) * _UNIT_MS[m.group(2)]))


def parse_buckets(spec: str, max_exec: int = 0) -> tuple[str, list]:
    """Bucket spec -> (axis, bucket values).

    Presets 1m/10m/30m/1h/3h give 60 wall-time points; ``time:<step>:<max>``
    takes durations; ``exec:<step>[:<max>]`` buckets by execution index,
    defaulting the maximum to ``max_exec``.
    """
    if spec in PRESETS:
        step, horizon = PRESETS[spec]
        return "time", list(range(step, horizon + 1, step))
    parts = spec.split(":")
    if parts[0] == "time" and len(parts) == 3:
        step, horizon = parse_duration_ms(parts[1]), parse_duration_ms(parts[2])
        axis = "time"
    elif parts[0] == "exec" and len(parts) in (2, 3):
        step = int(parts[1])
        horizon = int(parts[2]) if len(parts) == 3 else max_exec
        axis = "exec"
    else:
        raise ValueError(f"bad bucket spec {spec!r}")
    if step <= 0 or horizon <= 0:
        raise ValueError("bucket step and maximum must be positive")
    points = list(range(step, horizon + 1, step))
    if not points or points[-1] != horizon:
        points.append(horizon)
    return axis, points


@dataclass
class ReportRow:
    technique: str
    bucket: int
    mean_branch_cov_pct: float
    mean_kill_pct: float
    per_rep_cov: list
    per_rep_kill: list

    @property
    def rep_count(self) -> int:
        return len(self.per_rep_cov)


def aggregate(curves: list, buckets: list) -> list:
    """Average curves per technique; techniques keep first-seen order."""
    groups: dict[str, list] = {}
    for c in curves:
        groups.setdefault(c.technique, []).append(c)
    rows = []
    for technique, reps in groups.items():
        for j, b in enumerate(buckets):
            covs = [c.cov_pct[j] for c in reps]
            kills = [c.kill_pct[j] for c in reps]
            rows.append(
                ReportRow(technique, b, sum(covs) / len(covs), sum(kills) / len(kills), covs, kills)
            )
    return rows


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(
            [r.technique, r.bucket, f"{r.mean_branch_cov_pct:.4f}", f"{r.mean_kill_pct:.4f}", r.rep_count]
        )
    return buf.getvalue()


def build_report(run_paths: list, bucket_spec: str, pool: Optional[MutantPool] = None, workers: int = 1) -> list:
    runs = [load_run(p) for p in run_paths]
    if not runs:
        raise ReplayError("no run directories given")
    targets = {r.target for r in runs}
    if len(targets) != 1:
        raise ReplayError(f"runs mix cases: {sorted(targets)}")
    case = get_case(runs[0].target)
    pool = pool_for_run(runs[0], case, pool)
    max_exec = max((r.config.get("summary", {}).get("execs", 0) for r in runs), default=0)
    axis, buckets = parse_buckets(bucket_spec, max_exec)
    curves = []
    for run in runs:
        replays = replay_corpus(run, pool, case, incremental=True, workers=workers)
        curves.append(
            cumulative_curve(
                replays, buckets, axis, case.program.branch_universe(), len(pool), run.technique
            )
        )
    return aggregate(curves, buckets)


def final_rates(replays: list, branch_universe: int, pool_size: int) -> tuple[float, float]:
    """(branch coverage %, kill %) once every seed has been replayed."""
    cov: set = set()
    kills: set = set()
    for r in replays:
        cov |= r.coverage
        kills |= r.kills
    return (
        100.0 * len(cov) / branch_universe if branch_universe else 0.0,
        100.0 * len(kills) / pool_size if pool_size else 0.0,
    )
