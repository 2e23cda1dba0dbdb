"""The fuzzing loop: seed queue, havoc mutation, energy and feedback handling."""

from __future__ import annotations

import enum
import json
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .benchmarks import BenchmarkCase
from .ir import CrashKind, site_guards
from .mutation import MutantPool, MutationConfig, select_mutants, update_kill_statuses
from .runner import Feedback, TestEngine, parse_criterion

MAX_INPUT_LEN = 4096
INITIAL_SEED_LEN = 64


class Policy(enum.Enum):
    BASELINE = "baseline"
    GENERIC = "generic"
    NEGATIVE = "negative"
    POSITIVE = "positive"

    @property
    def uses_mutants(self) -> bool:
        return self is not Policy.BASELINE

    @classmethod
    def parse(cls, text: str) -> "Policy":
        try:
            return cls(text.lower())
        except ValueError:
            names = ", ".join(p.value for p in cls)
            raise ValueError(f"unknown policy {text!r}; choose from {names}") from None


class EventKind(str, enum.Enum):
    SEED_SAVED = "SEED_SAVED"
    NEW_COV = "NEW_COV"
    KILL = "KILL"
    KILL_NEW = "KILL_NEW"
    CRASH = "CRASH"


class ConfigError(ValueError):
    pass


@dataclass
class CampaignConfig:
    policy: Policy = Policy.BASELINE
    base: int = 50
    factor: int = 20
    kill_factor: int = 20
    kill_new_factor: int = 20
    k: int = 10
    ratio: float = 0.1
    fuel_cap: int = 1_000_000
    rng_seed: int = 0
    max_execs: Optional[int] = None
    duration_s: Optional[float] = None
    n_min: int = 1
    n_max: int = 10_000
    workers: int = 1
    criterion: str = "bytes"
    strategy: str = "basic_random"
    selection_period: int = 1

    def __post_init__(self):
        if isinstance(self.policy, str):
            self.policy = Policy.parse(self.policy)
        self.validate()

    def validate(self) -> None:
        if self.base < 1:
            raise ConfigError("BASE must be >= 1")
        if min(self.factor, self.kill_factor, self.kill_new_factor) < 1:
            raise ConfigError("FACTOR, KILL_FACTOR and KILL_NEW_FACTOR must be >= 1")
        if not 1 <= self.n_min <= self.n_max:
            raise ConfigError("need 1 <= n_min <= n_max")
        if self.k < 0:
            raise ConfigError("k must be >= 0")
        if not 0 <= self.ratio <= 1:
            raise ConfigError("extra time ratio must be in [0, 1]")
        if self.fuel_cap < 1:
            raise ConfigError("fuel cap must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.selection_period < 1:
            raise ConfigError("selection period must be >= 1")
        if self.max_execs is None and self.duration_s is None:
            raise ConfigError("a budget is required (max executions and/or duration)")
        if self.max_execs is not None and self.max_execs < 0:
            raise ConfigError("max executions must be >= 0")
        if self.duration_s is not None and self.duration_s <= 0:
            raise ConfigError("duration must be > 0")
        try:
            parse_criterion(self.criterion)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def virtual_clock(self) -> bool:
        """Timestamps come from interpreter steps when the budget is exec-count only."""
        return self.duration_s is None

    def to_json(self) -> dict:
        d = asdict(self)
        d["policy"] = self.policy.value
        return d

    @classmethod
    def from_json(cls, d: dict) -> "CampaignConfig":
        return cls(**d)


@dataclass
class SeedEntry:
    id: int
    data: bytes
    favored: bool = False
    capable: bool = False
    kills_new: bool = False
    parent: Optional[int] = None
    exec_index: int = 0
    time_ms: int = 0
    edges: frozenset = frozenset()

    @property
    def marks(self) -> dict:
        return {"favored": self.favored, "capable": self.capable, "kills_new": self.kills_new}

    def meta(self) -> dict:
        return {
            "parent": self.parent,
            "marks": self.marks,
            "exec_index": self.exec_index,
            "time_ms": self.time_ms,
            "edges": sorted([s, o] for s, o in self.edges),
        }


class SeedQueue:
    def __init__(self):
        self.entries: list[SeedEntry] = []
        self._ids: dict[bytes, int] = {}

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> SeedEntry:
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    def find(self, data: bytes) -> Optional[int]:
        return self._ids.get(data)

    def add(self, entry: SeedEntry) -> bool:
        if entry.data in self._ids:
            return False
        if entry.id != len(self.entries):
            raise ValueError("seed ids must be dense")
        self._ids[entry.data] = entry.id
        self.entries.append(entry)
        return True


@dataclass
class FailEntry:
    id: int
    data: bytes
    crash: CrashKind
    parent: Optional[int]
    exec_index: int
    time_ms: int

    def meta(self) -> dict:
        return {
            "parent": self.parent,
            "crash": self.crash.value,
            "exec_index": self.exec_index,
            "time_ms": self.time_ms,
        }


class FailSet:
    def __init__(self):
        self.entries: list[FailEntry] = []
        self._seen: set[bytes] = set()

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def add(self, data: bytes, crash: CrashKind, parent, exec_index, time_ms) -> Optional[FailEntry]:
        if data in self._seen:
            return None
        self._seen.add(data)
        entry = FailEntry(len(self.entries), data, crash, parent, exec_index, time_ms)
        self.entries.append(entry)
        return entry


@dataclass
class Event:
    time_ms: int
    exec_index: int
    kind: EventKind
    seed_id: Optional[int]
    payload: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "time_ms": self.time_ms,
            "exec_index": self.exec_index,
            "kind": self.kind.value,
            "seed_id": self.seed_id,
            "payload": self.payload,
        }


class EventLog:
    def __init__(self):
        self.events: list[Event] = []

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def append(self, event: Event) -> None:
        if self.events and event.exec_index < self.events[-1].exec_index:
            raise ValueError("events must arrive in execution order")
        self.events.append(event)

    def of_kind(self, kind: EventKind) -> list:
        return [e for e in self.events if e.kind is kind]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in self.events)


def mutation_chance(seed: SeedEntry, policy: Policy, config: CampaignConfig) -> int:
    """Number of children to derive from ``seed`` in one pass over the queue."""
    n = config.base
    if seed.favored:
        n *= config.factor
    if policy is Policy.GENERIC:
        n = n * config.kill_factor if seed.capable else n // config.kill_factor
    elif policy is Policy.NEGATIVE:
        if seed.kills_new:
            n *= config.kill_new_factor
        elif seed.capable:
            n //= config.kill_factor
    elif policy is Policy.POSITIVE:
        if seed.capable:
            n *= config.kill_factor
    return max(config.n_min, min(config.n_max, n))


_INTERESTING = {
    width: (0, 1, -1, (1 << (8 * width - 1)) - 1, -(1 << (8 * width - 1))) for width in (1, 2, 4)
}
_MAX_BLOCK = 64
N_HAVOC_OPS = 7


def mutate_input(parent: bytes, queue, rng: random.Random) -> bytes:
    """Havoc: 1 to 8 random byte-level edits.

    ``queue`` supplies splice partners; it may be a SeedQueue or any
    sequence of byte strings.
    """
    buf = bytearray(parent)
    for _ in range(rng.randint(1, 8)):
        if not buf:
            buf.append(rng.randrange(256))
        size = len(buf)
        op = rng.randrange(N_HAVOC_OPS)
        if op == 0:
            bit = rng.randrange(size * 8)
            buf[bit >> 3] ^= 0x80 >> (bit & 7)
        elif op == 1:
            buf[rng.randrange(size)] = rng.randrange(256)
        elif op == 2:
            i = rng.randrange(size)
            delta = rng.randint(1, 35)
            if rng.random() < 0.5:
                delta = -delta
            buf[i] = (buf[i] + delta) & 0xFF
        elif op == 3:
            width = rng.choice((1, 2, 4))
            if width > size:
                width = 1
            pos = rng.randrange(size - width + 1)
            value = rng.choice(_INTERESTING[width])
            buf[pos : pos + width] = value.to_bytes(width, "big", signed=True)
        elif op == 4:
            start = rng.randrange(size)
            length = rng.randint(1, min(size - start, _MAX_BLOCK))
            at = rng.randint(0, size)
            buf[at:at] = buf[start : start + length]
        elif op == 5:
            if size > 1:
                start = rng.randrange(size)
                length = rng.randint(1, min(size - start, _MAX_BLOCK, size - 1))
                del buf[start : start + length]
        else:
            other = _seed_bytes(queue[rng.randrange(len(queue))]) if len(queue) else bytes(buf)
            if other:
                start = rng.randrange(len(other))
                length = rng.randint(1, min(len(other) - start, _MAX_BLOCK))
                at = rng.randrange(size)
                buf[at : at + length] = other[start : start + length]
    if len(buf) > MAX_INPUT_LEN:
        del buf[MAX_INPUT_LEN:]
    if not buf:
        buf.append(rng.randrange(256))
    return bytes(buf)


def _seed_bytes(item) -> bytes:
    return item.data if isinstance(item, SeedEntry) else item


@dataclass
class SeedReplay:
    seed_id: int
    exec_index: int
    time_ms: int
    coverage: frozenset
    kills: frozenset  # mutants this seed kills (only the new ones in incremental mode)


class Fuzzer:
    """Single-threaded campaign state: queue, failures, coverage, pool, rng.

    With ``replay_pool`` every saved seed is also judged against the whole
    of that pool as it is saved, giving the same records as an incremental
    corpus replay without executing the corpus a second time. It does not
    change the campaign itself.
    """

    def __init__(
        self,
        case: BenchmarkCase,
        pool: Optional[MutantPool],
        config: CampaignConfig,
        replay_pool: Optional[MutantPool] = None,
    ):
        config.validate()
        if config.policy.uses_mutants and (pool is None or len(pool) == 0):
            raise ConfigError(f"policy {config.policy.value} needs a non-empty mutant pool")
        if pool is not None and pool.program_digest != case.program.digest:
            raise ConfigError("mutant pool was built from a different program")
        self.case = case
        # kills accumulate on a private copy so the caller's pool stays reusable
        self.pool = MutantPool(pool.program_digest, pool.mutants, set(pool.killed)) if pool else None
        self.config = config
        self.policy = config.policy
        self.rng = random.Random(config.rng_seed)
        self.queue = SeedQueue()
        self.failures = FailSet()
        self.log = EventLog()
        self.coverage: set = set()
        self.execs = 0
        self.steps = 0
        self.engine = TestEngine(
            case.program,
            self.pool,
            ratio=config.ratio,
            fuel_cap=config.fuel_cap,
            criterion=parse_criterion(config.criterion),
            workers=config.workers,
            guards=site_guards(case.program, set(case.behaviors)),
        )
        self.mutation_config = None
        if self.policy.uses_mutants and config.k > 0:
            self.mutation_config = MutationConfig(
                k=config.k, strategy=config.strategy, selection_period=config.selection_period
            )
        self._selection: list = []
        self._started = time.monotonic()
        if replay_pool is not None and replay_pool.program_digest != case.program.digest:
            raise ConfigError("replay pool was built from a different program")
        self.replay_pool = replay_pool
        # sampled verdicts can stand in for replay verdicts only if ids mean the same mutants
        self._shared_ids = (
            replay_pool is not None
            and self.pool is not None
            and [(m.site_id, m.mutator) for m in self.pool.mutants]
            == [(m.site_id, m.mutator) for m in replay_pool.mutants]
        )
        self.replays: list = []
        self._replay_killed: set = set()

    def close(self) -> None:
        self.engine.close()

    def now_ms(self) -> int:
        if self.config.virtual_clock:
            return self.steps // 1000
        return int((time.monotonic() - self._started) * 1000)

    def budget_left(self) -> bool:
        c = self.config
        if c.max_execs is not None and self.execs >= c.max_execs:
            return False
        if c.duration_s is not None and time.monotonic() - self._started >= c.duration_s:
            return False
        return True

    def select(self) -> list:
        if self.mutation_config is None:
            return []
        if (self.execs - 1) % self.mutation_config.selection_period == 0:
            self._selection = select_mutants(self.pool, self.mutation_config, self.rng)
        return self._selection

    def execute_child(self, data: bytes, parent: Optional[int], force_save: bool = False) -> Feedback:
        self.execs += 1
        invocations = self.case.decode(data)
        mutants = self.select()
        fuel_before = self.engine.mutant_fuel
        put = self.engine.run_put(invocations)
        fb = self.engine.run(mutants, invocations, put)
        self.steps += fb.res.fuel_used + self.engine.mutant_fuel - fuel_before
        saved = len(self.queue)
        self.process_feedback(data, parent, fb, force_save)
        if self.replay_pool is not None and len(self.queue) > saved:
            self._replay_seed(self.queue[saved], invocations, fb, put[2])
        return fb

    def _replay_seed(self, entry: SeedEntry, invocations, fb: Feedback, eq) -> None:
        kills: frozenset = frozenset()
        if fb.res.ok:
            known = {v.mutant_id: v for v in fb.stat.verdicts} if self._shared_ids else {}
            rest = [m for m in self.replay_pool.mutants if m.id not in self._replay_killed]
            todo = [m for m in rest if m.id not in known]
            fuel_before = self.engine.mutant_fuel
            verdicts = list(self.engine.run_mutants(todo, invocations, fb.res, fb.cov, eq)) if todo else []
            # replay work is bookkeeping, not campaign time
            self.engine.mutant_fuel = fuel_before
            verdicts += [known[m.id] for m in rest if m.id in known]
            kills = frozenset(v.mutant_id for v in verdicts if v.killed)
            self._replay_killed |= kills
        self.replays.append(SeedReplay(entry.id, entry.exec_index, entry.time_ms, fb.cov, kills))

    def process_feedback(self, data: bytes, parent, fb: Feedback, force_save: bool = False) -> None:
        stat = fb.stat
        now, idx = self.now_ms(), self.execs
        existing = self.queue.find(data)
        seed_id = existing if existing is not None else len(self.queue)
        capable = stat.analyzed and stat.capable
        kills_new = False
        if capable:
            fresh = update_kill_statuses(self.pool, stat.killed_ids) if self.pool else set()
            self.log.append(
                Event(now, idx, EventKind.KILL, seed_id, {"killed": sorted(stat.killed_ids)})
            )
            if fresh:
                kills_new = True
                self.log.append(Event(now, idx, EventKind.KILL_NEW, seed_id, {"killed": sorted(fresh)}))
        favored = False
        new_edges: frozenset = frozenset()
        if not fb.res.ok:
            entry = self.failures.add(data, fb.res.crash, parent, idx, now)
            if entry is not None:
                self.log.append(
                    Event(now, idx, EventKind.CRASH, None, {"failure_id": entry.id, "crash": fb.res.crash.value})
                )
        else:
            new_edges = frozenset(fb.cov - self.coverage)
            if new_edges:
                favored = True
                self.coverage |= new_edges
                self.log.append(
                    Event(now, idx, EventKind.NEW_COV, seed_id, {"edges": sorted([s, o] for s, o in new_edges)})
                )
        # a crashing input never enters the queue, not even as an initial seed
        if (favored or capable or (force_save and fb.res.ok)) and existing is None:
            entry = SeedEntry(seed_id, data, favored, capable, kills_new, parent, idx, now, new_edges)
            self.queue.add(entry)
            self.log.append(Event(now, idx, EventKind.SEED_SAVED, seed_id, {"marks": entry.marks}))

    def seed_initial(self, seeds: Optional[list] = None) -> None:
        """Dry-run the initial seeds; without any, draw random ones until one runs cleanly."""
        if seeds is None:
            while not len(self.queue) and self.budget_left():
                self.execute_child(self.rng.randbytes(INITIAL_SEED_LEN), None, force_save=True)
            return
        for data in seeds:
            if not self.budget_left():
                break
            self.execute_child(data, None, force_save=True)

    def run(self, seeds: Optional[list] = None) -> "Fuzzer":
        """Seed the queue, then cycle over it until the budget runs out."""
        if not self.budget_left():
            return self
        self.seed_initial(seeds)
        if not len(self.queue):
            return self
        while self.budget_left():
            i = 0
            while i < len(self.queue) and self.budget_left():
                seed = self.queue[i]
                for _ in range(mutation_chance(seed, self.policy, self.config)):
                    if not self.budget_left():
                        break
                    child = mutate_input(seed.data, self.queue, self.rng)
                    self.execute_child(child, seed.id)
                i += 1
        return self


def fuzz_campaign(case: BenchmarkCase, pool: Optional[MutantPool], config: CampaignConfig, seeds=None):
    """Run a whole campaign; returns (queue, failures, event log)."""
    fuzzer = Fuzzer(case, pool, config)
    try:
        fuzzer.run(seeds)
    finally:
        fuzzer.close()
    return fuzzer.queue, fuzzer.failures, fuzzer.log


def write_run(run_dir, fuzzer: Fuzzer, target: Optional[str] = None) -> Path:
    """Persist corpus, failures, events and configuration under ``run_dir``."""
    run_dir = Path(run_dir)
    corpus = run_dir / "corpus"
    failures = run_dir / "failures"
    corpus.mkdir(parents=True, exist_ok=True)
    failures.mkdir(parents=True, exist_ok=True)
    for entry in fuzzer.queue:
        (corpus / f"id_{entry.id:06d}").write_bytes(entry.data)
        (corpus / f"id_{entry.id:06d}.meta.json").write_text(json.dumps(entry.meta(), sort_keys=True) + "\n")
    for entry in fuzzer.failures:
        (failures / f"id_{entry.id:06d}").write_bytes(entry.data)
        (failures / f"id_{entry.id:06d}.meta.json").write_text(json.dumps(entry.meta(), sort_keys=True) + "\n")
    (run_dir / "events.jsonl").write_text(fuzzer.log.to_jsonl())
    snapshot = run_snapshot(fuzzer, target)
    (run_dir / "config.json").write_text(json.dumps(snapshot, indent=1, sort_keys=True) + "\n")
    return run_dir


def run_snapshot(fuzzer: Fuzzer, target: Optional[str] = None) -> dict:
    """The config.json contents of a finished campaign."""
    return {
        "target": target or fuzzer.case.name,
        "program_digest": fuzzer.case.program.digest,
        "pool_digest": fuzzer.pool.program_digest if fuzzer.pool is not None else None,
        "pool_size": len(fuzzer.pool) if fuzzer.pool is not None else 0,
        "config": fuzzer.config.to_json(),
        "summary": {
            "execs": fuzzer.execs,
            "seeds": len(fuzzer.queue),
            "failures": len(fuzzer.failures),
            "edges": len(fuzzer.coverage),
            "killed_in_campaign": len(fuzzer.pool.killed) if fuzzer.pool is not None else 0,
        },
    }
