"""Mutant pool construction, selection and kill bookkeeping."""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Optional

from .ir import Program, Type, enumerate_sites, parse_program
from .ir.nodes import (
    Binary,
    BoolLit,
    Call,
    FloatLit,
    IntLit,
    Node,
    Return,
    Unary,
)
from .ir.sites import MutationSite, applicable_mutators, node_kind

POOL_FORMAT_VERSION = 1


class MutationError(ValueError):
    pass


def _zero_for(ty: Type):
    if ty is Type.INT:
        return IntLit(0)
    if ty is Type.FLOAT:
        return FloatLit(0.0)
    if ty is Type.BOOL:
        return BoolLit(False)
    if ty is Type.INT_ARR:
        return Call("new_int", [IntLit(0)])
    if ty is Type.FLOAT_ARR:
        return Call("new_float", [IntLit(0)])
    raise MutationError(f"no zero value for {ty}")


def _return_zero(node: Return) -> Node:
    return Return(_zero_for(node.value.ty))


def _swap_op(table: dict) -> Callable[[Binary], Node]:
    def rewrite(node: Binary) -> Node:
        return Binary(table[node.op], node.left, node.right)

    return rewrite


def _invert_negative(node: Unary) -> Node:
    return node.operand


@dataclass(frozen=True)
class Mutator:
    name: str
    kind: str
    description: str
    rewrite: Callable[[Node], Node] = field(repr=False, compare=False)

    def applies(self, node: Node) -> bool:
        return self.name in applicable_mutators(node)


_MUTATOR_LIST = [
    Mutator(
        "CONDITIONAL_BOUNDARY",
        "comparison",
        "< <-> <=, > <-> >=",
        _swap_op({"<": "<=", "<=": "<", ">": ">=", ">=": ">"}),
    ),
    Mutator(
        "INCREMENT_FLIP",
        "arithmetic",
        "e + 1 <-> e - 1",
        _swap_op({"+": "-", "-": "+"}),
    ),
    Mutator("INVERT_NEGATIVE", "negation", "-x -> x", _invert_negative),
    Mutator(
        "MATH_OP_REPLACE",
        "arithmetic",
        "+ <-> -, * <-> /, % -> *",
        _swap_op({"+": "-", "-": "+", "*": "/", "/": "*", "%": "*"}),
    ),
    Mutator(
        "NEGATE_CONDITIONAL",
        "comparison",
        "< <-> >=, > <-> <=, == <-> !=",
        _swap_op({"<": ">=", ">=": "<", ">": "<=", "<=": ">", "==": "!=", "!=": "=="}),
    ),
    Mutator("RETURN_ZERO", "return", "return e -> return <zero of e's type>", _return_zero),
]
MUTATORS = {m.name: m for m in _MUTATOR_LIST}
DEFAULT_MUTATORS = tuple(MUTATORS)


def get_mutator(name: str) -> Mutator:
    try:
        return MUTATORS[name.upper()]
    except KeyError:
        raise MutationError(f"unknown mutator {name!r}; known: {', '.join(MUTATORS)}") from None


def parse_mutator_list(text: str) -> tuple:
    """``"all"`` or a comma-separated list of mutator names."""
    if text.strip().lower() in ("", "all", "default"):
        return DEFAULT_MUTATORS
    return tuple(get_mutator(part.strip()).name for part in text.split(",") if part.strip())


@dataclass
class Mutant:
    id: int
    site: MutationSite
    mutator: str
    program: Program

    @property
    def function(self) -> str:
        return self.site.function

    @property
    def site_id(self) -> int:
        return self.site.site_id

    def describe(self) -> str:
        return f"#{self.id} {self.mutator} @ {self.site.function}:{self.site.site_id}"


@dataclass
class MutantPool:
    program_digest: str
    mutants: list
    killed: set = field(default_factory=set)

    def __len__(self) -> int:
        return len(self.mutants)

    def __getitem__(self, mutant_id: int) -> Mutant:
        return self.mutants[mutant_id]

    @property
    def ids(self) -> range:
        return range(len(self.mutants))

    def kill_rate(self) -> float:
        if not self.mutants:
            return 0.0
        return 100.0 * len(self.killed) / len(self.mutants)

    def to_json(self) -> dict:
        return {
            "version": POOL_FORMAT_VERSION,
            "program_digest": self.program_digest,
            "mutants": [
                {
                    "id": m.id,
                    "function": m.site.function,
                    "site_id": m.site.site_id,
                    "mutator": m.mutator,
                    "program_text": m.program.text,
                }
                for m in self.mutants
            ],
            "killed": sorted(self.killed),
        }

    @classmethod
    def from_json(cls, data: dict, original: Optional[Program] = None) -> "MutantPool":
        if data.get("version") != POOL_FORMAT_VERSION:
            raise MutationError(f"unsupported pool version {data.get('version')!r}")
        if original is not None and original.digest != data["program_digest"]:
            raise MutationError("pool was built from a different program")
        mutants = []
        for i, entry in enumerate(data["mutants"]):
            if entry["id"] != i:
                raise MutationError("mutant ids must be dense and ordered")
            kind = None
            if original is not None:
                kind = node_kind(original.node(entry["site_id"]))
            site = MutationSite(entry["function"], entry["site_id"], kind)
            mutants.append(Mutant(i, site, entry["mutator"], parse_program(entry["program_text"])))
        killed = set(data.get("killed", []))
        if not killed <= set(range(len(mutants))):
            raise MutationError("killed ids outside the pool")
        return cls(data["program_digest"], mutants, killed)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path, original: Optional[Program] = None) -> "MutantPool":
        return cls.from_json(json.loads(Path(path).read_text()), original)


@dataclass
class MutationConfig:
    mutators: tuple = DEFAULT_MUTATORS
    strategy: str = "basic_random"
    k: int = 10
    selection_period: int = 1

    def __post_init__(self):
        self.mutators = tuple(get_mutator(m).name for m in self.mutators)
        if self.k < 1:
            raise MutationError("k must be >= 1")
        if self.selection_period < 1:
            raise MutationError("selection_period must be >= 1")
        if self.strategy not in SELECTION_STRATEGIES:
            raise MutationError(f"unknown selection strategy {self.strategy!r}")


def _replace_node(root: Node, site: int, new: Node) -> bool:
    for f in fields(root):
        if f.name in ("site", "ty"):
            continue
        value = getattr(root, f.name)
        if isinstance(value, Node):
            if value.site == site:
                setattr(root, f.name, new)
                return True
            if _replace_node(value, site, new):
                return True
        elif isinstance(value, list):
            for i, item in enumerate(value):
                if not isinstance(item, Node):
                    continue
                if item.site == site:
                    value[i] = new
                    return True
                if _replace_node(item, site, new):
                    return True
    return False


def apply_mutator(program: Program, site: MutationSite, mutator) -> Program:
    """Rewrite the node at ``site`` and return a freshly parsed program."""
    if isinstance(mutator, str):
        mutator = get_mutator(mutator)
    try:
        node = program.node(site.site_id)
    except KeyError:
        raise MutationError(f"no site {site.site_id}") from None
    if not mutator.applies(node):
        raise MutationError(f"{mutator.name} does not apply to site {site.site_id}")
    functions = copy.deepcopy(program.functions)
    target = next(fn for fn in functions if fn.name == site.function)
    replacement = mutator.rewrite(copy.deepcopy(node))
    replaced = False
    for i, stmt in enumerate(target.body):
        if stmt.site == site.site_id:
            target.body[i] = replacement
            replaced = True
            break
        if _replace_node(stmt, site.site_id, replacement):
            replaced = True
            break
    if not replaced:
        raise MutationError(f"site {site.site_id} is not in function {site.function}")
    # printing and re-parsing renumbers sites and re-runs the checker
    return parse_program(Program(functions).text)


def dedupe(pool: MutantPool) -> MutantPool:
    """Drop mutants whose program text repeats an earlier one (or the original)."""
    seen: dict[str, int] = {}
    kept = []
    remap: dict[int, int] = {}
    for m in pool.mutants:
        text = m.program.text
        if m.program.digest == pool.program_digest:
            continue
        if text in seen:
            remap[m.id] = seen[text]
            continue
        new_id = len(kept)
        seen[text] = new_id
        remap[m.id] = new_id
        kept.append(Mutant(new_id, m.site, m.mutator, m.program))
    killed = {remap[i] for i in pool.killed if i in remap}
    return MutantPool(pool.program_digest, kept, killed)


def build_mutant_pool(program: Program, config: Optional[MutationConfig] = None) -> MutantPool:
    config = config or MutationConfig()
    enabled = set(config.mutators)
    if not enabled:
        raise MutationError("no mutators enabled")
    candidates = []
    for site in enumerate_sites(program):
        for name in sorted(enabled.intersection(site.mutators)):
            candidates.append((site, name))
    mutants = [
        Mutant(i, site, name, apply_mutator(program, site, name))
        for i, (site, name) in enumerate(candidates)
    ]
    pool = dedupe(MutantPool(program.digest, mutants))
    if not pool.mutants:
        raise MutationError("no applicable mutation sites for the enabled mutators")
    return pool


def _basic_random(pool: MutantPool, k: int, rng: random.Random) -> list:
    picks = rng.sample(range(len(pool.mutants)), min(k, len(pool.mutants)))
    return [pool.mutants[i] for i in sorted(picks)]


def _unkilled_random(pool: MutantPool, k: int, rng: random.Random) -> list:
    alive = [m.id for m in pool.mutants if m.id not in pool.killed]
    picks = rng.sample(alive, min(k, len(alive)))
    return [pool.mutants[i] for i in sorted(picks)]


SELECTION_STRATEGIES: dict[str, Callable] = {
    "basic_random": _basic_random,
    "unkilled_random": _unkilled_random,
}


def select_mutants(pool: MutantPool, config: MutationConfig, rng: random.Random) -> list:
    """Pick up to ``config.k`` distinct mutants, ordered by id."""
    if not pool.mutants:
        raise MutationError("cannot select from an empty pool")
    return SELECTION_STRATEGIES[config.strategy](pool, config.k, rng)


def update_kill_statuses(pool: MutantPool, killed_ids: Iterable[int]) -> set:
    """Fold kills into the pool; return the ids that were not killed before.

    Accepts a MutationStats (anything with ``killed_ids``) or a plain
    iterable of ids.
    """
    ids = set(getattr(killed_ids, "killed_ids", killed_ids))
    unknown = [i for i in ids if not 0 <= i < len(pool.mutants)]
    if unknown:
        raise MutationError(f"unknown mutant ids {sorted(unknown)}")
    fresh = ids - pool.killed
    pool.killed |= fresh
    return fresh


def mutation_score(killed: int, survived: int) -> float:
    if killed < 0 or survived < 0:
        raise ValueError("counts must be non-negative")
    if killed + survived == 0:
        raise ValueError("mutation score is undefined with no mutants")
    return killed / (killed + survived) * 100
