"""Mutation sites and reachability guards."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .nodes import (
    ARITH_OPS,
    COMPARE_OPS,
    Binary,
    Call,
    Function,
    If,
    IntLit,
    Node,
    Program,
    Return,
    Unary,
    While,
    child_nodes,
)

RETURN = "return"
COMPARISON = "comparison"
ARITHMETIC = "arithmetic"
NEGATION = "negation"


@dataclass(frozen=True)
class MutationSite:
    function: str
    site_id: int
    kind: str
    mutators: tuple = ()


def node_kind(node: Node) -> Optional[str]:
    if isinstance(node, Return) and node.value is not None:
        return RETURN
    if isinstance(node, Binary):
        if node.op in COMPARE_OPS:
            return COMPARISON
        if node.op in ARITH_OPS:
            return ARITHMETIC
    if isinstance(node, Unary) and node.op == "-":
        return NEGATION
    return None


def applicable_mutators(node: Node) -> tuple:
    kind = node_kind(node)
    if kind == RETURN:
        return ("RETURN_ZERO",)
    if kind == COMPARISON:
        if node.op in ("==", "!="):
            return ("NEGATE_CONDITIONAL",)
        return ("CONDITIONAL_BOUNDARY", "NEGATE_CONDITIONAL")
    if kind == ARITHMETIC:
        if node.op in ("+", "-") and isinstance(node.right, IntLit) and node.right.value == 1:
            return ("INCREMENT_FLIP", "MATH_OP_REPLACE")
        return ("MATH_OP_REPLACE",)
    if kind == NEGATION:
        return ("INVERT_NEGATIVE",)
    return ()


def enumerate_sites(program: Program) -> list[MutationSite]:
    """Preorder list of nodes at least one mutator can rewrite."""
    from .nodes import walk_program

    out = []
    for fn, node in walk_program(program):
        names = applicable_mutators(node)
        if names:
            out.append(MutationSite(fn.name, node.site, node_kind(node), names))
    return out


def site_guards(program: Program, entries=None) -> dict[int, Optional[frozenset]]:
    """Map every site id to the branch edges that witness reaching it.

    If none of a site's guard edges shows up in an execution's coverage,
    the site was not evaluated in that execution. ``None`` means no such
    witness exists. ``entries`` names the functions invocations may call
    directly; by default every function is assumed to be one.
    """
    if entries is None:
        entries = {fn.name for fn in program.functions}
    local: dict[int, Optional[frozenset]] = {}
    calls: dict[str, list[int]] = {}
    owner: dict[int, str] = {}

    def visit(node: Node, guard: Optional[frozenset], fn: Function) -> None:
        local[node.site] = guard
        owner[node.site] = fn.name
        if isinstance(node, Call):
            calls.setdefault(node.name, []).append(node.site)
        if isinstance(node, (If, While)):
            cond_guard = frozenset({(node.site, True), (node.site, False)})
            visit(node.cond, cond_guard, fn)
            then = node.then if isinstance(node, If) else node.body
            for s in then:
                visit(s, frozenset({(node.site, True)}), fn)
            if isinstance(node, If):
                for s in node.orelse:
                    visit(s, frozenset({(node.site, False)}), fn)
            return
        for child in child_nodes(node):
            visit(child, guard, fn)

    for fn in program.functions:
        for stmt in fn.body:
            visit(stmt, None, fn)

    entry_guard: dict[str, Optional[frozenset]] = {}

    def function_guard(name: str, active: frozenset) -> Optional[frozenset]:
        if name in entry_guard:
            return entry_guard[name]
        if name in active or name in entries:
            return None
        sites = calls.get(name)
        if not sites:
            return None
        union: set = set()
        for site in sites:
            g = resolve(site, active | {name})
            if g is None:
                return None
            union |= g
        return frozenset(union)

    def resolve(site: int, active: frozenset) -> Optional[frozenset]:
        g = local[site]
        if g is not None:
            return g
        return function_guard(owner[site], active)

    for fn in program.functions:
        entry_guard[fn.name] = function_guard(fn.name, frozenset())
    return {site: resolve(site, frozenset()) for site in local}
