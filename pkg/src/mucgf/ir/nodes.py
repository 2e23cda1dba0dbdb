"""Syntax tree for the mini-language, plus the canonical printer.

Every statement and expression carries a ``site`` id assigned by a
preorder walk once parsing finishes. Expressions also carry their static
type (``ty``) after checking.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field, fields
from typing import Iterator, Optional


class Type(enum.Enum):
    UNIT = "unit"
    INT = "int"
    FLOAT = "float"
    BOOL = "bool"
    INT_ARR = "int[]"
    FLOAT_ARR = "float[]"

    @property
    def is_array(self) -> bool:
        return self in (Type.INT_ARR, Type.FLOAT_ARR)

    @property
    def element(self) -> "Type":
        if self is Type.INT_ARR:
            return Type.INT
        if self is Type.FLOAT_ARR:
            return Type.FLOAT
        raise ValueError(f"{self.value} is not an array type")

    def __str__(self) -> str:
        return self.value


ARITH_OPS = ("+", "-", "*", "/", "%")
COMPARE_OPS = ("<", "<=", ">", ">=", "==", "!=")
LOGIC_OPS = ("&&", "||")


@dataclass(eq=False)
class Node:
    site: int = field(default=-1, kw_only=True)


@dataclass(eq=False)
class Expr(Node):
    ty: Optional[Type] = field(default=None, kw_only=True)


@dataclass(eq=False)
class IntLit(Expr):
    value: int


@dataclass(eq=False)
class FloatLit(Expr):
    value: float


@dataclass(eq=False)
class BoolLit(Expr):
    value: bool


@dataclass(eq=False)
class Var(Expr):
    name: str


@dataclass(eq=False)
class Index(Expr):
    name: str
    index: Expr


@dataclass(eq=False)
class Unary(Expr):
    op: str  # "-" or "!"
    operand: Expr


@dataclass(eq=False)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(eq=False)
class Call(Expr):
    name: str
    args: list


@dataclass(eq=False)
class Stmt(Node):
    pass


@dataclass(eq=False)
class Let(Stmt):
    name: str
    declared: Optional[Type]
    value: Expr


@dataclass(eq=False)
class Assign(Stmt):
    name: str
    value: Expr


@dataclass(eq=False)
class IndexAssign(Stmt):
    name: str
    index: Expr
    value: Expr


@dataclass(eq=False)
class If(Stmt):
    cond: Expr
    then: list
    orelse: list


@dataclass(eq=False)
class While(Stmt):
    cond: Expr
    body: list


@dataclass(eq=False)
class Return(Stmt):
    value: Optional[Expr]


@dataclass(eq=False)
class Assert(Stmt):
    cond: Expr


@dataclass(eq=False)
class ExprStmt(Stmt):
    expr: Expr


@dataclass(eq=False)
class Function:
    name: str
    params: list  # [(name, Type)]
    declared_ret: Optional[Type]
    body: list
    ret: Optional[Type] = None  # resolved by the checker


class Program:
    """A checked program. Treat as immutable once constructed."""

    def __init__(self, functions: list[Function]):
        self.functions = functions
        self._by_name = {f.name: f for f in functions}
        self._text: Optional[str] = None
        self._nodes: Optional[dict[int, Node]] = None
        self._compiled: dict = {}

    def function(self, name: str) -> Function:
        return self._by_name[name]

    def has_function(self, name: str) -> bool:
        return name in self._by_name

    @property
    def text(self) -> str:
        if self._text is None:
            self._text = format_program(self)
        return self._text

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    def node(self, site: int) -> Node:
        if self._nodes is None:
            self._nodes = {n.site: n for _, n in walk_program(self)}
        return self._nodes[site]

    def conditional_sites(self) -> list[int]:
        return [n.site for _, n in walk_program(self) if isinstance(n, (If, While))]

    def branch_universe(self) -> int:
        return 2 * len(self.conditional_sites())

    def __repr__(self) -> str:
        names = ", ".join(f.name for f in self.functions)
        return f"<Program [{names}] {self.digest[:12]}>"


def child_nodes(node: Node) -> Iterator[Node]:
    """Direct children in preorder (field declaration order)."""
    for f in fields(node):
        if f.name in ("site", "ty"):
            continue
        value = getattr(node, f.name)
        if isinstance(value, Node):
            yield value
        elif isinstance(value, list):
            for item in value:
                if isinstance(item, Node):
                    yield item


def walk(node: Node) -> Iterator[Node]:
    yield node
    for child in child_nodes(node):
        yield from walk(child)


def walk_program(program: Program) -> Iterator[tuple[Function, Node]]:
    for fn in program.functions:
        for stmt in fn.body:
            for node in walk(stmt):
                yield fn, node


def number_sites(functions: list[Function]) -> None:
    counter = 0
    for fn in functions:
        for stmt in fn.body:
            for node in walk(stmt):
                node.site = counter
                counter += 1


def structural_diff(a: Node, b: Node) -> list[tuple[Node, Node]]:
    """Topmost node pairs that differ, ignoring site ids and types."""
    if type(a) is not type(b):
        return [(a, b)]
    own_differs = False
    kids_a, kids_b = [], []
    for f in fields(a):
        if f.name in ("site", "ty"):
            continue
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if isinstance(va, Node) or isinstance(vb, Node):
            if isinstance(va, Node) and isinstance(vb, Node):
                kids_a.append(va)
                kids_b.append(vb)
            else:
                own_differs = True
        elif isinstance(va, list) and isinstance(vb, list):
            if len(va) != len(vb):
                own_differs = True
                continue
            for xa, xb in zip(va, vb):
                if isinstance(xa, Node) and isinstance(xb, Node):
                    kids_a.append(xa)
                    kids_b.append(xb)
                elif xa != xb:
                    own_differs = True
        elif type(va) is not type(vb) or va != vb:
            own_differs = True
    if own_differs:
        return [(a, b)]
    out = []
    for ca, cb in zip(kids_a, kids_b):
        out.extend(structural_diff(ca, cb))
    return out


def program_diff(a: Program, b: Program) -> list[tuple[Node, Node]]:
    if [f.name for f in a.functions] != [f.name for f in b.functions]:
        raise ValueError("programs declare different functions")
    out = []
    for fa, fb in zip(a.functions, b.functions):
        if fa.params != fb.params or fa.declared_ret != fb.declared_ret:
            raise ValueError(f"signature of {fa.name} differs")
        if len(fa.body) != len(fb.body):
            raise ValueError(f"body length of {fa.name} differs")
        for sa, sb in zip(fa.body, fb.body):
            out.extend(structural_diff(sa, sb))
    return out


# --- printing -------------------------------------------------------------

def format_float(value: float) -> str:
    text = repr(float(value))
    if "." not in text and "e" not in text and "n" not in text:
        text += ".0"
    return text


def format_expr(e: Expr) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, FloatLit):
        return format_float(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Index):
        return f"{e.name}[{format_expr(e.index)}]"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, Unary):
        inner = format_expr(e.operand)
        if isinstance(e.operand, (Binary, Unary)):
            inner = f"({inner})"
        return f"{e.op}{inner}"
    if isinstance(e, Binary):
        return f"{_operand(e.left)} {e.op} {_operand(e.right)}"
    raise TypeError(f"not an expression: {e!r}")


def _operand(e: Expr) -> str:
    text = format_expr(e)
    return f"({text})" if isinstance(e, Binary) else text


def _format_block(stmts: list, depth: int, out: list[str]) -> None:
    for s in stmts:
        _format_stmt(s, depth, out)


def _format_stmt(s: Stmt, depth: int, out: list[str]) -> None:
    pad = "    " * depth
    if isinstance(s, Let):
        ann = f": {s.declared}" if s.declared is not None else ""
        out.append(f"{pad}let {s.name}{ann} = {format_expr(s.value)};")
    elif isinstance(s, Assign):
        out.append(f"{pad}{s.name} = {format_expr(s.value)};")
    elif isinstance(s, IndexAssign):
        out.append(f"{pad}{s.name}[{format_expr(s.index)}] = {format_expr(s.value)};")
    elif isinstance(s, If):
        out.append(f"{pad}if {format_expr(s.cond)} {{")
        _format_block(s.then, depth + 1, out)
        if s.orelse:
            out.append(f"{pad}}} else {{")
            _format_block(s.orelse, depth + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(s, While):
        out.append(f"{pad}while {format_expr(s.cond)} {{")
        _format_block(s.body, depth + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(s, Return):
        if s.value is None:
            out.append(f"{pad}return;")
        else:
            out.append(f"{pad}return {format_expr(s.value)};")
    elif isinstance(s, Assert):
        out.append(f"{pad}assert {format_expr(s.cond)};")
    elif isinstance(s, ExprStmt):
        out.append(f"{pad}{format_expr(s.expr)};")
    else:
        raise TypeError(f"not a statement: {s!r}")


def format_function(fn: Function) -> str:
    params = ", ".join(f"{name}: {ty}" for name, ty in fn.params)
    ret = f" -> {fn.declared_ret}" if fn.declared_ret is not None else ""
    out = [f"fn {fn.name}({params}){ret} {{"]
    _format_block(fn.body, 1, out)
    out.append("}")
    return "\n".join(out)


def format_program(program: Program) -> str:
    return "\n\n".join(format_function(f) for f in program.functions) + "\n"
