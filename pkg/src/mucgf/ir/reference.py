"""Tree-walking interpreter with the same observable semantics as the
compiled engine. Slow; exists as an independent oracle for it.

``fuel_cap=None`` means unlimited fuel (the call-depth limit still holds).
"""

from __future__ import annotations

from typing import Optional, Sequence

from .compiler import MAX_CALL_DEPTH
from .nodes import (
    Assert,
    Assign,
    Binary,
    BoolLit,
    Call,
    Expr,
    ExprStmt,
    FloatLit,
    If,
    Index,
    IndexAssign,
    IntLit,
    Let,
    Program,
    Return,
    Type,
    Unary,
    Var,
    While,
)
from .values import BehaviorInvocation, CrashKind, ExecutionResult, Value

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1


class _Crash(Exception):
    def __init__(self, kind: CrashKind):
        self.kind = kind


class _Return(Exception):
    def __init__(self, value):
        self.value = value


def wrap64(n: int) -> int:
    n %= 2**64
    return n - 2**64 if n > INT_MAX else n


def trunc_div(a: int, b: int) -> int:
    q = a // b
    if q < 0 and q * b != a:
        q += 1
    return q


def node_count(e: Expr) -> int:
    # counts nodes evaluated eagerly; right operands of && and || are lazy
    if isinstance(e, Binary):
        right = 0 if e.op in ("&&", "||") else node_count(e.right)
        return 1 + node_count(e.left) + right
    if isinstance(e, Unary):
        return 1 + node_count(e.operand)
    if isinstance(e, Index):
        return 1 + node_count(e.index)
    if isinstance(e, Call):
        return 1 + sum(node_count(a) for a in e.args)
    return 1


class Interpreter:
    def __init__(self, program: Program, fuel_cap: Optional[int]):
        self.program = program
        self.fuel_cap = fuel_cap
        self.used = 0
        self.coverage: set = set()

    def spend(self, n: int) -> None:
        self.used += n
        if self.fuel_cap is not None and self.used > self.fuel_cap:
            raise _Crash(CrashKind.FUEL_EXHAUSTED)

    def call(self, name: str, args: list, depth: int):
        if depth > MAX_CALL_DEPTH:
            raise _Crash(CrashKind.FUEL_EXHAUSTED)
        fn = self.program.function(name)
        env = {pname: value for (pname, _), value in zip(fn.params, args)}
        try:
            self.run_block(fn.body, env, depth)
        except _Return as r:
            return r.value
        if fn.ret is Type.UNIT:
            return None
        raise _Crash(CrashKind.TYPE_FAULT)

    def run_block(self, stmts, env, depth) -> None:
        for s in stmts:
            self.run(s, env, depth)

    def run(self, s, env, depth) -> None:
        if isinstance(s, While):
            while True:
                self.spend(1 + node_count(s.cond))
                if not self.eval(s.cond, env, depth):
                    self.coverage.add((s.site, False))
                    return
                self.coverage.add((s.site, True))
                self.run_block(s.body, env, depth)
        if isinstance(s, Let) or isinstance(s, Assign):
            self.spend(1 + node_count(s.value))
            env[s.name] = self.eval(s.value, env, depth)
        elif isinstance(s, IndexAssign):
            self.spend(1 + node_count(s.index) + node_count(s.value))
            i = self.eval(s.index, env, depth)
            v = self.eval(s.value, env, depth)
            arr = env[s.name]
            if not 0 <= i < len(arr):
                raise _Crash(CrashKind.INDEX_OUT_OF_BOUNDS)
            arr[i] = v
        elif isinstance(s, If):
            self.spend(1 + node_count(s.cond))
            taken = self.eval(s.cond, env, depth)
            self.coverage.add((s.site, bool(taken)))
            self.run_block(s.then if taken else s.orelse, env, depth)
        elif isinstance(s, Return):
            if s.value is None:
                self.spend(1)
                raise _Return(None)
            self.spend(1 + node_count(s.value))
            raise _Return(self.eval(s.value, env, depth))
        elif isinstance(s, Assert):
            self.spend(1 + node_count(s.cond))
            if not self.eval(s.cond, env, depth):
                raise _Crash(CrashKind.ASSERTION_FAILURE)
        elif isinstance(s, ExprStmt):
            self.spend(1 + node_count(s.expr))
            self.eval(s.expr, env, depth)
        else:
            raise TypeError(type(s).__name__)

    def eval(self, e: Expr, env, depth):
        if isinstance(e, (IntLit, FloatLit, BoolLit)):
            return e.value
        if isinstance(e, Var):
            return env[e.name]
        if isinstance(e, Index):
            i = self.eval(e.index, env, depth)
            arr = env[e.name]
            if i < 0 or i >= len(arr):
                raise _Crash(CrashKind.INDEX_OUT_OF_BOUNDS)
            return arr[i]
        if isinstance(e, Unary):
            v = self.eval(e.operand, env, depth)
            if e.op == "!":
                return not v
            return wrap64(-v) if e.ty is Type.INT else -v
        if isinstance(e, Binary):
            return self.binary(e, env, depth)
        if isinstance(e, Call):
            return self.builtin_or_call(e, env, depth)
        raise TypeError(type(e).__name__)

    def binary(self, e: Binary, env, depth):
        op = e.op
        a = self.eval(e.left, env, depth)
        if op == "&&" or op == "||":
            if (op == "&&") != bool(a):
                return a
            self.spend(node_count(e.right))
            return self.eval(e.right, env, depth)
        b = self.eval(e.right, env, depth)
        is_int = e.left.ty is Type.INT
        if op == "+":
            return wrap64(a + b) if is_int else a + b
        if op == "-":
            return wrap64(a - b) if is_int else a - b
        if op == "*":
            return wrap64(a * b) if is_int else a * b
        if op == "/":
            if b == 0:
                raise _Crash(CrashKind.DIV_BY_ZERO)
            return wrap64(trunc_div(a, b)) if is_int else a / b
        if op == "%":
            if b == 0:
                raise _Crash(CrashKind.DIV_BY_ZERO)
            return a - b * trunc_div(a, b)
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        if op == "==":
            return a == b
        if op == "!=":
            return a != b
        raise ValueError(op)

    def builtin_or_call(self, e: Call, env, depth):
        args = [self.eval(a, env, depth) for a in e.args]
        if e.name == "len":
            return len(args[0])
        if e.name == "float":
            return float(args[0])
        if e.name == "int":
            x = args[0]
            if x != x or abs(x) == float("inf"):
                raise _Crash(CrashKind.TYPE_FAULT)
            return max(INT_MIN, min(INT_MAX, int(x)))
        if e.name in ("new_int", "new_float"):
            n = args[0]
            if n < 0:
                raise _Crash(CrashKind.INDEX_OUT_OF_BOUNDS)
            self.spend(n)
            return [0 if e.name == "new_int" else 0.0] * n
        return self.call(e.name, args, depth + 1)


def execute_reference(
    program: Program,
    invocations: Sequence[BehaviorInvocation],
    fuel_cap: Optional[int] = None,
) -> tuple[ExecutionResult, frozenset]:
    interp = Interpreter(program, fuel_cap)
    outputs = []
    try:
        for inv in invocations:
            args = [list(a.data) if a.ty.is_array else a.data for a in inv.args]
            raw = interp.call(inv.function, args, 0)
            ty = program.function(inv.function).ret
            outputs.append(Value(ty, tuple(raw) if ty.is_array else raw))
    except _Crash as c:
        used = interp.used
        if c.kind is CrashKind.FUEL_EXHAUSTED and fuel_cap is not None:
            used = fuel_cap
        return ExecutionResult.failure(c.kind, used), frozenset(interp.coverage)
    return ExecutionResult.success(outputs, interp.used), frozenset(interp.coverage)
