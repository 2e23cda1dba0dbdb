"""Compile checked programs to Python functions and run them.

Each IR function becomes one Python function taking
``(cov, depth, *params, fuel)`` and returning ``(fuel_left, value)``.
Fuel is threaded through a local variable: every statement charges its
static cost before it runs, the right operand of ``&&``/``||`` is charged
only when evaluated, and ``new_int(n)``/``new_float(n)`` charge ``n``.
A statement's static cost is 1 plus one per expression node it evaluates
unconditionally; ``if``/``while`` charge 1 plus the condition on every
evaluation of the condition.

Coverage instrumentation is optional; mutants are compiled without it.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .nodes import (
    Assert,
    Assign,
    Binary,
    BoolLit,
    Call,
    Expr,
    ExprStmt,
    FloatLit,
    Function,
    If,
    Index,
    IndexAssign,
    IntLit,
    Let,
    Program,
    Return,
    Stmt,
    Type,
    Unary,
    Var,
    While,
)
from .values import BehaviorInvocation, CrashKind, ExecutionResult, Value

MAX_CALL_DEPTH = 64
_FILENAME = "<mucgf-ir>"

_HALF = 1 << 63
_MASK = (1 << 64) - 1


class IRCrash(Exception):
    def __init__(self, kind: CrashKind):
        super().__init__(kind.value)
        self.kind = kind


class FuelExhausted(Exception):
    pass


def static_cost(e: Expr) -> int:
    """Nodes evaluated unconditionally when ``e`` is evaluated."""
    if isinstance(e, Binary):
        if e.op in ("&&", "||"):
            return 1 + static_cost(e.left)
        return 1 + static_cost(e.left) + static_cost(e.right)
    if isinstance(e, Unary):
        return 1 + static_cost(e.operand)
    if isinstance(e, Index):
        return 1 + static_cost(e.index)
    if isinstance(e, Call):
        return 1 + sum(static_cost(a) for a in e.args)
    return 1


def statement_cost(s: Stmt) -> int:
    if isinstance(s, (Let, Assign)):
        return 1 + static_cost(s.value)
    if isinstance(s, IndexAssign):
        return 1 + static_cost(s.index) + static_cost(s.value)
    if isinstance(s, (If, While)):
        return 1 + static_cost(s.cond)
    if isinstance(s, Return):
        return 1 + (static_cost(s.value) if s.value is not None else 0)
    if isinstance(s, Assert):
        return 1 + static_cost(s.cond)
    if isinstance(s, ExprStmt):
        return 1 + static_cost(s.expr)
    raise TypeError(type(s).__name__)


# --- runtime helpers visible to generated code ------------------------------

def _exhausted():
    raise FuelExhausted()


def _oob():
    raise IRCrash(CrashKind.INDEX_OUT_OF_BOUNDS)


def _assert_failed():
    raise IRCrash(CrashKind.ASSERTION_FAILURE)


def _missing_return():
    raise IRCrash(CrashKind.TYPE_FAULT)


def _idiv(a: int, b: int) -> int:
    if b == 0:
        raise IRCrash(CrashKind.DIV_BY_ZERO)
    q = abs(a) // abs(b)
    if (a < 0) != (b < 0):
        q = -q
    return ((q + _HALF) & _MASK) - _HALF


def _imod(a: int, b: int) -> int:
    if b == 0:
        raise IRCrash(CrashKind.DIV_BY_ZERO)
    r = abs(a) % abs(b)
    return -r if a < 0 else r


def _fdiv(a: float, b: float) -> float:
    if b == 0.0:
        raise IRCrash(CrashKind.DIV_BY_ZERO)
    return a / b


def _f2i(x: float) -> int:
    if x != x or x in (float("inf"), float("-inf")):
        raise IRCrash(CrashKind.TYPE_FAULT)
    v = int(x)
    if v >= _HALF:
        return _HALF - 1
    if v < -_HALF:
        return -_HALF
    return v


_RUNTIME = {
    "_exhausted": _exhausted,
    "_oob": _oob,
    "_assert_failed": _assert_failed,
    "_missing_return": _missing_return,
    "_idiv": _idiv,
    "_imod": _imod,
    "_fdiv": _fdiv,
    "_f2i": _f2i,
}


BOUNDARY_OPS = frozenset(("<", "<=", ">", ">="))
_QUIET_BINARY = frozenset(("+", "-", "*", "<", "<=", ">", ">=", "==", "!="))


def _quiet_expr(e: Expr) -> bool:
    """True if evaluating ``e`` can neither crash nor spend extra fuel."""
    if isinstance(e, (IntLit, FloatLit, BoolLit, Var)):
        return True
    if isinstance(e, Unary):
        return _quiet_expr(e.operand)
    if isinstance(e, Binary):
        return e.op in _QUIET_BINARY and _quiet_expr(e.left) and _quiet_expr(e.right)
    if isinstance(e, Call):
        return e.name in ("len", "float") and all(_quiet_expr(a) for a in e.args)
    return False


def _quiet(s: Stmt) -> bool:
    return isinstance(s, (Let, Assign)) and _quiet_expr(s.value)


def _wrap(code: str) -> str:
    return f"((({code}) + {_HALF}) & {_MASK}) - {_HALF}"


class _FunctionEmitter:
    def __init__(self, fn: Function, coverage: bool, probe: bool = False):
        self.fn = fn
        self.coverage = coverage
        self.probe = probe
        self.lines: list[str] = []
        self.tmp = 0

    def fresh(self, prefix: str) -> str:
        self.tmp += 1
        return f"{prefix}{self.tmp}"

    def emit(self, depth: int, line: str) -> None:
        self.lines.append("    " * depth + line)

    def charge(self, depth: int, cost: int) -> None:
        self.emit(depth, f"if (_fuel := _fuel - {cost}) < 0: _exhausted()")

    def build(self) -> str:
        fn = self.fn
        params = "".join(f"v_{name}, " for name, _ in fn.params)
        self.emit(0, f"def f_{fn.name}(_cov, _eq, _d, {params}_fuel):")
        self.emit(1, f"if _d > {MAX_CALL_DEPTH}: _exhausted()")
        self.block(fn.body, 1)
        if fn.ret is Type.UNIT:
            self.emit(1, "return (_fuel, None)")
        else:
            self.emit(1, "_missing_return()")
        return "\n".join(self.lines)

    def block(self, stmts: Sequence[Stmt], depth: int, tail: int = 0) -> None:
        """Emit ``stmts``; ``tail`` is fuel to charge after the last one.

        A run of quiet statements shares one charge with the statement (or
        tail) that follows it. Quiet statements have no observable effect
        before that charge could fail, so the result is unchanged.
        """
        start = len(self.lines)
        i = 0
        while i < len(stmts):
            j = i
            while j < len(stmts) and _quiet(stmts[j]):
                j += 1
            cost = sum(statement_cost(q) for q in stmts[i:j])
            if j < len(stmts):
                cost += statement_cost(stmts[j])
            else:
                cost += tail
                tail = 0
            if cost:
                self.charge(depth, cost)
            for q in stmts[i:j]:
                self.emit(depth, f"v_{q.name} = {self.expr(q.value)}")
            if j < len(stmts):
                self.stmt(stmts[j], depth)
            i = j + 1
        if tail:
            self.charge(depth, tail)
        if len(self.lines) == start:
            self.emit(depth, "pass")

    def cover(self, depth: int, site: int, outcome: bool) -> None:
        if self.coverage:
            self.emit(depth, f"_cov.add(({site}, {outcome}))")

    def stmt(self, s: Stmt, depth: int) -> None:
        """Emit one statement whose fuel has already been charged.

        For a loop that is the charge of its first condition check; the
        body charges the following checks through its tail.
        """
        if isinstance(s, While):
            self.emit(depth, "while True:")
            self.emit(depth + 1, f"if not ({self.expr(s.cond)}):")
            self.cover(depth + 2, s.site, False)
            self.emit(depth + 2, "break")
            self.cover(depth + 1, s.site, True)
            self.block(s.body, depth + 1, tail=statement_cost(s))
            return
        if isinstance(s, (Let, Assign)):
            self.emit(depth, f"v_{s.name} = {self.expr(s.value)}")
        elif isinstance(s, IndexAssign):
            self.emit(depth, f"_j = {self.expr(s.index)}")
            self.emit(depth, f"_v = {self.expr(s.value)}")
            self.emit(depth, "if _j < 0: _oob()")
            self.emit(depth, f"v_{s.name}[_j] = _v")
        elif isinstance(s, If):
            self.emit(depth, f"if {self.expr(s.cond)}:")
            self.cover(depth + 1, s.site, True)
            self.block(s.then, depth + 1)
            if self.coverage or s.orelse:
                self.emit(depth, "else:")
                self.cover(depth + 1, s.site, False)
                if s.orelse:
                    self.block(s.orelse, depth + 1)
        elif isinstance(s, Return):
            if s.value is None:
                self.emit(depth, "return (_fuel, None)")
            else:
                # the value may spend fuel, so read _fuel only afterwards
                self.emit(depth, f"_r = {self.expr(s.value)}")
                self.emit(depth, "return (_fuel, _r)")
        elif isinstance(s, Assert):
            self.emit(depth, f"if not ({self.expr(s.cond)}): _assert_failed()")
        elif isinstance(s, ExprStmt):
            self.emit(depth, self.expr(s.expr))
        else:
            raise TypeError(type(s).__name__)

    def expr(self, e: Expr) -> str:
        if isinstance(e, IntLit):
            return str(e.value)
        if isinstance(e, FloatLit):
            return repr(e.value)
        if isinstance(e, BoolLit):
            return "True" if e.value else "False"
        if isinstance(e, Var):
            return f"v_{e.name}"
        if isinstance(e, Index):
            t = self.fresh("_i")
            return f"(v_{e.name}[{t}] if 0 <= ({t} := {self.expr(e.index)}) else _oob())"
        if isinstance(e, Unary):
            inner = self.expr(e.operand)
            if e.op == "!":
                return f"(not {inner})"
            if e.ty is Type.INT:
                return f"({_wrap('-' + inner)})"
            return f"(-{inner})"
        if isinstance(e, Binary):
            return self.binary(e)
        if isinstance(e, Call):
            return self.call(e)
        raise TypeError(type(e).__name__)

    def binary(self, e: Binary) -> str:
        op = e.op
        left = self.expr(e.left)
        if op in ("&&", "||"):
            right = self.expr(e.right)
            cost = static_cost(e.right)
            word = "and" if op == "&&" else "or"
            return f"({left} {word} (((_fuel := _fuel - {cost}) < 0 and _exhausted()) or {right}))"
        right = self.expr(e.right)
        if e.left.ty is Type.INT and op in ("+", "-", "*"):
            return f"({_wrap(f'{left} {op} {right}')})"
        if op == "/":
            helper = "_idiv" if e.ty is Type.INT else "_fdiv"
            return f"{helper}({left}, {right})"
        if op == "%":
            return f"_imod({left}, {right})"
        if self.probe and op in BOUNDARY_OPS:
            # record sites whose operands were ever equal: only there does
            # swapping < for <= (or > for >=) change the outcome
            a, b = self.fresh("_l"), self.fresh("_r")
            return f"((({a} := {left}) == ({b} := {right}) and _eq.add({e.site})) or {a} {op} {b})"
        return f"({left} {op} {right})"

    def call(self, e: Call) -> str:
        args = [self.expr(a) for a in e.args]
        name = e.name
        if name == "len":
            return f"len({args[0]})"
        if name == "float":
            return f"float({args[0]})"
        if name == "int":
            return f"_f2i({args[0]})"
        if name in ("new_int", "new_float"):
            n = self.fresh("_n")
            zero = "0" if name == "new_int" else "0.0"
            return (
                f"((({n} := {args[0]}) < 0 and _oob()) or "
                f"((_fuel := _fuel - {n}) < 0 and _exhausted()) or [{zero}] * {n})"
            )
        t = self.fresh("_t")
        joined = "".join(f"{a}, " for a in args)
        return f"(({t} := f_{name}(_cov, _eq, _d + 1, {joined}_fuel)), (_fuel := {t}[0]))[0][1]"


def generate_source(program: Program, coverage: bool, probe: bool = False) -> str:
    chunks = [_FunctionEmitter(fn, coverage, probe).build() for fn in program.functions]
    return "\n\n".join(chunks) + "\n"


class CompiledProgram:
    def __init__(self, program: Program, coverage: bool, probe: bool = False):
        self.program = program
        self.coverage = coverage
        self.probe = probe
        self.source = generate_source(program, coverage, probe)
        namespace = dict(_RUNTIME)
        exec(compile(self.source, _FILENAME, "exec"), namespace)
        self.entry = {fn.name: namespace[f"f_{fn.name}"] for fn in program.functions}
        self.ret_types = {fn.name: fn.ret for fn in program.functions}


def compiled(program: Program, coverage: bool = True, probe: bool = False) -> CompiledProgram:
    cache = program._compiled
    key = (coverage, probe)
    cp = cache.get(key)
    if cp is None:
        cp = cache[key] = CompiledProgram(program, coverage, probe)
    return cp


def _fuel_at_crash(exc: BaseException, fuel_cap: int) -> int:
    tb = exc.__traceback__
    left = None
    while tb is not None:
        frame = tb.tb_frame
        if frame.f_code.co_filename == _FILENAME:
            left = frame.f_locals.get("_fuel", left)
        tb = tb.tb_next
    if left is None:
        return 0
    return fuel_cap - max(left, 0)


def _arg(v: Value):
    return list(v.data) if v.ty.is_array else v.data


def _out(ty: Type, raw) -> Value:
    if ty.is_array:
        return Value(ty, tuple(raw))
    return Value(ty, raw)


def _run(cp: CompiledProgram, invocations, fuel_cap: int, cov, eq) -> ExecutionResult:
    if fuel_cap < 1:
        raise ValueError("fuel_cap must be >= 1")
    if not invocations:
        raise ValueError("at least one invocation is required")
    fuel = fuel_cap
    outputs = []
    try:
        for inv in invocations:
            fuel, raw = cp.entry[inv.function](cov, eq, 0, *[_arg(a) for a in inv.args], fuel)
            outputs.append(_out(cp.ret_types[inv.function], raw))
    except FuelExhausted:
        return ExecutionResult.failure(CrashKind.FUEL_EXHAUSTED, fuel_cap)
    except IRCrash as exc:
        return ExecutionResult.failure(exc.kind, _fuel_at_crash(exc, fuel_cap))
    except IndexError as exc:
        return ExecutionResult.failure(CrashKind.INDEX_OUT_OF_BOUNDS, _fuel_at_crash(exc, fuel_cap))
    except RecursionError:
        return ExecutionResult.failure(CrashKind.FUEL_EXHAUSTED, fuel_cap)
    return ExecutionResult.success(outputs, fuel_cap - fuel)


def execute(
    program: Program,
    invocations: Sequence[BehaviorInvocation],
    fuel_cap: int,
    coverage: bool = True,
) -> tuple[ExecutionResult, frozenset]:
    """Run ``invocations`` in order under one shared fuel cap.

    Returns the result and the union of branch edges taken. Crashes are
    data (status FAILURE), never exceptions.
    """
    cov: Optional[set] = set() if coverage else None
    res = _run(compiled(program, coverage), invocations, fuel_cap, cov, None)
    return res, frozenset(cov) if cov else frozenset()


def execute_probed(
    program: Program,
    invocations: Sequence[BehaviorInvocation],
    fuel_cap: int,
) -> tuple[ExecutionResult, frozenset, frozenset]:
    """Like ``execute``, also returning the ordered-comparison sites whose
    two operands were equal at least once."""
    cov: set = set()
    eq: set = set()
    res = _run(compiled(program, True, True), invocations, fuel_cap, cov, eq)
    return res, frozenset(cov), frozenset(eq)
