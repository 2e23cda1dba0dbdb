"""Tokenizer, recursive-descent parser and static checker for IR text.

Grammar (whitespace and newlines are insignificant, ``;`` is optional)::

    program  := function*
    function := "fn" NAME "(" [NAME ":" type ("," NAME ":" type)*] ")" ["->" type] block
    type     := ("int" | "float" | "bool" | "unit") ["[" "]"]
    block    := "{" stmt* "}"
    stmt     := "let" NAME [":" type] "=" expr
              | NAME "=" expr | NAME "[" expr "]" "=" expr
              | "if" expr block ["else" (block | if-stmt)]
              | "while" expr block
              | "return" [expr] | "assert" expr | call

Operator precedence, loosest first: ``||``, ``&&``, comparisons,
``+ -``, ``* / %``, unary ``- !``.
"""

from __future__ import annotations

import math
import re
from typing import Optional

from .nodes import (
    ARITH_OPS,
    COMPARE_OPS,
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
    number_sites,
)

INT_MAX = (1 << 63) - 1

KEYWORDS = {"fn", "let", "if", "else", "while", "return", "assert", "true", "false"}
TYPE_NAMES = {"int": Type.INT, "float": Type.FLOAT, "bool": Type.BOOL, "unit": Type.UNIT}
ARRAY_TYPES = {Type.INT: Type.INT_ARR, Type.FLOAT: Type.FLOAT_ARR}

# name -> (parameter types, result); None in the parameter list means "any array"
BUILTINS = {
    "len": ([None], Type.INT),
    "new_int": ([Type.INT], Type.INT_ARR),
    "new_float": ([Type.INT], Type.FLOAT_ARR),
    "float": ([Type.INT], Type.FLOAT),
    "int": ([Type.FLOAT], Type.INT),
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<float>\d+\.\d*(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|==|!=|<=|>=|&&|\|\||[-+*/%<>=!(){}\[\],:;])
    """,
    re.VERBOSE,
)


class IRSyntaxError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class IRTypeError(ValueError):
    def __init__(self, message: str, site: int):
        super().__init__(f"site {site}: {message}")
        self.site = site


class _Tok:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind, self.text, self.line, self.col = kind, text, line, col


def tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise IRSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            toks.append(_Tok(kind, chunk, line, pos - line_start + 1))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    # token helpers
    def peek(self, offset: int = 0) -> _Tok:
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def error(self, message: str, tok: Optional[_Tok] = None):
        tok = tok or self.peek()
        shown = tok.text or "end of input"
        raise IRSyntaxError(f"{message} (found {shown!r})", tok.line, tok.col)

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind in ("op", "name") and tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> _Tok:
        if not self.at(text):
            self.error(f"expected {text!r}")
        tok = self.peek()
        self.i += 1
        return tok

    def name(self) -> str:
        tok = self.peek()
        if tok.kind != "name" or tok.text in KEYWORDS or tok.text in TYPE_NAMES:
            self.error("expected identifier")
        self.i += 1
        return tok.text

    # grammar
    def program(self) -> list[Function]:
        functions = []
        while self.peek().kind != "eof":
            functions.append(self.function())
        return functions

    def type_(self) -> Type:
        tok = self.peek()
        if tok.kind != "name" or tok.text not in TYPE_NAMES:
            self.error("expected type")
        self.i += 1
        base = TYPE_NAMES[tok.text]
        if self.accept("["):
            self.expect("]")
            if base not in ARRAY_TYPES:
                self.error(f"no array type over {base}", tok)
            return ARRAY_TYPES[base]
        return base

    def function(self) -> Function:
        self.expect("fn")
        name = self.name()
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                pname = self.name()
                self.expect(":")
                params.append((pname, self.type_()))
                if not self.accept(","):
                    break
        self.expect(")")
        ret = self.type_() if self.accept("->") else None
        return Function(name, params, ret, self.block())

    def block(self) -> list[Stmt]:
        self.expect("{")
        body = []
        while not self.at("}"):
            if self.peek().kind == "eof":
                self.error("unterminated block")
            body.append(self.statement())
        self.expect("}")
        return body

    def statement(self) -> Stmt:
        stmt = self._statement()
        self.accept(";")
        return stmt

    def _statement(self) -> Stmt:
        if self.accept("let"):
            name = self.name()
            declared = self.type_() if self.accept(":") else None
            self.expect("=")
            return Let(name, declared, self.expr())
        if self.at("if"):
            return self.if_stmt()
        if self.accept("while"):
            cond = self.expr()
            return While(cond, self.block())
        if self.accept("return"):
            if self.at(";") or self.at("}"):
                return Return(None)
            return Return(self.expr())
        if self.accept("assert"):
            return Assert(self.expr())
        tok = self.peek()
        if tok.kind == "name" and tok.text not in KEYWORDS:
            nxt = self.peek(1)
            if nxt.kind == "op" and nxt.text == "=":
                name = self.name()
                self.expect("=")
                return Assign(name, self.expr())
            if nxt.kind == "op" and nxt.text == "[":
                name = self.name()
                self.expect("[")
                index = self.expr()
                self.expect("]")
                self.expect("=")
                return IndexAssign(name, index, self.expr())
        expr = self.expr()
        if not isinstance(expr, Call):
            self.error("expression statement must be a call", tok)
        return ExprStmt(expr)

    def if_stmt(self) -> If:
        self.expect("if")
        cond = self.expr()
        then = self.block()
        orelse: list[Stmt] = []
        if self.accept("else"):
            orelse = [self.if_stmt()] if self.at("if") else self.block()
        return If(cond, then, orelse)

    def expr(self) -> Expr:
        return self.or_expr()

    def or_expr(self) -> Expr:
        left = self.and_expr()
        while self.accept("||"):
            left = Binary("||", left, self.and_expr())
        return left

    def and_expr(self) -> Expr:
        left = self.cmp_expr()
        while self.accept("&&"):
            left = Binary("&&", left, self.cmp_expr())
        return left

    def cmp_expr(self) -> Expr:
        left = self.add_expr()
        for op in COMPARE_OPS:
            if self.at(op):
                self.i += 1
                right = self.add_expr()
                if any(self.at(o) for o in COMPARE_OPS):
                    self.error("comparisons do not chain")
                return Binary(op, left, right)
        return left

    def add_expr(self) -> Expr:
        left = self.mul_expr()
        while self.at("+") or self.at("-"):
            op = self.peek().text
            self.i += 1
            left = Binary(op, left, self.mul_expr())
        return left

    def mul_expr(self) -> Expr:
        left = self.unary()
        while self.at("*") or self.at("/") or self.at("%"):
            op = self.peek().text
            self.i += 1
            left = Binary(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.at("-") or self.at("!"):
            op = self.peek().text
            self.i += 1
            return Unary(op, self.unary())
        return self.primary()

    def primary(self) -> Expr:
        tok = self.peek()
        if tok.kind == "int":
            self.i += 1
            value = int(tok.text)
            if value > INT_MAX:
                self.error("integer literal out of range", tok)
            return IntLit(value)
        if tok.kind == "float":
            self.i += 1
            value = float(tok.text)
            if not math.isfinite(value):
                self.error("float literal out of range", tok)
            return FloatLit(value)
        if self.accept("true"):
            return BoolLit(True)
        if self.accept("false"):
            return BoolLit(False)
        if self.accept("("):
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.kind == "name" and tok.text not in KEYWORDS:
            self.i += 1
            if self.accept("("):
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.expr())
                        if not self.accept(","):
                            break
                self.expect(")")
                return Call(tok.text, args)
            if tok.text in TYPE_NAMES:
                self.error("type name used as a value", tok)
            if self.accept("["):
                index = self.expr()
                self.expect("]")
                return Index(tok.text, index)
            return Var(tok.text)
        self.error("expected expression")


class _Checker:
    def __init__(self, functions: list[Function]):
        self.functions = {}
        for fn in functions:
            if fn.name in self.functions:
                raise IRTypeError(f"duplicate function {fn.name!r}", -1)
            if fn.name in BUILTINS:
                raise IRTypeError(f"function {fn.name!r} shadows a builtin", -1)
            self.functions[fn.name] = fn
        self.state: dict[str, str] = {}

    def run(self) -> None:
        for name in self.functions:
            self.check_function(name)

    def return_type(self, name: str, site: int) -> Type:
        fn = self.functions[name]
        if fn.declared_ret is not None:
            return fn.declared_ret
        if self.state.get(name) == "checking":
            raise IRTypeError(f"cannot infer the return type of recursive {name!r}; declare it", site)
        self.check_function(name)
        return fn.ret

    def check_function(self, name: str) -> None:
        if name in self.state:
            return
        self.state[name] = "checking"
        fn = self.functions[name]
        scope: dict[str, Type] = {}
        for pname, pty in fn.params:
            if pname in scope:
                raise IRTypeError(f"duplicate parameter {pname!r} in {name!r}", -1)
            if pty is Type.UNIT:
                raise IRTypeError(f"parameter {pname!r} cannot be unit", -1)
            scope[pname] = pty
        ctx = _FnContext(fn)
        self.block(fn.body, [scope], ctx)
        fn.ret = fn.declared_ret or ctx.inferred or Type.UNIT
        self.state[name] = "done"

    def lookup(self, scopes, name: str, site: int) -> Type:
        for scope in reversed(scopes):
            if name in scope:
                return scope[name]
        raise IRTypeError(f"undeclared variable {name!r}", site)

    def block(self, stmts, scopes, ctx) -> None:
        scopes = scopes + [{}]
        for s in stmts:
            self.stmt(s, scopes, ctx)

    def stmt(self, s: Stmt, scopes, ctx) -> None:
        if isinstance(s, Let):
            if any(s.name in sc for sc in scopes):
                raise IRTypeError(f"{s.name!r} is already declared", s.site)
            ty = self.expr(s.value, scopes)
            if s.declared is not None and s.declared is not ty:
                raise IRTypeError(f"{s.name!r} declared {s.declared} but initialised with {ty}", s.site)
            if ty is Type.UNIT:
                raise IRTypeError("cannot bind a unit value", s.site)
            scopes[-1][s.name] = ty
        elif isinstance(s, Assign):
            target = self.lookup(scopes, s.name, s.site)
            ty = self.expr(s.value, scopes)
            if ty is not target:
                raise IRTypeError(f"cannot assign {ty} to {s.name!r} of type {target}", s.site)
        elif isinstance(s, IndexAssign):
            target = self.lookup(scopes, s.name, s.site)
            if not target.is_array:
                raise IRTypeError(f"{s.name!r} is not an array", s.site)
            if self.expr(s.index, scopes) is not Type.INT:
                raise IRTypeError("array index must be int", s.site)
            if self.expr(s.value, scopes) is not target.element:
                raise IRTypeError(f"element of {s.name!r} must be {target.element}", s.site)
        elif isinstance(s, If):
            self.condition(s.cond, scopes)
            self.block(s.then, scopes, ctx)
            self.block(s.orelse, scopes, ctx)
        elif isinstance(s, While):
            self.condition(s.cond, scopes)
            self.block(s.body, scopes, ctx)
        elif isinstance(s, Return):
            ty = Type.UNIT if s.value is None else self.expr(s.value, scopes)
            ctx.returned(ty, s.site)
        elif isinstance(s, Assert):
            self.condition(s.cond, scopes)
        elif isinstance(s, ExprStmt):
            if not isinstance(s.expr, Call):
                raise IRTypeError("expression statement must be a call", s.site)
            self.expr(s.expr, scopes)
        else:
            raise IRTypeError(f"unknown statement {type(s).__name__}", s.site)

    def condition(self, e: Expr, scopes) -> None:
        if self.expr(e, scopes) is not Type.BOOL:
            raise IRTypeError("condition must be bool", e.site)

    def expr(self, e: Expr, scopes) -> Type:
        e.ty = ty = self._expr(e, scopes)
        return ty

    def _expr(self, e: Expr, scopes) -> Type:
        if isinstance(e, IntLit):
            return Type.INT
        if isinstance(e, FloatLit):
            return Type.FLOAT
        if isinstance(e, BoolLit):
            return Type.BOOL
        if isinstance(e, Var):
            return self.lookup(scopes, e.name, e.site)
        if isinstance(e, Index):
            arr = self.lookup(scopes, e.name, e.site)
            if not arr.is_array:
                raise IRTypeError(f"{e.name!r} is not an array", e.site)
            if self.expr(e.index, scopes) is not Type.INT:
                raise IRTypeError("array index must be int", e.site)
            return arr.element
        if isinstance(e, Unary):
            ty = self.expr(e.operand, scopes)
            if e.op == "-" and ty in (Type.INT, Type.FLOAT):
                return ty
            if e.op == "!" and ty is Type.BOOL:
                return ty
            raise IRTypeError(f"bad operand {ty} for unary {e.op}", e.site)
        if isinstance(e, Binary):
            lt = self.expr(e.left, scopes)
            rt = self.expr(e.right, scopes)
            if lt is not rt:
                raise IRTypeError(f"operands of {e.op} differ: {lt} vs {rt}", e.site)
            if e.op in ARITH_OPS:
                if lt is Type.INT or (lt is Type.FLOAT and e.op != "%"):
                    return lt
            elif e.op in ("==", "!="):
                if lt in (Type.INT, Type.FLOAT, Type.BOOL):
                    return Type.BOOL
            elif e.op in COMPARE_OPS:
                if lt in (Type.INT, Type.FLOAT):
                    return Type.BOOL
            elif e.op in ("&&", "||"):
                if lt is Type.BOOL:
                    return Type.BOOL
            raise IRTypeError(f"bad operands {lt} for {e.op}", e.site)
        if isinstance(e, Call):
            arg_types = [self.expr(a, scopes) for a in e.args]
            if e.name in BUILTINS:
                params, result = BUILTINS[e.name]
            elif e.name in self.functions:
                fn = self.functions[e.name]
                params = [t for _, t in fn.params]
                result = self.return_type(e.name, e.site)
            else:
                raise IRTypeError(f"unknown function {e.name!r}", e.site)
            if len(params) != len(arg_types):
                raise IRTypeError(f"{e.name} expects {len(params)} arguments, got {len(arg_types)}", e.site)
            for want, got in zip(params, arg_types):
                if (want is None and not got.is_array) or (want is not None and want is not got):
                    raise IRTypeError(f"bad argument type {got} for {e.name}", e.site)
            return result
        raise IRTypeError(f"unknown expression {type(e).__name__}", e.site)


class _FnContext:
    def __init__(self, fn: Function):
        self.fn = fn
        self.inferred: Optional[Type] = None

    def returned(self, ty: Type, site: int) -> None:
        want = self.fn.declared_ret or self.inferred
        if want is None:
            self.inferred = ty
        elif want is not ty:
            raise IRTypeError(f"{self.fn.name} returns {want}, not {ty}", site)


def parse_program(text: str) -> Program:
    """Parse, number and type-check IR source text."""
    functions = _Parser(text).program()
    number_sites(functions)
    _Checker(functions).run()
    return Program(functions)
