"""Deterministic mini-language: parsing, checking, execution, coverage."""

from .compiler import MAX_CALL_DEPTH, execute, execute_probed, static_cost, statement_cost
from .nodes import Function, Program, Type, format_program, program_diff, structural_diff
from .parser import IRSyntaxError, IRTypeError, parse_program
from .reference import execute_reference
from .sites import MutationSite, enumerate_sites, site_guards
from .values import (
    BehaviorInvocation,
    CrashKind,
    ExecutionResult,
    Status,
    Value,
    canonical_serialize,
    deserialize,
    encode_value,
    same_bytes,
)

__all__ = [
    "BehaviorInvocation",
    "CrashKind",
    "ExecutionResult",
    "Function",
    "IRSyntaxError",
    "IRTypeError",
    "MAX_CALL_DEPTH",
    "MutationSite",
    "Program",
    "Status",
    "Type",
    "Value",
    "canonical_serialize",
    "deserialize",
    "encode_value",
    "enumerate_sites",
    "execute",
    "execute_probed",
    "execute_reference",
    "format_program",
    "parse_program",
    "program_diff",
    "same_bytes",
    "site_guards",
    "statement_cost",
    "static_cost",
    "structural_diff",
]
