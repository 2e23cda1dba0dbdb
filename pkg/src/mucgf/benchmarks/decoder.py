"""Declarative byte-string decoders that turn fuzzer bytes into invocations.

A decoder spec is a JSON object::

    {
      "fields": [
        {"name": "n", "kind": "length", "modulo": 17},
        {"name": "a", "kind": "int_array", "length_field": "n", "width": 4}
      ],
      "behaviors": [{"function": "sort", "args": ["a"]}]
    }

Fields are read left to right from one cursor. Reads past the end of the
input see zero bytes, so every byte string decodes.

Field kinds and their options:

    length       1 byte, value mod ``modulo``
    int          ``width`` bytes big-endian (1, 2, 4 or 8), ``signed``
                 (default true), optional ``modulo`` and ``min``/``max`` clamp
    float        ``encoding`` "ieee" (8 bytes) or "fixed" (``width``-byte
                 signed int divided by ``scale``); NaN and infinities become
                 0.0; optional ``min``/``max`` clamp
    bool         1 byte, low bit
    int_array    ``length`` or ``length_field``, elements as ``int``
    float_array  ``length`` or ``length_field``, elements as ``float``
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Any

from ..ir import BehaviorInvocation, Program, Type, Value

_KIND_TYPES = {
    "length": Type.INT,
    "int": Type.INT,
    "float": Type.FLOAT,
    "bool": Type.BOOL,
    "int_array": Type.INT_ARR,
    "float_array": Type.FLOAT_ARR,
}


class DecoderSpecError(ValueError):
    pass


class _Cursor:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        if len(chunk) < n:
            chunk += bytes(n - len(chunk))
        return chunk


def _clamp(x, lo, hi):
    if lo is not None and x < lo:
        return lo
    if hi is not None and x > hi:
        return hi
    return x


@dataclass(frozen=True)
class Field:
    name: str
    kind: str
    options: dict

    def opt(self, key: str, default: Any = None) -> Any:
        return self.options.get(key, default)


_INT_CODES = {1: "b", 2: "h", 4: "i", 8: "q"}


def _read_ints(cur: _Cursor, f: Field, n: int) -> list:
    width = f.opt("width", 4)
    code = _INT_CODES[width]
    if not f.opt("signed", True):
        code = code.upper()
    values = list(struct.unpack(f">{n}{code}", cur.take(width * n)))
    modulo, lo, hi = f.opt("modulo"), f.opt("min"), f.opt("max")
    if modulo is not None:
        values = [v % modulo for v in values]
    if lo is not None or hi is not None:
        values = [_clamp(v, lo, hi) for v in values]
    return values


def _read_floats(cur: _Cursor, f: Field, n: int) -> list:
    if f.opt("encoding", "ieee") == "ieee":
        values = struct.unpack(f">{n}d", cur.take(8 * n))
    else:
        width = f.opt("width", 4)
        scale = f.opt("scale", 65536)
        ints = struct.unpack(f">{n}{_INT_CODES[width]}", cur.take(width * n))
        values = [v / scale for v in ints]
    lo, hi = f.opt("min"), f.opt("max")
    return [float(_clamp(x, lo, hi)) if math.isfinite(x) else 0.0 for x in values]


class Decoder:
    def __init__(self, fields: list, behaviors: list):
        self.fields = fields
        self.behaviors = behaviors

    @classmethod
    def from_json(cls, spec: dict) -> "Decoder":
        fields = []
        seen = set()
        for raw in spec.get("fields", []):
            raw = dict(raw)
            name = raw.pop("name", None)
            kind = raw.pop("kind", None)
            if not name or kind not in _KIND_TYPES:
                raise DecoderSpecError(f"bad field {name!r} of kind {kind!r}")
            if name in seen:
                raise DecoderSpecError(f"duplicate field {name!r}")
            if kind.endswith("_array"):
                ref = raw.get("length_field")
                if ref is None and "length" not in raw:
                    raise DecoderSpecError(f"array field {name!r} needs length or length_field")
                if ref is not None and ref not in seen:
                    raise DecoderSpecError(f"{name!r} refers to unknown length field {ref!r}")
            if raw.get("width", 4) not in (1, 2, 4, 8):
                raise DecoderSpecError(f"field {name!r}: width must be 1, 2, 4 or 8")
            seen.add(name)
            fields.append(Field(name, kind, raw))
        behaviors = []
        for b in spec.get("behaviors", []):
            args = list(b.get("args", []))
            unknown = [a for a in args if a not in seen]
            if unknown:
                raise DecoderSpecError(f"behavior {b.get('function')!r} uses unknown fields {unknown}")
            behaviors.append((b["function"], args))
        if not behaviors:
            raise DecoderSpecError("decoder has no behaviors")
        return cls(fields, behaviors)

    def field_type(self, name: str) -> Type:
        for f in self.fields:
            if f.name == name:
                return _KIND_TYPES[f.kind]
        raise KeyError(name)

    def check_against(self, program: Program) -> None:
        """Every behavior must name a function whose parameters match."""
        for fn_name, args in self.behaviors:
            if not program.has_function(fn_name):
                raise DecoderSpecError(f"program has no function {fn_name!r}")
            params = program.function(fn_name).params
            want = [ty for _, ty in params]
            got = [self.field_type(a) for a in args]
            if want != got:
                raise DecoderSpecError(
                    f"{fn_name}: parameters {[str(t) for t in want]} but decoder gives {[str(t) for t in got]}"
                )

    def decode(self, data: bytes) -> list:
        cur = _Cursor(data)
        values: dict[str, Value] = {}
        for f in self.fields:
            k = f.kind
            if k == "length":
                values[f.name] = Value.int(cur.take(1)[0] % f.opt("modulo", 256))
            elif k == "int":
                values[f.name] = Value.int(_read_ints(cur, f, 1)[0])
            elif k == "float":
                values[f.name] = Value.float(_read_floats(cur, f, 1)[0])
            elif k == "bool":
                values[f.name] = Value.bool(bool(cur.take(1)[0] & 1))
            else:
                ref = f.opt("length_field")
                n = values[ref].data if ref is not None else f.opt("length")
                n = max(0, int(n))
                if k == "int_array":
                    values[f.name] = Value.int_array(_read_ints(cur, f, n))
                else:
                    values[f.name] = Value.float_array(_read_floats(cur, f, n))
        return [
            BehaviorInvocation(fn_name, tuple(values[a] for a in args))
            for fn_name, args in self.behaviors
        ]
