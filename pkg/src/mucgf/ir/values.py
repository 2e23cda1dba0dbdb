"""Runtime values, execution results and the canonical output encoding.

Output list layout: 4-byte big-endian count, then per value a tag byte
followed by its payload.

    0x00 unit        (no payload)
    0x01 int         8-byte big-endian two's complement
    0x02 float       8-byte big-endian IEEE-754, every NaN as 0x7FF8000000000000
    0x03 bool        1 byte, 0 or 1
    0x04 int array   4-byte big-endian length, then ints
    0x05 float array 4-byte big-endian length, then floats
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import Any, Optional, Sequence

from .nodes import Type

CANONICAL_NAN = b"\x7f\xf8\x00\x00\x00\x00\x00\x00"

TAGS = {
    Type.UNIT: 0x00,
    Type.INT: 0x01,
    Type.FLOAT: 0x02,
    Type.BOOL: 0x03,
    Type.INT_ARR: 0x04,
    Type.FLOAT_ARR: 0x05,
}
_TYPE_OF_TAG = {tag: ty for ty, tag in TAGS.items()}

_Q = struct.Struct(">q")
_D = struct.Struct(">d")
_I = struct.Struct(">I")


class Status(enum.Enum):
    SUCCESS = "SUCCESS"
    FAILURE = "FAILURE"


class CrashKind(enum.Enum):
    DIV_BY_ZERO = "DivByZero"
    INDEX_OUT_OF_BOUNDS = "IndexOutOfBounds"
    ASSERTION_FAILURE = "AssertionFailure"
    FUEL_EXHAUSTED = "FuelExhausted"
    TYPE_FAULT = "TypeFault"


@dataclass(frozen=True, slots=True)
class Value:
    """A typed value. Array payloads are tuples so values stay hashable."""

    ty: Type
    data: Any

    @classmethod
    def unit(cls) -> "Value":
        return cls(Type.UNIT, None)

    @classmethod
    def int(cls, v: int) -> "Value":
        return cls(Type.INT, v)

    @classmethod
    def float(cls, v: float) -> "Value":
        return cls(Type.FLOAT, v)

    @classmethod
    def bool(cls, v: bool) -> "Value":
        return cls(Type.BOOL, v)

    @classmethod
    def int_array(cls, items) -> "Value":
        return cls(Type.INT_ARR, tuple(items))

    @classmethod
    def float_array(cls, items) -> "Value":
        return cls(Type.FLOAT_ARR, tuple(items))

    def __repr__(self) -> str:
        return f"{self.ty.value}:{self.data!r}"

    # equality is canonical-byte equality: NaN equals NaN, 0.0 differs from -0.0
    def __eq__(self, other) -> bool:
        if not isinstance(other, Value):
            return NotImplemented
        return self.ty is other.ty and encode_value(self) == encode_value(other)

    def __hash__(self) -> int:
        return hash(encode_value(self))


@dataclass(frozen=True, slots=True)
class BehaviorInvocation:
    function: str
    args: tuple

    def __repr__(self) -> str:
        return f"{self.function}({', '.join(repr(a) for a in self.args)})"


@dataclass(frozen=True, slots=True)
class ExecutionResult:
    status: Status
    outputs: Optional[tuple]
    crash: Optional[CrashKind]
    fuel_used: int

    def __post_init__(self):
        if self.status is Status.SUCCESS:
            if self.outputs is None or self.crash is not None:
                raise ValueError("a successful result carries outputs and no crash")
        elif self.outputs is not None or self.crash is None:
            raise ValueError("a failed result carries a crash and no outputs")

    @property
    def ok(self) -> bool:
        return self.status is Status.SUCCESS

    @classmethod
    def success(cls, outputs: Sequence[Value], fuel_used: int) -> "ExecutionResult":
        return cls(Status.SUCCESS, tuple(outputs), None, fuel_used)

    @classmethod
    def failure(cls, crash: CrashKind, fuel_used: int) -> "ExecutionResult":
        return cls(Status.FAILURE, None, crash, fuel_used)


def edge(site: int, outcome: bool) -> tuple[int, bool]:
    return (site, outcome)


def _float_bytes(x: float) -> bytes:
    if x != x:
        return CANONICAL_NAN
    return _D.pack(x)


def encode_value(v: Value) -> bytes:
    ty = v.ty
    tag = bytes((TAGS[ty],))
    if ty is Type.INT:
        return tag + _Q.pack(v.data)
    if ty is Type.FLOAT:
        return tag + _float_bytes(v.data)
    if ty is Type.BOOL:
        return tag + (b"\x01" if v.data else b"\x00")
    if ty is Type.INT_ARR:
        n = len(v.data)
        return tag + _I.pack(n) + struct.pack(f">{n}q", *v.data)
    if ty is Type.FLOAT_ARR:
        return tag + _I.pack(len(v.data)) + b"".join(_float_bytes(x) for x in v.data)
    return tag


def canonical_serialize(values: Sequence[Value]) -> bytes:
    return _I.pack(len(values)) + b"".join(encode_value(v) for v in values)


def deserialize(blob: bytes) -> list[Value]:
    (count,) = _I.unpack_from(blob, 0)
    pos = 4
    out = []
    for _ in range(count):
        ty = _TYPE_OF_TAG[blob[pos]]
        pos += 1
        if ty is Type.INT:
            out.append(Value(ty, _Q.unpack_from(blob, pos)[0]))
            pos += 8
        elif ty is Type.FLOAT:
            out.append(Value(ty, _D.unpack_from(blob, pos)[0]))
            pos += 8
        elif ty is Type.BOOL:
            out.append(Value(ty, blob[pos] == 1))
            pos += 1
        elif ty.is_array:
            (n,) = _I.unpack_from(blob, pos)
            pos += 4
            fmt = f">{n}q" if ty is Type.INT_ARR else f">{n}d"
            out.append(Value(ty, struct.unpack_from(fmt, blob, pos)))
            pos += 8 * n
        else:
            out.append(Value(ty, None))
    if pos != len(blob):
        raise ValueError(f"{len(blob) - pos} trailing bytes")
    return out


def same_bytes(a: Value, b: Value) -> bool:
    """Byte equality of the canonical encodings of two values.

    Int, bool and unit payloads compare directly; anything holding floats
    goes through the encoder because ``==`` conflates 0.0/-0.0 and NaNs.
    """
    if a.ty is not b.ty:
        return False
    if a.ty is Type.FLOAT or a.ty is Type.FLOAT_ARR:
        return encode_value(a) == encode_value(b)
    return a.data == b.data
