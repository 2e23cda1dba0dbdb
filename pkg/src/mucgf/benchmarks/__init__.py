"""Benchmark cases: an IR program plus a decoder from bytes to invocations."""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from ..ir import Program, parse_program
from .decoder import Decoder, DecoderSpecError

BUILTIN_NAMES = (
    "foo",
    "c01_sorting",
    "c02_matrix_inverse",
    "c03_suffix_array",
    "c04_regression",
    "c05_div",
)


@dataclass
class BenchmarkCase:
    name: str
    program_text: str
    decoder_spec: dict
    _program: Optional[Program] = field(default=None, repr=False, compare=False)
    _decoder: Optional[Decoder] = field(default=None, repr=False, compare=False)

    @property
    def program(self) -> Program:
        if self._program is None:
            self._program = parse_program(self.program_text)
        return self._program

    @property
    def decoder(self) -> Decoder:
        if self._decoder is None:
            dec = Decoder.from_json(self.decoder_spec)
            dec.check_against(self.program)
            self._decoder = dec
        return self._decoder

    @property
    def behaviors(self) -> list:
        return [name for name, _ in self.decoder.behaviors]

    def decode(self, data: bytes) -> list:
        return self.decoder.decode(data)


def decode_input(case: BenchmarkCase, data: bytes) -> list:
    return case.decode(data)


def _read_builtin(name: str) -> tuple[str, dict]:
    base = resources.files(__package__) / "cases"
    text = (base / f"{name}.ir").read_text(encoding="utf-8")
    spec = json.loads((base / f"{name}.decoder.json").read_text(encoding="utf-8"))
    return text, spec


@functools.lru_cache(maxsize=None)
def _builtin(name: str) -> BenchmarkCase:
    text, spec = _read_builtin(name)
    return BenchmarkCase(name, text, spec)


def builtin_cases() -> list:
    return [_builtin(name) for name in BUILTIN_NAMES]


def load_case_files(ir_path) -> BenchmarkCase:
    """Load ``<file>.ir`` with its sibling ``<file>.decoder.json``."""
    ir_path = Path(ir_path)
    spec_path = ir_path.with_name(ir_path.stem + ".decoder.json")
    if not spec_path.exists():
        raise DecoderSpecError(f"missing decoder spec {spec_path}")
    case = BenchmarkCase(
        ir_path.stem,
        ir_path.read_text(encoding="utf-8"),
        json.loads(spec_path.read_text(encoding="utf-8")),
    )
    case.decoder  # validate eagerly
    return case


def get_case(name: str) -> BenchmarkCase:
    """A built-in case by name, or a user case by path to its ``.ir`` file."""
    if name in BUILTIN_NAMES:
        return _builtin(name)
    if name.endswith(".ir") or Path(name).exists():
        return load_case_files(name)
    raise KeyError(f"unknown case {name!r}; built-in: {', '.join(BUILTIN_NAMES)}")


__all__ = [
    "BUILTIN_NAMES",
    "BenchmarkCase",
    "Decoder",
    "DecoderSpecError",
    "builtin_cases",
    "decode_input",
    "get_case",
    "load_case_files",
]
