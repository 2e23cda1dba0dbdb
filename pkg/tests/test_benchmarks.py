import json
import random
import struct
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mucgf.benchmarks import BUILTIN_NAMES, Decoder, DecoderSpecError, builtin_cases, get_case, load_case_files
from mucgf.ir import BehaviorInvocation, CrashKind, Type, Value, execute
from mucgf.mutation import build_mutant_pool


def run(case_name, *invocations):
    res, _ = execute(get_case(case_name).program, list(invocations), 10**6)
    return res


def call(name, *args):
    return BehaviorInvocation(name, tuple(args))


def test_builtin_set():
    assert [c.name for c in builtin_cases()] == list(BUILTIN_NAMES)
    for case in builtin_cases():
        assert len(build_mutant_pool(case.program)) >= 1
    assert len(build_mutant_pool(get_case("c01_sorting").program)) >= 10


def test_foo_returns_x_on_both_branches():
    text = get_case("foo").program_text
    assert "if (x > y)" in text and text.count("return x;") == 2
    res = run("foo", call("foo", Value.int(1), Value.int(2)))
    assert res.outputs == (Value.int(1),)  # max(1, 2) is 2: the bug


# --- decoding ----------------------------------------------------------------


def test_sorting_layout():
    data = bytes([3]) + struct.pack(">3i", 3, 1, 2)
    assert get_case("c01_sorting").decode(data) == [call("sort", Value.int_array([3, 1, 2]))]


def test_sorting_empty_and_short():
    assert get_case("c01_sorting").decode(b"") == [call("sort", Value.int_array([]))]
    # length 2 with only one byte of payload: zero fill
    assert get_case("c01_sorting").decode(bytes([2, 0, 0, 0, 7])) == [call("sort", Value.int_array([7, 0]))]


def test_foo_layout():
    inv = get_case("foo").decode(struct.pack(">2i", -5, 9))
    assert inv == [call("foo", Value.int(-5), Value.int(9))]


def test_matrix_layout_clips_and_cleans():
    vals = [1.5, 5000.0, -5000.0, float("nan"), float("inf")] + [0.0] * 11
    inv = get_case("c02_matrix_inverse").decode(struct.pack(">16d", *vals))
    m = inv[0].args[0]
    assert [i.function for i in inv] == ["determinant", "inverse"]
    assert m.data[:5] == (1.5, 1000.0, -1000.0, 0.0, 0.0)


def test_suffix_alphabet():
    inv = get_case("c03_suffix_array").decode(bytes([37, 0, 5, 255, 3]))
    assert inv[0].args[0] == Value.int_array([0, 1, 3, 3])


def test_regression_fixed_point():
    data = bytes([2]) + struct.pack(">2i", 65536, -32768) + struct.pack(">2i", 131072, 0)
    inv = get_case("c04_regression").decode(data)
    assert inv[0].args == (Value.float_array([1.0, -0.5]), Value.float_array([2.0, 0.0]))


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=600))
def test_decoders_are_total(data):
    for case in builtin_cases():
        inv = case.decode(data)
        for i in inv:
            fn = case.program.function(i.function)
            assert [t for _, t in fn.params] == [a.ty for a in i.args]


def test_decoder_totality_bulk():
    rng = random.Random(0)
    for case in builtin_cases():
        for _ in range(10_000 // len(BUILTIN_NAMES)):
            case.decode(rng.randbytes(rng.randint(0, 300)))


def test_random_inputs_do_not_exhaust_fuel():
    rng = random.Random(256)
    for case in builtin_cases():
        for _ in range(25):
            res, _ = execute(case.program, case.decode(rng.randbytes(256)), 10**6)
            assert res.crash is not CrashKind.FUEL_EXHAUSTED


def test_bad_decoder_specs():
    with pytest.raises(DecoderSpecError):
        Decoder.from_json({"fields": [{"name": "a", "kind": "blob"}], "behaviors": [{"function": "f", "args": []}]})
    with pytest.raises(DecoderSpecError):
        Decoder.from_json({"fields": [{"name": "a", "kind": "int_array", "length_field": "n"}], "behaviors": []})
    with pytest.raises(DecoderSpecError):
        Decoder.from_json({"fields": [{"name": "a", "kind": "int", "width": 3}], "behaviors": [{"function": "f", "args": ["a"]}]})
    with pytest.raises(DecoderSpecError):
        Decoder.from_json({"fields": [], "behaviors": []})


def test_user_case_files(tmp_path):
    (tmp_path / "sq.ir").write_text("fn sq(x: int) -> int { return x * x }\n")
    spec = {"fields": [{"name": "x", "kind": "int", "width": 1}], "behaviors": [{"function": "sq", "args": ["x"]}]}
    (tmp_path / "sq.decoder.json").write_text(json.dumps(spec))
    case = load_case_files(tmp_path / "sq.ir")
    assert case.decode(bytes([0xFD])) == [call("sq", Value.int(-3))]
    assert get_case(str(tmp_path / "sq.ir")).program.digest == case.program.digest
    bad = dict(spec, behaviors=[{"function": "sq", "args": ["x", "x"]}])
    (tmp_path / "sq.decoder.json").write_text(json.dumps(bad))
    with pytest.raises(DecoderSpecError):
        load_case_files(tmp_path / "sq.ir").decode(b"")


# --- reference semantics against closed-form oracles ------------------------


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(-(2**31), 2**31 - 1), max_size=16))
def test_sort_oracle(xs):
    res = run("c01_sorting", call("sort", Value.int_array(xs)))
    assert res.outputs == (Value.int_array(sorted(xs)),)


def _matmul(a, b):
    return [sum(a[r * 4 + k] * b[k * 4 + c] for k in range(4)) for r in range(4) for c in range(4)]


def _det(m):
    # Leibniz over exact fractions, independent of the elimination code
    from itertools import permutations

    total = Fraction(0)
    for perm in permutations(range(4)):
        sign = 1
        for i in range(4):
            for j in range(i + 1, 4):
                if perm[i] > perm[j]:
                    sign = -sign
        prod = Fraction(1)
        for r in range(4):
            prod *= Fraction(m[r * 4 + perm[r]])
        total += sign * prod
    return float(total)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-20, 20), min_size=16, max_size=16))
def test_matrix_oracle(ints):
    m = [float(v) for v in ints]
    res = run("c02_matrix_inverse", call("determinant", Value.float_array(m)))
    det = _det(m)
    assert abs(res.outputs[0].data - det) <= 1e-6 * max(1.0, abs(det))
    if abs(det) > 1e-6:
        inv = run("c02_matrix_inverse", call("inverse", Value.float_array(m))).outputs[0].data
        ident = _matmul(m, inv)
        for r in range(4):
            for c in range(4):
                assert abs(ident[r * 4 + c] - (1.0 if r == c else 0.0)) <= 1e-6


def test_singular_matrix_crashes_inverse():
    res = run("c02_matrix_inverse", call("inverse", Value.float_array([0.0] * 16)))
    assert res.crash is CrashKind.DIV_BY_ZERO
    assert run("c02_matrix_inverse", call("determinant", Value.float_array([0.0] * 16))).outputs == (Value.float(0.0),)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(0, 3), max_size=32))
def test_suffix_array_oracle(text):
    res = run("c03_suffix_array", call("suffix_array", Value.int_array(text)))
    naive = sorted(range(len(text)), key=lambda i: text[i:])
    assert res.outputs == (Value.int_array(naive),)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-1000, 1000), st.integers(-1000, 1000)), min_size=2, max_size=32))
def test_regression_oracle(points):
    xs = [float(x) for x, _ in points]
    ys = [float(y) for _, y in points]
    n = len(points)
    mx, my = Fraction(sum(map(int, xs)), n), Fraction(sum(map(int, ys)), n)
    sxx = sum((Fraction(int(x)) - mx) ** 2 for x in xs)
    sxy = sum((Fraction(int(x)) - mx) * (Fraction(int(y)) - my) for x, y in zip(xs, ys))
    args = (Value.float_array(xs), Value.float_array(ys))
    res = run("c04_regression", call("slope", *args), call("intercept", *args))
    if sxx == 0:
        assert res.crash is CrashKind.DIV_BY_ZERO
        return
    slope = sxy / sxx
    intercept = my - slope * mx
    got_slope, got_intercept = (v.data for v in res.outputs)
    assert abs(got_slope - float(slope)) <= 1e-9 * max(1.0, abs(float(slope)))
    assert abs(got_intercept - float(intercept)) <= 1e-9 * max(1.0, abs(float(intercept)))


@settings(max_examples=200, deadline=None)
@given(*[st.integers(-1000, 1000)] * 4)
def test_fraction_divide_oracle(a, b, c, d):
    res = run("c05_div", call("fraction_divide", *(Value.int(v) for v in (a, b, c, d))))
    if b == 0 or d == 0 or c == 0:
        assert res.crash is CrashKind.DIV_BY_ZERO
        return
    num, den = res.outputs[0].data
    assert den > 0
    # cross multiplication: num/den == (a/b) / (c/d)
    assert num * b * c == den * a * d
    assert Fraction(num, den) == Fraction(a, b) / Fraction(c, d)
    assert res.outputs[0].ty is Type.INT_ARR
