import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mucgf.benchmarks import builtin_cases, get_case
from mucgf.ir import enumerate_sites, parse_program, program_diff
from mucgf.mutation import (
    MUTATORS,
    Mutant,
    MutantPool,
    MutationConfig,
    MutationError,
    apply_mutator,
    build_mutant_pool,
    dedupe,
    get_mutator,
    mutation_score,
    parse_mutator_list,
    select_mutants,
    update_kill_statuses,
)

FOO = get_case("foo").program


def pool_of(program, *names):
    return build_mutant_pool(program, MutationConfig(mutators=names or tuple(MUTATORS)))


def test_foo_return_zero_only():
    pool = pool_of(FOO, "RETURN_ZERO")
    assert len(pool) == 2
    assert {m.mutator for m in pool.mutants} == {"RETURN_ZERO"}


def test_foo_return_zero_and_negate():
    pool = pool_of(FOO, "RETURN_ZERO", "NEGATE_CONDITIONAL")
    assert len(pool) == 3
    assert [m.id for m in pool.mutants] == [0, 1, 2]


def test_empty_program_has_no_pool():
    with pytest.raises(MutationError):
        build_mutant_pool(parse_program("fn f() { }"))


def test_enumerate_sites_simple():
    p = parse_program("fn f() -> int { return 0 }")
    sites = enumerate_sites(p)
    assert [s.kind for s in sites] == ["return"]
    assert enumerate_sites(parse_program("fn f() { }")) == []


def test_else_branch_return_zero_text():
    site = [s for s in enumerate_sites(FOO) if s.kind == "return"][1]
    mutant = apply_mutator(FOO, site, get_mutator("RETURN_ZERO"))
    assert "return 0;" in mutant.text
    # the original stays untouched
    assert mutant.text.count("return x;") == 1
    assert FOO.text.count("return x;") == 2


def _rewrite(src, mutator):
    p = parse_program(f"fn f(a: int, b: int) -> bool {{ return {src} }}")
    site = [s for s in enumerate_sites(p) if mutator in s.mutators][0]
    return apply_mutator(p, site, get_mutator(mutator)).text


def test_rewrite_rules():
    assert "a >= b" in _rewrite("a > b", "CONDITIONAL_BOUNDARY")
    assert "a <= b" in _rewrite("a > b", "NEGATE_CONDITIONAL")
    assert "a != b" in _rewrite("a == b", "NEGATE_CONDITIONAL")
    assert "a < b" in _rewrite("a <= b", "CONDITIONAL_BOUNDARY")
    p = parse_program("fn f(a: int, b: int) -> int { return a + b }")
    site = [s for s in enumerate_sites(p) if s.kind == "arithmetic"][0]
    assert "a - b" in apply_mutator(p, site, get_mutator("MATH_OP_REPLACE")).text


def test_increment_flip_and_invert_negative():
    p = parse_program("fn f(a: int) -> int { return -(a + 1) }")
    sites = enumerate_sites(p)
    inc = [s for s in sites if "INCREMENT_FLIP" in s.mutators][0]
    neg = [s for s in sites if "INVERT_NEGATIVE" in s.mutators][0]
    assert "a - 1" in apply_mutator(p, inc, get_mutator("INCREMENT_FLIP")).text
    assert "return a + 1" in apply_mutator(p, neg, get_mutator("INVERT_NEGATIVE")).text


def test_inapplicable_mutator_rejected():
    site = [s for s in enumerate_sites(FOO) if s.kind == "return"][0]
    with pytest.raises(MutationError):
        apply_mutator(FOO, site, get_mutator("NEGATE_CONDITIONAL"))


def test_every_mutant_differs_at_one_site():
    for case in builtin_cases():
        pool = pool_of(case.program)
        for m in pool.mutants:
            diff = program_diff(case.program, m.program)
            assert len(diff) == 1, m.describe()
            node = case.program.node(m.site_id)
            # RETURN_ZERO swaps the returned expression, everything else the site node itself
            expected = node.value if m.mutator == "RETURN_ZERO" else node
            assert diff[0][0] is expected


def test_pool_is_deterministic():
    p = get_case("c01_sorting").program
    a, b = pool_of(p), pool_of(p)
    assert a.to_json() == b.to_json()


def test_pool_orders_by_site_then_mutator():
    pool = pool_of(get_case("c02_matrix_inverse").program)
    keys = [(m.site_id, m.mutator) for m in pool.mutants]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)


def test_dedupe_collapses_identical_programs():
    pool = pool_of(FOO)
    twin = Mutant(len(pool), pool[0].site, "RETURN_ZERO", pool[0].program)
    doubled = MutantPool(pool.program_digest, pool.mutants + [twin], {len(pool)})
    out = dedupe(doubled)
    assert len(out) == len(pool)
    assert [m.id for m in out.mutants] == list(range(len(pool)))
    # the duplicate's kill moves to its surviving twin
    assert out.killed == {0}


def test_dedupe_idempotent_and_fixpoint():
    for case in builtin_cases():
        pool = pool_of(case.program)
        once = dedupe(pool)
        assert once.to_json() == pool.to_json()
        assert dedupe(once).to_json() == once.to_json()
    assert len(dedupe(pool_of(FOO, "RETURN_ZERO", "NEGATE_CONDITIONAL"))) == 3


def test_mutants_pass_validation():
    for case in builtin_cases():
        for m in pool_of(case.program).mutants:
            assert parse_program(m.program.text).digest == m.program.digest


def test_pool_json_roundtrip(tmp_path):
    pool = pool_of(get_case("c05_div").program)
    pool.killed = {1, 3}
    path = tmp_path / "pool.json"
    pool.save(path)
    back = MutantPool.load(path, get_case("c05_div").program)
    assert back.to_json() == pool.to_json()
    with pytest.raises(MutationError):
        MutantPool.load(path, FOO)


def test_parse_mutator_list():
    assert parse_mutator_list("all") == tuple(MUTATORS)
    assert parse_mutator_list("RETURN_ZERO, NEGATE_CONDITIONAL") == ("RETURN_ZERO", "NEGATE_CONDITIONAL")
    with pytest.raises(MutationError):
        parse_mutator_list("NOPE")


def test_k_must_be_positive():
    with pytest.raises(MutationError):
        MutationConfig(k=0)


# --- selection ---------------------------------------------------------------


def test_select_k_distinct():
    pool = pool_of(get_case("c01_sorting").program)
    picked = select_mutants(pool, MutationConfig(k=10), random.Random(1))
    ids = [m.id for m in picked]
    assert len(ids) == 10 and len(set(ids)) == 10


def test_select_clamps_to_pool():
    pool = pool_of(FOO, "RETURN_ZERO", "NEGATE_CONDITIONAL")
    picked = select_mutants(pool, MutationConfig(k=10), random.Random(0))
    assert sorted(m.id for m in picked) == [0, 1, 2]


def test_select_deterministic():
    pool = pool_of(get_case("c01_sorting").program)
    a = select_mutants(pool, MutationConfig(k=10), random.Random(5))
    b = select_mutants(pool, MutationConfig(k=10), random.Random(5))
    assert [m.id for m in a] == [m.id for m in b]


def test_killed_mutants_stay_selectable():
    pool = pool_of(FOO)
    pool.killed = set(pool.ids)
    assert len(select_mutants(pool, MutationConfig(k=2), random.Random(0))) == 2


def test_unkilled_strategy_skips_killed():
    pool = pool_of(get_case("c01_sorting").program)
    pool.killed = set(range(0, len(pool), 2))
    cfg = MutationConfig(k=5, strategy="unkilled_random")
    for s in range(20):
        assert all(m.id % 2 == 1 for m in select_mutants(pool, cfg, random.Random(s)))


def test_selection_roughly_uniform():
    p = get_case("c01_sorting").program
    full = pool_of(p)
    pool = MutantPool(full.program_digest, full.mutants[:20])
    rng = random.Random(2024)
    counts = Counter()
    for _ in range(10_000):
        counts.update(m.id for m in select_mutants(pool, MutationConfig(k=1), rng))
    assert set(counts) == set(range(20))
    assert all(350 <= c <= 650 for c in counts.values())


# --- kill bookkeeping and scores --------------------------------------------


def test_update_kill_statuses():
    pool = pool_of(get_case("c01_sorting").program)
    assert update_kill_statuses(pool, {4, 7}) == {4, 7}
    assert pool.killed == {4, 7}
    assert update_kill_statuses(pool, {4}) == set()
    assert update_kill_statuses(pool, {4, 9}) == {9}
    with pytest.raises(MutationError):
        update_kill_statuses(pool, {10_000})


def test_mutation_score_examples():
    assert mutation_score(3, 7) == 30.0
    assert mutation_score(0, 10) == 0.0
    assert mutation_score(1, 0) == 100.0
    with pytest.raises(ValueError):
        mutation_score(0, 0)


@given(st.integers(0, 10_000), st.integers(0, 10_000))
def test_mutation_score_range(k, s):
    if k + s == 0:
        return
    score = mutation_score(k, s)
    assert 0.0 <= score <= 100.0
    if s == 0:
        assert score == 100.0
    if k == 0:
        assert score == 0.0
