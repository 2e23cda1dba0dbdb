import random
import struct
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mucgf.benchmarks import get_case
from mucgf.fuzz import (
    MAX_INPUT_LEN,
    CampaignConfig,
    ConfigError,
    EventKind,
    Fuzzer,
    Policy,
    SeedEntry,
    SeedQueue,
    fuzz_campaign,
    mutate_input,
    mutation_chance,
    write_run,
)
from mucgf.mutation import MutationConfig, build_mutant_pool
from mucgf.report import load_run, replay_corpus

FOO = get_case("foo")
SORT = get_case("c01_sorting")
SORT_POOL = build_mutant_pool(SORT.program)


def foo_pool():
    return build_mutant_pool(FOO.program, MutationConfig(mutators=("RETURN_ZERO", "NEGATE_CONDITIONAL")))


def seed(favored=False, capable=False, kills_new=False):
    return SeedEntry(0, b"x", favored, capable, kills_new)


# --- energy ------------------------------------------------------------------


def test_energy_examples():
    cfg = CampaignConfig(max_execs=1)
    assert mutation_chance(seed(favored=True), Policy.BASELINE, cfg) == 1000
    assert mutation_chance(seed(), Policy.GENERIC, cfg) == 2
    assert mutation_chance(seed(favored=True, capable=True), Policy.POSITIVE, cfg) == 10_000
    assert mutation_chance(seed(capable=True), Policy.NEGATIVE, cfg) == 2
    assert mutation_chance(seed(capable=True, kills_new=True), Policy.NEGATIVE, cfg) == 1000
    assert mutation_chance(seed(), Policy.NEGATIVE, cfg) == 50
    assert mutation_chance(seed(), Policy.POSITIVE, cfg) == 50


marks = st.tuples(st.booleans(), st.booleans(), st.booleans())
configs = st.builds(
    lambda b, f, kf, knf: CampaignConfig(base=b, factor=f, kill_factor=kf, kill_new_factor=knf, max_execs=1),
    st.integers(1, 200),
    st.integers(1, 40),
    st.integers(1, 40),
    st.integers(1, 40),
)


@given(marks, configs, st.sampled_from(list(Policy)))
def test_energy_bounds(m, cfg, policy):
    n = mutation_chance(seed(*m), policy, cfg)
    assert cfg.n_min <= n <= cfg.n_max


@given(st.booleans(), configs)
def test_baseline_ignores_kill_marks(favored, cfg):
    values = {
        mutation_chance(seed(favored, c, k), Policy.BASELINE, cfg)
        for c in (False, True)
        for k in (False, True)
    }
    assert len(values) == 1


@given(configs)
def test_policy_ordering_for_favored(cfg):
    pos = mutation_chance(seed(True, True), Policy.POSITIVE, cfg)
    base = mutation_chance(seed(True), Policy.BASELINE, cfg)
    gen = mutation_chance(seed(True), Policy.GENERIC, cfg)
    assert pos >= base >= gen


def test_config_validation():
    with pytest.raises(ConfigError):
        CampaignConfig(base=0, max_execs=1)
    with pytest.raises(ConfigError):
        CampaignConfig(kill_factor=0, max_execs=1)
    with pytest.raises(ConfigError):
        CampaignConfig(n_min=5, n_max=4, max_execs=1)
    with pytest.raises(ConfigError):
        CampaignConfig()
    with pytest.raises(ConfigError):
        CampaignConfig(max_execs=1, criterion="approx")
    cfg = CampaignConfig(policy="negative", max_execs=5)
    assert CampaignConfig.from_json(cfg.to_json()) == cfg


# --- havoc -------------------------------------------------------------------


@settings(max_examples=300)
@given(st.binary(max_size=5000), st.lists(st.binary(max_size=100), max_size=4), st.integers(0, 2**32))
def test_havoc_bounds(parent, others, s):
    child = mutate_input(parent, others, random.Random(s))
    assert 1 <= len(child) <= MAX_INPUT_LEN


@given(st.binary(max_size=300), st.integers(0, 2**32))
def test_havoc_deterministic(parent, s):
    q = [b"abc", b"defgh"]
    assert mutate_input(parent, q, random.Random(s)) == mutate_input(parent, q, random.Random(s))


def test_havoc_empty_parent_and_self_splice():
    rng = random.Random(1)
    for _ in range(200):
        assert len(mutate_input(b"", [], rng)) >= 1
    q = SeedQueue()
    q.add(SeedEntry(0, b"only-seed"))
    for _ in range(200):
        child = mutate_input(q[0].data, q, rng)
        assert 1 <= len(child) <= MAX_INPUT_LEN


def test_havoc_changes_input_usually():
    rng = random.Random(4)
    parent = bytes(range(64))
    changed = sum(mutate_input(parent, [], rng) != parent for _ in range(500))
    assert changed > 450


# --- feedback ----------------------------------------------------------------


def foo_bytes(x, y):
    return struct.pack(">2i", x, y)


def scripted(policy, inputs, k=10):
    pool = foo_pool() if policy is not Policy.BASELINE else None
    fz = Fuzzer(FOO, pool, CampaignConfig(policy=policy, k=k, max_execs=100, rng_seed=0))
    for i, data in enumerate(inputs):
        fz.execute_child(data, None, force_save=(i == 0))
    fz.close()
    return fz


def test_baseline_drops_bug_revealing_input():
    fz = scripted(Policy.BASELINE, [foo_bytes(1, 1), foo_bytes(1, 2)])
    assert fz.queue.find(foo_bytes(1, 2)) is None
    assert len(fz.queue) == 1


@pytest.mark.parametrize("policy", [Policy.POSITIVE, Policy.GENERIC, Policy.NEGATIVE])
def test_mutant_policies_keep_bug_revealing_input(policy):
    fz = scripted(policy, [foo_bytes(1, 1), foo_bytes(1, 2)])
    i = fz.queue.find(foo_bytes(1, 2))
    assert i is not None
    entry = fz.queue[i]
    assert entry.capable and not entry.favored
    kinds = [e.kind for e in fz.log if e.exec_index == 2]
    assert kinds[0] is EventKind.KILL and kinds[-1] is EventKind.SEED_SAVED


def test_no_news_no_change():
    fz = scripted(Policy.BASELINE, [foo_bytes(1, 1), foo_bytes(3, 4)])
    assert len(fz.queue) == 1
    assert all(e.exec_index == 1 for e in fz.log)


def test_crash_goes_to_failures():
    case = get_case("c05_div")
    pool = build_mutant_pool(case.program)
    fz = Fuzzer(case, pool, CampaignConfig(policy="positive", max_execs=10))
    fz.execute_child(struct.pack(">4i", 1, 2, 3, 4), None, force_save=True)
    fz.execute_child(struct.pack(">4i", 1, 0, 3, 4), 0)
    fz.close()
    assert len(fz.failures) == 1 and len(fz.queue) == 1
    crash = fz.log.of_kind(EventKind.CRASH)
    assert crash[0].payload["crash"] == "DivByZero"


def test_kill_and_coverage_saved_once_with_both_marks():
    fz = scripted(Policy.POSITIVE, [foo_bytes(1, 1), foo_bytes(2, 1)])
    i = fz.queue.find(foo_bytes(2, 1))
    entry = fz.queue[i]
    assert entry.favored and entry.capable
    assert len(fz.log.of_kind(EventKind.SEED_SAVED)) == 2


def test_mutant_policy_needs_pool():
    with pytest.raises(ConfigError):
        Fuzzer(FOO, None, CampaignConfig(policy="generic", max_execs=5))
    with pytest.raises(ConfigError):
        Fuzzer(SORT, foo_pool(), CampaignConfig(policy="positive", max_execs=5))


# --- campaigns ---------------------------------------------------------------


def test_zero_budget_campaign():
    q, f, log = fuzz_campaign(SORT, SORT_POOL, CampaignConfig(policy="negative", max_execs=0))
    assert len(q) == 0 and len(f) == 0 and len(log) == 0


def test_exec_budget_is_exact():
    fz = Fuzzer(SORT, SORT_POOL, CampaignConfig(policy="positive", max_execs=777, rng_seed=3))
    fz.run()
    fz.close()
    assert fz.execs == 777


@pytest.mark.parametrize("policy", list(Policy))
def test_campaign_deterministic(policy):
    cfg = CampaignConfig(policy=policy, max_execs=800, rng_seed=11)
    a = fuzz_campaign(SORT, SORT_POOL, cfg)
    b = fuzz_campaign(SORT, SORT_POOL, cfg)
    assert a[2].to_jsonl() == b[2].to_jsonl()
    assert [e.data for e in a[0]] == [e.data for e in b[0]]


def test_caller_pool_untouched():
    pool = build_mutant_pool(SORT.program)
    fuzz_campaign(SORT, pool, CampaignConfig(policy="positive", max_execs=300))
    assert pool.killed == set()


@pytest.mark.parametrize("s", range(4))
def test_campaign_invariants(s):
    cfg = CampaignConfig(policy=["baseline", "generic", "negative", "positive"][s], max_execs=1500, rng_seed=s)
    fz = Fuzzer(get_case("c05_div"), build_mutant_pool(get_case("c05_div").program), cfg)
    fz.run()
    fz.close()
    for entry in fz.queue:
        assert entry.favored or entry.capable
    idx = [e.exec_index for e in fz.log]
    assert idx == sorted(idx)
    seen = set()
    for e in fz.log.of_kind(EventKind.NEW_COV):
        edges = {tuple(x) for x in e.payload["edges"]}
        assert edges and not edges & seen
        seen |= edges
    assert seen == fz.coverage
    killed = set()
    for e in fz.log.of_kind(EventKind.KILL_NEW):
        assert not set(e.payload["killed"]) & killed
        killed |= set(e.payload["killed"])
    if fz.pool is not None:
        assert killed == fz.pool.killed


def test_selection_period():
    cfg = CampaignConfig(policy="positive", max_execs=200, rng_seed=1, selection_period=5)
    fz = Fuzzer(SORT, SORT_POOL, cfg)
    picks = []
    orig = fz.engine.run

    def spy(mutants, invocations, put=None):
        picks.append(tuple(m.id for m in mutants))
        return orig(mutants, invocations, put)

    fz.engine.run = spy
    fz.run()
    fz.close()
    for i in range(0, len(picks), 5):
        assert len(set(picks[i : i + 5])) == 1


def test_write_run_layout(tmp_path):
    fz = Fuzzer(get_case("c05_div"), build_mutant_pool(get_case("c05_div").program),
                CampaignConfig(policy="negative", max_execs=600, rng_seed=2))
    fz.run()
    fz.close()
    out = write_run(tmp_path / "run", fz)
    names = sorted(p.name for p in (out / "corpus").iterdir())
    assert names[0] == "id_000000" and names[1] == "id_000000.meta.json"
    meta = json.loads((out / "corpus" / "id_000000.meta.json").read_text())
    assert {"parent", "marks", "exec_index", "time_ms"} <= set(meta)
    assert len(list((out / "failures").glob("id_??????"))) == len(fz.failures)
    lines = (out / "events.jsonl").read_text().splitlines()
    assert len(lines) == len(fz.log)
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["target"] == "c05_div" and cfg["config"]["policy"] == "negative"
    run = load_run(out)
    assert [s[1] for s in run.seeds] == [e.data for e in fz.queue]


@pytest.mark.parametrize("policy", ["baseline", "negative", "positive"])
def test_online_replay_matches_offline(tmp_path, policy):
    cfg = CampaignConfig(policy=policy, max_execs=1200, rng_seed=5)
    fz = Fuzzer(SORT, SORT_POOL, cfg, replay_pool=SORT_POOL)
    fz.run()
    fz.close()
    out = write_run(tmp_path / "run", fz)
    assert replay_corpus(out, SORT_POOL, SORT, incremental=True) == fz.replays
    plain = Fuzzer(SORT, SORT_POOL, cfg)
    plain.run()
    plain.close()
    assert plain.log.to_jsonl() == fz.log.to_jsonl()


def test_crashing_initial_seed_is_redrawn():
    # random matrices are often singular, so the first draws tend to crash
    case = get_case("c02_matrix_inverse")
    fz = Fuzzer(case, None, CampaignConfig(max_execs=5000, rng_seed=9))
    fz.seed_initial()
    fz.close()
    assert len(fz.failures) >= 1
    assert len(fz.queue) == 1 and fz.queue[0].favored
    assert fz.queue[0].exec_index == fz.execs


def test_crashing_given_seed_not_queued():
    case = get_case("c05_div")
    fz = Fuzzer(case, None, CampaignConfig(max_execs=50))
    fz.seed_initial([struct.pack(">4i", 1, 0, 1, 1), struct.pack(">4i", 1, 2, 3, 4)])
    fz.close()
    assert len(fz.failures) == 1 and [e.exec_index for e in fz.queue] == [2]
