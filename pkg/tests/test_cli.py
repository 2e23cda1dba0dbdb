import json

from mucgf.cli import main


def test_list_mutators(capsys):
    assert main(["list-mutators"]) == 0
    out = capsys.readouterr().out
    assert "RETURN_ZERO" in out and "NEGATE_CONDITIONAL" in out


def test_dump_case(capsys):
    assert main(["dump-case", "foo"]) == 0
    assert "fn foo" in capsys.readouterr().out
    assert main(["dump-case", "foo", "--decoder"]) == 0
    spec = json.loads(capsys.readouterr().out)
    assert spec["behaviors"][0]["function"] == "foo"


def test_unknown_case(capsys):
    assert main(["dump-case", "nope"]) == 2
    assert capsys.readouterr().err.startswith("mucgf: error:")


def test_mutant_policy_requires_pool(tmp_path, capsys):
    code = main(["fuzz", "--target", "foo", "--policy", "positive", "--out", str(tmp_path / "r"), "--max-execs", "5"])
    assert code == 2
    assert "--pool" in capsys.readouterr().err


def test_fuzz_replay_report(tmp_path, capsys):
    pool = tmp_path / "pool.json"
    assert main(["mutate", "--target", "c05_div", "--out", str(pool)]) == 0
    runs = []
    for policy in ("baseline", "negative"):
        out = tmp_path / policy
        args = ["fuzz", "--target", "c05_div", "--policy", policy, "--out", str(out), "--max-execs", "300"]
        if policy != "baseline":
            args += ["--pool", str(pool)]
        assert main(args) == 0
        runs.append(str(out))
    assert main(["replay", runs[1], "--pool", str(pool), "--out", str(tmp_path / "rep.json")]) == 0
    records = json.loads((tmp_path / "rep.json").read_text())
    assert records and {"seed_id", "exec_index", "kills", "edges"} <= set(records[0])
    csv_path = tmp_path / "report.csv"
    assert main(["report", *runs, "--buckets", "exec:100", "--pool", str(pool), "--out", str(csv_path)]) == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "technique,bucket,mean_branch_cov_pct,mean_kill_pct,rep_count"
    assert len(lines) == 1 + 2 * 3


def test_rng_seed_env_fallback(tmp_path, monkeypatch):
    def events(name, *extra):
        out = tmp_path / name
        assert main(["fuzz", "--target", "c01_sorting", "--out", str(out), "--max-execs", "200", *extra]) == 0
        return (out / "events.jsonl").read_bytes(), json.loads((out / "config.json").read_text())

    monkeypatch.setenv("MUCGF_RNG_SEED", "13")
    from_env, cfg = events("env")
    assert cfg["config"]["rng_seed"] == 13
    monkeypatch.delenv("MUCGF_RNG_SEED")
    assert events("flag", "--rng-seed", "13")[0] == from_env
    assert events("default")[1]["config"]["rng_seed"] == 0
    monkeypatch.setenv("MUCGF_RNG_SEED", "x")
    assert main(["fuzz", "--target", "foo", "--out", str(tmp_path / "bad"), "--max-execs", "5"]) == 2


def test_case_file_target(tmp_path):
    (tmp_path / "sq.ir").write_text("fn sq(x: int) -> int { if (x > 3) { return x * x; } return x; }\n")
    spec = {"fields": [{"name": "x", "kind": "int", "width": 1}], "behaviors": [{"function": "sq", "args": ["x"]}]}
    (tmp_path / "sq.decoder.json").write_text(json.dumps(spec))
    pool = tmp_path / "pool.json"
    assert main(["mutate", "--target", str(tmp_path / "sq.ir"), "--out", str(pool)]) == 0
    out = tmp_path / "run"
    args = ["fuzz", "--target", str(tmp_path / "sq.ir"), "--policy", "generic", "--pool", str(pool)]
    assert main(args + ["--out", str(out), "--max-execs", "200"]) == 0
    assert main(["replay", str(out), "--pool", str(pool)]) == 0
