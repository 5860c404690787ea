import io
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hypclose.harness.cli import run_cli
from hypclose.harness.config import ConfigError, RunConfig, parse_config
from hypclose.harness.records import RecordError, RecordLine, parse_record

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(args):
    buf = io.StringIO()
    code = run_cli(args, stdout=buf)
    return code, [parse_record(line) for line in buf.getvalue().splitlines()], buf.getvalue()


def test_parse_config():
    cfg = parse_config("# comment\nsystem = cat_map\n gamma=0.2  # inline\nmax_m = 3\n")
    assert cfg.system == "cat_map" and cfg.gamma == 0.2 and cfg.max_m == 3
    assert cfg.h == RunConfig().h


@pytest.mark.parametrize("text", ["bogus = 1", "gamma = abc", "max_m = 1.5", "no equals sign", "gamma = 1+2j"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_hash():
    a = parse_config("gamma = 0.1")
    assert a.hash() == parse_config("gamma = 0.1\nseed = 7\nout = x.txt").hash()
    assert a.hash() != parse_config("gamma = 0.11").hash()
    assert parse_config("word = 0^3 1 01^2").expanded_word() == "00010101"
    assert parse_config("eps_list = 0.5, 1").floats("eps_list") == [0.5, 1.0]


_values = st.recursive(
    st.none() | st.booleans() | st.integers(-10 ** 12, 10 ** 12) | st.floats(allow_nan=False)
    | st.text(max_size=12),
    lambda c: st.lists(c, max_size=4) | st.dictionaries(st.text(max_size=5), c, max_size=3), max_leaves=8)


@given(st.sampled_from(["certificate", "spectrum", "entropy", "coding", "budget"]),
       st.dictionaries(st.from_regex(r"[a-z][a-z0-9_]{0,7}", fullmatch=True).filter(
           lambda k: k not in ("type", "seed")), _values, max_size=5),
       st.integers(0, 2 ** 31))
def test_record_round_trip(type_, payload, seed):
    line = RecordLine(type_, payload, "abc123", seed).serialize()
    back = parse_record(line)
    assert back.serialize() == line
    assert back.type == type_ and back.seed == seed and back.payload == payload


def test_bad_records():
    with pytest.raises(RecordError):
        RecordLine("nonsense")
    with pytest.raises(RecordError):
        parse_record("type=budget seed=0")
    with pytest.raises(RecordError):
        parse_record("type=budget config_hash=x seed=0 a=[1,")


def test_cli_budget_ok():
    code, recs, _ = run(["budget", "--config", str(CONFIGS / "budget.cfg")])
    assert code == 0 and [r.type for r in recs] == ["budget"] and recs[0].payload["ok"]


def test_cli_budget_failure(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text((CONFIGS / "budget.cfg").read_text() + "gamma0 = 0.25\n")
    code, recs, _ = run(["budget", "--config", str(cfg)])
    assert code == 2 and [r.type for r in recs] == ["budget"] and not recs[0].payload["ok"]


def test_cli_usage_errors(tmp_path):
    assert run(["frobnicate", "--config", str(CONFIGS / "budget.cfg")])[0] == 1
    assert run(["budget"])[0] == 1
    code, recs, _ = run(["budget", "--config", str(tmp_path / "missing.cfg")])
    assert code == 1 and recs[0].type == "error"
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 1\n")
    assert run(["budget", "--config", str(bad)])[0] == 1


def test_cli_out_file(tmp_path):
    out = tmp_path / "r.txt"
    code, recs, _ = run(["budget", "--config", str(CONFIGS / "budget.cfg"), "--out", str(out), "--seed", "4"])
    assert code == 0 and recs == []
    rec = parse_record(out.read_text().splitlines()[0])
    assert rec.seed == 4 and rec.config_hash == parse_config((CONFIGS / "budget.cfg").read_text()).hash()


def test_cli_fixed_point_close():
    code, recs, _ = run(["close", "--config", str(CONFIGS / "fixed_point.cfg")])
    certs = [r for r in recs if r.type == "certificate"]
    assert code == 0 and len(certs) == 1
    c = certs[0].payload
    assert c["ok"] and c["residual"] <= 1e-9 and not c["override"]


def test_cli_override_recorded(tmp_path):
    cfg = tmp_path / "o.cfg"
    cfg.write_text((CONFIGS / "fixed_point.cfg").read_text() + "gamma0 = 0.25\n")
    code, recs, _ = run(["close", "--config", str(cfg)])
    assert code == 2 and recs[-1].payload["kind"] == "budget"
    code, recs, _ = run(["close", "--config", str(cfg), "--override-budget"])
    certs = [r for r in recs if r.type == "certificate"]
    budget = next(r for r in recs if r.type == "budget")
    assert budget.payload["override"] and not budget.payload["ok"]
    assert certs and all(c.payload["override"] for c in certs)
