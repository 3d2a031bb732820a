import time

import pytest

from masquerade.agents import Mode
from masquerade.config import InvalidValue, ScenarioConfig
from masquerade.engine import EmptyTrace, run_scenario
from masquerade.io import (
    METRICS_HEADER,
    MalformedRow,
    ParseError,
    UnknownKey,
    dump_config,
    format_table,
    load_config,
    load_trace,
    parse_config,
    read_metrics,
    summarize,
    summarize_rows,
    write_metrics,
    write_table,
)
from masquerade.money import SCALE


class TestConfig:
    def test_basic(self):
        c = parse_config("mode=masquerade\nrounds=10000\nf=0.8\neta=100\ny=80")
        assert c == ScenarioConfig()

    def test_empty_is_default(self):
        assert parse_config("") == ScenarioConfig()

    def test_comments_and_types(self):
        c = parse_config("# note\nrefund = false  # burn\nblock_cap=none\nseed=0x10\nmode=ideal\n")
        assert (c.refund, c.block_cap, c.seed, c.mode) == (False, None, 16, Mode.IDEAL)

    def test_errors(self):
        with pytest.raises(InvalidValue) as e:
            parse_config("f=1.5")
        assert e.value.key == "f"
        with pytest.raises(InvalidValue):
            parse_config("rounds=ten")
        with pytest.raises(UnknownKey):
            parse_config("colour=blue")
        with pytest.raises(ParseError) as e:
            parse_config("mode=ideal\njunk")
        assert e.value.line == 2

    def test_dump_round_trip(self):
        c = ScenarioConfig(refund=False, block_cap=3, epsilon="0.02", mode=Mode.PHASED)
        assert parse_config(dump_config(c)) == c

    def test_trace_path_relative_to_file(self, tmp_path):
        (tmp_path / "t.csv").write_text("value\n5\n")
        (tmp_path / "a.cfg").write_text("eta_model=trace\ntrace_path=t.csv\n")
        c = load_config(tmp_path / "a.cfg")
        assert load_trace(c.trace_path).values == (5 * SCALE,)

    def test_shipped_configs_load(self, configs_dir):
        for path in sorted(configs_dir.glob("*.cfg")):
            load_config(path)


class TestTrace:
    def test_order_kept(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("round,value\n1,120.5\n2,80.0\n")
        assert load_trace(p).values == (1205000, 800000)

    def test_negative(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("value\n10\n-5\n")
        with pytest.raises(MalformedRow) as e:
            load_trace(p)
        assert e.value.row == 3

    def test_empty(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("value\n")
        with pytest.raises(EmptyTrace):
            load_trace(p)

    def test_fast(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("value\n" + "".join(f"{1 + i % 997}.25\n" for i in range(10_000)))
        t = time.perf_counter()
        assert len(load_trace(p)) == 10_000
        assert time.perf_counter() - t < 0.1

    def test_trace_scenario(self, configs_dir):
        s = run_scenario(load_config(configs_dir / "trace.cfg").with_(rounds=500))
        assert s.mev_count > 0


class TestMetrics:
    def test_status_quo_ten_rows(self, tmp_path):
        s = run_scenario(ScenarioConfig(mode=Mode.STATUS_QUO, rounds=10, p_mev=1))
        write_metrics(s, tmp_path / "m.csv")
        lines = (tmp_path / "m.csv").read_text().splitlines()
        assert lines[0] == ",".join(METRICS_HEADER) and len(lines) == 11
        assert summarize(s).frontrun_pct == 100

    def test_ideal_summary(self):
        s = run_scenario(ScenarioConfig(mode=Mode.IDEAL, rounds=200))
        st = summarize(s)
        assert st.frontrun_pct == 0 and st.w_a_final == st.w_a0

    def test_round_trip(self, tmp_path):
        s = run_scenario(ScenarioConfig(rounds=800, seed=2, eta_model="gaussian"))
        write_metrics(s, tmp_path / "m.csv")
        back = read_metrics(tmp_path / "m.csv")
        key = [tuple(getattr(r, k) for k in METRICS_HEADER) for r in s.records]
        assert [tuple(getattr(r, k) for k in METRICS_HEADER) for r in back] == key
        write_metrics(s.__class__(s.config, back, s.w_u0, s.w_a0), tmp_path / "n.csv")
        assert (tmp_path / "m.csv").read_bytes() == (tmp_path / "n.csv").read_bytes()

    def test_two_path_summary(self, tmp_path):
        s = run_scenario(ScenarioConfig(rounds=3000, seed=8))
        write_metrics(s, tmp_path / "m.csv")
        rows = read_metrics(tmp_path / "m.csv")
        assert summarize_rows(rows, s.w_u0, s.w_a0, "masquerade") == summarize(s)


class TestTables:
    def test_aligned(self, tmp_path):
        text = write_table(tmp_path / "t", ("a", "long_name"), [(1, 2), (333, 4)])
        assert text == format_table(("a", "long_name"), [(1, 2), (333, 4)])
        assert (tmp_path / "t.csv").read_text() == "a,long_name\n1,2\n333,4\n"
        widths = {len(line) for line in text.splitlines()}
        assert widths == {len("  a  long_name")}
