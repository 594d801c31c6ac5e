import csv
import io
import json

import pytest

from topoctl.cli import EXIT_CONFIG, EXIT_INCONSISTENT, EXIT_OK, main, parse_seed_range
from topoctl.config import ConfigError
from topoctl.metrics import CSV_COLUMNS
from topoctl.topology import ACTIVE, INACTIVE, loads

QUICK = ["--set", "node_count=15", "--set", "world_side=250", "--duration", "1800", "--no-timing"]


def test_tc_oracle_on_triangle(capsys):
    assert main(["tc", "--fixture", "triangle", "--k", "2", "--mode", "oracle"]) == EXIT_OK
    t = loads(capsys.readouterr().out)
    inactive = {(l.src, l.tgt) for l in t.links.values() if l.state is INACTIVE}
    assert inactive == {(0, 1), (1, 0)}


def test_tc_blocked_fixture(capsys):
    assert main(["tc", "--fixture", "blocked", "--k", "2", "--link-order", "id"]) == EXIT_OK
    out = capsys.readouterr()
    t = loads(out.out)
    assert [t.link(e).state for e in sorted(t.links)] == [ACTIVE, ACTIVE, INACTIVE]
    assert "ordered=True" in out.err


def test_check_reports_inconsistent_fixture(capsys):
    assert main(["check", "--fixture", "triangle", "--k", "2"]) == EXIT_INCONSISTENT
    captured = capsys.readouterr()
    assert captured.err.startswith("E2:")
    assert main(["check", "--fixture", "triangle", "--k", "2", "--level", "weak"]) == EXIT_OK


def test_unknown_fixture_and_config(capsys):
    assert main(["check", "--fixture", "nope"]) == EXIT_CONFIG
    assert main(["run", "--config", "nope"]) == EXIT_CONFIG
    assert main(["run", "--set", "hesitation=2"]) == EXIT_CONFIG
    assert capsys.readouterr().err.count("E1:") == 3


def test_refine_single_pair(capsys):
    assert main(["refine", "--rule", "inactivation", "--constraint", "inactive-link"]) == EXIT_OK
    assert "gluings: 6  unsatisfiable: 0  restrictive: 1" in capsys.readouterr().out


def test_refine_unknown_rule():
    assert main(["refine", "--rule", "teleport"]) == EXIT_CONFIG


def test_run_writes_csv_and_summary(tmp_path):
    out, summary = tmp_path / "m.csv", tmp_path / "s.json"
    code = main(["run", "--config", "n100w750", "--seed-range", "1..2", *QUICK,
                 "--out", str(out), "--summary", str(summary)])
    assert code == EXIT_OK
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 1 + 2 * 2
    data = json.loads(summary.read_text())
    assert data["seeds"] == 2 and data["config"]["seeds"] == [1, 2]


def test_run_parallel_matches_serial(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["run", "--seed-range", "1..3", *QUICK, "--out", str(a)]) == EXIT_OK
    assert main(["run", "--seed-range", "1..3", *QUICK, "--jobs", "2", "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_env_override_applies(tmp_path, monkeypatch):
    monkeypatch.setenv("TOPOCTL_NODE_COUNT", "1")
    out = tmp_path / "m.csv"
    assert main(["run", "--duration", "1200", "--no-timing", "--out", str(out)]) == EXIT_OK
    assert out.read_text().splitlines()[1].split(",")[2] == "1"


def test_bench_json(capsys):
    assert main(["bench", "--sizes", "1,2,3", "--json"]) == EXIT_OK
    records = json.loads(capsys.readouterr().out)
    assert all(r["matches_expectation"] for r in records)


def test_seed_range():
    assert parse_seed_range("3..5") == [3, 4, 5]
    assert parse_seed_range("7") == [7]
    with pytest.raises(ConfigError):
        parse_seed_range("5..3")
