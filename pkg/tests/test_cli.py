import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csck import io
from csck.cli import main
from csck.errors import BadConfig
from csck.parallel import ordered_map, thread_count

DATA = Path(__file__).resolve().parents[1] / "data"
GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def test_poly_check_of_triangle(capsys):
    code, out = run(capsys, "poly", "check", DATA / "simplex.json")
    result = json.loads(out)["result"]
    assert code == 0
    assert result["delzant"] is True and result["volume"] == pytest.approx(0.5)


def test_manifest_records_inputs_and_parameters(capsys, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    _, out = run(capsys, "futaki", DATA / "interval.json", DATA / "abs_half.json")
    doc = json.loads(out)
    assert doc["result"]["futaki"] == pytest.approx(0.5)
    manifest = doc["manifest"]
    assert manifest["timestamp"] == 1700000000
    assert set(manifest["inputs"]) == {str(DATA / "interval.json"), str(DATA / "abs_half.json")}
    assert manifest["config_hash"] == io.config_hash(manifest["parameters"])


def test_malformed_json_reports_byte_offset(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_bytes(b'{"dim": 1, "facets": [}')
    code, out = run(capsys, "poly", "volume", bad)
    payload = json.loads(out)
    assert code == 2
    assert payload["error"] == "MalformedJSON" and payload["offset"] == 22


def test_unknown_command_and_bad_arguments(capsys):
    code, out = run(capsys, "frobnicate")
    assert code == 2 and json.loads(out)["error"] == "UnknownCommand"
    code, out = run(capsys, "futaki-weights", DATA / "interval.json", DATA / "abs_half.json", "--k", "4,x")
    assert code == 2


def test_numerical_failure_exits_with_three(capsys):
    code, out = run(capsys, "balance", DATA / "bump0.json", "--k", "8", "--max-steps", "1")
    payload = json.loads(out)
    assert code == 3 and payload["error"] == "NoConvergence" and payload["residual"] > 0


def test_non_delzant_polytope_is_a_validation_error(capsys, tmp_path):
    poly = tmp_path / "p.json"
    poly.write_text(json.dumps({"dim": 2, "facets": [{"normal": [1, 0], "offset": "0"}, {"normal": [0, 1], "offset": "0"},
                                                    {"normal": [-1, -2], "offset": "2"}]}))
    code, out = run(capsys, "poly", "check", poly)
    assert code == 2 and json.loads(out)["error"] == "NotDelzant"


@pytest.mark.parametrize("suffix, text", [(".toml", 'samples = 5\nk = "3"\n'), (".json", '{"samples": 5, "k": [3]}')])
def test_config_sets_defaults(capsys, tmp_path, suffix, text):
    cfg = tmp_path / f"c{suffix}"
    cfg.write_text(text)
    code, out = run(capsys, "bergman", "rho", DATA / "fs.json", "--config", cfg)
    result = json.loads(out)["result"]
    assert code == 0 and result["k"] == 3 and len(result["rho"]) == 5
    assert result["rho"] == pytest.approx([4.0] * 5, abs=1e-8)


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("colour = 3\n")
    code, out = run(capsys, "poly", "check", DATA / "simplex.json", "--config", cfg)
    assert code == 2 and json.loads(out)["error"] == "BadConfig"


def test_out_and_csv_files(capsys, tmp_path):
    out, table = tmp_path / "r.json", tmp_path / "r.csv"
    code, stdout = run(capsys, "bergman", "rho", DATA / "perturbed.json", "--k", "4", "--samples", "5",
                       "--out", out, "--csv", table)
    assert code == 0 and stdout == ""
    assert json.loads(out.read_text())["result"]["integral"] == pytest.approx(5.0, abs=1e-8)
    lines = table.read_text().splitlines()
    assert lines[0] == "x,rho" and len(lines) == 6


def test_flow_writes_json_lines(capsys):
    code, out = run(capsys, "flow", "kr", DATA / "bump0.json", "--T", "0.05", "--monitor", "K,Rnorm,mult:p=3")
    lines = [json.loads(line) for line in out.splitlines()]
    assert code == 0 and "manifest" in lines[0]
    times = [rec["t"] for rec in lines[1:]]
    assert times[0] == 0.0 and times[-1] == pytest.approx(0.05)
    assert all(b > a for a, b in zip(times, times[1:]))
    assert set(lines[1]) == {"t", "K", "R_sup", "mult_p3"}


def test_flow_rejects_unknown_monitor(capsys):
    code, _ = run(capsys, "flow", "calabi", DATA / "bump0.json", "--T", "0.01", "--monitor", "Q")
    assert code == 2


def test_energy_batch(capsys):
    code, out = run(capsys, "energy", DATA / "batch.json", "--which", "I,J,K")
    values = json.loads(out)["result"]["values"]
    assert code == 0 and len(values) == 2
    assert all(v["J"] == pytest.approx(v["I"] / 2) for v in values)


def _schema(obj):
    if isinstance(obj, dict):
        return {k: _schema(v) for k, v in sorted(obj.items()) if k not in ("value",)}
    if isinstance(obj, list):
        return [_schema(obj[0])] if obj else []
    return type(obj).__name__


def test_verify_report_is_deterministic_and_matches_golden_schema(capsys):
    code, first = run(capsys, "verify", "quick", "--criteria", "1,2,4")
    _, second = run(capsys, "verify", "quick", "--criteria", "1,2,4")
    assert code == 0 and first == second
    report = json.loads(first)["result"]
    schema = {k: _schema(v) for k, v in report.items()}
    assert schema == json.loads((GOLDEN / "verify_schema.json").read_text())


def test_verify_strict_exit_code(capsys, monkeypatch):
    import csck.cli as cli

    def failing(tier, criteria):
        return {"tier": tier, "results": [], "passed": 0, "failed": 1}, {}

    monkeypatch.setattr(cli, "verify", failing)
    assert main(["verify", "quick"]) == 0
    assert main(["verify", "quick", "--strict"]) == 1
    capsys.readouterr()


@pytest.mark.parametrize("value", ["0", "-2", "many"])
def test_thread_count_validation(monkeypatch, value):
    monkeypatch.setenv("CSCK_THREADS", value)
    with pytest.raises(BadConfig):
        thread_count()


@settings(max_examples=20, deadline=None)
@given(items=st.lists(st.integers(-100, 100), max_size=30), threads=st.integers(1, 4))
def test_ordered_map_preserves_order(items, threads):
    assert ordered_map(lambda v: v * v, items, threads) == [v * v for v in items]


@settings(max_examples=50, deadline=None)
@given(cut=st.integers(1, 40))
def test_truncated_json_offsets_lie_inside_the_input(cut):
    raw = json.dumps({"pieces": [{"a": ["1"], "b": "-1/2"}, {"a": ["-1"], "b": "1/2"}]}).encode()[:cut]
    with pytest.raises(io.MalformedJSON) as info:
        io.parse_json_bytes(raw)
    assert 0 <= info.value.offset <= len(raw)


def test_to_jsonable_handles_non_finite_values():
    import numpy as np

    assert io.to_jsonable({"a": np.float64("nan"), "b": np.array([1.0, np.inf]), "c": np.int64(3)}) == {
        "a": "nan", "b": [1.0, "inf"], "c": 3}


@pytest.mark.slow
def test_verify_all_quick_runs_the_quick_tier(capsys):
    code, out = run(capsys, "verify", "all", "--quick")
    report = json.loads(out)["result"]
    assert code == 0 and report["tier"] == "quick"
    assert [r["criterion"] for r in report["results"]] == list(range(1, 12))
