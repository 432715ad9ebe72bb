import csv
import json

import numpy as np
import pytest

from pishadows import cli, pibasis


@pytest.fixture
def cache(tmp_path, monkeypatch):
    path = tmp_path / "cache"
    monkeypatch.setenv(cli.CACHE_ENV, str(path))
    return path


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_channel_reports_min_eigenvalue(cache, capsys):
    code, out, _ = _run(capsys, "channel", "--n", "8", "--basis", "pauli")
    assert code == 0
    summary = json.loads(out)
    assert summary["min_eigenvalue"] == pytest.approx(1 / 17, abs=1e-9)
    assert summary["expected_min_eigenvalue"] == pytest.approx(1 / 17)
    files = {p.name: p.read_bytes() for p in (cache / "pauli-n8").iterdir()}
    assert _run(capsys, "channel", "--n", "8", "--basis", "pauli")[0] == 0
    assert files == {p.name: p.read_bytes() for p in (cache / "pauli-n8").iterdir()}


def test_channel_single_schur_block_at_n100(cache, capsys):
    code, out, _ = _run(capsys, "channel", "--n", "100", "--basis", "schur", "--blocks", "0")
    assert code == 0
    summary = json.loads(out)
    assert summary["blocks"] == {"0": 2601}
    assert not summary["complete"]
    assert summary["min_eigenvalue"] == pytest.approx(1 / 201, rel=1e-9)


def test_channel_pauli_cap_is_a_config_error(cache, capsys):
    code, _, err = _run(capsys, "channel", "--n", "50", "--basis", "pauli")
    assert code == 2
    assert "schur" in err


def test_sample_and_estimate(cache, tmp_path, capsys):
    data = tmp_path / "ghz10.jsonl"
    code, out, _ = _run(capsys, "sample", "--state", "ghz", "--n", "10", "--shots", "100000", "--seed", "7",
                        "--out", str(data))
    assert code == 0
    assert json.loads(out)["records"] == 100000
    assert len(data.read_text().splitlines()) == 100001
    first = data.read_bytes()
    assert _run(capsys, "sample", "--state", "ghz", "--n", "10", "--shots", "100000", "--seed", "7",
                "--out", str(data))[0] == 0
    assert data.read_bytes() == first

    report = tmp_path / "report.csv"
    code, _, _ = _run(capsys, "estimate", "--data", str(data), "--obs", "pauli:" + "Z" * 10,
                      "--obs", "ghz-proj", "--obs", "axis:Z:2", "--out", str(report))
    assert code == 0
    rows = list(csv.DictReader(report.open()))
    assert [r["observable"] for r in rows] == ["pauli:" + "Z" * 10, "ghz-proj", "axis:Z:2"]
    doc = json.loads(report.with_suffix(".json").read_text())
    for row, rep in zip(rows, doc["reports"]):
        assert abs(float(row["estimate"]) - 1.0) < 5 * np.sqrt(10) * rep["standard_error"]
        assert row["bound"] != ""
    assert doc["dataset_sha256"] and doc["channel_meta_sha256"]
    text = report.read_text()
    assert _run(capsys, "estimate", "--data", str(data), "--obs", "pauli:" + "Z" * 10,
                "--obs", "ghz-proj", "--obs", "axis:Z:2", "--out", str(report))[0] == 0
    assert report.read_text() == text


def test_block_protocol_records(cache, tmp_path, capsys):
    data = tmp_path / "block.jsonl"
    code, _, _ = _run(capsys, "sample", "--n", "4", "--protocol", "block", "--shots", "50", "--seed", "1",
                      "--out", str(data))
    assert code == 0
    lines = data.read_text().splitlines()
    assert json.loads(lines[0])["protocol"] == "block"
    assert json.loads(lines[1]).keys() == {"lambda", "j"}
    code, out, _ = _run(capsys, "estimate", "--data", str(data), "--obs", "ghz-proj", "--method", "mean")
    assert code == 0
    assert "block" in out


def test_lc_protocol_records(cache, tmp_path, capsys):
    data = tmp_path / "lc.jsonl"
    assert _run(capsys, "sample", "--n", "3", "--protocol", "lc", "--shots", "20", "--seed", "1",
                "--out", str(data))[0] == 0
    assert set(json.loads(data.read_text().splitlines()[1])) == {"bits", "cliffords"}
    assert _run(capsys, "estimate", "--data", str(data), "--obs", "pauli:ZZI")[0] == 0


def test_exit_codes(cache, tmp_path, capsys):
    data = tmp_path / "d.jsonl"
    assert _run(capsys, "sample", "--n", "4", "--shots", "10", "--out", str(data))[0] == 2
    assert _run(capsys, "sample", "--n", "4", "--shots", "10", "--seed", "1", "--state", "bogus",
                "--out", str(data))[0] == 2
    assert _run(capsys, "sample", "--n", "4", "--shots", "10", "--seed", "1", "--out", str(data))[0] == 0
    assert _run(capsys, "estimate", "--data", str(data), "--n", "5")[0] == 3
    assert _run(capsys, "estimate", "--data", str(data), "--protocol", "block")[0] == 3
    assert _run(capsys, "estimate", "--data", str(data), "--obs", "nonsense")[0] == 2
    assert _run(capsys, "estimate", "--data", str(tmp_path / "missing.jsonl"))[0] == 2


def test_corrupt_cache_is_a_cache_error(cache, tmp_path, capsys):
    data = tmp_path / "d.jsonl"
    _run(capsys, "sample", "--n", "3", "--shots", "10", "--seed", "1", "--out", str(data))
    _run(capsys, "channel", "--n", "3", "--basis", "pauli")
    blob = next((cache / "pauli-n3").glob("*.bin"))
    blob.write_bytes(b"\0" * blob.stat().st_size)
    assert _run(capsys, "estimate", "--data", str(data), "--basis", "pauli")[0] == 3


def test_variance_command(cache, tmp_path, capsys):
    code, out, _ = _run(capsys, "variance", "--n", "4", "--obs", "axis:Z:4", "--obs", "ghz-proj")
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert float(rows[0]["exact_variance"]) == pytest.approx(6.334706925727339, abs=1e-9)
    assert float(rows[1]["exact_variance"]) <= float(rows[1]["bound"])
    assert rows[0]["method"] == "triple-sum"
    code, out, _ = _run(capsys, "variance", "--n", "16", "--obs", "ghz-proj")
    assert code == 0
    assert list(csv.DictReader(out.splitlines()))[0]["method"] == "quadrature"


def test_state_and_observable_files(cache, tmp_path, capsys):
    n = 3
    state = tmp_path / "state.json"
    cli.save_pivector(pibasis.ghz_state(n, "pauli"), state)
    obs = tmp_path / "obs.json"
    cli.save_pivector(pibasis.observable_to_pivector(pibasis.AxisString("Z", 2), n, "pauli"), obs)
    data = tmp_path / "d.jsonl"
    assert _run(capsys, "sample", "--n", "3", "--state", f"file:{state}", "--shots", "2000", "--seed", "3",
                "--out", str(data))[0] == 0
    code, out, _ = _run(capsys, "estimate", "--data", str(data), "--obs", f"pivec:{obs}")
    assert code == 0
    assert "pivec" in out
    bad = tmp_path / "bad.json"
    cli.save_pivector(pibasis.ghz_state(n, "pauli").scaled(2.0), bad)
    assert _run(capsys, "sample", "--n", "3", "--state", f"file:{bad}", "--shots", "5", "--seed", "3",
                "--out", str(data))[0] == 2


def test_parse_observable_grammar():
    assert cli.parse_observable("pauli:ZZI", 3) == pibasis.PauliString("ZZI")
    assert cli.parse_observable("axis:X:2", 5) == pibasis.AxisString("X", 2)
    assert cli.parse_observable("hamming:1", 5) == pibasis.HammingProjector(1)
    assert cli.parse_observable("ghz-proj", 5) == pibasis.GhzProjector()
    with pytest.raises(cli.ConfigError):
        cli.parse_observable("pauli:ZZ", 3)
    with pytest.raises(cli.ConfigError):
        cli.parse_observable("axis:W:1", 3)


def test_bench_ghz(cache, tmp_path, capsys):
    out_dir = tmp_path / "bench"
    argv = ["bench-ghz", "--n-list", "4,6,8,10", "--shots", "3000", "--seed", "5", "--svg", "--out", str(out_dir)]
    code, out, _ = _run(capsys, *argv)
    assert code == 0
    rows = list(csv.DictReader((out_dir / "bench_ghz.csv").open()))
    assert {r["protocol"] for r in rows} == {"symm-pi", "block", "lc"}
    assert len(rows) == 4 * 4 * 3
    symm = [r for r in rows if r["protocol"] == "symm-pi"]
    assert all(r["exact_method"] == "triple-sum" for r in symm)
    summary = json.loads((out_dir / "summary.json").read_text())
    assert "symm-pi/Z^n" in summary["fits"]
    assert (out_dir / "bench_ghz.svg").read_text().startswith("<svg")
    first = {p.name: p.read_bytes() for p in out_dir.iterdir()}
    assert _run(capsys, *argv)[0] == 0
    assert first == {p.name: p.read_bytes() for p in out_dir.iterdir()}
