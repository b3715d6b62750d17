import json
import logging
import math
import subprocess
import sys

import pytest
from hypothesis import given
from hypothesis import strategies as st

from screengap import cli
from screengap.errors import ConsistencyError
from screengap.persist import (
    canonical_json,
    config_hash,
    fmt_value,
    load_schema,
    parse_value,
    read_csv,
    validate_json,
)

SMALL_BAND = ["band", "--h-max", "0.0625", "--phi-grid", "3", "--k-max", "3", "--eps", "0.5"]


def _run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr().out
    return code, out


def test_gap_edges_example(capsys):
    code, out = _run(["gap-edges", "--n", "2", "--d", "1", "--b", "0.5"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["sigma"] == pytest.approx(6.283185, abs=1e-6)
    assert doc["mu"] == pytest.approx(8.377580, abs=1e-6)


def test_invalid_input_exit_two(capsys):
    code, _ = _run(["gap-edges", "--n", "2", "--d", "1", "--b", "1.5"], capsys)
    assert code == 2
    code, _ = _run(["design", "--sigma", "2", "--mu", "1"], capsys)
    assert code == 2


def test_design_round_trip(capsys):
    code, out = _run(["design", "--sigma", "6.283185", "--mu", "8.377580", "--n", "2"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["d"] == pytest.approx(1.0, abs=1e-6)
    assert doc["b"] == pytest.approx(0.5, abs=1e-6)


def test_analytic_commands_write_valid_json(tmp_path, capsys):
    cmds = [
        ["two-screen", "--d1", "1", "--d2", "2", "--vol1", "0.25", "--vol2", "0.25", "--radicand", "symmetric"],
        ["maxwell", "--sigma", "4", "--mu", "9"],
        ["gap-edges", "--n", "3", "--d", "1", "--b", "0.5", "--capT", "8"],
    ]
    for argv in cmds:
        code, out = _run(argv + ["--out", str(tmp_path)], capsys)
        assert code == 0
        doc = json.loads((tmp_path / f"{argv[0]}.json").read_text())
        assert doc == json.loads(out)
        validate_json(doc, argv[0].replace("-", "_"))


def test_maxwell_output(capsys):
    _, out = _run(["maxwell", "--sigma", "4", "--mu", "9"], capsys)
    doc = json.loads(out)
    assert doc["positive"] == [2.0, 3.0]
    assert doc["negative"] == [-3.0, -2.0]


@pytest.fixture(scope="module")
def band_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("band")
    assert cli.main(SMALL_BAND + ["--out", str(out)]) == 0
    return out


def test_band_file_contract(band_dir):
    for name in ("band.csv", "summary.json", "band.plot", "config.json", "timings.json"):
        assert (band_dir / name).exists()
    summary = json.loads((band_dir / "summary.json").read_text())
    validate_json(summary, "band")
    validate_json(json.loads((band_dir / "config.json").read_text()), "config")
    validate_json(json.loads((band_dir / "timings.json").read_text()), "timings")
    assert summary["config_hash"] == json.loads((band_dir / "config.json").read_text())["config_hash"]


def test_band_csv_round_trip_is_bit_exact(band_dir):
    text = (band_dir / "band.csv").read_text()
    rows = read_csv(band_dir / "band.csv")
    header = text.splitlines()[0].split(",")
    again = "\n".join([",".join(header)] + [",".join(fmt_value(r[h]) for h in header) for r in rows]) + "\n"
    assert again == text
    summary = json.loads((band_dir / "summary.json").read_text())
    k1 = [r["lambda_physical"] for r in rows if r["k"] == 1]
    assert min(k1) == summary["bands"][0][0]


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_text_round_trip(x):
    assert parse_value(fmt_value(x)) == x


def test_cache_hit_skips_solves(tmp_path, capsys, caplog, monkeypatch):
    argv = SMALL_BAND + ["--out", str(tmp_path)]
    assert cli.main(argv) == 0
    first = (tmp_path / "band.csv").read_bytes()
    capsys.readouterr()

    def boom(*a, **k):
        raise AssertionError("eigensolve on a cache hit")

    monkeypatch.setattr(cli, "sweep_bands", boom)
    with caplog.at_level(logging.INFO, logger="screengap"):
        assert cli.main(argv) == 0
    listing = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert listing["cache_hit"] is True
    assert "cache hit" in caplog.text
    assert (tmp_path / "band.csv").read_bytes() == first


def test_no_cache_recomputes(tmp_path, monkeypatch):
    argv = SMALL_BAND + ["--out", str(tmp_path)]
    assert cli.main(argv) == 0
    calls = []
    real = cli.sweep_bands
    monkeypatch.setattr(cli, "sweep_bands", lambda *a, **k: calls.append(1) or real(*a, **k))
    assert cli.main(argv + ["--no-cache"]) == 0
    assert calls == [1]


def test_corrupted_cache_recomputes_with_warning(tmp_path, caplog):
    argv = SMALL_BAND + ["--out", str(tmp_path)]
    assert cli.main(argv) == 0
    first = (tmp_path / "band.csv").read_bytes()
    entry = next((tmp_path / ".cache").iterdir())
    (entry / "band.csv").write_text("garbage\n")
    with caplog.at_level(logging.WARNING, logger="screengap"):
        assert cli.main(argv) == 0
    assert "corrupted" in caplog.text
    assert (tmp_path / "band.csv").read_bytes() == first
    assert (entry / "band.csv").read_bytes() == first


def test_runs_are_bit_reproducible_across_threads(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(SMALL_BAND + ["--out", str(a), "--no-cache"]) == 0
    assert cli.main(SMALL_BAND + ["--out", str(b), "--no-cache", "--threads", "2"]) == 0
    names = sorted(p.name for p in a.iterdir() if p.is_file() and p.name != "timings.json")
    assert names == sorted(p.name for p in b.iterdir() if p.is_file() and p.name != "timings.json")
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes(), n


def test_config_file_defaults_and_unknown_keys(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"d": 1.0, "b": 0.5}))
    code, out = _run(["gap-edges", "--config", str(cfg)], capsys)
    assert code == 0 and json.loads(out)["sigma"] == pytest.approx(2 * math.pi)
    code, out = _run(["gap-edges", "--config", str(cfg), "--b", "0.25"], capsys)
    assert json.loads(out)["b"] == 0.25
    cfg.write_text(json.dumps({"d": 1.0, "bogus": 3}))
    with pytest.raises(SystemExit) as info:
        cli.main(["gap-edges", "--config", str(cfg), "--b", "0.5"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["gap-edges", "--d", "1"])
    assert info.value.code == 2


def test_config_hash_canonical():
    a = {"b": 0.5, "a": [1, 2.0], "c": {"y": 1, "x": None}}
    b = {"c": {"x": None, "y": 1}, "a": [1, 2.0], "b": 0.5}
    assert canonical_json(a) == canonical_json(b)
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "b": 0.25})


def test_numerical_failure_exit_three(tmp_path):
    # the residual floor on this mesh sits far above 1e-16
    assert cli.main(SMALL_BAND + ["--out", str(tmp_path), "--tol", "1e-16"]) == 3


def test_consistency_failure_exit_four(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise ConsistencyError("bracketing violated")

    monkeypatch.setattr(cli, "sweep_bands", broken)
    assert cli.main(SMALL_BAND + ["--out", str(tmp_path)]) == 4


def test_mesh_command(tmp_path):
    assert cli.main(["mesh", "--h-max", "0.0625", "--r", "0.05", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "mesh.json").read_text())
    validate_json(doc, "mesh")
    assert doc["ok"] and doc["components"] == 1
    assert (tmp_path / "cell.mesh").stat().st_size > 0


def test_capacity_command(tmp_path):
    assert cli.main(["capacity", "--h", "0.2", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "capacity.json").read_text())
    validate_json(doc, "capacity")
    assert doc["capT"] == pytest.approx(8.0, rel=0.02)


def test_floor_command(tmp_path):
    assert cli.main(["floor", "--h-max", "0.0625", "--r", "0.05", "--phi-grid", "3", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "floor.json").read_text())
    validate_json(doc, "floor")
    assert doc["cell_floor"] > 0


def test_converge_single_eps_insufficient(tmp_path):
    argv = ["converge", "--eps-list", "0.5", "--phi-grid", "0", "--h-max", "0.0625", "--out", str(tmp_path)]
    assert cli.main(argv) == 0
    doc = json.loads((tmp_path / "converge.json").read_text())
    validate_json(doc, "converge")
    assert set(doc["trends"].values()) == {"insufficient-data"}
    last = (tmp_path / "converge.csv").read_text().splitlines()[-1]
    assert last.startswith("trend,,verdict") and "insufficient-data" in last


def test_converge_marks_unresolvable_rows(tmp_path):
    argv = ["converge", "--eps-list", "0.5,0.1", "--phi-grid", "0", "--h-max", "0.0625", "--out", str(tmp_path)]
    assert cli.main(argv) == 0
    rows = read_csv(tmp_path / "converge.csv")
    assert rows[1]["status"] == "skipped: unresolvable"
    assert json.loads((tmp_path / "converge.json").read_text())["skipped"] == [0.1]


def test_every_schema_is_a_valid_document():
    import jsonschema

    for name in ("band", "capacity", "config", "converge", "design", "floor", "gap_edges", "maxwell", "mesh", "timings", "two_screen"):
        jsonschema.Draft202012Validator.check_schema(load_schema(name))


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "screengap.cli", "gap-edges", "--d", "1", "--b", "2"], capture_output=True, text=True)
    assert res.returncode == 2
