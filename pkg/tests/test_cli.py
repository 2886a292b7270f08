import json
import textwrap

import numpy as np
import pytest

from impedance_maps import cli, config, experiments, io
from impedance_maps.errors import ConfigInvalid
from impedance_maps.maps import MapSpec, assemble_map
from impedance_maps.solver import CellGeometry, Discretization, cell_problem

ONE_D = textwrap.dedent(
    """
    experiment = "schwarz-converge"
    k = [16]

    [discretization]
    points_per_wavelength = 12

    [schwarz]
    n_subdomains = 3
    delta = 0.25
    width = 1.0
    regime = "impedance"
    one_d = true
    iterations = 3
    """
)


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.mark.parametrize("name", sorted(experiments.EXPERIMENTS))
def test_packaged_defaults_validate(name):
    cfg = config.validate(name, config.default(name))
    assert cfg["experiment"] == name and cfg["seed"] == 0


def test_presets_cover_every_experiment():
    names = config.presets()
    assert set(experiments.EXPERIMENTS) <= set(names)
    cfg = cli.resolve("composite", None, None, "composite-witness")
    assert cfg["maps"]["mode"] == "witness"
    with pytest.raises(ConfigInvalid):
        cli.resolve("composite", None, None, "schwarz-converge")


def test_missing_required_field_exits_1_without_solving(tmp_path, monkeypatch):
    called = []
    monkeypatch.setitem(cli.EXPERIMENTS, "schwarz-converge", lambda *a, **k: called.append(1))
    cfg = _write(tmp_path, ONE_D.replace("delta = 0.25\n", ""))
    assert cli.main(["schwarz-converge", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    err = json.loads((tmp_path / "o" / "error.json").read_text())
    assert err["error"] == "ConfigInvalid" and "schwarz.delta: required" in err["message"]
    assert not called


@pytest.mark.parametrize(
    "edit, message",
    [
        (lambda t: t.replace("iterations = 3", "iteratons = 3"), "unknown key"),
        (lambda t: t.replace("n_subdomains = 3", "n_subdomains = 1"), "invalid value"),
        (lambda t: t.replace("k = [16]", "k = [-16]"), "invalid value"),
        (lambda t: t.replace("width = 1.0", 'width = "wide"'), "wrong type"),
        (lambda t: t.replace('experiment = "schwarz-converge"', 'experiment = "composite"'), "config is for"),
        (lambda t: t + "\n[[broken", "cfg.toml"),
    ],
)
def test_invalid_configs(tmp_path, edit, message):
    cfg = _write(tmp_path, edit(ONE_D))
    with pytest.raises(ConfigInvalid, match=message):
        cli.resolve("schwarz-converge", cfg, None)


def test_success_outputs_and_metadata(tmp_path):
    cfg = _write(tmp_path, ONE_D)
    out = tmp_path / "o"
    assert cli.main(["schwarz-converge", "--config", str(cfg), "--out", str(out), "--check"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["anchor"] and summary["version"]
    assert summary["config"]["schwarz"]["n_subdomains"] == 3
    assert summary["passed"] is True
    header = (out / "records.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["k", "n", "energy", "l2"]
    assert json.loads((out / "config.json").read_text()) == summary["config"]


def test_check_violation_exits_2(tmp_path):
    cfg = _write(tmp_path, ONE_D + "\n[checks]\nnilpotent_tol = 0.0\n")
    out = tmp_path / "o"
    assert cli.main(["schwarz-converge", "--config", str(cfg), "--out", str(out)]) == 0
    assert cli.main(["schwarz-converge", "--config", str(cfg), "--out", str(out), "--check"]) == 2


def test_downstream_failure_exits_3(tmp_path):
    text = textwrap.dedent(
        """
        k = [10]
        [geometry]
        h = 1.0
        d_l = 1.0
        d_r = 1.0
        [discretization]
        points_per_wavelength = 12
        [oracle]
        theta0 = 0.3
        bruteforce_atoms = 0
        """
    )
    out = tmp_path / "o"
    assert cli.main(["oracle-check", "--config", str(_write(tmp_path, text)), "--out", str(out)]) == 3
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "CutoffTooTight" and err["config"]["k"] == [10]


def test_outputs_are_deterministic(tmp_path):
    text = ONE_D.replace('experiment = "schwarz-converge"', 'experiment = "schwarz-power-norm"').replace(
        "iterations = 3", "M = [1, 2]\ntrials = 2")
    cfg = _write(tmp_path, text)
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(["schwarz-power-norm", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
        blobs.append(((out / "summary.json").read_bytes(), (out / "records.csv").read_bytes()))
    assert blobs[0] == blobs[1]
    assert json.loads(blobs[0][0])["config"]["seed"] == 3


def test_log_level_from_environment(tmp_path, monkeypatch, caplog):
    monkeypatch.setenv("IMPL_LOG", "info")
    cfg = _write(tmp_path, ONE_D)
    with caplog.at_level("INFO"):
        cli.main(["schwarz-converge", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert any("PASS" in r.getMessage() for r in caplog.records)


# ---------------------------------------------------------------------- file formats
def test_field_round_trip(tmp_path):
    p = cell_problem(CellGeometry(1.0, 0.5, 0.5, 10.0), Discretization(12), "model1")
    u = p.solve({"left": np.ones(p.grid.shape[0])})
    io.write_field(tmp_path / "u.impl", u)
    raw = (tmp_path / "u.impl").read_bytes()
    assert raw[:4] == b"IMPL" and len(raw) == 64 + 16 * u.values.size
    meta, values = io.read_field(tmp_path / "u.impl")
    assert (meta["ny"], meta["nx"]) == u.values.shape and meta["k"] == 10.0
    assert np.array_equal(values, u.values)
    rows = io.field_rows(u)
    assert set(rows[0]) == {"x", "y", "re", "im"}


def test_map_round_trip(tmp_path):
    m = assemble_map(MapSpec("model2", CellGeometry(1.0, 0.5, 0.5, 10.0), -1, Discretization(12)))
    io.write_map(tmp_path / "m.impm", m)
    meta, entries = io.read_map(tmp_path / "m.impm")
    assert meta["model"] == "model2" and meta["iota"] == -1 and meta["d_l"] == 0.5
    assert np.array_equal(entries, m.entries)
    with pytest.raises(ValueError):
        io.read_field(tmp_path / "m.impm")


def test_csv_uses_plain_decimals(tmp_path):
    io.write_csv(tmp_path / "t.csv", [{"a": 0.1, "b": None}, {"a": 1e-20, "c": True}])
    assert (tmp_path / "t.csv").read_text() == "a,b,c\n0.1,,\n1e-20,,True\n"
