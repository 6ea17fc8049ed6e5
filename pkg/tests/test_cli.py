import json

import numpy as np
import pytest
from scipy import integrate

from relloc import cli
from relloc.errors import ConfigError

SMALL = {
    "fock-phase": ["--records", "1:0,3:2", "--fock-n", "6", "--grid", "128"],
    "poissonian-phase": ["--nbar", "4", "--eps", "0.2"],
    "thermal-phase": ["--nbar", "2", "--eps", "0.2", "--grid", "128"],
    "visibility-curves": ["--nbar", "3", "--points", "4"],
    "bec-likely-events": ["--M", "3", "--grid", "128"],
    "bec-fringes": ["--nbar", "200", "--events", "20", "--grid", "128"],
    "rubber-cavity": ["--grid", "401"],
    "scattering": ["--grid", "401", "--half-width", "3", "--events", "2"],
    "thermal-scattering": ["--grid", "401", "--half-width", "3", "--events", "2", "--nbar", "1"],
}


def _run(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _columns(text):
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows


@pytest.mark.parametrize("name", sorted(SMALL))
def test_experiment_runs_and_is_reproducible(name, capsys):
    argv = [name, *SMALL[name], "--seed", "11"]
    code, a, err = _run(capsys, argv)
    assert code == 0, err
    _, b, _ = _run(capsys, argv)
    assert a == b
    assert a.startswith("# relloc ")
    header, rows = _columns(a)
    assert len(header) >= 2 and rows


@pytest.mark.parametrize("name", ["fock-phase", "thermal-phase", "rubber-cavity", "scattering", "thermal-scattering"])
def test_emitted_densities_integrate_to_one(name, capsys):
    code, text, _ = _run(capsys, [name, *SMALL[name], "--seed", "1"])
    assert code == 0
    header, rows = _columns(text)
    arr = np.array([[float(v) for v in row] for row in rows])
    x = arr[:, 0]
    for j in range(1, arr.shape[1]):
        assert integrate.trapezoid(arr[:, j], x) == pytest.approx(1.0, abs=1e-6), header[j]


def test_json_output(capsys):
    code, text, _ = _run(capsys, ["bec-likely-events", "--M", "2", "--grid", "64", "--format", "json"])
    assert code == 0
    doc = json.loads(text)
    assert doc["experiment"] == "bec-likely-events"
    assert doc["config"]["M"] == 2
    assert set(doc["columns"]) == set(doc["data"])
    assert 0 < doc["meta"]["mass"] <= 1


def test_config_files(tmp_path, capsys):
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"M": 2, "grid": 64}))
    kv = tmp_path / "c.txt"
    kv.write_text("# comment\nM = 2\ngrid=64\n")
    _, a, _ = _run(capsys, ["bec-likely-events", "--config", str(j)])
    _, b, _ = _run(capsys, ["bec-likely-events", "--config", str(kv)])
    assert a == b and '"M": 2' in a
    # flags take precedence over the file
    _, c, _ = _run(capsys, ["bec-likely-events", "--config", str(j), "--M", "3"])
    assert '"M": 3' in c


def test_output_file(tmp_path, capsys):
    out = tmp_path / "o.csv"
    code, text, _ = _run(capsys, ["poissonian-phase", "--nbar", "2", "--out", str(out)])
    assert code == 0 and text == ""
    assert out.read_text().startswith("# relloc ")


@pytest.mark.parametrize("argv", [
    ["poissonian-phase", "--eps", "1.5"],
    ["poissonian-phase", "--eps", "abc"],
    ["poissonian-phase", "--bogus", "1"],
    ["no-such-experiment"],
    ["fock-phase", "--records", "5:5", "--fock-n", "4"],
    ["fock-phase", "--records", "1-0"],
    ["bec-likely-events", "--seed", "-3"],
])
def test_config_errors_exit_2(argv, capsys):
    code, out, err = _run(capsys, argv)
    assert code == 2 and out == ""
    assert json.loads(err)["error"] == "config_error"


def test_unknown_file_key_exit_2(tmp_path, capsys):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"nbar": 2, "colour": "red"}))
    code, _, err = _run(capsys, ["poissonian-phase", "--config", str(f)])
    assert code == 2 and "colour" in json.loads(err)["message"]


def test_cutoff_overflow_exit_3(capsys):
    code, _, err = _run(capsys, ["thermal-phase", "--nbar", "5", "--cutoff", "5"])
    assert code == 3
    assert json.loads(err)["error"] == "cutoff_overflow"


def test_validation_failure_exit_4(monkeypatch, capsys):
    real = cli.phaseloc.clr_density

    def skewed(rec, grid):
        d = real(rec, grid)
        return type(d)(d.grid, d.weights * (1 + 1e-3 * np.cos(grid.points)))

    monkeypatch.setattr(cli.phaseloc, "clr_density", skewed)
    code, _, err = _run(capsys, ["fock-phase", *SMALL["fock-phase"]])
    assert code == 4
    assert json.loads(err)["error"] == "validation_failure"


def test_resolve_config_rejects_mismatched_experiment():
    with pytest.raises(ConfigError):
        cli.resolve_config("scattering", {"experiment": "rubber-cavity"}, {})
