import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from helixcluster.cli import main, read_assembly

COARSE_ARGS = ["--K", "64", "--base-count", "1024", "--band-spacing", "5e-3"]


@pytest.fixture(scope="module")
def config_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "config.json"
    assert main(["config", "solve", "--m", "2", "--n", "1", "--out", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def assembly_file(config_file):
    path = config_file.parent / "assembly.json"
    assert main(["assemble", "--config", str(config_file), "--eps", "1e-2", "--out", str(path)] + COARSE_ARGS) == 0
    return path


def test_config_solve_payload(config_file):
    d = json.loads(config_file.read_text())
    assert set(d) >= {"points", "alpha", "residual", "singular_values", "d"}
    assert d["alpha"] == 3.0 and d["residual"] < 1e-12 and d["certified"]
    # the (2,1) equilibrium is an isosceles triangle with apex on the real axis
    P = np.sort_complex(np.array([complex(a, b) for a, b in d["points"]]))
    r2 = math.sqrt(2)
    assert np.allclose(P, np.sort_complex(np.array([-2 * r2 / 3, r2 / 3 + 1j * r2, r2 / 3 - 1j * r2])), atol=1e-12)


def test_config_check(config_file, tmp_path, capsys):
    assert main(["config", "check", str(config_file)]) == 0
    assert json.loads(capsys.readouterr().out)["ok"] is True
    d = json.loads(config_file.read_text())
    d["points"][0][1] += 0.05
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    assert main(["config", "check", str(bad)]) == 1
    assert json.loads(capsys.readouterr().out)["certified"] is False
    # a symmetric but unbalanced set is caught by the residual
    d["points"][0][1] -= 0.05
    d["points"][1][0] += 0.05
    bad.write_text(json.dumps(d))
    assert main(["config", "check", str(bad)]) == 1
    assert json.loads(capsys.readouterr().out)["residual"] > 1e-3


def test_config_solve_from_kappas_and_guess(config_file, tmp_path):
    out = tmp_path / "k.json"
    assert main(["config", "solve", "--kappas", "1,-1,1", "--guess", str(config_file), "--out", str(out)]) == 0
    a, b = json.loads(out.read_text()), json.loads(config_file.read_text())
    assert np.allclose(a["points"], b["points"], atol=1e-12)


def test_helix_sample(tmp_path):
    out = tmp_path / "h.csv"
    assert main(["helix", "sample", "--a", "1", "--b", "0", "--h", "1", "--s-range", "0,3,7", "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["s", "x1", "x2", "x3", "curvature", "torsion"]
    assert len(rows) == 8
    vals = np.array(rows[1:], dtype=float)
    assert np.allclose(vals[:, 4], 0.5) and np.allclose(vals[:, 5], 0.5)
    assert np.allclose(vals[:, 1] ** 2 + vals[:, 2] ** 2, 1.0)


def test_assembly_round_trip(assembly_file):
    d = json.loads(assembly_file.read_text())
    assert d["params"]["K"] == 64 and len(d["mu"]) == 3
    sidecar = assembly_file.parent / d["h2_modes_csv"]
    with sidecar.open() as fh:
        head = next(csv.reader(fh))
    assert head == ["k", "r", "re", "im", "d1_re", "d1_im", "d2_re", "d2_im"]
    asm = read_assembly(assembly_file)
    assert asm.mu.tolist() == d["mu"]
    # the stored scales still close the relation after rebuilding H2
    assert asm.mu_residual() < 1e-10


def test_residual_scan(assembly_file, tmp_path):
    out = tmp_path / "scan.json"
    assert main(["residual", "scan", "--assembly", str(assembly_file), "--samples", "800", "--out", str(out)]) == 0
    scan = json.loads(out.read_text())
    assert scan["finite"] and scan["samples"] == 800
    assert 0 < scan["inner_sup"] < 50


def test_field_export(assembly_file, tmp_path, capsys):
    out = tmp_path / "omega.csv"
    P = json.loads(assembly_file.read_text())["summary"]["P"][0]
    bounds = f"{P[0] - 0.01},{P[1] - 0.01},-0.01,{P[0] + 0.01},{P[1] + 0.01},0.01"
    assert main(["field", "export", "--assembly", str(assembly_file), "--grid", "6", "--bounds", bounds, "--out", str(out)]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["grid"] == [6, 6, 6] and info["max_omega"] > 0
    assert len(out.read_text().splitlines()) == 217


def test_bad_bounds(assembly_file, tmp_path):
    with pytest.raises(SystemExit):
        main(["field", "export", "--assembly", str(assembly_file), "--bounds", "0,1", "--out", str(tmp_path / "x.csv")])


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "helixcluster", "config", "solve", "--m", "3", "--n", "2"],
                         check=True, capture_output=True, text=True)
    d = json.loads(out.stdout)
    assert d["alpha"] == 5.0 and len(d["points"]) == 5


def test_rates(config_file, tmp_path):
    out = tmp_path / "rates.json"
    rc = main(["rates", "--cluster", str(config_file), "--eps", "1e-2,1e-3,1e-4", "--samples", "800", "--out", str(out)] + COARSE_ARGS)
    fits = json.loads(out.read_text())
    assert set(fits) == {"inner", "transition", "outer"}
    assert fits["inner"]["eps"] == [1e-2, 1e-3, 1e-4]
    assert rc == (0 if fits["inner"]["passed"] and fits["outer"]["passed"] else 1)
