import csv
import json
import math

import pytest
import yaml

from robin_limit.cli import CHECKS, CSV_COLUMNS, ConfigError, main, parse_config
from robin_limit.geometry import load_mesh


@pytest.fixture(autouse=True)
def _cache(tmp_path, monkeypatch):
    monkeypatch.setenv("ROBIN_LIMIT_CACHE", str(tmp_path / "cache"))


def _write(tmp_path, tree, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(tree))
    return p


def _rows(out):
    with open(out / "report.csv") as fh:
        return list(csv.DictReader(fh))


def test_1d_expansion_run(tmp_path):
    cfg = {
        "domain": {"type": "interval"},
        "backend": "exact1d",
        "alpha_grid": [100, 1000, 10000],
        "clusters": [1],
        "checks": ["expansion", "rates"],
        "output_dir": "out",
    }
    assert main(["run", str(_write(tmp_path, cfg))]) == 0
    rows = _rows(tmp_path / "out")
    assert list(rows[0]) == list(CSV_COLUMNS)
    slopes = {float(r["slope"]) for r in rows if r["check"] == "expansion"}
    assert len(slopes) == 1 and slopes.pop() == pytest.approx(-2.0, abs=0.05)
    assert all(r["status"] == "pass" for r in rows)
    doc = json.loads((tmp_path / "out" / "report.json").read_text())
    assert doc["summary"] == {"pass": len(rows), "warn": 0, "fail": 0}
    assert doc["seed"] == 42


def test_rectangle_splitting_run(tmp_path):
    cfg = {
        "domain": {"type": "rectangle", "l": 1, "L": 2},
        "backend": "separable",
        "alpha_grid": {"start": 10, "factor": 10, "count": 4},
        "clusters": [5],
        "checks": ["splitting"],
        "output_dir": "out",
    }
    assert main(["run", str(_write(tmp_path, cfg))]) == 0
    rows = _rows(tmp_path / "out")
    assert len(rows) == 4
    assert float(rows[-1]["predicted"]) == pytest.approx(6 * math.pi**2)
    assert float(rows[-1]["observed"]) == pytest.approx(6 * math.pi**2, rel=0.02)


def test_fem_outside_window_gives_warn_rows(tmp_path, capsys):
    cfg = {
        "domain": {"type": "rectangle", "l": 1, "L": 1},
        "backend": "fem",
        "mesh_h": 0.2,
        "alpha_grid": [0.1, 0.3, 5.0, 50.0],
        "clusters": [1],
        "checks": ["spectrum", "torsion_bounds"],
        "n_random": 2,
        "output_dir": "out",
    }
    assert main(["run", str(_write(tmp_path, cfg))]) == 0
    rows = _rows(tmp_path / "out")
    for r in rows:
        if float(r["alpha"]) > 0.1 / 0.2 * 1.5:
            assert r["status"] == "warn" and "outside mesh window" in r["note"]
    assert any(r["status"] == "pass" for r in rows)
    assert "warn" in capsys.readouterr().out


def test_failing_rows_exit_one_and_name_the_inequality(tmp_path, capsys):
    # two grid points cannot support the default 3-point rate fit
    cfg = {
        "domain": {"type": "interval"},
        "backend": "exact1d",
        "alpha_grid": [100, 1000],
        "clusters": [1],
        "checks": ["rates"],
        "output_dir": "out",
    }
    assert main(["run", str(_write(tmp_path, cfg))]) == 1
    assert "FAIL rates" in capsys.readouterr().out


def test_report_is_byte_identical_and_cached(tmp_path):
    cfg = {
        "domain": {"type": "interval"},
        "backend": "exact1d",
        "alpha_grid": [1, 10, 100],
        "clusters": [1, 2],
        "checks": ["torsion_bounds", "monotonicity", "omega_rho", "spectrum"],
        "output_dir": "out",
        "seed": 7,
    }
    p = _write(tmp_path, cfg)
    assert main(["run", str(p), "--no-cache"]) == 0
    first = (tmp_path / "out" / "report.csv").read_bytes()
    assert main(["run", str(p)]) == 0
    assert (tmp_path / "out" / "report.csv").read_bytes() == first
    cached = list((tmp_path / "cache").rglob("*.json"))
    assert len(cached) == 4
    assert main(["run", str(p)]) == 0  # served from cache
    assert (tmp_path / "out" / "report.csv").read_bytes() == first
    assert not list((tmp_path / "cache").rglob("*.tmp"))


@pytest.mark.parametrize(
    "patch,message",
    [
        ({"backend": "fem", "mesh_h": 0.1}, "backend: fem needs a two-dimensional domain"),
        ({"domain": {"type": "rectangle", "l": -1, "L": 1}}, "domain.l: must be positive"),
        ({"alpha_grid": [10, 5]}, "alpha_grid: must be non-empty and strictly increasing"),
        ({"alpha_grid": {"start": 1, "factor": 2}}, "alpha_grid.count: missing"),
        ({"checks": ["bogus"]}, "checks[0]: unknown check"),
        ({"checks": ["eigenfunctions"]}, "checks[0]: eigenfunctions is not available"),
        ({"clusters": [0]}, "clusters:"),
        ({"domain": {"type": "torus"}}, "domain.type: unknown domain"),
    ],
)
def test_config_errors_name_the_field(patch, message):
    base = {"domain": {"type": "interval"}, "backend": "exact1d", "alpha_grid": [1, 2], "checks": ["spectrum"]}
    base.update(patch)
    with pytest.raises(ConfigError) as exc:
        parse_config(base)
    assert str(exc.value).startswith(message)


def test_config_error_exit_code(tmp_path, capsys):
    p = _write(tmp_path, {"domain": {"type": "interval"}, "backend": "fem", "mesh_h": 0.1, "alpha_grid": [1]})
    assert main(["run", str(p)]) == 2
    assert "config error" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("domain: [unclosed")
    assert main(["run", str(bad)]) == 2


def test_fem_requires_mesh_h():
    with pytest.raises(ConfigError, match="mesh_h: missing"):
        parse_config({"domain": {"type": "disk", "R": 1}, "backend": "fem", "alpha_grid": [1]})


def test_explain(capsys):
    assert main(["explain", "expansion"]) == 0
    assert "mu_{n,i}/alpha" in capsys.readouterr().out
    assert main(["explain", "monotonicity"]) == 0
    assert "int |grad U_alpha|^2" in capsys.readouterr().out
    assert main(["explain", "bogus"]) == 2
    err = capsys.readouterr().err
    assert all(c in err for c in CHECKS)


def test_mesh_command(tmp_path):
    out = tmp_path / "m.txt"
    assert main(["mesh", "rectangle", "1", "2", "--h", "0.25", "--refine", "1", "-o", str(out)]) == 0
    m = load_mesh(out)
    assert m.areas().sum() == pytest.approx(2.0)
    assert main(["mesh", "disk", "1", "--h", "0.3", "-o", str(out)]) == 0
    assert load_mesh(out).circle == 1.0
    assert main(["mesh", "rectangle", "1", "--h", "0.2", "-o", str(out)]) == 2
    assert main(["mesh", "polygon", "0", "0", "1", "0", "0", "1", "--h", "0.2", "-o", str(out)]) == 0


def test_usage_errors():
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
