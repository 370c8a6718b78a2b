import json
import subprocess
import sys

import pytest

from qkernel.cli import DEFAULTS, main, resolve
from qkernel.errors import ConfigurationError


def _read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# qkernel")
    return lines[1].split(","), [row.split(",") for row in lines[2:]]


def test_kernel_command(tmp_path):
    assert main(["kernel", "--epsilon", "0,0.01", "--out", str(tmp_path)]) == 0
    cols, rows = _read_csv(tmp_path / "kernel.csv")
    assert cols == ["epsilon", "x", "density"]
    assert {r[0] for r in rows} == {"0.0", "0.01"}
    assert (tmp_path / "kernel.svg").read_text().startswith("<svg")


def test_kernel_no_svg(tmp_path):
    assert main(["kernel", "--no-svg", "--out", str(tmp_path)]) == 0
    assert not (tmp_path / "kernel.svg").exists()


def test_moments_command(tmp_path):
    assert main(["moments", "--epsilon", "0.01", "--order", "4", "--out", str(tmp_path)]) == 0
    cols, rows = _read_csv(tmp_path / "moments.csv")
    assert cols == ["order", "value"] and len(rows) == 5
    assert float(rows[1][1]) == pytest.approx(0.01 / 3)
    assert main(["moments", "--alpha", "2", "--out", str(tmp_path)]) == 0


def test_fit_metric_command(tmp_path, capsys):
    assert main(["fit-metric", "--out", str(tmp_path)]) == 0
    _, rows = _read_csv(tmp_path / "weights.csv")
    assert max(abs(float(w) - 1) for _, w in rows) < 1e-8
    assert (tmp_path / "residuals.csv").exists()
    assert main(["fit-metric", "--blur", "dirac", "--out", str(tmp_path)]) == 2
    assert "geometry.infeasible" in capsys.readouterr().err


def test_simulate_command(tmp_path):
    assert main(["simulate", "--n", "5000", "--out", str(tmp_path)]) == 0
    cols, rows = _read_csv(tmp_path / "ensemble.csv")
    assert cols == ["sample"] and len(rows) == 5000
    stats = json.loads((tmp_path / "ensemble.json").read_text())
    assert stats["n"] == 5000
    assert main(["simulate", "--engine", "particle", "--n", "500", "--steps", "5",
                 "--out", str(tmp_path / "p")]) == 0


def test_price_command(tmp_path):
    assert main(["price", "--strike", "0.99,1.0,1.01", "--out", str(tmp_path)]) == 0
    cols, rows = _read_csv(tmp_path / "price.csv")
    assert cols == ["side", "strike", "maturity", "price", "vol"]
    assert [float(r[4]) for r in rows] == pytest.approx([0.2] * 3, abs=1e-12)


def test_smile_command(tmp_path):
    assert main(["smile", "--z-count", "9", "--out", str(tmp_path)]) == 0
    _, rows = _read_csv(tmp_path / "smile.csv")
    assert len(rows) == 4 * 9
    assert (tmp_path / "skew.csv").exists() and (tmp_path / "smile.svg").exists()


def test_validate_command(capsys):
    assert main(["validate", "--only", "gaussian-baseline,moments"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert [line.split()[:2] for line in out] == [["PASS", "gaussian-baseline:"], ["PASS", "moments:"]]
    assert main(["validate", "--only", "nonsense"]) == 2


def test_usage_errors(capsys):
    assert main([]) == 64
    assert main(["kernel", "--sigma", "abc"]) == 64
    assert main(["frobnicate"]) == 64
    assert "usage" in capsys.readouterr().err


def test_domain_error_exit_code(tmp_path, capsys):
    assert main(["kernel", "--sigma", "-1", "--out", str(tmp_path)]) == 2
    assert capsys.readouterr().err.strip()


def test_config_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 7, "sigma": 0.3, "kernel": {"sigma": 0.25}}))
    merged = resolve("kernel", {"config": str(cfg)})
    assert merged["sigma"] == 0.25 and merged["seed"] == 7
    merged = resolve("kernel", {"config": str(cfg), "sigma": 0.4})
    assert merged["sigma"] == 0.4
    # a top-level key only some commands know is ignored elsewhere
    assert "sigma" not in resolve("moments", {"config": str(cfg)})
    assert resolve("kernel", {})["threads"] >= 1
    assert resolve("kernel", {})["sigma"] == DEFAULTS["kernel"]["sigma"]


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kernel": {"colour": "red"}}))
    with pytest.raises(ConfigurationError):
        resolve("kernel", {"config": str(bad)})
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigurationError):
        resolve("kernel", {"config": str(broken)})
    assert main(["kernel", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_outputs_are_byte_identical(tmp_path):
    for run in ("a", "b"):
        assert main(["simulate", "--n", "3000", "--seed", "5", "--threads", "1" if run == "a" else "4",
                     "--out", str(tmp_path / run)]) == 0
        assert main(["kernel", "--epsilon", "0.01", "--out", str(tmp_path / run)]) == 0
    for name in ("ensemble.csv", "ensemble.json", "kernel.csv", "kernel.svg"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "qkernel", "moments", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "moments.csv" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "qkernel", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("qkernel")
