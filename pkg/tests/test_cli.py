import csv
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from resonance_box import __version__
from resonance_box.cli import COMMANDS, EXIT_CONFIG, EXIT_DOMAIN, main
from resonance_box.config import load_config

ROOT = Path(__file__).resolve().parents[1]
CANONICAL_INI = ROOT / "configs" / "canonical.ini"

ZERO_INI = """\
[potential]
kind = constant
value = 0.0

[numerics]
hbar = 0.5

[sweep]
k = 6
"""


def small_canonical(tmp_path) -> Path:
    """Canonical model on a coarser sweep; t_bound keeps the scaling command cheap."""
    text = (CANONICAL_INI.read_text()
            .replace("ell_min = 8.0", "ell_min = 8.1")
            .replace("n_ell = 400", "n_ell = 150")
            .replace("observable = gap_right", "observable = t_bound"))
    path = tmp_path / "small.ini"
    path.write_text(text)
    return path


def read_table(path: Path, config_path: Path):
    """Strict reader: header comments echo the config, every row matches the header width."""
    lines = path.read_text().split("\n")
    assert lines[-1] == ""
    config = load_config(config_path)
    assert lines[0] == f"# resonance-box {__version__} config-hash={config.config_hash()}"
    echoed = config.serialize().splitlines()
    comment = [ln for ln in lines if ln.startswith("#")][1:]
    assert [c[2:] if c != "#" else "" for c in comment] == echoed
    body = [ln for ln in lines[:-1] if not ln.startswith("#")]
    rows = list(csv.reader(body))
    header, data = rows[0], rows[1:]
    assert all(len(r) == len(header) for r in data)
    return header, [dict(zip(header, r)) for r in data]


def numeric(value: str) -> float:
    x = float(value)
    assert value.lower() == "nan" or math.isfinite(x)
    return x


def test_spectrum_zero_potential_matches_box_levels(tmp_path):
    cfg = tmp_path / "zero.ini"
    cfg.write_text(ZERO_INI)
    assert main(["spectrum", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    header, rows = read_table(tmp_path / "spectrum.csv", cfg)
    assert header == ["index", "energy", "extrapolated"]
    assert len(rows) == 6
    n = np.arange(1, 7)
    exact = (0.5 * n * math.pi / 4.0) ** 2
    # 20 points per wavelength: Richardson leaves an O((kh)^4) relative error, ~1e-5 at the top level
    np.testing.assert_allclose([numeric(r["extrapolated"]) for r in rows], exact, rtol=1e-5)
    np.testing.assert_allclose([numeric(r["energy"]) for r in rows], exact, rtol=5e-3)


def test_decoupled_and_agmon_tables(tmp_path):
    cfg = tmp_path / "zero.ini"
    cfg.write_text(ZERO_INI)
    assert main(["decoupled", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "decoupled.csv", cfg)
    assert {r["family"] for r in rows} == {"interior", "left", "right"}
    interior = [numeric(r["energy"]) for r in rows if r["family"] == "interior"]
    # raw lattice value, O((kh)^2) at the default resolution
    assert interior[0] == pytest.approx((0.5 * math.pi / 2) ** 2, rel=1e-2)
    assert main(["agmon", "--config", str(CANONICAL_INI), "--out", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "agmon.csv", CANONICAL_INI)
    assert numeric(rows[0]["d_plus"]) == pytest.approx(1.3934055380373742, abs=1e-9)


@pytest.mark.slow
def test_crossings_both_sides(tmp_path):
    cfg = small_canonical(tmp_path)
    assert main(["crossings", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "crossings.csv", cfg)
    assert len(rows) >= 2
    assert {r["side"] for r in rows} == {"left", "right"}
    for r in rows:
        assert numeric(r["gap"]) > 0
        assert r["flagged"] in ("true", "false")
        assert abs(numeric(r["ell_star"]) - numeric(r["ell0"])) <= numeric(r["bracket_width"])


def run_all(config: Path, out: Path) -> dict[str, bytes]:
    for name in COMMANDS:
        assert main([name, "--config", str(config), "--out", str(out)]) == 0, name
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


@pytest.mark.slow
def test_every_command_is_deterministic(tmp_path):
    cfg = small_canonical(tmp_path)
    first = run_all(cfg, tmp_path / "a")
    second = run_all(cfg, tmp_path / "b")
    assert set(first) == {f"{n}.csv" for n in COMMANDS} | {"scaling_fit.csv"}
    assert first == second
    for name in first:
        read_table(tmp_path / "a" / name, cfg)


def test_timestamp_adds_one_header_line(tmp_path):
    cfg = tmp_path / "zero.ini"
    cfg.write_text(ZERO_INI)
    main(["agmon", "--config", str(cfg), "--out", str(tmp_path / "plain")])
    main(["agmon", "--config", str(cfg), "--out", str(tmp_path / "stamped"), "--timestamp"])
    plain = (tmp_path / "plain" / "agmon.csv").read_text().splitlines()
    stamped = (tmp_path / "stamped" / "agmon.csv").read_text().splitlines()
    assert len(stamped) == len(plain) + 1
    assert stamped[1].startswith("# generated ")
    assert stamped[:1] + stamped[2:] == plain


def run_script(*args, env=None):
    return subprocess.run(
        [sys.executable, "-m", "resonance_box.cli", *args],
        capture_output=True, text=True, env=env,
    )


def test_config_error_exit_code(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(ZERO_INI.replace("hbar = 0.5", "hbar = -1"))
    proc = run_script("agmon", "--config", str(cfg), "--out", str(tmp_path))
    assert proc.returncode == EXIT_CONFIG
    lines = proc.stderr.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("resonance-box: error: line 6:")


def test_domain_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "zero.ini"
    cfg.write_text(ZERO_INI)
    # a flat potential has no interior level in the resonance window, hence no gap
    assert main(["scaling", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_DOMAIN
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("resonance-box: error:")


def test_missing_config_file(tmp_path, capsys):
    assert main(["agmon", "--config", str(tmp_path / "nope.ini")]) == 1
    assert capsys.readouterr().err.startswith("resonance-box: error:")


def test_jobs_environment(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "zero.ini"
    cfg.write_text(ZERO_INI)
    monkeypatch.setenv("RESONANCE_BOX_JOBS", "many")
    assert main(["decoupled", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "RESONANCE_BOX_JOBS" in capsys.readouterr().err
    monkeypatch.setenv("RESONANCE_BOX_JOBS", "2")
    assert main(["decoupled", "--config", str(cfg), "--out", str(tmp_path)]) == 0


def test_version_flag():
    proc = run_script("--version")
    assert proc.returncode == 0 and __version__ in proc.stdout
