"""Command-line entry point ``resonance-box``.

Every command reads an INI configuration and writes ``<out>/<command>.csv``
(``scaling`` also writes ``scaling_fit.csv``).  Each file starts with ``#``
lines naming the version, the configuration hash and the full canonical
configuration, so identical inputs give byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from ._parallel import resolve_jobs
from .agmon import agmon_summary
from .config import RunConfig, load_config
from .decoupled import default_lattice, exterior_operator, interior_operator
from .eigensolve import (
    build_operator,
    eigenvalues_below,
    extrapolated_eigenvalues,
    resolution_spacing,
)
from .errors import (
    ConfigError,
    ConfigurationError,
    DomainError,
    NumericalError,
    RegimeError,
    ResonanceBoxError,
    SearchError,
    StudyError,
)
from .semiclassics import resonance_report, run_scaling_study
from .sweep import classify_branches, detect_avoided_crossings, refine_all, sweep_eigenvalues
from .wkb import numerical_exterior_eigenvalues, predict_exterior_eigenvalue

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_DOMAIN = 4


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(path: Path, config: RunConfig, header, rows, timestamp: bool = False) -> None:
    lines = [f"# resonance-box {__version__} config-hash={config.config_hash()}"]
    if timestamp:
        lines.append(f"# generated {datetime.now(timezone.utc).isoformat(timespec='seconds')}")
    lines += [f"# {line}" if line else "#" for line in config.serialize().splitlines()]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _e_max(config: RunConfig) -> float:
    model = config.model()
    return max(model.barrier_tops()) if config.kind.endswith("_barriers") else model.v0 + 1.0


def _lattice(config: RunConfig, geometry):
    return default_lattice(
        config.model(), geometry, config.hbar, _e_max(config), config.points_per_wavelength
    )


def cmd_spectrum(config: RunConfig, jobs: int):
    model, hbar = config.model(), config.hbar
    interval = (-config.ell_min, config.ell_min)
    v_min = min(model.v_minus, model.v_plus, model.v0)
    e_top = _e_max(config)
    # second pass when the requested levels climb above the default energy scale
    for _ in range(2):
        h = resolution_spacing(hbar, e_top, v_min, config.points_per_wavelength)
        n = max(int(math.ceil((interval[1] - interval[0]) / h)), 2 * config.k)
        raw = eigenvalues_below(build_operator(model, interval, hbar, 2 * n), config.k)
        if raw[-1] <= e_top:
            break
        e_top = float(raw[-1])
    extrap = extrapolated_eigenvalues(model, interval, hbar, config.k, n)
    rows = [(i, float(e), float(x)) for i, (e, x) in enumerate(zip(raw, extrap))]
    return {"spectrum": (("index", "energy", "extrapolated"), rows)}


def cmd_decoupled(config: RunConfig, jobs: int):
    model, hbar = config.model(), config.hbar
    geometry = config.geometry(config.ell_min)
    lat = _lattice(config, geometry)
    ops = [
        ("interior", interior_operator(model, geometry, hbar, lat)),
        ("left", exterior_operator(model, geometry, hbar, "left", lat)),
        ("right", exterior_operator(model, geometry, hbar, "right", lat)),
    ]
    rows = []
    for family, op in ops:
        for i, e in enumerate(eigenvalues_below(op, min(config.k, op.n))):
            rows.append((family, i, float(e)))
    return {"decoupled": (("family", "index", "energy"), rows)}


def cmd_agmon(config: RunConfig, jobs: int):
    model = config.model()
    m = agmon_summary(model, config.geometry(config.ell_min))
    header = ("d_minus", "d_plus", "d_star", "d_omega_minus", "d_omega_plus", "x0", "v0")
    row = (m.d_minus, m.d_plus, m.d_star, m.d_omega_minus, m.d_omega_plus, model.x0, model.v0)
    return {"agmon": (header, [tuple(float(v) for v in row)])}


def _branches(config: RunConfig, jobs: int):
    geometry = config.geometry()
    branches = sweep_eigenvalues(
        config.model(), geometry, config.hbar, (config.ell_min, config.ell_max),
        config.n_ell, config.k, _lattice(config, geometry), config.spacing, jobs,
    )
    return classify_branches(branches, jobs=jobs)


def cmd_sweep(config: RunConfig, jobs: int):
    rows = list(_branches(config, jobs).rows())
    return {"sweep": (("ell", "slot", "energy", "classification"), rows)}


def _refine_options(config: RunConfig) -> dict:
    return {
        "budget": config.refine_budget,
        "rtol": config.refine_rtol,
        "delta_c": config.delta_c,
        "delta_n": config.delta_n,
    }


def cmd_crossings(config: RunConfig, jobs: int):
    branches = _branches(config, jobs)
    reports = refine_all(branches, detect_avoided_crossings(branches), jobs, **_refine_options(config))
    header = (
        "ell_star", "center_energy", "gap", "side", "interior_index", "delta", "agmon_d",
        "ell0", "bracket_width", "flagged",
    )
    rows = [
        (r.ell_star, r.center_energy, r.gap, r.side, r.interior_index, r.delta_isolation,
         r.agmon_prediction, r.ell0, r.width, r.flagged)
        for r in reports
    ]
    return {"crossings": (header, rows)}


def cmd_wkb(config: RunConfig, jobs: int):
    model, hbar = config.model(), config.hbar
    geometry = config.geometry(config.ell_max)
    rows = []
    for side in ("left", "right"):
        numeric = numerical_exterior_eigenvalues(model, geometry, hbar, side, max(config.wkb_levels, 1))
        for n in range(config.wkb_levels):
            try:
                e_wkb = predict_exterior_eigenvalue(model, geometry, hbar, side, n)
            except (SearchError, RegimeError):
                e_wkb = math.nan
            e_num = float(numeric[n])
            rows.append((side, n, e_wkb, e_num, abs(e_wkb - e_num)))
    return {"wkb": (("side", "n", "E_wkb", "E_numeric", "abs_err"), rows)}


def cmd_scaling(config: RunConfig, jobs: int):
    t_bound = config.observable == "t_bound"
    geometry = config.tunneling_geometry() if t_bound else config.geometry()
    study = run_scaling_study(
        config.model(), geometry, config.observable, config.hbar_list,
        interior_index=config.interior_index, side=config.side, ell_min=config.ell_min,
        n_ell=config.n_ell, points_per_wavelength=config.points_per_wavelength, jobs=jobs,
        seed=config.seed, refine_options=_refine_options(config),
    )
    rows = [
        (h, study.observable, v, lv, 1.0 / h)
        for h, v, lv in zip(study.hbar_values, study.values, study.log_values)
    ]
    fit = [(
        study.observable, study.side, study.fitted_slope, study.intercept, study.r_squared,
        study.agmon_reference, study.slope_ratio,
    )]
    return {
        "scaling": (("hbar", "observable", "value", "log_value", "inv_hbar"), rows),
        "scaling_fit": (
            ("observable", "side", "slope", "intercept", "r_squared", "agmon_reference", "slope_ratio"),
            fit,
        ),
    }


def cmd_report(config: RunConfig, jobs: int):
    geometry = config.geometry()
    rows = resonance_report(
        config.model(), geometry, config.hbar, config.max_interior_levels,
        (config.ell_min, config.ell_max), config.n_ell, _lattice(config, geometry), jobs,
    )
    header = (
        "interior_index", "e_decoupled", "e_resonance", "gap_left", "gap_right",
        "larger_gap_side", "t_bound", "d_minus", "d_plus", "width_order", "notes",
    )
    return {
        "report": (
            header,
            [(r.interior_index, r.e_decoupled, r.e_resonance, r.gap_left, r.gap_right,
              r.larger_gap_side, r.t_bound, r.d_minus, r.d_plus, r.width_order, r.notes)
             for r in rows],
        )
    }


COMMANDS = {
    "spectrum": (cmd_spectrum, "lowest box eigenvalues at ell_min, raw and extrapolated"),
    "decoupled": (cmd_decoupled, "interior and exterior Dirichlet spectra at ell_min"),
    "agmon": (cmd_agmon, "Agmon distances of the barriers and of the Dirichlet points"),
    "sweep": (cmd_sweep, "classified eigenvalue branches over [ell_min, ell_max]"),
    "crossings": (cmd_crossings, "refined avoided crossings found in the sweep"),
    "wkb": (cmd_wkb, "WKB exterior eigenvalues against the numerical ones at ell_max"),
    "scaling": (cmd_scaling, "log-linear fit of an observable over hbar_list"),
    "report": (cmd_report, "resonance summary per interior level in the regime window"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resonance-box", description="Shape resonances from Dirichlet box spectra."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="INI configuration file")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--jobs", type=int, default=None, help="worker threads (env RESONANCE_BOX_JOBS)")
        p.add_argument("--timestamp", action="store_true", help="add a generation time header line")
    return parser


def _exit_code(exc: ResonanceBoxError) -> int:
    if isinstance(exc, (ConfigError, ConfigurationError)):
        return EXIT_CONFIG
    if isinstance(exc, (DomainError, RegimeError, StudyError)):
        return EXIT_DOMAIN
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_ERROR


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        jobs = resolve_jobs(args.jobs)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        tables = COMMANDS[args.command][0](config, jobs)
        for name, (header, rows) in tables.items():
            write_table(out / f"{name}.csv", config, header, rows, args.timestamp)
    except OSError as exc:
        print(f"resonance-box: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ResonanceBoxError as exc:
        print(f"resonance-box: error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
