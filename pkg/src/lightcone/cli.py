"""Command-line front end.

    lightcone envelope CONFIG [--out-dir DIR]
    lightcone simulate CONFIG [--out-dir DIR]
    lightcone verify   CONFIG [--out-dir DIR]
    lightcone sweep    CONFIG [--out-dir DIR]

The output directory is taken from ``--out-dir``, else the environment
variable ``LIGHTCONE_OUT_DIR``, else ``output.directory`` in the config, else
``./lightcone_out``.

Exit codes: 0 all gated checks pass, 1 a check failed (or the integrator did
not converge), 2 config/usage error, 3 resource limit exceeded.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import export
from .envelope import analytic_density_bound, envelope_curve, make_params
from .krylov import KrylovError
from .verify import ConfigError, ResourceLimitError, run_experiment, simulate

log = logging.getLogger("lightcone")

OUT_ENV = "LIGHTCONE_OUT_DIR"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3


def _out_dir(raw: dict, override: str | None) -> Path:
    d = override or os.environ.get(OUT_ENV) or raw.get("output", {}).get("directory") \
        or "lightcone_out"
    p = Path(d)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _formats(raw: dict) -> set[str]:
    return set(raw.get("output", {}).get("formats", ["csv", "json", "txt"]))


def cmd_envelope(raw: dict, out: Path) -> int:
    lat = cfgmod.make_lattice(raw["lattice"])
    model = cfgmod.make_model(raw, lat)
    params = make_params(lat, model.tau.tau_max)
    times = cfgmod.time_grid(raw)
    alpha0 = cfgmod.initial_densities(raw, lat.num_sites, len(model.species))
    R = cfgmod.region(raw) or tuple(int(j) for j in np.flatnonzero(alpha0 > 0)) or (0,)
    gamma = envelope_curve(lat, params.tau_max, alpha0, times)
    bound = analytic_density_bound(params, alpha0.sum(), lat.distance_to_region(R)[None, :],
                                   times[:, None])
    export.write_json(out / "constants.json", params.as_dict())
    if "csv" in _formats(raw):
        export.write_envelope_csv(out / "envelope.csv", times, gamma, bound)
    log.info("envelope: v=%s written to %s", export.fmt(params.v), out)
    return EXIT_OK


def cmd_simulate(raw: dict, out: Path) -> int:
    exp = cfgmod.to_experiment(raw)
    trace = simulate(exp)
    fmts = _formats(raw)
    if "csv" in fmts:
        export.write_trace_csv(out / "trace.csv", trace)
    if "json" in fmts:
        (out / "trace.json").write_text(export.trace_json(trace, raw))
    return EXIT_OK


def _verify_into(raw: dict, out: Path):
    exp = cfgmod.to_experiment(raw)
    trace, report = run_experiment(exp)
    env = report.envelopes
    fmts = _formats(raw)
    export.write_json(out / "constants.json", report.params.as_dict())
    if "csv" in fmts:
        export.write_trace_csv(out / "trace.csv", trace)
        export.write_envelope_csv(out / "envelope.csv", trace.times, env.gamma_total,
                                  env.cone_total)
    if "json" in fmts:
        (out / "report.json").write_text(report.to_json())
    if "txt" in fmts:
        (out / "report.txt").write_text(report.to_text())
    return report


def cmd_verify(raw: dict, out: Path) -> int:
    report = _verify_into(raw, out)
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _sweep_one(args):
    raw, parameter, value, out = args
    run_raw = cfgmod.with_parameter(raw, parameter, value)
    out.mkdir(parents=True, exist_ok=True)
    report = _verify_into(run_raw, out)
    v = report.velocity
    v_emp = None if v is None else v.v_emp
    return {"value": value, "v_emp": v_emp,
            "fit_residual": None if v is None else v.residual,
            "v_bound": report.params.v,
            "looseness": None if not v_emp else report.params.v / v_emp,
            "velocity_status": "none" if v is None else v.status,
            "passed": report.passed}


def cmd_sweep(raw: dict, out: Path) -> int:
    if "sweep" not in raw:
        raise ConfigError("config error at sweep: sweep block required")
    parameter, values = raw["sweep"]["parameter"], raw["sweep"]["values"]
    jobs = [(raw, parameter, float(v), out / f"run_{i:03d}") for i, v in enumerate(values)]
    for _, _, v, _ in jobs:
        cfgmod.with_parameter(raw, parameter, v)   # validate every value up front
    workers = min(len(jobs), os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    cols = ["value", "v_emp", "fit_residual", "v_bound", "looseness", "velocity_status",
            "passed"]

    def cell(x):
        if x is None:
            return ""
        if isinstance(x, bool):
            return "true" if x else "false"
        if isinstance(x, float):
            return export.fmt(x)
        return str(x)

    lines = [",".join([parameter] + cols[1:])]
    lines += [",".join(cell(r[c]) for c in cols) for r in rows]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_CHECK_FAILED


COMMANDS = {"envelope": cmd_envelope, "simulate": cmd_simulate, "verify": cmd_verify,
            "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lightcone",
                                 description="Light-cone bounds for interacting lattice particles")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="JSON run config")
    ap.add_argument("--out-dir", help=f"output directory (overrides ${OUT_ENV} and config)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = cfgmod.load(args.config)
        out = _out_dir(raw, args.out_dir)
        return COMMANDS[args.command](raw, out)
    except ResourceLimitError as e:
        print(f"resource limit: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except KrylovError as e:
        print(f"integrator failure: {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (ConfigError, ValueError, OSError) as e:
        print(f"{args.config}: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
