"""Command-line entry point.

    sidsphere lambda-table --out table.csv
    sidsphere simulate --config sim.json --seed 7 --out traj.csv
    sidsphere ensemble --config sim.json --out runs/ --threads 4
    sidsphere rate --config rate.json --format json --out rate.json

Every run writes its outputs atomically together with a manifest
(``<out>.manifest.json``, or ``manifest.json`` inside an output directory)
holding the resolved config, its hash, the seed and a content hash per file.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import gibbs
from .config import COMMANDS, ConfigError, ExperimentSpec, parse_config
from .diagnostics import (
    LIMSUP_NOTE,
    DiagnosticsError,
    band_check,
    estimate_rate,
    shadowing_residual,
)
from .io import (
    SCHEMA_VERSION,
    OutputSet,
    dumps_json,
    find_records,
    read_record,
    record_csv,
    record_json,
    record_sidecar,
    table_csv,
)
from .simulate import resolve_threads, run_ensemble, run_trajectory

log = logging.getLogger("sidsphere")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICS = 3
EXIT_SIMULATION = 4
EXIT_DIAGNOSTICS = 5
EXIT_IO = 6


class PostconditionError(RuntimeError):
    pass


def _default_out(spec: ExperimentSpec) -> Path:
    base = spec.command.replace("-", "_")
    if spec.command == "ensemble":
        return Path(base)
    return Path(f"{base}.{spec.format}")


def _manifest(spec: ExperimentSpec, outputs: OutputSet, seed) -> str:
    return dumps_json({
        "schema_version": SCHEMA_VERSION,
        "command": spec.command,
        "config": spec.echo(),
        "config_hash": spec.config_hash(),
        "seed": seed,
        "outputs": outputs.hashes(),
        "warnings": spec.warnings,
    })


def _lambda_table(spec, out: OutputSet, name: str):
    rows = gibbs.lambda_table(spec.params["ns"])
    cols = ["n", "Lambda", "Lambda_times_n_plus_1", "argmax"]
    if spec.format == "csv":
        out.add(name, table_csv("lambda-table", spec.config_hash(), cols, ([r[c] for c in cols] for r in rows)))
    else:
        out.add(name, dumps_json({"schema_version": SCHEMA_VERSION, "config_hash": spec.config_hash(), "rows": rows}))


def _profile_dump(spec, out: OutputSet, name: str):
    p = spec.params
    rows = gibbs.profile_rows(p["ns"], p["r_max"], p["r_step"])
    for n in p["ns"]:
        rho = np.array([r["rho"] for r in rows if r["n"] == n])
        if np.any(np.diff(rho) <= 0):
            raise PostconditionError(f"rho is not increasing for n={n}")
    cols = ["n", "r", "rho", "lambda"]
    if spec.format == "csv":
        out.add(name, table_csv("profile-dump", spec.config_hash(), cols, ([r[c] for c in cols] for r in rows)))
    else:
        out.add(name, dumps_json({"schema_version": SCHEMA_VERSION, "config_hash": spec.config_hash(), "rows": rows}))


def _simulate(spec, out: OutputSet, name: str):
    rec = run_trajectory(spec.sim_config())
    if spec.format == "csv":
        out.add(name, record_csv(rec))
        out.add(Path(name).with_suffix(".json").name, dumps_json(record_sidecar(rec)))
    else:
        out.add(name, dumps_json(record_json(rec)))
    if rec.failed:
        raise RuntimeError(f"trajectory aborted: {rec.message}")


def _ensemble(spec, out: OutputSet, threads):
    recs = run_ensemble(spec.sim_config(), spec.params["n_seeds"], threads)
    for rec in recs:
        stem = f"seed_{rec.seed}"
        if spec.format == "csv":
            out.add(f"{stem}.csv", record_csv(rec))
            out.add(f"{stem}.json", dumps_json(record_sidecar(rec)))
        else:
            out.add(f"{stem}.json", dumps_json(record_json(rec)))
    failed = [r.seed for r in recs if r.failed]
    if failed:
        raise RuntimeError(f"{len(failed)} trajectories aborted (seeds {failed})")


def _load_records(path):
    files = find_records(path)
    if not files:
        raise DiagnosticsError(f"no trajectory records found at {path}")
    return [read_record(f) for f in files]


def _theory_eta(record) -> Optional[float]:
    """Rate exponent for a classified schedule, or None outside the hypotheses."""
    sched = record.config.schedule
    if not sched.classified:
        return None
    c = sched.constants
    Lam, _ = gibbs.capital_lambda(record.config.n)
    rp = gibbs.rate_eta(c.a, c.gamma, c.beta0, record.config.n, Lam)
    return rp.eta if rp.valid else None


def _rate(spec, out: OutputSet, name: str):
    p = spec.params
    recs = _load_records(p["input"])
    ests = [estimate_rate(r, p["label"], p["window"], p["reference"]) for r in recs]
    slopes = [e.slope for e in ests]
    med = float(np.median(slopes))
    eta = _theory_eta(recs[0])
    band = band_check(med, eta, p["slack"]) if eta is not None else None
    if spec.format == "csv":
        cols = ["seed", "label", "slope", "stderr", "intercept", "t_lo", "t_hi", "n_used", "n_dropped"]
        rows = [[r.seed, e.label, e.slope, e.stderr, e.intercept, *e.window, e.n_used, e.n_dropped]
                for r, e in zip(recs, ests)]
        out.add(name, table_csv("rate", spec.config_hash(), cols, rows))
    else:
        out.add(name, dumps_json({
            "schema_version": SCHEMA_VERSION,
            "config_hash": spec.config_hash(),
            "median_slope": med,
            "estimates": [dict(e.to_dict(), seed=r.seed) for r, e in zip(recs, ests)],
            "eta": eta,
            "band": None if band is None else {"slack": band.slack, "passed": band.passed},
            "note": LIMSUP_NOTE,
        }))


def _shadow(spec, out: OutputSet, name: str):
    p = spec.params
    recs = _load_records(p["input"])
    reps = [shadowing_residual(r, p["label"], p["horizon"], p["fit_window"]) for r in recs]
    if spec.format == "csv":
        cols = ["seed", "t", "log_t", "residual"]
        rows = [[r.seed, t, lt, res] for r, rep in zip(recs, reps)
                for t, lt, res in zip(rep.times, rep.log_times, rep.residuals)]
        out.add(name, table_csv("shadow", spec.config_hash(), cols, rows))
    else:
        out.add(name, dumps_json({
            "schema_version": SCHEMA_VERSION,
            "config_hash": spec.config_hash(),
            "median_exponent": float(np.nanmedian([rep.exponent for rep in reps])),
            "reports": [dict(rep.to_dict(), seed=r.seed) for r, rep in zip(recs, reps)],
        }))


def _classify(spec, out: OutputSet, name: str):
    from .schedules import BetaSchedule

    p = spec.params
    n = p["n"]
    sched = BetaSchedule(**p["schedule"])
    Lam, r_star = gibbs.capital_lambda(n)
    c = sched.constants
    result = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": spec.config_hash(),
        "n": n,
        "schedule": sched.to_dict(),
        "Lambda": Lam,
        "argmax": r_star,
        "constants": {"a": c.a, "gamma": c.gamma, "beta0": c.beta0, "t0": c.t0, "C": c.C},
        "warnings": spec.warnings,
    }
    if sched.kind == "constant":
        reg = gibbs.classify_regime(sched.b, n)
        result["regime"] = reg.regime
        result["regime_exponent"] = reg.exponent
    if sched.classified:
        rp = gibbs.rate_eta(c.a, c.gamma, c.beta0, n, Lam, p["kappa"])
        result["rate"] = {"eta": rp.eta, "kappa": rp.kappa, "valid": rp.valid, "reasons": rp.reasons}
    if spec.format == "csv":
        flat = [("n", n), ("kind", sched.kind), ("b", sched.b), ("Lambda", Lam),
                ("regime", result.get("regime", "")), ("regime_exponent", result.get("regime_exponent", "")),
                ("eta", result.get("rate", {}).get("eta", "")), ("eta_valid", result.get("rate", {}).get("valid", ""))]
        out.add(name, table_csv("classify", spec.config_hash(), ["key", "value"],
                                [[k, "" if v is None else v] for k, v in flat]))
    else:
        out.add(name, dumps_json(result))


def run_command(spec: ExperimentSpec, threads: Optional[int] = None) -> int:
    """Execute a validated experiment, commit its outputs and return the exit status."""
    dest = Path(spec.out) if spec.out else _default_out(spec)
    is_dir = spec.command == "ensemble"
    outputs = OutputSet(dest, directory=is_dir)
    name = dest.name
    seed = spec.params.get("seed")
    for w in spec.warnings:
        log.warning(w)
    try:
        if spec.command == "lambda-table":
            _lambda_table(spec, outputs, name)
        elif spec.command == "profile-dump":
            _profile_dump(spec, outputs, name)
        elif spec.command == "simulate":
            _simulate(spec, outputs, name)
        elif spec.command == "ensemble":
            _ensemble(spec, outputs, threads)
        elif spec.command == "rate":
            _rate(spec, outputs, name)
        elif spec.command == "shadow":
            _shadow(spec, outputs, name)
        elif spec.command == "classify":
            _classify(spec, outputs, name)
    except (gibbs.GibbsError, PostconditionError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERICS
    except DiagnosticsError as exc:
        log.error("%s", exc)
        return EXIT_DIAGNOSTICS
    except RuntimeError as exc:
        log.error("%s", exc)
        return EXIT_SIMULATION
    except (OSError, KeyError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    manifest_name = "manifest.json" if is_dir else f"{name}.manifest.json"
    outputs.add(manifest_name, _manifest(spec, outputs, seed))
    try:
        outputs.commit()
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    print(dest)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sidsphere", description="Self-interacting diffusions on spheres")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON experiment document")
    ap.add_argument("--seed", type=int, help="override the seed (u64)")
    ap.add_argument("--out", help="output file (directory for ensemble)")
    ap.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    ap.add_argument("--csv", action="store_const", const="csv", dest="format", help="same as --format csv")
    ap.add_argument("--threads", type=int, help="worker threads for ensembles (env SID_SPHERE_THREADS)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(levelname)s: %(message)s")
    try:
        text = Path(args.config).read_text() if args.config else "{}"
        import json

        doc = json.loads(text) if text.strip() else {}
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        if args.seed is not None:
            doc["seed"] = args.seed
        if args.out is not None:
            doc["out"] = args.out
        if args.format is not None:
            doc["format"] = args.format
        spec = parse_config(json.dumps(doc), command=args.command)
        threads = resolve_threads(args.threads)
    except (ConfigError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return run_command(spec, threads)


if __name__ == "__main__":
    sys.exit(main())
