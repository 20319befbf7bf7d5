"""Command-line interface: ``kzquench run|fit|verify|inspect``."""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, models, mps, protocol, scaling, verify
from .config import ConfigError, load_config
from .observables import DEFAULT_KINDS
from .schedule import SweepSchedule

OUTPUT_ROOT_ENV = "KZQUENCH_OUTPUT_ROOT"
THEORY = {models.ISING: scaling.ISING_MU, models.POTTS: scaling.POTTS_MU}

logger = logging.getLogger("kzquench")


def output_dir(directory):
    root = os.environ.get(OUTPUT_ROOT_ENV)
    path = Path(root) / directory if root and not Path(directory).is_absolute() else Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return str(obj)


def parse_window(text):
    """``"a..b"`` -> (a, b) inclusive row indices."""
    try:
        a, b = text.split("..")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like 'a..b', got {text!r}") from None


def fit_table(table, kind, window=None, min_points=5, slope_tol=0.1):
    """Detect (or use) the fit window and fit one kind; returns a report dict."""
    rates, dens = table.rates, table.densities(kind)
    theory = THEORY.get(table.family)
    report = {"family": table.family, "L": table.L, "D": table.D, "preset": table.preset,
              "kind": kind, "rates": rates.tolist(), "densities": dens.tolist()}
    if window is None:
        det = scaling.detect_kz_window(rates, dens, min_points=min_points, slope_tol=slope_tol)
        report["detection"] = asdict(det)
        if not det.found:
            report["fit"] = None
            return report
        window = det.indices
    fit = scaling.fit_power_law(rates, dens, window=window, theory=theory)
    report["fit"] = fit.to_dict()
    report["window_rates"] = [float(rates[window[0]]), float(rates[window[1]])]
    return report


# ----------------------------------------------------------------------- run


def _label(L, D, preset, h_e):
    return f"L{L}_D{D}_{preset}_he{h_e:+.2f}"


def cmd_run(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for line in exc.diagnostics:
            print(line, file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return 2
    out = output_dir(args.output or cfg.output.directory)
    workers = args.workers or cfg.output.workers or os.cpu_count() or 1
    resolved = cfg.model_dump(mode="json")
    resolved["config_hash"] = cfg.config_hash()
    resolved["version"] = __version__
    _write_json(out / "resolved_config.json", resolved)

    sch, eng, ana = cfg.schedule, cfg.engine, cfg.analysis
    endpoints = sorted(set(sch.endpoint_list()), reverse=True)
    template = SweepSchedule(rate=1.0, h_start=sch.h_start, h_end=endpoints[-1], dt=sch.dt,
                             measurement_stride=sch.measurement_stride,
                             observables=tuple(ana.kinds) if ana.kinds else None,
                             checkpoints=tuple(endpoints[:-1]))
    base_provenance = {"package": "kzquench", "version": __version__,
                       "config_hash": resolved["config_hash"], "engine": eng.kind,
                       "code": protocol.code_fingerprint()}
    status = 0
    rows_dir = out / "rows"
    rows_dir.mkdir(exist_ok=True)
    summary = []
    for L, D, preset in itertools.product(cfg.model.lengths(), eng.bond_dims(),
                                          cfg.model.preset_names()):
        spec = cfg.model.spec(L, preset)
        params = mps.EngineParams(max_bond=D, sv_cutoff=eng.sv_cutoff, dt=sch.dt,
                                  dmrg_energy_tol=eng.dmrg_energy_tol,
                                  dmrg_max_sweeps=eng.dmrg_max_sweeps)
        logger.info("scan %s L=%d preset=%s (%d rates)", spec.family, L, preset,
                    len(sch.rate_list()))
        try:
            tables = protocol.run_scan(
                spec, sch.rate_list(), template, params, eng.kind, n_workers=workers,
                cache_dir=out / "cache",
                snapshot_dir=out / "snapshots" if cfg.output.snapshots else None)
        except protocol.QuenchError as exc:
            print(f"L={L} D={D} {preset}: {exc}", file=sys.stderr)
            status = 1
            continue
        for h_e, table in tables.items():
            label = _label(L, D, preset, h_e)
            provenance = dict(base_provenance, h_e=h_e)
            table.to_csv(out / f"scan_{label}.csv", provenance)
            table.profiles_to_csv(out / f"profiles_{label}.csv", provenance)
            if sch.measurement_stride and h_e == template.h_end:
                table.series_to_csv(out / f"series_{label}.csv", provenance)
            for rec in table.row_records():
                rec["provenance"] = provenance
                rec["config"] = resolved
                _write_json(rows_dir / f"{label}_{rec['run_id']}.json", rec)
            failed = [r for r in table.rows if not r.ok]
            for r in failed:
                print(f"{label}: rate {r.rate:g} failed: {r.error}", file=sys.stderr)
            if failed:
                status = 1
            if ana.fit:
                status = max(status, _fit_outputs(out, label, table, ana, summary,
                                                  provenance))
    _write_json(out / "summary.json", {"provenance": base_provenance, "fits": summary})
    for item in summary:
        fit = item.get("fit")
        mu = f"mu={fit['mu_hat']:.4f} +- {fit['stderr']:.4f}" if fit else "no KZ window"
        print(f"{item['label']:<36} {item['kind']:<10} {mu}")
    return status


def _fit_outputs(out, label, table, ana, summary, provenance):
    status = 0
    kinds = ana.kinds or DEFAULT_KINDS[table.family]
    window = tuple(ana.window) if ana.window else None
    theory = THEORY.get(table.family)
    muf = []
    for kind in kinds:
        try:
            report = fit_table(table, kind, window, ana.min_points, ana.slope_tol)
        except ValueError as exc:
            report = {"kind": kind, "fit": None, "error": str(exc)}
        report["label"] = label
        report["provenance"] = provenance
        _write_json(out / f"fit_{label}_{kind}.json", report)
        summary.append(report)
        if report["fit"] is None:
            status = 1
            continue
        win = tuple(report["fit"]["window"])
        for f in ana.fractions:
            try:
                fit = scaling.fit_power_law(table.rates, table.densities(kind, fraction=f or None),
                                            window=win, theory=theory)
            except ValueError as exc:
                logger.warning("%s %s f=%g: %s", label, kind, f, exc)
                continue
            muf.append((f, kind, fit.mu_hat, fit.stderr, fit.r_squared))
    if muf:
        with open(out / f"muf_{label}.csv", "w", encoding="utf-8") as fh:
            fh.write(f"# {json.dumps(provenance, sort_keys=True)}\n")
            fh.write("fraction,kind,mu_hat,stderr,r_squared\n")
            for f, kind, mu, se, r2 in muf:
                fh.write(f"{f!r},{kind},{mu!r},{se!r},{r2!r}\n")
    return status


# ----------------------------------------------------------------------- fit


def cmd_fit(args):
    try:
        table = protocol.RateScanTable.from_csv(args.csv)
    except (OSError, ValueError) as exc:
        print(f"{args.csv}: {exc}", file=sys.stderr)
        return 2
    available = sorted({k for r in table.rows for k in r.densities if "@" not in k})
    kinds = [args.kind] if args.kind else available
    for kind in kinds:
        if kind not in available:
            print(f"{args.csv}: no rows for observable {kind!r} (have {available})",
                  file=sys.stderr)
            return 2
    status = 0
    reports = []
    for kind in kinds:
        sub = protocol.RateScanTable.from_csv(args.csv, kind=kind).sorted()
        try:
            report = fit_table(sub, kind, args.window, args.min_points, args.slope_tol)
        except ValueError as exc:
            print(f"{kind}: {exc}", file=sys.stderr)
            return 2
        reports.append(report)
        fit = report["fit"]
        if fit is None:
            status = 1
            print(f"{kind}: no Kibble-Zurek window ({report['detection']['reason']})")
        else:
            print(f"{kind}: mu = {fit['mu_hat']:.6f} +- {fit['stderr']:.6f}  "
                  f"R^2 = {fit['r_squared']:.6f}  rows {fit['window'][0]}..{fit['window'][1]}  "
                  f"(theory {fit['theory_mu']:.4f}, rel. error {fit['relative_error']:.3%})")
    if args.output:
        _write_json(args.output, reports if len(reports) > 1 else reports[0])
    return status


# -------------------------------------------------------------------- verify


def cmd_verify(args):
    results = verify.run_checks(sv_cutoff=args.sv_cutoff, max_bond=args.max_bond)
    print(verify.format_table(results))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


# ------------------------------------------------------------------- inspect


def cmd_inspect(args):
    try:
        psi, meta = mps.load_snapshot(args.snapshot)
    except (OSError, ValueError, KeyError) as exc:
        print(f"{args.snapshot}: {exc}", file=sys.stderr)
        return 2
    info = {"L": psi.L, "d": psi.d, "center": psi.center, "norm": psi.norm(),
            "bond_dims": psi.bond_dims, "max_bond": max(psi.bond_dims),
            "discarded_weight": psi.discarded_weight, "metadata": meta}
    print(json.dumps(info, indent=2, default=_jsonable))
    return 0


# ---------------------------------------------------------------------- main


def build_parser():
    p = argparse.ArgumentParser(prog="kzquench", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the scans described by a TOML config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None, help="parallel quench processes")
    r.add_argument("--output", default=None, help="output directory (overrides the config)")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("fit", help="fit the KZ exponent of a scan CSV")
    f.add_argument("csv")
    f.add_argument("--window", type=parse_window, default=None, help="row range a..b")
    f.add_argument("--kind", default=None)
    f.add_argument("--min-points", type=int, default=5)
    f.add_argument("--slope-tol", type=float, default=0.1)
    f.add_argument("--output", default=None, help="write the fit report as JSON")
    f.set_defaults(func=cmd_fit)

    v = sub.add_parser("verify", help="run the built-in oracle checks")
    v.add_argument("--sv-cutoff", type=float, default=1e-6)
    v.add_argument("--max-bond", type=int, default=64)
    v.set_defaults(func=cmd_verify)

    i = sub.add_parser("inspect", help="summarize an MPS snapshot")
    i.add_argument("snapshot")
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
