"""Quench driver and scan orchestration.

A quench starts from the ground state at ``h_start`` (disordered side),
ramps the transverse field linearly at rate ``s`` down to ``h_end`` and
measures kink observables along the way and at the end.
"""

from __future__ import annotations

import ast
import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import exact, models, mps
from .observables import DEFAULT_KINDS, KINDS, KinkProfile, kink_profiles, windowed_density
from .schedule import SweepSchedule

logger = logging.getLogger(__name__)

CENTRAL_FRACTION = 0.45
SCAN_COLUMNS = ("run_id", "family", "L", "D", "preset", "h_e", "rate", "kind", "density",
                "density_windowed_f45", "discarded_weight_max", "steps")


class QuenchError(RuntimeError):
    pass


@dataclass
class Measurement:
    step: int
    t: float
    h: float
    densities: dict
    max_bond: int = 1
    discarded_weight: float = 0.0


@dataclass
class QuenchResult:
    spec: models.ModelSpec
    schedule: SweepSchedule
    engine: str
    series: list
    profiles: dict            # h_e -> {kind: KinkProfile}; includes checkpoints
    final_state: object = None
    initial_energy: float = None
    max_step_discarded: float = 0.0
    cumulative_discarded: float = 0.0
    max_bond: int = 1
    steps: int = 0
    runtime: float = 0.0

    @property
    def final_profiles(self):
        return self.profiles[self.schedule.h_end]

    def density(self, kind, h_e=None, fraction=None):
        prof = self.profiles[self.schedule.h_end if h_e is None else h_e][kind]
        return prof.density if not fraction else windowed_density(prof, fraction)


def _default_kinds(spec, kinds):
    return tuple(kinds) if kinds else DEFAULT_KINDS[spec.family]


def initial_state(spec, h, params, engine):
    if engine == "exact":
        return exact.ground_state_exact(spec, h)
    psi, energy, converged = mps.dmrg_ground_state(spec, h, params)
    if not converged:
        raise QuenchError(f"DMRG did not converge at h_start={h}")
    return psi, energy


def run_quench(spec, schedule, params=None, engine="mps", initial=None, final_kinds=None,
               snapshot_path=None):
    """Run one linear quench.

    Parameters
    ----------
    spec : ModelSpec
    schedule : SweepSchedule
    params : EngineParams
        Bond dimension, cutoff and the MPS time step.  ``schedule.dt`` sets the
        step grid for both engines.
    engine : {"mps", "exact"}
    initial : (state, energy), optional
        Precomputed ground state at ``schedule.h_start``.
    final_kinds : sequence of str, optional
        Observables profiled at checkpoints and at the end (default: every
        kind defined for the family).
    """
    params = params or mps.EngineParams()
    if engine not in ("mps", "exact"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "mps" and spec.topology != "open":
        raise ValueError("the MPS engine requires an open chain; use engine='exact'")
    series_kinds = _default_kinds(spec, schedule.observables)
    final_kinds = tuple(final_kinds) if final_kinds else KINDS[spec.family]
    t0 = time.perf_counter()
    state, energy = initial if initial is not None else initial_state(
        spec, schedule.h_start, params, engine)
    if engine == "mps":
        state = state.copy()

    result = QuenchResult(spec, schedule, engine, [], {}, initial_energy=energy)

    def measure(step, t, h, kinds):
        profs = kink_profiles(state, kinds, spec.family)
        bond = max(state.bond_dims) if engine == "mps" else 1
        dw = state.discarded_weight if engine == "mps" else 0.0
        result.series.append(Measurement(step, t, h, {k: p.density for k, p in profs.items()},
                                         bond, dw))
        return profs

    if schedule.measurement_stride:
        measure(0, 0.0, schedule.h_start, series_kinds)

    if engine == "exact":
        H = exact.DenseHamiltonian(spec)
        amps = state.amplitudes.copy()
    for step in schedule.steps():
        if engine == "mps":
            _, rep = mps.tebd_sweep_step(state, spec, step.h_mid, params, dt=step.dt)
            result.max_step_discarded = max(result.max_step_discarded, rep.total_discarded)
            result.max_bond = max(result.max_bond, rep.max_bond)
            if not all(np.all(np.isfinite(t)) for t in state.tensors[max(0, state.center - 1):state.center + 2]):
                raise QuenchError(f"non-finite state at step {step.index}")
        else:
            amps = exact.propagate(H, amps, schedule.field, step.t, step.t + step.dt,
                                   exact.RK4_SUBSTEPS)
            if not np.all(np.isfinite(amps)):
                raise QuenchError(f"non-finite state at step {step.index}")
            state = exact.DenseState(amps, spec)
        if step.checkpoint:
            kinds = tuple(dict.fromkeys(final_kinds + series_kinds))
            profs = measure(step.index + 1, step.t + step.dt, step.h_after, kinds)
            result.profiles[step.h_after] = profs
        elif step.measure and schedule.measurement_stride:
            measure(step.index + 1, step.t + step.dt, step.h_after, series_kinds)
    result.steps = schedule.n_steps
    result.final_state = state
    if engine == "mps":
        result.cumulative_discarded = state.discarded_weight
    result.runtime = time.perf_counter() - t0
    if snapshot_path is not None and engine == "mps":
        mps.save_snapshot(snapshot_path, state, {
            "spec": spec_dict(spec), "schedule": asdict(schedule), "params": asdict(params)})
    return result


# ----------------------------------------------------------------- rate scans


def spec_dict(spec):
    return {"family": spec.family, "L": spec.L, "J": spec.J, "edge_fields": spec.edge_fields,
            "topology": spec.topology, "preset": spec.preset}


@dataclass
class ScanRow:
    rate: float
    h_e: float
    densities: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)   # kind -> ndarray
    discarded_weight_max: float = 0.0
    cumulative_discarded: float = 0.0
    max_bond: int = 0
    steps: int = 0
    runtime: float = 0.0
    run_id: str = ""
    error: str = None
    series: list = field(default_factory=list)

    @property
    def ok(self):
        return self.error is None


def _provenance_line(fh, provenance):
    if provenance:
        fh.write(f"# {json.dumps(provenance, sort_keys=True, default=str)}\n")


@dataclass
class RateScanTable:
    """Final kink densities versus sweep rate plus run metadata."""

    family: str
    L: int
    D: int
    preset: str
    rows: list = field(default_factory=list)

    def sorted(self):
        return replace(self, rows=sorted(self.rows, key=lambda r: r.rate))

    @property
    def ok_rows(self):
        return [r for r in self.rows if r.ok]

    @property
    def rates(self):
        return np.array([r.rate for r in self.ok_rows])

    def densities(self, kind, fraction=None):
        if fraction is None:
            return np.array([r.densities[kind] for r in self.ok_rows])
        return np.array([self.profile(r, kind).windowed(fraction) for r in self.ok_rows])

    def profile(self, row, kind):
        values = np.asarray(row.profiles[kind])
        return KinkProfile(kind, values, self.L, per_site=len(values) == self.L)

    def to_csv(self, path, provenance=None):
        """Write one line per (row, kind); ``provenance`` goes on a leading ``#`` line."""
        with open(path, "w", newline="") as fh:
            _provenance_line(fh, provenance)
            writer = csv.writer(fh)
            writer.writerow(SCAN_COLUMNS)
            for row in self.rows:
                if not row.ok:
                    continue
                for kind, value in row.densities.items():
                    central = self.profile(row, kind).windowed(CENTRAL_FRACTION) \
                        if kind in row.profiles else float("nan")
                    writer.writerow([row.run_id, self.family, self.L, self.D, self.preset,
                                     repr(row.h_e), repr(row.rate), kind, repr(value),
                                     repr(central), repr(row.discarded_weight_max), row.steps])

    @classmethod
    def from_csv(cls, path, kind=None):
        """Read a scan CSV back into a table (profiles are not stored)."""
        with open(path, newline="") as fh:
            reader = csv.reader(line for line in fh if not line.startswith("#"))
            header = next(reader, None)
            if header is None:
                raise ValueError(f"{path}: empty file")
            if tuple(header) != SCAN_COLUMNS:
                raise ValueError(f"{path}: columns {header} do not match the scan schema")
            records = list(reader)
        if not records:
            raise ValueError(f"{path}: no data rows")
        table = None
        rows = {}
        for rec in records:
            run_id, family, L, D, preset, h_e, rate, k, dens, central, dw, steps = rec
            if table is None:
                table = cls(family, int(L), int(D), preset)
            if kind is not None and k != kind:
                continue
            key = (run_id, float(rate), float(h_e))
            row = rows.setdefault(key, ScanRow(float(rate), float(h_e), run_id=run_id,
                                               discarded_weight_max=float(dw), steps=int(steps)))
            row.densities[k] = float(dens)
            row.densities[f"{k}@f45"] = float(central)
        table.rows = list(rows.values())
        return table

    def profiles_to_csv(self, path, provenance=None):
        """Final kink profiles: one line per (run, kind, position), 1-based positions."""
        with open(path, "w", newline="") as fh:
            _provenance_line(fh, provenance)
            writer = csv.writer(fh)
            writer.writerow(("run_id", "rate", "h_e", "kind", "position", "value"))
            for row in self.ok_rows:
                for kind in row.profiles:
                    prof = self.profile(row, kind)
                    for pos, val in zip(prof.positions, prof.values):
                        writer.writerow([row.run_id, repr(row.rate), repr(row.h_e), kind,
                                         int(pos), repr(float(val))])

    def series_to_csv(self, path, provenance=None):
        """Density time series recorded during each ramp."""
        with open(path, "w", newline="") as fh:
            _provenance_line(fh, provenance)
            writer = csv.writer(fh)
            writer.writerow(("run_id", "rate", "step", "t", "h", "kind", "density",
                             "max_bond", "discarded_weight"))
            for row in self.ok_rows:
                for m in row.series:
                    for kind, val in m.densities.items():
                        writer.writerow([row.run_id, repr(row.rate), m.step, repr(m.t),
                                         repr(m.h), kind, repr(val), m.max_bond,
                                         repr(m.discarded_weight)])

    def row_records(self):
        """Per-run JSON-ready dictionaries (configuration echo, results, diagnostics)."""
        out = []
        for row in self.rows:
            out.append({
                "run_id": row.run_id, "family": self.family, "L": self.L, "D": self.D,
                "preset": self.preset, "rate": row.rate, "h_e": row.h_e,
                "densities": row.densities, "error": row.error,
                "diagnostics": {"discarded_weight_max": row.discarded_weight_max,
                                "cumulative_discarded": row.cumulative_discarded,
                                "max_bond": row.max_bond, "steps": row.steps,
                                "runtime": row.runtime}})
        return out


def run_id_for(spec, schedule, params, engine):
    blob = json.dumps([spec_dict(spec), asdict(schedule), asdict(params), engine],
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _row_from_result(result, h_e, run_id):
    profs = result.profiles[h_e]
    return ScanRow(
        rate=result.schedule.rate, h_e=h_e,
        densities={k: p.density for k, p in profs.items()},
        profiles={k: p.values for k, p in profs.items()},
        discarded_weight_max=result.max_step_discarded,
        cumulative_discarded=result.cumulative_discarded,
        max_bond=result.max_bond, steps=result.steps, runtime=result.runtime, run_id=run_id,
        series=result.series if h_e == result.schedule.h_end else [])


def _scan_job(args):
    spec, schedule, params, engine, initial, final_kinds, snapshot_path = args
    run_id = run_id_for(spec, schedule, params, engine)
    try:
        res = run_quench(spec, schedule, params, engine, initial=initial, final_kinds=final_kinds,
                         snapshot_path=snapshot_path)
    except (QuenchError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        logger.error("run %s (rate %g) failed: %s", run_id, schedule.rate, exc)
        return [ScanRow(schedule.rate, h, run_id=run_id, error=str(exc)) for h in schedule.targets]
    logger.info("rate %.4g done in %.1fs (max bond %d, max discarded %.2e)",
                schedule.rate, res.runtime, res.max_bond, res.max_step_discarded)
    return [_row_from_result(res, h, run_id) for h in schedule.targets]


def _run_jobs(jobs, n_workers):
    """Yield job results in input order as they complete."""
    if n_workers and n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            yield from pool.map(_scan_job, jobs)
    else:
        for job in jobs:
            yield _scan_job(job)


# ------------------------------------------------------------- result cache


_SIMULATION_MODULES = ("tensor", "models", "mps", "exact", "observables", "schedule", "protocol")


def _strip_docstrings(tree):
    for node in ast.walk(tree):
        body = getattr(node, "body", None)
        if (isinstance(body, list) and body and isinstance(body[0], ast.Expr)
                and isinstance(body[0].value, ast.Constant) and isinstance(body[0].value.value, str)):
            node.body = body[1:] or [ast.Pass()]
    return tree


@lru_cache(maxsize=1)
def code_fingerprint():
    """Hash of the simulation code (syntax tree without docstrings or comments).

    Cached results are only reused by code that computes them identically.
    """
    h = hashlib.sha256()
    here = Path(__file__).parent
    for name in _SIMULATION_MODULES:
        tree = _strip_docstrings(ast.parse((here / f"{name}.py").read_text(encoding="utf-8")))
        h.update(name.encode())
        h.update(ast.dump(tree).encode())
    return h.hexdigest()[:12]


def _row_to_json(row):
    d = asdict(row)
    d["profiles"] = {k: np.asarray(v).tolist() for k, v in row.profiles.items()}
    return d


def _row_from_json(d):
    d = dict(d)
    d["profiles"] = {k: np.asarray(v, dtype=float) for k, v in d["profiles"].items()}
    d["series"] = [Measurement(**m) for m in d["series"]]
    return ScanRow(**d)


def _cache_path(cache_dir, run_id):
    return Path(cache_dir) / f"{run_id}-{code_fingerprint()}.json"


def _cache_load(cache_dir, run_id):
    if cache_dir is None:
        return None
    path = _cache_path(cache_dir, run_id)
    if not path.exists():
        return None
    try:
        with open(path, encoding="utf-8") as fh:
            return [_row_from_json(r) for r in json.load(fh)]
    except (ValueError, TypeError, KeyError) as exc:
        logger.warning("ignoring unreadable cache entry %s: %s", path, exc)
        return None


def _cache_store(cache_dir, run_id, rows):
    if cache_dir is None or not all(r.ok for r in rows):
        return
    path = _cache_path(cache_dir, run_id)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump([_row_to_json(r) for r in rows], fh,
                  default=lambda o: o.item() if isinstance(o, np.generic) else str(o))
    tmp.replace(path)


def _validate_rates(rates):
    rates = [float(r) for r in rates]
    if any(not r > 0 for r in rates):
        raise ValueError("sweep rates must be positive")
    return rates


def run_rate_scan(spec, rates, template=None, params=None, engine="mps", final_kinds=None,
                  n_workers=1, initial=None, cache_dir=None):
    """One quench per rate; failures are recorded per row and the scan continues.

    The ground state at ``h_start`` is computed once and shared by all rows.
    """
    template = template or SweepSchedule(rate=1.0, measurement_stride=0)
    tables = run_scan(spec, rates, template, params, engine, final_kinds, n_workers, initial,
                      cache_dir)
    return tables[template.h_end]


def run_scan(spec, rates, template=None, params=None, engine="mps", final_kinds=None,
             n_workers=1, initial=None, cache_dir=None, snapshot_dir=None):
    """Rate scan returning one table per target field (checkpoints and ``h_end``).

    With ``cache_dir`` every completed run is stored under its run id and
    reused by later scans with the same configuration and package code.
    """
    rates = _validate_rates(rates)
    template = template or SweepSchedule(rate=1.0, measurement_stride=0)
    params = params or mps.EngineParams()
    results, pending = {}, []
    for r in rates:
        sched = replace(template, rate=r)
        run_id = run_id_for(spec, sched, params, engine)
        cached = _cache_load(cache_dir, run_id)
        if cached is not None:
            results[r] = cached
        else:
            snap = None if snapshot_dir is None else str(Path(snapshot_dir) / f"{run_id}.npz")
            pending.append((r, run_id, (spec, sched, params, engine, None, final_kinds, snap)))
    if pending:
        if snapshot_dir is not None:
            Path(snapshot_dir).mkdir(parents=True, exist_ok=True)
        if initial is None:
            initial = initial_state(spec, template.h_start, params, engine)
        jobs = [job[:4] + (initial,) + job[5:] for _, _, job in pending]
        for (r, run_id, _), rows in zip(pending, _run_jobs(jobs, n_workers)):
            _cache_store(cache_dir, run_id, rows)
            results[r] = rows
    tables = {h: RateScanTable(spec.family, spec.L, params.max_bond, spec.preset)
              for h in template.targets}
    for r in rates:
        for row in results[r]:
            tables[row.h_e].rows.append(row)
    return tables


def run_endpoint_scan(spec, endpoints, rates, template=None, params=None, n_workers=1,
                      final_kinds=None, cache_dir=None):
    """Rate scans for several endpoints ``h_e`` from shared trajectories.

    Each rate runs once down to the lowest endpoint; higher endpoints are
    checkpoints of the same ramp.  Returns ``{h_e: RateScanTable}``.
    """
    endpoints = sorted({float(h) for h in endpoints}, reverse=True)
    if any(h >= 1.0 for h in endpoints):
        raise ValueError("endpoints must lie in the ordered phase (h_e < 1)")
    template = template or SweepSchedule(rate=1.0, measurement_stride=0)
    template = replace(template, h_end=endpoints[-1], checkpoints=tuple(endpoints[:-1]))
    engine = "exact" if spec.topology == "periodic" else "mps"
    return run_scan(spec, rates, template, params, engine, final_kinds, n_workers,
                    cache_dir=cache_dir)


def run_boundary_scan(family, L, presets, rates, template=None, params=None, n_workers=1,
                      final_kinds=None, cache_dir=None):
    """Rate scans per boundary preset; returns ``{preset: RateScanTable}``."""
    out = {}
    for preset in presets:
        spec = models.ModelSpec.from_preset(family, L, preset)
        engine = "exact" if spec.topology == "periodic" else "mps"
        out[preset] = run_rate_scan(spec, rates, template, params, engine, final_kinds,
                                    n_workers, cache_dir=cache_dir)
    return out
