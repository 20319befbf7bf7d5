"""Built-in oracle suite: small-system checks that every engine and
observable can be trusted before a long scan is launched."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import exact, models, mps
from .observables import (ADVANCED, ISOLATED, KINDS, STANDARD, classical_counts, kink_profiles)
from .scaling import fit_power_law
from .schedule import SweepSchedule


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""


def _check(name, value, tol, detail=""):
    return CheckResult(name, bool(value <= tol), float(value), float(tol), detail)


def check_classical_taxonomy(L_ising=8, L_potts=6):
    """Projector expectations on every basis state versus the run-length counter."""
    worst = 0.0
    ordering = 0
    for family, L in ((models.ISING, L_ising), (models.POTTS, L_potts)):
        spec = models.ModelSpec.from_preset(family, L, "free")
        for labels in itertools.product(range(spec.d), repeat=L):
            psi = mps.product_state(spec, list(labels))
            got = {k: p.total for k, p in kink_profiles(psi, KINDS[family], family).items()}
            ref = classical_counts(family, labels)
            worst = max(worst, max(abs(got[k] - ref[k]) for k in ref))
            sub = ISOLATED if family == models.ISING else ADVANCED
            ordering += ref[sub] > ref[STANDARD]
    return [_check("kink projectors = classical counts", worst, 1e-12,
                   f"{2**L_ising + 3**L_potts} configurations"),
            _check("refined kinds <= standard", ordering, 0, "violations")]


def check_disordered_state():
    """Closed-form kink densities of the fully disordered product states."""
    out = []
    L = 10
    ising = models.ModelSpec.from_preset(models.ISING, L, "free")
    plus = mps.product_state(ising, "+" * L)
    prof = kink_profiles(plus, (STANDARD,), models.ISING)[STANDARD]
    out.append(_check("Ising |+> standard density 1/2", abs(prof.density - 0.5), 1e-12))
    potts = models.ModelSpec.from_preset(models.POTTS, L, "free")
    lam = mps.product_state(potts, "0" * L)
    prof = kink_profiles(lam, (STANDARD,), models.POTTS)[STANDARD]
    out.append(_check("Potts lambda0 standard density 2/3", abs(prof.density - 2 / 3), 1e-12))
    return out


def check_dmrg(L=8):
    out = []
    params = mps.EngineParams(max_bond=64, sv_cutoff=0.0, dmrg_energy_tol=1e-12)
    for family, h in ((models.ISING, 1.0), (models.POTTS, 1.0)):
        spec = models.ModelSpec.from_preset(family, L if family == models.ISING else 6,
                                            "fixed_symmetric")
        _, e_mps, _ = mps.dmrg_ground_state(spec, h, params)
        _, e_ex = exact.ground_state_exact(spec, h)
        out.append(_check(f"DMRG vs exact ground energy ({family})", abs(e_mps - e_ex), 1e-8))
    return out


def check_cross_engine(sv_cutoff=1e-6, max_bond=64, L=8, rate=0.5):
    """Final densities of an MPS ramp against the exact engine."""
    spec = models.ModelSpec.from_preset(models.ISING, L, "fixed_symmetric")
    sched = SweepSchedule(rate=rate, h_start=2.0, h_end=0.0, dt=0.05, measurement_stride=0)
    params = mps.EngineParams(max_bond=max_bond, sv_cutoff=sv_cutoff, dt=sched.dt)
    psi, _, _ = mps.dmrg_ground_state(spec, sched.h_start, mps.EngineParams(max_bond=64,
                                                                              sv_cutoff=0.0))
    ex0, _ = exact.ground_state_exact(spec, sched.h_start)
    for step in sched.steps():
        mps.tebd_sweep_step(psi, spec, step.h_mid, params, dt=step.dt)
    final = exact.evolve_exact(spec, sched, ex0).final
    kinds = (STANDARD, ISOLATED)
    a = kink_profiles(psi, kinds, spec.family)
    b = kink_profiles(final, kinds, spec.family)
    diff = max(abs(a[k].density - b[k].density) for k in kinds)
    return [_check("MPS vs exact ramp densities", diff, 1e-4,
                   f"cutoff {sv_cutoff:g}, cumulative discarded {psi.discarded_weight:.2e}")]


def check_fit():
    rates = np.geomspace(0.01, 1.0, 12)
    dens = 0.3 * rates**0.5
    fit = fit_power_law(rates, dens)
    scaled = fit_power_law(rates * 7.0, dens * 3.0)
    return [_check("fit recovers exact power law", abs(fit.mu_hat - 0.5), 1e-12),
            _check("fit invariant under rescaling", abs(scaled.mu_hat - fit.mu_hat), 1e-12)]


def run_checks(sv_cutoff=1e-6, max_bond=64):
    results = []
    results += check_classical_taxonomy()
    results += check_disordered_state()
    results += check_dmrg()
    results += check_cross_engine(sv_cutoff=sv_cutoff, max_bond=max_bond)
    results += check_fit()
    return results


def format_table(results):
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  status  {'value':>10}  {'tol':>8}  detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  "
                     f"{r.value:>10.2e}  {r.tolerance:>8.1e}  {r.detail}")
    return "\n".join(lines)
