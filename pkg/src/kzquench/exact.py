"""Dense state-vector engine for small chains.

The reference path for every other engine: exact ground states, RK4
integration of the Schroedinger equation under the same ramp, and dense
application of the Trotter circuit.  Works for open and periodic chains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import models
from .models import ISING, MAX_EXACT_DIM
from .observables import KinkObservable, kink_profile

RK4_SUBSTEPS = 20


@dataclass
class DenseState:
    amplitudes: np.ndarray
    spec: models.ModelSpec

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.amplitudes.size != self.spec.d**self.spec.L:
            raise ValueError("amplitude vector does not match the chain")

    @classmethod
    def product(cls, spec, vectors):
        if np.ndim(vectors) == 1:
            vectors = [vectors] * spec.L
        psi = np.ones(1, dtype=complex)
        for v in vectors:
            v = np.asarray(v, dtype=complex)
            psi = np.kron(psi, v / np.linalg.norm(v))
        return cls(psi, spec)

    @classmethod
    def from_labels(cls, spec, labels):
        idx = np.ravel_multi_index(tuple(int(x) for x in labels), (spec.d,) * spec.L)
        psi = np.zeros(spec.d**spec.L, dtype=complex)
        psi[idx] = 1.0
        return cls(psi, spec)

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self):
        return np.abs(self.amplitudes) ** 2

    def fidelity(self, other):
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)


def _guard(spec):
    dim = spec.d**spec.L
    if dim > MAX_EXACT_DIM:
        raise ValueError(f"Hilbert space dimension {dim} exceeds the exact-engine guard {MAX_EXACT_DIM}")
    return dim


class DenseHamiltonian:
    """``H(h) = diagonal + h * transverse`` applied without building matrices."""

    def __init__(self, spec):
        _guard(spec)
        self.spec = spec
        self.shape = (spec.d,) * spec.L
        self.diagonal = self._diagonal()

    def _diagonal(self):
        spec = self.spec
        L = spec.L
        labels = np.indices(self.shape).reshape(L, -1)
        pairs = [(i, i + 1) for i in range(L - 1)]
        if spec.topology == "periodic":
            pairs.append((L - 1, 0))
        diag = np.zeros(labels.shape[1])
        if spec.family == ISING:
            z = 1.0 - 2.0 * labels
            for i, j in pairs:
                diag += spec.J * z[i] * z[j]
            if spec.topology == "open":
                diag -= spec.edge_fields[0][0] * z[0] + spec.edge_fields[1][0] * z[L - 1]
        else:
            for i, j in pairs:
                diag -= spec.J * np.where(labels[i] == labels[j], 2.0 / 3.0, -1.0 / 3.0)
            if spec.topology == "open":
                for site, fields in ((0, spec.edge_fields[0]), (L - 1, spec.edge_fields[1])):
                    for a, ha in enumerate(fields):
                        diag -= ha * ((labels[site] == a) - 1.0 / 3.0)
        return diag

    def transverse(self, psi):
        """``-sum_i X_i psi`` (Ising) or ``-sum_i P_i psi`` (Potts)."""
        v = psi.reshape(self.shape)
        out = np.zeros_like(v)
        for i in range(self.spec.L):
            if self.spec.family == ISING:
                out -= np.flip(v, axis=i)
            else:
                out -= v.mean(axis=i, keepdims=True) - v / 3.0
        return out.reshape(-1)

    def apply(self, psi, h):
        return self.diagonal * psi + h * self.transverse(psi)

    def energy(self, psi, h):
        return float(np.vdot(psi, self.apply(psi, h)).real)


def ground_state_exact(spec, h):
    """Lowest eigenpair ``(DenseState, energy)``."""
    dim = _guard(spec)
    if dim <= 512:
        w, v = np.linalg.eigh(models.full_hamiltonian(spec, h))
        return DenseState(v[:, 0], spec), float(w[0])
    H = DenseHamiltonian(spec)
    op = spla.LinearOperator((dim, dim), matvec=lambda x: H.apply(x, h), dtype=complex)
    v0 = np.ones(dim, dtype=complex) / np.sqrt(dim)
    w, v = spla.eigsh(op, k=1, which="SA", v0=v0, tol=1e-14)
    psi = v[:, 0] / np.linalg.norm(v[:, 0])
    return DenseState(psi, spec), float(w[0])


def _rk4_step(H, psi, t, dt, field_at, shift):
    def f(tt, x):
        return -1j * (H.apply(x, field_at(tt)) - shift * x)
    k1 = f(t, psi)
    k2 = f(t + dt / 2, psi + dt / 2 * k1)
    k3 = f(t + dt / 2, psi + dt / 2 * k2)
    k4 = f(t + dt, psi + dt * k3)
    return psi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def propagate(H, psi, field_at, t0, t1, substeps):
    """RK4 from ``t0`` to ``t1`` in ``substeps`` equal substeps.

    A constant energy shift (the energy at ``t0``) is removed from the
    generator; it only changes the global phase and keeps ``|E dt|`` small.
    """
    shift = H.energy(psi, field_at(t0)) / max(np.vdot(psi, psi).real, 1e-300)
    dt = (t1 - t0) / substeps
    for j in range(substeps):
        psi = _rk4_step(H, psi, t0 + j * dt, dt, field_at, shift)
    return psi


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    states: list = field(default_factory=list)
    checkpoint: list = field(default_factory=list)

    @property
    def final(self):
        return self.states[-1]


def evolve_exact(spec, schedule, psi0, substeps=RK4_SUBSTEPS):
    """Integrate the ramp with RK4, ``substeps`` substeps per schedule step.

    Returns a :class:`Trajectory` with the initial state and the states at
    every measurement step (stride, checkpoints and the final step).
    """
    H = DenseHamiltonian(spec)
    psi = psi0.amplitudes.copy()
    traj = Trajectory([0.0], [schedule.h_start], [DenseState(psi, spec)], [False])
    for step in schedule.steps():
        psi = propagate(H, psi, schedule.field, step.t, step.t + step.dt, substeps)
        if step.measure:
            traj.times.append(step.t + step.dt)
            traj.fields.append(step.h_after)
            traj.states.append(DenseState(psi.copy(), spec))
            traj.checkpoint.append(step.checkpoint)
    return traj


def apply_gate_dense(psi, spec, bond, gate):
    d, L = spec.d, spec.L
    v = psi.reshape((d,) * L)
    v = np.tensordot(gate.reshape(d, d, d, d), v, axes=([2, 3], [bond, bond + 1]))
    return np.moveaxis(v, [0, 1], [bond, bond + 1]).reshape(-1)


def evolve_trotter_dense(spec, schedule, psi0):
    """Apply exactly the second-order Trotter circuit of the MPS engine."""
    _guard(spec)
    psi = psi0.amplitudes.copy()
    traj = Trajectory([0.0], [schedule.h_start], [DenseState(psi, spec)], [False])
    for step in schedule.steps():
        for layer in models.trotter_gates(spec, step.h_mid, step.dt):
            for bond, gate in layer:
                psi = apply_gate_dense(psi, spec, bond, gate)
        if step.measure:
            traj.times.append(step.t + step.dt)
            traj.fields.append(step.h_after)
            traj.states.append(DenseState(psi.copy(), spec))
            traj.checkpoint.append(step.checkpoint)
    return traj


def expectation_exact(state, observable):
    """Expectation of a kink observable (total count), a local operator
    ``(sites, matrix)``, or a full ``d**L`` matrix."""
    psi = state.amplitudes
    spec = state.spec
    if isinstance(observable, str):
        observable = KinkObservable(observable, spec.family)
    if isinstance(observable, KinkObservable):
        return kink_profile(state, observable).total
    if isinstance(observable, tuple):
        sites, op = observable
        k = len(sites)
        op = np.asarray(op)
        if op.shape != (spec.d**k, spec.d**k):
            raise ValueError("local operator shape does not match its sites")
        v = psi.reshape((spec.d,) * spec.L)
        w = np.tensordot(op.reshape((spec.d,) * (2 * k)), v,
                         axes=(list(range(k, 2 * k)), list(sites)))
        w = np.moveaxis(w, list(range(k)), list(sites))
        val = np.vdot(v, w)
    else:
        op = observable
        if op.shape != (psi.size, psi.size):
            raise ValueError("operator shape does not match the state")
        val = np.vdot(psi, op @ psi)
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}; operator not Hermitian?")
    return float(val.real)
