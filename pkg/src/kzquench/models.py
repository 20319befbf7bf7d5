"""Antiferromagnetic transverse-field Ising and ferromagnetic 3-state Potts
chains with longitudinal edge fields.

Hamiltonians (``J = 1`` by default, ``hbar = 1``)::

    Ising:  H = J sum_i Z_i Z_{i+1} - h sum_i X_i - hz1 Z_1 - hzL Z_L
    Potts:  H = -J sum_i sum_a P^a_i P^a_{i+1} - h sum_i P_i
                - sum_a (ha1 P^a_1 + haL P^a_L)

with ``P^a = |a><a| - 1/3`` and ``P = |lambda0><lambda0| - 1/3``,
``|lambda0> = (|A> + |B> + |C>)/sqrt(3)``.  The critical point of both
models sits at ``h/J = 1``.

Bonds are 0-based: bond ``b`` couples sites ``b`` and ``b + 1``; a periodic
chain additionally has bond ``L - 1`` coupling sites ``L - 1`` and ``0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .tensor import exp_hermitian

ISING = "ising_afm"
POTTS = "potts3_fm"
FAMILIES = (ISING, POTTS)
TOPOLOGIES = ("open", "periodic")

LOCAL_DIM = {ISING: 2, POTTS: 3}

# Ising basis: |0> = up (Z=+1), |1> = down.  Potts basis: |0>=A, |1>=B, |2>=C.
PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]])
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
LAMBDA0 = np.ones(3) / np.sqrt(3.0)
POTTS_PA = [np.diag(np.eye(3)[a]) - np.eye(3) / 3.0 for a in range(3)]
POTTS_P = np.outer(LAMBDA0, LAMBDA0) - np.eye(3) / 3.0

FIXED_FIELD = 10.0
WEAK_FIELD = 0.1

MAX_DENSE_DIM = 2**12
MAX_EXACT_DIM = 2**16


def _ising_edges(left, right):
    return ((float(left),), (float(right),))


def _potts_edges(left, right):
    return (tuple(float(x) for x in left), tuple(float(x) for x in right))


_A = (FIXED_FIELD, 0.0, 0.0)
_B = (0.0, FIXED_FIELD, 0.0)
_NOT_C = (0.0, 0.0, -FIXED_FIELD)
_ZERO3 = (0.0, 0.0, 0.0)

BOUNDARY_PRESETS = {
    ISING: {
        "fixed_symmetric": _ising_edges(FIXED_FIELD, FIXED_FIELD),
        "fixed_antisymmetric": _ising_edges(FIXED_FIELD, -FIXED_FIELD),
        "weak": _ising_edges(WEAK_FIELD, WEAK_FIELD),
        "free": _ising_edges(0.0, 0.0),
        "fixed_free": _ising_edges(0.0, FIXED_FIELD),
        "periodic": _ising_edges(0.0, 0.0),
    },
    POTTS: {
        "fixed_symmetric": _potts_edges(_A, _A),
        "fixed_antisymmetric": _potts_edges(_A, _B),
        "free": _potts_edges(_ZERO3, _ZERO3),
        "fixed_free": _potts_edges(_A, _ZERO3),
        # state C penalised at both edges, A and B left equivalent
        "mixed_AB": _potts_edges(_NOT_C, _NOT_C),
        "periodic": _potts_edges(_ZERO3, _ZERO3),
    },
}


@dataclass(frozen=True)
class ModelSpec:
    """Immutable description of a chain.

    ``edge_fields`` holds the longitudinal fields on the first and last site:
    one component (``hz``) for Ising, three (``hA, hB, hC``) for Potts.
    """

    family: str
    L: int
    J: float = 1.0
    edge_fields: tuple = None
    topology: str = "open"
    preset: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        if int(self.L) != self.L or self.L < 4:
            raise ValueError("chain length L must be an integer >= 4")
        if not self.J > 0:
            raise ValueError("coupling J must be positive")
        ncomp = 1 if self.family == ISING else 3
        edges = self.edge_fields
        if edges is None:
            edges = ((0.0,) * ncomp, (0.0,) * ncomp)
        edges = tuple(tuple(float(x) for x in e) for e in edges)
        if len(edges) != 2 or any(len(e) != ncomp for e in edges):
            raise ValueError(f"edge_fields must be two {ncomp}-component tuples")
        if not np.all(np.isfinite(edges)):
            raise ValueError("edge fields must be finite")
        object.__setattr__(self, "edge_fields", edges)
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "J", float(self.J))

    @classmethod
    def from_preset(cls, family, L, preset, J=1.0):
        try:
            edges = BOUNDARY_PRESETS[family][preset]
        except KeyError:
            raise ValueError(f"boundary preset {preset!r} not defined for {family}") from None
        topology = "periodic" if preset == "periodic" else "open"
        return cls(family, L, J=J, edge_fields=edges, topology=topology, preset=preset)

    @property
    def d(self):
        return LOCAL_DIM[self.family]

    @property
    def n_bonds(self):
        return self.L if self.topology == "periodic" else self.L - 1

    def with_length(self, L):
        return replace(self, L=L)


# ---------------------------------------------------------------- local terms


def interaction(spec):
    """Two-site interaction ``(d*d, d*d)`` without single-site parts."""
    if spec.family == ISING:
        return spec.J * np.kron(PAULI_Z, PAULI_Z)
    return -spec.J * sum(np.kron(Pa, Pa) for Pa in POTTS_PA)


def site_term(spec, site, h):
    """All single-site terms acting on ``site`` at transverse field ``h``."""
    if spec.family == ISING:
        op = -h * PAULI_X
        fields = PAULI_Z[None]
    else:
        op = -h * POTTS_P
        fields = np.array(POTTS_PA)
    if spec.topology == "open":
        if site == 0:
            op = op - np.tensordot(spec.edge_fields[0], fields, axes=1)
        if site == spec.L - 1:
            op = op - np.tensordot(spec.edge_fields[1], fields, axes=1)
    return op


def _site_weight(spec, site, bond):
    if spec.topology == "periodic":
        return 0.5
    if site == 0 or site == spec.L - 1:
        return 1.0
    return 0.5


def bond_term(spec, bond, h):
    """Two-site Hamiltonian term of ``bond`` with single-site terms absorbed.

    Interior single-site terms are split evenly between the two adjacent
    bonds; the first and last site of an open chain go entirely to the first
    and last bond, so summing all bond terms reproduces the full Hamiltonian.
    """
    if not 0 <= bond < spec.n_bonds:
        raise ValueError(f"bond index {bond} out of range for {spec.n_bonds} bonds")
    d = spec.d
    left, right = bond, (bond + 1) % spec.L
    eye = np.eye(d)
    term = interaction(spec).astype(complex)
    term = term + _site_weight(spec, left, bond) * np.kron(site_term(spec, left, h), eye)
    term = term + _site_weight(spec, right, bond) * np.kron(eye, site_term(spec, right, h))
    return term


def bond_terms(spec, h):
    return [bond_term(spec, b, h) for b in range(spec.n_bonds)]


# ------------------------------------------------------------ full operators


def _embed(ops, L, d):
    """Kronecker product placing ``ops[site]`` on the given sites."""
    out = sp.identity(1, format="csr")
    eye = sp.identity(d, format="csr")
    for site in range(L):
        out = sp.kron(out, sp.csr_matrix(ops[site]) if site in ops else eye, format="csr")
    return out


def full_hamiltonian(spec, h, sparse=False):
    """Full ``d**L`` Hamiltonian assembled directly from site operators."""
    dim = spec.d**spec.L
    if dim > MAX_EXACT_DIM or (not sparse and dim > MAX_DENSE_DIM):
        raise ValueError(f"Hilbert space dimension {dim} exceeds the exact-engine guard")
    L, d = spec.L, spec.d
    H = sp.csr_matrix((dim, dim), dtype=complex)
    pairs = [(i, i + 1) for i in range(L - 1)]
    if spec.topology == "periodic":
        pairs.append((L - 1, 0))
    for i, j in pairs:
        if spec.family == ISING:
            H = H + spec.J * _embed({i: PAULI_Z, j: PAULI_Z}, L, d)
        else:
            for Pa in POTTS_PA:
                H = H - spec.J * _embed({i: Pa, j: Pa}, L, d)
    for i in range(L):
        H = H + _embed({i: site_term(spec, i, h)}, L, d)
    return H if sparse else H.toarray()


# ------------------------------------------------------------- trotter gates


def _gate_cache(terms, dt):
    cache = {}
    gates = []
    for term in terms:
        key = (term.tobytes(), dt)
        if key not in cache:
            cache[key] = exp_hermitian(term, -1j * dt)
        gates.append(cache[key])
    return gates


def trotter_gates(spec, h, dt):
    """Second-order layout: even bonds ``dt/2``, odd bonds ``dt``, even ``dt/2``.

    Returns three layers, each a list of ``(bond, U)`` with ``U`` of shape
    ``(d*d, d*d)``.
    """
    if spec.topology != "open":
        raise ValueError("Trotter gates are only built for open chains")
    if not dt > 0:
        raise ValueError("dt must be positive")
    terms = bond_terms(spec, h)
    even = list(range(0, spec.n_bonds, 2))
    odd = list(range(1, spec.n_bonds, 2))
    half = _gate_cache([terms[b] for b in even], dt / 2)
    full = _gate_cache([terms[b] for b in odd], dt)
    first = list(zip(even, half))
    return [first, list(zip(odd, full)), list(first)]
