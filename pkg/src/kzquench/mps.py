"""Open-chain matrix-product states: canonical forms, two-site DMRG,
second-order TEBD and local reduced density matrices.

Site tensors have shape ``(left bond, physical, right bond)``.  The engine
keeps a single orthogonality center: tensors left of it are left
isometries, tensors right of it are right isometries.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse.linalg as spla

from . import models
from .tensor import svd_truncate

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1
MAX_RDM_WIDTH = 5


@dataclass(frozen=True)
class EngineParams:
    max_bond: int = 300
    sv_cutoff: float = 1e-6
    dt: float = 0.1
    dmrg_energy_tol: float = 1e-9
    dmrg_max_sweeps: int = 40
    dmrg_start_bond: int = 16

    def __post_init__(self):
        if self.max_bond < 1:
            raise ValueError("max_bond must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sv_cutoff < 0:
            raise ValueError("sv_cutoff must be >= 0")


@dataclass
class StepReport:
    max_discarded: float = 0.0
    total_discarded: float = 0.0
    max_bond: int = 1


class MPS:
    """Finite MPS with a tracked orthogonality center.

    Site tensors are treated as immutable arrays: operations replace list
    entries instead of writing into them, so :meth:`copy` is shallow.
    """

    def __init__(self, tensors, center=None, discarded_weight=0.0):
        self.tensors = [np.asarray(t, dtype=complex) for t in tensors]
        if self.tensors[0].shape[0] != 1 or self.tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        for a, b in zip(self.tensors[:-1], self.tensors[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValueError("inconsistent bond dimensions")
        self.center = center
        self.discarded_weight = float(discarded_weight)

    @classmethod
    def from_product(cls, vectors):
        tensors = []
        for v in vectors:
            v = np.asarray(v, dtype=complex)
            tensors.append((v / np.linalg.norm(v)).reshape(1, -1, 1))
        return cls(tensors, center=0)

    @classmethod
    def random(cls, L, d, bond, rng=None):
        rng = np.random.default_rng(rng)
        dims = [1] + [min(bond, d ** min(i, L - i)) for i in range(1, L)] + [1]
        tensors = [rng.normal(size=(dims[i], d, dims[i + 1]))
                   + 1j * rng.normal(size=(dims[i], d, dims[i + 1])) for i in range(L)]
        psi = cls(tensors)
        psi.canonicalize(0)
        return psi

    def copy(self):
        return MPS(list(self.tensors), self.center, self.discarded_weight)

    @property
    def L(self):
        return len(self.tensors)

    @property
    def d(self):
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self):
        return [t.shape[2] for t in self.tensors[:-1]]

    # ---------------------------------------------------------- gauge moves

    def _shift_right(self, i):
        A = self.tensors[i]
        l, d, r = A.shape
        Q, R = np.linalg.qr(A.reshape(l * d, r))
        self.tensors[i] = Q.reshape(l, d, -1)
        self.tensors[i + 1] = np.tensordot(R, self.tensors[i + 1], axes=(1, 0))

    def _shift_left(self, i):
        A = self.tensors[i]
        l, d, r = A.shape
        Q, R = np.linalg.qr(A.reshape(l, d * r).T)
        self.tensors[i] = Q.T.reshape(-1, d, r)
        self.tensors[i - 1] = np.tensordot(self.tensors[i - 1], R.T, axes=(2, 0))

    def canonicalize(self, center=0):
        """Bring the state into mixed-canonical form and normalize it."""
        for i in range(center):
            self._shift_right(i)
        for i in range(self.L - 1, center, -1):
            self._shift_left(i)
        self.center = center
        nrm = np.linalg.norm(self.tensors[center])
        if nrm == 0 or not np.isfinite(nrm):
            raise FloatingPointError("state has zero or non-finite norm")
        self.tensors[center] = self.tensors[center] / nrm
        return self

    def move_center(self, site):
        if self.center is None:
            return self.canonicalize(site)
        while self.center < site:
            self._shift_right(self.center)
            self.center += 1
        while self.center > site:
            self._shift_left(self.center)
            self.center -= 1
        return self

    def isometry_residuals(self):
        """Largest deviation from left/right isometry around the center."""
        res = 0.0
        for i, A in enumerate(self.tensors):
            l, d, r = A.shape
            if self.center is not None and i < self.center:
                M = A.reshape(l * d, r)
                res = max(res, np.max(np.abs(M.conj().T @ M - np.eye(r))))
            elif self.center is not None and i > self.center:
                M = A.reshape(l, d * r)
                res = max(res, np.max(np.abs(M @ M.conj().T - np.eye(l))))
        return float(res)

    # ---------------------------------------------------------- contractions

    def overlap(self, other):
        """``<self|other>``."""
        E = np.ones((1, 1), dtype=complex)
        for A, B in zip(self.tensors, other.tensors):
            E = np.tensordot(E, B, axes=(1, 0))
            E = np.tensordot(A.conj(), E, axes=([0, 1], [0, 1]))
        return complex(E[0, 0])

    def norm(self):
        return float(np.sqrt(abs(self.overlap(self))))

    def to_dense(self):
        psi = self.tensors[0]
        for A in self.tensors[1:]:
            psi = np.tensordot(psi, A, axes=(-1, 0))
        return psi.reshape(-1)


def _basis_vector(d, k):
    v = np.zeros(d, dtype=complex)
    v[k] = 1.0
    return v


_LABELS = {
    2: {"u": 0, "d": 1, "↑": 0, "↓": 1,
        "+": np.array([1.0, 1.0]) / np.sqrt(2), "-": np.array([1.0, -1.0]) / np.sqrt(2)},
    3: {"A": 0, "B": 1, "C": 2, "0": models.LAMBDA0},
}


def product_state(spec, pattern):
    """Product MPS from basis labels or a single broadcast local vector.

    ``pattern`` may be a string of labels (Ising ``u d + -``, Potts ``A B C``
    and ``0`` for ``|lambda0>``), a sequence of integer basis indices, or a
    length-``d`` vector used on every site.
    """
    d, L = spec.d, spec.L
    arr = None if isinstance(pattern, str) else np.asarray(pattern)
    if arr is not None and arr.ndim == 1 and arr.shape == (d,) and not np.issubdtype(arr.dtype, np.integer):
        return MPS.from_product([arr] * L)
    if len(pattern) != L:
        raise ValueError(f"pattern has length {len(pattern)}, chain has {L} sites")
    vectors = []
    for item in pattern:
        if isinstance(item, str):
            if item not in _LABELS[d]:
                raise ValueError(f"label {item!r} outside the local basis")
            item = _LABELS[d][item]
        if np.ndim(item) == 0:
            if not 0 <= int(item) < d:
                raise ValueError(f"basis index {item} outside the local basis")
            item = _basis_vector(d, int(item))
        vectors.append(item)
    return MPS.from_product(vectors)


# ------------------------------------------------------------------- TEBD


def apply_bond_gate(psi, bond, gate, max_bond, sv_cutoff, direction="right"):
    """Apply a two-site gate on ``bond`` and re-split with truncation.

    The center must sit on ``bond`` (sweeping right) or ``bond + 1``
    (sweeping left); afterwards it sits on the other site.  Returns the
    discarded weight relative to the pre-truncation norm.
    """
    A, B = psi.tensors[bond], psi.tensors[bond + 1]
    l, d, _ = A.shape
    r = B.shape[2]
    theta = np.tensordot(A, B, axes=(2, 0))
    theta = np.tensordot(gate.reshape(d, d, d, d), theta, axes=([2, 3], [1, 2]))
    theta = theta.transpose(2, 0, 1, 3).reshape(l * d, d * r)
    U, S, V, rep = svd_truncate(theta, max_bond, sv_cutoff)
    kept = float(np.sum(S**2))
    total = kept + rep.discarded_weight
    if not np.isfinite(total) or total == 0:
        raise FloatingPointError(f"non-finite or vanishing state at bond {bond}")
    S = S / np.sqrt(kept)
    k = S.size
    if direction == "right":
        psi.tensors[bond] = U.reshape(l, d, k)
        psi.tensors[bond + 1] = (S[:, None] * V).reshape(k, d, r)
        psi.center = bond + 1
    else:
        psi.tensors[bond] = (U * S).reshape(l, d, k)
        psi.tensors[bond + 1] = V.reshape(k, d, r)
        psi.center = bond
    rel = rep.discarded_weight / total
    psi.discarded_weight += rel
    return rel


def apply_layers(psi, layers, max_bond, sv_cutoff, report=None):
    """Apply gate layers, sweeping each from whichever end the center is near."""
    report = report if report is not None else StepReport()
    if psi.center is None:
        psi.canonicalize(0)
    for layer in layers:
        if not layer:
            continue
        if psi.center <= psi.L // 2:
            for bond, gate in sorted(layer, key=lambda bg: bg[0]):
                psi.move_center(bond)
                w = apply_bond_gate(psi, bond, gate, max_bond, sv_cutoff, "right")
                report.max_discarded = max(report.max_discarded, w)
                report.total_discarded += w
        else:
            for bond, gate in sorted(layer, key=lambda bg: -bg[0]):
                psi.move_center(bond + 1)
                w = apply_bond_gate(psi, bond, gate, max_bond, sv_cutoff, "left")
                report.max_discarded = max(report.max_discarded, w)
                report.total_discarded += w
    report.max_bond = max(report.max_bond, max(psi.bond_dims))
    return report


def tebd_sweep_step(psi, spec, h_mid, params, dt=None):
    """One second-order TEBD step at fixed field ``h_mid`` (in place).

    Returns ``(psi, report)``; ``psi`` is the same object, updated.
    """
    dt = params.dt if dt is None else dt
    layers = models.trotter_gates(spec, h_mid, dt)
    report = apply_layers(psi, layers, params.max_bond, params.sv_cutoff)
    return psi, report


# --------------------------------------------------------- local densities


def _window_theta(psi, first, width):
    psi.move_center(first)
    theta = psi.tensors[first]
    for j in range(first + 1, first + width):
        theta = np.tensordot(theta, psi.tensors[j], axes=(-1, 0))
    return theta


def _check_window(psi, first, width):
    if not 1 <= width <= MAX_RDM_WIDTH:
        raise ValueError(f"window width must be between 1 and {MAX_RDM_WIDTH}")
    if first < 0 or first + width > psi.L:
        raise ValueError(f"window [{first}, {first + width}) outside chain of {psi.L} sites")


def reduced_density_matrix(psi, first_site, width):
    """RDM of sites ``first_site .. first_site + width - 1`` (0-based).

    Moves the orthogonality center of ``psi`` (gauge only).
    """
    _check_window(psi, first_site, width)
    theta = _window_theta(psi, first_site, width)
    l, r = theta.shape[0], theta.shape[-1]
    M = np.moveaxis(theta.reshape(l, -1, r), 1, 0).reshape(psi.d**width, l * r)
    return M @ M.conj().T


def window_probabilities(psi, width):
    """Diagonal of every ``width``-site RDM, sliding along the chain.

    Returns an array of shape ``(L - width + 1, d**width)``: entry ``[i, c]``
    is the probability of classical configuration ``c`` (row-major digits)
    on sites ``i .. i + width - 1``.
    """
    psi = psi.copy()
    _check_window(psi, 0, width)
    out = np.empty((psi.L - width + 1, psi.d**width))
    for i in range(psi.L - width + 1):
        theta = _window_theta(psi, i, width)
        l, r = theta.shape[0], theta.shape[-1]
        out[i] = np.sum(np.abs(theta.reshape(l, -1, r)) ** 2, axis=(0, 2))
    return out


# ------------------------------------------------------------------- DMRG


def build_mpo(spec, h):
    """Nearest-neighbour MPO assembled from operator-Schmidt split bond terms.

    Each ``W[i]`` has shape ``(wl, wr, d, d)``.  Virtual states: 0 means no
    operator placed yet, the last index means a term has been completed.
    """
    if spec.topology != "open":
        raise ValueError("MPO construction requires an open chain")
    d, L = spec.d, spec.L
    splits = []
    for term in models.bond_terms(spec, h):
        T = term.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
        U, S, V = np.linalg.svd(T)
        keep = S > 1e-14 * S[0]
        sq = np.sqrt(S[keep])
        As = (U[:, keep] * sq).T.reshape(-1, d, d)
        Bs = (sq[:, None] * V[keep]).reshape(-1, d, d)
        splits.append((As, Bs))
    eye = np.eye(d)
    W = []
    for i in range(L):
        kl = splits[i - 1][0].shape[0] if i > 0 else 0
        kr = splits[i][0].shape[0] if i < L - 1 else 0
        wl = 1 if i == 0 else kl + 2
        wr = 1 if i == L - 1 else kr + 2
        Wi = np.zeros((wl, wr, d, d), dtype=complex)
        done_l = wl - 1
        if i == 0:
            Wi[0, 0] = eye
            Wi[0, 1:1 + kr] = splits[i][0]
        elif i == L - 1:
            Wi[1:1 + kl, 0] = splits[i - 1][1]
            Wi[done_l, 0] = eye
        else:
            Wi[0, 0] = eye
            Wi[0, 1:1 + kr] = splits[i][0]
            Wi[1:1 + kl, wr - 1] = splits[i - 1][1]
            Wi[done_l, wr - 1] = eye
        W.append(Wi)
    return W


def _extend_left(E, A, W):
    # E: (a, w, a'), A: (a', s', b'), W: (w, v, s, s')
    T = np.tensordot(E, A, axes=(2, 0))
    T = np.tensordot(T, W, axes=([1, 2], [0, 3]))
    return np.tensordot(A.conj(), T, axes=([0, 1], [0, 3])).transpose(0, 2, 1)


def _extend_right(E, B, W):
    # E: (b, v, b'), B: (a', s', b')
    T = np.tensordot(B, E, axes=(2, 2))
    T = np.tensordot(T, W, axes=([1, 3], [3, 1]))
    return np.tensordot(B.conj(), T, axes=([1, 2], [3, 1])).transpose(0, 2, 1)


def _two_site_matvec(Lenv, W1, W2, Renv, shape):
    def matvec(x):
        theta = x.reshape(shape)
        T = np.tensordot(Lenv, theta, axes=(2, 0))
        T = np.tensordot(T, W1, axes=([1, 2], [0, 3]))
        T = np.tensordot(T, W2, axes=([3, 1], [0, 3]))
        T = np.tensordot(T, Renv, axes=([1, 3], [2, 1]))
        return T.reshape(-1)
    return matvec


def _lowest_eigenpair(matvec, v0):
    n = v0.size
    if n <= 64:
        H = np.column_stack([matvec(col) for col in np.eye(n, dtype=complex)])
        w, v = np.linalg.eigh(0.5 * (H + H.conj().T))
        return float(w[0]), v[:, 0]
    op = spla.LinearOperator((n, n), matvec=matvec, dtype=complex)
    w, v = spla.eigsh(op, k=1, which="SA", v0=v0, tol=1e-13, ncv=min(n, 20))
    return float(w[0]), v[:, 0]


def dmrg_ground_state(spec, h, params, initial=None):
    """Two-site DMRG with a doubling bond-dimension schedule.

    Converged when the relative energy change between two successive full
    sweeps drops below ``params.dmrg_energy_tol`` after the bond cap has
    reached ``params.max_bond``.  Returns ``(psi, energy, converged)``.
    """
    if spec.topology != "open":
        raise ValueError("DMRG requires an open chain")
    if initial is None:
        initial = product_state(spec, models.LAMBDA0 if spec.d == 3 else _LABELS[2]["+"])
    psi = initial.copy()
    psi.canonicalize(0)
    W = build_mpo(spec, h)
    L = spec.L
    Lenv = [None] * L
    Renv = [None] * L
    Lenv[0] = np.ones((1, 1, 1), dtype=complex)
    Renv[L - 1] = np.ones((1, 1, 1), dtype=complex)
    for i in range(L - 1, 0, -1):
        Renv[i - 1] = _extend_right(Renv[i], psi.tensors[i], W[i])

    bond_cap = min(params.dmrg_start_bond, params.max_bond)
    energy_prev = None
    energies = []
    converged = False
    for sweep in range(params.dmrg_max_sweeps):
        energy = None
        for direction, bonds in (("right", range(L - 1)), ("left", range(L - 2, -1, -1))):
            for i in bonds:
                A, B = psi.tensors[i], psi.tensors[i + 1]
                theta = np.tensordot(A, B, axes=(2, 0))
                shape = theta.shape
                mv = _two_site_matvec(Lenv[i], W[i], W[i + 1], Renv[i + 1], shape)
                energy, vec = _lowest_eigenpair(mv, theta.reshape(-1))
                l, d, _, r = shape
                U, S, V, _ = svd_truncate(vec.reshape(l * d, d * r), bond_cap, params.sv_cutoff)
                S = S / np.linalg.norm(S)
                k = S.size
                if direction == "right":
                    psi.tensors[i] = U.reshape(l, d, k)
                    psi.tensors[i + 1] = (S[:, None] * V).reshape(k, d, r)
                    Lenv[i + 1] = _extend_left(Lenv[i], psi.tensors[i], W[i])
                else:
                    psi.tensors[i] = (U * S).reshape(l, d, k)
                    psi.tensors[i + 1] = V.reshape(k, d, r)
                    Renv[i] = _extend_right(Renv[i + 1], psi.tensors[i + 1], W[i + 1])
        psi.center = 0
        energies.append(energy)
        logger.debug("dmrg sweep %d cap %d energy %.12f", sweep, bond_cap, energy)
        if (energy_prev is not None and bond_cap >= params.max_bond
                and abs(energy - energy_prev) <= params.dmrg_energy_tol * max(abs(energy), 1.0)):
            converged = True
            break
        energy_prev = energy
        bond_cap = min(2 * bond_cap, params.max_bond)
    if not converged:
        logger.warning("DMRG did not converge in %d sweeps (L=%d, h=%g)",
                       params.dmrg_max_sweeps, L, h)
    psi.dmrg_energies = energies
    return psi, energy, converged


def mpo_expectation(psi, W):
    E = np.ones((1, 1, 1), dtype=complex)
    for A, Wi in zip(psi.tensors, W):
        E = _extend_left(E, A, Wi)
    return float(E[0, 0, 0].real)


# --------------------------------------------------------------- snapshots


def save_snapshot(path, psi, metadata=None):
    """Write ``psi`` as an ``.npz`` container (layout documented in README)."""
    arrays = {f"site_{i:04d}": t for i, t in enumerate(psi.tensors)}
    header = {
        "format": "kzquench-mps",
        "version": SNAPSHOT_VERSION,
        "L": psi.L,
        "d": psi.d,
        "center": psi.center,
        "discarded_weight": psi.discarded_weight,
        "metadata": metadata or {},
    }
    np.savez(path, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_snapshot(path):
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format") != "kzquench-mps":
            raise ValueError(f"{path} is not an MPS snapshot")
        if header["version"] != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {header['version']}")
        tensors = [data[f"site_{i:04d}"] for i in range(header["L"])]
    psi = MPS(tensors, header["center"], header["discarded_weight"])
    return psi, header["metadata"]


def params_dict(params):
    return asdict(params)
