"""Kink and defect observables as diagonal multi-site projectors.

Every observable is a sum of local terms that are diagonal in the classical
basis (``Z`` for Ising, ``{A, B, C}`` for Potts) with eigenvalues 0 or 1, so
expectations only need the diagonal of few-site reduced density matrices.

Kinds
-----
``standard``
    Ising AFM: aligned neighbours.  Potts FM: differing neighbours.
``isolated``
    Ising only: an aligned bond whose neighbouring bonds are not aligned,
    i.e. a wall between domains of length >= 2.  Missing bonds beyond the
    chain ends count as "no kink".
``advanced``
    Potts only: walls between extended domains plus bridging defects (a
    single deviating site between two different extended domains), each
    counted once.  Domains touching a chain end are treated as extended.
``in_domain`` / ``bridging``
    Potts single-site defects, inside one domain or between two domains.

Profiles are indexed by 1-based positions: bond ``b`` (0-based, sites ``b``
and ``b+1``) is position ``b + 1``; site ``k`` is position ``k + 1``.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .models import ISING, POTTS

STANDARD = "standard"
ISOLATED = "isolated"
ADVANCED = "advanced"
IN_DOMAIN = "in_domain"
BRIDGING = "bridging"

KINDS = {
    ISING: (STANDARD, ISOLATED),
    POTTS: (STANDARD, ADVANCED, IN_DOMAIN, BRIDGING),
}
DEFAULT_KINDS = {ISING: (STANDARD, ISOLATED), POTTS: (STANDARD, ADVANCED)}
_SITE_KINDS = (IN_DOMAIN, BRIDGING)
_WIDTH = {
    (ISING, STANDARD): 2, (ISING, ISOLATED): 4,
    (POTTS, STANDARD): 2, (POTTS, ADVANCED): 5,
    (POTTS, IN_DOMAIN): 3, (POTTS, BRIDGING): 5,
}


# ----------------------------------------------------------- local predicates
# ``s(j)`` returns the label on site j, or None outside an open chain.


def _eq(s, i, j):
    a, b = s(i), s(j)
    return a is not None and b is not None and a == b


def _aligned(s, bond):
    return _eq(s, bond, bond + 1)


def _ising_isolated(s, bond):
    return _aligned(s, bond) and not _aligned(s, bond - 1) and not _aligned(s, bond + 1)


def _extends_left(s, k):
    return s(k - 1) is None or s(k - 1) == s(k)


def _extends_right(s, k):
    return s(k + 1) is None or s(k + 1) == s(k)


def _potts_wall(s, bond):
    return (s(bond) != s(bond + 1) and _extends_left(s, bond)
            and _extends_right(s, bond + 1))


def _potts_bridging(s, k):
    left, mid, right = s(k - 1), s(k), s(k + 1)
    if left is None or right is None:
        return False
    return (left != right and mid not in (left, right)
            and _extends_left(s, k - 1) and _extends_right(s, k + 1))


def _potts_in_domain(s, k):
    left, right = s(k - 1), s(k + 1)
    return left is not None and right is not None and left == right != s(k)


_PREDICATES = {
    (ISING, STANDARD): _aligned,
    (ISING, ISOLATED): _ising_isolated,
    (POTTS, STANDARD): lambda s, b: not _eq(s, b, b + 1),
    # bridging defects are attributed to the bond left of the defect site
    (POTTS, ADVANCED): lambda s, b: _potts_wall(s, b) or _potts_bridging(s, b + 1),
    (POTTS, IN_DOMAIN): _potts_in_domain,
    (POTTS, BRIDGING): _potts_bridging,
}
# support offsets relative to the position's anchor (bond or site index)
_SUPPORT = {
    (ISING, STANDARD): (0, 1), (ISING, ISOLATED): (-1, 2),
    (POTTS, STANDARD): (0, 1), (POTTS, ADVANCED): (-1, 3),
    (POTTS, IN_DOMAIN): (-1, 1), (POTTS, BRIDGING): (-2, 2),
}


@dataclass(frozen=True)
class LocalTerm:
    sites: tuple
    indicator: np.ndarray = field(repr=False)  # shape (d,) * len(sites), 0/1 entries


@dataclass(frozen=True)
class KinkObservable:
    """A kink/defect counting operator for one model family."""

    kind: str
    family: str

    def __post_init__(self):
        if self.kind not in KINDS.get(self.family, ()):
            raise ValueError(f"observable {self.kind!r} is not defined for {self.family}")

    @property
    def width(self):
        return _WIDTH[self.family, self.kind]

    @property
    def per_site(self):
        return self.kind in _SITE_KINDS

    def n_positions(self, L, periodic=False):
        if self.per_site or periodic:
            return L
        return L - 1

    def terms(self, L, periodic=False):
        """One diagonal projector per profile position."""
        if periodic and L < self.width:
            raise ValueError(f"periodic chain shorter than the {self.width}-site support")
        return _build_terms(self, L, periodic)


@functools.lru_cache(maxsize=64)
def _build_terms(obs, L, periodic):
    key = (obs.family, obs.kind)
    pred = _PREDICATES[key]
    lo_off, hi_off = _SUPPORT[key]
    d = 2 if obs.family == ISING else 3
    out = []
    for anchor in range(obs.n_positions(L, periodic)):
        if periodic:
            sites = tuple((anchor + o) % L for o in range(lo_off, hi_off + 1))
            offsets = list(range(lo_off, hi_off + 1))
        else:
            offsets = [o for o in range(lo_off, hi_off + 1) if 0 <= anchor + o < L]
            sites = tuple(anchor + o for o in offsets)
        ind = np.zeros((d,) * len(sites))
        for labels in itertools.product(range(d), repeat=len(sites)):
            local = dict(zip(offsets, labels))
            ind[labels] = bool(pred(lambda j: local.get(j - anchor), anchor))
        out.append(LocalTerm(sites, ind))
    return out


# ------------------------------------------------------------- classical counts


def _runs(labels):
    return [(k, len(list(g))) for k, g in itertools.groupby(labels)]


def classical_counts(family, labels):
    """Count every kink kind on a classical configuration by run-length scan.

    Independent of the projector construction; used as a cross-check.
    Ising labels are staggered first so AFM order becomes uniform domains.
    """
    labels = [int(x) for x in labels]
    if family == ISING:
        labels = [s ^ (i % 2) for i, s in enumerate(labels)]
    runs = _runs(labels)
    ext = [length >= 2 or j in (0, len(runs) - 1) for j, (_, length) in enumerate(runs)]
    walls = sum(ext[j] and ext[j + 1] for j in range(len(runs) - 1))
    out = {STANDARD: len(runs) - 1}
    if family == ISING:
        out[ISOLATED] = walls
        return out
    in_domain = bridging = 0
    for j in range(1, len(runs) - 1):
        if runs[j][1] != 1:
            continue
        if runs[j - 1][0] == runs[j + 1][0]:
            in_domain += 1
        elif ext[j - 1] and ext[j + 1]:
            bridging += 1
    out[ADVANCED] = walls + bridging
    out[IN_DOMAIN] = in_domain
    out[BRIDGING] = bridging
    return out


# -------------------------------------------------------------------- profiles


@dataclass
class KinkProfile:
    """Per-position expectation values of one observable."""

    kind: str
    values: np.ndarray
    L: int
    per_site: bool = False
    window: tuple = None  # 1-based inclusive (first, last); None = all

    @property
    def positions(self):
        return np.arange(1, len(self.values) + 1)

    @property
    def total(self):
        return float(np.sum(self.values))

    @property
    def density(self):
        return float(np.mean(self._window_values()))

    def _window_values(self):
        if self.window is None:
            return self.values
        first, last = self.window
        sel = (self.positions >= first) & (self.positions <= last)
        if not np.any(sel):
            raise ValueError(f"window {self.window} contains no positions")
        return self.values[sel]

    def windowed(self, fraction):
        return windowed_density(self, fraction)


def _is_mps(state):
    return hasattr(state, "tensors")


def _family(state, family):
    if family is not None:
        return family
    spec = getattr(state, "spec", None)
    if spec is not None:
        return spec.family
    # MPS carry no model reference; the local dimension identifies the family
    return {2: ISING, 3: POTTS}[state.d]


def _mps_profiles(psi, observables):
    from .mps import window_probabilities

    L, d = psi.L, psi.d
    W = min(max(o.width for o in observables), L)
    probs = window_probabilities(psi, W).reshape((L - W + 1,) + (d,) * W)
    out = []
    for obs in observables:
        vals = []
        for term in obs.terms(L):
            lo = term.sites[0]
            start = min(lo, L - W)
            keep = [s - start for s in term.sites]
            drop = tuple(a for a in range(W) if a not in keep)
            marg = probs[start].sum(axis=drop) if drop else probs[start]
            vals.append(float(np.sum(marg * term.indicator)))
        out.append(np.array(vals))
    return out


def _dense_profiles(state, observables):
    L, d = state.spec.L, state.spec.d
    periodic = state.spec.topology == "periodic"
    probs = (np.abs(state.amplitudes) ** 2).reshape((d,) * L)
    cache = {}
    out = []
    for obs in observables:
        vals = []
        for term in obs.terms(L, periodic=periodic):
            key = tuple(sorted(set(term.sites)))
            if key not in cache:
                drop = tuple(a for a in range(L) if a not in key)
                cache[key] = probs.sum(axis=drop)
            marg = np.transpose(cache[key], [key.index(s) for s in term.sites])
            vals.append(float(np.sum(marg * term.indicator)))
        out.append(np.array(vals))
    return out


def kink_profiles(state, kinds, family=None):
    """Profiles for several kinds at once (one sweep over the state)."""
    family = _family(state, family)
    observables = [KinkObservable(k, family) for k in kinds]
    if _is_mps(state):
        L = state.L
        raw = _mps_profiles(state, observables)
    else:
        L = state.spec.L
        raw = _dense_profiles(state, observables)
    return {o.kind: KinkProfile(o.kind, v, L, o.per_site) for o, v in zip(observables, raw)}


def kink_profile(state, observable, family=None):
    if isinstance(observable, str):
        observable = KinkObservable(observable, _family(state, family))
    return kink_profiles(state, [observable.kind], observable.family)[observable.kind]


def _density(state, kind, family, window):
    prof = kink_profile(state, kind, family)
    if window is not None:
        first, last = window
        if first > last:
            raise ValueError("empty window")
        prof.window = (first, last)
    return prof.density


def standard_kink_density(state, window=None, family=None):
    """Mean standard-kink expectation over bonds ``window`` (1-based, inclusive)."""
    return _density(state, STANDARD, family, window)


def isolated_kink_density_ising(state, window=None, family=None, interior=False):
    """Isolated-kink density; ``interior=True`` drops the two edge bonds."""
    family = _family(state, family)
    if family != ISING:
        raise ValueError("isolated kinks are defined for the Ising model")
    if interior:
        L = state.L if _is_mps(state) else state.spec.L
        window = (2, L - 2)
    return _density(state, ISOLATED, family, window)


def advanced_kink_density_potts(state, window=None, family=None):
    family = _family(state, family)
    if family != POTTS:
        raise ValueError("advanced kinks are defined for the Potts model")
    L = state.L if _is_mps(state) else state.spec.L
    if L < 5:
        raise ValueError("advanced kinks need L >= 5")
    return _density(state, ADVANCED, family, window)


def defect_densities_potts(state, family=None):
    """Per-site ``(in_domain, bridging)`` defect profiles."""
    family = _family(state, family)
    if family != POTTS:
        raise ValueError("defect profiles are defined for the Potts model")
    profs = kink_profiles(state, [IN_DOMAIN, BRIDGING], family)
    return profs[IN_DOMAIN], profs[BRIDGING]


def window_bounds(L, fraction):
    """1-based inclusive position range kept after discarding ``fraction`` per edge."""
    if not 0 <= fraction < 0.5:
        raise ValueError("discard fraction must lie in [0, 0.5)")
    first = max(1, math.ceil(round(fraction * L, 9)))
    last = math.floor(round((1 - fraction) * L, 9))
    return first, last


def windowed_density(profile, fraction):
    """Mean over positions in ``[ceil(f L), floor((1 - f) L)]``."""
    first, last = window_bounds(profile.L, fraction)
    last = min(last, len(profile.values))
    if last < first:
        raise ValueError(f"discard fraction {fraction} leaves an empty window")
    return float(np.mean(profile.values[first - 1:last]))
