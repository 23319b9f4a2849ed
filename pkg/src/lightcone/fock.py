"""Occupation-number bases at fixed particle number.

States are stored as an integer array of shape ``(dim, S, L)`` (species,
site). Within one species the order is lexicographic ascending in the
occupation tuple; multi-species bases are row-major products with species 0
most significant, so the overall order is lexicographic in the concatenated
tuple.

Fermionic signs follow the Jordan-Wigner convention with modes ordered
species-major, then by site index: ``c_{s,j}`` picks up ``(-1)`` to the number
of occupied fermionic modes preceding ``(s, j)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

STATISTICS = ("boson", "fermion", "hardcore")


class BasisError(ValueError):
    pass


@dataclass(frozen=True)
class SpeciesSpec:
    statistics: str = "boson"
    n_max: int | None = None

    def __post_init__(self):
        if self.statistics not in STATISTICS:
            raise BasisError(f"unknown statistics {self.statistics!r}")
        if self.statistics != "boson":
            if self.n_max not in (None, 1):
                raise BasisError(f"{self.statistics} species must have n_max = 1")
            object.__setattr__(self, "n_max", 1)
        elif self.n_max is not None and self.n_max < 1:
            raise BasisError("boson n_max must be >= 1 or None")

    @property
    def is_fermion(self) -> bool:
        return self.statistics == "fermion"


def as_species(species) -> tuple[SpeciesSpec, ...]:
    if isinstance(species, (SpeciesSpec, str)):
        species = [species]
    return tuple(s if isinstance(s, SpeciesSpec) else SpeciesSpec(s) for s in species)


def _cap(spec: SpeciesSpec, N: int) -> int:
    return N if spec.n_max is None else min(spec.n_max, N)


def _enumerate(L: int, N: int, cap: int) -> np.ndarray:
    out = []

    def rec(prefix, i, rem):
        if i == L - 1:
            if rem <= cap:
                out.append(prefix + [rem])
            return
        left = L - i - 1
        for v in range(max(0, rem - cap * left), min(cap, rem) + 1):
            rec(prefix + [v], i + 1, rem - v)

    if L == 0:
        return np.zeros((1 if N == 0 else 0, 0), dtype=np.int64)
    rec([], 0, N)
    return np.array(out, dtype=np.int64).reshape(-1, L)


class _SpeciesSector:
    """One species at fixed N: enumeration plus the ranking table."""

    def __init__(self, L: int, N: int, cap: int):
        self.L, self.N, self.cap = L, N, cap
        # cnt[m, r]: ways to place r particles on m sites, at most cap each
        cnt = np.zeros((L + 1, N + 1), dtype=object)
        cnt[0, 0] = 1
        for m in range(1, L + 1):
            for r in range(N + 1):
                cnt[m, r] = sum(cnt[m - 1, r - v] for v in range(min(cap, r) + 1))
        self.dim = int(cnt[L, N])
        # cum[m, r, x] = sum_{v < x} cnt[m, r - v]: states skipped by choosing x
        cum = np.zeros((max(L, 1), N + 1, cap + 2), dtype=np.int64)
        for m in range(L):
            for r in range(N + 1):
                acc = 0
                for x in range(cap + 2):
                    cum[m, r, x] = acc
                    if x <= r and x <= cap:
                        acc += int(cnt[m, r - x])
        self._cum = cum
        self.states = _enumerate(L, N, cap)
        assert len(self.states) == self.dim

    def rank(self, occ: np.ndarray) -> np.ndarray:
        """Vectorized rank of rows of ``occ`` (shape (k, L)); -1 if not in sector."""
        occ = np.asarray(occ, dtype=np.int64)
        valid = (occ >= 0).all(axis=1) & (occ <= self.cap).all(axis=1) & (occ.sum(axis=1) == self.N)
        if self.L == 0:
            return np.where(valid, 0, -1)
        rem = self.N - np.concatenate([np.zeros((len(occ), 1), np.int64),
                                       np.cumsum(occ, axis=1)[:, :-1]], axis=1)
        x = np.clip(occ, 0, self.cap + 1)
        r = np.clip(rem, 0, self.N)
        m = self.L - 1 - np.arange(self.L)
        idx = self._cum[m[None, :], r, x].sum(axis=1)
        return np.where(valid, idx, -1)


class FockBasis:
    """Common surface of :class:`SectorBasis` and :class:`SectorSum`."""

    num_sites: int
    species: tuple[SpeciesSpec, ...]
    states: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def num_species(self) -> int:
        return len(self.species)

    @cached_property
    def occupations(self) -> np.ndarray:
        o = self.states.astype(float)
        o.flags.writeable = False
        return o

    @cached_property
    def totals(self) -> np.ndarray:
        """Per-state particle number of each species, shape (dim, S)."""
        return self.states.sum(axis=2)

    def lookup(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _as_array(self, state) -> np.ndarray:
        a = np.asarray(state, dtype=np.int64)
        if a.ndim == 1 and self.num_species == 1:
            a = a[None, :]
        if a.shape != (self.num_species, self.num_sites):
            raise BasisError(f"state {state!r} has wrong shape for "
                             f"{self.num_species} species x {self.num_sites} sites")
        return a

    def rank(self, state) -> int:
        i = int(self.lookup(self._as_array(state)[None])[0])
        if i < 0:
            raise BasisError(f"state {state!r} is not in this basis")
        return i

    def unrank(self, index: int):
        if not 0 <= index < self.dim:
            raise BasisError(f"index {index} out of range [0, {self.dim})")
        st = self.states[index]
        if self.num_species == 1:
            return tuple(int(v) for v in st[0])
        return tuple(tuple(int(v) for v in row) for row in st)

    def compatible_with(self, other: "FockBasis") -> bool:
        return self.num_sites == other.num_sites and self.species == other.species


class SectorBasis(FockBasis):
    def __init__(self, L: int, species, particle_numbers):
        self.num_sites = int(L)
        self.species = as_species(species)
        if isinstance(particle_numbers, (int, np.integer)):
            particle_numbers = [particle_numbers]
        self.particle_numbers = tuple(int(n) for n in particle_numbers)
        if len(self.particle_numbers) != len(self.species):
            raise BasisError("one particle number per species required")
        for spec, N in zip(self.species, self.particle_numbers):
            if N < 0:
                raise BasisError(f"negative particle number {N}")
            if spec.statistics != "boson" and N > L:
                raise BasisError(f"{spec.statistics} sector with N={N} > L={L}")
            if spec.n_max is not None and N > spec.n_max * L:
                raise BasisError(f"N={N} exceeds capacity {spec.n_max}*{L}")
        self._sectors = [_SpeciesSector(self.num_sites, N, _cap(spec, N))
                         for spec, N in zip(self.species, self.particle_numbers)]
        dims = [s.dim for s in self._sectors]
        # row-major strides, species 0 most significant
        self._strides = np.array([int(np.prod(dims[i + 1:], dtype=np.int64))
                                  for i in range(len(dims))], dtype=np.int64)
        grids = np.meshgrid(*[np.arange(d) for d in dims], indexing="ij")
        flat = [g.reshape(-1) for g in grids]
        self.states = np.stack([sec.states[f] for sec, f in zip(self._sectors, flat)],
                               axis=1).reshape(-1, len(dims), self.num_sites)
        self.states.flags.writeable = False

    def __repr__(self):
        stats = ",".join(s.statistics for s in self.species)
        return (f"SectorBasis(L={self.num_sites}, species=[{stats}], "
                f"N={list(self.particle_numbers)}, dim={self.dim})")

    @property
    def sector_keys(self) -> list[tuple[int, ...]]:
        return [self.particle_numbers]

    def lookup(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        out = np.zeros(len(states), dtype=np.int64)
        bad = np.zeros(len(states), dtype=bool)
        for s, sec in enumerate(self._sectors):
            r = sec.rank(states[:, s, :])
            bad |= r < 0
            out += r * self._strides[s]
        return np.where(bad, -1, out)


class SectorSum(FockBasis):
    """Direct sum of fixed-N sectors, ordered by ascending count tuple."""

    def __init__(self, L: int, species, sector_counts: Iterable[Sequence[int]]):
        self.num_sites = int(L)
        self.species = as_species(species)
        keys = sorted({tuple(int(n) for n in (c if np.ndim(c) else [c]))
                       for c in sector_counts})
        if not keys:
            raise BasisError("no sectors given")
        self.sectors = [SectorBasis(L, self.species, k) for k in keys]
        self._key_index = {k: i for i, k in enumerate(keys)}
        dims = [b.dim for b in self.sectors]
        self.offsets = np.concatenate([[0], np.cumsum(dims)]).astype(np.int64)
        self.states = np.concatenate([b.states for b in self.sectors], axis=0)
        self.states.flags.writeable = False

    def __repr__(self):
        return f"SectorSum(L={self.num_sites}, sectors={self.sector_keys}, dim={self.dim})"

    @property
    def sector_keys(self) -> list[tuple[int, ...]]:
        return [b.particle_numbers for b in self.sectors]

    def lookup(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.int64)
        out = np.full(len(states), -1, dtype=np.int64)
        if len(states) == 0:
            return out
        tot = states.sum(axis=2)
        for key, i in self._key_index.items():
            sel = (tot == np.array(key)).all(axis=1)
            if sel.any():
                r = self.sectors[i].lookup(states[sel])
                out[sel] = np.where(r >= 0, r + self.offsets[i], -1)
        return out

    def is_loss_closed(self) -> bool:
        """True if every sector reachable by removing particles is present."""
        have = set(self.sector_keys)
        for key in have:
            for lower in itertools.product(*[range(n + 1) for n in key]):
                if lower not in have:
                    return False
        return True


def enumerate_sector(L: int, species, N) -> SectorBasis:
    return SectorBasis(L, species, N)


def loss_closure(L: int, species, counts: Iterable[Sequence[int]]) -> SectorSum:
    """Smallest :class:`SectorSum` containing ``counts`` and all lower sectors."""
    species = as_species(species)
    top = np.max(np.array([list(c) for c in counts], dtype=np.int64), axis=0)
    keys = itertools.product(*[range(int(n) + 1) for n in top])
    return SectorSum(L, species, keys)


# ---------------------------------------------------------------------------
# ladder actions

def _fermion_parity_before(states: np.ndarray, species: Sequence[SpeciesSpec],
                           s: int, j: int) -> np.ndarray:
    n = np.zeros(len(states), dtype=np.int64)
    for sp_i in range(s):
        if species[sp_i].is_fermion:
            n += states[:, sp_i, :].sum(axis=1)
    n += states[:, s, :j].sum(axis=1)
    return n & 1


def _ladder_weight(states: np.ndarray, species: Sequence[SpeciesSpec], s: int, j: int,
                   p: int, q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Image occupations, squared amplitude (exact int64) and sign."""
    spec = species[s]
    n = states[:, s, j]
    sign = np.ones(len(states), dtype=np.int64)
    if spec.statistics == "boson":
        # n!/(n-q)! * (m+p)!/m!
        w = np.ones(len(states), dtype=np.int64)
        for i in range(q):
            w *= np.clip(n - i, 0, None)
        m = np.clip(n - q, 0, None)
        for i in range(p):
            w *= m + i + 1
        if spec.n_max is not None:
            w[m + p > spec.n_max] = 0
    else:
        w = np.ones(len(states), dtype=np.int64)
        if q > 1 or p > 1:
            w[:] = 0
        if q == 1:
            w[n != 1] = 0
        m = n - q
        if p == 1:
            w[m != 0] = 0
        if spec.is_fermion and (p + q) % 2 == 1:
            sign = 1 - 2 * _fermion_parity_before(states, species, s, j)
    new = states.copy()
    new[:, s, j] = n - q + p
    return new, w, sign


def ladder_action(states: np.ndarray, species: Sequence[SpeciesSpec], s: int, j: int,
                  p: int, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Apply ``(b_{s,j}^dag)^p (b_{s,j})^q`` to each row of ``states``.

    Returns the image occupations and real amplitudes; amplitude 0 marks rows
    annihilated by the operator (their image occupations are meaningless).
    """
    new, w, sign = _ladder_weight(states, species, s, j, p, q)
    return new, sign * np.sqrt(w.astype(float))


def _monomial_action(states: np.ndarray, species: Sequence[SpeciesSpec],
                     factors) -> tuple[np.ndarray, np.ndarray]:
    # squared weights multiply exactly; a single sqrt keeps e.g. sqrt(2)*sqrt(2) == 2
    w = np.ones(len(states), dtype=np.int64)
    sign = np.ones(len(states), dtype=np.int64)
    for (s, j, p, q) in reversed(list(factors)):
        states, wi, si = _ladder_weight(states, species, s, j, p, q)
        w *= wi
        sign *= si
    return states, sign * np.sqrt(w.astype(float))


# A monomial is a list of factors (s, j, p, q), applied right to left.
Monomial = Sequence[tuple[int, int, int, int]]


def ladder_operator(basis: FockBasis, terms: Iterable[tuple[complex, Monomial]],
                    dtype=None) -> sp.csr_matrix:
    """Sparse matrix of ``sum_t coeff_t * monomial_t`` restricted to ``basis``.

    Intermediate states of a monomial are not restricted to the basis; only
    the final image is looked up. Images outside the basis are dropped, which
    is exact for expectation values of states supported on the basis.
    """
    rows, cols, vals = [], [], []
    src = np.arange(basis.dim)
    for coeff, factors in terms:
        factors = list(factors)
        for (_, j, _, _) in factors:
            if not 0 <= j < basis.num_sites:
                raise BasisError(f"site {j} out of range")
        st, a = _monomial_action(np.array(basis.states, copy=True), basis.species, factors)
        amp = coeff * a
        tgt = basis.lookup(st)
        keep = (amp != 0) & (tgt >= 0)
        rows.append(tgt[keep])
        cols.append(src[keep])
        vals.append(amp[keep])
    if not rows:
        return sp.csr_matrix((basis.dim, basis.dim), dtype=dtype or float)
    vals = np.concatenate(vals)
    if dtype is not None:
        vals = vals.astype(dtype)
    m = sp.coo_matrix((vals, (np.concatenate(rows), np.concatenate(cols))),
                      shape=(basis.dim, basis.dim)).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    return m


def hop_operator(basis: FockBasis, j: int, k: int, species: int = 0) -> sp.csr_matrix:
    """Matrix of ``b_{s,k}^dag b_{s,j}`` (particle moves j -> k)."""
    return ladder_operator(basis, [(1.0, [(species, k, 1, 0), (species, j, 0, 1)])])


def apply_hop(basis: FockBasis, j: int, k: int, state_index: int,
              species: int = 0) -> tuple[int | None, float]:
    """Action of ``b_{s,k}^dag b_{s,j}`` on one basis state.

    Returns ``(target_index, amplitude)``, or ``(None, 0.0)`` when the state
    is annihilated.
    """
    L = basis.num_sites
    for x in (j, k):
        if not 0 <= x < L:
            raise BasisError(f"site {x} out of range [0, {L})")
    if j == k:
        raise BasisError("hop needs distinct sites")
    if not 0 <= state_index < basis.dim:
        raise BasisError(f"index {state_index} out of range")
    st = basis.states[state_index:state_index + 1]
    st, a = _monomial_action(st, basis.species, [(species, k, 1, 0), (species, j, 0, 1)])
    amp = float(a[0])
    if amp == 0.0:
        return None, 0.0
    tgt = int(basis.lookup(st)[0])
    if tgt < 0:
        return None, 0.0
    return tgt, amp
