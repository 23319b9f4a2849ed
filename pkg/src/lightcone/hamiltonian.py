"""Sparse Hamiltonians of the Bose-Hubbard family.

    H = -tau(t) sum_{<j,k>, s} (b_{s,j}^dag b_{s,k} + h.c.)
        + sum_{j,s} [U_s/2 n_{s,j}(n_{s,j}-1) - mu_s n_{s,j}]
        + onsite polynomials in (n_{1,j}, ..., n_{S,j})
        + sum c * n_{s,j} n_{s',k}

All interaction terms are diagonal in the occupation basis. Hopping signs are
real (+-1 for fermions), so matrices are stored as real CSR.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .fock import FockBasis, SpeciesSpec, as_species, ladder_operator
from .graph import Lattice


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TauSchedule:
    """Piecewise-constant hopping amplitude.

    ``values[i]`` holds on ``[breakpoints[i-1], breakpoints[i])`` with
    ``breakpoints[-1] = 0`` and ``breakpoints[len] = inf`` implied.
    """

    values: tuple[float, ...]
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        if len(self.values) != len(self.breakpoints) + 1:
            raise ModelError("schedule needs len(values) == len(breakpoints) + 1")
        if not all(np.isfinite(self.values)):
            raise ModelError("hopping amplitude must be bounded")
        b = np.array(self.breakpoints)
        if len(b) and (b[0] <= 0 or np.any(np.diff(b) <= 0)):
            raise ModelError("breakpoints must be positive and strictly increasing")

    @classmethod
    def constant(cls, tau: float) -> "TauSchedule":
        return cls((tau,))

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    @property
    def tau_max(self) -> float:
        return max(abs(v) for v in self.values)

    def value(self, t: float) -> float:
        return self.values[int(np.searchsorted(self.breakpoints, t, side="right"))]

    def segments(self, t0: float, t1: float) -> Iterator[tuple[float, float, float]]:
        """Split [t0, t1] at breakpoints into (start, end, tau) pieces."""
        cuts = [t0] + [b for b in self.breakpoints if t0 < b < t1] + [t1]
        for a, b in zip(cuts[:-1], cuts[1:]):
            yield a, b, self.value(a)


@dataclass(frozen=True)
class OnsiteTerm:
    """``sum_k coeffs[k] * prod_s n_{s,site}^{k_s}`` with ``k`` an exponent tuple."""

    site: int
    coeffs: Mapping[tuple[int, ...], float]


@dataclass(frozen=True)
class PairTerm:
    """``coeff * n_{s,j} n_{s',k}`` for a site pair (density-density)."""

    sites: tuple[int, int]
    coeff: float
    species: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class ModelSpec:
    lattice: Lattice
    species: tuple[SpeciesSpec, ...] = (SpeciesSpec("boson"),)
    tau: TauSchedule = TauSchedule((1.0,))
    U: float | tuple[float, ...] = 0.0
    mu: float | tuple[float, ...] = 0.0
    onsite_terms: tuple[OnsiteTerm, ...] = ()
    pair_terms: tuple[PairTerm, ...] = ()
    loss_rate: float = 0.0

    def __post_init__(self):
        species = as_species(self.species)
        object.__setattr__(self, "species", species)
        S = len(species)
        if not isinstance(self.tau, TauSchedule):
            object.__setattr__(self, "tau", TauSchedule.constant(float(self.tau)))
        for name in ("U", "mu"):
            v = getattr(self, name)
            v = (float(v),) * S if np.ndim(v) == 0 else tuple(float(x) for x in v)
            if len(v) != S:
                raise ModelError(f"{name} needs one value per species")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "onsite_terms", tuple(self.onsite_terms))
        object.__setattr__(self, "pair_terms", tuple(self.pair_terms))
        if self.loss_rate < 0:
            raise ModelError(f"loss rate must be >= 0, got {self.loss_rate}")
        L = self.lattice.num_sites
        for t in self.onsite_terms:
            if not 0 <= t.site < L:
                raise ModelError(f"onsite term references site {t.site} out of range")
            for powers in t.coeffs:
                if len(powers) != S or min(powers) < 0:
                    raise ModelError(f"bad exponent tuple {powers} for {S} species")
        for t in self.pair_terms:
            if not all(0 <= x < L for x in t.sites):
                raise ModelError(f"pair term references sites {t.sites} out of range")
            if not all(0 <= s < S for s in t.species):
                raise ModelError(f"pair term references species {t.species}")

    def replace(self, **changes) -> "ModelSpec":
        from dataclasses import replace
        return replace(self, **changes)


def _check_basis(spec: ModelSpec, basis: FockBasis):
    if basis.num_sites != spec.lattice.num_sites or basis.species != spec.species:
        raise ModelError(f"basis {basis!r} incompatible with model "
                         f"({spec.lattice.num_sites} sites, {len(spec.species)} species)")


def diagonal_interaction(spec: ModelSpec, basis: FockBasis) -> np.ndarray:
    """Diagonal energies of every basis state.

    Occupation monomials are evaluated in integer arithmetic and only then
    scaled by the (float) coefficients.
    """
    _check_basis(spec, basis)
    n = basis.states  # int64 (dim, S, L)
    E = np.zeros(basis.dim)
    for s in range(basis.num_species):
        ns = n[:, s, :]
        pairs = (ns * (ns - 1) // 2).sum(axis=1)
        E += spec.U[s] * pairs - spec.mu[s] * ns.sum(axis=1)
    for term in spec.onsite_terms:
        for powers, c in term.coeffs.items():
            mono = np.ones(basis.dim, dtype=np.int64)
            for s, k in enumerate(powers):
                mono *= n[:, s, term.site] ** k
            E += c * mono
    for term in spec.pair_terms:
        (j, k), (s1, s2) = term.sites, term.species
        E += term.coeff * (n[:, s1, j] * n[:, s2, k])
    return E


@dataclass(frozen=True)
class HamiltonianParts:
    """``H(tau) = tau * kinetic + diag(diagonal)``."""

    kinetic: sp.csr_matrix = field(repr=False)
    diagonal: np.ndarray = field(repr=False)

    def matrix(self, tau: float) -> sp.csr_matrix:
        return (tau * self.kinetic + sp.diags(self.diagonal)).tocsr()


def kinetic_operator(lattice: Lattice, basis: FockBasis) -> sp.csr_matrix:
    """``-sum_{<j,k>, s} (b_{s,j}^dag b_{s,k} + h.c.)`` at unit amplitude."""
    terms = []
    for s in range(basis.num_species):
        for (j, k) in lattice.edges:
            terms.append((-1.0, [(s, k, 1, 0), (s, j, 0, 1)]))
    K = ladder_operator(basis, terms)
    T = (K + K.T).tocsr()
    T.sort_indices()
    return T


def hamiltonian_parts(spec: ModelSpec, basis: FockBasis) -> HamiltonianParts:
    _check_basis(spec, basis)
    T = kinetic_operator(spec.lattice, basis)
    if (T - T.T).count_nonzero() != 0:
        raise AssertionError("kinetic operator is not symmetric")
    return HamiltonianParts(T, diagonal_interaction(spec, basis))


def build_hamiltonian(spec: ModelSpec, basis: FockBasis, t: float = 0.0) -> sp.csr_matrix:
    return hamiltonian_parts(spec, basis).matrix(spec.tau.value(t))


def number_operator(basis: FockBasis, site: int, species: int | None = None,
                    power: int = 1) -> sp.dia_matrix:
    """Diagonal matrix of ``n_j^p`` (summed over species if ``species`` is None)."""
    occ = basis.states[:, :, site]
    n = occ.sum(axis=1) if species is None else occ[:, species]
    return sp.diags((n ** power).astype(float))


def total_number(basis: FockBasis, species: int | None = None) -> np.ndarray:
    tot = basis.totals
    return (tot.sum(axis=1) if species is None else tot[:, species]).astype(float)
