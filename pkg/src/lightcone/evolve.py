"""Time evolution and the observables the light-cone bounds talk about.

Pure states evolve by Krylov exponential actions of ``-iH``. Density matrices
evolve under the particle-loss master equation

    d rho/dt = -i[H, rho] - lam * sum_{s,j} ({n_{s,j}, rho} - 2 b_{s,j} rho b_{s,j}^dag)

taken literally, so a single occupied mode decays as ``exp(-2 lam t)``. The
generator is vectorized row-major (``vec(A X B) = (A kron B^T) vec(X)``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .fock import FockBasis, SectorBasis, SectorSum, ladder_operator, loss_closure
from .hamiltonian import HamiltonianParts, ModelSpec, hamiltonian_parts
from .krylov import KrylovInfo, expm_krylov

NORM_TOL = 1e-10
POSITIVITY_CHECK_MAX_DIM = 400


class StateError(ValueError):
    pass


@dataclass
class QuantumState:
    kind: str  # "pure" | "density"
    basis: FockBasis
    data: np.ndarray

    def __post_init__(self):
        if self.kind not in ("pure", "density"):
            raise StateError(f"unknown state kind {self.kind!r}")
        d = self.basis.dim
        self.data = np.asarray(self.data, dtype=complex)
        shape = (d,) if self.kind == "pure" else (d, d)
        if self.data.shape != shape:
            raise StateError(f"{self.kind} state data must have shape {shape}")

    @property
    def norm(self) -> float:
        if self.kind == "pure":
            return float(np.linalg.norm(self.data))
        return float(np.trace(self.data).real)

    @property
    def probabilities(self) -> np.ndarray:
        if self.kind == "pure":
            return np.abs(self.data) ** 2
        return np.diag(self.data).real.copy()

    def to_density(self) -> "QuantumState":
        if self.kind == "density":
            return self
        return QuantumState("density", self.basis, np.outer(self.data, self.data.conj()))

    def embed(self, basis: FockBasis) -> "QuantumState":
        """Same state expressed in a larger basis containing this one."""
        if not basis.compatible_with(self.basis):
            raise StateError("target basis has different sites or species")
        idx = basis.lookup(self.basis.states)
        if np.any(idx < 0):
            raise StateError("target basis does not contain the state's basis")
        if self.kind == "pure":
            out = np.zeros(basis.dim, dtype=complex)
            out[idx] = self.data
        else:
            out = np.zeros((basis.dim, basis.dim), dtype=complex)
            out[np.ix_(idx, idx)] = self.data
        return QuantumState(self.kind, basis, out)


def basis_state(basis: FockBasis, occupation) -> QuantumState:
    psi = np.zeros(basis.dim, dtype=complex)
    psi[basis.rank(occupation)] = 1.0
    return QuantumState("pure", basis, psi)


def _full_occupation(num_sites, nspecies, occ) -> np.ndarray:
    """Accept an (S, L)/(L,) array or a {site: count(s)} mapping."""
    if isinstance(occ, Mapping):
        a = np.zeros((nspecies, num_sites), dtype=np.int64)
        for site, n in occ.items():
            a[:, int(site)] = np.broadcast_to(np.asarray(n, dtype=np.int64), (nspecies,))
        return a
    a = np.asarray(occ, dtype=np.int64)
    if a.ndim == 1:
        a = a[None, :]
    if a.shape != (nspecies, num_sites):
        raise StateError(f"occupation {occ!r} has wrong shape")
    return a


def superposition(num_sites: int, species, terms: Sequence[tuple[complex, object]],
                  loss: bool = False, normalize: bool = True) -> QuantumState:
    """Pure state ``sum_t amp_t |occ_t>``; vacuum on every site not mentioned.

    The basis is the single sector of the terms when they share particle
    numbers, otherwise the direct sum of the sectors present. With
    ``loss=True`` all lower sectors are included as well.
    """
    from .fock import as_species
    species = as_species(species)
    occs = [_full_occupation(num_sites, len(species), occ) for _, occ in terms]
    if not occs:
        raise StateError("no terms given")
    keys = {tuple(int(x) for x in o.sum(axis=1)) for o in occs}
    if loss:
        basis = loss_closure(num_sites, species, keys)
    elif len(keys) == 1:
        basis = SectorBasis(num_sites, species, next(iter(keys)))
    else:
        basis = SectorSum(num_sites, species, keys)
    psi = np.zeros(basis.dim, dtype=complex)
    idx = basis.lookup(np.stack(occs))
    if np.any(idx < 0):
        raise StateError("an occupation violates the species caps")
    for (amp, _), i in zip(terms, idx):
        psi[i] += complex(amp)
    nrm = np.linalg.norm(psi)
    if nrm == 0:
        raise StateError("state has zero norm")
    if normalize:
        psi /= nrm
    return QuantumState("pure", basis, psi)


# ---------------------------------------------------------------------------
# single-state observables

def expectation(state: QuantumState, op) -> complex:
    if state.kind == "pure":
        return complex(np.vdot(state.data, op @ state.data))
    coo = sp.coo_matrix(op)
    return complex(np.sum(coo.data * state.data[coo.col, coo.row]))


def _site_counts(state, j, species):
    if not 0 <= j < state.basis.num_sites:
        raise StateError(f"site {j} out of range")
    occ = state.basis.states[:, :, j]
    return occ.sum(axis=1) if species is None else occ[:, species]


def density(state: QuantumState, j: int, species: int | None = None) -> float:
    """alpha_j = tr(n_j rho); summed over species when ``species`` is None."""
    return float(state.probabilities @ _site_counts(state, j, species))


def moment(state: QuantumState, j: int, p: int, species: int | None = None) -> float:
    """alpha_j^(p) = tr(n_j^p rho)."""
    if p < 1:
        raise StateError("moment order must be >= 1")
    return float(state.probabilities @ (_site_counts(state, j, species).astype(float) ** p))


def local_operator(basis: FockBasis, j: int, coeffs: Mapping[tuple[int, int], complex],
                   species: int = 0) -> sp.csr_matrix:
    """Matrix of ``sum_{p,q} c_pq (b_j^dag)^p b_j^q`` on ``basis``."""
    return ladder_operator(basis, [(complex(c), [(species, j, p, q)])
                                   for (p, q), c in coeffs.items() if c != 0], dtype=complex)


def product_operator(basis: FockBasis, factors) -> sp.csr_matrix:
    """Matrix of ``A_1 A_2 ... A_n``; each factor is ``(species, site, coeffs)``.

    The product is expanded into monomials before the basis lookup, so
    intermediate states may leave the basis (e.g. ``b_0^dag b_1`` within a
    fixed-N sector).
    """
    expanded = [[(complex(c), (s, j, p, q)) for (p, q), c in coeffs.items() if c != 0]
                for s, j, coeffs in factors]
    terms = []
    for combo in itertools.product(*expanded):
        c = np.prod([x[0] for x in combo])
        terms.append((complex(c), [x[1] for x in combo]))
    return ladder_operator(basis, terms, dtype=complex)


def two_site_operator(basis: FockBasis, j: int, k: int, A_j, A_k,
                      species: tuple[int, int] = (0, 0)) -> sp.csr_matrix:
    """Matrix of the product ``A_j A_k`` of two local ladder polynomials."""
    if j == k:
        raise StateError("two-site operator needs distinct sites")
    return product_operator(basis, [(species[0], j, A_j), (species[1], k, A_k)])


def local_observable(state: QuantumState, j: int, coeffs, species: int = 0) -> complex:
    return expectation(state, local_operator(state.basis, j, coeffs, species))


def two_site_correlator(state: QuantumState, j: int, k: int, A_j, A_k,
                        species: tuple[int, int] = (0, 0)) -> complex:
    return expectation(state, two_site_operator(state.basis, j, k, A_j, A_k, species))


def adjoint_coeffs(coeffs):
    """Coefficients of A^dag for A = sum c_pq (b^dag)^p b^q."""
    return {(q, p): np.conj(c) for (p, q), c in coeffs.items()}


# ---------------------------------------------------------------------------
# traces

@dataclass
class SimulationTrace:
    kind: str
    times: np.ndarray
    alpha: np.ndarray                       # (T, S, L)
    norm: np.ndarray                        # (T,) |psi| or tr(rho)
    number: np.ndarray                      # (T, S) <N_s>
    hop: np.ndarray                         # (T, S, E) <b_{s,k}^dag b_{s,j}> per edge (j<k)
    energy: np.ndarray                      # (T,) <H(t)>
    tau: np.ndarray                         # (T,) tau(t) at grid times
    moments: dict = field(default_factory=dict)          # p -> (T, S, L)
    number_moments: dict = field(default_factory=dict)   # p -> (T, S)
    observables: dict = field(default_factory=dict)      # name -> (T,) complex
    min_eigenvalue: np.ndarray | None = None
    loss_rate: float = 0.0
    krylov: KrylovInfo = field(default_factory=KrylovInfo)
    edges: tuple = ()
    final_state: QuantumState | None = None

    @property
    def alpha_total(self) -> np.ndarray:
        return self.alpha.sum(axis=1)

    @property
    def num_sites(self) -> int:
        return self.alpha.shape[2]


class _Meter:
    def __init__(self, model: ModelSpec, basis: FockBasis, parts: HamiltonianParts,
                 moments, observables):
        self.model, self.basis, self.parts = model, basis, parts
        self.occ = basis.occupations
        self.tot = basis.totals.astype(float)
        self.moments = sorted({int(p) for p in moments})
        self.edges = model.lattice.edges
        self.hops = [[sp.coo_matrix(ladder_operator(basis, [(1.0, [(s, k, 1, 0), (s, j, 0, 1)])]))
                      for (j, k) in self.edges] for s in range(basis.num_species)]
        self.observables = {name: sp.coo_matrix(op) for name, op in (observables or {}).items()}
        for name, op in self.observables.items():
            if op.shape != (basis.dim, basis.dim):
                raise StateError(f"observable {name!r} has wrong dimension")
        self.H = {}

    def hamiltonian(self, tau):
        if tau not in self.H:
            self.H[tau] = sp.coo_matrix(self.parts.matrix(tau))
        return self.H[tau]

    def _ev(self, coo, kind, data):
        if kind == "pure":
            return np.vdot(data[coo.row], coo.data * data[coo.col])
        return np.sum(coo.data * data[coo.col, coo.row])

    def measure(self, kind, data, tau):
        if kind == "pure":
            prob = np.abs(data) ** 2
            norm = np.sqrt(prob.sum())
        else:
            prob = np.diag(data).real
            norm = prob.sum()
        out = {
            "alpha": np.einsum("d,dsl->sl", prob, self.occ),
            "norm": norm,
            "number": prob @ self.tot,
            "hop": np.array([[self._ev(h, kind, data) for h in row] for row in self.hops],
                            dtype=complex).reshape(self.basis.num_species, len(self.edges)),
            "energy": self._ev(self.hamiltonian(tau), kind, data).real,
            "moments": {p: np.einsum("d,dsl->sl", prob, self.occ ** p) for p in self.moments},
            "number_moments": {p: prob @ self.tot ** p for p in self.moments},
            "observables": {n: self._ev(o, kind, data) for n, o in self.observables.items()},
        }
        if kind == "density" and self.basis.dim <= POSITIVITY_CHECK_MAX_DIM:
            out["min_eig"] = np.linalg.eigvalsh(0.5 * (data + data.conj().T)).min()
        return out


def _collect(kind, times, records, meter, tau_vals, loss, info, final) -> SimulationTrace:
    S, L = meter.basis.num_species, meter.basis.num_sites
    tr = SimulationTrace(
        kind=kind,
        times=np.asarray(times, dtype=float),
        alpha=np.array([r["alpha"] for r in records]).reshape(len(records), S, L),
        norm=np.array([r["norm"] for r in records]),
        number=np.array([r["number"] for r in records]).reshape(len(records), S),
        hop=np.array([r["hop"] for r in records]).reshape(len(records), S, len(meter.edges)),
        energy=np.array([r["energy"] for r in records]),
        tau=np.array(tau_vals),
        moments={p: np.array([r["moments"][p] for r in records]) for p in meter.moments},
        number_moments={p: np.array([r["number_moments"][p] for r in records])
                        for p in meter.moments},
        observables={n: np.array([r["observables"][n] for r in records])
                     for n in meter.observables},
        loss_rate=loss,
        krylov=info,
        edges=meter.edges,
        final_state=final,
    )
    if kind == "density" and "min_eig" in records[0]:
        tr.min_eigenvalue = np.array([r["min_eig"] for r in records])
    return tr


def _check_times(times):
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) < 1 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise StateError("time grid must start at 0 and be strictly increasing")
    return t


def evolve_unitary(model: ModelSpec, psi0: QuantumState, times, moments: Sequence[int] = (),
                   observables: Mapping[str, sp.spmatrix] | None = None,
                   tol: float = 1e-12) -> SimulationTrace:
    """Propagate a pure state with ``exp(-i H dt)`` between grid times."""
    if psi0.kind != "pure":
        raise StateError("evolve_unitary needs a pure state")
    if abs(psi0.norm - 1.0) > NORM_TOL:
        raise StateError(f"initial state not normalized (norm {psi0.norm!r})")
    times = _check_times(times)
    parts = hamiltonian_parts(model, psi0.basis)
    meter = _Meter(model, psi0.basis, parts, moments, observables)
    info = KrylovInfo()
    psi = psi0.data.copy()
    gen = {}
    records, taus = [], []
    for i, t in enumerate(times):
        if i > 0:
            for a, b, tau in model.tau.segments(times[i - 1], t):
                if tau not in gen:
                    gen[tau] = (-1j * meter.hamiltonian(tau)).tocsr()
                psi = expm_krylov(gen[tau], psi, b - a, tol=tol, info=info)
        tau_t = model.tau.value(t)
        taus.append(tau_t)
        records.append(meter.measure("pure", psi, tau_t))
    return _collect("pure", times, records, meter, taus, 0.0, info,
                    QuantumState("pure", psi0.basis, psi))


def lindblad_generator(parts: HamiltonianParts, basis: FockBasis, tau: float,
                       loss_rate: float) -> sp.csr_matrix:
    d = basis.dim
    I = sp.identity(d, format="csr")
    H = parts.matrix(tau)
    Lg = -1j * (sp.kron(H, I) - sp.kron(I, H.T))
    if loss_rate > 0:
        N = sp.diags(basis.totals.sum(axis=1).astype(float))
        jump = sp.csr_matrix((d * d, d * d), dtype=complex)
        for s in range(basis.num_species):
            for j in range(basis.num_sites):
                b = ladder_operator(basis, [(1.0, [(s, j, 0, 1)])])
                jump = jump + sp.kron(b, b.conj())
        Lg = Lg - loss_rate * (sp.kron(N, I) + sp.kron(I, N.T) - 2.0 * jump)
    return Lg.tocsr()


def evolve_lindblad(model: ModelSpec, rho0: QuantumState, times, loss_rate: float | None = None,
                    moments: Sequence[int] = (),
                    observables: Mapping[str, sp.spmatrix] | None = None,
                    tol: float = 1e-12) -> SimulationTrace:
    """Integrate the particle-loss master equation on the vectorized generator."""
    lam = model.loss_rate if loss_rate is None else float(loss_rate)
    if lam < 0:
        raise StateError(f"loss rate must be >= 0, got {lam}")
    rho0 = rho0.to_density()
    if abs(rho0.norm - 1.0) > 1e-8:
        raise StateError(f"initial density matrix has trace {rho0.norm!r}")
    if lam > 0:
        b = rho0.basis
        closed = b.is_loss_closed() if isinstance(b, SectorSum) else all(
            n == 0 for n in b.particle_numbers)
        if not closed:
            raise StateError("loss needs a basis containing all lower particle-number sectors")
    times = _check_times(times)
    basis = rho0.basis
    parts = hamiltonian_parts(model, basis)
    meter = _Meter(model, basis, parts, moments, observables)
    info = KrylovInfo()
    d = basis.dim
    vec = rho0.data.reshape(-1).copy()
    gen = {}
    records, taus = [], []
    for i, t in enumerate(times):
        if i > 0:
            for a, b_, tau in model.tau.segments(times[i - 1], t):
                if tau not in gen:
                    gen[tau] = lindblad_generator(parts, basis, tau, lam)
                vec = expm_krylov(gen[tau], vec, b_ - a, tol=tol, info=info)
        tau_t = model.tau.value(t)
        taus.append(tau_t)
        records.append(meter.measure("density", vec.reshape(d, d), tau_t))
    return _collect("density", times, records, meter, taus, lam, info,
                    QuantumState("density", basis, vec.reshape(d, d)))


def to_loss_basis(state: QuantumState) -> QuantumState:
    """Embed a state into the smallest basis closed under particle removal."""
    b = state.basis
    return state.embed(loss_closure(b.num_sites, b.species, b.sector_keys))
