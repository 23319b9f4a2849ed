"""Run an experiment and check every inequality of the light-cone argument.

The chain checked, in order, for each species s and site j:

    simulated alpha_j(t)  <=  gamma_j(t) = [exp(D tau t) exp(tau M t) alpha(0)]_j
                          <=  C N0 exp(v t - d(j, R))

together with the differential inequality, the density-current identity,
higher moments, local observables and two-site Cauchy-Schwarz links.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from math import comb
from typing import Mapping, Sequence

import numpy as np

from .envelope import (CERTIFICATE_MAX_SITES, EnvelopeParams, elementwise_expm_certificate,
                       envelope_curve, make_params, observable_class, observable_bound)
from .evolve import (NORM_TOL, QuantumState, SimulationTrace, evolve_lindblad, evolve_unitary,
                     local_operator, product_operator, adjoint_coeffs, superposition,
                     two_site_operator)
from .fock import as_species
from .graph import Lattice
from .hamiltonian import ModelSpec

DOMINANCE_TOL = 1e-8
IDENTITY_TOL = 1e-6
CONSERVATION_TOL = 1e-8
MAX_PURE_DIM = 100_000
MAX_DENSITY_DIM = 3_000
COARSE_FACTOR = 100.0


class ResourceLimitError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ObservableSpec:
    """A local ladder polynomial at one site, or a product over two sites."""

    name: str
    sites: tuple[int, ...]
    coeffs: tuple[Mapping[tuple[int, int], complex], ...]
    species: tuple[int, ...] = (0,)

    @property
    def is_local(self) -> bool:
        return len(self.sites) == 1


@dataclass
class ExperimentConfig:
    model: ModelSpec
    initial_terms: Sequence[tuple[complex, Mapping]]
    times: np.ndarray
    region: tuple[int, ...] | None = None
    moments: tuple[int, ...] = ()
    observables: tuple[ObservableSpec, ...] = ()
    arrival_epsilon: float | None = None
    dominance_tol: float = DOMINANCE_TOL
    identity_tol: float = IDENTITY_TOL
    krylov_tol: float = 1e-12
    normalize: bool = True

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) < 1 or self.times[0] != 0 or np.any(np.diff(self.times) <= 0):
            raise ConfigError("times must start at 0 and increase strictly")
        for p in self.moments:
            if p < 1:
                raise ConfigError(f"moment order {p} < 1")


@dataclass
class CheckResult:
    name: str
    status: str          # pass | fail | inconclusive | info
    gated: bool
    margin: float | None
    tolerance: float | None
    time: float | None = None
    site: int | None = None
    detail: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "gated": self.gated,
                "margin": _num(self.margin), "tolerance": _num(self.tolerance),
                "time": _num(self.time), "site": self.site,
                "detail": _jsonable(self.detail)}


def _check(name, margin, tol, time=None, site=None, gated=True, **detail) -> CheckResult:
    margin = float(margin) + 0.0   # no negative zero in reports
    status = "pass" if margin <= tol else "fail"
    return CheckResult(name, status, gated, margin, float(tol),
                       None if time is None else float(time),
                       None if site is None else int(site), detail)


@dataclass
class VelocityEstimate:
    status: str
    v_emp: float | None
    residual: float | None
    v_bound: float
    epsilon: float
    distances: list[int] = field(default_factory=list)
    arrivals: list[float] = field(default_factory=list)
    reason: str = ""

    def as_dict(self) -> dict:
        return {"status": self.status, "v_emp": _num(self.v_emp),
                "fit_residual": _num(self.residual), "v_bound": _num(self.v_bound),
                "epsilon": _num(self.epsilon), "distances": self.distances,
                "arrival_times": [_num(t) for t in self.arrivals], "reason": self.reason}


@dataclass
class Envelopes:
    params: EnvelopeParams
    gamma: np.ndarray          # (T, S, L)
    cone: np.ndarray           # (T, S, L)
    dist_R: np.ndarray         # (L,)
    N0: np.ndarray             # (S,)
    number_moments0: dict      # p -> (S,)

    @property
    def gamma_total(self):
        return self.gamma.sum(axis=1)

    @property
    def cone_total(self):
        return self.cone.sum(axis=1)


@dataclass
class VerificationReport:
    checks: list[CheckResult]
    velocity: VelocityEstimate | None
    params: EnvelopeParams
    looseness: dict
    meta: dict
    envelopes: Envelopes | None = None

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks if c.gated)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "meta": _jsonable(self.meta),
                "params": {k: _num(v) for k, v in self.params.as_dict().items()},
                "checks": [c.as_dict() for c in self.checks],
                "velocity": None if self.velocity is None else self.velocity.as_dict(),
                "looseness": _jsonable(self.looseness)}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"{'check':<34} {'status':<13} {'gated':<5} {'margin':>24} {'tolerance':>24}  where"]
        for c in self.checks:
            where = ""
            if c.time is not None:
                where = f"t={_fmt(c.time)}" + ("" if c.site is None else f" site={c.site}")
            lines.append(f"{c.name:<34} {c.status:<13} {'yes' if c.gated else 'no':<5} "
                         f"{_fmt(c.margin):>24} {_fmt(c.tolerance):>24}  {where}")
        if self.velocity is not None:
            v = self.velocity
            lines.append(f"velocity: {v.status} v_emp={_fmt(v.v_emp)} "
                         f"residual={_fmt(v.residual)} v_bound={_fmt(v.v_bound)}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    return "-" if x is None else format(float(x), ".17g")


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, complex):
        return [_num(obj.real), _num(obj.imag)]
    return obj


# ---------------------------------------------------------------------------
# envelopes

def build_envelopes(trace: SimulationTrace, lat: Lattice, tau_max: float,
                    region: Sequence[int]) -> Envelopes:
    params = make_params(lat, tau_max)
    dR = lat.distance_to_region(region)
    alpha0 = np.clip(trace.alpha[0], 0.0, None)   # roundoff only; true alpha0 >= 0
    S = alpha0.shape[0]
    gamma = np.stack([envelope_curve(lat, tau_max, alpha0[s], trace.times) for s in range(S)],
                     axis=1)
    N0 = alpha0.sum(axis=1)
    cone = (params.C * N0[None, :, None]
            * np.exp(params.v * trace.times[:, None, None] - dR[None, None, :]))
    nm0 = {p: trace.number_moments[p][0] for p in trace.number_moments}
    return Envelopes(params, gamma, cone, dR, N0, nm0)


def _worst(excess: np.ndarray, times):
    """Location (time, site) and value of the maximum over a (T, S, L) array."""
    i = np.unravel_index(int(np.argmax(excess)), excess.shape)
    return float(excess[i]), float(times[i[0]]), int(i[-1])


def check_dominance(trace: SimulationTrace, env: Envelopes,
                    tol: float = DOMINANCE_TOL) -> list[CheckResult]:
    if env.gamma.shape != trace.alpha.shape:
        raise ValueError("trace and envelope grids differ")
    out = []
    m, t, j = _worst(trace.alpha - env.gamma, trace.times)
    out.append(_check("envelope_dominance", m, tol, t, j))
    m, t, j = _worst(trace.alpha - env.cone, trace.times)
    out.append(_check("cone_dominance", m, tol, t, j))
    m, t, j = _worst(env.gamma - env.cone, trace.times)
    out.append(_check("envelope_within_cone", m, tol, t, j))
    return out


# ---------------------------------------------------------------------------
# finite differences

def _fd_derivative(times: np.ndarray, y: np.ndarray, breakpoints=()):
    """Derivative of y (T, ...) along axis 0 at usable interior points.

    Returns ``(index, deriv, truncation_estimate)``. Uniform grids with at
    least 9 points use the 5-point stencil with a Richardson estimate
    ``|D5(h) - D5(2h)| / 15``; otherwise the 3-point stencil without an
    estimate. Stencils crossing a hopping breakpoint are skipped.
    """
    T = len(times)
    h = np.diff(times)
    uniform = np.allclose(h, h[0], rtol=1e-9, atol=0) if T > 1 else False
    bps = np.asarray(breakpoints, dtype=float)

    def clean(lo, hi):
        return not np.any((bps > lo) & (bps < hi))

    if uniform and T >= 9:
        hh = h[0]
        idx = [i for i in range(4, T - 4) if clean(times[i - 4], times[i + 4])]
        idx = np.array(idx, dtype=int)
        if len(idx) == 0:
            return idx, None, None
        d5 = lambda i, s: (y[i - 2 * s] - 8 * y[i - s] + 8 * y[i + s] - y[i + 2 * s]) / (12 * s * hh)
        d1 = d5(idx, 1)
        d2 = d5(idx, 2)
        return idx, d1, np.abs(d1 - d2) / 15.0
    if T < 3:
        return np.array([], dtype=int), None, None
    idx = np.array([i for i in range(1, T - 1) if clean(times[i - 1], times[i + 1])], dtype=int)
    if len(idx) == 0:
        return idx, None, None
    d = (y[idx + 1] - y[idx - 1]) / (times[idx + 1] - times[idx - 1])[:, None, None]
    return idx, d, np.zeros_like(d)


def _site_currents(trace: SimulationTrace, L: int) -> np.ndarray:
    """sum_{k~j} Im <b_k^dag b_j>, shape (T, S, L)."""
    T, S, _ = trace.hop.shape
    out = np.zeros((T, S, L))
    for e, (a, b) in enumerate(trace.edges):
        im = trace.hop[:, :, e].imag
        out[:, :, a] += im
        out[:, :, b] -= im
    return out


def _neighbor_sqrt_sum(alpha: np.ndarray, lat: Lattice) -> np.ndarray:
    a = np.clip(alpha, 0.0, None)
    r = np.sqrt(a)
    return r * np.einsum("jk,tsk->tsj", lat.adjacency.astype(float), r)


def _fd_check(name, trace, lhs_fn, base_tol, breakpoints):
    idx, d, est = _fd_derivative(trace.times, trace.alpha, breakpoints)
    if d is None or len(idx) == 0:
        return CheckResult(name, "inconclusive", True, None, base_tol,
                           detail={"reason": "no usable interior grid points"})
    violation = lhs_fn(idx, d)
    est_max = float(est.max()) if est.size else 0.0
    tol = max(base_tol, est_max)
    m, t, j = _worst(violation, trace.times[idx])
    res = _check(name, m, tol, t, j, truncation_estimate=est_max)
    if est_max > COARSE_FACTOR * base_tol:
        h = float(trace.times[1] - trace.times[0])
        res.status = "inconclusive"
        res.detail["reason"] = "grid too coarse"
        res.detail["required_spacing"] = h * (base_tol / est_max) ** 0.25
    return res


def check_diff_inequality(trace: SimulationTrace, lat: Lattice, tau=None,
                          base_tol: float = IDENTITY_TOL, breakpoints=()) -> CheckResult:
    """|d alpha_j/dt + 2 lam alpha_j| <= 2 tau sum_{k~j} sqrt(alpha_j alpha_k).

    With no loss this is the plain coupled differential inequality; the loss
    drift is removed first since it only pulls densities down.
    """
    taus = trace.tau if tau is None else np.full(len(trace.times), float(tau))
    rhs = 2.0 * np.abs(taus)[:, None, None] * _neighbor_sqrt_sum(trace.alpha, lat)
    lam = trace.loss_rate

    def lhs(idx, d):
        return np.abs(d + 2.0 * lam * trace.alpha[idx]) - rhs[idx]

    return _fd_check("diff_inequality", trace, lhs, base_tol, breakpoints)


def check_density_identity(trace: SimulationTrace, lat: Lattice,
                           base_tol: float = IDENTITY_TOL, breakpoints=()) -> CheckResult:
    """d alpha_j/dt = 2 tau sum_{k~j} Im <b_k^dag b_j> - 2 lam alpha_j."""
    cur = 2.0 * trace.tau[:, None, None] * _site_currents(trace, lat.num_sites)
    pred = cur - 2.0 * trace.loss_rate * trace.alpha

    def lhs(idx, d):
        return np.abs(d - pred[idx])

    return _fd_check("density_identity", trace, lhs, base_tol, breakpoints)


# ---------------------------------------------------------------------------
# velocity

def estimate_velocity(trace: SimulationTrace, lat: Lattice, R: Sequence[int],
                      epsilon: float, v_bound: float = float("nan")) -> VelocityEstimate:
    """Least-squares slope of arrival time T(l) versus distance l.

    T(l) is the first grid time at which max_{d(j,R)=l} alpha_j reaches
    ``epsilon``; distances whose arrival is at or after the final grid time
    are censored.
    """
    dR = lat.distance_to_region(R)
    a = trace.alpha_total
    ls, Ts = [], []
    for l in range(1, int(dR.max()) + 1):
        sel = dR == l
        if not sel.any():
            continue
        hit = np.flatnonzero(a[:, sel].max(axis=1) >= epsilon)
        if len(hit) and hit[0] < len(trace.times) - 1:
            ls.append(l)
            Ts.append(float(trace.times[hit[0]]))
    est = VelocityEstimate("inconclusive", None, None, float(v_bound), float(epsilon), ls, Ts)
    if len(ls) < 3:
        est.reason = f"only {len(ls)} distances reached epsilon"
        return est
    slope, icpt = np.polyfit(np.array(ls, float), np.array(Ts), 1)
    if slope <= 0:
        est.reason = "arrival times do not increase with distance"
        return est
    resid = np.array(Ts) - (icpt + slope * np.array(ls, float))
    est.v_emp = float(1.0 / slope)
    est.residual = float(np.sqrt(np.mean(resid ** 2)))
    est.status = "pass" if est.v_emp <= v_bound else "fail"
    return est


# ---------------------------------------------------------------------------
# moments and observables

def _factorial_moment_bound(env: Envelopes, stats: str, s: int, p: int) -> float:
    """Constant C~_p with tr((b^dag)^p b^p rho) <= C~_p exp(v t - l); C~_0 is 1 at any t."""
    if p == 0:
        return 1.0
    if stats != "boson":
        return env.params.C * env.N0[s] if p == 1 else 0.0
    # n(n-1)...(n-p+1) <= n^p for integer n >= 0
    return env.params.C * _number_moment(env, s, p)


def _number_moment(env: Envelopes, s: int, p: int) -> float:
    if p in env.number_moments0:
        return float(env.number_moments0[p][s])
    raise KeyError(p)


def observable_operators(cfg: ExperimentConfig, basis) -> dict:
    """Sparse matrices for each requested observable plus its auxiliary terms."""
    ops = {}
    for ob in cfg.observables:
        if ob.is_local:
            (j,), (c,), (s,) = ob.sites, ob.coeffs, ob.species[:1]
            ops[ob.name] = local_operator(basis, j, c, s)
            powers = sorted({p for (p, q) in c} | {q for (p, q) in c})
            for p in powers:
                if p > 0:
                    ops[f"{ob.name}::F{p}"] = local_operator(basis, j, {(p, p): 1.0}, s)
        else:
            (j, k), (A, B) = ob.sites, ob.coeffs
            sj, sk = (tuple(ob.species) * 2)[:2] if len(ob.species) == 1 else ob.species
            ops[ob.name] = two_site_operator(basis, j, k, A, B, (sj, sk))
            ops[f"{ob.name}::AdagA"] = product_operator(basis, [(sj, j, adjoint_coeffs(A)),
                                                               (sj, j, A)])
            ops[f"{ob.name}::BBdag"] = product_operator(basis, [(sk, k, B),
                                                               (sk, k, adjoint_coeffs(B))])
    return ops


def check_moments_and_observables(trace: SimulationTrace, env: Envelopes,
                                  cfg: ExperimentConfig) -> tuple[list[CheckResult], dict]:
    out, reported = [], {}
    tol = cfg.dominance_tol
    species = cfg.model.species
    vt_l = env.params.v * trace.times[:, None] - env.dist_R[None, :]   # (T, L)
    for p in sorted(trace.moments):
        bound = np.zeros_like(trace.moments[p])
        for s, spec in enumerate(species):
            # n^p = n for occupations in {0, 1}
            M = env.N0[s] if spec.statistics != "boson" else _number_moment(env, s, p)
            bound[:, s, :] = env.params.C * M * np.exp(vt_l)
        m, t, j = _worst(trace.moments[p] - bound, trace.times)
        out.append(_check(f"moment_bound_p{p}", m, tol, t, j))
    for ob in cfg.observables:
        val = trace.observables[ob.name]
        if ob.is_local:
            (j,), (coeffs,), s = ob.sites, ob.coeffs, ob.species[0]
            stats = species[s].statistics
            F = {0: np.ones(len(trace.times))}
            for key, arr in trace.observables.items():
                if key.startswith(ob.name + "::F"):
                    F[int(key.split("::F")[1])] = np.clip(arr.real, 0.0, None)
            # triangle inequality + Cauchy-Schwarz on each monomial
            cs = sum(abs(c) * np.sqrt(F[p] * F[q]) for (p, q), c in coeffs.items())
            i = int(np.argmax(np.abs(val) - cs))
            out.append(_check(f"cs_link:{ob.name}", float(np.abs(val[i]) - cs[i]), tol,
                              trace.times[i], j))
            # explicit cone bound from the first-moment bound
            ev = np.exp(vt_l[:, j])
            Bt = {p: _factorial_moment_bound(env, stats, s, p) for p in F}
            explicit = sum(abs(c) * np.sqrt((Bt[p] * (ev if p else 1.0)) * (Bt[q] * (ev if q else 1.0)))
                           for (p, q), c in coeffs.items())
            i = int(np.argmax(np.abs(val) - explicit))
            out.append(_check(f"observable_cone:{ob.name}", float(np.abs(val[i]) - explicit[i]),
                              tol, trace.times[i], j))
            cls = observable_class(coeffs)
            Cp = float(sum(abs(c) * math.sqrt(Bt[p] * Bt[q]) for (p, q), c in coeffs.items()))
            exp_class_form = observable_bound(env.params, cls, Cp, env.dist_R[j], trace.times)
            outside = vt_l[:, j] <= 0
            worst = float(np.max((np.abs(val) - exp_class_form)[outside])) if outside.any() else None
            reported[ob.name] = {"class": cls, "C_prime": Cp, "max_abs": float(np.abs(val).max()),
                                 "margin_outside_cone": worst}
        else:
            a = np.clip(trace.observables[f"{ob.name}::AdagA"].real, 0.0, None)
            b = np.clip(trace.observables[f"{ob.name}::BBdag"].real, 0.0, None)
            gap = np.abs(val) - np.sqrt(a * b)
            i = int(np.argmax(gap))
            out.append(_check(f"cs_two_site:{ob.name}", float(gap[i]), tol, trace.times[i],
                              ob.sites[0]))
            reported[ob.name] = {"max_abs": float(np.abs(val).max())}
    return out, reported


# ---------------------------------------------------------------------------
# orchestration

def estimate_dimension(L: int, species, keys) -> int:
    total = 0
    for key in keys:
        d = 1
        for spec, N in zip(species, key):
            d *= comb(N + L - 1, N) if spec.statistics == "boson" else comb(L, N)
        total += d
    return total


def _initial_state(cfg: ExperimentConfig) -> QuantumState:
    lat, species = cfg.model.lattice, cfg.model.species
    loss = cfg.model.loss_rate > 0
    keys = set()
    for _, occ in cfg.initial_terms:
        tot = np.zeros(len(species), dtype=int)
        for site, n in occ.items():
            tot += np.broadcast_to(np.asarray(n, dtype=int), (len(species),))
        keys.add(tuple(int(x) for x in tot))
    if loss:
        top = np.max(np.array(sorted(keys)), axis=0)
        keys = set(itertools.product(*[range(int(n) + 1) for n in top]))
    dim = estimate_dimension(lat.num_sites, species, keys)
    limit = MAX_DENSITY_DIM if loss else MAX_PURE_DIM
    if dim > limit:
        raise ResourceLimitError(f"basis dimension {dim} exceeds limit {limit}")
    return superposition(lat.num_sites, species, list(cfg.initial_terms), loss=loss,
                         normalize=cfg.normalize)


def _region(cfg: ExperimentConfig, trace: SimulationTrace) -> tuple[int, ...]:
    if cfg.region is not None:
        R = tuple(sorted(cfg.model.lattice.site(r) for r in cfg.region))
        outside = np.setdiff1d(np.arange(trace.num_sites), R)
        if np.any(trace.alpha[0][:, outside] > 1e-12):
            raise ConfigError("initial state has particles outside the region")
        return R
    R = tuple(int(j) for j in np.flatnonzero(trace.alpha_total[0] > 0))
    return R or (0,)


def simulate(cfg: ExperimentConfig) -> SimulationTrace:
    state = _initial_state(cfg)
    needed = {1} | set(cfg.moments)
    for ob in cfg.observables:
        for c in ob.coeffs:
            needed |= {max(p, q) for (p, q) in c if max(p, q) > 0}
            needed |= {p for (p, q) in c if p > 0} | {q for (p, q) in c if q > 0}
    moments = sorted(needed)
    ops = observable_operators(cfg, state.basis)
    if cfg.model.loss_rate > 0:
        return evolve_lindblad(cfg.model, state, cfg.times, moments=moments, observables=ops,
                               tol=cfg.krylov_tol)
    return evolve_unitary(cfg.model, state, cfg.times, moments=moments, observables=ops,
                          tol=cfg.krylov_tol)


def run_experiment(cfg: ExperimentConfig) -> tuple[SimulationTrace, VerificationReport]:
    lat, model = cfg.model.lattice, cfg.model
    trace = simulate(cfg)
    R = _region(cfg, trace)
    tau_max = model.tau.tau_max
    env = build_envelopes(trace, lat, tau_max, R)
    bps = model.tau.breakpoints
    id_tol = max(cfg.identity_tol, 10 * cfg.krylov_tol)
    checks: list[CheckResult] = []

    if trace.kind == "pure":
        i = int(np.argmax(np.abs(trace.norm - 1)))
        checks.append(_check("norm", abs(trace.norm[i] - 1), NORM_TOL, trace.times[i]))
        drift = np.abs(trace.number - trace.number[0]).max(axis=1)
        for p, nm in trace.number_moments.items():
            drift = np.maximum(drift, np.abs(nm - nm[0]).max(axis=1))
        i = int(np.argmax(drift))
        checks.append(_check("number_conservation", drift[i], CONSERVATION_TOL, trace.times[i]))
        if model.tau.is_constant:
            e = np.abs(trace.energy - trace.energy[0])
            i = int(np.argmax(e))
            checks.append(_check("energy_conservation", e[i], CONSERVATION_TOL, trace.times[i]))
    else:
        i = int(np.argmax(np.abs(trace.norm - 1)))
        checks.append(_check("trace", abs(trace.norm[i] - 1), 1e-8, trace.times[i]))
        tot = trace.number.sum(axis=1)
        inc = np.diff(tot)
        i = int(np.argmax(inc)) if len(inc) else 0
        checks.append(_check("loss_monotonicity", float(inc[i]) if len(inc) else 0.0,
                             1e-10, trace.times[i + 1] if len(inc) else 0.0))
        if trace.min_eigenvalue is not None:
            i = int(np.argmin(trace.min_eigenvalue))
            checks.append(_check("positivity", -trace.min_eigenvalue[i], 1e-8, trace.times[i]))

    m, t, j = _worst(-trace.alpha, trace.times)
    checks.append(_check("nonnegative_density", m, 1e-10, t, j))
    checks.append(check_density_identity(trace, lat, id_tol, bps))
    checks.append(check_diff_inequality(trace, lat, None, id_tol, bps))
    checks.extend(check_dominance(trace, env, cfg.dominance_tol))
    extra, obs_report = check_moments_and_observables(trace, env, cfg)
    checks.extend(extra)

    N0 = float(env.N0.sum())
    eps = cfg.arrival_epsilon if cfg.arrival_epsilon is not None else 1e-4 * N0
    velocity = None
    if N0 > 0:
        velocity = estimate_velocity(trace, lat, R, eps, env.params.v)
        checks.append(CheckResult("velocity_bound", velocity.status, True,
                                  None if velocity.v_emp is None else velocity.v_emp - env.params.v,
                                  0.0, detail={"v_emp": velocity.v_emp}))

    looseness: dict = {}
    if velocity is not None and velocity.v_emp:
        looseness["velocity_ratio"] = env.params.v / velocity.v_emp
    a_fin, g_fin, c_fin = trace.alpha_total[-1], env.gamma_total[-1], env.cone_total[-1]
    sel = a_fin > eps if N0 > 0 else np.zeros_like(a_fin, dtype=bool)
    if sel.any():
        looseness["envelope_over_alpha_final"] = float(np.min(g_fin[sel] / a_fin[sel]))
        looseness["cone_over_alpha_final"] = float(np.min(c_fin[sel] / a_fin[sel]))
    if lat.num_sites <= CERTIFICATE_MAX_SITES and tau_max > 0:
        looseness["expm_certificate_final"] = elementwise_expm_certificate(
            lat, tau_max, float(trace.times[-1]))
    if obs_report:
        looseness["observables"] = obs_report

    meta = {"num_sites": lat.num_sites, "lattice": lat.kind,
            "species": [s.statistics for s in model.species],
            "region": list(R), "N0": env.N0, "loss_rate": model.loss_rate,
            "tau_max": tau_max, "num_times": len(trace.times), "t_max": trace.times[-1],
            "kind": trace.kind, "basis_dim": trace.final_state.basis.dim,
            "krylov_error_estimate": trace.krylov.error_estimate}
    report = VerificationReport(checks, velocity, env.params, looseness, meta, env)
    return trace, report
