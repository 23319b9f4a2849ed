"""Bound-side quantities: constants, worst-case envelope, cone bounds.

The linearized comparison system

    d gamma_j / dt = tau * (D gamma_j + sum_{k ~ j} gamma_k)

has solution ``gamma(t) = exp(D tau t) exp(tau M t) gamma(0)``, which dominates
every density trajectory. The elementwise estimate
``[exp(tau M t)]_ij <= C exp(v0 t - d(i,j))`` with ``v0 = chi * Delta * tau``
turns it into a cone ``C N0 exp(v t - l)`` with ``v = v0 + D tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .graph import Lattice

CHI_BRACKET = (3.5, 3.7)
CERTIFICATE_MAX_SITES = 2000


class EnvelopeError(ValueError):
    pass


def chi_residual(chi: float) -> float:
    return chi * math.log(chi) - chi - 1.0


@lru_cache(maxsize=None)
def solve_chi() -> float:
    """Root of chi*ln(chi) = chi + 1 by Newton's method from 3.5.

    g(chi) = chi ln chi - chi - 1 has g' = ln chi > 0 and g'' > 0 on (1, inf),
    so Newton from the right of the root is monotone; from 3.5 the first step
    overshoots to the right and the iteration then decreases to the root.
    """
    x = 3.5
    for _ in range(50):
        step = chi_residual(x) / math.log(x)
        x -= step
        if abs(step) < 1e-15 * x:
            break
    if not (CHI_BRACKET[0] < x < CHI_BRACKET[1]) or abs(chi_residual(x)) >= 1e-12:
        raise ArithmeticError(f"chi iteration failed: {x!r}")
    return x


def prefactor_C(chi: float | None = None) -> float:
    chi = solve_chi() if chi is None else chi
    return 2.0 * chi * chi / (chi - 1.0)


@dataclass(frozen=True)
class EnvelopeParams:
    chi: float
    C: float
    D: int
    Delta: float
    tau_max: float
    v0: float
    v: float

    def as_dict(self) -> dict:
        return {"chi": self.chi, "C": self.C, "D": self.D, "Delta": self.Delta,
                "tau_max": self.tau_max, "v0": self.v0, "v": self.v}


def make_params(lat: Lattice, tau_max: float) -> EnvelopeParams:
    if not tau_max > 0:
        raise EnvelopeError(f"tau_max must be positive, got {tau_max}")
    chi = solve_chi()
    v0 = chi * lat.delta * tau_max
    return EnvelopeParams(chi, prefactor_C(chi), lat.max_degree, lat.delta,
                          float(tau_max), v0, v0 + lat.max_degree * tau_max)


def expm_action_nonneg(M: sp.spmatrix, x: np.ndarray, s: float) -> np.ndarray:
    """``exp(s M) x`` for entrywise nonnegative ``M``, ``x`` and ``s >= 0``.

    Scaled Taylor series: every term is nonnegative, so truncation once each
    entry of a term drops below double precision relative to the same entry
    of the partial sum loses nothing and positivity is exact. The entrywise
    test keeps far-away tails accurate too, until they underflow.
    """
    y = np.asarray(x, dtype=float).copy()
    if s == 0 or not y.any():
        return y
    norm1 = abs(M).sum(axis=0).max() if M.shape[0] else 0.0
    nsub = max(1, int(math.ceil(s * norm1)))
    h = s / nsub
    for _ in range(nsub):
        term = y.copy()
        acc = y.copy()
        for k in range(1, 400):
            term = (h / k) * (M @ term)
            acc += term
            if np.all(term <= 1e-17 * acc):
                break
        y = acc
    return y


def _check_alpha0(alpha0) -> np.ndarray:
    a = np.asarray(alpha0, dtype=float)
    if np.any(a < 0):
        raise EnvelopeError("initial densities must be nonnegative")
    return a


def envelope_ode(lat: Lattice, tau_max: float, alpha0, t: float) -> np.ndarray:
    """gamma(t) = exp(D tau t) exp(tau M t) alpha0."""
    a = _check_alpha0(alpha0)
    if a.shape[-1] != lat.num_sites:
        raise EnvelopeError("alpha0 length must equal the number of sites")
    s = tau_max * t
    return math.exp(lat.max_degree * s) * expm_action_nonneg(lat.adjacency_sparse(), a, s)


def envelope_curve(lat: Lattice, tau_max: float, alpha0, times) -> np.ndarray:
    """gamma at each time of an increasing grid, shape (T, L)."""
    a = _check_alpha0(alpha0)
    times = np.asarray(times, dtype=float)
    M = lat.adjacency_sparse()
    out = np.empty((len(times), lat.num_sites))
    prev_t, y = 0.0, a
    for i, t in enumerate(times):
        y = expm_action_nonneg(M, y, tau_max * (t - prev_t))
        out[i] = y * math.exp(lat.max_degree * tau_max * t)
        prev_t = t
    return out


def analytic_density_bound(params: EnvelopeParams, N0, l, t):
    """C * N0 * exp(v t - l)."""
    return params.C * np.asarray(N0) * np.exp(params.v * np.asarray(t) - np.asarray(l))


def moment_bound(params: EnvelopeParams, N_moment, l, t):
    """C * <N^p> * exp(v t - l). Pass N0 instead of <N^p> for fermion/hardcore species."""
    if np.any(np.asarray(N_moment) < 0):
        raise EnvelopeError("moment must be nonnegative")
    return analytic_density_bound(params, N_moment, l, t)


OBSERVABLE_CLASSES = ("balanced", "general")


def observable_class(coeffs) -> str:
    """'balanced' if no term is a pure creation or pure annihilation power."""
    for (p, q), c in coeffs.items():
        if c != 0 and (p == 0) != (q == 0):
            return "general"
    return "balanced"


def observable_bound(params: EnvelopeParams, coeff_class: str, magnitude, l, t,
                     kappa: float = 1.0):
    """C' exp((v t - l) / k) with k = 1 (balanced) or 2 (general), times ``kappa``."""
    if coeff_class not in OBSERVABLE_CLASSES:
        raise EnvelopeError(f"unknown observable class {coeff_class!r}")
    k = (1.0 if coeff_class == "balanced" else 2.0) * kappa
    return np.asarray(magnitude) * np.exp((params.v * np.asarray(t) - np.asarray(l)) / k)


def elementwise_expm_certificate(lat: Lattice, tau: float, t: float) -> float:
    """max_ij [exp(tau M t)]_ij / (C exp(v0 t - d(i,j))); <= 1 certifies the decay bound."""
    if lat.num_sites > CERTIFICATE_MAX_SITES:
        raise EnvelopeError(f"certificate limited to {CERTIFICATE_MAX_SITES} sites")
    p = make_params(lat, tau)
    E = sla.expm(tau * t * lat.adjacency.astype(float))
    bound = p.C * np.exp(p.v0 * t - lat.dist)
    return float((E / bound).max())
