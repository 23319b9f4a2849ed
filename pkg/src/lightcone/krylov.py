"""Krylov action ``exp(t A) v`` with step-size control.

Arnoldi with full (twice-applied) Gram-Schmidt, so the same routine serves
the anti-Hermitian generator ``-iH`` and the non-normal Lindblad
superoperator. The local error of a step of length ``h`` is estimated from
the augmented Hessenberg matrix: ``beta * |[exp(h H_aug) e1]_m|`` is the
coefficient of the first discarded Krylov vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla


class KrylovError(RuntimeError):
    def __init__(self, msg: str, residual: float):
        super().__init__(f"{msg} (achieved residual {residual:.3e})")
        self.residual = residual


@dataclass
class KrylovInfo:
    steps: int = 0
    rejected: int = 0
    matvecs: int = 0
    error_estimate: float = 0.0

    def merge(self, other: "KrylovInfo"):
        self.steps += other.steps
        self.rejected += other.rejected
        self.matvecs += other.matvecs
        self.error_estimate += other.error_estimate


def _arnoldi(A, v, m):
    n = v.shape[0]
    V = np.zeros((n, m + 1), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    beta = np.linalg.norm(v)
    V[:, 0] = v / beta
    scale = 0.0
    for k in range(m):
        w = A @ V[:, k]
        for _ in range(2):
            c = V[:, :k + 1].conj().T @ w
            w = w - V[:, :k + 1] @ c
            H[:k + 1, k] += c
        hk = np.linalg.norm(w)
        scale = max(scale, np.abs(H[:k + 1, k]).max(initial=0.0), hk)
        H[k + 1, k] = hk
        if hk <= 1e-14 * max(scale, 1e-300):
            return V[:, :k + 1], H[:k + 2, :k + 1], beta, k + 1, True
        V[:, k + 1] = w / hk
    return V[:, :m], H, beta, m, False


def expm_krylov(A, v: np.ndarray, t: float, tol: float = 1e-12, m_max: int = 30,
                info: KrylovInfo | None = None) -> np.ndarray:
    """Return ``exp(t A) v``; ``tol`` bounds each accepted step's error relative to ``|v|``."""
    info = info if info is not None else KrylovInfo()
    w = np.asarray(v, dtype=complex).copy()
    if t == 0 or not np.any(w):
        return w
    n = w.shape[0]
    m = max(1, min(m_max, n))
    done, h = 0.0, t
    while done < t:
        V, H, beta, k, happy = _arnoldi(A, w, m)
        info.matvecs += k
        while True:
            h = t - done if happy else min(h, t - done)
            if happy:
                F = sla.expm(h * H[:k, :k])[:, 0]
                err = 0.0
            else:
                aug = np.zeros((k + 1, k + 1), dtype=complex)
                aug[:k + 1, :k] = H[:k + 1, :k]
                E = sla.expm(h * aug)[:, 0]
                F, err = E[:k], beta * abs(E[k])
            if err <= tol * beta:
                break
            info.rejected += 1
            h *= 0.5
            if h < 1e-13 * t:
                raise KrylovError("Krylov step size underflow", err / beta)
        w = beta * (V[:, :k] @ F)
        done += h
        if t - done <= 1e-15 * t:
            done = t
        info.steps += 1
        info.error_estimate += err
        h *= 2.0
    return w
