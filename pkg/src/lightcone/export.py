"""CSV and JSON writers with a stable byte layout.

CSV rows are sorted by (time, site) and floats are written with 17
significant digits so they round-trip exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_site_table(path, times, columns: dict[str, np.ndarray]) -> None:
    """Write ``time,site,<columns...>``; each column is a (T, L) array."""
    names = list(columns)
    T, L = next(iter(columns.values())).shape
    lines = [",".join(["time", "site"] + names)]
    for i in range(T):
        t = fmt(times[i])
        for j in range(L):
            lines.append(",".join([t, str(j)] + [fmt(columns[n][i, j]) for n in names]))
    Path(path).write_text("\n".join(lines) + "\n")


def trace_columns(trace, clip: bool = True) -> dict[str, np.ndarray]:
    """alpha (summed over species) and any moment_p columns.

    Negative roundoff is clipped to 0 here, for reporting only.
    """
    a = trace.alpha_total
    cols = {"alpha": np.clip(a, 0.0, None) if clip else a}
    for p in sorted(trace.moments):
        if p > 1:
            m = trace.moments[p].sum(axis=1)
            cols[f"moment_{p}"] = np.clip(m, 0.0, None) if clip else m
    return cols


def write_trace_csv(path, trace) -> None:
    write_site_table(path, trace.times, trace_columns(trace))


def write_envelope_csv(path, times, gamma: np.ndarray, bound: np.ndarray) -> None:
    write_site_table(path, times, {"gamma": gamma, "analytic_bound": bound})


def trace_json(trace, config: dict | None = None) -> str:
    def c(z):
        z = np.asarray(z)
        return {"re": z.real.tolist(), "im": z.imag.tolist()}

    doc = {
        "kind": trace.kind,
        "times": trace.times.tolist(),
        "alpha": trace.alpha.tolist(),
        "norm": trace.norm.tolist(),
        "number": trace.number.tolist(),
        "energy": trace.energy.tolist(),
        "tau": trace.tau.tolist(),
        "loss_rate": trace.loss_rate,
        "edges": [list(e) for e in trace.edges],
        "hop": c(trace.hop),
        "moments": {str(p): m.tolist() for p, m in sorted(trace.moments.items())},
        "number_moments": {str(p): m.tolist() for p, m in sorted(trace.number_moments.items())},
        "observables": {k: c(v) for k, v in sorted(trace.observables.items())},
        "krylov": {"steps": trace.krylov.steps, "rejected": trace.krylov.rejected,
                   "matvecs": trace.krylov.matvecs,
                   "error_estimate": trace.krylov.error_estimate},
    }
    if trace.min_eigenvalue is not None:
        doc["min_eigenvalue"] = trace.min_eigenvalue.tolist()
    if config is not None:
        doc["config"] = config
    return json.dumps(doc, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
