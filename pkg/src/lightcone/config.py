"""Run-config schema and conversion to library objects.

A run config is a single JSON document; see ``SCHEMA`` for every key.
Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import numpy as np

from .fock import SpeciesSpec
from .graph import Lattice, build_chain, build_grid, from_edge_list
from .hamiltonian import ModelSpec, OnsiteTerm, PairTerm, TauSchedule
from .verify import ConfigError, ExperimentConfig, ObservableSpec

_num = {"type": "number"}
_nonneg_int = {"type": "integer", "minimum": 0}
_complex = {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]}
_count = {"oneOf": [_nonneg_int, {"type": "array", "items": _nonneg_int, "minItems": 1}]}
_ladder_poly = {
    "type": "array", "minItems": 1,
    "items": {"type": "object", "additionalProperties": False,
              "required": ["p", "q", "coeff"],
              "properties": {"p": _nonneg_int, "q": _nonneg_int, "coeff": _complex}},
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["lattice", "model", "initial_state", "time"],
    "properties": {
        "lattice": {"oneOf": [
            {"type": "object", "additionalProperties": False, "required": ["kind", "L"],
             "properties": {"kind": {"const": "chain"}, "L": {"type": "integer", "minimum": 2},
                            "periodic": {"type": "boolean"}}},
            {"type": "object", "additionalProperties": False,
             "required": ["kind", "width", "height"],
             "properties": {"kind": {"const": "grid"},
                            "width": {"type": "integer", "minimum": 2},
                            "height": {"type": "integer", "minimum": 2},
                            "periodic": {"type": "boolean"}}},
            {"type": "object", "additionalProperties": False,
             "required": ["kind", "num_sites", "edges"],
             "properties": {"kind": {"const": "edges"},
                            "num_sites": {"type": "integer", "minimum": 1},
                            "edges": {"type": "array", "items": {
                                "type": "array", "items": _nonneg_int,
                                "minItems": 2, "maxItems": 2}}}},
        ]},
        "model": {
            "type": "object", "additionalProperties": False, "required": ["tau"],
            "properties": {
                "species": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "additionalProperties": False, "required": ["statistics"],
                    "properties": {"statistics": {"enum": ["boson", "fermion", "hardcore"]},
                                   "n_max": {"type": ["integer", "null"], "minimum": 1}}}},
                "tau": {"oneOf": [
                    {"type": "number", "exclusiveMinimum": 0},
                    {"type": "object", "additionalProperties": False,
                     "required": ["values", "breakpoints"],
                     "properties": {"values": {"type": "array", "minItems": 1,
                                               "items": {"type": "number", "minimum": 0}},
                                    "breakpoints": {"type": "array",
                                                    "items": {"type": "number",
                                                              "exclusiveMinimum": 0}}}}]},
                "U": {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]},
                "mu": {"oneOf": [_num, {"type": "array", "items": _num, "minItems": 1}]},
                "onsite_terms": {"type": "array", "items": {
                    "type": "object", "additionalProperties": False,
                    "required": ["site", "terms"],
                    "properties": {"site": _nonneg_int, "terms": {"type": "array", "items": {
                        "type": "object", "additionalProperties": False,
                        "required": ["coeff", "powers"],
                        "properties": {"coeff": _num,
                                       "powers": {"type": "array", "items": _nonneg_int,
                                                  "minItems": 1}}}}}}},
                "pair_terms": {"type": "array", "items": {
                    "type": "object", "additionalProperties": False,
                    "required": ["sites", "coeff"],
                    "properties": {"sites": {"type": "array", "items": _nonneg_int,
                                             "minItems": 2, "maxItems": 2},
                                   "coeff": _num,
                                   "species": {"type": "array", "items": _nonneg_int,
                                               "minItems": 2, "maxItems": 2}}}},
                "loss_rate": {"type": "number", "minimum": 0},
            },
        },
        "initial_state": {
            "type": "object", "additionalProperties": False, "required": ["terms"],
            "properties": {
                "region": {"type": "array", "items": _nonneg_int, "minItems": 1},
                "normalize": {"type": "boolean"},
                "terms": {"type": "array", "minItems": 1, "items": {
                    "type": "object", "additionalProperties": False,
                    "required": ["occupations"],
                    "properties": {"amplitude": _complex,
                                   "occupations": {"type": "object",
                                                   "propertyNames": {"pattern": "^[0-9]+$"},
                                                   "additionalProperties": _count}}}},
            },
        },
        "time": {"type": "object", "additionalProperties": False,
                 "required": ["t_max", "num_points"],
                 "properties": {"t_max": {"type": "number", "exclusiveMinimum": 0},
                                "num_points": {"type": "integer", "minimum": 2}}},
        "checks": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "moments": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "observables": {"type": "array", "items": {
                    "type": "object", "additionalProperties": False,
                    "required": ["name", "site", "coeffs"],
                    "properties": {"name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                                   "site": _nonneg_int, "species": _nonneg_int,
                                   "coeffs": _ladder_poly}}},
                "two_site": {"type": "array", "items": {
                    "type": "object", "additionalProperties": False,
                    "required": ["name", "sites", "A", "B"],
                    "properties": {"name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                                   "sites": {"type": "array", "items": _nonneg_int,
                                             "minItems": 2, "maxItems": 2},
                                   "species": {"type": "array", "items": _nonneg_int,
                                               "minItems": 2, "maxItems": 2},
                                   "A": _ladder_poly, "B": _ladder_poly}}},
                "arrival_epsilon": {"type": "number", "exclusiveMinimum": 0},
                "dominance_tol": {"type": "number", "exclusiveMinimum": 0},
                "identity_tol": {"type": "number", "exclusiveMinimum": 0},
                "krylov_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "output": {"type": "object", "additionalProperties": False,
                   "properties": {"directory": {"type": "string"},
                                  "formats": {"type": "array", "uniqueItems": True,
                                              "items": {"enum": ["csv", "json", "txt"]}}}},
        "sweep": {"type": "object", "additionalProperties": False,
                  "required": ["parameter", "values"],
                  "properties": {"parameter": {"enum": ["tau", "U", "loss_rate"]},
                                 "values": {"type": "array", "items": _num, "minItems": 1}}},
    },
}


def _path(err) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate(raw: dict) -> None:
    """Raise ConfigError naming the offending key path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(f"config error at {_path(err)}: {err.message}")


def load(path) -> dict:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    validate(raw)
    return raw


def _cplx(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, list) else complex(v)


def _poly(items) -> dict:
    out: dict = {}
    for it in items:
        key = (it["p"], it["q"])
        out[key] = out.get(key, 0) + _cplx(it["coeff"])
    return out


def make_lattice(block: dict) -> Lattice:
    kind = block["kind"]
    if kind == "chain":
        return build_chain(block["L"], block.get("periodic", False))
    if kind == "grid":
        return build_grid(block["width"], block["height"], block.get("periodic", False))
    return from_edge_list(block["num_sites"], [tuple(e) for e in block["edges"]])


def make_model(raw: dict, lattice: Lattice | None = None) -> ModelSpec:
    lat = lattice if lattice is not None else make_lattice(raw["lattice"])
    m = raw["model"]
    species = tuple(SpeciesSpec(s["statistics"], s.get("n_max"))
                    for s in m.get("species", [{"statistics": "boson"}]))
    tau = m["tau"]
    sched = (TauSchedule.constant(tau) if not isinstance(tau, dict)
             else TauSchedule(tuple(tau["values"]), tuple(tau["breakpoints"])))
    S = len(species)
    onsite = []
    for t in m.get("onsite_terms", []):
        coeffs: dict = {}
        for term in t["terms"]:
            k = tuple(term["powers"])
            coeffs[k] = coeffs.get(k, 0.0) + term["coeff"]
        onsite.append(OnsiteTerm(t["site"], coeffs))
    pairs = [PairTerm(tuple(t["sites"]), t["coeff"], tuple(t.get("species", (0, 0))))
             for t in m.get("pair_terms", [])]
    U, mu = m.get("U", 0.0), m.get("mu", 0.0)
    return ModelSpec(lat, species, sched,
                     tuple(U) if isinstance(U, list) else (U,) * S,
                     tuple(mu) if isinstance(mu, list) else (mu,) * S,
                     tuple(onsite), tuple(pairs), float(m.get("loss_rate", 0.0)))


def initial_terms(raw: dict) -> list[tuple[complex, dict]]:
    return [(_cplx(t.get("amplitude", 1.0)),
             {int(site): n for site, n in t["occupations"].items()})
            for t in raw["initial_state"]["terms"]]


def time_grid(raw: dict) -> np.ndarray:
    return np.linspace(0.0, raw["time"]["t_max"], raw["time"]["num_points"])


def initial_densities(raw: dict, num_sites: int, num_species: int = 1) -> np.ndarray:
    """Total alpha(0) from the initial-state terms, without building a basis.

    A scalar occupation applies to every species, as in the simulation.
    """
    merged: dict = {}
    for amp, occ in initial_terms(raw):
        key = tuple(sorted((j, tuple(np.atleast_1d(n))) for j, n in occ.items()))
        merged[key] = merged.get(key, 0) + amp
    weight = {k: abs(a) ** 2 for k, a in merged.items()}
    norm = sum(weight.values())
    if norm == 0:
        raise ConfigError("initial state has zero norm")
    alpha = np.zeros(num_sites)
    for key, w in weight.items():
        for j, n in key:
            if j >= num_sites:
                raise ConfigError(f"initial_state references site {j} out of range")
            alpha[j] += w * (sum(n) if len(n) > 1 else n[0] * num_species) / norm
    return alpha


def region(raw: dict):
    r = raw["initial_state"].get("region")
    return None if r is None else tuple(r)


def to_experiment(raw: dict) -> ExperimentConfig:
    try:
        model = make_model(raw)
        L = model.lattice.num_sites
        terms = initial_terms(raw)
        for _, occ in terms:
            for j, n in occ.items():
                if j >= L:
                    raise ConfigError(f"initial_state references site {j} out of range")
                if len(np.atleast_1d(n)) not in (1, len(model.species)):
                    raise ConfigError(f"occupation of site {j} needs one count per species")
        checks = raw.get("checks", {})
        obs = []
        for o in checks.get("observables", []):
            obs.append(ObservableSpec(o["name"], (o["site"],), (_poly(o["coeffs"]),),
                                      (o.get("species", 0),)))
        for o in checks.get("two_site", []):
            obs.append(ObservableSpec(o["name"], tuple(o["sites"]),
                                      (_poly(o["A"]), _poly(o["B"])),
                                      tuple(o.get("species", (0, 0)))))
        names = [o.name for o in obs]
        if len(set(names)) != len(names):
            raise ConfigError("observable names must be unique")
        for o in obs:
            if any(s >= L for s in o.sites) or any(s >= len(model.species) for s in o.species):
                raise ConfigError(f"observable {o.name!r} references a site or species out of range")
            if len(o.sites) == 2 and o.sites[0] == o.sites[1]:
                raise ConfigError(f"two-site observable {o.name!r} needs distinct sites")
        kw = {k: checks[k] for k in ("arrival_epsilon", "dominance_tol", "identity_tol",
                                     "krylov_tol") if k in checks}
        return ExperimentConfig(model, terms, time_grid(raw), region(raw),
                                tuple(checks.get("moments", ())), tuple(obs),
                                normalize=raw["initial_state"].get("normalize", True), **kw)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"config error: {e}") from None


def with_parameter(raw: dict, parameter: str, value: float) -> dict:
    """Copy of ``raw`` with one model parameter replaced (used by sweeps)."""
    out = copy.deepcopy(raw)
    out.pop("sweep", None)
    m = out["model"]
    if parameter == "tau":
        if value <= 0:
            raise ConfigError("swept tau values must be positive")
        m["tau"] = value
    elif parameter == "U":
        m["U"] = value
    elif parameter == "loss_rate":
        if value < 0:
            raise ConfigError("swept loss rates must be >= 0")
        m["loss_rate"] = value
    else:
        raise ConfigError(f"cannot sweep {parameter!r}")
    validate(out)
    return out
