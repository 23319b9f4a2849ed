"""Acceptance criteria, one test each, at the stated tolerances and time limits."""

import itertools
import json
import time

import numpy as np
import scipy.linalg as sla

from conftest import record_criterion
from lightcone.cli import main
from lightcone.envelope import elementwise_expm_certificate, prefactor_C, solve_chi
from lightcone.evolve import evolve_lindblad, superposition, to_loss_basis
from lightcone.fock import enumerate_sector, hop_operator
from lightcone.graph import build_chain, build_grid, single_site
from lightcone.hamiltonian import ModelSpec
from lightcone.verify import ExperimentConfig, run_experiment
from oracles import jw_fermion_ops, restrict

DOMINANCE = ("envelope_dominance", "cone_dominance", "envelope_within_cone")


def dominance_ok(rep):
    return all(rep.check(n).status == "pass" for n in DOMINANCE)


def worst_margin(rep, names=DOMINANCE):
    return max(rep.check(n).margin for n in names)


def test_criterion_01_constants():
    t0 = time.perf_counter()
    chi = solve_chi.__wrapped__()          # bypass the cache so the solve is timed
    elapsed = time.perf_counter() - t0
    C = prefactor_C(chi)
    resid = abs(chi * np.log(chi) - chi - 1)
    ok = resid < 1e-12 and round(chi, 2) == 3.59 and 9.9 < C < 10.1 and elapsed < 1e-3
    record_criterion(1, ok, f"chi={chi:.12f} residual={resid:.1e} C={C:.6f} "
                            f"time={elapsed * 1e3:.3f} ms")
    assert ok


def test_criterion_02_rabi_closed_form():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(ModelSpec(build_chain(2), tau=1.0, U=0.0), [(1.0, {0: 1})],
                           np.linspace(0, 4, 401))
    trace, rep = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    err = np.abs(trace.alpha[:, 0, 1] - np.sin(trace.times) ** 2).max()
    di = rep.check("diff_inequality")
    ok = err < 1e-8 and di.status == "pass" and di.margin <= 1e-6 and elapsed < 1.0
    record_criterion(2, ok, f"max|alpha_1-sin^2|={err:.1e} diff-ineq margin={di.margin:.1e} "
                            f"time={elapsed:.2f} s")
    assert ok


def test_criterion_03_single_particle_oracle():
    t0 = time.perf_counter()
    taus = {9: 0.35, 10: 1.0, 11: 1.7, 12: 0.8, 13: 2.4}
    worst = 0.0
    for L, tau in taus.items():
        lat = build_chain(L)
        start = L // 3
        times = np.linspace(0, 4, 50)
        cfg = ExperimentConfig(ModelSpec(lat, tau=tau, U=6.0), [(1.0, {start: 1})], times)
        trace, _ = run_experiment(cfg)
        A = lat.adjacency.astype(float)
        e = np.eye(L)[start]
        for i, t in enumerate(times):
            ref = np.abs(sla.expm(1j * tau * t * A) @ e) ** 2
            worst = max(worst, np.abs(trace.alpha[i, 0] - ref).max())
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and elapsed < 5.0
    record_criterion(3, ok, f"chains 9..13, max deviation={worst:.1e} time={elapsed:.2f} s")
    assert ok


def two_boson_run(U, species="boson"):
    model = ModelSpec(build_chain(11), species=species, tau=1.0, U=U)
    cfg = ExperimentConfig(model, [(1.0, {0: 1, 1: 1})], np.linspace(0, 1.5, 301), moments=(2,))
    return run_experiment(cfg)


def test_criterion_04_interacting_dominance():
    parts, ok = [], True
    for U in (0.0, 2.0, 8.0):
        t0 = time.perf_counter()
        _, rep = two_boson_run(U)
        elapsed = time.perf_counter() - t0
        v_expected = solve_chi() + 2.0
        run_ok = (dominance_ok(rep) and abs(rep.params.v - v_expected) < 1e-12
                  and elapsed < 60.0)
        ok &= run_ok
        parts.append(f"U={U:g}: worst margin={worst_margin(rep):.2e} {elapsed:.1f}s")
    record_criterion(4, ok, "; ".join(parts))
    assert ok


def test_criterion_05_elementwise_certificate():
    t0 = time.perf_counter()
    worst = 0.0
    for lat, tau, t in itertools.product((build_chain(20), build_grid(8, 8)), (0.7, 1.0),
                                         (0.1, 0.5, 1.0)):
        worst = max(worst, elementwise_expm_certificate(lat, tau, t))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1.0 and elapsed < 10.0
    record_criterion(5, ok, f"max ratio={worst:.4f} time={elapsed:.2f} s")
    assert ok


def test_criterion_06_higher_moments():
    _, rep = two_boson_run(2.0)
    _, hc = two_boson_run(2.0, species="hardcore")
    a, b = rep.check("moment_bound_p2"), hc.check("moment_bound_p2")
    ok = a.status == "pass" and b.status == "pass"
    record_criterion(6, ok, f"boson <N^2> bound margin={a.margin:.2e}; "
                            f"hardcore N0 bound margin={b.margin:.2e}")
    assert ok


def test_criterion_07_dissipative():
    lam = 0.5
    times = np.linspace(0, 5, 101)
    model = ModelSpec(single_site(), loss_rate=lam)
    rho = to_loss_basis(superposition(1, "boson", [(1.0, {0: 1})]))
    tr = evolve_lindblad(model, rho, times)
    err = np.abs(tr.alpha[:, 0, 0] - np.exp(-2 * lam * times)).max()
    cfg = ExperimentConfig(ModelSpec(build_chain(5), loss_rate=0.2), [(1.0, {0: 1})],
                           np.linspace(0, 3, 301))
    trace, rep = run_experiment(cfg)
    increase = float(np.diff(trace.alpha_total.sum(axis=1)).max())
    ok = err < 1e-8 and increase <= 1e-12 and dominance_ok(rep)
    record_criterion(7, ok, f"single-mode decay err={err:.1e}; chain(5) max increase of "
                            f"total density={increase:.1e}, dominance margin={worst_margin(rep):.2e}")
    assert ok


def test_criterion_08_statistics_independence():
    times = np.linspace(0, 2, 201)
    traces = {}
    for stats in ("boson", "fermion"):
        cfg = ExperimentConfig(ModelSpec(build_chain(9), species=stats, U=3.0), [(1.0, {4: 1})],
                               times)
        traces[stats], _ = run_experiment(cfg)
    diff = np.abs(traces["fermion"].alpha - traces["boson"].alpha).max()
    cfg = ExperimentConfig(ModelSpec(build_chain(9), species="fermion"), [(1.0, {3: 1, 4: 1})],
                           times)
    _, rep = run_experiment(cfg)
    jw_ok = True
    for L in (2, 3, 4):
        c = jw_fermion_ops(L)
        for N in range(L + 1):
            b = enumerate_sector(L, "fermion", N)
            states = [b.unrank(i) for i in range(b.dim)]
            for j, k in itertools.permutations(range(L), 2):
                ref = restrict(c[k].T @ c[j], states, 2)
                jw_ok &= np.array_equal(hop_operator(b, j, k).toarray(), ref)
    ok = diff < 1e-10 and dominance_ok(rep) and jw_ok
    record_criterion(8, ok, f"fermion-boson N=1 diff={diff:.1e}; fermion N=2 dominance "
                            f"margin={worst_margin(rep):.2e}; JW oracle L<=4 "
                            f"{'match' if jw_ok else 'MISMATCH'}")
    assert ok


def test_criterion_09_empirical_velocity():
    t0 = time.perf_counter()
    v = {}
    bound = {}
    for tau in (1.0, 2.0):
        cfg = ExperimentConfig(ModelSpec(build_chain(25), tau=tau), [(1.0, {0: 1})],
                               np.linspace(0, 10, 2001))
        _, rep = run_experiment(cfg)
        v[tau] = rep.velocity.v_emp
        bound[tau] = rep.params.v
    elapsed = time.perf_counter() - t0
    ratio = v[2.0] / v[1.0]
    ok = (1.6 <= v[1.0] <= 2.4 and all(v[t] <= bound[t] for t in v)
          and abs(ratio - 2.0) <= 0.15 * 2.0 and elapsed < 30.0)
    record_criterion(9, ok, f"v_emp(tau=1)={v[1.0]:.4f} v_emp(tau=2)={v[2.0]:.4f} "
                            f"ratio={ratio:.4f} bound={bound[1.0]:.4f} time={elapsed:.1f} s")
    assert ok


def test_criterion_10_determinism(tmp_path):
    cfg = {"lattice": {"kind": "chain", "L": 7}, "model": {"tau": 1.0, "U": 2.0},
           "initial_state": {"terms": [{"occupations": {"3": 2}}]},
           "time": {"t_max": 1.5, "num_points": 151},
           "checks": {"moments": [2]}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    codes = [main(["verify", str(path), "--out-dir", str(tmp_path / d)]) for d in ("a", "b")]
    files = ("trace.csv", "envelope.csv", "constants.json", "report.json", "report.txt")
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in files)
    ok = codes == [0, 0] and same
    record_criterion(10, ok, f"exit codes {codes}; {len(files)} files byte-identical: {same}")
    assert ok
