import json

import numpy as np
import pytest

from lightcone.evolve import SimulationTrace
from lightcone.graph import build_chain, build_grid
from lightcone.hamiltonian import ModelSpec, TauSchedule
from lightcone.verify import (ConfigError, ExperimentConfig, ObservableSpec, ResourceLimitError,
                              _fd_derivative, check_diff_inequality, estimate_velocity,
                              run_experiment)


def rabi_cfg(**kw):
    return ExperimentConfig(ModelSpec(build_chain(2), tau=1.0), [(1.0, {0: 1})],
                            np.linspace(0, 3, 601), **kw)


def test_rabi_pipeline_passes():
    trace, rep = run_experiment(rabi_cfg())
    assert rep.passed
    names = [c.name for c in rep.checks]
    for n in ("norm", "number_conservation", "energy_conservation", "nonnegative_density",
              "density_identity", "diff_inequality", "envelope_dominance", "cone_dominance",
              "envelope_within_cone"):
        assert n in names


def test_rabi_saturates_differential_inequality():
    # |d/dt sin^2 t| = 2 sin t cos t = 2 sqrt(alpha_0 alpha_1): equality up to FD error
    _, rep = run_experiment(rabi_cfg())
    c = rep.check("diff_inequality")
    assert c.status == "pass"
    assert abs(c.margin) < 1e-6


def test_coarse_grid_is_inconclusive():
    cfg = ExperimentConfig(ModelSpec(build_chain(2), tau=1.0), [(1.0, {0: 1})],
                           np.linspace(0, 6, 13))
    _, rep = run_experiment(cfg)
    c = rep.check("diff_inequality")
    assert c.status == "inconclusive"
    assert 0 < c.detail["required_spacing"] < 0.5


def test_fd_derivative_accuracy():
    t = np.linspace(0, 2, 201)
    y = np.sin(3 * t)[:, None, None]
    idx, d, est = _fd_derivative(t, y)
    np.testing.assert_allclose(d[:, 0, 0], 3 * np.cos(3 * t[idx]), atol=1e-7)
    assert est.max() < 1e-6


def test_fd_skips_breakpoints():
    t = np.linspace(0, 1, 101)
    y = np.where(t < 0.5, t, 2 * t - 0.5)[:, None, None]
    idx, d, _ = _fd_derivative(t, y, breakpoints=(0.5,))
    assert not np.any((t[idx] > 0.46) & (t[idx] < 0.54))
    np.testing.assert_allclose(d[:, 0, 0], np.where(t[idx] < 0.5, 1.0, 2.0), atol=1e-12)


def test_piecewise_tau_pipeline():
    model = ModelSpec(build_chain(6), tau=TauSchedule((1.0, 0.4), (1.0,)), U=2.0)
    cfg = ExperimentConfig(model, [(1.0, {0: 2})], np.linspace(0, 2, 401))
    _, rep = run_experiment(cfg)
    assert rep.passed
    assert rep.params.tau_max == 1.0
    assert "energy_conservation" not in [c.name for c in rep.checks]


def test_vacuum():
    cfg = ExperimentConfig(ModelSpec(build_chain(5), U=1.0), [(1.0, {})], np.linspace(0, 1, 11))
    trace, rep = run_experiment(cfg)
    assert rep.passed
    assert np.all(trace.alpha == 0)
    assert np.all(rep.envelopes.gamma == 0)
    assert rep.velocity is None


def test_fermion_and_boson_single_particle_coincide():
    t = np.linspace(0, 2, 201)
    out = {}
    for stats in ("boson", "fermion"):
        model = ModelSpec(build_chain(9), species=stats, U=5.0)
        out[stats], rep = run_experiment(ExperimentConfig(model, [(1.0, {4: 1})], t))
        assert rep.passed
    np.testing.assert_allclose(out["fermion"].alpha, out["boson"].alpha, atol=1e-10)


def test_two_fermions_pass():
    model = ModelSpec(build_chain(8), species="fermion")
    _, rep = run_experiment(ExperimentConfig(model, [(1.0, {3: 1, 4: 1})],
                                             np.linspace(0, 2, 201)))
    assert rep.passed


def test_observables_and_moments():
    obs = (ObservableSpec("n4", (4,), ({(1, 1): 1.0},)),
           ObservableSpec("b4", (4,), ({(0, 1): 1.0, (1, 0): 1.0},)),
           ObservableSpec("corr", (3, 4), ({(1, 0): 1.0}, {(0, 1): 1.0})))
    model = ModelSpec(build_chain(7), U=1.0)
    cfg = ExperimentConfig(model, [(1.0, {0: 2}), (0.5, {0: 1, 1: 1})], np.linspace(0, 1.5, 151),
                           moments=(2, 3), observables=obs)
    trace, rep = run_experiment(cfg)
    assert rep.passed
    names = [c.name for c in rep.checks]
    for n in ("moment_bound_p2", "moment_bound_p3", "cs_link:n4", "observable_cone:n4",
              "cs_link:b4", "observable_cone:b4", "cs_two_site:corr"):
        assert n in names
    np.testing.assert_allclose(trace.observables["n4"].real, trace.alpha[:, 0, 4], atol=1e-12)
    assert rep.looseness["observables"]["b4"]["class"] == "general"


def test_loss_pipeline():
    model = ModelSpec(build_chain(5), U=1.0, loss_rate=0.1)
    cfg = ExperimentConfig(model, [(1.0, {0: 2})], np.linspace(0, 2, 201))
    trace, rep = run_experiment(cfg)
    assert rep.passed
    assert trace.kind == "density"
    for n in ("trace", "loss_monotonicity", "positivity"):
        assert rep.check(n).status == "pass"


def test_resource_limit():
    model = ModelSpec(build_chain(30))
    with pytest.raises(ResourceLimitError):
        run_experiment(ExperimentConfig(model, [(1.0, {0: 10})], [0.0, 1.0]))


def test_region_must_contain_particles():
    cfg = rabi_cfg(region=(1,))
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_config_time_validation():
    with pytest.raises(ConfigError):
        rabi_cfg(moments=(0,))
    with pytest.raises(ConfigError):
        ExperimentConfig(ModelSpec(build_chain(2)), [(1.0, {0: 1})], [0.5, 1.0])


def _synthetic_trace(lat, speed, times):
    """Front arriving at distance l at time l/speed; densities 1 behind it."""
    dist = lat.dist[0]
    a = (times[:, None] * speed >= dist[None, :]).astype(float)
    T, L = a.shape
    return SimulationTrace("pure", times, a[:, None, :], np.ones(T), np.ones((T, 1)),
                           np.zeros((T, 1, 0), dtype=complex), np.zeros(T), np.ones(T))


def test_velocity_fit_on_synthetic_front():
    lat = build_chain(12)
    t = np.linspace(0, 5, 5001)
    est = estimate_velocity(_synthetic_trace(lat, 2.0, t), lat, [0], 0.5, v_bound=5.0)
    assert est.status == "pass"
    assert est.v_emp == pytest.approx(2.0, rel=1e-3)
    # distance 10 first reaches epsilon at the final time and is censored
    assert est.distances == list(range(1, 10))


def test_velocity_inconclusive_and_fail():
    lat = build_chain(12)
    t = np.linspace(0, 1, 1001)
    est = estimate_velocity(_synthetic_trace(lat, 2.0, t), lat, [0], 0.5, v_bound=5.0)
    assert est.status == "inconclusive" and est.v_emp is None
    t = np.linspace(0, 2, 2001)
    est = estimate_velocity(_synthetic_trace(lat, 8.0, t), lat, [0], 0.5, v_bound=5.0)
    assert est.status == "fail"


def test_report_serialization_deterministic():
    _, a = run_experiment(rabi_cfg())
    _, b = run_experiment(rabi_cfg())
    assert a.to_json() == b.to_json()
    assert a.to_text() == b.to_text()
    d = json.loads(a.to_json())
    assert d["passed"] is True
    assert a.to_text().rstrip().endswith("overall: PASS")


def test_grid_dominance():
    model = ModelSpec(build_grid(3, 3), U=2.0)
    _, rep = run_experiment(ExperimentConfig(model, [(1.0, {4: 2})], np.linspace(0, 1, 101)))
    assert rep.passed
    assert rep.params.Delta == 2
