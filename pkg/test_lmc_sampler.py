"""
Tests for the LMC sampler: Metropolis kernel, incremental cost, runs and ensembles
"""

import numpy as np
import pytest
from scipy.stats import chisquare

from core.errors import ConfigError
from core.lmc_sampler import (
    CallableCost,
    InfidelityCost,
    LmcChain,
    LmcConfig,
    acceptance_probability,
    beta_schedule,
    init_protocol,
    make_rng,
    run,
    sample_ensemble,
)
from core.protocol_space import Protocol
from core.quantum_core import ModelParams, infidelity

PARAMS = ModelParams()


def tiny_config(**overrides):
    values = dict(T=1.0, L=8, beta=1e3, sigma=0.05, burn_in_iters=8, delta_n=2, M=4, R=2, seed=7)
    values.update(overrides)
    return LmcConfig(**values)


class FixedRng:
    """Deterministic stand-in for the generator methods the chain calls"""

    def __init__(self, step, uniform=0.0):
        self.step = step
        self.uniform = uniform

    def normal(self, loc, scale):
        return self.step

    def random(self):
        return self.uniform

    def integers(self, low, high, size):
        return np.zeros(size, dtype=int)


@pytest.mark.parametrize("field, value", [("beta", 0.0), ("sigma", 0.0), ("R", 1), ("M", 0), ("delta_n", 0), ("init", "gauss")])
def test_config_validation(field, value):
    with pytest.raises(ConfigError):
        tiny_config(**{field: value}).validate()


def test_custom_init_needs_matching_values():
    with pytest.raises(ConfigError):
        tiny_config(init="custom", init_values=[0.1]).validate()
    config = tiny_config(init="custom", init_values=[0.1] * 8)
    assert config.validate()
    np.testing.assert_array_equal(init_protocol(config, make_rng(0, 0)).values, [0.1] * 8)


def test_zero_init():
    protocol = init_protocol(tiny_config(init="zero"), make_rng(0, 0))
    assert np.all(protocol.values == 0.0)


def test_uniform01_init_mean():
    protocol = init_protocol(tiny_config(L=10_000), make_rng(0, 0))
    assert protocol.values.min() >= 0.0
    assert abs(protocol.values.mean() - 0.5) < 0.01


def test_init_is_deterministic_per_stream():
    config = tiny_config()
    a = init_protocol(config, make_rng(3, 5)).values
    b = init_protocol(config, make_rng(3, 5)).values
    c = init_protocol(config, make_rng(3, 6)).values
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_streams_are_disjoint():
    first = make_rng(0, 0).normal(size=1000)
    second = make_rng(0, 1).normal(size=1000)
    assert len(np.intersect1d(first, second)) == 0


def test_acceptance_probability():
    assert acceptance_probability(-1.0, 1e6) == 1.0
    assert acceptance_probability(0.0, 1e6) == 1.0
    assert acceptance_probability(1e-3, 1e6) == 0.0
    assert acceptance_probability(0.5, 2.0) == pytest.approx(np.exp(-1.0))


def test_beta_schedule_is_geometric():
    config = tiny_config(beta=1e6, beta_start=1e2, burn_in_iters=5)
    betas = [beta_schedule(config, k) for k in range(6)]
    assert betas[0] == pytest.approx(1e2)
    assert betas[4] == pytest.approx(1e6)
    assert betas[5] == 1e6
    assert beta_schedule(tiny_config(anneal=False), 0) == 1e3


def test_out_of_bounds_proposal_is_rejected_without_evaluation():
    calls = []

    def cost(values):
        calls.append(values.copy())
        return 0.0

    chain = LmcChain(CallableCost(cost, [1.0]), [1.0], beta=1.0, sigma=0.1, rng=FixedRng(0.2))
    calls.clear()
    assert chain.attempt_site_update(0) is False
    assert calls == []
    assert chain.values[0] == 1.0


def test_downhill_moves_always_accepted():
    chain = LmcChain(CallableCost(lambda v: float(v[0] ** 2), [0.5]), [0.5], beta=1e6, sigma=0.1,
                     rng=FixedRng(-0.1, uniform=0.999))
    assert chain.attempt_site_update(0) is True
    assert chain.values[0] == pytest.approx(0.4)
    assert chain.infidelity == pytest.approx(0.16)


def test_uphill_moves_rejected_at_large_beta():
    chain = LmcChain(CallableCost(lambda v: float(v[0] ** 2), [0.5]), [0.5], beta=1e6, sigma=0.1,
                     rng=FixedRng(0.1, uniform=0.0))
    assert chain.attempt_site_update(0) is False
    assert chain.acceptance_rate == 0.0


def test_sweep_counts_and_zero_sigma():
    rng = make_rng(1, 0)
    values = rng.uniform(-1, 1, 8)
    chain = LmcChain(InfidelityCost(PARAMS, 2.0, values), values, beta=1e3, sigma=0.0, rng=rng)
    for _ in range(5):
        accepted = chain.sweep()
        assert 0 <= accepted <= chain.L
    assert chain.attempts == 5 * chain.L
    np.testing.assert_array_equal(chain.values, values)


def test_incremental_cost_matches_fresh_evaluation():
    rng = make_rng(2, 0)
    values = rng.uniform(-1, 1, 16)
    chain = LmcChain(InfidelityCost(PARAMS, 3.0, values), values, beta=1e2, sigma=0.1, rng=rng)
    for _ in range(10):
        for i in rng.integers(0, 16, size=16):
            chain.attempt_site_update(int(i))
        fresh = infidelity(Protocol(chain.values, 3.0), PARAMS)
        assert abs(chain.infidelity - fresh) < 1e-10
        chain.sweep()
        assert abs(chain.infidelity - infidelity(Protocol(chain.values, 3.0), PARAMS)) < 1e-10


def test_incremental_cost_drift_over_many_sweeps():
    rng = make_rng(3, 0)
    values = rng.uniform(-1, 1, 4)
    chain = LmcChain(InfidelityCost(PARAMS, 1.5, values), values, beta=1e3, sigma=0.05, rng=rng)
    for _ in range(2000):
        chain.sweep()
    assert abs(chain.infidelity - infidelity(Protocol(chain.values, 1.5), PARAMS)) < 1e-8


def test_magnetization_tracks_values():
    rng = make_rng(4, 0)
    values = rng.uniform(-1, 1, 8)
    chain = LmcChain(InfidelityCost(PARAMS, 2.0, values), values, beta=1e2, sigma=0.2, rng=rng)
    for i in range(40):
        chain.attempt_site_update(i % 8)
    assert chain.magnetization == pytest.approx(chain.values.mean(), abs=1e-12)


def test_metropolis_samples_gibbs_distribution():
    """Two sites in a quadratic well against the discretized Gibbs oracle"""
    beta, edges = 2.0, np.linspace(-1, 1, 5)

    grid = (np.arange(200) + 0.5) / 100 - 1
    weights = np.exp(-beta * (grid[:, None] ** 2 + grid[None, :] ** 2))
    index = np.digitize(grid, edges[1:-1])
    oracle = np.zeros((4, 4))
    for a in range(4):
        for b in range(4):
            oracle[a, b] = weights[np.ix_(index == a, index == b)].sum()
    oracle /= oracle.sum()

    rng = np.random.default_rng(20)
    chain = LmcChain(CallableCost(lambda v: float(v @ v), [0.0, 0.0]), [0.0, 0.0],
                     beta=beta, sigma=0.5, rng=rng)
    for _ in range(500):
        chain.sweep()

    samples = []
    for _ in range(40_000):
        chain.sweep()
        samples.append(chain.values.copy())
    samples = np.array(samples)

    counts, _, _ = np.histogram2d(samples[:, 0], samples[:, 1], bins=[edges, edges])
    assert np.max(np.abs(counts / counts.sum() - oracle)) < 0.015

    # thinned to roughly independent draws for the goodness-of-fit test
    thinned = samples[::10]
    counts, _, _ = np.histogram2d(thinned[:, 0], thinned[:, 1], bins=[edges, edges])
    _, p_value = chisquare(counts.ravel(), oracle.ravel() * counts.sum())
    assert p_value > 1e-4


def test_run_is_deterministic():
    config = tiny_config()
    first, second = run(config, 1, PARAMS), run(config, 1, PARAMS)
    np.testing.assert_array_equal(first.samples.matrix(), second.samples.matrix())
    assert first.acceptance_rate == second.acceptance_rate
    assert first.best_infidelity == second.best_infidelity
    assert first.seed == second.seed


def test_run_statistics():
    result = run(tiny_config(M=6), 0, PARAMS)
    assert result.run_id == "run_000"
    assert result.samples.M == 6
    assert 0.0 <= result.acceptance_rate <= 1.0
    assert 0.0 <= result.min_abs_m <= 1.0
    assert np.all(np.diff(result.min_abs_m_trace) <= 0)
    assert result.min_abs_m == pytest.approx(result.min_abs_m_trace[-1])
    assert result.best_infidelity <= result.samples.infidelities.min() + 1e-15
    assert result.best_infidelity == pytest.approx(infidelity(result.best_protocol, PARAMS), abs=1e-10)
    for protocol, cost in zip(result.samples.protocols, result.samples.infidelities):
        assert cost == pytest.approx(infidelity(protocol, PARAMS), abs=1e-10)


def test_sample_ensemble_is_ordered_and_independent():
    config = tiny_config(R=3)
    runs = sample_ensemble(config, PARAMS, workers=1, progress=False)
    assert [r.run_index for r in runs] == [0, 1, 2]
    assert len({r.seed for r in runs}) == 3
    assert not np.array_equal(runs[0].samples.matrix(), runs[1].samples.matrix())


def test_sample_ensemble_independent_of_worker_count():
    config = tiny_config(R=3)
    serial = sample_ensemble(config, PARAMS, workers=1, progress=False)
    parallel = sample_ensemble(config, PARAMS, workers=2, progress=False)
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.samples.matrix(), b.samples.matrix())


def test_sample_ensemble_validates_config():
    with pytest.raises(ConfigError):
        sample_ensemble(tiny_config(R=1), PARAMS, progress=False)
