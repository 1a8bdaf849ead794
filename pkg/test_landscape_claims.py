"""
Long-running checks of the landscape across T, at budgets below the desk preset

Run with: pytest -m slow test_landscape_claims.py
"""

import os
from functools import lru_cache

import numpy as np
import pytest

from core.errors import NoCollapse
from core.landscape_analysis import (
    AnalysisSettings,
    analyze_ensemble,
    barrier_estimate,
    detect_transitions,
    symmetric_components,
    trap_fraction,
)
from core.lmc_sampler import LmcConfig, sample_ensemble
from core.quantum_core import ModelParams, bloch_trajectory, boundary_states, reduced_bloch, trajectory_summary

pytestmark = pytest.mark.slow

WORKERS = os.cpu_count() or 1
B0_GRID = (1.0, 1.6, 2.6, 3.0, 3.3, 3.45, 3.6)
BETAS = (1e1, 1e2, 1e3, 1e4, 1e5, 1e6)


def budget(T, L=32, R=16, beta=1e6, anneal=True, seed=0):
    return LmcConfig(T=T, L=L, beta=beta, sigma=1e-2, burn_in_iters=4096, delta_n=64, M=32, R=R,
                     anneal=anneal, beta_start=1e2, seed=seed)


@lru_cache(maxsize=None)
def ensemble(T, L=32, R=16, beta=1e6, anneal=True):
    return sample_ensemble(budget(T, L=L, R=R, beta=beta, anneal=anneal), workers=WORKERS, progress=False)


@lru_cache(maxsize=None)
def analysis(T, L=32, R=16, beta=1e6, anneal=True):
    return analyze_ensemble(ensemble(T, L, R, beta, anneal), AnalysisSettings(subsample=None))


def best(runs):
    return min(r.best_infidelity for r in runs)


def avg_peaks(result):
    return sorted(result.distributions["avg"].peak_locations)


# === Speed limit ===

def test_target_reached_above_speed_limit():
    assert best(ensemble(3.4, L=64, R=8)) < 1e-4


def test_target_not_reached_below_speed_limit():
    assert best(ensemble(2.6, L=64, R=8)) > 1e-3


# === Distance distributions ===

def test_symmetry_breaking_peak():
    peaks = avg_peaks(analysis(1.6))
    assert len(peaks) >= 2
    assert any(abs(p - 0.6) <= 0.1 for p in peaks[1:])


def test_intra_component_peak_jumps_past_speed_limit():
    assert avg_peaks(analysis(2.6))[0] < 0.25
    for beta in (1e4, 1e6):
        assert avg_peaks(analysis(3.6, beta=beta))[0] == pytest.approx(0.5, abs=0.1)


def test_third_component_peaks():
    peaks = avg_peaks(analysis(3.3))
    assert any(abs(p - 1.2) <= 0.15 for p in peaks)
    assert any(abs(p - 0.4) <= 0.15 for p in peaks)


# === Components and transitions ===

def test_component_count_sequence():
    assert [analysis(T).record.b0 for T in B0_GRID] == [1, 2, 2, 2, 3, 3, 2]


def test_order_parameter_and_merging():
    records = [analysis(T).record for T in B0_GRID]
    for record in records:
        if 1.6 <= record.T <= 3.4:
            assert record.order_parameter > 0.05
    assert records[-1].order_parameter < 1e-2

    transitions = detect_transitions(records).transitions
    assert transitions["T_t-"].estimate == pytest.approx(3.5, abs=0.1)
    assert transitions["T_t+"].lower < 3.4
    assert transitions["T_t+"].upper > 3.2


# === Local trap ===

def test_local_trap_without_annealing():
    runs = ensemble(2.8, anneal=False)
    result = analysis(2.8, anneal=False)
    trapped = set(symmetric_components(runs, result.partition))
    assert trapped

    in_trap = [run for run, label in zip(runs, result.partition.labels) if label in trapped]
    magnetized = [run for run, label in zip(runs, result.partition.labels) if label not in trapped]
    assert 0 < len(in_trap) < len(runs) / 2
    assert best(in_trap) == pytest.approx(0.06, abs=0.02)
    assert best(magnetized) == pytest.approx(0.01, abs=0.005)


def test_annealing_avoids_the_trap():
    runs = ensemble(2.8, L=64)
    assert trap_fraction(runs, analysis(2.8, L=64).partition) < 0.1


# === Barrier ===

def test_barrier_from_beta_scan():
    b0_by_beta = {beta: analysis(3.4, L=64, R=8, beta=beta).partition.b0 for beta in BETAS}
    try:
        estimate = barrier_estimate(3.4, b0_by_beta, L=64)
    except NoCollapse:
        pytest.fail(f"no collapse in {b0_by_beta}")
    assert estimate.beta_star <= 1e2
    assert 1e-3 / 3 <= estimate.delta_i <= 3e-3


# === Observables ===

def test_symmetric_component_trajectory_halves_bloch_norm():
    runs = ensemble(3.4)
    result = analysis(3.4)
    labels = result.partition.labels
    trapped = set(symmetric_components(runs, result.partition))
    assert trapped

    def min_norm(members):
        run = min(members, key=lambda r: r.best_infidelity)
        return trajectory_summary(bloch_trajectory(run.best_protocol, ModelParams()))["min_norm"]

    symmetric = min_norm([r for r, label in zip(runs, labels) if label in trapped])
    magnetized = min_norm([r for r, label in zip(runs, labels) if label not in trapped])
    assert symmetric == pytest.approx(0.5, abs=0.1)
    assert 0.35 <= symmetric / magnetized <= 0.65


def test_trajectory_endpoints_match_boundary_states():
    params = ModelParams()
    psi0, target = boundary_states(params)
    run = min(ensemble(3.4), key=lambda r: r.best_infidelity)
    points = bloch_trajectory(run.best_protocol, params)

    np.testing.assert_allclose(points[0].n, reduced_bloch(psi0).n, atol=1e-10)
    np.testing.assert_allclose(points[-1].n, reduced_bloch(target).n, atol=1e-2)
