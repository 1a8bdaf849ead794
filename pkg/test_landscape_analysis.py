"""
Tests for distance distributions, components, order parameter, transitions, barrier and trap tracking
"""

import numpy as np
import pytest

from core.errors import EmptyAfterExclusion, InsufficientRuns, NoCollapse, NotBracketed, ShapeMismatch, TrackingLost
from core.landscape_analysis import (
    AnalysisSettings,
    PhaseRecord,
    analyze_ensemble,
    barrier_estimate,
    cluster_components,
    distance_matrix,
    detect_transitions,
    histogram,
    histogram_peaks,
    largest_gap_epsilon,
    optimal_components,
    order_parameter,
    pairwise_distances,
    symmetric_components,
    trap_fraction,
    trap_tracker,
)
from core.lmc_sampler import CallableCost, LmcChain, LmcConfig, LmcRun
from core.protocol_space import Protocol, SampleSet


def make_run(index, centre, T=3.0, M=16, noise=0.01, best=1e-5, seed=0, min_abs_m=None):
    """LmcRun whose samples scatter around a fixed protocol"""
    rng = np.random.default_rng(seed * 1000 + index)
    centre = np.asarray(centre, dtype=float)
    matrix = np.clip(centre + noise * rng.standard_normal((M, centre.size)), -1, 1)
    samples = SampleSet.from_matrix(matrix, T, run_id=f"run_{index:03d}", infidelities=np.full(M, best))
    per_sample_m = matrix.mean(axis=1)
    trace = np.minimum.accumulate(np.abs(per_sample_m))
    return LmcRun(
        run_index=index,
        seed=index,
        samples=samples,
        acceptance_rate=0.5,
        min_abs_m=float(trace[-1]) if min_abs_m is None else min_abs_m,
        best_infidelity=best,
        best_protocol=samples.protocols[0],
        per_sample_m=per_sample_m,
        min_abs_m_trace=trace,
        burn_in_end_infidelity=best,
        max_post_burn_in_infidelity=best,
        config=LmcConfig(T=T, L=centre.size, R=2),
    )


L = 16
PLUS = np.full(L, 0.5)
MINUS = np.full(L, -0.5)
SYMMETRIC = np.linspace(-0.3, 0.3, L)


def three_component_runs(T=3.4, trap_best=1e-5, seed=0):
    runs = []
    for k, (centre, best) in enumerate([(PLUS, 1e-5), (MINUS, 1e-5), (SYMMETRIC, trap_best)] * 2):
        runs.append(make_run(k, centre, T=T, best=best, seed=seed))
    return runs


# === Distances ===

def test_pairwise_distances_needs_two_runs():
    with pytest.raises(InsufficientRuns):
        pairwise_distances([make_run(0, PLUS)])


def test_pairwise_distances_rejects_mixed_shapes():
    with pytest.raises(ShapeMismatch):
        pairwise_distances([make_run(0, PLUS), make_run(1, np.zeros(8))])


def test_pairwise_distance_count_and_values():
    runs = [make_run(k, PLUS if k % 2 else MINUS) for k in range(5)]
    dist = pairwise_distances(runs, "prt")
    assert dist.values.size == 10
    assert dist.pairs.shape == (10, 2)
    assert dist.T == 3.0
    assert dist.counts.sum() == 10
    i, j = dist.pairs[0]
    assert (i, j) == (0, 1)
    assert dist.values[0] == pytest.approx(1.0, abs=0.02)


def test_distance_matrix_orderings():
    runs = three_component_runs()
    avg = distance_matrix(runs, "avg")
    for tag in ("set", "prt"):
        D = distance_matrix(runs, tag)
        assert np.all(D <= avg + 1e-12)
        np.testing.assert_allclose(D, D.T)


def test_distance_matrix_rejects_unknown_metric():
    with pytest.raises(ValueError):
        distance_matrix(three_component_runs(), "overlap")


def test_histogram_peaks_of_bimodal_values():
    rng = np.random.default_rng(30)
    values = np.concatenate([rng.normal(0.05, 0.01, 500), rng.normal(0.6, 0.02, 500)])
    edges, counts = histogram(values)
    peaks = histogram_peaks(edges, counts)
    assert len(peaks) == 2
    assert peaks[0] == pytest.approx(0.05, abs=0.1)
    assert peaks[1] == pytest.approx(0.6, abs=0.1)


def test_histogram_with_identical_values():
    edges, counts = histogram(np.full(6, 0.3))
    assert counts.tolist() == [6]
    assert histogram_peaks(edges, counts) == [pytest.approx(0.3)]


def test_histogram_fixed_bins():
    edges, counts = histogram(np.linspace(0, 1, 100), bins=50)
    assert edges.size == 51
    assert counts.sum() == 100


# === Components ===

def test_largest_gap_splits_two_groups():
    runs = [make_run(k, PLUS if k < 3 else MINUS) for k in range(6)]
    D = distance_matrix(runs, "prt")
    epsilon = largest_gap_epsilon(D)
    partition = cluster_components(D, epsilon)
    assert partition.b0 == 2
    assert partition.labels.tolist() == [0, 0, 0, 1, 1, 1]
    assert partition.sizes() == [3, 3]
    assert partition.component_distances[0, 1] == pytest.approx(1.0, abs=0.02)
    assert partition.component_distances[0, 0] < 0.05


def test_largest_gap_without_structure_joins_everything():
    D = np.array([[0, 0.01, 0.02], [0.01, 0, 0.015], [0.02, 0.015, 0]])
    epsilon = largest_gap_epsilon(D, min_gap=0.1)
    assert epsilon == pytest.approx(0.12)
    assert cluster_components(D, epsilon).b0 == 1


def test_single_run_component_uses_diagonal():
    D = np.array([[0.2, 1.0], [1.0, 0.3]])
    partition = cluster_components(D, 0.5)
    assert partition.b0 == 2
    assert partition.component_distances[1, 1] == 0.3


def test_clustering_is_monotone_in_epsilon():
    rng = np.random.default_rng(31)
    for _ in range(100):
        points = rng.uniform(0, 1, size=(8, 2))
        D = np.linalg.norm(points[:, None] - points[None, :], axis=-1)
        counts = [cluster_components(D, eps).b0 for eps in np.linspace(0.01, 1.5, 15)]
        assert all(b <= a for a, b in zip(counts, counts[1:]))
        assert counts[-1] == 1


def test_clustering_is_permutation_invariant():
    rng = np.random.default_rng(32)
    for _ in range(100):
        points = rng.uniform(0, 1, size=(7, 2))
        D = np.linalg.norm(points[:, None] - points[None, :], axis=-1)
        order = rng.permutation(7)
        base = cluster_components(D, 0.3)
        permuted = cluster_components(D[np.ix_(order, order)], 0.3)
        assert base.b0 == permuted.b0
        for a in range(7):
            for b in range(7):
                same = base.labels[order[a]] == base.labels[order[b]]
                assert same == (permuted.labels[a] == permuted.labels[b])


def test_trap_component_is_not_optimal():
    runs = three_component_runs(trap_best=0.06)
    D = distance_matrix(runs, "prt")
    partition = cluster_components(D, largest_gap_epsilon(D))
    assert partition.b0 == 3
    assert optimal_components(runs, partition) == [0, 1]
    assert trap_fraction(runs, partition) == pytest.approx(1 / 3)


# === Order parameter ===

def test_order_parameter_excludes_symmetric_component():
    runs = three_component_runs()
    D = distance_matrix(runs, "prt")
    partition = cluster_components(D, largest_gap_epsilon(D))

    assert symmetric_components(runs, partition) == [2]
    order = order_parameter(runs, partition)
    assert order.excluded_components == [2]
    assert order.included.tolist() == [True, True, False] * 2
    assert order.value > 0.4

    assert order_parameter(runs).value < 0.05


def test_order_parameter_all_symmetric_excludes_nothing():
    runs = [make_run(k, SYMMETRIC) for k in range(3)]
    D = distance_matrix(runs, "prt")
    partition = cluster_components(D, largest_gap_epsilon(D))
    assert symmetric_components(runs, partition) == []
    assert order_parameter(runs, partition).excluded_components == []


def test_order_parameter_empty_after_exclusion():
    runs = three_component_runs()
    D = distance_matrix(runs, "prt")
    partition = cluster_components(D, largest_gap_epsilon(D))
    with pytest.raises(EmptyAfterExclusion):
        order_parameter(runs, partition, exclude=[0, 1, 2])


# === Transitions ===

def records(b0, min_infidelity, order, grid):
    return [PhaseRecord(T=T, b0=b, min_infidelity=i, order_parameter=m)
            for T, b, i, m in zip(grid, b0, min_infidelity, order)]


GRID = [1.0, 2.0, 3.0, 3.2, 3.4, 3.6]


def test_detect_transitions_brackets_every_transition():
    diagram = detect_transitions(records(
        [1, 1, 2, 2, 3, 2],
        [0.5, 0.3, 0.1, 1e-3, 1e-5, 1e-6],
        [0.0, 0.0, 0.2, 0.2, 0.2, 0.0],
        GRID,
    ))
    t = diagram.transitions
    assert t["T_sb"].estimate == pytest.approx(2.5)
    assert t["T_sb"].uncertainty == pytest.approx(0.5)
    assert t["T_QSL"].estimate == pytest.approx(3.3)
    assert t["T_t+"].estimate == pytest.approx(3.3)
    assert t["T_t+"].uncertainty == pytest.approx(0.1)
    assert t["T_t-"].estimate == pytest.approx(3.5)
    assert t["T_t-"].lower == 3.4 and t["T_t-"].upper == 3.6
    assert diagram.unbracketed == []


def test_detect_transitions_unobserved_is_none():
    diagram = detect_transitions(records([1, 1, 1], [0.5, 0.4, 0.3], [0, 0, 0], [1.0, 2.0, 3.0]))
    assert all(t is None for t in diagram.transitions.values())


def test_detect_transitions_outside_grid():
    data = records([2, 2, 3, 2], [0.05, 1e-3, 1e-5, 1e-6], [0.2, 0.2, 0.2, 0.0], [2.6, 3.0, 3.4, 3.6])
    with pytest.raises(NotBracketed):
        detect_transitions(data)

    diagram = detect_transitions(data, strict=False)
    assert diagram.unbracketed == ["T_sb"]
    assert diagram.transitions["T_sb"] is None
    assert diagram.transitions["T_t+"].estimate == pytest.approx(3.2)
    assert diagram.transitions["T_t-"].estimate == pytest.approx(3.5)


def test_symmetry_breaking_needs_magnetized_runs():
    # a 1 -> 2 split with the order parameter still ~0 is not T_sb
    diagram = detect_transitions(records(
        [1, 2, 1, 2], [0.5, 0.4, 0.3, 0.2], [0.0, 0.005, 0.0, 0.3], [1.0, 1.2, 1.4, 1.6]))
    assert diagram.transitions["T_sb"].lower == 1.4
    assert diagram.transitions["T_sb"].upper == 1.6

    diagram = detect_transitions(records([1, 2], [0.5, 0.4], [0.0, 0.005], [1.0, 2.0]))
    assert diagram.transitions["T_sb"] is None


def test_merging_needs_vanishing_order_parameter():
    diagram = detect_transitions(records(
        [2, 3, 2, 3, 2], [1e-3, 1e-5, 1e-6, 1e-6, 1e-6], [0.2, 0.2, 0.15, 0.1, 0.001],
        [3.2, 3.3, 3.4, 3.5, 3.6]), strict=False)
    assert diagram.transitions["T_t-"].lower == 3.5
    assert diagram.transitions["T_t-"].upper == 3.6

    diagram = detect_transitions(records([2, 3, 2], [1e-3, 1e-5, 1e-6], [0.2, 0.2, 0.2], [3.2, 3.4, 3.6]), strict=False)
    assert diagram.transitions["T_t-"] is None


def test_transitions_without_order_parameter_use_b0_only():
    diagram = detect_transitions(records([1, 2, 3, 2], [0.5, 0.1, 1e-5, 1e-6], [None] * 4, [1.0, 2.0, 3.4, 3.6]))
    assert diagram.transitions["T_sb"].estimate == pytest.approx(1.5)
    assert diagram.transitions["T_t-"].estimate == pytest.approx(3.5)


def test_detect_transitions_requires_increasing_grid():
    with pytest.raises(ValueError):
        detect_transitions(records([1, 1], [0.5, 0.4], [0, 0], [2.0, 1.0]))


def test_phase_diagram_serializes():
    diagram = detect_transitions(records([1, 2], [0.5, 0.4], [0.0, 0.3], [1.0, 2.0]))
    data = diagram.to_dict()
    assert data["transitions"]["T_sb"]["estimate"] == pytest.approx(1.5)
    assert PhaseRecord.from_dict(data["records"][1]).b0 == 2


# === Barrier ===

def test_barrier_estimate():
    estimate = barrier_estimate(3.4, {1e1: 1, 1e2: 1, 1e3: 2, 1e4: 2}, L=64)
    assert estimate.beta_star == 1e2
    assert estimate.reference_b0 == 2
    assert estimate.delta_i == pytest.approx(1 / 6400)


def test_barrier_estimate_without_collapse():
    with pytest.raises(NoCollapse):
        barrier_estimate(3.4, {1e6: 2}, L=64)
    with pytest.raises(NoCollapse):
        barrier_estimate(3.4, {1e2: 2, 1e6: 2}, L=64)


def test_barrier_of_double_well_toy():
    """One-site double well with barrier height h: beta* L ~ 1 / h"""
    h = 2e-2

    def cost(values):
        return h * (1 - (values[0] / 0.5) ** 2) ** 2

    b0_by_beta = {}
    for beta in (1e0, 1e1, 1e2, 1e3, 1e4):
        sample_sets = []
        for r, start in enumerate((0.5, 0.5, -0.5, -0.5)):
            rng = np.random.default_rng(100 + r)
            chain = LmcChain(CallableCost(cost, [start]), [start], beta=beta, sigma=0.1, rng=rng)
            protocols = []
            for k in range(20_000):
                chain.sweep()
                if k % 10 == 0:
                    protocols.append(Protocol(chain.values.copy(), 1.0))
            sample_sets.append(SampleSet(protocols, run_id=f"run_{r:03d}"))
        D = distance_matrix(sample_sets, "prt")
        b0_by_beta[beta] = cluster_components(D, 0.5).b0

    estimate = barrier_estimate(1.0, b0_by_beta, L=1)
    assert b0_by_beta[1e4] == 2
    assert estimate.beta_star == 1e2
    assert h / 3 <= estimate.delta_i <= 3 * h


# === Trap tracking ===

def snapshot(T, trap_best, magnetized_best=1e-5, seed=0):
    runs = three_component_runs(T=T, trap_best=trap_best, seed=seed)
    for run in runs:
        if run.best_infidelity != trap_best:
            run.best_infidelity = magnetized_best
    D = distance_matrix(runs, "prt")
    return T, runs, cluster_components(D, largest_gap_epsilon(D))


def test_trap_tracker_finds_crossover():
    report = trap_tracker([
        snapshot(3.0, trap_best=0.06, magnetized_best=0.01, seed=1),
        snapshot(3.2, trap_best=0.02, magnetized_best=1e-3, seed=2),
        snapshot(3.4, trap_best=1e-5, seed=3),
    ])
    assert len(report.tracks) == 3
    symmetric = [t for t in report.tracks if t.is_symmetric()]
    assert len(symmetric) == 1
    assert symmetric[0].optimal == [False, False, True]
    assert symmetric[0].min_infidelity[0] == pytest.approx(0.06)
    assert report.crossover_T == 3.4
    assert report.to_dict()["crossover_T"] == 3.4


def test_trap_tracker_starts_new_track_for_new_component():
    first = [make_run(k, PLUS if k % 2 else MINUS, T=2.0) for k in range(4)]
    D = distance_matrix(first, "prt")
    report = trap_tracker([(2.0, first, cluster_components(D, largest_gap_epsilon(D))), snapshot(3.4, 1e-5)])
    assert len(report.tracks) == 3
    assert [len(t.T) for t in report.tracks] == [2, 2, 1]
    assert report.crossover_T is None


def test_trap_tracker_ambiguous_match():
    up = np.full(L, 0.2)
    first = [make_run(k, up if k % 2 else -up, T=3.0) for k in range(4)]
    second = [make_run(k, np.zeros(L), T=3.2, noise=0.001) for k in range(2)]
    D1, D2 = distance_matrix(first, "prt"), distance_matrix(second, "prt")
    with pytest.raises(TrackingLost):
        trap_tracker([
            (3.0, first, cluster_components(D1, 0.2)),
            (3.2, second, cluster_components(D2, 0.2)),
        ])


# === Per-T pipeline ===

def test_analyze_ensemble():
    runs = three_component_runs(trap_best=0.06)
    analysis = analyze_ensemble(runs, AnalysisSettings(subsample=8))
    assert analysis.partition.b0 == 3
    assert analysis.record.b0 == 2
    assert analysis.record.b0_all == 3
    assert analysis.record.min_infidelity == 1e-5
    assert analysis.order.excluded_components == [2]
    assert set(analysis.distributions) == {"avg", "set", "prt"}
    assert analysis.distributions["avg"].values.size == 15
    assert set(analysis.record.peak_locations) == {"avg", "set", "prt"}


def test_analyze_ensemble_with_fixed_epsilon():
    runs = three_component_runs()
    analysis = analyze_ensemble(runs, AnalysisSettings(epsilon=5.0, metrics=("avg",)))
    assert analysis.partition.b0 == 1
    assert analysis.record.epsilon == 5.0
    assert list(analysis.distributions) == ["avg"]


def test_single_component_under_average_distance():
    # within-run spread dominates every d_avg, including the self-distances
    centre = np.linspace(-0.2, 0.4, L)
    runs = [make_run(k, centre, noise=0.3, seed=5) for k in range(8)]
    D = distance_matrix(runs, "avg")
    assert np.diag(D).min() > 0.2
    assert cluster_components(D, largest_gap_epsilon(D)).b0 == 1

    analysis = analyze_ensemble(runs, AnalysisSettings(cluster_metric="avg", subsample=None))
    assert analysis.record.b0_all == 1
    assert analysis.record.b0 == 1


def test_two_components_under_average_distance():
    runs = [make_run(k, PLUS if k % 2 else MINUS, noise=0.3, seed=6) for k in range(8)]
    analysis = analyze_ensemble(runs, AnalysisSettings(cluster_metric="avg", subsample=None))
    assert analysis.partition.b0 == 2
    assert analysis.partition.labels.tolist() == [0, 1] * 4
