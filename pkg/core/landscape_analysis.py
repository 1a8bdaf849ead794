"""
Landscape analysis - from LMC ensembles to topological observables

Pairwise run distances give the distribution P(d); single-linkage clustering of
the run-distance matrix gives the number of connected components b0; the
minimum |magnetization| per run is the order parameter of the merging
transition. Transitions across T are bracketed on the grid, never interpolated.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import find_peaks
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from core.errors import (
    EmptyAfterExclusion,
    InsufficientRuns,
    NoCollapse,
    NotBracketed,
    ShapeMismatch,
    TrackingLost,
)
from core.lmc_sampler import LmcRun
from core.protocol_space import SampleSet, d_avg, d_set, distance, mean_protocol, vector_distance

logger = logging.getLogger(__name__)

METRICS = ("avg", "set", "prt")
MAX_BINS = 200


@dataclass
class AnalysisSettings:
    """Knobs of the per-T analysis; defaults are the full-scale settings"""

    metrics: Tuple[str, ...] = METRICS
    bins: Union[str, int] = "fd"        # "fd" (Freedman-Diaconis) or a fixed bin count
    subsample: Optional[int] = 2 ** 8   # protocols per run used by d_avg / d_set
    epsilon: Optional[float] = None     # None -> largest-gap heuristic
    min_gap: float = 0.1
    cluster_metric: str = "prt"
    tol_qsl: float = 1e-4
    optimality_abs_tol: float = 1e-3
    optimality_rel_tol: float = 0.25
    m_threshold: float = 0.05
    m_zero_tol: float = 1e-2


@dataclass
class DistanceDistribution:
    metric_tag: str
    values: np.ndarray       # R(R-1)/2 values, pairs (i < j) in row-major order
    pairs: np.ndarray        # (R(R-1)/2, 2) run indices
    bin_edges: np.ndarray
    counts: np.ndarray
    peak_locations: List[float]
    T: float
    config: dict = field(default_factory=dict)


@dataclass
class ComponentPartition:
    labels: np.ndarray               # run position -> component id
    b0: int
    component_distances: np.ndarray  # (b0, b0) mean intra/inter distances
    threshold: float

    def members(self, component: int) -> np.ndarray:
        return np.flatnonzero(self.labels == component)

    def sizes(self) -> List[int]:
        return [int(np.sum(self.labels == c)) for c in range(self.b0)]


@dataclass
class OrderParameter:
    per_run: np.ndarray
    included: np.ndarray
    excluded_components: List[int]
    value: float   # minimum over included runs
    mean: float


@dataclass
class Transition:
    estimate: float
    uncertainty: float
    lower: float
    upper: float

    def to_dict(self):
        return {"estimate": self.estimate, "uncertainty": self.uncertainty,
                "lower": self.lower, "upper": self.upper}


@dataclass
class PhaseRecord:
    T: float
    b0: int
    min_infidelity: float
    order_parameter: Optional[float] = None
    peak_locations: Dict[str, List[float]] = field(default_factory=dict)
    b0_all: Optional[int] = None     # clusters including non-optimal (trap) ones
    epsilon: Optional[float] = None

    def to_dict(self):
        return {
            "T": self.T,
            "b0": self.b0,
            "b0_all": self.b0_all,
            "min_infidelity": self.min_infidelity,
            "order_parameter": self.order_parameter,
            "peak_locations": self.peak_locations,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, data) -> "PhaseRecord":
        return cls(
            T=float(data["T"]),
            b0=int(data["b0"]),
            min_infidelity=float(data["min_infidelity"]),
            order_parameter=data.get("order_parameter"),
            peak_locations={k: list(v) for k, v in data.get("peak_locations", {}).items()},
            b0_all=data.get("b0_all"),
            epsilon=data.get("epsilon"),
        )


@dataclass
class PhaseDiagram:
    records: List[PhaseRecord]
    transitions: Dict[str, Optional[Transition]]
    unbracketed: List[str] = field(default_factory=list)

    def to_dict(self):
        return {
            "records": [r.to_dict() for r in self.records],
            "transitions": {name: (t.to_dict() if t else None) for name, t in self.transitions.items()},
            "unbracketed": list(self.unbracketed),
        }


@dataclass
class BarrierEstimate:
    T: float
    L: int
    beta_star: float
    delta_i: float
    reference_b0: int
    b0_by_beta: Dict[float, int]

    def to_dict(self):
        return {
            "T": self.T,
            "L": self.L,
            "beta_star": self.beta_star,
            "delta_i": self.delta_i,
            "reference_b0": self.reference_b0,
            "b0_by_beta": [{"beta": b, "b0": n} for b, n in sorted(self.b0_by_beta.items())],
        }


def _sample_set(item) -> SampleSet:
    return item.samples if isinstance(item, LmcRun) else item


# === Distances ===

def distance_matrix(runs: Sequence, metric_tag: str, subsample: Optional[int] = None) -> np.ndarray:
    """
    Full (R, R) matrix of set distances between runs

    The diagonal holds the self-distance (nonzero for "avg").
    """
    if metric_tag not in METRICS:
        raise ValueError(f"Unknown metric '{metric_tag}', expected one of {METRICS}")

    sets = [_sample_set(r).subsample(subsample) for r in runs]
    R = len(sets)
    D = np.zeros((R, R))

    if metric_tag == "prt":
        means = [mean_protocol(s) for s in sets]
        for i in range(R):
            for j in range(i + 1, R):
                D[i, j] = D[j, i] = distance(means[i], means[j])
        return D

    pair_fn = d_avg if metric_tag == "avg" else d_set
    for i in range(R):
        for j in range(i, R):
            D[i, j] = D[j, i] = pair_fn(sets[i], sets[j])
    return D


def histogram(values, bins: Union[str, int] = "fd") -> Tuple[np.ndarray, np.ndarray]:
    """(bin_edges, counts); Freedman-Diaconis binning capped at MAX_BINS"""
    values = np.asarray(values, dtype=float)
    if bins == "fd":
        if values.size < 2 or np.ptp(values) == 0:
            edges = np.histogram_bin_edges(values, bins=1)
        else:
            edges = np.histogram_bin_edges(values, bins="fd")
            if edges.size - 1 > MAX_BINS:
                edges = np.histogram_bin_edges(values, bins=MAX_BINS)
    else:
        edges = np.histogram_bin_edges(values, bins=int(bins))
    counts, edges = np.histogram(values, bins=edges)
    return edges, counts


def histogram_peaks(bin_edges: np.ndarray, counts: np.ndarray, rel_prominence: float = 0.05) -> List[float]:
    """Bin centres of the histogram peaks (edge bins included)"""
    if counts.size == 0 or counts.max() == 0:
        return []
    padded = np.concatenate([[0], counts, [0]])
    peaks, _ = find_peaks(padded, prominence=max(1.0, rel_prominence * counts.max()))
    centres = (bin_edges[:-1] + bin_edges[1:]) / 2
    return [float(centres[p - 1]) for p in peaks]


def pairwise_distances(runs: Sequence, metric_tag: str = "avg", subsample: Optional[int] = 2 ** 8,
                       bins: Union[str, int] = "fd", matrix: Optional[np.ndarray] = None) -> DistanceDistribution:
    """
    All R(R-1)/2 run-pair distances for one metric, with histogram and peaks

    Raises:
        InsufficientRuns: fewer than two runs
        ShapeMismatch: runs with different (T, L)
    """
    if len(runs) < 2:
        raise InsufficientRuns(f"Pairwise distances need at least 2 runs, got {len(runs)}")

    first = _sample_set(runs[0])
    for r in runs[1:]:
        other = _sample_set(r)
        if other.T != first.T or other.L != first.L:
            raise ShapeMismatch(f"Run {other.run_id} has (T={other.T}, L={other.L}), "
                                f"expected (T={first.T}, L={first.L})")

    D = matrix if matrix is not None else distance_matrix(runs, metric_tag, subsample)
    i, j = np.triu_indices(len(runs), k=1)
    values = D[i, j]
    edges, counts = histogram(values, bins)

    return DistanceDistribution(
        metric_tag=metric_tag,
        values=values,
        pairs=np.column_stack([i, j]),
        bin_edges=edges,
        counts=counts,
        peak_locations=histogram_peaks(edges, counts),
        T=first.T,
        config={"subsample": subsample, "bins": bins, "R": len(runs), "L": first.L},
    )


# === Connected components ===

def largest_gap_epsilon(distances: np.ndarray, min_gap: float = 0.1) -> float:
    """
    Threshold in the widest gap of the sorted off-diagonal distances

    The sequence is anchored at the largest diagonal entry, the distance of a
    run to itself: 0 for d_prt and d_set, the within-run spread for d_avg.
    When no gap reaches min_gap the runs are taken as one component and the
    threshold is placed above the largest distance.
    """
    D = np.asarray(distances, dtype=float)
    i, j = np.triu_indices(D.shape[0], k=1)
    anchor = max(float(np.max(np.diag(D))), 0.0)
    sequence = np.sort(np.concatenate([[anchor], D[i, j]]))
    gaps = np.diff(sequence)
    if gaps.size == 0 or gaps.max() < min_gap:
        return float(sequence[-1] + min_gap)
    k = int(np.argmax(gaps))
    return float((sequence[k] + sequence[k + 1]) / 2)


def _canonical_labels(raw: np.ndarray) -> np.ndarray:
    # components numbered by first appearance in run order
    mapping = {}
    for label in raw:
        mapping.setdefault(int(label), len(mapping))
    return np.array([mapping[int(label)] for label in raw], dtype=int)


def cluster_components(distances: np.ndarray, epsilon: float,
                       summary_distances: Optional[np.ndarray] = None) -> ComponentPartition:
    """
    Single-linkage clusters at threshold epsilon: runs i, j joined iff d(i, j) < epsilon

    component_distances holds the mean of summary_distances (defaults to
    distances) within and between clusters; a single-run cluster uses its
    diagonal entry as intra distance.
    """
    D = np.asarray(distances, dtype=float)
    S = D if summary_distances is None else np.asarray(summary_distances, dtype=float)
    R = D.shape[0]

    adjacency = (D < epsilon) & ~np.eye(R, dtype=bool)
    _, raw = connected_components(csr_matrix(adjacency), directed=False)
    labels = _canonical_labels(raw)
    b0 = int(labels.max()) + 1

    component_distances = np.zeros((b0, b0))
    members = [np.flatnonzero(labels == c) for c in range(b0)]
    for a in range(b0):
        for b in range(a, b0):
            block = S[np.ix_(members[a], members[b])]
            if a == b:
                if members[a].size > 1:
                    iu = np.triu_indices(members[a].size, k=1)
                    value = block[iu].mean()
                else:
                    value = block[0, 0]
            else:
                value = block.mean()
            component_distances[a, b] = component_distances[b, a] = value

    return ComponentPartition(labels=labels, b0=b0, component_distances=component_distances,
                              threshold=float(epsilon))


def _optimality_cutoff(best: float, abs_tol: float, rel_tol: float) -> float:
    return best + max(abs_tol, rel_tol * best)


def optimal_components(runs: Sequence[LmcRun], partition: ComponentPartition,
                       abs_tol: float = 1e-3, rel_tol: float = 0.25) -> List[int]:
    """Components whose best infidelity is within tolerance of the ensemble best"""
    best_per_component = [min(runs[i].best_infidelity for i in partition.members(c))
                          for c in range(partition.b0)]
    cutoff = _optimality_cutoff(min(best_per_component), abs_tol, rel_tol)
    return [c for c, best in enumerate(best_per_component) if best <= cutoff]


def trap_fraction(runs: Sequence[LmcRun], partition: ComponentPartition,
                  abs_tol: float = 1e-3, rel_tol: float = 0.25) -> float:
    """Fraction of runs stuck in non-optimal components"""
    optimal = set(optimal_components(runs, partition, abs_tol, rel_tol))
    trapped = sum(1 for label in partition.labels if int(label) not in optimal)
    return trapped / len(runs)


# === Order parameter ===

def symmetric_components(runs: Sequence[LmcRun], partition: ComponentPartition,
                         m_threshold: float = 0.05) -> List[int]:
    """
    Unmagnetized clusters (mean |m| < m_threshold) coexisting with magnetized ones

    These are the C3-like components excluded from the order parameter.
    """
    mean_abs_m = [float(np.mean([runs[i].mean_abs_m() for i in partition.members(c)]))
                  for c in range(partition.b0)]
    symmetric = [c for c, m in enumerate(mean_abs_m) if m < m_threshold]
    if len(symmetric) == partition.b0:
        return []
    return symmetric


def order_parameter(runs: Sequence[LmcRun], partition: Optional[ComponentPartition] = None,
                    exclude: Optional[Sequence[int]] = None, m_threshold: float = 0.05) -> OrderParameter:
    """
    min_n |m[s_n]| per run, aggregated over the runs that are not excluded

    Raises:
        EmptyAfterExclusion: if every run is excluded
    """
    per_run = np.array([r.min_abs_m for r in runs])

    if exclude is None:
        exclude = symmetric_components(runs, partition, m_threshold) if partition is not None else []
    exclude = sorted(int(c) for c in exclude)

    if exclude and partition is None:
        raise ValueError("Excluding components requires a partition")

    included = np.ones(len(runs), dtype=bool)
    if exclude:
        included = ~np.isin(partition.labels, exclude)

    if not included.any():
        raise EmptyAfterExclusion(f"All {len(runs)} runs excluded (components {exclude})")

    return OrderParameter(
        per_run=per_run,
        included=included,
        excluded_components=exclude,
        value=float(per_run[included].min()),
        mean=float(per_run[included].mean()),
    )


# === Transitions across T ===

def _bracket(records: Sequence[PhaseRecord], k: int) -> Transition:
    lower, upper = records[k - 1].T, records[k].T
    return Transition(estimate=(lower + upper) / 2, uncertainty=(upper - lower) / 2,
                      lower=lower, upper=upper)


def _first_jump(b0: List[int], before: int, after: int, start: int = 1,
                accept: Optional[Callable[[int], bool]] = None) -> Optional[int]:
    for k in range(max(start, 1), len(b0)):
        if b0[k - 1] == before and b0[k] == after and (accept is None or accept(k)):
            return k
    return None


def detect_transitions(records: Sequence[PhaseRecord], tol_qsl: float = 1e-4,
                       m_zero_tol: float = 1e-2, strict: bool = True) -> PhaseDiagram:
    """
    Locate T_QSL, T_sb, T_t+ and T_t- on the T grid

    Each transition is the midpoint of its bracketing grid interval with the
    half-width as uncertainty. A transition that never happens on the grid is
    None. One that already happened at the first grid point (or, for T_t-,
    has not happened by the last) lies outside the grid: NotBracketed is
    raised when strict, otherwise it is listed in `unbracketed`.
    """
    records = list(records)
    if not records:
        raise ValueError("No phase records given")
    grid = [r.T for r in records]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"T grid must be strictly increasing: {grid}")

    b0 = [r.b0 for r in records]
    order = [r.order_parameter for r in records]
    transitions: Dict[str, Optional[Transition]] = {}
    unbracketed: List[str] = []

    def outside(name: str, message: str):
        if strict:
            raise NotBracketed(f"{name}: {message}")
        logger.warning(f"{name} not bracketed: {message}")
        unbracketed.append(name)
        transitions[name] = None

    # T_QSL - first grid point reaching the target
    k_qsl = next((k for k, r in enumerate(records) if r.min_infidelity < tol_qsl), None)
    if k_qsl == 0:
        outside("T_QSL", f"min infidelity already < {tol_qsl:g} at T={grid[0]}")
    else:
        transitions["T_QSL"] = _bracket(records, k_qsl) if k_qsl is not None else None

    # T_sb - b0 1 -> 2 with the order parameter departing from 0
    k_sb = _first_jump(b0, 1, 2, accept=lambda k: order[k] is None or order[k] > m_zero_tol)
    if k_sb is None and b0[0] >= 2:
        outside("T_sb", f"b0 = {b0[0]} already at T={grid[0]}")
    else:
        transitions["T_sb"] = _bracket(records, k_sb) if k_sb is not None else None

    # T_t+ - b0 2 -> 3
    k_plus = _first_jump(b0, 2, 3)
    if k_plus is None and b0[0] >= 3:
        outside("T_t+", f"b0 = {b0[0]} already at T={grid[0]}")
    else:
        transitions["T_t+"] = _bracket(records, k_plus) if k_plus is not None else None

    # T_t- - b0 3 -> 2 co-located with the order parameter hitting 0
    k_minus = _first_jump(b0, 3, 2, start=k_plus or 1,
                          accept=lambda k: order[k] is None or order[k] <= m_zero_tol)
    if k_minus is None and b0[-1] == 3:
        outside("T_t-", f"b0 still 3 at T={grid[-1]}")
    else:
        transitions["T_t-"] = _bracket(records, k_minus) if k_minus is not None else None

    return PhaseDiagram(records=records, transitions=transitions, unbracketed=unbracketed)


# === Barrier ===

def barrier_estimate(T: float, b0_by_beta: Mapping[float, int], L: int) -> BarrierEstimate:
    """
    Infidelity barrier from the largest beta at which the component structure collapses

    The structure at the largest beta is the reference; beta* is the largest
    beta with fewer components, and dI ~ 1 / (beta* L).

    Raises:
        NoCollapse: if no beta shows fewer components than the reference
    """
    if not b0_by_beta:
        raise ValueError("Empty beta scan")
    betas = sorted(b0_by_beta)
    reference = int(b0_by_beta[betas[-1]])
    collapsed = [beta for beta in betas if b0_by_beta[beta] < reference]
    if not collapsed:
        raise NoCollapse(f"T={T}: b0 = {reference} persists for every beta in {betas}")

    beta_star = float(max(collapsed))
    return BarrierEstimate(T=T, L=L, beta_star=beta_star, delta_i=1.0 / (beta_star * L),
                           reference_b0=reference, b0_by_beta={float(b): int(n) for b, n in b0_by_beta.items()})


# === Components across T (local trap) ===

@dataclass
class ComponentSummary:
    component: int
    T: float
    run_indices: List[int]
    mean_values: np.ndarray
    min_infidelity: float
    mean_abs_m: float
    symmetry_defect: float


@dataclass
class ComponentTrack:
    track_id: int
    T: List[float] = field(default_factory=list)
    min_infidelity: List[float] = field(default_factory=list)
    mean_abs_m: List[float] = field(default_factory=list)
    symmetry_defect: List[float] = field(default_factory=list)
    optimal: List[bool] = field(default_factory=list)
    mean_values: List[np.ndarray] = field(default_factory=list, repr=False)

    def is_symmetric(self, m_threshold: float = 0.05) -> bool:
        return float(np.mean(self.mean_abs_m)) < m_threshold

    def to_dict(self, m_threshold: float = 0.05):
        return {
            "track_id": self.track_id,
            "symmetric": self.is_symmetric(m_threshold),
            "T": self.T,
            "min_infidelity": self.min_infidelity,
            "mean_abs_m": self.mean_abs_m,
            "symmetry_defect": self.symmetry_defect,
            "optimal": self.optimal,
        }


@dataclass
class TrapReport:
    tracks: List[ComponentTrack]
    crossover_T: Optional[float]
    m_threshold: float = 0.05

    def to_dict(self):
        return {
            "crossover_T": self.crossover_T,
            "tracks": [t.to_dict(self.m_threshold) for t in self.tracks],
        }


def component_summaries(runs: Sequence[LmcRun], partition: ComponentPartition) -> List[ComponentSummary]:
    summaries = []
    for c in range(partition.b0):
        members = partition.members(c)
        mean_values = np.mean([runs[i].samples.matrix().mean(axis=0) for i in members], axis=0)
        summaries.append(ComponentSummary(
            component=c,
            T=runs[members[0]].samples.T,
            run_indices=[int(runs[i].run_index) for i in members],
            mean_values=mean_values,
            min_infidelity=float(min(runs[i].best_infidelity for i in members)),
            mean_abs_m=float(np.mean([runs[i].mean_abs_m() for i in members])),
            symmetry_defect=vector_distance(mean_values, -mean_values[::-1]),
        ))
    return summaries


def trap_tracker(snapshots: Sequence[Tuple[float, Sequence[LmcRun], ComponentPartition]],
                 ambiguity_ratio: float = 0.8, new_track_distance: float = 0.4,
                 m_threshold: float = 0.05, abs_tol: float = 1e-3, rel_tol: float = 0.25) -> TrapReport:
    """
    Follow components across T by nearest mean protocol and report per-component minimum infidelity

    A component farther than new_track_distance from every live track starts a
    new track. The crossover is the first T at which a symmetric (unmagnetized)
    track turns optimal after being sub-optimal, next to a magnetized track.

    Raises:
        TrackingLost: when a component is nearly equidistant from two tracks
                      (distance ratio above ambiguity_ratio) or two components
                      claim the same track
    """
    tracks: List[ComponentTrack] = []
    previous_T = None

    for T, runs, partition in sorted(snapshots, key=lambda snap: snap[0]):
        summaries = component_summaries(runs, partition)
        cutoff = _optimality_cutoff(min(s.min_infidelity for s in summaries), abs_tol, rel_tol)
        live = [t for t in tracks if previous_T is not None and t.T[-1] == previous_T]
        claimed: Dict[int, int] = {}

        for summary in summaries:
            target = None
            if live:
                for t in live:
                    if t.mean_values[-1].size != summary.mean_values.size:
                        raise ShapeMismatch(f"Cannot track components across L at T={T}")
                ranked = sorted((vector_distance(t.mean_values[-1], summary.mean_values), t.track_id)
                                for t in live)
                nearest, track_id = ranked[0]
                if nearest <= new_track_distance:
                    if len(ranked) > 1 and ranked[1][0] > 0 and nearest / ranked[1][0] > ambiguity_ratio:
                        raise TrackingLost(
                            f"T={T}: component {summary.component} is ambiguous between tracks "
                            f"{track_id} (d={nearest:.3f}) and {ranked[1][1]} (d={ranked[1][0]:.3f})")
                    if track_id in claimed:
                        raise TrackingLost(
                            f"T={T}: components {claimed[track_id]} and {summary.component} "
                            f"both match track {track_id}")
                    claimed[track_id] = summary.component
                    target = next(t for t in tracks if t.track_id == track_id)

            if target is None:
                target = ComponentTrack(track_id=len(tracks))
                tracks.append(target)

            target.T.append(float(T))
            target.min_infidelity.append(summary.min_infidelity)
            target.mean_abs_m.append(summary.mean_abs_m)
            target.symmetry_defect.append(summary.symmetry_defect)
            target.optimal.append(summary.min_infidelity <= cutoff)
            target.mean_values.append(summary.mean_values)

        previous_T = T

    crossover = None
    magnetized_T = {T for t in tracks if not t.is_symmetric(m_threshold) for T in t.T}
    for track in tracks:
        if not track.is_symmetric(m_threshold):
            continue
        for k in range(1, len(track.T)):
            if track.optimal[k] and not track.optimal[k - 1] and track.T[k] in magnetized_T:
                if crossover is None or track.T[k] < crossover:
                    crossover = track.T[k]
                break

    return TrapReport(tracks=tracks, crossover_T=crossover, m_threshold=m_threshold)


# === Per-T pipeline ===

@dataclass
class EnsembleAnalysis:
    T: float
    distributions: Dict[str, DistanceDistribution]
    matrices: Dict[str, np.ndarray]
    partition: ComponentPartition
    optimal_components: List[int]
    order: Optional[OrderParameter]
    record: PhaseRecord


def analyze_ensemble(runs: Sequence[LmcRun], settings: Optional[AnalysisSettings] = None) -> EnsembleAnalysis:
    """Distances for every requested metric, clustering, optimal components and order parameter"""
    settings = settings or AnalysisSettings()
    if len(runs) < 2:
        raise InsufficientRuns(f"Analysis needs at least 2 runs, got {len(runs)}")

    wanted = list(dict.fromkeys(list(settings.metrics) + [settings.cluster_metric, "avg"]))
    matrices = {tag: distance_matrix(runs, tag, settings.subsample) for tag in wanted}
    distributions = {
        tag: pairwise_distances(runs, tag, settings.subsample, settings.bins, matrix=matrices[tag])
        for tag in settings.metrics
    }

    cluster_matrix = matrices[settings.cluster_metric]
    epsilon = settings.epsilon
    if epsilon is None:
        epsilon = largest_gap_epsilon(cluster_matrix, settings.min_gap)
    partition = cluster_components(cluster_matrix, epsilon, summary_distances=matrices["avg"])

    optimal = optimal_components(runs, partition, settings.optimality_abs_tol, settings.optimality_rel_tol)

    try:
        order = order_parameter(runs, partition, m_threshold=settings.m_threshold)
    except EmptyAfterExclusion as e:
        logger.warning(f"Order parameter unavailable: {e}")
        order = None

    T = runs[0].samples.T
    record = PhaseRecord(
        T=T,
        b0=len(optimal),
        min_infidelity=float(min(r.best_infidelity for r in runs)),
        order_parameter=order.value if order is not None else None,
        peak_locations={tag: dist.peak_locations for tag, dist in distributions.items()},
        b0_all=partition.b0,
        epsilon=float(epsilon),
    )

    logger.info(f"T={T:g}: b0={record.b0} (all clusters {partition.b0}, eps={epsilon:.3f}), "
                f"min I={record.min_infidelity:.3e}, order parameter={record.order_parameter}")

    return EnsembleAnalysis(T=T, distributions=distributions, matrices=matrices, partition=partition,
                            optimal_components=optimal, order=order, record=record)
