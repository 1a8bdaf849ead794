"""
Protocol space - piecewise-constant controls, sample sets and their distances

All distances use the 1/L-weighted L2 norm, which equals T^-1 * integral dt
for piecewise-constant protocols on a common grid.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.spatial.distance import cdist

from core.errors import InvalidProtocol, ShapeMismatch


@dataclass(frozen=True, eq=False)
class Protocol:
    """Length-L vector of control amplitudes |s_i| <= 1 over total duration T"""

    values: np.ndarray
    T: float

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.size < 1:
            raise InvalidProtocol("Protocol needs at least one step")
        if not self.T > 0:
            raise InvalidProtocol(f"Protocol duration must be positive, got T={self.T}")
        if not np.all(np.isfinite(values)) or np.any(np.abs(values) > 1.0):
            raise InvalidProtocol(
                f"Protocol values must lie in [-1, 1] (max |s| = {np.max(np.abs(values))!r})"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "T", float(self.T))

    @property
    def L(self) -> int:
        return int(self.values.size)

    @property
    def dt(self) -> float:
        return self.T / self.L

    @classmethod
    def constant(cls, value: float, T: float, L: int) -> "Protocol":
        return cls(np.full(L, float(value)), T)

    def same_shape(self, other: "Protocol") -> bool:
        return self.L == other.L and self.T == other.T


@dataclass
class SampleSet:
    """M protocols sampled by one run, all sharing (T, L)"""

    protocols: List[Protocol]
    run_id: str = "run"
    seed: Optional[int] = None
    infidelities: Optional[np.ndarray] = None
    _matrix: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if len(self.protocols) < 1:
            raise ValueError("A SampleSet needs at least one protocol")

        first = self.protocols[0]
        for protocol in self.protocols[1:]:
            if not protocol.same_shape(first):
                raise ShapeMismatch(
                    f"SampleSet {self.run_id}: mixed shapes "
                    f"(T={first.T}, L={first.L}) vs (T={protocol.T}, L={protocol.L})"
                )

        if self.infidelities is not None:
            self.infidelities = np.asarray(self.infidelities, dtype=float).reshape(-1)
            if self.infidelities.size != len(self.protocols):
                raise ValueError(
                    f"SampleSet {self.run_id}: {self.infidelities.size} infidelities "
                    f"for {len(self.protocols)} protocols"
                )

    @classmethod
    def from_matrix(cls, matrix, T, run_id="run", seed=None, infidelities=None) -> "SampleSet":
        return cls([Protocol(row, T) for row in np.asarray(matrix, dtype=float)],
                   run_id=run_id, seed=seed, infidelities=infidelities)

    @property
    def M(self) -> int:
        return len(self.protocols)

    @property
    def T(self) -> float:
        return self.protocols[0].T

    @property
    def L(self) -> int:
        return self.protocols[0].L

    def matrix(self) -> np.ndarray:
        """Protocols stacked into an (M, L) array"""
        if self._matrix is None:
            self._matrix = np.stack([p.values for p in self.protocols])
        return self._matrix

    def subsample(self, size: Optional[int]) -> "SampleSet":
        """Evenly spaced subset of `size` protocols (deterministic)"""
        if size is None or size >= self.M:
            return self
        index = np.linspace(0, self.M - 1, size).round().astype(int)
        infidelities = None if self.infidelities is None else self.infidelities[index]
        return SampleSet([self.protocols[i] for i in index], run_id=self.run_id,
                         seed=self.seed, infidelities=infidelities)

    def union(self, other: "SampleSet") -> "SampleSet":
        _check_sets(self, other)
        infidelities = None
        if self.infidelities is not None and other.infidelities is not None:
            infidelities = np.concatenate([self.infidelities, other.infidelities])
        return SampleSet(self.protocols + other.protocols, run_id=f"{self.run_id}+{other.run_id}",
                         infidelities=infidelities)


def _check_pair(s1: Protocol, s2: Protocol):
    if not s1.same_shape(s2):
        raise ShapeMismatch(f"Cannot compare (T={s1.T}, L={s1.L}) with (T={s2.T}, L={s2.L})")


def _check_sets(A: SampleSet, B: SampleSet):
    _check_pair(A.protocols[0], B.protocols[0])


def vector_distance(a: np.ndarray, b: np.ndarray) -> float:
    """1/L-weighted L2 distance between raw value vectors of equal length"""
    return float(np.sqrt(np.mean((np.asarray(a) - np.asarray(b)) ** 2)))


def distance(s1: Protocol, s2: Protocol) -> float:
    """d = sqrt((1/L) sum_i (s1_i - s2_i)^2)"""
    _check_pair(s1, s2)
    return vector_distance(s1.values, s2.values)


def cross_distances(A: SampleSet, B: SampleSet) -> np.ndarray:
    """(M_A, M_B) matrix of protocol distances"""
    _check_sets(A, B)
    return cdist(A.matrix(), B.matrix(), metric="euclidean") / np.sqrt(A.L)


def d_avg(A: SampleSet, B: SampleSet) -> float:
    """Mean distance over all M_A * M_B cross pairs (diagonal included when A is B)"""
    return float(cross_distances(A, B).mean())


def d_set(A: SampleSet, B: SampleSet) -> float:
    """Minimum distance over all cross pairs"""
    return float(cross_distances(A, B).min())


def mean_protocol(A: SampleSet) -> Protocol:
    """Elementwise mean protocol; convexity keeps it inside [-1, 1]^L"""
    return Protocol(A.matrix().mean(axis=0), A.T)


def d_prt(A: SampleSet, B: SampleSet) -> float:
    """Distance between the mean protocols of A and B"""
    _check_sets(A, B)
    return distance(mean_protocol(A), mean_protocol(B))


def magnetization(s: Protocol) -> float:
    """m[s] = (1/L) sum_i s_i"""
    return float(np.mean(s.values))


def symmetry_transform(s: Protocol) -> Protocol:
    """s(t) -> -s(T - t), i.e. (s_1..s_L) -> (-s_L..-s_1)"""
    return Protocol(-s.values[::-1], s.T)


def symmetry_defect(s: Protocol) -> float:
    """distance(s, symmetry_transform(s)); zero for symmetric protocols"""
    return distance(s, symmetry_transform(s))
