"""
Exact dynamics of the driven two-qubit system

Natural units (hbar = 1). States live in the product basis
{|uu>, |ud>, |du>, |dd>} (u = spin up, first qubit is the left factor);
every serialized state uses this ordering.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np
from scipy.special import entr

from core.errors import DegenerateGroundState
from core.protocol_space import Protocol

BASIS_LABELS = ("uu", "ud", "du", "dd")

# Pauli matrices and single-qubit identity
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

# Two-qubit spin-1/2 operators S = sigma / 2
SZ_SZ = np.kron(SIGMA_Z, SIGMA_Z) / 4
SZ_TOTAL = (np.kron(SIGMA_Z, IDENTITY_2) + np.kron(IDENTITY_2, SIGMA_Z)) / 2
SX_TOTAL = (np.kron(SIGMA_X, IDENTITY_2) + np.kron(IDENTITY_2, SIGMA_X)) / 2

NORM_TOL = 1e-12
DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    """Couplings of H = -J Sz1 Sz2 - h_z (Sz1 + Sz2) - s(t) h_x (Sx1 + Sx2)"""

    J: float = 2.0
    h_z: float = 1.0
    h_x: float = float(np.sqrt(5.0))
    h_init: float = -2.0    # effective transverse field defining |psi_0>
    h_target: float = 2.0   # effective transverse field defining |psi_*>

    def __post_init__(self):
        if not self.h_x > 0:
            raise ValueError(f"h_x must be positive (the sign lives in s(t)), got {self.h_x}")

    def to_dict(self):
        return {
            "J": self.J,
            "h_z": self.h_z,
            "h_x": self.h_x,
            "h_init": self.h_init,
            "h_target": self.h_target,
        }


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Normalized two-qubit pure state"""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"State is not normalized: |psi|^2 = {norm!r}")
        amps = amps.copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_unnormalized(cls, amplitudes) -> "QuantumState":
        amps = np.asarray(amplitudes, dtype=complex).reshape(4)
        return cls(amps / np.linalg.norm(amps))

    def overlap(self, other: "QuantumState") -> complex:
        """<self|other>"""
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "QuantumState") -> float:
        return abs(self.overlap(other)) ** 2

    def swap_asymmetry(self) -> float:
        """|a_ud - a_du|, zero in the qubit-exchange symmetric sector"""
        return float(abs(self.amplitudes[1] - self.amplitudes[2]))


@dataclass(frozen=True, eq=False)
class BlochPoint:
    """Reduced single-qubit state of the first qubit"""

    n: np.ndarray
    norm: float
    entropy: float  # nats


def build_hamiltonian(params: ModelParams, s: float) -> np.ndarray:
    """Driven Hamiltonian at control amplitude s (4x4, Hermitian)"""
    return -params.J * SZ_SZ - params.h_z * SZ_TOTAL - s * params.h_x * SX_TOTAL


def static_hamiltonian(params: ModelParams, h_eff: float) -> np.ndarray:
    """Hamiltonian with the drive replaced by a fixed transverse field h_eff"""
    return -params.J * SZ_SZ - params.h_z * SZ_TOTAL - h_eff * SX_TOTAL


def _fix_global_phase(vector: np.ndarray) -> np.ndarray:
    # largest-magnitude amplitude made real positive
    k = int(np.argmax(np.abs(vector)))
    return vector * (abs(vector[k]) / vector[k])


def ground_state(params: ModelParams, h_eff: float) -> QuantumState:
    """
    Ground state of the static Hamiltonian with transverse field h_eff

    Raises:
        DegenerateGroundState: if the two lowest levels are closer than 1e-10
    """
    energies, vectors = np.linalg.eigh(static_hamiltonian(params, h_eff))
    if energies[1] - energies[0] < DEGENERACY_TOL:
        raise DegenerateGroundState(
            f"Ground level of H[h_eff={h_eff}] is degenerate "
            f"(E0={energies[0]:.12g}, E1={energies[1]:.12g})"
        )
    return QuantumState.from_unnormalized(_fix_global_phase(vectors[:, 0]))


def ground_energy(params: ModelParams, h_eff: float) -> float:
    return float(np.linalg.eigvalsh(static_hamiltonian(params, h_eff))[0])


@lru_cache(maxsize=64)
def boundary_states(params: ModelParams) -> Tuple[QuantumState, QuantumState]:
    """(|psi_0>, |psi_*>) for a model, cached per parameter set"""
    return ground_state(params, params.h_init), ground_state(params, params.h_target)


def step_propagator(H: np.ndarray, dt: float) -> np.ndarray:
    """U = exp(-i dt H) through the eigendecomposition of the Hermitian H"""
    energies, vectors = np.linalg.eigh(H)
    return (vectors * np.exp(-1j * dt * energies)) @ vectors.conj().T


def step_unitaries(protocol: Protocol, params: ModelParams) -> np.ndarray:
    """Stack of the L step propagators, shape (L, 4, 4)"""
    dt = protocol.dt
    return np.stack([step_propagator(build_hamiltonian(params, s), dt) for s in protocol.values])


def evolve(protocol: Protocol, params: ModelParams) -> Tuple[QuantumState, List[QuantumState]]:
    """
    Propagate |psi_0> through the piecewise-constant protocol

    Returns:
        tuple: (final state, trajectory) where the trajectory holds the L + 1
               states at the step boundaries, the initial state included
    """
    psi0, _ = boundary_states(params)
    psi = psi0.amplitudes.copy()
    trajectory = [psi0]

    for U in step_unitaries(protocol, params):
        psi = U @ psi
        trajectory.append(QuantumState(psi))

    return trajectory[-1], trajectory


def final_amplitudes(protocol: Protocol, params: ModelParams) -> np.ndarray:
    psi0, _ = boundary_states(params)
    psi = psi0.amplitudes.copy()
    for U in step_unitaries(protocol, params):
        psi = U @ psi
    return psi


def infidelity(protocol: Protocol, params: ModelParams) -> float:
    """I = 1 - |<psi_*|psi(T)>|^2"""
    _, target = boundary_states(params)
    overlap = np.vdot(target.amplitudes, final_amplitudes(protocol, params))
    return float(min(1.0, max(0.0, 1.0 - abs(overlap) ** 2)))


def entanglement_entropy(norm: float) -> float:
    """S_E = -q log q - (1-q) log(1-q), q = (|n| + 1) / 2"""
    q = (min(float(norm), 1.0) + 1.0) / 2.0
    return float(entr(q) + entr(1.0 - q))


def reduced_bloch(state: QuantumState) -> BlochPoint:
    """Bloch vector and entanglement entropy of the first qubit"""
    psi = state.amplitudes.reshape(2, 2)
    # rho_1 = Tr_2 |psi><psi|
    rho1 = psi @ psi.conj().T
    n = np.array([np.trace(rho1 @ sigma).real for sigma in (SIGMA_X, SIGMA_Y, SIGMA_Z)])
    norm = float(np.linalg.norm(n))
    return BlochPoint(n=n, norm=norm, entropy=entanglement_entropy(norm))


def bloch_trajectory(protocol: Protocol, params: ModelParams) -> List[BlochPoint]:
    """Reduced Bloch points at every step boundary"""
    _, trajectory = evolve(protocol, params)
    return [reduced_bloch(state) for state in trajectory]


def trajectory_summary(points: List[BlochPoint]) -> dict:
    norms = np.array([p.norm for p in points])
    entropies = np.array([p.entropy for p in points])
    return {
        "min_norm": float(norms.min()),
        "argmin_step": int(norms.argmin()),
        "max_entropy": float(entropies.max()),
    }
