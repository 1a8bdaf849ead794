"""
Langevin-Monte-Carlo (LMC) sampler on protocol space

One LMC iteration is a sweep of L single-site Gaussian proposals accepted with
the Metropolis rule min(1, exp(-beta * dI)). Proposals that leave [-1, 1] are
rejected, not clipped. Each run draws from its own Philox stream keyed by
(base seed, run index), so an ensemble is reproducible whatever the scheduling.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from itertools import repeat
from typing import Callable, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from core.errors import ConfigError
from core.protocol_space import Protocol, SampleSet
from core.quantum_core import ModelParams, SX_TOTAL, boundary_states, build_hamiltonian, step_propagator

logger = logging.getLogger(__name__)

INIT_TAGS = ("uniform01", "uniform", "zero", "custom")


@dataclass
class LmcConfig:
    """Sampler parameters; defaults are the full-scale values"""

    T: float
    L: int = 64
    beta: float = 1e6
    sigma: float = 1e-2
    burn_in_iters: int = 2 ** 14
    delta_n: int = 2 ** 14
    M: int = 2 ** 12
    R: int = 64
    anneal: bool = True
    beta_start: float = 1e2
    anneal_iters: Optional[int] = None  # ramp length, defaults to burn_in_iters
    seed: int = 0
    init: str = "uniform01"
    init_values: Optional[List[float]] = None

    def validate(self):
        """Raise ConfigError on the first invalid field"""
        checks = [
            (self.T > 0, f"T must be positive, got {self.T}"),
            (self.L >= 1, f"L must be >= 1, got {self.L}"),
            (self.beta > 0, f"beta must be positive, got {self.beta}"),
            (self.sigma > 0, f"sigma must be positive, got {self.sigma}"),
            (self.burn_in_iters >= 0, f"burn_in_iters must be >= 0, got {self.burn_in_iters}"),
            (self.delta_n >= 1, f"delta_n must be >= 1, got {self.delta_n}"),
            (self.M >= 1, f"M must be >= 1, got {self.M}"),
            (self.R >= 2, f"R must be >= 2 (pairwise distances need two runs), got {self.R}"),
            (self.beta_start > 0, f"beta_start must be positive, got {self.beta_start}"),
            (self.init in INIT_TAGS, f"init must be one of {INIT_TAGS}, got {self.init!r}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

        if self.init == "custom":
            if self.init_values is None or len(self.init_values) != self.L:
                raise ConfigError("init 'custom' needs init_values of length L")
            if np.any(np.abs(np.asarray(self.init_values, dtype=float)) > 1.0):
                raise ConfigError("init_values must lie in [-1, 1]")

        return True

    def to_dict(self):
        return asdict(self)


@dataclass
class LmcRun:
    """Result of a single LMC run"""

    run_index: int
    seed: int
    samples: SampleSet
    acceptance_rate: float
    min_abs_m: float
    best_infidelity: float
    best_protocol: Protocol
    per_sample_m: np.ndarray
    min_abs_m_trace: np.ndarray  # running minimum of |m| at each sample
    burn_in_end_infidelity: float
    max_post_burn_in_infidelity: float
    config: LmcConfig

    @property
    def run_id(self) -> str:
        return self.samples.run_id

    @property
    def stream_key(self) -> Tuple[int, int]:
        """(base_seed, run_index): the SeedSequence entropy that drives this run's Philox stream"""
        return self.config.seed, self.run_index

    def mean_abs_m(self) -> float:
        return float(np.mean(np.abs(self.per_sample_m)))


def make_rng(base_seed: int, run_index: int) -> np.random.Generator:
    """Counter-based generator for the stream (base_seed, run_index)"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([base_seed, run_index])))


def derived_seed(base_seed: int, run_index: int) -> int:
    """Single integer naming the stream; rebuilding the run needs stream_key, not this value"""
    return int(np.random.SeedSequence([base_seed, run_index]).generate_state(1, dtype=np.uint64)[0])


def beta_schedule(config: LmcConfig, k: int) -> float:
    """Inverse temperature at burn-in sweep k (geometric ramp when annealing)"""
    ramp = config.anneal_iters if config.anneal_iters is not None else config.burn_in_iters
    if not config.anneal or ramp <= 1 or k >= ramp:
        return config.beta
    return config.beta_start * (config.beta / config.beta_start) ** (k / (ramp - 1))


def acceptance_probability(delta: float, beta: float) -> float:
    """Metropolis acceptance min(1, exp(-beta * delta))"""
    if delta <= 0:
        return 1.0
    return math.exp(-beta * delta)


def init_protocol(config: LmcConfig, rng: np.random.Generator) -> Protocol:
    """Initial protocol s_0 selected by config.init"""
    if config.init == "uniform01":
        values = rng.uniform(0.0, 1.0, size=config.L)
    elif config.init == "uniform":
        values = rng.uniform(-1.0, 1.0, size=config.L)
    elif config.init == "zero":
        values = np.zeros(config.L)
    elif config.init == "custom":
        values = np.asarray(config.init_values, dtype=float)
    else:
        raise ConfigError(f"Unknown init tag: {config.init!r}")
    return Protocol(values, config.T)


class InfidelityCost:
    """
    Incremental infidelity of a protocol under single-site changes

    Caches the step propagators U_k, the prefix states f_k = U_{k-1}..U_0 |psi_0>
    and the suffix costates b_k = U_k^+..U_{L-1}^+ |psi_*>, so the overlap with
    site i replaced is <b_{i+1}| U_i' |f_i>. After an accepted change at site i
    only f_{>i} and b_{<=i} go stale; they are rebuilt lazily when a later
    proposal needs them.
    """

    def __init__(self, params: ModelParams, T: float, values):
        values = np.asarray(values, dtype=float)
        self.L = values.size
        self.dt = T / self.L

        psi0, target = boundary_states(params)
        self._psi0 = psi0.amplitudes
        self._target = target.amplitudes
        self._h_drift = build_hamiltonian(params, 0.0)
        self._h_drive = params.h_x * SX_TOTAL

        self._unitaries = np.stack([self._propagator(s) for s in values])
        self._forward = np.empty((self.L + 1, 4), dtype=complex)
        self._backward = np.empty((self.L + 1, 4), dtype=complex)
        self._pending = None
        self.value = self.refresh()

    def _propagator(self, s: float) -> np.ndarray:
        return step_propagator(self._h_drift - s * self._h_drive, self.dt)

    @staticmethod
    def _from_overlap(overlap: complex) -> float:
        return min(1.0, max(0.0, 1.0 - abs(overlap) ** 2))

    def _extend_forward(self, upto: int):
        while self._forward_valid < upto:
            k = self._forward_valid
            self._forward[k + 1] = self._unitaries[k] @ self._forward[k]
            self._forward_valid += 1

    def _extend_backward(self, downto: int):
        while self._backward_valid > downto:
            k = self._backward_valid - 1
            self._backward[k] = self._unitaries[k].conj().T @ self._backward[k + 1]
            self._backward_valid -= 1

    def refresh(self) -> float:
        """Rebuild every cached product from the stored propagators"""
        self._forward[0] = self._psi0
        self._forward_valid = 0
        self._extend_forward(self.L)

        self._backward[self.L] = self._target
        self._backward_valid = self.L
        self._extend_backward(0)

        self.value = self._from_overlap(np.vdot(self._target, self._forward[self.L]))
        return self.value

    def trial(self, i: int, new_value: float) -> float:
        """Infidelity if site i took new_value (nothing is committed)"""
        self._extend_forward(i)
        self._extend_backward(i + 1)
        U = self._propagator(new_value)
        self._pending = (i, new_value, U)
        return self._from_overlap(np.vdot(self._backward[i + 1], U @ self._forward[i]))

    def commit(self, i: int, new_value: float, new_cost: float):
        if self._pending is not None and self._pending[0] == i and self._pending[1] == new_value:
            U = self._pending[2]
        else:
            U = self._propagator(new_value)
        self._pending = None

        self._unitaries[i] = U
        self._forward_valid = min(self._forward_valid, i)
        self._backward_valid = max(self._backward_valid, i + 1)
        self.value = new_cost


class CallableCost:
    """Cost backend for an arbitrary function of the value vector (toy landscapes)"""

    def __init__(self, fn: Callable[[np.ndarray], float], values):
        self.fn = fn
        self._values = np.array(values, dtype=float)
        self.value = self.refresh()

    def refresh(self) -> float:
        self.value = float(self.fn(self._values))
        return self.value

    def trial(self, i: int, new_value: float) -> float:
        old = self._values[i]
        self._values[i] = new_value
        try:
            return float(self.fn(self._values))
        finally:
            self._values[i] = old

    def commit(self, i: int, new_value: float, new_cost: float):
        self._values[i] = new_value
        self.value = new_cost


class LmcChain:
    """Mutable state of one LMC run: protocol, cost cache, counters"""

    def __init__(self, cost, values, beta: float, sigma: float, rng: np.random.Generator):
        self.cost = cost
        self.values = np.array(values, dtype=float)
        self.beta = beta
        self.sigma = sigma
        self.rng = rng
        self.attempts = 0
        self.accepted = 0
        self._value_sum = float(self.values.sum())

    @property
    def L(self) -> int:
        return self.values.size

    @property
    def infidelity(self) -> float:
        return self.cost.value

    @property
    def magnetization(self) -> float:
        return self._value_sum / self.L

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0

    def reset_counters(self):
        self.attempts = 0
        self.accepted = 0

    def attempt_site_update(self, i: int) -> bool:
        """Propose s_i + xi, xi ~ N(0, sigma^2); returns True on acceptance"""
        self.attempts += 1
        proposal = self.values[i] + self.rng.normal(0.0, self.sigma)
        if abs(proposal) > 1.0:
            return False

        new_cost = self.cost.trial(i, proposal)
        delta = new_cost - self.cost.value
        if delta > 0 and self.rng.random() >= acceptance_probability(delta, self.beta):
            return False

        self.cost.commit(i, proposal, new_cost)
        self._value_sum += proposal - self.values[i]
        self.values[i] = proposal
        self.accepted += 1
        return True

    def sweep(self) -> int:
        """L attempted updates at uniformly random sites, then a full cache refresh"""
        sites = self.rng.integers(0, self.L, size=self.L)
        accepted = 0
        for i in sites:
            accepted += self.attempt_site_update(int(i))
        self.cost.refresh()
        self._value_sum = float(self.values.sum())
        return accepted

    def protocol(self, T: float) -> Protocol:
        return Protocol(self.values.copy(), T)


def run(config: LmcConfig, run_index: int, params: Optional[ModelParams] = None) -> LmcRun:
    """
    Single LMC run: burn-in (optionally annealed), then M samples spaced by delta_n sweeps

    Deterministic given (config, run_index, params).
    """
    params = params or ModelParams()
    rng = make_rng(config.seed, run_index)
    initial = init_protocol(config, rng)

    cost = InfidelityCost(params, config.T, initial.values)
    chain = LmcChain(cost, initial.values, beta=beta_schedule(config, 0), sigma=config.sigma, rng=rng)

    best_infidelity = chain.infidelity
    best_values = chain.values.copy()

    for k in range(config.burn_in_iters):
        chain.beta = beta_schedule(config, k)
        chain.sweep()
        if chain.infidelity < best_infidelity:
            best_infidelity = chain.infidelity
            best_values = chain.values.copy()

    burn_in_end = chain.infidelity
    chain.beta = config.beta
    chain.reset_counters()

    run_id = f"run_{run_index:03d}"
    logger.debug(f"{run_id}: burn-in done, I = {burn_in_end:.3e}")

    min_abs_m = math.inf
    max_post = burn_in_end
    samples, infidelities, per_sample_m, trace = [], [], [], []

    for _ in range(config.M):
        for _ in range(config.delta_n):
            chain.sweep()
            min_abs_m = min(min_abs_m, abs(chain.magnetization))
            max_post = max(max_post, chain.infidelity)
            if chain.infidelity < best_infidelity:
                best_infidelity = chain.infidelity
                best_values = chain.values.copy()

        samples.append(chain.protocol(config.T))
        infidelities.append(chain.infidelity)
        per_sample_m.append(chain.magnetization)
        trace.append(min_abs_m)

    seed = derived_seed(config.seed, run_index)
    sample_set = SampleSet(samples, run_id=run_id, seed=seed, infidelities=np.array(infidelities))

    logger.debug(
        f"{run_id}: acceptance {chain.acceptance_rate:.3f}, best I = {best_infidelity:.3e}, "
        f"min|m| = {min_abs_m:.3e}"
    )

    return LmcRun(
        run_index=run_index,
        seed=seed,
        samples=sample_set,
        acceptance_rate=chain.acceptance_rate,
        min_abs_m=float(min(min_abs_m, 1.0)),
        best_infidelity=float(best_infidelity),
        best_protocol=Protocol(best_values, config.T),
        per_sample_m=np.array(per_sample_m),
        min_abs_m_trace=np.array(trace),
        burn_in_end_infidelity=float(burn_in_end),
        max_post_burn_in_infidelity=float(max_post),
        config=config,
    )


def sample_ensemble(config: LmcConfig, params: Optional[ModelParams] = None,
                    workers: int = 1, progress: bool = True) -> List[LmcRun]:
    """R independent runs, ordered by run_index whatever the worker count"""
    config.validate()
    params = params or ModelParams()
    indices = list(range(config.R))
    description = f"LMC T={config.T:g}"

    logger.info(f"Sampling {config.R} runs at T={config.T:g} (L={config.L}, beta={config.beta:g}, "
                f"M={config.M}, delta_n={config.delta_n}, workers={workers})")

    if workers <= 1:
        return [run(config, r, params)
                for r in tqdm(indices, desc=description, disable=None if progress else True)]

    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = pool.map(run, repeat(config), indices, repeat(params))
        return list(tqdm(results, total=len(indices), desc=description,
                         disable=None if progress else True))
