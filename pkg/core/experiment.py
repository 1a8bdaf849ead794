import logging
import os
from datetime import datetime
from typing import Dict, List, Optional

import numpy as np

from config import Config
from core import artifacts
from core.errors import NoCollapse, TrackingLost
from core.experiment_config import ExperimentConfig
from core.landscape_analysis import (
    EnsembleAnalysis,
    PhaseDiagram,
    PhaseRecord,
    analyze_ensemble,
    barrier_estimate,
    detect_transitions,
    trap_tracker,
)
from core.lmc_sampler import LmcRun, sample_ensemble
from core.protocol_space import Protocol
from core.quantum_core import (
    BASIS_LABELS,
    bloch_trajectory,
    boundary_states,
    evolve,
    ground_energy,
    ground_state,
    infidelity,
    reduced_bloch,
    trajectory_summary,
)

CHECKPOINT_FILE = "checkpoint.json"


class ExperimentRunner:
    """Runs sampling and analysis for one experiment configuration and writes the artifact tree"""

    def __init__(self, experiment_config: ExperimentConfig, progress: bool = True):
        """
        Args:
            experiment_config: ExperimentConfig object (required)
            progress: Show tqdm progress bars for ensembles
        """
        if not experiment_config:
            raise ValueError("ExperimentRunner requires an ExperimentConfig object")

        self.config = experiment_config
        self.params = experiment_config.get_model_params()
        self.settings = experiment_config.get_analysis_settings()
        self.output_dir = experiment_config.get_output_dir()
        self.workers = experiment_config.get_workers()
        self.progress = progress

        self._setup_logging()

    def _setup_logging(self):
        """Setup logging configuration"""
        os.makedirs(Config.LOGS_DIR, exist_ok=True)

        log_file = os.path.join(Config.LOGS_DIR, f"run_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log")

        logging.basicConfig(
            level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
            format='%(asctime)s - %(levelname)s - %(message)s',
            handlers=[
                logging.FileHandler(log_file),
                logging.StreamHandler()
            ]
        )

        self.logger = logging.getLogger(__name__)

    def _t_dir(self, T: float) -> str:
        return os.path.join(self.output_dir, f"T_{artifacts.fmt(T)}")

    # === Single-shot commands ===

    def ground_states(self, h_eff: Optional[float] = None) -> Dict:
        """
        Boundary states of the model, or the ground state at a single field h_eff

        Raises:
            DegenerateGroundState: if a requested ground level is degenerate
        """
        if h_eff is not None:
            state = ground_state(self.params, h_eff)
            return {
                "h_eff": h_eff,
                "basis": list(BASIS_LABELS),
                "amplitudes": _amplitudes(state.amplitudes),
                "energy": ground_energy(self.params, h_eff),
            }

        psi0, target = boundary_states(self.params)
        overlap = target.fidelity(psi0)
        return {
            "model": self.params.to_dict(),
            "basis": list(BASIS_LABELS),
            "psi_0": _amplitudes(psi0.amplitudes),
            "psi_target": _amplitudes(target.amplitudes),
            "energy_0": ground_energy(self.params, self.params.h_init),
            "energy_target": ground_energy(self.params, self.params.h_target),
            "overlap": overlap,
            "infidelity_T0": 1.0 - overlap,
            "swap_asymmetry": max(psi0.swap_asymmetry(), target.swap_asymmetry()),
        }

    def evaluate(self, protocols: List[Protocol], trajectory_path: str,
                 frames_path: Optional[str] = None) -> Dict:
        """
        Infidelity of every protocol; Bloch trajectory CSV of the first one

        With frames_path, the Bloch trajectories of all protocols are written as
        consecutive frames; for the samples of one run these are LMC snapshots
        delta_n sweeps apart.
        """
        first = protocols[0]
        _, states = evolve(first, self.params)
        points = [reduced_bloch(state) for state in states]
        artifacts.write_trajectory(trajectory_path, first.T, states, points)
        self.logger.info(f"Trajectory written to {trajectory_path}")

        if frames_path:
            frames = [bloch_trajectory(p, self.params) for p in protocols]
            artifacts.write_frames(frames_path, first.T, frames)
            self.logger.info(f"{len(frames)} frames written to {frames_path}")

        return {
            "T": first.T,
            "L": first.L,
            "infidelities": [infidelity(p, self.params) for p in protocols],
            "trajectory": trajectory_summary(points),
        }

    def sample(self, T: float, run_dir: Optional[str] = None, beta: Optional[float] = None) -> List[LmcRun]:
        """
        R runs at duration T, written to run_dir and read back

        Run files already in run_dir are removed first.
        """
        run_dir = run_dir or os.path.join(self._t_dir(T), "runs")
        lmc_config = self.config.get_lmc_config(T, beta=beta)
        runs = sample_ensemble(lmc_config, self.params, workers=self.workers, progress=self.progress)

        stale = artifacts.clear_runs(run_dir)
        if stale:
            self.logger.warning(f"⚠️  Replaced {stale} earlier runs in {run_dir}")
        for run in runs:
            artifacts.write_run(run_dir, run)
        self.logger.info(f"✓ {len(runs)} runs written to {run_dir}")

        # analysis always sees the values as stored on disk
        return artifacts.read_runs(run_dir, count=len(runs))

    def analyze(self, runs: List[LmcRun], out_dir: str) -> EnsembleAnalysis:
        analysis = analyze_ensemble(runs, self.settings)
        artifacts.write_analysis(out_dir, analysis, runs)
        return analysis

    # === Sweep over T ===

    def _load_checkpoint(self) -> Dict[str, Dict]:
        path = os.path.join(self.output_dir, CHECKPOINT_FILE)
        if not os.path.exists(path):
            return {}

        data = artifacts.read_json(path)
        if data.get("fingerprint") != self.config.fingerprint():
            self.logger.warning("⚠️  Checkpoint belongs to a different configuration, starting over")
            return {}
        return data.get("completed", {})

    def _save_checkpoint(self, completed: Dict[str, Dict]):
        artifacts.write_json(os.path.join(self.output_dir, CHECKPOINT_FILE), {
            "fingerprint": self.config.fingerprint(),
            "completed": completed,
        })

    def sweep(self) -> PhaseDiagram:
        """
        Sample and analyze every T of the grid, then bracket the transitions

        Completed T values are checkpointed and reused on rerun with the same
        configuration; a failure at one T aborts the sweep after saving.
        """
        Config.validate()
        Config.create_directories(self.output_dir)

        grid = self.config.get_t_grid()
        artifacts.write_json(os.path.join(self.output_dir, "config.json"), {
            "fingerprint": self.config.fingerprint(),
            "config": self.config.to_dict(),
        })

        completed = self._load_checkpoint()
        self.logger.info(f"Starting sweep: {len(grid)} T values, config={self.config.name}, "
                         f"{len(completed)} already completed")

        records: List[PhaseRecord] = []
        snapshots = []

        for i, T in enumerate(grid):
            key = artifacts.fmt(T)
            self.logger.info(f"\n{'=' * 60}")
            self.logger.info(f"T = {key} ({i + 1}/{len(grid)})")
            self.logger.info(f"{'=' * 60}\n")

            t_dir = self._t_dir(T)
            try:
                if key in completed:
                    self.logger.info("Using checkpointed runs")
                    runs = artifacts.read_runs(os.path.join(t_dir, "runs"), count=self.config.get_lmc_config(T).R)
                else:
                    runs = self.sample(T)

                analysis = self.analyze(runs, t_dir)
            except Exception as e:
                self.logger.error(f"Sweep aborted at T={key}: {e}", exc_info=True)
                self._save_checkpoint(completed)
                raise

            completed[key] = analysis.record.to_dict()
            self._save_checkpoint(completed)

            records.append(analysis.record)
            snapshots.append((T, runs, analysis.partition))

        diagram = detect_transitions(records, tol_qsl=self.settings.tol_qsl,
                                     m_zero_tol=self.settings.m_zero_tol, strict=False)
        artifacts.write_json(os.path.join(self.output_dir, "phase_diagram.json"), diagram.to_dict())

        self._write_trap_report(snapshots)

        self.logger.info(f"\n{'=' * 60}")
        self.logger.info(f"Sweep complete: b0 = {[r.b0 for r in records]}")
        self.logger.info(f"{'=' * 60}\n")

        return diagram

    def _write_trap_report(self, snapshots):
        path = os.path.join(self.output_dir, "trap_report.json")
        try:
            report = trap_tracker(
                snapshots,
                m_threshold=self.settings.m_threshold,
                abs_tol=self.settings.optimality_abs_tol,
                rel_tol=self.settings.optimality_rel_tol,
            )
            artifacts.write_json(path, report.to_dict())
        except TrackingLost as e:
            self.logger.warning(f"⚠️  Component tracking lost: {e}")
            artifacts.write_json(path, {"crossover_T": None, "tracks": [], "error": str(e)})

    # === Beta scan ===

    def beta_scan(self, T: Optional[float] = None, betas: Optional[List[float]] = None) -> Dict:
        """
        Component count per beta at fixed T and the resulting barrier estimate

        NoCollapse is reported (collapse = false), not raised.
        """
        Config.validate()
        Config.create_directories(self.output_dir)

        T = T if T is not None else self.config.get_beta_scan_T()
        betas = sorted(betas) if betas else self.config.get_betas()
        scan_dir = os.path.join(self.output_dir, f"beta_scan_T_{artifacts.fmt(T)}")

        b0_by_beta = {}
        for beta in betas:
            self.logger.info(f"beta = {beta:g}")
            beta_dir = os.path.join(scan_dir, f"beta_{artifacts.fmt(beta)}")
            runs = self.sample(T, run_dir=os.path.join(beta_dir, "runs"), beta=beta)
            analysis = self.analyze(runs, beta_dir)
            b0_by_beta[beta] = analysis.partition.b0

        L = self.config.get_lmc_config(T).L
        try:
            estimate = barrier_estimate(T, b0_by_beta, L)
            report = {"collapse": True, **estimate.to_dict()}
            self.logger.info(f"✓ beta* = {estimate.beta_star:g}, barrier ~ {estimate.delta_i:.2e}")
        except NoCollapse as e:
            self.logger.warning(f"⚠️  {e}")
            report = {
                "collapse": False,
                "T": T,
                "L": L,
                "b0_by_beta": [{"beta": b, "b0": n} for b, n in sorted(b0_by_beta.items())],
                "message": str(e),
            }

        artifacts.write_json(os.path.join(scan_dir, "barrier_report.json"), report)
        return report


def _amplitudes(amps: np.ndarray) -> List[Dict[str, float]]:
    return [{"basis": label, "re": float(a.real), "im": float(a.imag)} for label, a in zip(BASIS_LABELS, amps)]
