"""
Artifacts - every file the experiments read or write

Floats are written with Config.FLOAT_DIGITS significant digits and every file
carries schema_version, so reruns with the same configuration give identical
bytes. Wall-clock timestamps only appear in run manifests.
"""

import csv
import io
import json
import logging
import os
import re
from datetime import datetime
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from core.errors import ArtifactError
from core.lmc_sampler import LmcConfig, LmcRun
from core.protocol_space import Protocol, SampleSet, magnetization
from core.quantum_core import BlochPoint, QuantumState

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = (
    ["t"]
    + [f"re_a{k}" for k in range(1, 5)]
    + [f"im_a{k}" for k in range(1, 5)]
    + ["n_x", "n_y", "n_z", "norm", "S_E"]
)


def fmt(x: float) -> str:
    """Float as text with FLOAT_DIGITS significant digits"""
    return f"{float(x):.{Config.FLOAT_DIGITS}g}"


def rounded(value):
    """Recursively round floats (and numpy scalars/arrays) for JSON output"""
    if isinstance(value, dict):
        return {str(k): rounded(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [rounded(v) for v in value]
    if isinstance(value, np.ndarray):
        return rounded(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        x = float(value)
        if not np.isfinite(x):
            return None
        return float(fmt(x))
    return value


def _atomic_write(path: str, text: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "w", newline="") as f:
        f.write(text)
    os.replace(tmp_path, path)


def write_json(path: str, payload: dict):
    """JSON with schema_version first, sorted keys and rounded floats"""
    data = {"schema_version": Config.SCHEMA_VERSION}
    data.update(rounded(payload))
    _atomic_write(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_json(path: str) -> dict:
    if not os.path.exists(path):
        raise ArtifactError(f"File not found: {path}")
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ArtifactError(f"Invalid JSON in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ArtifactError(f"Expected a JSON object in {path}")
    version = data.get("schema_version")
    if version is not None and version != Config.SCHEMA_VERSION:
        raise ArtifactError(f"{path}: schema_version {version}, expected {Config.SCHEMA_VERSION}")
    return data


def _write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[str]]):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([f"# schema_version={Config.SCHEMA_VERSION}"])
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write(path, buffer.getvalue())


def _read_csv(path: str) -> Tuple[List[str], List[List[str]]]:
    if not os.path.exists(path):
        raise ArtifactError(f"File not found: {path}")
    with open(path, "r", newline="") as f:
        rows = [row for row in csv.reader(f) if row and not row[0].startswith("#")]
    if not rows:
        raise ArtifactError(f"Empty CSV file: {path}")
    return rows[0], rows[1:]


# === Trajectories ===

def write_trajectory(path: str, T: float, states: Sequence[QuantumState], points: Sequence[BlochPoint]):
    """One row per step boundary: t, amplitudes, Bloch vector, |n|, S_E"""
    if len(states) != len(points):
        raise ValueError(f"{len(states)} states but {len(points)} Bloch points")
    steps = len(states) - 1
    rows = []
    for k, (state, point) in enumerate(zip(states, points)):
        t = T * k / steps if steps else 0.0
        amps = state.amplitudes
        rows.append(
            [fmt(t)]
            + [fmt(a.real) for a in amps]
            + [fmt(a.imag) for a in amps]
            + [fmt(x) for x in point.n]
            + [fmt(point.norm), fmt(point.entropy)]
        )
    _write_csv(path, TRAJECTORY_COLUMNS, rows)


def write_frames(path: str, T: float, frames: Sequence[Sequence[BlochPoint]]):
    """Bloch trajectories of consecutive protocols, one frame index per protocol"""
    rows = []
    for frame, points in enumerate(frames):
        steps = len(points) - 1
        for k, point in enumerate(points):
            rows.append([str(frame), fmt(T * k / steps if steps else 0.0)]
                        + [fmt(x) for x in point.n] + [fmt(point.norm), fmt(point.entropy)])
    _write_csv(path, ["frame", "t", "n_x", "n_y", "n_z", "norm", "S_E"], rows)


# === Protocols and samples ===

def write_samples(path: str, samples: SampleSet):
    """One protocol per row: s_1..s_L, T, L, infidelity"""
    L = samples.L
    infidelities = samples.infidelities
    rows = []
    for k, protocol in enumerate(samples.protocols):
        cost = fmt(infidelities[k]) if infidelities is not None else ""
        rows.append([fmt(v) for v in protocol.values] + [fmt(protocol.T), str(L), cost])
    _write_csv(path, [f"s_{i}" for i in range(1, L + 1)] + ["T", "L", "infidelity"], rows)


def read_samples(path: str, run_id: str = "run", seed: Optional[int] = None) -> SampleSet:
    header, rows = _read_csv(path)
    try:
        L = sum(1 for name in header if name.startswith("s_"))
        if L < 1 or header[L:L + 3] != ["T", "L", "infidelity"]:
            raise ArtifactError(f"{path}: unexpected header {header[:3]}...")
        if not rows:
            raise ArtifactError(f"{path}: no protocols")

        protocols, infidelities = [], []
        for line, row in enumerate(rows, start=3):
            if len(row) != L + 3 or int(row[L + 1]) != L:
                raise ArtifactError(f"{path}:{line}: expected {L} values")
            protocols.append(Protocol([float(v) for v in row[:L]], float(row[L])))
            infidelities.append(float(row[L + 2]) if row[L + 2] else np.nan)
        costs = None if np.isnan(infidelities).any() else np.array(infidelities)
        return SampleSet(protocols, run_id=run_id, seed=seed, infidelities=costs)
    except ValueError as e:
        raise ArtifactError(f"{path}: {e}") from e


def read_protocols(path: str, T: Optional[float] = None) -> List[Protocol]:
    """
    Protocols from a samples CSV or a JSON file

    JSON accepts {"values": [...], "T": ...} or {"protocols": [{"values", "T"}, ...]};
    an explicit T overrides the file.

    Raises:
        ArtifactError: on any malformed or out-of-bounds input
    """
    if path.endswith(".json"):
        data = read_json(path)
        entries = data.get("protocols", [data])
        try:
            protocols = []
            for entry in entries:
                duration = T if T is not None else entry.get("T")
                if duration is None:
                    raise ArtifactError(f"{path}: no duration T in file or on the command line")
                protocols.append(Protocol([float(v) for v in entry["values"]], float(duration)))
        except (AttributeError, KeyError, TypeError, ValueError) as e:
            raise ArtifactError(f"{path}: malformed protocol entry ({e})") from e
        if not protocols:
            raise ArtifactError(f"{path}: no protocols")
        return protocols

    samples = read_samples(path)
    if T is None:
        return list(samples.protocols)
    return [Protocol(p.values, T) for p in samples.protocols]


# === Runs ===

RUN_FILE = re.compile(r"^run_\d+_(manifest\.json|samples\.csv)$")


def run_paths(directory: str, run_index: int) -> Tuple[str, str]:
    stem = os.path.join(directory, f"run_{run_index:03d}")
    return f"{stem}_manifest.json", f"{stem}_samples.csv"


def run_manifest(run: LmcRun) -> dict:
    return {
        "run_id": run.run_id,
        "run_index": run.run_index,
        "seed": str(run.seed),
        "stream_key": list(run.stream_key),
        "M": run.samples.M,
        "config": run.config.to_dict(),
        "acceptance_rate": run.acceptance_rate,
        "best_infidelity": run.best_infidelity,
        "best_protocol": run.best_protocol.values,
        "min_abs_m": run.min_abs_m,
        "min_abs_m_trace": run.min_abs_m_trace,
        "burn_in_end_infidelity": run.burn_in_end_infidelity,
        "max_post_burn_in_infidelity": run.max_post_burn_in_infidelity,
    }


def write_run(directory: str, run: LmcRun, timestamp: bool = True):
    manifest_path, samples_path = run_paths(directory, run.run_index)
    write_samples(samples_path, run.samples)
    manifest = run_manifest(run)
    if timestamp:
        manifest["written_at"] = datetime.now().isoformat(timespec="seconds")
    write_json(manifest_path, manifest)
    logger.debug(f"{run.run_id} written to {manifest_path}")


def read_run(manifest_path: str) -> LmcRun:
    """Rebuild an LmcRun from its manifest and the samples CSV next to it"""
    data = read_json(manifest_path)
    samples_path = manifest_path.replace("_manifest.json", "_samples.csv")
    try:
        config = LmcConfig(**data["config"])
        seed = int(data["seed"])
        if [int(k) for k in data["stream_key"]] != [config.seed, int(data["run_index"])]:
            raise ArtifactError(f"{manifest_path}: stream_key {data['stream_key']} does not match "
                                f"seed {config.seed} and run_index {data['run_index']}")
        samples = read_samples(samples_path, run_id=data["run_id"], seed=seed)
        return LmcRun(
            run_index=int(data["run_index"]),
            seed=seed,
            samples=samples,
            acceptance_rate=float(data["acceptance_rate"]),
            min_abs_m=float(data["min_abs_m"]),
            best_infidelity=float(data["best_infidelity"]),
            best_protocol=Protocol(data["best_protocol"], config.T),
            per_sample_m=np.array([magnetization(p) for p in samples.protocols]),
            min_abs_m_trace=np.array(data["min_abs_m_trace"], dtype=float),
            burn_in_end_infidelity=float(data["burn_in_end_infidelity"]),
            max_post_burn_in_infidelity=float(data["max_post_burn_in_infidelity"]),
            config=config,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f"{manifest_path}: malformed run manifest ({e})") from e


def clear_runs(directory: str) -> int:
    """Remove the run manifests and samples in directory; returns the number of runs removed"""
    if not os.path.isdir(directory):
        return 0
    removed = 0
    for name in os.listdir(directory):
        if RUN_FILE.match(name):
            os.remove(os.path.join(directory, name))
            if name.endswith("_manifest.json"):
                removed += 1
    return removed


def read_runs(directory: str, count: Optional[int] = None) -> List[LmcRun]:
    """
    Runs in a directory, ordered by run index

    With count, exactly run_000 .. run_<count-1> are read and any other run
    file in the directory is ignored.
    """
    if not os.path.isdir(directory):
        raise ArtifactError(f"Run directory not found: {directory}")
    if count is not None:
        manifests = [run_paths(directory, r)[0] for r in range(count)]
        missing = [path for path in manifests if not os.path.exists(path)]
        if missing:
            raise ArtifactError(f"{len(missing)} of {count} run manifests missing in {directory}")
        return [read_run(path) for path in manifests]
    manifests = sorted(f for f in os.listdir(directory) if f.endswith("_manifest.json"))
    if not manifests:
        raise ArtifactError(f"No run manifests in {directory}")
    runs = [read_run(os.path.join(directory, f)) for f in manifests]
    return sorted(runs, key=lambda r: r.run_index)


# === Analysis outputs ===

def write_distances(path: str, distributions: Dict):
    """One row per run pair with a column per metric"""
    tags = list(distributions)
    first = distributions[tags[0]]
    rows = []
    for k, (i, j) in enumerate(first.pairs):
        rows.append([str(int(i)), str(int(j))] + [fmt(distributions[tag].values[k]) for tag in tags])
    _write_csv(path, ["i", "j"] + [f"d_{tag}" for tag in tags], rows)


def write_histograms(path: str, distributions: Dict):
    rows = []
    for tag, dist in distributions.items():
        for lo, hi, count in zip(dist.bin_edges[:-1], dist.bin_edges[1:], dist.counts):
            rows.append([tag, fmt(lo), fmt(hi), str(int(count))])
    _write_csv(path, ["metric", "bin_lo", "bin_hi", "count"], rows)


def write_components(path: str, analysis, runs: Sequence[LmcRun]):
    partition = analysis.partition
    write_json(path, {
        "T": analysis.T,
        "b0": analysis.record.b0,
        "b0_all": partition.b0,
        "epsilon": partition.threshold,
        "labels": {run.run_id: int(label) for run, label in zip(runs, partition.labels)},
        "sizes": partition.sizes(),
        "component_distances": partition.component_distances,
        "optimal_components": analysis.optimal_components,
        "excluded_components": analysis.order.excluded_components if analysis.order else [],
        "order_parameter": analysis.record.order_parameter,
        "peak_locations": analysis.record.peak_locations,
    })


def write_analysis(directory: str, analysis, runs: Sequence[LmcRun]):
    write_distances(os.path.join(directory, "distances.csv"), analysis.distributions)
    write_histograms(os.path.join(directory, "histogram.csv"), analysis.distributions)
    write_components(os.path.join(directory, "components.json"), analysis, runs)
