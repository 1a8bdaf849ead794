#!/usr/bin/env python3
"""
landscape-scan - Control landscape phase transitions of a driven two-qubit system

Usage:
    python main.py ground-states                      # |psi_0>, |psi_*> and their overlap
    python main.py ground-states --h-eff 0            # ground state at a single field
    python main.py evaluate protocol.csv --T 3.4      # infidelity + Bloch trajectory CSV
    python main.py sample --preset desk --T 3.4       # R LMC runs at one duration
    python main.py analyze output/desk/T_3.4/runs     # distances, components, order parameter
    python main.py sweep --preset desk                # full T sweep with transitions
    python main.py beta-scan --preset desk --T 3.4    # infidelity barrier from a beta scan

Exit codes: 0 success, 2 configuration or input file error, 3 runtime failure.
"""

import argparse
import json
import os
import sys

from config import Config
from core import artifacts
from core.errors import ArtifactError, ConfigError
from core.experiment import ExperimentRunner
from core.experiment_config import ExperimentConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _add_config_arguments(parser):
    group = parser.add_argument_group("configuration")
    source = group.add_mutually_exclusive_group()
    source.add_argument("--preset", choices=Config.AVAILABLE_PRESETS,
                        help="Named configuration in experiment_configs/")
    source.add_argument("--config", type=str, help="Path to a YAML or JSON experiment config")
    group.add_argument("--output-dir", type=str, help="Output directory (default: output/<config name>)")
    group.add_argument("--workers", type=int, help="Parallel worker processes")
    group.add_argument("--json", action="store_true", help="Print the result as JSON")
    group.add_argument("--no-progress", action="store_true", help="Hide progress bars")

    model = parser.add_argument_group("model")
    model.add_argument("--J", type=float)
    model.add_argument("--h-z", type=float)
    model.add_argument("--h-x", type=float)
    model.add_argument("--h-init", type=float)
    model.add_argument("--h-target", type=float)


def _add_sampler_arguments(parser):
    sampler = parser.add_argument_group("sampler")
    sampler.add_argument("--L", type=int, help="Number of protocol steps")
    sampler.add_argument("--beta", type=float, help="Inverse temperature")
    sampler.add_argument("--sigma", type=float, help="Proposal standard deviation")
    sampler.add_argument("--burn-in", type=int, help="Burn-in sweeps")
    sampler.add_argument("--delta-n", type=int, help="Sweeps between samples")
    sampler.add_argument("--M", type=int, help="Samples per run")
    sampler.add_argument("--R", type=int, help="Independent runs")
    sampler.add_argument("--no-anneal", action="store_true", help="Disable the burn-in beta ramp")
    sampler.add_argument("--beta-start", type=float, help="Initial beta of the ramp")
    sampler.add_argument("--anneal-iters", type=int, help="Ramp length in sweeps")
    sampler.add_argument("--seed", type=int, help="Base RNG seed")
    sampler.add_argument("--init", choices=["uniform01", "uniform", "zero"], help="Initial protocol")


def _add_analysis_arguments(parser):
    analysis = parser.add_argument_group("analysis")
    analysis.add_argument("--metrics", nargs="+", choices=Config.AVAILABLE_METRICS)
    analysis.add_argument("--bins", type=str, help="'fd' or a bin count")
    analysis.add_argument("--subsample", type=int, help="Protocols per run for d_avg / d_set")
    analysis.add_argument("--epsilon", type=float, help="Clustering threshold (default: widest gap)")
    analysis.add_argument("--cluster-metric", choices=Config.AVAILABLE_METRICS)
    analysis.add_argument("--tol-qsl", type=float)


def build_parser():
    parser = argparse.ArgumentParser(
        description="landscape-scan - Control landscape phase transitions",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("ground-states", help="Print the initial and target ground states")
    _add_config_arguments(p)
    p.add_argument("--h-eff", type=float, help="Only the ground state at this transverse field")

    p = commands.add_parser("evaluate", help="Infidelity and Bloch trajectory of protocols from a file")
    _add_config_arguments(p)
    p.add_argument("protocol_file", help="Samples CSV or protocol JSON")
    p.add_argument("--T", type=float, help="Duration (overrides the file)")
    p.add_argument("--out", type=str, help="Trajectory CSV path (default: <output-dir>/trajectory.csv)")
    p.add_argument("--frames", type=str,
                   help="Also write one Bloch-trajectory frame per protocol here; for a run's samples CSV "
                        "the frames are LMC snapshots spaced by delta_n sweeps")

    p = commands.add_parser("sample", help="R LMC runs at one duration")
    _add_config_arguments(p)
    _add_sampler_arguments(p)
    p.add_argument("--T", type=float, required=True)

    p = commands.add_parser("analyze", help="Distances, components and order parameter of a run directory")
    _add_config_arguments(p)
    _add_analysis_arguments(p)
    p.add_argument("run_dir", help="Directory holding run manifests and samples")
    p.add_argument("--out", type=str, help="Output directory (default: parent of run_dir)")

    p = commands.add_parser("sweep", help="Sample and analyze every T, then detect transitions")
    _add_config_arguments(p)
    _add_sampler_arguments(p)
    _add_analysis_arguments(p)
    p.add_argument("--t-grid", type=float, nargs="+", help="Durations to scan")

    p = commands.add_parser("beta-scan", help="Component count versus beta and barrier estimate")
    _add_config_arguments(p)
    _add_sampler_arguments(p)
    _add_analysis_arguments(p)
    p.add_argument("--T", type=float)
    p.add_argument("--betas", type=float, nargs="+")

    return parser


def _bins(value):
    if value is None or value == "fd":
        return value
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"--bins must be 'fd' or an integer, got {value!r}")


def load_config(args) -> ExperimentConfig:
    """Base config from --preset / --config, then command-line overrides"""
    if args.preset:
        base = ExperimentConfig.from_name(args.preset)
    elif args.config:
        base = ExperimentConfig.from_path(args.config)
    else:
        base = ExperimentConfig()

    overrides = {
        "model.J": args.J,
        "model.h_z": args.h_z,
        "model.h_x": args.h_x,
        "model.h_init": args.h_init,
        "model.h_target": args.h_target,
        "output.dir": args.output_dir,
        "output.workers": args.workers,
    }
    optional = {
        "sampler.L": "L",
        "sampler.beta": "beta",
        "sampler.sigma": "sigma",
        "sampler.burn_in_iters": "burn_in",
        "sampler.delta_n": "delta_n",
        "sampler.M": "M",
        "sampler.R": "R",
        "sampler.beta_start": "beta_start",
        "sampler.anneal_iters": "anneal_iters",
        "sampler.seed": "seed",
        "sampler.init": "init",
        "analysis.metrics": "metrics",
        "analysis.subsample": "subsample",
        "analysis.epsilon": "epsilon",
        "analysis.cluster_metric": "cluster_metric",
        "analysis.tol_qsl": "tol_qsl",
        "sweep.t_grid": "t_grid",
        "sweep.betas": "betas",
    }
    for key, attr in optional.items():
        overrides[key] = getattr(args, attr, None)
    if getattr(args, "no_anneal", False):
        overrides["sampler.anneal"] = False
    overrides["analysis.bins"] = _bins(getattr(args, "bins", None))

    return base.with_overrides(overrides)


def _print_amplitudes(label, amplitudes):
    print(f"  {label}:")
    for amp in amplitudes:
        print(f"    |{amp['basis']}>  {artifacts.fmt(amp['re']):>20} {artifacts.fmt(amp['im']):>20}i")


def cmd_ground_states(runner, args):
    result = runner.ground_states(h_eff=args.h_eff)
    if args.json:
        return result

    if args.h_eff is not None:
        print(f"Ground state at h_eff = {args.h_eff:g} (E = {artifacts.fmt(result['energy'])})")
        _print_amplitudes("amplitudes", result["amplitudes"])
        return result

    _print_amplitudes("|psi_0>", result["psi_0"])
    _print_amplitudes("|psi_*>", result["psi_target"])
    print(f"  |<psi_*|psi_0>|^2 = {artifacts.fmt(result['overlap'])}")
    print(f"  I(T=0)           = {artifacts.fmt(result['infidelity_T0'])}")
    return result


def cmd_evaluate(runner, args):
    protocols = artifacts.read_protocols(args.protocol_file, T=args.T)
    trajectory_path = args.out or os.path.join(runner.output_dir, "trajectory.csv")
    result = runner.evaluate(protocols, trajectory_path, frames_path=args.frames)
    if args.json:
        return result

    for k, value in enumerate(result["infidelities"]):
        print(f"  protocol {k}: I = {artifacts.fmt(value)}")
    summary = result["trajectory"]
    print(f"  min |n| = {summary['min_norm']:.4f} at step {summary['argmin_step']}, "
          f"max S_E = {summary['max_entropy']:.4f}")
    print(f"✓ Trajectory written to {trajectory_path}")
    return result


def cmd_sample(runner, args):
    runs = runner.sample(args.T)
    result = {
        "T": args.T,
        "runs": [
            {"run_id": r.run_id, "best_infidelity": r.best_infidelity,
             "acceptance_rate": r.acceptance_rate, "min_abs_m": r.min_abs_m}
            for r in runs
        ],
    }
    if args.json:
        return result

    for r in runs:
        print(f"  {r.run_id}: best I = {r.best_infidelity:.3e}, acceptance = {r.acceptance_rate:.3f}, "
              f"min|m| = {r.min_abs_m:.3f}")
    print(f"✓ {len(runs)} runs at T = {args.T:g}")
    return result


def cmd_analyze(runner, args):
    runs = artifacts.read_runs(args.run_dir)
    out_dir = args.out or os.path.dirname(os.path.normpath(args.run_dir))
    analysis = runner.analyze(runs, out_dir)
    result = analysis.record.to_dict()
    if args.json:
        return result

    print(f"  T = {analysis.T:g}: b0 = {analysis.record.b0} "
          f"({analysis.partition.b0} clusters, eps = {analysis.partition.threshold:.3f})")
    print(f"  min I = {analysis.record.min_infidelity:.3e}, order parameter = {analysis.record.order_parameter}")
    for tag, dist in analysis.distributions.items():
        print(f"  P(d_{tag}) peaks: {[round(p, 3) for p in dist.peak_locations]}")
    print(f"✓ Analysis written to {out_dir}")
    return result


def cmd_sweep(runner, args):
    diagram = runner.sweep()
    result = diagram.to_dict()
    if args.json:
        return result

    for record in diagram.records:
        print(f"  T = {record.T:g}: b0 = {record.b0}, min I = {record.min_infidelity:.3e}, "
              f"order parameter = {record.order_parameter}")
    for name, transition in diagram.transitions.items():
        if transition is None:
            print(f"  {name}: not observed")
        else:
            print(f"  {name} = {transition.estimate:g} +/- {transition.uncertainty:g}")
    for name in diagram.unbracketed:
        print(f"⚠️  {name} lies outside the T grid")
    print(f"✓ Sweep written to {runner.output_dir}")
    return result


def cmd_beta_scan(runner, args):
    report = runner.beta_scan(T=args.T, betas=args.betas)
    if args.json:
        return report

    for entry in report["b0_by_beta"]:
        print(f"  beta = {entry['beta']:g}: b0 = {entry['b0']}")
    if report["collapse"]:
        print(f"✓ beta* = {report['beta_star']:g}, barrier dI ~ {report['delta_i']:.2e}")
    else:
        print(f"⚠️  {report['message']}")
    return report


COMMANDS = {
    "ground-states": cmd_ground_states,
    "evaluate": cmd_evaluate,
    "sample": cmd_sample,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "beta-scan": cmd_beta_scan,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    try:
        Config.validate()
        experiment_config = load_config(args)
    except (ConfigError, ValueError) as e:
        print(f"✗ Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        runner = ExperimentRunner(experiment_config, progress=not args.no_progress)
        result = COMMANDS[args.command](runner, args)
    except (ConfigError, ArtifactError) as e:
        print(f"✗ {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        print(f"✗ {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    if args.json:
        print(json.dumps(artifacts.rounded(result), indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
