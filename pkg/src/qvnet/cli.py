"""Command-line entry point: ``qvnet <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import QVNetError
from .experiments import ExperimentSpec, Mode, load_manifest, make_instance, prepare, run_experiment
from .plots import emit_plots, summary_csvs
from .qubo import GapInstance

_MODES = {
    "convergence": Mode.CONVERGENCE,
    "sweep-qubits": Mode.QUBIT_SWEEP,
    "sweep-bs": Mode.BS_SWEEP,
    "sweep-depth": Mode.DEPTH_SWEEP,
    "solve": Mode.SINGLE,
    "suite": Mode.SUITE,
}


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat TOML experiment file")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--seed", type=int, help="run a single optimizer seed")
    p.add_argument("--seeds", type=_int_list, help="comma-separated optimizer seeds")
    p.add_argument("--instance-seed", type=int, help="seed of the generated network snapshot")
    p.add_argument("--alpha", type=_float_list, help="comma-separated CVaR levels")
    p.add_argument("--depth", type=_int_list, help="circuit depth p (comma-separated for sweeps)")
    p.add_argument("--shots", type=int, help="shots per evaluation")
    p.add_argument("--max-evals", type=int, help="objective evaluations per run")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--instance", type=Path, help="GapInstance JSON to solve instead of generating one")
    p.add_argument("--plots", action="store_true", help="also write SVG plots of the summary CSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qvnet", description="CVaR-VQE experiments for vehicular user association")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _MODES:
        _add_run_options(sub.add_parser(name, help=f"run the {name} experiment"))

    p = sub.add_parser("oracle", help="brute-force a GapInstance JSON file")
    p.add_argument("instance", type=Path)

    p = sub.add_parser("make-instance", help="generate a network snapshot and write its GapInstance JSON")
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int, help="snapshot seed")
    p.add_argument("--out", type=Path, required=True, help="JSON file to write")

    p = sub.add_parser("rerun", help="repeat the run recorded in a manifest.json")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--plots", action="store_true")

    p = sub.add_parser("plot", help="render SVG plots for every summary CSV under a directory")
    p.add_argument("directory", type=Path)
    return parser


def spec_from_args(args: argparse.Namespace, mode: Mode) -> ExperimentSpec:
    data = {}
    if args.config:
        data.update(ExperimentSpec.load(args.config).to_dict())
    data["mode"] = mode.value
    overrides = {
        "seeds": [args.seed] if args.seed is not None else args.seeds,
        "instance_seed": args.instance_seed,
        "alphas": args.alpha,
        "k_shots": args.shots,
        "max_evals": args.max_evals,
        "workers": args.workers,
        "instance_file": str(args.instance) if args.instance else None,
    }
    if args.depth is not None:
        data["depths"] = args.depth
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentSpec.from_dict(data)


def _oracle(path: Path) -> dict:
    pi = prepare(GapInstance.from_json(path))
    res = pi.oracle
    return {
        "n_avs": pi.inst.n_avs,
        "n_bs": pi.inst.n_bs,
        "best_bits": "".join(map(str, res.best_bits)),
        "best_energy": res.best_energy,
        "n_ground_states": res.n_ground_states,
        "best_feasible_bits": None if res.best_feasible_bits is None else "".join(map(str, res.best_feasible_bits)),
        "best_feasible_z": res.best_feasible_z,
        "greedy_z": pi.greedy_z,
    }


def _finish(result, plots: bool) -> None:
    if plots:
        emit_plots(summary_csvs(result.out_dir))
    print("\n".join(result.summary))
    print(f"wrote {len(result.files)} CSV files to {result.out_dir}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command in _MODES:
            spec = spec_from_args(args, _MODES[args.command])
            _finish(run_experiment(spec, args.out), args.plots)
        elif args.command == "rerun":
            _finish(run_experiment(load_manifest(args.manifest), args.out), args.plots)
        elif args.command == "oracle":
            print(json.dumps(_oracle(args.instance), indent=2))
        elif args.command == "make-instance":
            spec = ExperimentSpec.load(args.config) if args.config else ExperimentSpec()
            if args.seed is not None:
                spec = replace(spec, instance_seed=args.seed)
            make_instance(spec).to_json(args.out)
            print(f"wrote {args.out}")
        elif args.command == "plot":
            for path in emit_plots(summary_csvs(args.directory)):
                print(path)
    except (QVNetError, OSError) as exc:
        print(f"qvnet: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
