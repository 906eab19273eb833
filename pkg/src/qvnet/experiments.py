"""Seeded experiment harness: convergence curves and the qubit, BS-count and depth sweeps.

Every run is keyed by its (depth, alpha, seed, sweep point) tuple. Runs may
execute in a process pool, but results are sorted by key before anything is
written, and floats are written with ``repr``, so output files depend only on
the experiment spec.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__
from .cvar_vqe import CvarConfig, OptimizerTrace, optimize
from .errors import ConfigurationError, InfeasibleError, QVNetError
from .oracle import OracleResult, brute_force_optimum, greedy_baseline
from .qsim import MAX_QUBITS, Entangler, build_ansatz
from .qubo import MAX_TABLE_VARS, GapInstance, build_gap, objective_z
from .vnet import VNetConfig, generate_scenario, weighted_rate_matrix

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

_CVAR_KEYS = ("k_shots", "max_evals", "optimizer", "init", "ftol", "simplex_step", "spsa_patience")
Z_TOL = 1e-9


class Mode(str, Enum):
    CONVERGENCE = "Convergence"
    QUBIT_SWEEP = "QubitSweep"
    BS_SWEEP = "BsSweep"
    DEPTH_SWEEP = "DepthSweep"
    SINGLE = "Single"
    SUITE = "Suite"


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything a run depends on. Loaded from a flat TOML table.

    Keys that name a :class:`VNetConfig` field configure the network, keys in
    ``_CVAR_KEYS`` configure the optimizer, the rest are listed here.
    """

    mode: Mode = Mode.CONVERGENCE
    alphas: tuple[float, ...] = (0.25, 0.5, 1.0)
    seeds: tuple[int, ...] = (0, 1, 2)
    instance_seed: int = 0
    depths: tuple[int, ...] = (1, 2, 3)
    qubits: tuple[int, ...] = (2, 4, 6)
    n_bs_values: tuple[int, ...] = (2, 3, 4, 5, 6)
    prior: str = "random"
    normalize: bool = True
    entangler: Entangler = Entangler.LINEAR_CHAIN
    instance_file: str | None = None
    workers: int = 1
    vnet: VNetConfig = field(default_factory=VNetConfig)
    cvar: CvarConfig = field(default_factory=CvarConfig)

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "entangler", Entangler(self.entangler))
        for name in ("alphas", "seeds", "depths", "qubits", "n_bs_values"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.seeds:
            raise ConfigurationError("seeds", "need at least one seed")
        if not self.alphas:
            raise ConfigurationError("alphas", "need at least one alpha")
        for a in self.alphas:
            replace(self.cvar, alpha=a)  # validates alpha against k_shots
        if any(p < 0 for p in self.depths):
            raise ConfigurationError("depths", "depths must be >= 0")
        needs = {Mode.QUBIT_SWEEP: "qubits", Mode.BS_SWEEP: "n_bs_values", Mode.DEPTH_SWEEP: "depths",
                 Mode.CONVERGENCE: "depths"}
        if self.mode in needs and not getattr(self, needs[self.mode]):
            raise ConfigurationError(needs[self.mode], "sweep range is empty")
        if self.workers < 1:
            raise ConfigurationError("workers", "must be >= 1")
        if self.instance_file and self.mode in (Mode.QUBIT_SWEEP, Mode.BS_SWEEP, Mode.SUITE):
            raise ConfigurationError("instance_file", "size sweeps generate their own instances")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        own = {f.name for f in fields(cls)} - {"vnet", "cvar"}
        vnet_keys = {f.name for f in fields(VNetConfig)}
        mine, vnet, cvar = {}, {}, {}
        for key, value in data.items():
            if key in own:
                mine[key] = value
            elif key in vnet_keys:
                vnet[key] = value
            elif key in _CVAR_KEYS:
                cvar[key] = value
            else:
                raise ConfigurationError(key, "unknown configuration key")
        return cls(**mine, vnet=VNetConfig(**vnet), cvar=CvarConfig(**cvar))

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSpec":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def to_dict(self) -> dict:
        """Flat key-value form; round-trips through ``from_dict``."""
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "vnet":
                out.update(asdict(value))
            elif f.name == "cvar":
                out.update({k: _plain(getattr(value, k)) for k in _CVAR_KEYS})
            elif value is not None:
                out[f.name] = _plain(value)
        return out

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def cvar_config(self, alpha: float, seed: int) -> CvarConfig:
        return replace(self.cvar, alpha=alpha, seed=seed)


def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, tuple):
        return list(value)
    return value


# -- instances -------------------------------------------------------------

@dataclass(frozen=True)
class PreparedInstance:
    inst: GapInstance
    oracle: OracleResult | None
    greedy_z: float | None

    @property
    def optimal_z(self) -> float | None:
        return None if self.oracle is None else self.oracle.best_feasible_z


def network_config(base: VNetConfig, n_avs: int, n_bs: int) -> VNetConfig:
    """Same radio parameters with ``n_bs`` stations, alternating RF and THz starting with RF."""
    return base.replace(n_avs=n_avs, n_rbs=(n_bs + 1) // 2, n_tbs=n_bs // 2)


def make_instance(spec: ExperimentSpec, n_avs: int | None = None, n_bs: int | None = None) -> GapInstance:
    if spec.instance_file:
        return GapInstance.from_json(spec.instance_file)
    cfg = spec.vnet
    if n_avs is not None or n_bs is not None:
        cfg = network_config(cfg, n_avs or cfg.n_avs, n_bs or cfg.n_bs)
    scenario = generate_scenario(cfg, spec.instance_seed, prior=spec.prior)
    wr = weighted_rate_matrix(scenario, normalize=spec.normalize)
    return build_gap(wr, scenario.capacities())


def prepare(inst: GapInstance) -> PreparedInstance:
    oracle = None
    if inst.n_vars <= MAX_TABLE_VARS:
        oracle = brute_force_optimum(inst)
    else:
        warnings.warn(f"{inst.n_vars} variables is beyond the oracle; reference omitted", stacklevel=2)
    try:
        greedy_z = objective_z(inst, greedy_baseline(inst.wr, inst.capacities))
    except InfeasibleError:
        greedy_z = None
    return PreparedInstance(inst, oracle, greedy_z)


def balanced_factorization(n_qubits: int) -> tuple[int, int] | None:
    """Most balanced n_avs x n_bs = n_qubits with n_avs <= n_bs, or None when out of range."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        return None
    a = max(d for d in range(1, math.isqrt(n_qubits) + 1) if n_qubits % d == 0)
    return a, n_qubits // a


# -- running ---------------------------------------------------------------

def _run_one(job: tuple) -> tuple[tuple, OptimizerTrace]:
    key, inst, n_qubits, depth, entangler, cfg, ground = job
    return key, optimize(inst, build_ansatz(n_qubits, depth, entangler), cfg, ground_energy=ground)


def run_jobs(jobs: list[tuple], workers: int) -> dict[tuple, OptimizerTrace]:
    """Run optimize() jobs, serially or in a process pool; returned dict is key-sorted."""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=1))
    else:
        results = [_run_one(job) for job in jobs]
    return dict(sorted(results, key=lambda kv: kv[0]))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[list]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _alpha_tag(alpha: float) -> str:
    return f"{alpha:.2f}"


def _quartiles(values: np.ndarray) -> tuple[float, float, float]:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return math.nan, math.nan, math.nan
    q25, med, q75 = np.percentile(finite, [25, 50, 75])
    return float(med), float(q25), float(q75)


def _epoch_matrix(traces: list[OptimizerTrace], column: str) -> np.ndarray:
    """(seeds, epochs) array; shorter runs hold their final value."""
    rows = [[r[column] for r in t.epoch_summary()] for t in traces]
    width = max(len(r) for r in rows)
    return np.array([r + [r[-1]] * (width - len(r)) for r in rows], dtype=float)


@dataclass
class RunResult:
    out_dir: Path
    files: list[Path]
    summary: list[str]


def run_convergence(spec: ExperimentSpec, out_dir: str | Path) -> RunResult:
    """Per (p, alpha, seed) traces, then per-p aggregates of objective and ground probability."""
    out = Path(out_dir)
    prepared = prepare(make_instance(spec))
    inst = prepared.inst
    ground = prepared.oracle.best_energy if prepared.oracle else None
    jobs = [((p, a, s), inst, inst.n_vars, p, spec.entangler, spec.cvar_config(a, s), ground)
            for p in spec.depths for a in spec.alphas for s in spec.seeds]
    traces = run_jobs(jobs, spec.workers)

    files = []
    for (p, a, s), trace in traces.items():
        files.append(out / "traces" / f"trace_p{p}_a{_alpha_tag(a)}_s{s}.csv")
        files[-1].parent.mkdir(parents=True, exist_ok=True)
        trace.to_csv(files[-1])

    summary = [f"convergence: {inst.n_avs} AVs x {inst.n_bs} BSs, {len(spec.seeds)} seeds"]
    oracle_energy = ground
    oracle_z = prepared.optimal_z
    for p in spec.depths:
        per_alpha = {a: [traces[(p, a, s)] for s in spec.seeds] for a in spec.alphas}
        for column, name, ref in (("cvar", "convergence", oracle_energy), ("ground_prob", "ground_prob", None)):
            mats = {a: _epoch_matrix(ts, column) for a, ts in per_alpha.items()}
            zmats = {a: _epoch_matrix(ts, "best_feasible_z") for a, ts in per_alpha.items()}
            n_epochs = max(m.shape[1] for m in mats.values())
            header = ["epoch"]
            for a in spec.alphas:
                tag = _alpha_tag(a)
                header += [f"median_a{tag}", f"q25_a{tag}", f"q75_a{tag}"]
                if column == "cvar":
                    header.append(f"best_z_a{tag}")
            if column == "cvar":
                header += ["oracle_energy", "oracle_z"]
            rows = []
            for e in range(n_epochs):
                row = [e]
                for a in spec.alphas:
                    m = mats[a]
                    row += list(_quartiles(m[:, min(e, m.shape[1] - 1)]))
                    if column == "cvar":
                        zm = zmats[a]
                        row.append(_quartiles(zm[:, min(e, zm.shape[1] - 1)])[0])
                if column == "cvar":
                    row += [ref, oracle_z]
                rows.append(row)
            files.append(write_csv(out / f"{name}_p{p}.csv", header, rows))

        for a, ts in per_alpha.items():
            z = np.array([t.best_feasible_z for t in ts], dtype=float)
            gp = np.array([t.records[-1].ground_prob for t in ts], dtype=float)
            cv = np.array([min(r.cvar for r in t.records) for t in ts], dtype=float)
            summary.append(
                f"  p={p} alpha={_alpha_tag(a)}: median final CVaR {_quartiles(cv)[0]:.6g}, "
                f"median best Z {_quartiles(z)[0]:.6g}, median final ground prob {_quartiles(gp)[0]:.4g}"
            )
    if oracle_z is not None:
        summary.append(f"  oracle optimum Z {oracle_z:.6g}, ground energy {oracle_energy:.6g}")
    _check_bound([t.best_feasible_z for t in traces.values()], oracle_z, "convergence")
    summary += _convergence_trends(spec, traces)
    return RunResult(out, files, summary)


def _median_z(traces: dict, keys) -> float:
    z = np.array([traces[k].best_feasible_z for k in keys], dtype=float)
    return _quartiles(np.nan_to_num(z, nan=0.0))[0]


def _convergence_trends(spec: ExperimentSpec, traces: dict) -> list[str]:
    lines = []
    if 0.25 in spec.alphas and 0.5 in spec.alphas:
        for p in spec.depths:
            z25 = _median_z(traces, [(p, 0.25, s) for s in spec.seeds])
            z50 = _median_z(traces, [(p, 0.5, s) for s in spec.seeds])
            gap = abs(z25 - z50) / max(abs(z25), abs(z50), 1e-12)
            lines.append(f"  trend p={p}: alpha 0.25 vs 0.50 median Z differ by {100 * gap:.2f}%")
    return lines


def _check_bound(values, optimum, label: str) -> None:
    """Post-hoc guard: no method may beat the exhaustive optimum."""
    if optimum is None:
        return
    for v in values:
        if v is not None and math.isfinite(v) and v > optimum + Z_TOL * max(1.0, abs(optimum)):
            raise QVNetError(f"{label}: Z {v!r} exceeds the oracle optimum {optimum!r}")


def _sweep(spec: ExperimentSpec, points: list[tuple], axis: str, out: Path, name: str) -> RunResult:
    """Shared body of the three sweeps. ``points`` holds (axis value, n_avs, n_bs, depth)."""
    prepared, jobs, notes = {}, [], []
    for value, n_avs, n_bs, depth in points:
        key = (n_avs, n_bs)
        if key not in prepared:
            prepared[key] = prepare(make_instance(spec, n_avs, n_bs))
        pi = prepared[key]
        if pi.optimal_z is None:
            msg = f"{axis}={value}: no feasible assignment ({n_avs} AVs, capacities {list(pi.inst.capacities)})"
            log.warning(msg)
            notes.append("  skipped " + msg)
            continue
        ground = pi.oracle.best_energy
        for a in spec.alphas:
            for s in spec.seeds:
                jobs.append(((value, a, s), pi.inst, pi.inst.n_vars, depth, spec.entangler,
                             spec.cvar_config(a, s), ground))
    traces = run_jobs(jobs, spec.workers)

    sizes = [c for c in ("n_avs", "n_bs", "n_qubits", "depth") if c != axis]
    header = [axis] + sizes + ["status", "optimal", "greedy"]
    header += [f"cvar_a{_alpha_tag(a)}" for a in spec.alphas]
    rows, run_rows = [], []
    for value, n_avs, n_bs, depth in points:
        pi = prepared[(n_avs, n_bs)]
        size = {"n_avs": n_avs, "n_bs": n_bs, "n_qubits": n_avs * n_bs, "depth": depth}
        base = [value] + [size[c] for c in sizes]
        if pi.optimal_z is None:
            rows.append(base + ["infeasible"] + [None] * (2 + len(spec.alphas)))
            continue
        method = []
        for a in spec.alphas:
            zs = []
            for s in spec.seeds:
                z = traces[(value, a, s)].best_feasible_z
                # a run that never sampled a feasible assignment delivers no rate
                zs.append(0.0 if math.isnan(z) else z)
                run_rows.append([value, a, s, z, traces[(value, a, s)].best_energy])
            method.append(float(np.mean(zs)))
        _check_bound(method + [pi.greedy_z], pi.optimal_z, f"{axis}={value}")
        rates = [pi.optimal_z, pi.greedy_z] + method
        rows.append(base + ["ok"] + [z / n_avs for z in rates])
    files = [
        write_csv(out / f"{name}.csv", header, rows),
        write_csv(out / f"{name}_runs.csv", [axis, "alpha", "seed", "best_feasible_z", "best_energy"], run_rows),
    ]
    summary = [f"{name}: average data rate (best feasible Z / n_avs) per method"]
    for row in rows:
        summary.append("  " + ", ".join(f"{h}={_fmt(v)}" for h, v in zip(header, row)))
    return RunResult(out, files, notes + summary)


def run_qubit_sweep(spec: ExperimentSpec, out_dir: str | Path) -> RunResult:
    points, skipped = [], []
    for n in spec.qubits:
        shape = balanced_factorization(n)
        if shape is None:
            log.warning("n_qubits=%d has no simulable factorization; skipped", n)
            skipped.append(f"  skipped n_qubits={n}: outside 1..{MAX_QUBITS}")
            continue
        points.append((n, *shape, spec.depths[0]))
    result = _sweep(spec, points, "n_qubits", Path(out_dir), "qubit_sweep")
    result.summary[:0] = skipped + ["  factorization: n -> most balanced n_avs x n_bs with n_avs <= n_bs"]
    return result


def run_bs_sweep(spec: ExperimentSpec, out_dir: str | Path) -> RunResult:
    n_avs = spec.vnet.n_avs
    points = [(b, n_avs, b, spec.depths[0]) for b in spec.n_bs_values]
    return _sweep(spec, points, "n_bs", Path(out_dir), "bs_sweep")


def run_depth_sweep(spec: ExperimentSpec, out_dir: str | Path) -> RunResult:
    cfg = spec.vnet
    points = [(p, cfg.n_avs, cfg.n_bs, p) for p in spec.depths]
    result = _sweep(spec, points, "depth", Path(out_dir), "depth_sweep")
    result.summary += _depth_trend(Path(out_dir) / "depth_sweep.csv", spec)
    return result


def _depth_trend(path: Path, spec: ExperimentSpec) -> list[str]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["status"] == "ok"]
    lines = []
    for a in spec.alphas:
        col = f"cvar_a{_alpha_tag(a)}"
        low = [float(r[col]) for r in rows if int(r["depth"]) <= 2]
        high = [float(r[col]) for r in rows if int(r["depth"]) > 2]
        if low and high:
            verdict = "degrades" if max(high) < max(low) else "does not degrade"
            lines.append(f"  trend alpha={_alpha_tag(a)}: best p<=2 rate {max(low):.6g}, "
                         f"best p>2 rate {max(high):.6g} ({verdict} beyond p=2)")
    return lines


def run_single(spec: ExperimentSpec, out_dir: str | Path) -> RunResult:
    out = Path(out_dir)
    prepared = prepare(make_instance(spec))
    inst = prepared.inst
    depth = spec.depths[0]
    ground = prepared.oracle.best_energy if prepared.oracle else None
    jobs = [((a, s), inst, inst.n_vars, depth, spec.entangler, spec.cvar_config(a, s), ground)
            for a in spec.alphas for s in spec.seeds]
    traces = run_jobs(jobs, spec.workers)
    files, summary = [], [f"solve: {inst.n_avs} AVs x {inst.n_bs} BSs, p={depth}"]
    for (a, s), trace in traces.items():
        path = out / f"trace_a{_alpha_tag(a)}_s{s}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        trace.to_csv(path)
        files.append(path)
        bits = "".join(map(str, trace.best_bits))
        summary.append(f"  alpha={_alpha_tag(a)} seed={s}: best energy {trace.best_energy:.6g} "
                       f"bits {bits}, best feasible Z {trace.best_feasible_z:.6g}, {len(trace)} evaluations")
    _check_bound([t.best_feasible_z for t in traces.values()], prepared.optimal_z, "solve")
    if prepared.optimal_z is not None:
        summary.append(f"  oracle optimum Z {prepared.optimal_z:.6g}")
    if prepared.greedy_z is not None:
        summary.append(f"  greedy Z {prepared.greedy_z:.6g}")
    return RunResult(out, files, summary)


_RUNNERS = {
    Mode.CONVERGENCE: run_convergence,
    Mode.QUBIT_SWEEP: run_qubit_sweep,
    Mode.BS_SWEEP: run_bs_sweep,
    Mode.DEPTH_SWEEP: run_depth_sweep,
    Mode.SINGLE: run_single,
}


def run_experiment(spec: ExperimentSpec, out_dir: str | Path) -> RunResult:
    """Run ``spec.mode`` (every mode for Suite) and write the manifest and run summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if spec.mode is Mode.SUITE:
        files, summary = [], []
        for mode, sub in ((Mode.CONVERGENCE, "convergence"), (Mode.QUBIT_SWEEP, "qubit_sweep"),
                          (Mode.BS_SWEEP, "bs_sweep"), (Mode.DEPTH_SWEEP, "depth_sweep")):
            part = _RUNNERS[mode](replace(spec, mode=mode), out / sub)
            files += part.files
            summary += part.summary
        result = RunResult(out, files, summary)
    else:
        result = _RUNNERS[spec.mode](spec, out)
    write_manifest(spec, result)
    (out / "run_summary.txt").write_text("\n".join(result.summary) + "\n")
    return result


def write_manifest(spec: ExperimentSpec, result: RunResult) -> Path:
    manifest = {
        "version": __version__,
        "spec_hash": spec.digest(),
        "seeds": list(spec.seeds),
        "instance_seed": spec.instance_seed,
        "spec": spec.to_dict(),
        "files": {
            os.path.relpath(p, result.out_dir): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(result.files)
        },
    }
    path = result.out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path: str | Path) -> ExperimentSpec:
    data = json.loads(Path(path).read_text())
    return ExperimentSpec.from_dict(data["spec"])
