"""CVaR-driven variational loop: sample the ansatz, score bitstrings, minimize the tail mean."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError, DomainError, NumericalError, ShapeError
from .oracle import GROUND_TOL
from .qsim import AnsatzSpec, SampleSet, Statevector, exact_distribution, prepare_state, sample
from .qubo import GapInstance, bits_from_indices

log = logging.getLogger(__name__)

TRACE_HEADER = ["eval", "cvar", "mean_energy", "best_energy", "best_bits", "ground_prob"]


class Optimizer(str, Enum):
    SIMPLEX = "SimplexSearch"
    SPSA = "SPSA"


class Init(str, Enum):
    UNIFORM = "UniformRandom"
    ZEROS = "Zeros"


def tail_count(alpha: float, k: int) -> int:
    # guard against alpha * k landing a hair below an integer (0.29 * 100 -> 28.999...)
    return int(math.floor(alpha * k + 1e-9))


@dataclass(frozen=True)
class CvarConfig:
    alpha: float = 0.25
    k_shots: int = 1000
    max_evals: int = 150
    seed: int = 0
    optimizer: Optimizer = Optimizer.SIMPLEX
    init: Init = Init.UNIFORM
    ftol: float = 1e-6
    simplex_step: float = 1.0
    spsa_patience: int = 10

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        object.__setattr__(self, "init", Init(self.init))
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError("alpha", f"must lie in (0, 1], got {self.alpha!r}")
        if self.k_shots < 1:
            raise ConfigurationError("k_shots", "must be >= 1")
        if tail_count(self.alpha, self.k_shots) < 1:
            raise ConfigurationError("alpha", f"floor(alpha * k_shots) is 0 for alpha={self.alpha}, k={self.k_shots}")
        if self.max_evals < 1:
            raise ConfigurationError("max_evals", "must be >= 1")
        if not self.ftol >= 0:
            raise ConfigurationError("ftol", "must be >= 0")


def cvar_of_energies(energies, alpha: float) -> float:
    """Mean of the lowest floor(alpha * K) sampled energies; plain mean at alpha = 1."""
    e = np.asarray(energies, dtype=float).ravel()
    if e.size == 0:
        raise DomainError("no energies to average")
    if not 0.0 < alpha <= 1.0:
        raise ConfigurationError("alpha", f"must lie in (0, 1], got {alpha!r}")
    if alpha == 1.0:
        return float(np.mean(e))
    m = tail_count(alpha, e.size)
    if m < 1:
        raise ConfigurationError("alpha", f"floor(alpha * K) is 0 for alpha={alpha}, K={e.size}")
    return float(np.mean(np.sort(e)[:m]))


def evaluate_params(
    spec: AnsatzSpec,
    params,
    inst: GapInstance,
    cfg: CvarConfig,
    shot_seed: int,
) -> tuple[float, SampleSet]:
    if spec.n_qubits != inst.n_vars:
        raise ShapeError(f"ansatz has {spec.n_qubits} qubits, instance has {inst.n_vars} variables")
    state = prepare_state(spec, params)
    samples = sample(state, cfg.k_shots, shot_seed)
    samples.energies = inst.energies_of_indices(samples.indices)
    return cvar_of_energies(samples.energies, cfg.alpha), samples


def ground_state_probability(state: Statevector, inst: GapInstance, ground_energy: float) -> float:
    if state.n_qubits != inst.n_vars:
        raise ShapeError(f"state has {state.n_qubits} qubits, instance has {inst.n_vars} variables")
    mask = np.abs(inst.energy_table - ground_energy) <= GROUND_TOL
    return float(exact_distribution(state)[mask].sum())


@dataclass(frozen=True)
class EvalRecord:
    eval_index: int
    epoch: int
    cvar: float
    mean_energy: float
    best_energy: float
    best_bits: np.ndarray
    ground_prob: float
    best_feasible_z: float


@dataclass
class OptimizerTrace:
    records: list[EvalRecord] = field(default_factory=list)
    final_params: np.ndarray | None = None
    best_params: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def best_energy(self) -> float:
        return self.records[-1].best_energy

    @property
    def best_bits(self) -> np.ndarray:
        return self.records[-1].best_bits

    @property
    def best_feasible_z(self) -> float:
        """Largest Z over feasible sampled bitstrings; NaN if none was observed."""
        return self.records[-1].best_feasible_z

    @property
    def n_epochs(self) -> int:
        return self.records[-1].epoch + 1 if self.records else 0

    def epoch_summary(self) -> list[dict]:
        """Per epoch: lowest CVaR seen so far, best feasible Z so far, last ground probability."""
        rows = []
        best_cvar = math.inf
        for rec in self.records:
            best_cvar = min(best_cvar, rec.cvar)
            row = {"epoch": rec.epoch, "cvar": best_cvar, "best_feasible_z": rec.best_feasible_z,
                   "ground_prob": rec.ground_prob, "evals": rec.eval_index + 1}
            if rows and rows[-1]["epoch"] == rec.epoch:
                rows[-1] = row
            else:
                rows.append(row)
        return rows

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_HEADER)
            for rec in self.records:
                writer.writerow([
                    rec.eval_index, repr(rec.cvar), repr(rec.mean_energy), repr(rec.best_energy),
                    "".join(str(int(b)) for b in rec.best_bits), repr(rec.ground_prob),
                ])


class _BudgetExhausted(Exception):
    pass


def shot_seed_for(seed: int, eval_index: int) -> int:
    return int(np.random.SeedSequence([seed, eval_index]).generate_state(1, dtype=np.uint64)[0])


class _Objective:
    """Callable theta -> CVaR that records every evaluation into a trace."""

    def __init__(self, inst: GapInstance, spec: AnsatzSpec, cfg: CvarConfig, ground_energy: float | None):
        self.inst, self.spec, self.cfg = inst, spec, cfg
        self.trace = OptimizerTrace()
        self.epoch = 0
        self.best_energy = math.inf
        self.best_index = -1
        self.best_z = math.nan
        self.best_cvar = math.inf
        self.ground_mask = None
        if ground_energy is not None:
            self.ground_mask = np.abs(inst.energy_table - ground_energy) <= GROUND_TOL

    def __call__(self, theta) -> float:
        n = len(self.trace.records)
        if n >= self.cfg.max_evals:
            raise _BudgetExhausted
        theta = np.array(theta, dtype=float)
        state = prepare_state(self.spec, theta)
        shots = sample(state, self.cfg.k_shots, shot_seed_for(self.cfg.seed, n))
        energies = self.inst.energies_of_indices(shots.indices)
        value = cvar_of_energies(energies, self.cfg.alpha)
        if not math.isfinite(value):
            raise NumericalError(f"non-finite objective {value!r} at evaluation {n}", params=theta)

        lowest = energies.min()
        cand = int(shots.indices[energies == lowest].min())
        if lowest < self.best_energy or (lowest == self.best_energy and cand < self.best_index):
            self.best_energy, self.best_index = float(lowest), cand
        feasible = self.inst.feasible_table[shots.indices]
        if feasible.any():
            z = float(-energies[feasible].min())
            if not z <= self.best_z:  # NaN-aware max
                self.best_z = z
        ground_prob = math.nan
        if self.ground_mask is not None:
            ground_prob = float(exact_distribution(state)[self.ground_mask].sum())
        if value < self.best_cvar:
            self.best_cvar = value
            self.trace.best_params = theta.copy()

        self.trace.records.append(EvalRecord(
            eval_index=n, epoch=self.epoch, cvar=value, mean_energy=float(np.mean(energies)),
            best_energy=self.best_energy, best_bits=bits_from_indices(self.best_index, self.inst.n_vars),
            ground_prob=ground_prob, best_feasible_z=self.best_z,
        ))
        return value


def initial_params(spec: AnsatzSpec, cfg: CvarConfig) -> np.ndarray:
    if cfg.init is Init.ZEROS:
        return np.zeros(spec.n_params)
    return np.random.default_rng(cfg.seed).uniform(0.0, 2 * math.pi, spec.n_params)


def _run_simplex(obj: _Objective, x0: np.ndarray, cfg: CvarConfig) -> np.ndarray:
    n = len(x0)
    simplex = np.vstack([x0, x0 + cfg.simplex_step * np.eye(n)])
    last = {"x": x0}

    def on_iteration(xk):
        last["x"] = np.array(xk)
        obj.epoch += 1

    try:
        res = minimize(
            obj, x0, method="Nelder-Mead", callback=on_iteration,
            options={"initial_simplex": simplex, "maxfev": cfg.max_evals, "maxiter": cfg.max_evals,
                     "fatol": cfg.ftol, "xatol": 1e-8, "adaptive": n > 8},
        )
        return np.array(res.x)
    except _BudgetExhausted:
        return last["x"]


def _run_spsa(obj: _Objective, x0: np.ndarray, cfg: CvarConfig) -> np.ndarray:
    rng = np.random.default_rng([cfg.seed, 1])
    x = x0.copy()
    c0, gamma, alpha_exp = 0.2, 0.101, 0.602
    n_iter = max(1, cfg.max_evals // 2)
    stability = 0.1 * n_iter
    a0 = None
    best_seen = math.inf
    stale = 0
    try:
        for k in range(n_iter):
            ck = c0 / (k + 1) ** gamma
            delta = rng.choice([-1.0, 1.0], size=len(x))
            f_plus = obj(x + ck * delta)
            f_minus = obj(x - ck * delta)
            grad = (f_plus - f_minus) / (2 * ck) * delta
            if a0 is None:
                # first step moves each angle by about 0.2 rad
                scale = np.mean(np.abs(grad))
                a0 = 0.2 * (stability + 1) ** alpha_exp / scale if scale > 0 else 0.1
            x = x - a0 / (k + 1 + stability) ** alpha_exp * grad
            obj.epoch += 1
            current = min(f_plus, f_minus)
            if current < best_seen - cfg.ftol:
                best_seen, stale = current, 0
            else:
                stale += 1
                if stale >= cfg.spsa_patience:
                    break
    except _BudgetExhausted:
        pass
    return x


def optimize(
    inst: GapInstance,
    spec: AnsatzSpec,
    cfg: CvarConfig,
    ground_energy: float | None = None,
) -> OptimizerTrace:
    """Minimize theta -> CVaR_alpha with a derivative-free optimizer.

    Every objective evaluation is recorded. ``best_bits`` tracks the lowest
    energy seen across all samples of all evaluations. Shot seeds are derived
    from ``(cfg.seed, eval_index)`` so reruns are bitwise identical. When
    ``ground_energy`` is omitted it is taken from the exhaustive energy table.
    """
    if spec.n_qubits != inst.n_vars:
        raise ShapeError(f"ansatz has {spec.n_qubits} qubits, instance has {inst.n_vars} variables")
    if ground_energy is None:
        ground_energy = float(inst.energy_table.min())
    obj = _Objective(inst, spec, cfg, ground_energy)
    x0 = initial_params(spec, cfg)
    if cfg.optimizer is Optimizer.SPSA:
        final = _run_spsa(obj, x0, cfg)
        epoch_def = "one SPSA step (two evaluations)"
    else:
        final = _run_simplex(obj, x0, cfg)
        epoch_def = "one Nelder-Mead iteration"
    trace = obj.trace
    trace.final_params = np.asarray(final, dtype=float)
    trace.metadata = {
        "optimizer": cfg.optimizer.value, "epoch": epoch_def, "alpha": cfg.alpha,
        "k_shots": cfg.k_shots, "seed": cfg.seed, "n_qubits": spec.n_qubits,
        "depth_p": spec.depth_p, "entangler": spec.entangler.value, "ground_energy": ground_energy,
    }
    log.debug("optimize: %d evaluations, best energy %.6g", len(trace), trace.best_energy)
    return trace
