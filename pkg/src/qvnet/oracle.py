"""Exact and heuristic classical references used to verify the quantum solver."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InfeasibleError, ShapeError, SizeError
from .qsim import Statevector, exact_distribution
from .qubo import MAX_TABLE_VARS, GapInstance, bits_from_indices
from .vnet import WeightedRateMatrix

GROUND_TOL = 1e-9


@dataclass(frozen=True)
class OracleResult:
    best_bits: np.ndarray
    best_energy: float
    best_feasible_bits: np.ndarray | None
    best_feasible_z: float | None
    n_ground_states: int


def brute_force_optimum(inst: GapInstance) -> OracleResult:
    """Enumerate all 2**n bitstrings; ties go to the lowest basis index."""
    if inst.n_vars > MAX_TABLE_VARS:
        raise SizeError(f"{inst.n_vars} variables exceed the enumeration limit of {MAX_TABLE_VARS}")
    table = inst.energy_table
    best = int(np.argmin(table))
    best_energy = float(table[best])
    n_ground = int(np.count_nonzero(table <= best_energy + GROUND_TOL))

    feasible = inst.feasible_table
    best_feasible_bits = best_feasible_z = None
    if feasible.any():
        candidates = np.flatnonzero(feasible)
        # penalties vanish on feasible strings, so Z = -energy there
        k = int(candidates[np.argmin(table[candidates])])
        best_feasible_bits = bits_from_indices(k, inst.n_vars)
        u = best_feasible_bits.reshape(inst.n_avs, inst.n_bs)
        best_feasible_z = float(np.sum(u * inst.rates))
    return OracleResult(
        best_bits=bits_from_indices(best, inst.n_vars),
        best_energy=best_energy,
        best_feasible_bits=best_feasible_bits,
        best_feasible_z=best_feasible_z,
        n_ground_states=n_ground,
    )


def ground_energy(inst: GapInstance) -> float:
    return float(inst.energy_table.min())


def tail_mean(values: np.ndarray, weights: np.ndarray, alpha: float) -> float:
    """Weighted mean of the lowest ``alpha`` probability mass, splitting the boundary atom."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order]
    before = np.concatenate(([0.0], np.cumsum(w)[:-1]))
    take = np.clip(alpha - before, 0.0, w)
    return float(np.dot(take, v) / take.sum())


def exact_cvar(state: Statevector, inst: GapInstance, alpha: float) -> float:
    """Exact alpha-tail conditional expectation of the energy under |amplitude|^2."""
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha!r}")
    if state.n_qubits != inst.n_vars:
        raise ShapeError(f"state has {state.n_qubits} qubits, instance has {inst.n_vars} variables")
    probs = exact_distribution(state)
    energies = inst.energy_table
    if alpha == 1.0:
        return float(np.dot(probs, energies) / probs.sum())
    return tail_mean(energies, probs / probs.sum(), alpha)


def greedy_baseline(wr: WeightedRateMatrix | np.ndarray, capacities) -> np.ndarray:
    """Repeatedly give the largest remaining rate's AV to that BS while it has room."""
    rates = np.asarray(getattr(wr, "wr", wr), dtype=float)
    caps = np.array(capacities, dtype=np.int64)
    n_avs, n_bs = rates.shape
    if caps.shape != (n_bs,):
        raise ShapeError(f"capacities needs {n_bs} entries, got {caps.shape}")
    if caps.sum() < n_avs:
        raise InfeasibleError(f"total capacity {caps.sum()} < {n_avs} AVs")

    u = np.zeros((n_avs, n_bs), dtype=np.uint8)
    unassigned = np.ones(n_avs, dtype=bool)
    while unassigned.any():
        masked = np.where(unassigned[:, None] & (caps > 0)[None, :], rates, -np.inf)
        i, j = np.unravel_index(int(np.argmax(masked)), masked.shape)
        u[i, j] = 1
        caps[j] -= 1
        unassigned[i] = False
    return u


def is_feasible(bits, inst: GapInstance) -> bool:
    b = np.asarray(bits).ravel()
    if b.shape != (inst.n_vars,):
        raise ShapeError(f"expected {inst.n_vars} bits, got {b.shape[0]}")
    u = b.reshape(inst.n_avs, inst.n_bs).astype(np.int64)
    return bool(np.all(u.sum(axis=1) == 1) and np.all(u.sum(axis=0) <= inst.capacities))
