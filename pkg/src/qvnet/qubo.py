"""Penalized diagonal Hamiltonian for the user-association GAP, and the QUBO/Ising map.

Variable ``k = i * n_bs + j`` is the assignment bit of (AV ``i``, BS ``j``).
Bit ``k`` of an integer basis index is ``(index >> k) & 1`` (little-endian),
which is also the qubit ordering of :mod:`qvnet.qsim`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeError, SizeError
from .vnet import WeightedRateMatrix

MAX_TABLE_VARS = 24
_CHUNK = 1 << 16


def bits_from_indices(indices, n: int) -> np.ndarray:
    """Integer basis indices -> (K, n) uint8 bit matrix, little-endian."""
    idx = np.asarray(indices, dtype=np.int64)
    return ((idx[..., None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.uint8)


def indices_from_bits(bits) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int64)
    return (b << np.arange(b.shape[-1], dtype=np.int64)).sum(axis=-1)


def default_penalty(wr: np.ndarray) -> float:
    """2 * max WR: one constraint violation always costs more than any single rate gain."""
    peak = float(np.max(wr)) if np.size(wr) else 0.0
    return 2.0 * peak if peak > 0 else 1.0


@dataclass(frozen=True, eq=False)
class GapInstance:
    wr: WeightedRateMatrix
    capacities: np.ndarray
    lambda1: float
    lambda2: float

    @property
    def n_avs(self) -> int:
        return self.wr.shape[0]

    @property
    def n_bs(self) -> int:
        return self.wr.shape[1]

    @property
    def n_vars(self) -> int:
        return self.n_avs * self.n_bs

    @property
    def rates(self) -> np.ndarray:
        return self.wr.wr

    def energies(self, bits) -> np.ndarray:
        """Vectorized H_QUBO over a (K, n_vars) batch of bit-vectors."""
        b = np.asarray(bits)
        if b.ndim != 2 or b.shape[1] != self.n_vars:
            raise ShapeError(f"expected bit batch of width {self.n_vars}, got shape {b.shape}")
        u = b.reshape(len(b), self.n_avs, self.n_bs).astype(np.int64)
        rate = u.reshape(len(b), -1) @ self.rates.ravel()
        row = u.sum(axis=2) - 1
        over = np.maximum(u.sum(axis=1) - self.capacities[None, :], 0)
        return -rate + self.lambda1 * (row**2).sum(axis=1) + self.lambda2 * (over**2).sum(axis=1)

    def energies_of_indices(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        if self.n_vars <= MAX_TABLE_VARS:
            return self.energy_table[idx]
        return self.energies(bits_from_indices(idx, self.n_vars))

    @cached_property
    def energy_table(self) -> np.ndarray:
        """Energy of every basis index 0 .. 2**n_vars - 1."""
        if self.n_vars > MAX_TABLE_VARS:
            raise SizeError(f"{self.n_vars} variables exceed the enumeration limit of {MAX_TABLE_VARS}")
        total = 1 << self.n_vars
        table = np.empty(total)
        for start in range(0, total, _CHUNK):
            idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
            table[start:start + len(idx)] = self.energies(bits_from_indices(idx, self.n_vars))
        table.flags.writeable = False
        return table

    @cached_property
    def feasible_table(self) -> np.ndarray:
        """Constraint satisfaction (C1 and C2) of every basis index."""
        total = 1 << self.n_vars
        out = np.empty(total, dtype=bool)
        for start in range(0, total, _CHUNK):
            idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
            u = bits_from_indices(idx, self.n_vars).reshape(len(idx), self.n_avs, self.n_bs)
            out[start:start + len(idx)] = np.all(u.sum(axis=2) == 1, axis=1) & \
                np.all(u.sum(axis=1) <= self.capacities[None, :], axis=1)
        out.flags.writeable = False
        return out

    def to_dict(self) -> dict:
        return {
            "wr": self.rates.tolist(),
            "capacities": [int(c) for c in self.capacities],
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "n_avs": self.n_avs,
            "n_bs": self.n_bs,
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "GapInstance":
        n_avs, n_bs = int(data["n_avs"]), int(data["n_bs"])
        wr = np.asarray(data["wr"], dtype=float)
        if wr.size != n_avs * n_bs:
            raise ShapeError(f"wr has {wr.size} entries, expected {n_avs}x{n_bs}")
        wr = wr.reshape(n_avs, n_bs)
        return build_gap(WeightedRateMatrix(wr, wr > 0), data["capacities"], data["lambda1"], data["lambda2"])

    @classmethod
    def from_json(cls, source: str | Path) -> "GapInstance":
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") else str(source)
        return cls.from_dict(json.loads(text))


def build_gap(
    wr: WeightedRateMatrix | np.ndarray,
    capacities: Sequence[int],
    lambda1: float | None = None,
    lambda2: float | None = None,
) -> GapInstance:
    """Assemble an instance of H_QUBO = -sum WR u + l1 sum_i (row_i - 1)^2 + l2 sum_j (col_j - Q_j)_+^2.

    Penalty weights default to 2 * max WR.
    """
    if not isinstance(wr, WeightedRateMatrix):
        arr = np.asarray(wr, dtype=float)
        wr = WeightedRateMatrix(arr, np.ones(arr.shape, dtype=bool))
    caps = np.array(capacities, dtype=np.int64)
    if caps.shape != (wr.shape[1],):
        raise ShapeError(f"capacities needs {wr.shape[1]} entries, got {caps.shape}")
    if np.any(caps < 0):
        raise DomainError("capacities must be nonnegative")
    caps.flags.writeable = False
    l1 = default_penalty(wr.wr) if lambda1 is None else float(lambda1)
    l2 = default_penalty(wr.wr) if lambda2 is None else float(lambda2)
    if not l1 > 0:
        raise ConfigurationError("lambda1", "penalty weight must be positive")
    if not l2 > 0:
        raise ConfigurationError("lambda2", "penalty weight must be positive")
    if wr.wr.size and not l1 > float(np.max(wr.wr)):
        raise ConfigurationError("lambda1", f"must exceed the largest per-AV rate {np.max(wr.wr)!r}")
    return GapInstance(wr, caps, l1, l2)


def energy(inst: GapInstance, bits) -> float:
    b = np.asarray(bits).ravel()
    if b.shape != (inst.n_vars,):
        raise ShapeError(f"expected {inst.n_vars} bits, got {b.shape[0]}")
    return float(inst.energies(b[None, :])[0])


def encode_assignment(u) -> np.ndarray:
    return np.asarray(u, dtype=np.uint8).ravel().copy()


def decode_assignment(bits, n_avs: int, n_bs: int) -> np.ndarray:
    b = np.asarray(bits, dtype=np.uint8).ravel()
    if b.shape != (n_avs * n_bs,):
        raise ShapeError(f"expected {n_avs * n_bs} bits, got {b.shape[0]}")
    if np.any(b > 1):
        raise DomainError("assignment bits must be 0 or 1")
    return b.reshape(n_avs, n_bs).copy()


def objective_z(inst: GapInstance, u) -> float:
    """Total weighted rate of an assignment, without penalties."""
    return float(np.sum(np.asarray(u, dtype=float) * inst.rates))


def qubo_matrix(inst: GapInstance) -> tuple[np.ndarray, float]:
    """Symmetric Q and constant for the rate and one-BS-per-AV terms.

    ``x @ Q @ x + offset`` reproduces ``energy`` whenever no capacity is
    exceeded; the capacity term is not quadratic and is left out.
    """
    n = inst.n_vars
    q = np.zeros((n, n))
    for i in range(inst.n_avs):
        block = slice(i * inst.n_bs, (i + 1) * inst.n_bs)
        q[block, block] += inst.lambda1
    q[np.diag_indices(n)] = -inst.rates.ravel() - inst.lambda1
    return q, inst.lambda1 * inst.n_avs


@dataclass(frozen=True)
class IsingModel:
    linear: np.ndarray
    quadratic: np.ndarray
    offset: float

    @property
    def n_vars(self) -> int:
        return len(self.linear)


def qubo_to_ising(q) -> IsingModel:
    """Substitute x = (1 + s) / 2 into sum_ij x_i Q_ij x_j.

    Gives offset (sum Q + tr Q) / 4, fields h_i = sum_j Q_ij / 2 and
    couplings J_ij = Q_ij / 2 for i < j.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise ShapeError(f"Q must be square, got shape {q.shape}")
    if not np.allclose(q, q.T, rtol=0.0, atol=1e-12):
        raise ShapeError("Q must be symmetric")
    offset = 0.25 * (q.sum() + np.trace(q))
    linear = 0.5 * q.sum(axis=1)
    quadratic = 0.5 * np.triu(q, k=1)
    return IsingModel(linear, quadratic, float(offset))


def ising_energy(m: IsingModel, spins):
    """Energy of one spin vector, or an array of energies for a (K, n) batch."""
    s = np.asarray(spins)
    if s.shape[-1:] != (m.n_vars,) or s.ndim > 2:
        raise ShapeError(f"expected {m.n_vars} spins per row, got shape {s.shape}")
    if not np.all(np.abs(s) == 1):
        raise DomainError("spins must be -1 or +1")
    s = s.astype(float)
    e = m.offset + s @ m.linear + np.einsum("...i,ij,...j->...", s, m.quadratic, s)
    return float(e) if s.ndim == 1 else e
