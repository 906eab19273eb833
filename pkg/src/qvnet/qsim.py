"""Dense statevector simulation of the RY/CZ hardware-efficient ansatz.

Qubit ``q`` is bit ``q`` of the basis index (little-endian), so a sampled
index maps directly onto the QUBO variable layout of :mod:`qvnet.qubo`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import DomainError, ShapeError, SizeError, StateError

MAX_QUBITS = 24
_GROUP = 4


class Entangler(str, Enum):
    LINEAR_CHAIN = "LinearChain"
    FULL = "Full"


@dataclass(frozen=True)
class AnsatzSpec:
    """Initial RY layer followed by ``depth_p`` blocks of [CZ entangler, RY layer]."""

    n_qubits: int
    depth_p: int
    entangler: Entangler = Entangler.LINEAR_CHAIN

    @property
    def n_params(self) -> int:
        return self.n_qubits * (self.depth_p + 1)

    @property
    def cz_pairs(self) -> list[tuple[int, int]]:
        if self.entangler is Entangler.FULL:
            return list(combinations(range(self.n_qubits), 2))
        return [(q, q + 1) for q in range(self.n_qubits - 1)]


def build_ansatz(n_qubits: int, depth_p: int, entangler: Entangler | str = Entangler.LINEAR_CHAIN) -> AnsatzSpec:
    if n_qubits < 1:
        raise DomainError("ansatz needs at least one qubit")
    if n_qubits > MAX_QUBITS:
        raise SizeError(f"{n_qubits} qubits exceed the simulator limit of {MAX_QUBITS}")
    if depth_p < 0:
        raise DomainError("depth must be >= 0")
    return AnsatzSpec(int(n_qubits), int(depth_p), Entangler(entangler))


@dataclass(eq=False)
class Statevector:
    """Complex amplitudes of an n-qubit pure state; gates mutate it in place."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        n = int(round(math.log2(len(amps)))) if len(amps) else -1
        if amps.ndim != 1 or n < 0 or (1 << n) != len(amps):
            raise ShapeError("amplitude vector length must be a power of two")
        if n > MAX_QUBITS:
            raise SizeError(f"{n} qubits exceed the simulator limit of {MAX_QUBITS}")
        self.amplitudes = amps

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        if n_qubits > MAX_QUBITS:
            raise SizeError(f"{n_qubits} qubits exceed the simulator limit of {MAX_QUBITS}")
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "Statevector":
        state = cls.zero(n_qubits)
        state.amplitudes[0] = 0.0
        state.amplitudes[index] = 1.0
        return state

    @property
    def n_qubits(self) -> int:
        return len(self.amplitudes).bit_length() - 1

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))

    def copy(self) -> "Statevector":
        return Statevector(self.amplitudes.copy())


@dataclass
class SampleSet:
    """K measured basis indices; ``bitstrings`` expands them to (K, n) bits."""

    indices: np.ndarray
    n_qubits: int
    energies: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def bitstrings(self) -> np.ndarray:
        return ((self.indices[:, None] >> np.arange(self.n_qubits)) & 1).astype(np.uint8)


def _check_qubit(state: Statevector, qubit: int) -> None:
    if not 0 <= qubit < state.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {state.n_qubits}-qubit state")


def apply_ry(state: Statevector, qubit: int, theta: float) -> Statevector:
    _check_qubit(state, qubit)
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    view = state.amplitudes.reshape(-1, 2, 1 << qubit)
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] *= c
    view[:, 0, :] -= s * a1
    a1 *= c
    a1 += s * a0
    return state


def apply_cz(state: Statevector, a: int, b: int) -> Statevector:
    _check_qubit(state, a)
    _check_qubit(state, b)
    if a == b:
        raise DomainError("CZ needs two distinct qubits")
    n = state.n_qubits
    view = state.amplitudes.reshape((2,) * n)
    index = [slice(None)] * n
    index[n - 1 - a] = 1
    index[n - 1 - b] = 1
    view[tuple(index)] *= -1
    return state


def _ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]])


@lru_cache(maxsize=8)
def _entangler_signs(n: int, entangler: Entangler) -> np.ndarray:
    """Diagonal of the full CZ block: (-1)**(number of entangled pairs with both bits set)."""
    idx = np.arange(1 << n, dtype=np.int64)
    if entangler is Entangler.FULL:
        ones = np.zeros(len(idx), dtype=np.int64)
        for q in range(n):
            ones += (idx >> q) & 1
        pairs = ones * (ones - 1) // 2
    else:
        both = idx & (idx >> 1) & ((1 << max(n - 1, 0)) - 1)
        pairs = np.zeros(len(idx), dtype=np.int64)
        for q in range(max(n - 1, 0)):
            pairs += (both >> q) & 1
    signs = np.where(pairs % 2 == 1, -1.0, 1.0)
    signs.flags.writeable = False
    return signs


def _ry_layer(amps: np.ndarray, n: int, angles: np.ndarray) -> np.ndarray:
    # groups of up to _GROUP qubits act as one 2**g x 2**g real matrix
    for lo in range(0, n, _GROUP):
        hi = min(lo + _GROUP, n)
        mat = np.ones((1, 1))
        for q in range(hi - 1, lo - 1, -1):
            mat = np.kron(mat, _ry_matrix(angles[q]))
        view = amps.reshape(-1, 1 << (hi - lo), 1 << lo)
        amps = np.matmul(mat, view).reshape(-1)
    return amps


def prepare_state(spec: AnsatzSpec, params) -> Statevector:
    """|psi(theta)> for the layered RY/CZ circuit applied to |0...0>.

    Every gate is real, so the circuit is simulated in float64 and returned
    as a complex statevector.
    """
    theta = np.asarray(params, dtype=float).ravel()
    if theta.shape != (spec.n_qubits * (spec.depth_p + 1),):
        raise ShapeError(f"ansatz takes {spec.n_params} angles, got {theta.shape[0]}")
    n = spec.n_qubits
    if n > MAX_QUBITS:
        raise SizeError(f"{n} qubits exceed the simulator limit of {MAX_QUBITS}")
    # first layer on |0...0> is a product state
    amps = np.ones(1)
    for q in range(n - 1, -1, -1):
        half = theta[q] / 2.0
        amps = np.outer(amps, [math.cos(half), math.sin(half)]).ravel()
    if spec.depth_p:
        signs = _entangler_signs(n, spec.entangler)
        for layer in range(1, spec.depth_p + 1):
            amps *= signs
            amps = _ry_layer(amps, n, theta[layer * n:(layer + 1) * n])
    return Statevector(amps.astype(np.complex128))


def exact_distribution(state: Statevector) -> np.ndarray:
    return np.abs(state.amplitudes) ** 2


def sample(state: Statevector, k: int, seed: int) -> SampleSet:
    """Draw ``k`` computational-basis measurements, deterministic per seed."""
    if k < 1:
        raise DomainError("need at least one shot")
    probs = exact_distribution(state)
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise StateError(f"state norm^2 is {total!r}, expected 1")
    cdf = np.cumsum(probs)
    rng = np.random.default_rng(seed)
    u = rng.random(k) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    np.minimum(idx, len(probs) - 1, out=idx)
    return SampleSet(idx.astype(np.int64), state.n_qubits)


def dump_amplitudes(state: Statevector, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "re", "im"])
        for i, a in enumerate(state.amplitudes):
            writer.writerow([i, repr(float(a.real)), repr(float(a.imag))])
