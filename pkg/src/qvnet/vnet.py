"""Highway scenario generation and the RF/THz downlink channel model.

Produces the weighted-rate matrix that parameterizes the user-association
assignment problem. Base stations are indexed ``j`` and vehicles (AVs) ``i``
throughout; matrices are shaped ``(n_avs, n_bs)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError, ShapeError, TypeMismatchError

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib
import tomli_w

SPEED_OF_LIGHT = 299_792_458.0


class BSType(str, Enum):
    RF = "RF"
    THZ = "THz"


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class VNetConfig:
    n_rbs: int = 2
    n_tbs: int = 2
    n_avs: int = 4
    highway_length: float = 1000.0
    n_lanes: int = 4
    lane_width: float = 3.5
    f_rf: float = 2.1e9
    f_thz: float = 1.0e12
    rho: float = 2.5
    p_tx_rf: float = 1.0
    p_tx_thz: float = 1.0
    g_tx_rf: float = 0.0
    g_rx_rf: float = 0.0
    g_tx_thz: float = 25.0
    g_rx_thz: float = 25.0
    k_a: float = 0.05
    sigma2_dbm: float = -70.0
    n_molecular_dbm: float = -70.0
    w_rf: float = 20e6
    w_thz: float = 2e9
    q_align: float = 0.1
    mu_rf: float = 0.2
    mu_thz: float = 0.4
    gamma_th: float = -5.0
    cap_rf: int = 2
    cap_tbs: int = 2
    antenna_height: float = 5.0
    rx_height: float = 1.5

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("n_rbs", "n_tbs", "n_avs", "n_lanes", "cap_rf", "cap_tbs"):
            value = getattr(self, name)
            if int(value) != value:
                raise ConfigurationError(name, f"must be an integer, got {value!r}")
        for name in ("n_rbs", "n_tbs"):
            if getattr(self, name) < 0:
                raise ConfigurationError(name, "must be >= 0")
        if self.n_rbs + self.n_tbs < 1:
            raise ConfigurationError("n_rbs", "need at least one base station")
        for name in ("n_avs", "n_lanes"):
            if getattr(self, name) < 1:
                raise ConfigurationError(name, "must be >= 1")
        for name in (
            "highway_length", "lane_width", "f_rf", "f_thz",
            "p_tx_rf", "p_tx_thz", "w_rf", "w_thz",
        ):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(name, f"must be strictly positive, got {value!r}")
        if not self.rho >= 2:
            raise ConfigurationError("rho", f"path-loss exponent must be >= 2, got {self.rho!r}")
        if not self.k_a >= 0:
            raise ConfigurationError("k_a", "absorption coefficient must be >= 0")
        if not 0.0 <= self.q_align <= 1.0:
            raise ConfigurationError("q_align", f"must lie in [0, 1], got {self.q_align!r}")
        if not 0.0 <= self.mu_rf < 1.0:
            raise ConfigurationError("mu_rf", f"must lie in [0, 1), got {self.mu_rf!r}")
        if not 0.0 <= self.mu_thz < 1.0:
            raise ConfigurationError("mu_thz", f"must lie in [0, 1), got {self.mu_thz!r}")
        if self.mu_rf > self.mu_thz:
            raise ConfigurationError("mu_thz", "THz handoff penalty must be >= mu_rf")
        for name in ("cap_rf", "cap_tbs"):
            if getattr(self, name) < 1:
                raise ConfigurationError(name, "capacity must be >= 1")
        if self.antenna_height < self.rx_height:
            raise ConfigurationError("antenna_height", "must be >= rx_height")

    @property
    def n_bs(self) -> int:
        return self.n_rbs + self.n_tbs

    @property
    def height_diff(self) -> float:
        return self.antenna_height - self.rx_height

    @property
    def road_width(self) -> float:
        return self.n_lanes * self.lane_width

    def replace(self, **changes) -> "VNetConfig":
        data = asdict(self)
        data.update(changes)
        return VNetConfig(**data)

    @classmethod
    def from_dict(cls, data: dict) -> "VNetConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Scenario:
    """Static snapshot of the highway: BS/AV geometry, fading and prior serving BS.

    ``fading_gains`` has one column per BS; only the RF columns enter the
    channel model (the THz model carries no small-scale fading term).
    ``prior_association[i]`` is ``-1`` when AV ``i`` has no previous BS.
    """

    bs_positions: np.ndarray
    bs_types: tuple[BSType, ...]
    av_positions: np.ndarray
    fading_gains: np.ndarray
    prior_association: np.ndarray | None
    config: VNetConfig

    def __post_init__(self):
        cfg = self.config
        bs_pos = _frozen(np.asarray(self.bs_positions, dtype=float).reshape(-1, 2))
        av_pos = _frozen(np.asarray(self.av_positions, dtype=float).reshape(-1, 2))
        fading = _frozen(np.asarray(self.fading_gains, dtype=float))
        types = tuple(BSType(t) for t in self.bs_types)
        object.__setattr__(self, "bs_positions", bs_pos)
        object.__setattr__(self, "av_positions", av_pos)
        object.__setattr__(self, "fading_gains", fading)
        object.__setattr__(self, "bs_types", types)

        if len(bs_pos) != cfg.n_bs or len(types) != cfg.n_bs:
            raise ShapeError(f"expected {cfg.n_bs} base stations, got {len(bs_pos)} positions / {len(types)} types")
        if sum(t is BSType.RF for t in types) != cfg.n_rbs:
            raise ShapeError("number of RF base stations does not match config.n_rbs")
        if len(av_pos) != cfg.n_avs:
            raise ShapeError(f"expected {cfg.n_avs} AV positions, got {len(av_pos)}")
        if fading.shape != (cfg.n_avs, cfg.n_bs):
            raise ShapeError(f"fading_gains must be {(cfg.n_avs, cfg.n_bs)}, got {fading.shape}")
        if not np.all(fading > 0):
            raise DomainError("fading gains must be strictly positive")
        for name, pos in (("bs_positions", bs_pos), ("av_positions", av_pos)):
            if np.any(pos[:, 0] < 0) or np.any(pos[:, 0] > cfg.highway_length) or \
                    np.any(pos[:, 1] < 0) or np.any(pos[:, 1] > cfg.road_width):
                raise DomainError(f"{name} outside the highway rectangle")

        if self.prior_association is not None:
            prior = np.asarray(self.prior_association, dtype=np.int64)
            if prior.shape != (cfg.n_avs,):
                raise ShapeError("prior_association needs one entry per AV")
            if np.any((prior < -1) | (prior >= cfg.n_bs)):
                raise DomainError("prior_association entries must be BS indices or -1")
            object.__setattr__(self, "prior_association", _frozen(prior))

    @property
    def n_avs(self) -> int:
        return self.config.n_avs

    @property
    def n_bs(self) -> int:
        return self.config.n_bs

    def distances(self) -> np.ndarray:
        """3D link distances r = sqrt(d^2 + h^2), shape (n_avs, n_bs)."""
        d = np.linalg.norm(self.av_positions[:, None, :] - self.bs_positions[None, :, :], axis=-1)
        return np.sqrt(d**2 + self.config.height_diff**2)

    def bandwidth(self, bs: int) -> float:
        return self.config.w_rf if self.bs_types[bs] is BSType.RF else self.config.w_thz

    def capacity(self, bs: int) -> int:
        return self.config.cap_rf if self.bs_types[bs] is BSType.RF else self.config.cap_tbs

    def capacities(self) -> list[int]:
        return [self.capacity(j) for j in range(self.n_bs)]


@dataclass(frozen=True)
class WeightedRateMatrix:
    wr: np.ndarray
    feasible_mask: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        wr = _frozen(np.asarray(self.wr, dtype=float))
        if wr.ndim != 2:
            raise ShapeError("wr must be a 2D matrix")
        mask = self.feasible_mask
        mask = np.ones(wr.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
        if mask.shape != wr.shape:
            raise ShapeError("feasible_mask shape differs from wr")
        if np.any(wr < 0) or not np.all(np.isfinite(wr)):
            raise DomainError("weighted rates must be finite and nonnegative")
        if np.any(wr[~mask] != 0):
            raise DomainError("infeasible links must carry zero weighted rate")
        object.__setattr__(self, "wr", wr)
        object.__setattr__(self, "feasible_mask", _frozen(mask))

    @property
    def shape(self) -> tuple[int, int]:
        return self.wr.shape

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["av", "bs", "wr", "feasible"])
            for i in range(self.wr.shape[0]):
                for j in range(self.wr.shape[1]):
                    writer.writerow([i, j, repr(float(self.wr[i, j])), int(self.feasible_mask[i, j])])


def read_wr_csv(path: str | Path) -> WeightedRateMatrix:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n_avs = max(int(r["av"]) for r in rows) + 1
    n_bs = max(int(r["bs"]) for r in rows) + 1
    wr = np.zeros((n_avs, n_bs))
    mask = np.zeros((n_avs, n_bs), dtype=bool)
    for r in rows:
        wr[int(r["av"]), int(r["bs"])] = float(r["wr"])
        mask[int(r["av"]), int(r["bs"])] = bool(int(r["feasible"]))
    return WeightedRateMatrix(wr, mask)


def default_bs_types(n_rbs: int, n_tbs: int) -> list[BSType]:
    """Alternate RF/THz along the highway, starting with RF, until one kind runs out."""
    types = []
    rf, thz = n_rbs, n_tbs
    while rf or thz:
        if rf:
            types.append(BSType.RF)
            rf -= 1
        if thz:
            types.append(BSType.THZ)
            thz -= 1
    return types


def generate_scenario(
    config: VNetConfig,
    seed: int,
    placement: Sequence[tuple[float, float, str]] | None = None,
    prior: str | Sequence[int] | None = None,
) -> Scenario:
    """Draw a random highway snapshot.

    BSs sit on the road edge at evenly spaced positions unless ``placement``
    lists explicit ``(x, y, type)`` triples. ``prior`` picks the previous
    serving BS of each AV: ``None``/``"none"``, ``"random"`` (uniform over BSs),
    ``"strongest"`` (highest SINR in this snapshot) or an explicit index list.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    n_bs = config.n_bs

    if placement is None:
        xs = (np.arange(n_bs) + 0.5) * config.highway_length / n_bs
        bs_positions = np.column_stack([xs, np.zeros(n_bs)])
        bs_types = default_bs_types(config.n_rbs, config.n_tbs)
    else:
        if len(placement) != n_bs:
            raise ConfigurationError("placement", f"expected {n_bs} entries, got {len(placement)}")
        bs_positions = np.array([(x, y) for x, y, _ in placement], dtype=float)
        bs_types = [BSType(t) for _, _, t in placement]

    av_x = rng.uniform(0.0, config.highway_length, size=config.n_avs)
    lanes = rng.integers(0, config.n_lanes, size=config.n_avs)
    av_y = (lanes + 0.5) * config.lane_width
    fading = rng.exponential(1.0, size=(config.n_avs, n_bs))
    # exponential draws can underflow to exactly 0 only with probability ~0; keep invariant strict
    fading = np.maximum(fading, np.finfo(float).tiny)

    scenario = Scenario(bs_positions, tuple(bs_types), np.column_stack([av_x, av_y]), fading, None, config)

    if prior is None or (isinstance(prior, str) and prior == "none"):
        return scenario
    if isinstance(prior, str):
        if prior == "random":
            assoc = rng.integers(0, n_bs, size=config.n_avs)
        elif prior == "strongest":
            assoc = np.argmax(sinr_matrix(scenario), axis=1)
        else:
            raise ConfigurationError("prior", f"unknown prior association mode {prior!r}")
    else:
        assoc = np.asarray(prior, dtype=np.int64)
    return with_prior(scenario, assoc)


def with_prior(scenario: Scenario, prior_association) -> Scenario:
    return Scenario(
        scenario.bs_positions, scenario.bs_types, scenario.av_positions,
        scenario.fading_gains, prior_association, scenario.config,
    )


def _check_indices(s: Scenario, av: int, bs: int) -> None:
    if not 0 <= av < s.n_avs:
        raise IndexError(f"AV index {av} out of range [0, {s.n_avs})")
    if not 0 <= bs < s.n_bs:
        raise IndexError(f"BS index {bs} out of range [0, {s.n_bs})")


def received_power(s: Scenario) -> np.ndarray:
    """Received signal power in W for every (AV, BS) link, shape (n_avs, n_bs)."""
    cfg = s.config
    r = s.distances()
    out = np.empty_like(r)
    is_rf = np.array([t is BSType.RF for t in s.bs_types])

    rf_const = cfg.p_tx_rf * db_to_linear(cfg.g_tx_rf) * db_to_linear(cfg.g_rx_rf) \
        * (SPEED_OF_LIGHT / (4 * math.pi * cfg.f_rf)) ** 2
    out[:, is_rf] = rf_const * s.fading_gains[:, is_rf] / r[:, is_rf] ** cfg.rho

    thz_const = cfg.p_tx_thz * db_to_linear(cfg.g_tx_thz) * db_to_linear(cfg.g_rx_thz) \
        * (SPEED_OF_LIGHT / (4 * math.pi * cfg.f_thz)) ** 2
    r_t = r[:, ~is_rf]
    out[:, ~is_rf] = thz_const * np.exp(-cfg.k_a * r_t) / r_t**2
    return out


def _sinr_from_power(s: Scenario, power: np.ndarray, av: int, bs: int) -> float:
    cfg = s.config
    band = s.bs_types[bs]
    others = [k for k in range(s.n_bs) if k != bs and s.bs_types[k] is band]
    interference = float(np.sum(power[av, others])) if others else 0.0
    if band is BSType.RF:
        noise = dbm_to_watts(cfg.sigma2_dbm)
    else:
        noise = dbm_to_watts(cfg.n_molecular_dbm)
        interference *= cfg.q_align**2
    return float(power[av, bs] / (noise + interference))


def sinr_rf(s: Scenario, av: int, bs: int) -> float:
    _check_indices(s, av, bs)
    if s.bs_types[bs] is not BSType.RF:
        raise TypeMismatchError(f"BS {bs} is {s.bs_types[bs].value}, expected RF")
    return _sinr_from_power(s, received_power(s), av, bs)


def sinr_thz(s: Scenario, av: int, bs: int) -> float:
    _check_indices(s, av, bs)
    if s.bs_types[bs] is not BSType.THZ:
        raise TypeMismatchError(f"BS {bs} is {s.bs_types[bs].value}, expected THz")
    return _sinr_from_power(s, received_power(s), av, bs)


def sinr_matrix(s: Scenario) -> np.ndarray:
    power = received_power(s)
    return np.array([[_sinr_from_power(s, power, i, j) for j in range(s.n_bs)] for i in range(s.n_avs)])


def rate_from_sinr(sinr: float, bandwidth: float, gamma_th_db: float) -> float:
    """Shannon rate in bits/s, zero when the link is below the admission threshold."""
    if sinr < db_to_linear(gamma_th_db):
        return 0.0
    return bandwidth * math.log2(1.0 + sinr)


def link_rate(s: Scenario, av: int, bs: int) -> float:
    _check_indices(s, av, bs)
    sinr = _sinr_from_power(s, received_power(s), av, bs)
    return rate_from_sinr(sinr, s.bandwidth(bs), s.config.gamma_th)


def handoff_penalties(s: Scenario) -> np.ndarray:
    """mu_ij: zero for the prior serving BS (or everywhere if there is none)."""
    mu = np.zeros((s.n_avs, s.n_bs))
    if s.prior_association is None:
        return mu
    per_bs = np.array([s.config.mu_rf if t is BSType.RF else s.config.mu_thz for t in s.bs_types])
    for i, prev in enumerate(s.prior_association):
        if prev < 0:
            continue
        mu[i] = per_bs
        mu[i, prev] = 0.0
    return mu


def weighted_rate_matrix(
    s: Scenario,
    load_estimate: Sequence[int] | None = None,
    normalize: bool = False,
) -> WeightedRateMatrix:
    """WR_ij = R_ij / min(Q_j, n_j) * (1 - mu_ij).

    ``load_estimate`` freezes the per-BS active-user count ``n_j`` (default
    all ones) so the matrix does not depend on the assignment being solved.
    With ``normalize`` rates are divided by the serving BS bandwidth.
    """
    loads = np.ones(s.n_bs) if load_estimate is None else np.asarray(load_estimate, dtype=float)
    if loads.shape != (s.n_bs,):
        raise ShapeError(f"load_estimate needs {s.n_bs} entries, got {loads.shape}")
    if np.any(loads < 1):
        raise DomainError("load estimates must be >= 1")

    sinr = sinr_matrix(s)
    feasible = sinr >= db_to_linear(s.config.gamma_th)
    bandwidth = np.array([s.bandwidth(j) for j in range(s.n_bs)])
    rate = np.log2(1.0 + sinr)
    if not normalize:
        rate = rate * bandwidth
    rate = np.where(feasible, rate, 0.0)
    caps = np.array(s.capacities(), dtype=float)
    wr = rate / np.minimum(caps, loads) * (1.0 - handoff_penalties(s))
    return WeightedRateMatrix(wr, feasible, normalized=normalize)


# -- key-value persistence -------------------------------------------------

def config_to_dict(config: VNetConfig) -> dict:
    return asdict(config)


def save_config(config: VNetConfig, path: str | Path) -> None:
    Path(path).write_text(tomli_w.dumps(config_to_dict(config)))


def load_config(path: str | Path) -> VNetConfig:
    with open(path, "rb") as fh:
        return VNetConfig.from_dict(tomllib.load(fh))


def scenario_to_dict(s: Scenario) -> dict:
    data = config_to_dict(s.config)
    data["bs_positions"] = s.bs_positions.tolist()
    data["bs_types"] = [t.value for t in s.bs_types]
    data["av_positions"] = s.av_positions.tolist()
    data["fading_gains"] = s.fading_gains.tolist()
    if s.prior_association is not None:
        data["prior_association"] = s.prior_association.tolist()
    return data


def scenario_from_dict(data: dict) -> Scenario:
    return Scenario(
        bs_positions=data["bs_positions"],
        bs_types=tuple(data["bs_types"]),
        av_positions=data["av_positions"],
        fading_gains=data["fading_gains"],
        prior_association=data.get("prior_association"),
        config=VNetConfig.from_dict(data),
    )


def save_scenario(s: Scenario, path: str | Path) -> None:
    Path(path).write_text(tomli_w.dumps(scenario_to_dict(s)))


def load_scenario(path: str | Path) -> Scenario:
    with open(path, "rb") as fh:
        return scenario_from_dict(tomllib.load(fh))
