"""Heterogeneous cellular network geometry and channel generation.

One macro base station sits at the origin and ``num_small_cells`` small
base stations are dropped uniformly inside the macro disk.  Users are
dropped uniformly inside the disk of the base station that serves them.
Channel power gains follow ``|x|^2 * d**(2 * xi)`` with unit-mean
exponential ``|x|^2`` (Rayleigh magnitude squared) and are generated for
every (base station, user, subcarrier) triple so that cross-cell
interference can be evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "NetworkConfig",
    "Topology",
    "ChannelState",
    "TopologyError",
    "generate_topology",
    "generate_channels",
    "generate_scenario",
    "load_network_config",
    "parse_network_config",
    "format_network_config",
]

MIN_DISTANCE_M = 1.0
MAX_PLACEMENT_RETRIES = 10_000


class TopologyError(RuntimeError):
    """Raised when small cells cannot be placed with the required separation."""


@dataclass(frozen=True)
class NetworkConfig:
    """Scenario parameters for one HetNet drop.

    ``users_per_bs[0]`` and ``p_max[0]`` refer to the macro base station,
    the remaining entries to the small cells in order.
    """

    macro_radius: float = 500.0
    small_radius: float = 20.0
    num_small_cells: int = 2
    users_per_bs: tuple[int, ...] = (2, 1, 1)
    num_subcarriers: int = 8
    pathloss_exponent: float = -2.0
    noise_power: float = 1e-12
    p_max: tuple[float, ...] = (10.0, 2.0, 2.0)
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "users_per_bs", tuple(int(u) for u in self.users_per_bs))
        object.__setattr__(self, "p_max", tuple(float(p) for p in self.p_max))
        self.validate()

    @property
    def num_bs(self) -> int:
        return self.num_small_cells + 1

    @property
    def num_users(self) -> int:
        return sum(self.users_per_bs)

    def validate(self):
        if not self.macro_radius > self.small_radius > 0:
            raise ValueError("need macro_radius > small_radius > 0")
        if self.num_small_cells < 0:
            raise ValueError("num_small_cells must be >= 0")
        if len(self.users_per_bs) != self.num_bs:
            raise ValueError(
                f"users_per_bs has {len(self.users_per_bs)} entries, expected {self.num_bs}"
            )
        if len(self.p_max) != self.num_bs:
            raise ValueError(f"p_max has {len(self.p_max)} entries, expected {self.num_bs}")
        if any(u < 1 for u in self.users_per_bs):
            raise ValueError("every base station needs at least one user")
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        if any(not p > 0 for p in self.p_max):
            raise ValueError("p_max entries must be positive")
        if not np.isfinite(self.pathloss_exponent):
            raise ValueError("pathloss_exponent must be finite")

    def with_users(self, total_users: int) -> "NetworkConfig":
        """Distribute ``total_users`` round-robin over the existing base stations."""
        if total_users < self.num_bs:
            raise ValueError(f"{total_users} users cannot cover {self.num_bs} base stations")
        counts = [0] * self.num_bs
        for i in range(total_users):
            counts[i % self.num_bs] += 1
        return replace(self, users_per_bs=tuple(counts))

    def with_small_cells(self, num_small_cells: int) -> "NetworkConfig":
        """Grow or shrink the small-cell tier, keeping the per-cell user count and budget."""
        if num_small_cells < 0:
            raise ValueError("num_small_cells must be >= 0")
        per_cell_users = self.users_per_bs[-1]
        per_cell_power = self.p_max[-1] if self.num_small_cells else self.p_max[0]
        users = list(self.users_per_bs[: num_small_cells + 1])
        power = list(self.p_max[: num_small_cells + 1])
        while len(users) < num_small_cells + 1:
            users.append(per_cell_users)
            power.append(per_cell_power)
        return replace(
            self,
            num_small_cells=num_small_cells,
            users_per_bs=tuple(users),
            p_max=tuple(power),
        )


@dataclass(frozen=True)
class Topology:
    bs_positions: np.ndarray  # (F, 2), row 0 is the macro BS
    user_positions: np.ndarray  # (M, 2)
    association: np.ndarray  # (M,) serving BS index

    @property
    def num_bs(self) -> int:
        return self.bs_positions.shape[0]

    @property
    def num_users(self) -> int:
        return self.user_positions.shape[0]

    def distances(self) -> np.ndarray:
        """BS-to-user distances, shape (F, M), floored at 1 m."""
        diff = self.bs_positions[:, None, :] - self.user_positions[None, :, :]
        return np.maximum(np.hypot(diff[..., 0], diff[..., 1]), MIN_DISTANCE_M)


@dataclass(frozen=True)
class ChannelState:
    """Channel power gains and noise for a scenario.

    Attributes
    ----------
    gain : ndarray, shape (F, M, N)
        ``|h|^2`` from every base station to every user on every subcarrier.
    noise : ndarray, shape (F, M, N)
        Noise power in watts.
    association : ndarray, shape (M,)
        Serving base station of each user.
    p_max : ndarray, shape (F,)
        Per-BS transmit power budget in watts.
    """

    gain: np.ndarray
    noise: np.ndarray
    association: np.ndarray
    p_max: np.ndarray
    topology: Topology | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        gain = np.asarray(self.gain, dtype=float)
        noise = np.broadcast_to(np.asarray(self.noise, dtype=float), gain.shape).copy()
        association = np.asarray(self.association, dtype=int)
        p_max = np.asarray(self.p_max, dtype=float).reshape(-1)
        if gain.ndim != 3:
            raise ValueError("gain must have shape (F, M, N)")
        F, M, _ = gain.shape
        if association.shape != (M,):
            raise ValueError("association must have one entry per user")
        if p_max.shape != (F,):
            raise ValueError("p_max must have one entry per base station")
        if np.any(gain < 0) or not np.all(np.isfinite(gain)):
            raise ValueError("gains must be finite and nonnegative")
        if np.any(noise <= 0):
            raise ValueError("noise must be positive")
        if np.any(p_max <= 0):
            raise ValueError("p_max must be positive")
        if association.size and (association.min() < 0 or association.max() >= F):
            raise ValueError("association refers to an unknown base station")
        object.__setattr__(self, "gain", gain)
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "association", association)
        object.__setattr__(self, "p_max", p_max)

    @property
    def num_bs(self) -> int:
        return self.gain.shape[0]

    @property
    def num_users(self) -> int:
        return self.gain.shape[1]

    @property
    def num_subcarriers(self) -> int:
        return self.gain.shape[2]

    def users_of(self, f: int) -> np.ndarray:
        return np.flatnonzero(self.association == f)


def _uniform_in_disk(rng: np.random.Generator, center, radius: float, size: int) -> np.ndarray:
    r = radius * np.sqrt(rng.random(size))
    theta = 2.0 * np.pi * rng.random(size)
    return np.asarray(center, dtype=float) + np.column_stack((r * np.cos(theta), r * np.sin(theta)))


# Every random quantity comes from its own stream keyed by what it belongs
# to, so a scenario with more users or cells extends the smaller one drawn
# with the same seed instead of reshuffling it.
_CELLS, _USER, _FADING = 0, 1, 2


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def generate_topology(cfg: NetworkConfig, seed: int | None = None) -> Topology:
    """Drop base stations and users for ``cfg``.

    Small base stations are rejection-sampled in the macro disk, one after
    the other, so that their centers are at least two small-cell radii
    apart.  Raises :class:`TopologyError` after 10,000 rejected draws.
    User ``j`` of base station ``f`` always gets the same position for a
    given seed.
    """
    cfg.validate()
    seed = cfg.seed if seed is None else seed
    rng = _stream(seed, _CELLS)
    centers = [np.zeros(2)]
    min_sep = 2.0 * cfg.small_radius
    attempts = 0
    while len(centers) < cfg.num_bs:
        if attempts >= MAX_PLACEMENT_RETRIES:
            raise TopologyError(
                f"could not place {cfg.num_small_cells} small cells of radius "
                f"{cfg.small_radius} m inside {cfg.macro_radius} m "
                f"after {MAX_PLACEMENT_RETRIES} draws"
            )
        attempts += 1
        cand = _uniform_in_disk(rng, (0.0, 0.0), cfg.macro_radius, 1)[0]
        if all(np.hypot(*(cand - c)) >= min_sep for c in centers[1:]):
            centers.append(cand)
    bs_positions = np.vstack(centers)

    users, association = [], []
    for f, count in enumerate(cfg.users_per_bs):
        radius = cfg.macro_radius if f == 0 else cfg.small_radius
        for j in range(count):
            users.append(_uniform_in_disk(_stream(seed, _USER, f, j), bs_positions[f], radius, 1))
        association.extend([f] * count)
    return Topology(
        bs_positions=bs_positions,
        user_positions=np.vstack(users),
        association=np.asarray(association, dtype=int),
    )


def generate_channels(topo: Topology, cfg: NetworkConfig, seed: int | None = None) -> ChannelState:
    """Rayleigh-faded path-loss gains for every (BS, user, subcarrier)."""
    if topo.num_bs != cfg.num_bs or topo.num_users != cfg.num_users:
        raise ValueError("topology does not match the network configuration")
    seed = cfg.seed if seed is None else seed
    d = topo.distances()
    fading = np.empty((topo.num_bs, topo.num_users, cfg.num_subcarriers))
    index_in_cell = np.zeros(topo.num_users, dtype=int)
    for f in range(topo.num_bs):
        served = np.flatnonzero(topo.association == f)
        index_in_cell[served] = np.arange(served.size)
    for b in range(topo.num_bs):
        for m in range(topo.num_users):
            rng = _stream(seed, _FADING, b, int(topo.association[m]), int(index_in_cell[m]))
            fading[b, m] = rng.exponential(1.0, size=cfg.num_subcarriers)
    gain = fading * d[:, :, None] ** (2.0 * cfg.pathloss_exponent)
    return ChannelState(
        gain=gain,
        noise=np.full(gain.shape, cfg.noise_power),
        association=topo.association,
        p_max=np.asarray(cfg.p_max),
        topology=topo,
    )


def generate_scenario(cfg: NetworkConfig, seed: int | None = None) -> ChannelState:
    """Topology and channels for ``seed`` (``cfg.seed`` by default)."""
    seed = cfg.seed if seed is None else seed
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValueError("seed must be a nonnegative integer")
    return generate_channels(generate_topology(cfg, int(seed)), cfg, int(seed))


# Scenario files: plain ``key=value`` lines, '#' starts a comment.
_FLOAT_KEYS = {
    "macro_radius_m": "macro_radius",
    "small_radius_m": "small_radius",
    "pathloss_exponent": "pathloss_exponent",
    "noise_power_w": "noise_power",
}
_INT_KEYS = {
    "num_small_cells": "num_small_cells",
    "num_subcarriers": "num_subcarriers",
    "seed": "seed",
}
_LIST_KEYS = {
    "users_per_bs": ("users_per_bs", int),
    "p_max_w": ("p_max", float),
}


def parse_network_config(text: str) -> NetworkConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in _FLOAT_KEYS:
            values[_FLOAT_KEYS[key]] = float(value)
        elif key in _INT_KEYS:
            values[_INT_KEYS[key]] = int(value)
        elif key in _LIST_KEYS:
            name, conv = _LIST_KEYS[key]
            values[name] = tuple(conv(v) for v in value.split(",") if v.strip())
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    missing = set(_FLOAT_KEYS.values()) | set(_INT_KEYS.values()) | {n for n, _ in _LIST_KEYS.values()}
    missing -= set(values)
    if missing:
        raise ValueError(f"scenario file is missing keys: {sorted(missing)}")
    return NetworkConfig(**values)


def load_network_config(path) -> NetworkConfig:
    return parse_network_config(Path(path).read_text())


def format_network_config(cfg: NetworkConfig) -> str:
    return "\n".join(
        [
            f"macro_radius_m={cfg.macro_radius!r}",
            f"small_radius_m={cfg.small_radius!r}",
            f"num_small_cells={cfg.num_small_cells}",
            "users_per_bs=" + ",".join(str(u) for u in cfg.users_per_bs),
            f"num_subcarriers={cfg.num_subcarriers}",
            f"pathloss_exponent={cfg.pathloss_exponent!r}",
            f"noise_power_w={cfg.noise_power!r}",
            "p_max_w=" + ",".join(repr(p) for p in cfg.p_max),
            f"seed={cfg.seed}",
            "",
        ]
    )
