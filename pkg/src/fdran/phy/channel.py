"""Synthetic multipath channel with location-determined statistics.

Each (location, BS) link has up to ten planar paths whose angles, delays and
powers are drawn from a generator seeded by the location, the BS and the
environment seed, so they never change over time.  Every slot draws fresh
complex Gaussian path amplitudes, which gives block fading with a one-slot
coherence time.  Total mean power per antenna pair equals the path gain
``d ** -3.5`` (unit gain at 1 m).
"""

from dataclasses import dataclass
import hashlib
import struct

import numpy as np

from .link import PhyConfig

PATH_LOSS_EXPONENT = 3.5
MAX_PATHS = 10
MAX_DELAY_S = 3e-7


@dataclass(frozen=True)
class ChannelSet:
    entries: np.ndarray  # (subcarriers, n_rx, n_tx)
    bs_id: int
    slot: int
    large_scale_gain: float = 1.0

    def __post_init__(self):
        if np.ndim(self.entries) != 3:
            raise ValueError("entries must be (subcarriers, n_rx, n_tx)")

    @property
    def subcarrier_count(self) -> int:
        return self.entries.shape[0]

    @property
    def n_rx(self) -> int:
        return self.entries.shape[1]

    @property
    def n_tx(self) -> int:
        return self.entries.shape[2]


def _key(*parts) -> list:
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode())
    return list(struct.unpack("<8I", h.digest()))


def _loc_key(location) -> tuple:
    return tuple(int(round(float(c) * 1000)) for c in location)


def path_gain(location, bs_position) -> float:
    d = float(np.linalg.norm(np.asarray(location, float) - np.asarray(bs_position, float)))
    return max(d, 1.0) ** -PATH_LOSS_EXPONENT


def _ula(n: int, angles: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.pi * np.outer(np.sin(angles), np.arange(n)))


def link_geometry(location, bs_position, bs_id: int, seed: int, n_paths: int = MAX_PATHS):
    """Time-invariant path parameters for one link: (powers, aod, aoa, delays)."""
    rng = np.random.default_rng(_key("geom", _loc_key(location), _loc_key(bs_position), bs_id, seed))
    paths = int(rng.integers(3, n_paths + 1))
    rel = np.asarray(location, float) - np.asarray(bs_position, float)
    los = np.arctan2(rel[1], rel[0])
    aod = np.concatenate([[np.sin(los) * np.pi / 3], rng.uniform(-np.pi / 2, np.pi / 2, paths - 1)])
    aoa = rng.uniform(-np.pi / 2, np.pi / 2, paths)
    delays = np.concatenate([[0.0], np.sort(rng.uniform(0, MAX_DELAY_S, paths - 1))])
    powers = np.exp(-rng.uniform(0, 3, paths))
    powers[0] = powers.max() * 2
    powers *= path_gain(location, bs_position) / powers.sum()
    return powers, aod, aoa, delays


def gen_channel(location, bs_position, cfg: PhyConfig, subcarriers: int, seed: int, slot: int,
                bs_id: int = 0, subcarrier_indices=None) -> ChannelSet:
    """Channel matrices of one BS-user link for one slot.

    ``subcarrier_indices`` restricts generation to a subset of the
    ``subcarriers`` grid; the values are identical to the full generation.
    """
    if subcarriers < 1:
        raise ValueError("subcarriers must be >= 1")
    powers, aod, aoa, delays = link_geometry(location, bs_position, bs_id, seed)
    rng = np.random.default_rng(_key("fade", _loc_key(location), _loc_key(bs_position), bs_id, seed, slot))
    amp = (rng.standard_normal(len(powers)) + 1j * rng.standard_normal(len(powers))) / np.sqrt(2)
    amp *= np.sqrt(powers)
    k = np.arange(subcarriers) if subcarrier_indices is None else np.asarray(subcarrier_indices)
    df = cfg.subcarrier_spacing_khz * 1e3
    phase = np.exp(-2j * np.pi * np.outer(k * df, delays))  # (K, P)
    a_rx = _ula(cfg.n_rx, aoa)  # (P, n_rx)
    a_tx = _ula(cfg.n_tx, aod)  # (P, n_tx)
    h = np.einsum("kp,pr,pt->krt", phase * amp, a_rx, np.conj(a_tx))
    return ChannelSet(h, bs_id, slot, path_gain(location, bs_position))
