"""Location-indexed transmission-parameter maps built from historical channels.

For every grid cell and every non-empty cooperation set the map stores one
fixed parameter set: the layer count, a per-BS precoder, the employed CQI and
the rate one subcarrier delivers with them.
"""

from dataclasses import dataclass, field
import hashlib
import math
import struct
from typing import Dict, Sequence, Tuple

import numpy as np

from .errors import FormatError, OutOfGrid
from .phy.channel import gen_channel
from .phy.cqi import CQI_TABLE, MAX_CQI, CqiEntry
from .phy.link import PhyConfig, Precoder, achievable_rate, real_cqi_from_sinrs, zf_sinrs

RELIABILITY = 0.9
TRAIN_SLOT_BASE = 1 << 40

MAGIC = b"FDRANMAP1"
VERSION = 1


def members(mask: int) -> Tuple[int, ...]:
    """BS indices (0-based) contained in a cooperation bitmask."""
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid of square cells in the horizontal plane at height origin[2]."""

    origin: Tuple[float, float, float]
    spacing: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid must contain at least one cell")
        if self.spacing <= 0:
            raise ValueError("grid spacing must be positive")

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    def cell_center(self, cell: int) -> np.ndarray:
        iy, ix = divmod(cell, self.nx)
        ox, oy, oz = self.origin
        return np.array([ox + (ix + 0.5) * self.spacing, oy + (iy + 0.5) * self.spacing, oz])

    def locate(self, location) -> int:
        """Cell containing ``location``; points on a shared edge go to the lower index."""
        ix = self._axis(location[0] - self.origin[0], self.nx)
        iy = self._axis(location[1] - self.origin[1], self.ny)
        return iy * self.nx + ix

    def _axis(self, offset: float, n: int) -> int:
        t = offset / self.spacing
        if t < -1e-9 or t > n + 1e-9:
            raise OutOfGrid(f"offset {offset} outside grid extent {n * self.spacing}")
        return min(max(math.ceil(t) - 1, 0), n - 1)


@dataclass(frozen=True)
class TransmissionParams:
    layers: int
    precoders: Tuple[Precoder, ...]
    cqi_em: int
    rate_per_subcarrier: float
    mask: int = 0


@dataclass
class RateMap:
    grid: GridSpec
    bs_positions: np.ndarray
    cfg: PhyConfig
    entries: Dict[Tuple[int, int], TransmissionParams]
    seed: int
    samples: int
    config_hash: bytes = field(default=b"")

    @property
    def n_bs(self) -> int:
        return len(self.bs_positions)

    def query(self, location, mask: int) -> TransmissionParams:
        return query(self, location, mask)

    def rates(self, location) -> Dict[int, float]:
        cell = self.grid.locate(location)
        return {mask: self.entries[(cell, mask)].rate_per_subcarrier
                for mask in range(1, 2 ** self.n_bs)}


def employed_cqi(real_cqis, reliability: float = RELIABILITY) -> int:
    """Highest CQI that at least ``reliability`` of the samples support."""
    r = np.asarray(real_cqis)
    for c in range(MAX_CQI, 0, -1):
        if np.mean(r >= c) >= reliability - 1e-12:
            return c
    return 0


def _as_array(sample) -> np.ndarray:
    return sample.entries if hasattr(sample, "entries") else np.asarray(sample, dtype=complex)


def derive_params(coop_samples, cfg: PhyConfig, table: Sequence[CqiEntry] = CQI_TABLE,
                  mask: int = 0, reliability: float = RELIABILITY) -> TransmissionParams:
    """Fixed transmission parameters for one location and cooperation set.

    ``coop_samples[s][m]`` is the channel of cooperation member ``m`` in
    historical sample ``s`` (a ChannelSet or a (K, n_rx, n_tx) array).
    """
    if len(coop_samples) == 0 or len(coop_samples[0]) == 0:
        raise ValueError("need at least one sample of a non-empty cooperation set")
    h = np.stack([np.stack([_as_array(c) for c in s]) for s in coop_samples])  # (S, B, K, r, t)
    n_b, n_tx = h.shape[1], h.shape[4]
    joint = np.concatenate([h[:, b] for b in range(n_b)], axis=-1)  # (S, K, r, B*t)
    gram = np.einsum("skri,skrj->ij", joint.conj(), joint) / (joint.shape[0] * joint.shape[1])
    _, vecs = np.linalg.eigh(gram)
    vecs = vecs[:, ::-1]

    best = None
    for layers in range(1, min(cfg.max_layers, n_b * n_tx) + 1):
        precoders = _split_blocks(vecs[:, :layers], n_b, n_tx)
        g = sum(h[:, b] @ precoders[b].matrix for b in range(n_b))
        sinr = zf_sinrs(g, cfg.noise_variance)
        cqis = real_cqi_from_sinrs(sinr.reshape(sinr.shape[0], -1), cfg.alpha, table)
        cqi_em = employed_cqi(cqis, reliability)
        rate = achievable_rate(layers, cqi_em, cqi_em, 1, cfg, table)
        if best is None or rate > best.rate_per_subcarrier:
            best = TransmissionParams(layers, tuple(precoders), cqi_em, rate, mask)
    return best


def _split_blocks(v: np.ndarray, n_b: int, n_tx: int):
    out = []
    for b in range(n_b):
        block = v[b * n_tx:(b + 1) * n_tx]
        if np.linalg.norm(block) < 1e-12:
            block = np.ones_like(block)
        out.append(Precoder.normalized(block))
    return out


def training_subcarriers(total: int, count: int) -> np.ndarray:
    count = max(1, min(count, total))
    return np.unique(np.linspace(0, total - 1, count).round().astype(int))


def build_map(grid: GridSpec, bs_positions, samples: int, cfg: PhyConfig, seed: int,
              subcarriers: int = 144, train_subcarriers: int = 12,
              table: Sequence[CqiEntry] = CQI_TABLE) -> RateMap:
    """Evaluate every (cell, cooperation set) pair from ``samples`` historical slots."""
    bs_positions = np.asarray(bs_positions, dtype=float)
    n_bs = len(bs_positions)
    if n_bs < 1:
        raise ValueError("need at least one BS")
    if samples < 1:
        raise ValueError("need at least one sample")
    idx = training_subcarriers(subcarriers, train_subcarriers)
    entries = {}
    for cell in range(grid.n_cells):
        loc = grid.cell_center(cell)
        hist = [[gen_channel(loc, bs_positions[m], cfg, subcarriers, seed, TRAIN_SLOT_BASE + s,
                             bs_id=m, subcarrier_indices=idx).entries
                 for m in range(n_bs)] for s in range(samples)]
        for mask in range(1, 2 ** n_bs):
            mem = members(mask)
            coop = [[s[m] for m in mem] for s in hist]
            entries[(cell, mask)] = derive_params(coop, cfg, table, mask)
    m = RateMap(grid, bs_positions, cfg, entries, seed, samples)
    m.config_hash = _config_hash(m)
    return m


def query(rate_map: RateMap, location, mask: int) -> TransmissionParams:
    cell = rate_map.grid.locate(location)
    return rate_map.entries[(cell, mask)]


# --- binary file format -------------------------------------------------------

_HEAD = struct.Struct("<3dd2I4HIQddHd")
_REC = struct.Struct("<IHBBd")


def _head_bytes(m: RateMap) -> bytes:
    g, c = m.grid, m.cfg
    return _HEAD.pack(*g.origin, g.spacing, g.nx, g.ny, m.n_bs, c.n_tx, c.n_rx, c.max_layers,
                      m.samples, m.seed, c.noise_variance, c.alpha, c.numerology, c.overhead)


def _config_hash(m: RateMap) -> bytes:
    return hashlib.sha256(_head_bytes(m) + np.asarray(m.bs_positions, "<f8").tobytes()).digest()


def save_map(rate_map: RateMap, path) -> None:
    m, c = rate_map, rate_map.cfg
    width = m.n_bs * c.n_tx * c.max_layers
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", VERSION))
        f.write(_config_hash(m))
        f.write(_head_bytes(m))
        f.write(np.asarray(m.bs_positions, "<f8").tobytes())
        f.write(struct.pack("<I", len(m.entries)))
        for (cell, mask) in sorted(m.entries):
            tp = m.entries[(cell, mask)]
            f.write(_REC.pack(cell, mask, tp.layers, tp.cqi_em, tp.rate_per_subcarrier))
            block = np.zeros(width, dtype="<c16")
            flat = np.concatenate([p.matrix.ravel() for p in tp.precoders])
            block[:flat.size] = flat
            f.write(block.tobytes())


def load_map(path) -> RateMap:
    with open(path, "rb") as f:
        data = f.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError("map file truncated")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(len(MAGIC)) != MAGIC:
        raise FormatError("bad magic in map file")
    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise FormatError(f"unsupported map version {version}")
    stored_hash = take(32)
    head = _HEAD.unpack(take(_HEAD.size))
    ox, oy, oz, spacing, nx, ny, n_bs, n_tx, n_rx, lmax, samples, seed, noise, alpha, mu, oh = head
    bs = np.frombuffer(take(24 * n_bs), "<f8").reshape(n_bs, 3).copy()
    cfg = PhyConfig(n_tx=n_tx, n_rx=n_rx, noise_variance=noise, alpha=alpha, numerology=mu, overhead=oh)
    grid = GridSpec((ox, oy, oz), spacing, nx, ny)
    (count,) = struct.unpack("<I", take(4))
    width = n_bs * n_tx * lmax
    entries = {}
    for _ in range(count):
        cell, mask, layers, cqi, rate = _REC.unpack(take(_REC.size))
        flat = np.frombuffer(take(16 * width), "<c16")
        pre, off = [], 0
        for _m in members(mask):
            pre.append(Precoder(flat[off:off + n_tx * layers].reshape(n_tx, layers).copy()))
            off += n_tx * layers
        entries[(cell, mask)] = TransmissionParams(layers, tuple(pre), cqi, rate, mask)
    if pos != len(data):
        raise FormatError("trailing bytes after map records")
    m = RateMap(grid, bs, cfg, entries, seed, samples)
    m.config_hash = _config_hash(m)
    if m.config_hash != stored_hash:
        raise FormatError("config hash mismatch")
    if count != grid.n_cells * (2 ** n_bs - 1):
        raise FormatError("map is incomplete")
    return m
