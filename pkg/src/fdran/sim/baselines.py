"""Feedback-based parameter selection used as comparison schemes.

Both schemes see the channel as it was when the user last reported and pick
the CQI that channel would support, so any change between the report and
the transmission shows up as a bad CQI.
"""

from functools import lru_cache
from typing import Sequence

import numpy as np

from ..ffmap import TransmissionParams, derive_params
from ..phy.cqi import CQI_TABLE
from ..phy.link import PhyConfig, Precoder, achievable_rate, real_cqi_from_sinrs, zf_sinrs

OPTIMAL = "optimal-precoder-feedback"
PMI = "pmi-feedback"
FEEDBACK_FREE = "feedback-free"
TX_SCHEMES = (FEEDBACK_FREE, PMI, OPTIMAL)
CODEBOOK_SIZE = 16
CODEBOOK_SEED = 20240611


@lru_cache(maxsize=None)
def codebook(n_antennas: int, layers: int, size: int = CODEBOOK_SIZE) -> tuple:
    """Fixed orthonormal-column matrices (n_antennas x layers), the same on every call."""
    rng = np.random.default_rng([CODEBOOK_SEED, n_antennas, layers])
    out = []
    for _ in range(size):
        g = rng.standard_normal((n_antennas, layers)) + 1j * rng.standard_normal((n_antennas, layers))
        q, r = np.linalg.qr(g)
        q = q * (np.diag(r) / np.abs(np.diag(r)))  # unique phase convention
        out.append(q)
    return tuple(out)


def _stack(channels) -> np.ndarray:
    return np.stack([c.entries if hasattr(c, "entries") else np.asarray(c, complex) for c in channels])


def pmi_params(channels: Sequence, cfg: PhyConfig, mask: int = 0, table=CQI_TABLE) -> TransmissionParams:
    """Best codebook entry (over layer counts too) under the reported channel."""
    h = _stack(channels)  # (B, K, r, t)
    n_b, n_tx = h.shape[0], h.shape[3]
    best = None
    for layers in range(1, cfg.max_layers + 1):
        book = codebook(n_b * n_tx, layers)
        blocks = [[Precoder.normalized(w[b * n_tx:(b + 1) * n_tx]) for b in range(n_b)] for w in book]
        w_all = np.stack([np.stack([blk.matrix for blk in entry]) for entry in blocks])  # (C, B, t, L)
        g = np.einsum("bkrt,cbtl->ckrl", h, w_all)
        sinr = zf_sinrs(g, cfg.noise_variance)
        cqis = real_cqi_from_sinrs(sinr.reshape(len(book), -1), cfg.alpha, table)
        for idx, cqi in enumerate(cqis):
            rate = achievable_rate(layers, int(cqi), int(cqi), 1, cfg, table)
            if best is None or rate > best.rate_per_subcarrier:
                best = TransmissionParams(layers, tuple(blocks[idx]), int(cqi), rate, mask)
    return best


def optimal_params(channels: Sequence, cfg: PhyConfig, mask: int = 0, table=CQI_TABLE) -> TransmissionParams:
    """Dominant eigenvectors of the reported channel, CQI read off the same channel."""
    return derive_params([list(channels)], cfg, table, mask, reliability=1.0)


def baseline_params(scheme: str, channels: Sequence, cfg: PhyConfig, mask: int = 0,
                    table=CQI_TABLE) -> TransmissionParams:
    """Parameters a feedback scheme picks from the delayed channels of a coop set."""
    if scheme == OPTIMAL:
        return optimal_params(channels, cfg, mask, table)
    if scheme == PMI:
        return pmi_params(channels, cfg, mask, table)
    raise ValueError(f"no feedback baseline named {scheme!r}")


def coop_masks(option: str, M: int) -> tuple:
    """Coop sets a cooperation option may use, as bitmasks."""
    if option == "single":
        return (1,)
    if option == "pair":
        pair = 1 | (1 << (M - 1))
        return tuple(m for m in range(1, 1 << M) if m & pair == m)
    if option == "flexible":
        return tuple(range(1, 1 << M))
    raise ValueError(f"unknown cooperation option {option!r}")
