"""Link-level model: ZF equalization, per-layer SINR, CQI and achievable rate."""

from dataclasses import dataclass
from functools import lru_cache
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..errors import DimensionMismatch, EmptyInput, LayerMismatch, RankDeficient
from .cqi import CQI_TABLE, CqiEntry, entry, threshold_linear
from .miesm import bicm_capacity

SLOT_SECONDS = 1e-3
SYMBOLS_PER_SLOT = 14


@dataclass(frozen=True)
class PhyConfig:
    n_tx: int = 16
    n_rx: int = 4
    noise_variance: float = 1e-9
    alpha: float = 1.0
    numerology: int = 0
    overhead: float = 0.14

    def __post_init__(self):
        if self.noise_variance <= 0:
            raise ValueError("noise_variance must be positive")
        if not 0 <= self.overhead < 1:
            raise ValueError("overhead must lie in [0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError("antenna counts must be positive")

    @property
    def subcarrier_spacing_khz(self) -> float:
        return 15.0 * 2 ** self.numerology

    @property
    def symbol_duration(self) -> Fraction:
        """Average OFDM symbol duration t^mu in seconds."""
        return Fraction(1, 1000 * SYMBOLS_PER_SLOT * 2 ** self.numerology)

    @property
    def max_layers(self) -> int:
        return min(self.n_rx, 4)


@dataclass(frozen=True)
class Precoder:
    """Per-BS precoding matrix (N_tx x L) with unit Frobenius norm."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2:
            raise DimensionMismatch("precoder must be a 2-D matrix")
        norm = np.linalg.norm(m)
        if not np.isclose(norm, 1.0, atol=1e-9):
            raise ValueError(f"precoder Frobenius norm is {norm}, expected 1")
        object.__setattr__(self, "matrix", m)

    @property
    def layers(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def normalized(cls, matrix) -> "Precoder":
        m = np.asarray(matrix, dtype=complex)
        return cls(m / np.linalg.norm(m))


def zf_equalizer(effective_channel: np.ndarray, cond_limit: float = 1e10) -> np.ndarray:
    """Zero-forcing equalizer (G^H G)^-1 G^H for one matrix or a stack of them."""
    g = np.asarray(effective_channel, dtype=complex)
    if g.ndim < 2:
        raise DimensionMismatch("effective channel must be at least 2-D")
    n_rx, layers = g.shape[-2:]
    if layers > n_rx:
        raise RankDeficient(f"{layers} layers exceed {n_rx} receive antennas")
    gh = np.conj(np.swapaxes(g, -1, -2))
    gram = gh @ g
    if np.any(np.linalg.cond(gram) > cond_limit):
        raise RankDeficient("effective channel is (numerically) rank deficient")
    return np.linalg.solve(gram, gh)


def layer_sinr(channel, precoder, equalizer, noise_variance: float) -> np.ndarray:
    """Post-equalization SINR per layer; works on stacks along leading axes."""
    h = np.asarray(channel, dtype=complex)
    w = precoder.matrix if isinstance(precoder, Precoder) else np.asarray(precoder, dtype=complex)
    e = np.asarray(equalizer, dtype=complex)
    if h.shape[-1] != w.shape[-2] or e.shape[-1] != h.shape[-2] or e.shape[-2] != w.shape[-1]:
        raise DimensionMismatch(
            f"incompatible shapes H{h.shape} W{w.shape} E{e.shape}")
    return sinr_from_effective(e @ h @ w, e, noise_variance)


def sinr_from_effective(g: np.ndarray, e: np.ndarray, noise_variance: float) -> np.ndarray:
    """SINR given the equivalent channel G = E H W and the equalizer E."""
    power = np.abs(g) ** 2
    signal = np.diagonal(power, axis1=-2, axis2=-1)
    interference = power.sum(axis=-1) - signal
    noise = noise_variance * (np.abs(e) ** 2).sum(axis=-1)
    return signal / (interference + noise)


def zf_sinrs(effective_channel: np.ndarray, noise_variance: float) -> np.ndarray:
    """Per-layer SINRs after ZF on a stack of effective channels (..., N_rx, L).

    Rank-deficient matrices yield zero SINR instead of raising.
    """
    g = np.asarray(effective_channel, dtype=complex)
    gh = np.conj(np.swapaxes(g, -1, -2))
    gram = gh @ g
    cond = np.linalg.cond(gram)
    bad = ~np.isfinite(cond) | (cond > 1e10)
    if bad.any():
        gram = gram.copy()
        gram[bad] = np.eye(g.shape[-1])
    e = np.linalg.solve(gram, gh)
    s = sinr_from_effective(e @ g, e, noise_variance)
    s[bad] = 0.0
    return np.maximum(s, 0.0)


@lru_cache(maxsize=4096)
def _threshold_capacity(threshold: float, alpha: float, modulation_order: int) -> float:
    return float(bicm_capacity(np.array([threshold / alpha]), modulation_order)[0])


def real_cqi_from_sinrs(sinrs, alpha: float, table: Sequence[CqiEntry] = CQI_TABLE):
    """Real CQI for each row of SINRs (all subcarrier/layer values of one realization).

    Each candidate CQI is checked against the effective SNR computed with its own
    modulation order; the result is the highest CQI that passes, 0 if none.
    Returns an int array with one entry per row.

    The check runs in the capacity domain: since capacity is strictly
    increasing, ``alpha * I^-1(mean I(s / alpha)) >= T`` is the same as
    ``mean I(s / alpha) >= I(T / alpha)``, which avoids inverting per row.
    The effective SNR is clamped to the row's [min, max] range, so thresholds
    at or below the minimum always pass and those above the maximum never do.
    """
    s = np.atleast_2d(np.asarray(sinrs, dtype=float))
    s = s.reshape(s.shape[0], -1)
    if s.shape[1] == 0:
        raise EmptyInput("need at least one SINR per row")
    lo, hi = s.min(axis=1), s.max(axis=1)
    out = np.zeros(s.shape[0], dtype=int)
    mean_cap = {}
    for e in table:
        if e.modulation_order not in mean_cap:
            mean_cap[e.modulation_order] = bicm_capacity(s / alpha, e.modulation_order).mean(axis=1)
        t = threshold_linear(e)
        need = _threshold_capacity(t, alpha, e.modulation_order)
        ok = (t <= lo) | ((t <= hi) & (mean_cap[e.modulation_order] >= need))
        out[ok] = e.index
    return out


def achievable_rate(layers: int, cqi_em: int, cqi_re: int, n_subcarriers: int,
                    cfg: PhyConfig, table: Sequence[CqiEntry] = CQI_TABLE) -> float:
    """Achievable rate in bit/s; zero when the employed CQI exceeds the real one."""
    return float(achievable_rate_exact(layers, cqi_em, cqi_re, n_subcarriers, cfg, table))


def achievable_rate_exact(layers, cqi_em, cqi_re, n_subcarriers, cfg, table=CQI_TABLE) -> Fraction:
    if cqi_em < 1 or cqi_em > cqi_re or n_subcarriers <= 0 or layers <= 0:
        return Fraction(0)
    e = entry(cqi_em, table)
    overhead = Fraction(cfg.overhead).limit_denominator(10**6)
    return (layers * e.modulation_order * e.code_rate * n_subcarriers
            / cfg.symbol_duration * (1 - overhead))


def jt_effective_channel(channels: Sequence[np.ndarray], precoders: Sequence) -> np.ndarray:
    """Per-subcarrier effective channel sum_m H^m W^m over a cooperation set."""
    if len(channels) != len(precoders) or not channels:
        raise DimensionMismatch("need one precoder per channel")
    mats = [p.matrix if isinstance(p, Precoder) else np.asarray(p, dtype=complex)
            for p in precoders]
    layers = {m.shape[1] for m in mats}
    if len(layers) != 1:
        raise LayerMismatch(f"members use different layer counts {sorted(layers)}")
    subcarriers = {np.shape(h)[0] for h in channels}
    if len(subcarriers) != 1:
        raise DimensionMismatch("members have different subcarrier counts")
    out = None
    for h, w in zip(channels, mats):
        h = h.entries if hasattr(h, "entries") else np.asarray(h, dtype=complex)
        term = h @ w
        out = term if out is None else out + term
    return out
