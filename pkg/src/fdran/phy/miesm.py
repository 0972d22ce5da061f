"""Mutual-information effective SNR mapping.

The mapping function is the BICM capacity of Gray-labelled square QAM, which
splits exactly into two Gray PAM components.  Capacities are tabulated on a dB
grid once per modulation order, interpolated with a monotone cubic, and
inverted per cubic piece by safeguarded Newton iteration.
"""

from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import logsumexp

from ..errors import EmptyInput

GRID_DB = np.arange(-30.0, 45.0 + 1e-9, 0.05)
_GH_NODES = 96
_NEWTON_STEPS = 12


def _pam_bicm_capacity(bits: int, snr: np.ndarray) -> np.ndarray:
    """BICM capacity (bits per real dimension) of Gray PAM carrying half a QAM symbol."""
    size = 2 ** bits
    d = np.sqrt(3.0 / (2.0 * (size * size - 1)))
    levels = (2 * np.arange(size) - size + 1) * d
    labels = np.arange(size) ^ (np.arange(size) >> 1)
    t, w = np.polynomial.hermite.hermgauss(_GH_NODES)
    w = w / np.sqrt(np.pi)
    n0 = 1.0 / np.asarray(snr, dtype=float)[:, None, None, None]
    # ll[s, a, k, a']: log-likelihood of level a' for sent level a at node k
    y = levels[None, :, None, None] + np.sqrt(n0) * t[None, None, :, None]
    ll = -((y - levels[None, None, None, :]) ** 2) / n0
    total = logsumexp(ll, axis=3)
    loss = np.zeros(len(snr))
    for b in range(bits):
        bit = (labels >> b) & 1
        for a in range(size):
            part = logsumexp(ll[:, a][:, :, bit == bit[a]], axis=2)
            loss += (total[:, a] - part) @ w / size
    return bits - loss / np.log(2.0)


@lru_cache(maxsize=None)
def _table(modulation_order: int):
    if modulation_order not in (2, 4, 6, 8):
        raise ValueError(f"unsupported modulation order {modulation_order}")
    snr = 10.0 ** (GRID_DB / 10.0)
    cap = 2.0 * _pam_bicm_capacity(modulation_order // 2, snr)
    # keep the strictly increasing part; beyond it the curve is saturated
    inc = np.diff(cap) > 1e-13
    stop = len(cap) if inc.all() else int(np.argmin(inc)) + 1
    db, cap = GRID_DB[:stop], cap[:stop]
    return db, cap, PchipInterpolator(db, cap, extrapolate=False)


def bicm_capacity(snr, modulation_order: int):
    """BICM capacity in bits/symbol at linear SNR ``snr``."""
    db_grid, cap, interp = _table(modulation_order)
    snr = np.asarray(snr, dtype=float)
    out = np.empty(snr.shape)
    lo_snr = 10.0 ** (db_grid[0] / 10.0)
    hi_snr = 10.0 ** (db_grid[-1] / 10.0)
    low = snr <= lo_snr
    high = snr >= hi_snr
    mid = ~(low | high)
    out[low] = cap[0] * np.maximum(snr[low], 0.0) / lo_snr
    out[high] = cap[-1]
    if mid.any():
        out[mid] = interp(10.0 * np.log10(snr[mid]))
    return out if out.ndim else float(out)


def inverse_bicm_capacity(value, modulation_order: int):
    """Linear SNR at which the BICM capacity equals ``value``."""
    db_grid, cap, interp = _table(modulation_order)
    value = np.asarray(value, dtype=float)
    out = np.empty(value.shape)
    lo_snr = 10.0 ** (db_grid[0] / 10.0)
    low = value <= cap[0]
    high = value >= cap[-1]
    mid = ~(low | high)
    out[low] = lo_snr * np.maximum(value[low], 0.0) / cap[0]
    out[high] = 10.0 ** (db_grid[-1] / 10.0)
    if mid.any():
        v = value[mid]
        k = np.clip(np.searchsorted(cap, v) - 1, 0, len(cap) - 2)
        c = interp.c[:, k]
        h = db_grid[k + 1] - db_grid[k]
        lo_u, hi_u = np.zeros_like(v), h.copy()
        u = h * (v - cap[k]) / (cap[k + 1] - cap[k])
        for _ in range(_NEWTON_STEPS):
            f = ((c[0] * u + c[1]) * u + c[2]) * u + c[3] - v
            lo_u = np.where(f < 0, u, lo_u)
            hi_u = np.where(f >= 0, u, hi_u)
            fp = (3 * c[0] * u + 2 * c[1]) * u + c[2]
            with np.errstate(divide="ignore", invalid="ignore"):
                step = u - f / fp
            inside = np.isfinite(step) & (step >= lo_u) & (step <= hi_u)
            u = np.where(inside, step, 0.5 * (lo_u + hi_u))
        out[mid] = 10.0 ** ((db_grid[k] + u) / 10.0)
    return out if out.ndim else float(out)


def effective_snr(sinrs, alpha: float = 1.0, modulation_order: int = 2) -> float:
    """Compress a set of SINRs into one AWGN-equivalent SNR (linear scale).

    Parameters
    ----------
    sinrs : array_like
        Linear SINRs over all (subcarrier, layer) pairs.
    alpha : float
        Calibration factor applied inside the mapping.
    modulation_order : int
        Bits per symbol of the constellation whose capacity curve is used.
    """
    s = np.asarray(sinrs, dtype=float).ravel()
    if s.size == 0:
        raise EmptyInput("effective_snr needs at least one SINR")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    lo, hi = s.min(), s.max()
    if lo == hi:
        return float(lo)
    mean_cap = np.mean(bicm_capacity(s / alpha, modulation_order))
    out = alpha * inverse_bicm_capacity(mean_cap, modulation_order)
    return float(min(max(out, lo), hi))


def effective_snr_rows(sinrs: np.ndarray, alpha: float, modulation_order: int) -> np.ndarray:
    """Row-wise :func:`effective_snr` for a 2-D array (one row per realization)."""
    s = np.asarray(sinrs, dtype=float)
    if s.ndim != 2 or s.shape[1] == 0:
        raise EmptyInput("effective_snr_rows needs a non-empty 2-D array")
    lo, hi = s.min(axis=1), s.max(axis=1)
    mean_cap = bicm_capacity(s / alpha, modulation_order).mean(axis=1)
    out = alpha * inverse_bicm_capacity(mean_cap, modulation_order)
    out = np.minimum(np.maximum(out, lo), hi)
    return np.where(lo == hi, lo, out)
