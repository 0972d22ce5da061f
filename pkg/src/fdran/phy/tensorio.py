"""Channel tensor files: "FDRANCH1" + five little-endian u32 dims + complex128 payload.

Dims are (slots, bs, subcarriers, n_rx, n_tx); the payload is float64
(re, im) pairs in row-major order.
"""

import struct

import numpy as np

from ..errors import FormatError
from .channel import ChannelSet

MAGIC = b"FDRANCH1"
_HEADER = struct.Struct("<5I")


def write_channel_tensor(path, tensor: np.ndarray) -> None:
    t = np.asarray(tensor, dtype=np.complex128)
    if t.ndim != 5:
        raise ValueError("tensor must have dims (slots, bs, subcarriers, n_rx, n_tx)")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(_HEADER.pack(*t.shape))
        f.write(t.astype("<c16").tobytes(order="C"))


def read_channel_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:len(MAGIC)] != MAGIC:
        raise FormatError("bad magic in channel tensor file")
    if len(data) < len(MAGIC) + _HEADER.size:
        raise FormatError("channel tensor header truncated")
    dims = _HEADER.unpack_from(data, len(MAGIC))
    payload = data[len(MAGIC) + _HEADER.size:]
    expected = int(np.prod(dims)) * 16
    if len(payload) != expected:
        raise FormatError(f"payload has {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype="<c16").reshape(dims).astype(np.complex128)


def channel_sets(tensor: np.ndarray, slot: int):
    """ChannelSets of every BS for one slot of an imported tensor."""
    return [ChannelSet(tensor[slot, b], b, slot) for b in range(tensor.shape[1])]
