"""Turning per-user allocations into concrete subcarrier assignments."""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

from ..errors import CapacityExceeded


@dataclass(frozen=True)
class Segment:
    user_id: int
    mask: int
    start: int
    count: int

    @property
    def indices(self) -> range:
        return range(self.start, self.start + self.count)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")


def nested_segments(per_bs: Mapping[int, int]) -> List[Tuple[int, int]]:
    """Split per-BS subcarrier counts of one user into nested (mask, count) pieces.

    The BS with the most subcarriers takes part in every piece; the piece
    shared by all participating BSs comes first.
    """
    items = sorted(((c, bs) for bs, c in per_bs.items() if c > 0), key=lambda t: (-t[0], t[1]))
    out = []
    for j in range(len(items) - 1, -1, -1):
        mask = 0
        for _, bs in items[:j + 1]:
            mask |= 1 << bs
        count = items[j][0] - (items[j + 1][0] if j + 1 < len(items) else 0)
        if count > 0:
            out.append((mask, count))
    return out


def per_bs_counts(pieces: Mapping[int, int]) -> Dict[int, int]:
    """Inverse of nested_segments: subcarriers each BS transmits for one user."""
    out: Dict[int, int] = {}
    for mask, count in pieces.items():
        for bs in range(mask.bit_length()):
            if mask >> bs & 1:
                out[bs] = out.get(bs, 0) + count
    return out


def resource_map(allocation: Mapping[int, Mapping[int, int]], K: int) -> List[Segment]:
    """Contiguous subcarrier blocks, user by user in ascending id, larger coop sets first.

    ``allocation[user_id][mask] = count``.
    """
    total = sum(c for per in allocation.values() for c in per.values() if c > 0)
    if total > K:
        raise CapacityExceeded(f"{total} subcarriers requested, {K} available")
    segs = []
    cursor = 0
    for uid in sorted(allocation):
        pieces = sorted(((m, c) for m, c in allocation[uid].items() if c > 0),
                        key=lambda t: (-bin(t[0]).count("1"), t[0]))
        for mask, count in pieces:
            segs.append(Segment(uid, mask, cursor, count))
            cursor += count
    return segs


def map_energy(segments: Sequence[Segment], p: float) -> float:
    """p times the number of active (BS, subcarrier) pairs."""
    return p * sum(s.size * s.count for s in segments)


def assert_no_double_booking(segments: Sequence[Segment], K: int) -> None:
    used = [False] * K
    for s in segments:
        for k in s.indices:
            if k < 0 or k >= K or used[k]:
                raise CapacityExceeded(f"subcarrier {k} assigned twice or out of range")
            used[k] = True
