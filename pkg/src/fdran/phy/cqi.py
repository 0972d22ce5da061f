"""4-bit CQI table (QPSK/16QAM/64QAM) with BLER-10% effective-SNR thresholds."""

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence


@dataclass(frozen=True)
class CqiEntry:
    index: int
    modulation_order: int
    code_rate: Fraction
    snr_threshold_db: float

    @property
    def efficiency(self) -> Fraction:
        return self.modulation_order * self.code_rate


# (modulation order, code rate x1024, AWGN SNR in dB at BLER = 0.1)
_TABLE = [
    (2, 78, -6.7),
    (2, 120, -4.7),
    (2, 193, -2.3),
    (2, 308, 0.2),
    (2, 449, 2.4),
    (2, 602, 4.3),
    (4, 378, 5.9),
    (4, 490, 8.1),
    (4, 616, 10.3),
    (6, 466, 11.7),
    (6, 567, 14.1),
    (6, 666, 16.3),
    (6, 772, 18.7),
    (6, 873, 21.0),
    (6, 948, 22.7),
]

CQI_TABLE = tuple(
    CqiEntry(i + 1, q, Fraction(r, 1024), t) for i, (q, r, t) in enumerate(_TABLE)
)
MAX_CQI = len(CQI_TABLE)


def validate_table(table: Sequence[CqiEntry]) -> None:
    if not table:
        raise ValueError("CQI table is empty")
    for a, b in zip(table, table[1:]):
        if not (a.index < b.index and a.efficiency < b.efficiency
                and a.snr_threshold_db < b.snr_threshold_db):
            raise ValueError(f"CQI table not strictly increasing at index {b.index}")


def entry(cqi: int, table: Sequence[CqiEntry] = CQI_TABLE) -> CqiEntry:
    for e in table:
        if e.index == cqi:
            return e
    raise KeyError(f"no CQI entry with index {cqi}")


def real_cqi(effective_snr: float, table: Sequence[CqiEntry] = CQI_TABLE) -> int:
    """Largest CQI whose threshold is met by ``effective_snr`` (linear); 0 if none.

    The threshold comparison is inclusive.
    """
    best = 0
    for e in table:
        if effective_snr >= threshold_linear(e):
            best = e.index
    return best


def threshold_linear(e: CqiEntry) -> float:
    return 10.0 ** (e.snr_threshold_db / 10.0)
