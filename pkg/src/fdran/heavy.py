"""Heavy-load scheduling: every user is served by JT of all BSs and subcarriers
are handed out greedily by marginal weighted demand satisfaction."""

from dataclasses import dataclass
import heapq
import math
from typing import Dict, List, Sequence, Tuple

from .errors import FairnessInfeasible


def ceil_ratio(num: float, den: float, rel_tol: float = 1e-9) -> int:
    """ceil(num / den) that ignores floating noise around exact integers."""
    q = num / den
    r = round(q)
    if abs(q - r) <= rel_tol * max(1.0, abs(q)):
        return int(r)
    return math.ceil(q)


@dataclass(frozen=True)
class UserDemand:
    user_id: int
    weight: float
    demand_rate: float
    rate_per_subcarrier: float

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError(f"user {self.user_id}: weight must be positive")
        if self.demand_rate <= 0:
            raise ValueError(f"user {self.user_id}: demand must be positive")
        if self.rate_per_subcarrier <= 0:
            raise ValueError(f"user {self.user_id}: rate per subcarrier must be positive")

    @property
    def required_subcarriers(self) -> int:
        return ceil_ratio(self.demand_rate, self.rate_per_subcarrier)

    def satisfaction(self, count: int) -> float:
        return min(count * self.rate_per_subcarrier / self.demand_rate, 1.0)


@dataclass(frozen=True)
class GreedySegment:
    user_id: int
    weight_per_unit: float
    units: int


@dataclass
class HeavyAllocation:
    counts: Dict[int, int]
    value: float
    eta: Dict[int, float]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def greedy_weight(u: UserDemand) -> Tuple[float, float]:
    """(weight of each of the first K^d - 1 units, weight of the last unit)."""
    ratio = u.rate_per_subcarrier / u.demand_rate
    head = u.weight * ratio
    tail = u.weight * (1.0 - (u.required_subcarriers - 1) * ratio)
    return head, tail


def fairness_preallocate(users: Sequence[UserDemand], eta_min: float, subcarriers: int) -> Dict[int, int]:
    """Mandatory subcarriers per user so that every eta reaches eta_min."""
    if not 0 <= eta_min <= 1:
        raise ValueError("eta_min must lie in [0, 1]")
    k0 = {}
    for u in users:
        need = ceil_ratio(eta_min * u.demand_rate, u.rate_per_subcarrier) if eta_min > 0 else 0
        k0[u.user_id] = min(u.required_subcarriers, need)
    total = sum(k0.values())
    if total > subcarriers:
        raise FairnessInfeasible(total, subcarriers)
    return k0


def segments(u: UserDemand, mandatory: int) -> List[GreedySegment]:
    """Remaining units of one user after the mandatory ones, as weighted segments."""
    kd = u.required_subcarriers
    head, tail = greedy_weight(u)
    out = []
    n_head = max(0, kd - 1 - mandatory)
    if n_head:
        out.append(GreedySegment(u.user_id, head, n_head))
    if mandatory < kd:
        out.append(GreedySegment(u.user_id, tail, 1))
    return out


def greedy_schedule(users: Sequence[UserDemand], subcarriers: int, eta_min: float = 0.0) -> HeavyAllocation:
    """Optimal weighted-satisfaction allocation under JT of all BSs.

    Raises FairnessInfeasible when the eta_min floor alone exceeds the budget.
    """
    if len({u.user_id for u in users}) != len(users):
        raise ValueError("duplicate user ids")
    k0 = fairness_preallocate(users, eta_min, subcarriers)
    counts = dict(k0)
    remaining = subcarriers - sum(k0.values())
    heap = []
    for u in users:
        for order, seg in enumerate(segments(u, k0[u.user_id])):
            heapq.heappush(heap, (-seg.weight_per_unit, seg.user_id, order, seg.units))
    while heap and remaining > 0:
        _, uid, _, units = heapq.heappop(heap)
        take = min(units, remaining)
        counts[uid] += take
        remaining -= take
    return _evaluate(users, counts)


def _evaluate(users: Sequence[UserDemand], counts: Dict[int, int]) -> HeavyAllocation:
    eta = {u.user_id: u.satisfaction(counts[u.user_id]) for u in users}
    value = sum(u.weight * eta[u.user_id] for u in users)
    return HeavyAllocation(counts, value, eta)


def weighted_satisfaction(users: Sequence[UserDemand], counts: Dict[int, int]) -> float:
    return _evaluate(users, counts).value
