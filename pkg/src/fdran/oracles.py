"""Brute-force reference solvers for small instances."""

from itertools import product
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .heavy import UserDemand
from .ilp import LightUser


def compositions(total: int, parts: int, floors: Sequence[int] = None):
    """All tuples of ``parts`` non-negative ints summing to at most ``total``."""
    floors = floors or [0] * parts

    def rec(i, left):
        if i == parts:
            yield ()
            return
        for v in range(floors[i], left + 1):
            for rest in rec(i + 1, left - v):
                yield (v,) + rest
    if sum(floors) > total:
        return
    yield from rec(0, total)


def heavy_bruteforce(users: Sequence[UserDemand], K: int, eta_min: float = 0.0) -> Optional[float]:
    """Best weighted satisfaction over every split of K (None if the floor is unreachable)."""
    best = None
    for counts in compositions(K, len(users)):
        etas = [min(1.0, c * u.rate_per_subcarrier / u.demand_rate) for c, u in zip(counts, users)]
        if any(e < min(eta_min, 1.0) - 1e-12 for e in etas):
            continue
        v = sum(u.weight * e for u, e in zip(users, etas))
        if best is None or v > best:
            best = v
    return best


def chains(M: int, allowed: Optional[Iterable[int]] = None) -> List[Tuple[int, ...]]:
    """Strictly nested chains of non-empty BS subsets (as bitmasks), incl. the empty chain."""
    masks = [m for m in range(1, 1 << M) if allowed is None or m in set(allowed)]
    pop = lambda m: bin(m).count("1")
    out = [()]

    def grow(chain):
        for m in masks:
            last = chain[-1]
            if pop(m) > pop(last) and m & last == last:
                out.append(chain + (m,))
                grow(chain + (m,))
    for m in masks:
        out.append((m,))
        grow((m,))
    return out


def user_options(user: LightUser, M: int, K: int, allowed=None) -> Dict[int, float]:
    """Cheapest energy (in units of p) per total subcarrier count for one user."""
    best: Dict[int, float] = {}
    for chain in chains(M, allowed):
        if not chain:
            if user.demand_rate <= 0:
                best[0] = 0.0
            continue
        for counts in product(range(1, K + 1), repeat=len(chain)):
            t = sum(counts)
            if t > K:
                continue
            served = sum(c * user.rates[m] for c, m in zip(counts, chain))
            if served < user.demand_rate:
                continue
            e = sum(c * bin(m).count("1") for c, m in zip(counts, chain))
            if e < best.get(t, float("inf")):
                best[t] = e
    return best


def light_bruteforce(users: Sequence[LightUser], M: int, K: int, p: float = 1.0,
                     allowed=None) -> Optional[float]:
    """Minimum energy over all chain-respecting allocations (None if infeasible)."""
    table = {0: 0.0}
    for u in users:
        opts = user_options(u, M, K, allowed)
        nxt: Dict[int, float] = {}
        for t0, e0 in table.items():
            for t1, e1 in opts.items():
                t = t0 + t1
                if t <= K and e0 + e1 < nxt.get(t, float("inf")):
                    nxt[t] = e0 + e1
        table = nxt
        if not table:
            return None
    return p * min(table.values())


def best_single_bs(users: Sequence[LightUser], M: int, K: int, p: float = 1.0) -> Optional[float]:
    """Minimum energy when every user is served by one BS alone (any BS per user)."""
    singles = [1 << q for q in range(M)]
    return light_bruteforce(users, M, K, p, allowed=singles)


def full_cooperation_energy(users: Sequence[LightUser], M: int, K: int, p: float = 1.0) -> Optional[float]:
    full = (1 << M) - 1
    total = 0
    for u in users:
        if u.demand_rate <= 0:
            continue
        r = u.rates[full]
        if r <= 0:
            return None
        total += -(-int(u.demand_rate) // int(r))
    return p * M * total if total <= K else None


def _chain_options(user: LightUser, chain: Sequence[int], K: int) -> Dict[int, float]:
    """Cheapest energy per total count for one chain; the last set's count is the
    smallest that completes the demand (any larger count is dominated)."""
    out: Dict[int, float] = {}
    rates = [user.rates[m] for m in chain]
    sizes = [bin(m).count("1") for m in chain]
    head = len(chain) - 1
    for counts in product(range(1, K + 1), repeat=head):
        t = sum(counts)
        if t >= K:
            continue
        served = sum(c * r for c, r in zip(counts, rates))
        rest = user.demand_rate - served
        if rates[-1] <= 0:
            continue
        last = max(1, -(-int(rest) // int(rates[-1]))) if rest > 0 else 1
        if t + last > K:
            continue
        e = sum(c * s for c, s in zip(counts, sizes)) + last * sizes[-1]
        tt = t + last
        if e < out.get(tt, float("inf")):
            out[tt] = e
    return out


def light_dp(users: Sequence[LightUser], M: int, K: int, p: float = 1.0, allowed=None) -> Optional[float]:
    """Same optimum as light_bruteforce for integer rates and demands, in
    O(K^(chain length - 1)) per chain instead of O(K^chain length)."""
    table = {0: 0.0}
    for u in users:
        if u.demand_rate <= 0:
            continue
        opts: Dict[int, float] = {}
        for chain in chains(M, allowed):
            if not chain:
                continue
            for t, e in _chain_options(u, chain, K).items():
                if e < opts.get(t, float("inf")):
                    opts[t] = e
        nxt: Dict[int, float] = {}
        for t0, e0 in table.items():
            for t1, e1 in opts.items():
                t = t0 + t1
                if t <= K and e0 + e1 < nxt.get(t, float("inf")):
                    nxt[t] = e0 + e1
        table = nxt
        if not table:
            return None
    return p * min(table.values())
