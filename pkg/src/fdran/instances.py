"""Seeded random scheduling instances (integer rates keep oracles exact)."""

from typing import List

import numpy as np

from .heavy import UserDemand
from .ilp import LightUser


def random_heavy(rng: np.random.Generator, n_max: int = 4, k_max: int = 12) -> tuple:
    n = int(rng.integers(1, n_max + 1))
    K = int(rng.integers(1, k_max + 1))
    w = rng.uniform(0.1, 1.0, n)
    w = w / w.sum()
    users = []
    for i in range(n):
        rate = float(rng.integers(1, 11) * 1e4)
        demand = float(rng.integers(1, 8) * rate * rng.choice([1.0, 0.5, 0.7]))
        users.append(UserDemand(i, float(w[i]), demand, rate))
    return users, K


def random_light(rng: np.random.Generator, M: int, n_max: int = 3, k_max: int = 8) -> tuple:
    """A light-load instance: full cooperation fits into K subcarriers."""
    while True:
        n = int(rng.integers(1, n_max + 1))
        K = int(rng.integers(2, k_max + 1))
        users: List[LightUser] = []
        for i in range(n):
            single = rng.integers(1, 9, size=M) * 1000
            rates = {}
            for mask in range(1, 1 << M):
                members = [q for q in range(M) if mask >> q & 1]
                gain = 1.0 + 0.35 * (len(members) - 1) + rng.uniform(0, 0.4) * (len(members) > 1)
                rates[mask] = int(max(single[q] for q in members) * gain) if len(members) > 1 \
                    else int(single[members[0]])
            demand = int(rng.integers(1, 4) * rates[(1 << M) - 1] * rng.uniform(0.4, 1.0))
            users.append(LightUser(i, float(max(demand, 1)), rates))
        full = (1 << M) - 1
        need = sum(-(-int(u.demand_rate) // u.rates[full]) for u in users)
        if need <= K:
            return users, K
