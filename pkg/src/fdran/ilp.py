"""Integer program for light-load energy minimization.

One binary ``delta`` (coop set used by the user) and one integer ``o``
(subcarriers the user gets on that set) per (coop set, user).  Columns are
ordered coop set by coop set (ascending size, then bitmask) and, inside a
set, user by user with ``delta`` at index ``2j`` and ``o`` at ``2j + 1``.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import IncompleteRateMap
from .lp import EQ, GE, LE, LpProblem

RATE_TOL = 1e-9


@dataclass(frozen=True)
class CoopSet:
    mask: int

    @property
    def members(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.mask.bit_length()) if self.mask >> i & 1)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    def __contains__(self, bs: int) -> bool:
        return bool(self.mask >> bs & 1)

    def issubset(self, other: "CoopSet") -> bool:
        return self.mask & other.mask == self.mask


def enumerate_coop_sets(M: int) -> List[CoopSet]:
    """All non-empty subsets of ``M`` base stations, by size then bitmask."""
    if M < 1:
        raise ValueError("need at least one base station")
    sets = [CoopSet(mask) for mask in range(1, 1 << M)]
    return sorted(sets, key=lambda s: (s.size, s.mask))


@dataclass(frozen=True)
class LightUser:
    """A light-load user: demand in bit/s and per-set rate per subcarrier."""

    user_id: int
    demand_rate: float
    rates: Mapping[int, float]
    weight: float = 1.0

    def rate(self, mask: int) -> float:
        return self.rates[mask]

    def required(self, mask: int) -> int:
        """Subcarriers needed on ``mask`` alone; a large sentinel if the rate is 0."""
        r = int_rate(self.rates[mask])
        if r <= 0:
            return 0 if self.demand_rate <= 0 else np.iinfo(np.int64).max
        return -(-int_demand(self.demand_rate) // r)


def int_rate(rate: float) -> int:
    return int(math.floor(rate + RATE_TOL * max(1.0, abs(rate))))


def int_demand(rate: float) -> int:
    return int(math.ceil(rate - RATE_TOL * max(1.0, abs(rate))))


@dataclass(frozen=True)
class Row:
    tag: str
    indices: Tuple[int, ...]
    coefs: Tuple[float, ...]
    sense: str
    rhs: float


@dataclass
class IlpModel:
    users: List[LightUser]
    coop_sets: List[CoopSet]
    K: int
    p: float
    lam: float
    rows: List[Row]
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    allowed: Tuple[int, ...]
    _index: Dict[Tuple[str, int, int], int] = field(default_factory=dict, repr=False)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def lam_eff(self) -> int:
        return int(min(self.lam, self.K))

    def index(self, kind: str, user_id: int, mask: int) -> int:
        return self._index[(kind, user_id, mask)]

    def var_name(self, j: int) -> str:
        set_pos, rem = divmod(j, 2 * len(self.users))
        user, which = divmod(rem, 2)
        kind = "delta" if which == 0 else "o"
        return f"{kind}[u{self.users[user].user_id},B{self.coop_sets[set_pos].mask}]"

    def integer_mask(self) -> np.ndarray:
        return np.ones(self.n_vars, dtype=bool)

    def delta_mask(self) -> np.ndarray:
        m = np.zeros(self.n_vars, dtype=bool)
        m[0::2] = True
        return m

    def to_lp(self) -> LpProblem:
        return LpProblem.from_rows(self.c, [(r.indices, r.coefs, r.sense, r.rhs) for r in self.rows],
                                   self.lb, self.ub)

    def rows_by_family(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for r in self.rows:
            fam = r.tag.split("[")[0]
            out[fam] = out.get(fam, 0) + 1
        return out

    def dump(self) -> str:
        """Text form: a header, one line per variable, one line per row."""
        lines = [f"vars {self.n_vars} rows {len(self.rows)} K {self.K} p {self.p!r} lambda {self.lam!r}"]
        for j in range(self.n_vars):
            lines.append(f"var {j} {self.var_name(j)} cost {self.c[j]!r} bounds [{self.lb[j]:g},{self.ub[j]:g}]")
        for r in self.rows:
            terms = " ".join(f"{c:+g}*x{i}" for i, c in zip(r.indices, r.coefs))
            lines.append(f"row {r.tag}: {terms} {r.sense} {r.rhs:g}")
        return "\n".join(lines) + "\n"


def build_ilp(users: Sequence[LightUser], K: int, p: float = 1.0, lam: float = 1000.0,
              M: Optional[int] = None, allowed: Optional[Iterable[int]] = None) -> IlpModel:
    """Assemble the model.  ``allowed`` restricts usable coop sets (bitmasks);
    disallowed sets keep their columns but are fixed to zero."""
    if lam < K:
        raise ValueError(f"lambda ({lam}) must be at least K ({K}) for the linking rows to be exact")
    users = sorted(users, key=lambda u: u.user_id)
    if M is None:
        M = max((max(u.rates).bit_length() for u in users if u.rates), default=1)
    sets = enumerate_coop_sets(M)
    allowed_set = tuple(sorted(set(allowed))) if allowed is not None else tuple(s.mask for s in sets)
    for u in users:
        missing = [s.mask for s in sets if s.mask in allowed_set and s.mask not in u.rates]
        if missing:
            raise IncompleteRateMap(f"user {u.user_id} lacks rates for coop sets {missing}")
    N = len(users)
    nv = 2 * len(sets) * N
    c = np.zeros(nv)
    lb = np.zeros(nv)
    ub = np.zeros(nv)
    index: Dict[Tuple[str, int, int], int] = {}
    lam_eff = int(min(lam, K))
    for si, s in enumerate(sets):
        for ui, u in enumerate(users):
            d = 2 * (si * N + ui)
            index[("delta", u.user_id, s.mask)] = d
            index[("o", u.user_id, s.mask)] = d + 1
            c[d + 1] = p * s.size
            if s.mask in allowed_set:
                ub[d] = 1
                ub[d + 1] = lam_eff
    rows: List[Row] = []
    o_cols = [2 * j + 1 for j in range(len(sets) * N)]
    rows.append(Row("capacity", tuple(o_cols), (1.0,) * len(o_cols), LE, float(K)))
    for u in users:
        for s in sets:
            rows.append(Row(f"link[u{u.user_id},B{s.mask}]",
                            (index[("o", u.user_id, s.mask)], index[("delta", u.user_id, s.mask)]),
                            (1.0, -float(lam_eff)), LE, 0.0))
    for u in users:
        for s in sets:
            for t in sets:
                if t.size < s.size and not t.issubset(s):
                    rows.append(Row(f"compat[u{u.user_id},B{s.mask},B{t.mask}]",
                                    (index[("delta", u.user_id, s.mask)], index[("delta", u.user_id, t.mask)]),
                                    (1.0, 1.0), LE, 1.0))
    for u in users:
        for size in range(1, M + 1):
            idx = [index[("delta", u.user_id, s.mask)] for s in sets if s.size == size]
            rows.append(Row(f"one-per-size[u{u.user_id},q={size}]", tuple(idx),
                            (1.0,) * len(idx), LE, 1.0))
    for u in users:
        idx, coefs = [], []
        for s in sets:
            if s.mask in allowed_set:
                idx.append(index[("o", u.user_id, s.mask)])
                coefs.append(float(int_rate(u.rates[s.mask])))
        rows.append(Row(f"demand[u{u.user_id}]", tuple(idx), tuple(coefs), GE,
                        float(int_demand(u.demand_rate))))
    return IlpModel(list(users), sets, K, p, lam, rows, c, lb, ub, allowed_set, index)


def expected_row_counts(M: int, N: int) -> Dict[str, int]:
    """Closed-form row counts per family, for cross-checking the builder."""
    compat = 0
    for a in range(1, M + 1):
        for b in range(1, a):
            # sets of size b that are not inside a given size-a set
            compat += math.comb(M, a) * (math.comb(M, b) - math.comb(a, b))
    out = {"capacity": 1, "link": N * (2 ** M - 1), "compat": N * compat,
           "one-per-size": N * M, "demand": N}
    return {k: v for k, v in out.items() if v}


@dataclass
class Verdict:
    feasible: bool
    violated: List[str]


def check_assignment(model: IlpModel, x: Sequence[float], tol: float = 1e-9) -> Verdict:
    """Check integrality, bounds and every row; report violated row tags."""
    x = np.asarray(x, dtype=float)
    bad: List[str] = []
    if x.size != model.n_vars:
        return Verdict(False, [f"size {x.size} != {model.n_vars}"])
    if np.any(np.abs(x - np.round(x)) > tol):
        bad.append("integrality")
    for j in np.flatnonzero((x < model.lb - tol) | (x > model.ub + tol)):
        bad.append(f"bounds[{model.var_name(int(j))}]")
    for r in model.rows:
        act = sum(c * x[i] for i, c in zip(r.indices, r.coefs))
        if (r.sense == LE and act > r.rhs + tol) or (r.sense == GE and act < r.rhs - tol) \
                or (r.sense == EQ and abs(act - r.rhs) > tol):
            bad.append(r.tag)
    return Verdict(not bad, bad)


def energy(model: IlpModel, x: Sequence[float]) -> float:
    return float(model.c @ np.asarray(x, dtype=float))


def assignment_from_counts(model: IlpModel, counts: Mapping[int, Mapping[int, int]]) -> np.ndarray:
    """``counts[user_id][mask] = subcarriers`` to a column vector."""
    x = np.zeros(model.n_vars)
    for uid, per in counts.items():
        for mask, k in per.items():
            if k > 0:
                x[model.index("o", uid, mask)] = k
                x[model.index("delta", uid, mask)] = 1
    return x


def counts_from_assignment(model: IlpModel, x: Sequence[float]) -> Dict[int, Dict[int, int]]:
    x = np.asarray(x)
    out: Dict[int, Dict[int, int]] = {}
    for u in model.users:
        per = {}
        for s in model.coop_sets:
            k = int(round(x[model.index("o", u.user_id, s.mask)]))
            if k > 0:
                per[s.mask] = k
        out[u.user_id] = per
    return out


def per_bs_load(model: IlpModel, x: Sequence[float]) -> List[int]:
    x = np.asarray(x)
    M = max(s.mask for s in model.coop_sets).bit_length()
    load = [0] * M
    for u in model.users:
        for s in model.coop_sets:
            k = int(round(x[model.index("o", u.user_id, s.mask)]))
            for q in s.members:
                load[q] += k
    return load


def full_cooperation_assignment(model: IlpModel) -> Optional[np.ndarray]:
    """Every user on the largest allowed set with the fewest subcarriers it needs."""
    best = max((s for s in model.coop_sets if s.mask in model.allowed), key=lambda s: (s.size, s.mask))
    x = np.zeros(model.n_vars)
    for u in model.users:
        need = u.required(best.mask)
        if need > model.lam_eff:
            return None
        if need > 0:
            x[model.index("o", u.user_id, best.mask)] = need
            x[model.index("delta", u.user_id, best.mask)] = 1
    return x if check_assignment(model, x).feasible else None


def strengthening_rows(model: IlpModel) -> List[Row]:
    """``o <= min(lambda, ceil(demand / rate)) * delta`` per column pair.

    Not implied by the model: an optimal solution never gives a user more
    subcarriers on one set than that set alone needs, so the rows keep at
    least one optimum while cutting off wasteful points.
    """
    rows = []
    for u in model.users:
        for s in model.coop_sets:
            if s.mask not in model.allowed:
                continue
            cap = min(u.required(s.mask), model.lam_eff)
            if cap < model.lam_eff:
                rows.append(Row(f"tighten[u{u.user_id},B{s.mask}]",
                                (model.index("o", u.user_id, s.mask), model.index("delta", u.user_id, s.mask)),
                                (1.0, -float(cap)), LE, 0.0))
    return rows
