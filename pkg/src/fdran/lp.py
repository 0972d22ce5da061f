"""Bounded-variable revised simplex.

Every row ``a.x (<=|>=|=) b`` gets an activity variable ``r = a.x`` carrying
the row bounds, so the working system is ``[A  -I] (x, r) = 0`` with bounds on
every column.  Phase 1 minimizes the sum of bound violations of the basic
variables from any starting basis, which makes warm starts after bound changes
or added rows straightforward.  Rows are scaled to unit max-norm internally.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BadBounds, DimensionMismatch

BASIC, AT_LB, AT_UB = 0, 1, 2
LE, GE, EQ = "<=", ">=", "="


@dataclass
class LpProblem:
    """minimize (or maximize) c.x subject to rows and finite variable bounds."""

    c: np.ndarray
    A: np.ndarray
    senses: Sequence[str]
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    maximize: bool = False

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        self.lb = np.asarray(self.lb, dtype=float).reshape(-1)
        self.ub = np.asarray(self.ub, dtype=float).reshape(-1)
        self.senses = list(self.senses)
        if self.A.shape[0] != self.rhs.size or len(self.senses) != self.rhs.size:
            raise DimensionMismatch("rows, senses and rhs disagree in length")
        if self.lb.size != n or self.ub.size != n:
            raise DimensionMismatch("bounds must match the number of variables")
        bad = set(self.senses) - {LE, GE, EQ}
        if bad:
            raise ValueError(f"unknown row senses {bad}")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.rhs.size

    @classmethod
    def from_rows(cls, c, rows, lb, ub, maximize=False) -> "LpProblem":
        """Build from ``rows`` = [(indices, coefficients, sense, rhs), ...]."""
        n = len(c)
        A = np.zeros((len(rows), n))
        for i, (idx, coef, _, _) in enumerate(rows):
            np.add.at(A[i], np.asarray(idx, dtype=int), np.asarray(coef, dtype=float))
        return cls(c, A, [r[2] for r in rows], [r[3] for r in rows], lb, ub, maximize)

    def add_rows(self, A_new, senses, rhs) -> "LpProblem":
        A_new = np.asarray(A_new, dtype=float).reshape(-1, self.n)
        return LpProblem(self.c, np.vstack([self.A, A_new]), self.senses + list(senses),
                         np.concatenate([self.rhs, np.asarray(rhs, float).reshape(-1)]),
                         self.lb, self.ub, self.maximize)

    def with_bounds(self, lb, ub) -> "LpProblem":
        return LpProblem(self.c, self.A, self.senses, self.rhs, lb, ub, self.maximize)

    def row_activity_bounds(self):
        lo = np.where(np.isin(self.senses, [GE, EQ]), self.rhs, -np.inf)
        hi = np.where(np.isin(self.senses, [LE, EQ]), self.rhs, np.inf)
        return lo, hi

    def dump(self) -> str:
        lines = []
        for i in range(self.m):
            nz = np.flatnonzero(self.A[i])
            terms = " ".join(f"{j}:{self.A[i, j]:.17g}" for j in nz)
            lines.append(f"{self.senses[i]} {self.rhs[i]:.17g} {terms}")
        return "\n".join(lines)


@dataclass
class Basis:
    basic: np.ndarray   # column indices in the extended (x, r) space
    status: np.ndarray  # BASIC / AT_LB / AT_UB per extended column

    def copy(self) -> "Basis":
        return Basis(self.basic.copy(), self.status.copy())


@dataclass
class LpSolution:
    status: str
    x: Optional[np.ndarray]
    objective: Optional[float]
    basis: Optional[Basis]
    duals: Optional[np.ndarray] = None
    iterations: int = 0
    certificate: str = ""
    state: Optional["SimplexState"] = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class SimplexState:
    """Final factorization, kept for tableau access (cut generation)."""

    A: np.ndarray        # scaled [A  -I]
    scale: np.ndarray    # row scale factors
    lo: np.ndarray
    hi: np.ndarray
    basic: np.ndarray
    status: np.ndarray
    binv: np.ndarray
    x: np.ndarray        # extended point (scaled row activities)
    n: int

    def tableau_row(self, pos: int) -> np.ndarray:
        """Row ``pos`` of B^-1 [A -I] over all extended columns."""
        return self.binv[pos] @ self.A


class Simplex:
    def __init__(self, problem: LpProblem, feas_tol=1e-7, opt_tol=1e-9, pivot_tol=1e-9,
                 refactor_every=50, bland_after=1000, max_iter=None):
        self.p = problem
        self.feas_tol, self.opt_tol, self.pivot_tol = feas_tol, opt_tol, pivot_tol
        self.refactor_every, self.bland_after = refactor_every, bland_after
        if np.any(problem.lb > problem.ub):
            j = int(np.argmax(problem.lb > problem.ub))
            raise BadBounds(f"variable {j}: lower bound {problem.lb[j]} > upper bound {problem.ub[j]}")
        if not (np.all(np.isfinite(problem.lb)) and np.all(np.isfinite(problem.ub))):
            raise BadBounds("every variable needs finite bounds")
        n, m = problem.n, problem.m
        amax = np.abs(problem.A).max(axis=1) if m else np.zeros(0)
        self.scale = np.where(amax > 0, 1.0 / np.where(amax > 0, amax, 1.0), 1.0)
        self.A = np.hstack([problem.A * self.scale[:, None], -np.eye(m)])
        rlo, rhi = problem.row_activity_bounds()
        self.lo = np.concatenate([problem.lb, rlo * self.scale])
        self.hi = np.concatenate([problem.ub, rhi * self.scale])
        sign = -1.0 if problem.maximize else 1.0
        self.cost = np.concatenate([sign * problem.c, np.zeros(m)])
        self.max_iter = max_iter or 100 * (n + m) + 1000

    # -- basis handling -------------------------------------------------------
    def _slack_basis(self) -> Basis:
        n, m = self.p.n, self.p.m
        status = np.full(n + m, AT_LB, dtype=np.int8)
        status[n:] = BASIC
        return Basis(np.arange(n, n + m), status)

    def _adapt(self, warm: Optional[Basis]) -> Basis:
        n, m = self.p.n, self.p.m
        if warm is None:
            return self._slack_basis()
        status = np.full(n + m, AT_LB, dtype=np.int8)
        old_n_ext = warm.status.size
        old_m = old_n_ext - n
        if old_m < 0 or old_m > m:
            return self._slack_basis()
        status[:old_n_ext] = warm.status
        status[old_n_ext:] = BASIC
        basic = np.concatenate([warm.basic, np.arange(n + old_m, n + m)]).astype(int)
        if basic.size != m:
            return self._slack_basis()
        nb = status != BASIC
        status[nb & (status == AT_LB) & ~np.isfinite(self.lo)] = AT_UB
        status[nb & (status == AT_UB) & ~np.isfinite(self.hi)] = AT_LB
        return Basis(basic, status)

    def _invert(self, basic):
        """B^-1 for the basis columns ``basic``.

        Basic activity columns are -e_i, so only the block of structural
        columns against the rows whose activity is nonbasic needs inverting:
        with rows R (activity nonbasic), S (activity basic) and structural
        basics J, B^-1 = [[A_RJ^-1, 0], [A_SJ A_RJ^-1, -I]].
        """
        m, n = self.p.m, self.p.n
        if m == 0:
            return np.zeros((0, 0))
        basic = np.asarray(basic)
        is_row = basic >= n
        S = basic[is_row] - n
        J = basic[~is_row]
        in_S = np.zeros(m, dtype=bool)
        in_S[S] = True
        R = np.flatnonzero(~in_S)
        if R.size != J.size:
            return None
        binv = np.zeros((m, m))
        if J.size:
            core = self.A[np.ix_(R, J)]
            try:
                core_inv = np.linalg.inv(core)
            except np.linalg.LinAlgError:
                return None
            if not np.all(np.isfinite(core_inv)) or np.abs(core_inv).max() > 1e12:
                return None
            pos_J = np.flatnonzero(~is_row)
            binv[np.ix_(pos_J, R)] = core_inv
            pos_S = np.flatnonzero(is_row)
            binv[np.ix_(pos_S, R)] = self.A[np.ix_(S, J)] @ core_inv
        pos_S = np.flatnonzero(is_row)
        binv[pos_S, S] = -1.0
        return binv

    def _fail(self, it):
        raise RuntimeError(f"basis became singular after {it} iterations")

    # -- main loop -------------------------------------------------------------
    def solve(self, warm: Optional[Basis] = None) -> LpSolution:
        basis = self._adapt(warm)
        binv = self._invert(basis.basic)
        if binv is None:
            basis = self._slack_basis()
            binv = self._invert(basis.basic)
        basic, status = basis.basic.copy(), basis.status.copy()
        A, lo, hi = self.A, self.lo, self.hi
        N = A.shape[1]
        m = self.p.m
        ftol, otol, ptol = self.feas_tol, self.opt_tol, self.pivot_tol
        x = np.zeros(N)

        def place_nonbasic():
            x[status == AT_LB] = lo[status == AT_LB]
            x[status == AT_UB] = hi[status == AT_UB]

        def recompute_basic():
            nb = status != BASIC
            x[basic] = -binv @ (A[:, nb] @ x[nb])

        place_nonbasic()
        recompute_basic()
        since_refactor = 0
        degenerate = 0
        it = 0
        y = np.zeros(m)
        while True:
            it += 1
            if it > self.max_iter:
                raise RuntimeError("simplex iteration limit reached")
            if since_refactor >= self.refactor_every:
                fresh = self._invert(basic)
                if fresh is None:
                    # numerical breakdown: restart from the slack basis
                    return self.solve(None) if warm is not None else self._fail(it)
                binv = fresh
                recompute_basic()
                since_refactor = 0
            xb = x[basic]
            lob, hib = lo[basic], hi[basic]
            below = xb < lob - ftol
            above = xb > hib + ftol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cb = np.where(below, -1.0, np.where(above, 1.0, 0.0))
                y = cb @ binv
                d = -(y @ A)
            else:
                y = self.cost[basic] @ binv
                d = self.cost - y @ A
            d[basic] = 0.0
            movable = hi > lo
            inc = (status == AT_LB) & (d < -otol) & movable
            dec = (status == AT_UB) & (d > otol) & movable
            elig = inc | dec
            if not elig.any():
                break
            bland = degenerate >= self.bland_after
            if bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                q = int(np.argmax(np.where(elig, np.abs(d), -1.0)))
            direction = 1.0 if inc[q] else -1.0
            alpha = binv @ A[:, q]
            delta = -direction * alpha
            theta_flip = hi[q] - lo[q]
            lim = np.full(m, np.inf)
            target = np.zeros(m, dtype=np.int8)
            up = delta > ptol
            dn = delta < -ptol
            # increasing basics
            c1 = up & below
            lim[c1] = (lob[c1] - xb[c1]) / delta[c1]
            target[c1] = AT_LB
            c2 = up & ~below & ~above
            lim[c2] = (hib[c2] - xb[c2]) / delta[c2]
            target[c2] = AT_UB
            # decreasing basics
            c3 = dn & above
            lim[c3] = (xb[c3] - hib[c3]) / -delta[c3]
            target[c3] = AT_UB
            c4 = dn & ~below & ~above
            lim[c4] = (xb[c4] - lob[c4]) / -delta[c4]
            target[c4] = AT_LB
            lim = np.maximum(lim, 0.0)
            theta = lim.min() if m else np.inf
            if theta_flip <= theta:
                if not np.isfinite(theta_flip):
                    raise RuntimeError("LP is unbounded")
                step = theta_flip
                x[q] = hi[q] if direction > 0 else lo[q]
                x[basic] = xb + delta * step
                status[q] = AT_UB if direction > 0 else AT_LB
            else:
                if not np.isfinite(theta):
                    raise RuntimeError("LP is unbounded")
                ties = np.flatnonzero(lim <= theta + 1e-12)
                if bland:
                    p = int(ties[np.argmin(basic[ties])])
                else:
                    p = int(ties[np.argmax(np.abs(delta[ties]))])
                step = lim[p]
                leaving = basic[p]
                x[basic] = xb + delta * step
                x[q] = x[q] + direction * step
                status[leaving] = target[p]
                x[leaving] = lo[leaving] if target[p] == AT_LB else hi[leaving]
                basic[p] = q
                status[q] = BASIC
                piv = binv[p] / alpha[p]
                binv -= np.outer(alpha, piv)
                binv[p] = piv
                since_refactor += 1
            degenerate = degenerate + 1 if step < 1e-12 else 0

        state = SimplexState(A, self.scale, lo, hi, basic, status, binv, x.copy(), self.p.n)
        if phase1:
            infeas = float(np.sum(np.maximum(lo[basic] - x[basic], 0) + np.maximum(x[basic] - hi[basic], 0)))
            rows = np.flatnonzero(np.abs(y) > 1e-9)
            cert = (f"phase-1 optimum leaves total bound violation {infeas:.3e}; "
                    f"combining rows {rows.tolist()} with multipliers {np.round(y[rows], 6).tolist()} "
                    f"proves the system inconsistent")
            return LpSolution("infeasible", None, None, Basis(basic, status), None, it, cert, state)
        xs = x[:self.p.n].copy()
        # snap to bounds hit within tolerance
        xs = np.minimum(np.maximum(xs, self.p.lb), self.p.ub)
        obj = float(self.p.c @ xs)
        duals = y * self.scale * (-1.0 if self.p.maximize else 1.0)
        duals[np.abs(duals) < 1e-11 * max(1.0, np.abs(duals).max(initial=0.0))] = 0.0
        return LpSolution("optimal", xs, obj, Basis(basic, status), duals, it, "", state)


def solve_lp(problem: LpProblem, **tol) -> LpSolution:
    return Simplex(problem, **tol).solve()


def reoptimize(problem: LpProblem, warm_start: Basis, **tol) -> LpSolution:
    """Solve a modified problem starting from the basis of the unmodified one.

    Added rows (appended at the end) enter with their activity variables basic.
    """
    return Simplex(problem, **tol).solve(warm_start)


def dual_bound(problem: LpProblem, duals: np.ndarray) -> float:
    """Lagrangian lower bound (minimization) implied by row multipliers ``duals``."""
    reduced = problem.c - problem.A.T @ duals
    bound = np.sum(np.minimum(reduced * problem.lb, reduced * problem.ub))
    lo, hi = problem.row_activity_bounds()
    for yi, l, h in zip(duals, lo, hi):
        if yi > 0:
            bound += yi * l if np.isfinite(l) else -np.inf
        elif yi < 0:
            bound += yi * h if np.isfinite(h) else -np.inf
    return float(bound)
