"""Two-stage light-load solver: a feasibility pump finds an incumbent, then
branch-and-cut over LP relaxations proves (or improves to) the optimum."""

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import PumpFailed
from .ilp import (IlpModel, check_assignment, energy, full_cooperation_assignment, int_demand, int_rate,
                  strengthening_rows)
from .lp import AT_LB, AT_UB, BASIC, EQ, GE, Basis, LpProblem, LpSolution, Simplex

INT_TOL = 1e-6
N_FLIP = 15
PUMP_MAX_ITER = 200
PERTURB_EVERY = 3
MAX_CUTS_PER_ROUND = 10
MAX_CUT_ROUNDS = 3
MAX_DYNAMISM = 1e8
MAX_CUT_DEPTH = 100


def is_integral(x: np.ndarray, tol: float = INT_TOL) -> bool:
    return bool(np.all(np.abs(x - np.round(x)) <= tol))


def rounding_distance(x, target, lb, ub) -> float:
    """L1 distance from ``x`` to the integer ``target``, written the way the
    pump LP sees it: linear terms at bound targets, split terms inside."""
    x, t = np.asarray(x, float), np.asarray(target, float)
    lb, ub = np.broadcast_to(lb, x.shape), np.broadcast_to(ub, x.shape)
    at_lb = t <= lb
    at_ub = (t >= ub) & ~at_lb
    inner = ~at_lb & ~at_ub
    return float(np.sum(x[at_lb] - lb[at_lb]) + np.sum(ub[at_ub] - x[at_ub])
                 + np.sum(np.abs(x[inner] - t[inner])))


@dataclass
class PumpState:
    x: np.ndarray
    target: np.ndarray
    iteration: int
    n_flip: int
    distance: float


@dataclass
class PumpResult:
    assignment: np.ndarray
    iterations: int
    distances: List[float]
    flips: int
    restarts: int
    fallback: bool
    # how each iteration's next target was formed: "round", "flip", "restart" or "flip+restart"
    moves: List[str] = field(default_factory=list)


def _distance_lp(base: LpProblem) -> LpProblem:
    """Relaxation plus split columns x_j - plus_j + minus_j = target_j for
    every variable; minimizing sum(plus + minus) gives the L1 distance.  Only
    the right-hand side depends on the target, so bases carry over between
    pump iterations."""
    n, m = base.n, base.m
    c = np.concatenate([np.zeros(n), np.ones(2 * n)])
    A = np.zeros((m + n, 3 * n))
    A[:m, :n] = base.A
    A[m:, :n] = np.eye(n)
    A[m:, n::2][np.arange(n), np.arange(n)] = -1.0
    A[m:, n + 1::2][np.arange(n), np.arange(n)] = 1.0
    span = np.repeat(base.ub - base.lb, 2)
    lb = np.concatenate([base.lb, np.zeros(2 * n)])
    ub = np.concatenate([base.ub, span])
    rhs = np.concatenate([base.rhs, np.zeros(n)])
    return LpProblem(c, A, list(base.senses) + [EQ] * n, rhs, lb, ub)


def _retarget(prob: LpProblem, target: np.ndarray) -> LpProblem:
    n = target.size
    rhs = prob.rhs.copy()
    rhs[-n:] = target
    return LpProblem(prob.c, prob.A, prob.senses, rhs, prob.lb, prob.ub)


def feasibility_pump(model: IlpModel, n_flip: int = N_FLIP, max_iter: int = PUMP_MAX_ITER,
                     seed: int = 0, deadline: Optional[float] = None) -> PumpResult:
    """Alternate LP projection and rounding until the rounding is feasible.

    Falls back to serving every user with the largest allowed coop set when
    the iteration cap (or ``deadline``) is reached.
    """
    if n_flip < 1:
        raise ValueError("n_flip must be at least 1")
    rng = np.random.default_rng(seed)
    base = model.to_lp()
    lb, ub = base.lb, base.ub
    distances: List[float] = []
    moves: List[str] = []
    flips = restarts = 0

    def fallback(iters):
        x = full_cooperation_assignment(model)
        if x is None:
            raise PumpFailed("pump gave up and the full-cooperation allocation is infeasible")
        return PumpResult(x, iters, distances, flips, restarts, True, moves)

    sol = Simplex(base).solve()
    if not sol.optimal:
        return fallback(0)
    x = sol.x
    if is_integral(x):
        xr = np.round(x)
        if check_assignment(model, xr).feasible:
            return PumpResult(xr, 0, distances, 0, 0, False, moves)
    target = np.clip(np.round(x), lb, ub)
    seen = {target.tobytes()}
    dist_lp = _distance_lp(base)
    basis = None
    cycles = 0
    for it in range(1, max_iter + 1):
        if deadline is not None and time.perf_counter() >= deadline:
            return fallback(it - 1)
        if check_assignment(model, target).feasible:
            return PumpResult(target, it - 1, distances, flips, restarts, False, moves)
        sol = Simplex(_retarget(dist_lp, target)).solve(basis)
        if not sol.optimal:
            return fallback(it)
        basis = sol.basis
        x = sol.x[:base.n]
        distances.append(max(0.0, sol.objective))
        if is_integral(x):
            cand = np.round(x)
            if check_assignment(model, cand).feasible:
                return PumpResult(cand, it, distances, flips, restarts, False, moves)
        new = np.clip(np.round(x), lb, ub)
        cycled = bool(np.array_equal(new, target))
        move = "round"
        if cycled:
            cycles += 1
            gap = np.abs(x - target)
            order = np.argsort(-gap, kind="stable")
            for j in (j for j in order[:n_flip] if gap[j] > 0):
                new[j] = target[j] + (1.0 if x[j] > target[j] else -1.0)
            new = np.clip(new, lb, ub)
            flips += 1
            move = "flip"
        if (cycled and cycles % PERTURB_EVERY == 0) or new.tobytes() in seen:
            # random restart: push a random subset of columns across
            r = rng.uniform(-0.3, 0.7, size=new.size)
            push = np.abs(x - new) + np.maximum(r, 0.0) > 0.5
            step = np.where(x > new, 1.0, -1.0)
            new = np.clip(np.where(push, new + step, new), lb, ub)
            restarts += 1
            move = "restart" if move == "round" else "flip+restart"
        moves.append(move)
        seen.add(new.tobytes())
        target = new
    if check_assignment(model, target).feasible:
        return PumpResult(target, max_iter, distances, flips, restarts, False, moves)
    return fallback(max_iter)


# -- cuts ----------------------------------------------------------------------

@dataclass(frozen=True)
class Cut:
    coefs: np.ndarray   # over structural columns
    rhs: float          # coefs . x >= rhs
    origin: str

    def violation(self, x: np.ndarray) -> float:
        return float(self.rhs - self.coefs @ x)


def gomory_cuts(sol: LpSolution, problem: LpProblem, integer: np.ndarray,
                max_cuts: int = MAX_CUTS_PER_ROUND) -> List[Cut]:
    """Gomory mixed-integer cuts read off the optimal tableau.

    Valid for every integer point satisfying ``problem`` (rows and bounds).
    Row activity columns are treated as continuous.
    """
    st = sol.state
    if st is None or sol.x is None:
        return []
    n = st.n
    xb = st.x[st.basic]
    cand = []
    for pos, j in enumerate(st.basic):
        if j < n and integer[j]:
            f0 = xb[pos] - math.floor(xb[pos])
            if 0.01 <= f0 <= 0.99:
                cand.append((-min(f0, 1 - f0), pos, f0))
    cand.sort()
    cuts: List[Cut] = []
    N = st.A.shape[1]
    is_int_ext = np.zeros(N, dtype=bool)
    is_int_ext[:n] = integer
    for _, pos, f0 in cand:
        if len(cuts) >= max_cuts:
            break
        row = st.tableau_row(pos)              # z_i + sum_j row_j z_j = 0 (row_i = 1)
        nb = np.flatnonzero(st.status != BASIC)
        # y_j = z_j - l_j at lower bound, u_j - z_j at upper bound
        abar = np.where(st.status[nb] == AT_LB, row[nb], -row[nb])
        # z_i + sum abar_j y_j = beta
        fj = abar - np.floor(abar)
        ints = is_int_ext[nb] & (np.isin(st.status[nb], (AT_LB, AT_UB)))
        gi = np.where(fj <= f0, fj / f0, (1 - fj) / (1 - f0))
        gc = np.where(abar >= 0, abar / f0, -abar / (1 - f0))
        gv = np.where(ints, gi, gc)
        # sum gv_j y_j >= 1 -> back to z
        coef_ext = np.zeros(N)
        rhs = 1.0
        lbz, ubz = st.lo[nb], st.hi[nb]
        at_lb = st.status[nb] == AT_LB
        coef_ext[nb] = np.where(at_lb, gv, -gv)
        at = np.where(at_lb, lbz, ubz)
        rhs += float(np.sum(np.where(at_lb, gv, -gv) * at))
        # row activity r_k = scale_k * A_k x
        coefs = coef_ext[:n].copy()
        rcoef = coef_ext[n:]
        if np.any(rcoef):
            coefs += (rcoef * st.scale) @ problem.A
        cut = _clean_cut(coefs, rhs, problem.lb, problem.ub)
        if cut is None:
            continue
        cut = Cut(cut[0], cut[1], "gmi")
        scale = max(1.0, np.abs(cut.coefs).max())
        if cut.violation(sol.x) > 1e-6 * scale:
            cuts.append(cut)
    return cuts


def _clean_cut(coefs, rhs, lb, ub):
    """Drop negligible coefficients (relaxing the rhs), reject badly scaled cuts."""
    coefs = coefs.copy()
    big = np.abs(coefs).max(initial=0.0)
    if big <= 1e-12:
        return None
    small = (np.abs(coefs) < 1e-9 * big) & (coefs != 0)
    if small.any():
        rhs -= float(np.sum(np.maximum(coefs[small] * lb[small], coefs[small] * ub[small])))
        coefs[small] = 0.0
    nz = np.abs(coefs[coefs != 0])
    if nz.size == 0 or nz.max() / nz.min() > MAX_DYNAMISM:
        return None
    rhs -= 1e-9 * max(1.0, abs(rhs))
    return coefs, rhs


def generate_cuts(sol: LpSolution, model: IlpModel, problem: Optional[LpProblem] = None) -> List[Cut]:
    """Cuts violated by the LP point ``sol`` (empty when the point is integral)."""
    if sol.x is None or is_integral(sol.x):
        return []
    problem = problem if problem is not None else model.to_lp()
    return gomory_cuts(sol, problem, model.integer_mask())


# -- branch and cut ---------------------------------------------------------------

@dataclass
class BnbNode:
    node_id: int
    parent: Optional[int]
    lb: np.ndarray
    ub: np.ndarray
    cut_rows: int             # number of rows in force (global + inherited cuts)
    bound: float
    depth: int
    basis: Optional[Basis] = field(default=None, repr=False)
    changes: Tuple[Tuple[int, str, float], ...] = ()


@dataclass
class SolveResult:
    assignment: np.ndarray
    energy: float
    proven_optimal: bool
    nodes: int
    wall_time: float
    stage1_energy: float
    lower_bound: float
    log: List[str] = field(default_factory=list)
    pump: Optional[PumpResult] = None
    incumbents: List[float] = field(default_factory=list)

    @property
    def limit_hit(self) -> bool:
        return not self.proven_optimal


def _prune_bound(bound: float, incumbent: float, p: float) -> bool:
    """Objective values are integer multiples of p, so an LP bound only needs
    to reach the next multiple above to rule out strict improvement."""
    return math.ceil(bound / p - 1e-6) * p >= incumbent - 1e-9 * max(1.0, incumbent)


def round_up_heuristic(model: IlpModel, x: np.ndarray) -> Optional[np.ndarray]:
    """Round an LP point to an integer one: ceil every positive count, open the
    matching selectors, then give back units (largest coop sets first) as long
    as each demand stays met.  Returns None when the result is infeasible."""
    y = np.zeros_like(x)
    for u in model.users:
        demand = int_demand(u.demand_rate)
        picked = []
        for s in model.coop_sets:
            j = model.index("o", u.user_id, s.mask)
            if x[j] > INT_TOL:
                k = min(math.ceil(x[j] - INT_TOL), int(model.ub[j]))
                y[j] = k
                y[model.index("delta", u.user_id, s.mask)] = 1.0
                picked.append((s, j))
        served = sum(int_rate(u.rates[s.mask]) * y[j] for s, j in picked)
        for s, j in sorted(picked, key=lambda t: (-t[0].size, -t[0].mask)):
            r = int_rate(u.rates[s.mask])
            if r <= 0:
                spare = int(y[j])
            else:
                spare = int(min(y[j], (served - demand) // r))
            if spare > 0:
                y[j] -= spare
                served -= spare * r
                if y[j] == 0:
                    y[model.index("delta", u.user_id, s.mask)] = 0.0
    _repair_capacity(model, y)
    return y if check_assignment(model, y).feasible else None


def _repair_capacity(model: IlpModel, y: np.ndarray) -> None:
    """While the capacity row is violated, move the user whose switch to a
    single coop set saves subcarriers at the lowest energy per saved unit."""
    o_cols = np.arange(1, model.n_vars, 2)
    while y[o_cols].sum() > model.K:
        best = None
        for u in model.users:
            cols = [model.index("o", u.user_id, s.mask) for s in model.coop_sets]
            t_u = y[cols].sum()
            e_u = sum(model.c[j] * y[j] for j in cols)
            for s in model.coop_sets:
                if s.mask not in model.allowed:
                    continue
                need = u.required(s.mask)
                if need >= t_u or need > model.lam_eff:
                    continue
                ratio = (s.size * need * model.p - e_u) / (t_u - need)
                if best is None or ratio < best[0]:
                    best = (ratio, u, s, need, cols)
        if best is None:
            return
        _, u, s, need, cols = best
        for j in cols:
            y[j] = 0.0
            y[j - 1] = 0.0
        y[model.index("o", u.user_id, s.mask)] = need
        y[model.index("delta", u.user_id, s.mask)] = 1.0


def _select_branch(x: np.ndarray, delta_mask: np.ndarray) -> Optional[int]:
    frac = np.abs(x - np.round(x))
    frac[frac <= INT_TOL] = 0.0
    if not frac.any():
        return None
    dist = np.minimum(x - np.floor(x), np.ceil(x) - x)
    dist[frac == 0] = -1.0
    best = dist.max()
    ties = np.flatnonzero(dist >= best - 1e-12)
    prefer = [j for j in ties if delta_mask[j]]
    return int(prefer[0] if prefer else ties[0])


def _purge_slack_cuts(sol: LpSolution, n: int, n_global: int, cut_A, cut_rhs):
    """Drop cut rows that are strictly slack at the LP optimum.

    Their activity columns are basic, so deleting row and column together
    keeps the basis square and nonsingular.
    """
    st = sol.state
    k = cut_rhs.size
    if k == 0:
        return sol.basis, cut_A, cut_rhs
    cols = n + n_global + np.arange(k)
    slack = (st.status[cols] == BASIC) & (st.x[cols] - st.lo[cols] > 1e-6)
    if not slack.any():
        return sol.basis, cut_A, cut_rhs
    drop = set(cols[slack].tolist())
    keep_cols = np.array([c for c in range(st.status.size) if c not in drop])
    remap = -np.ones(st.status.size, dtype=int)
    remap[keep_cols] = np.arange(keep_cols.size)
    basic = np.array([remap[c] for c in st.basic if c not in drop])
    status = st.status[keep_cols].copy()
    return Basis(basic, status), cut_A[~slack], cut_rhs[~slack]


def branch_and_cut(model: IlpModel, incumbent: np.ndarray, time_limit: Optional[float] = None,
                   node_limit: Optional[int] = None, use_cuts: bool = True,
                   strengthen: bool = True, log: bool = False) -> SolveResult:
    """Best-first branch-and-cut from a feasible ``incumbent``.

    ``time_limit`` is in seconds; 0 returns the incumbent without searching.
    """
    t0 = time.perf_counter()
    if not check_assignment(model, incumbent).feasible:
        raise ValueError("incumbent is not feasible")
    best_x = np.asarray(incumbent, dtype=float).copy()
    best_e = energy(model, best_x)
    stage1 = best_e
    lines: List[str] = []
    history = [best_e]
    p = model.p
    if time_limit is not None and time_limit <= 0:
        return SolveResult(best_x, best_e, False, 0, time.perf_counter() - t0, stage1, -math.inf, lines,
                           incumbents=history)
    deadline = None if time_limit is None else t0 + time_limit
    base = model.to_lp()
    if strengthen:
        extra = strengthening_rows(model)
        if extra:
            A = np.zeros((len(extra), model.n_vars))
            for i, r in enumerate(extra):
                A[i, list(r.indices)] = r.coefs
            base = base.add_rows(A, [r.sense for r in extra], [r.rhs for r in extra])
    integer = model.integer_mask()
    delta_mask = model.delta_mask()
    n_global = base.m
    cut_A = np.zeros((0, model.n_vars))
    cut_rhs = np.zeros(0)

    def problem_for(node: BnbNode) -> LpProblem:
        k = node.cut_rows - n_global
        if k == 0:
            prob = base.with_bounds(node.lb, node.ub)
        else:
            prob = LpProblem(base.c, np.vstack([base.A, cut_A[:k]]), list(base.senses) + [GE] * k,
                             np.concatenate([base.rhs, cut_rhs[:k]]), node.lb, node.ub)
        return prob

    # every open node carries the cut rows valid for it (its ancestors' cuts)
    node_cuts = {}
    counter = 0
    root = BnbNode(0, None, base.lb.copy(), base.ub.copy(), n_global, -math.inf, 0)
    node_cuts[0] = (np.zeros((0, model.n_vars)), np.zeros(0))
    heap: List[Tuple[float, int, BnbNode]] = [(-math.inf, 0, root)]
    nodes = 0
    limit_hit = False
    while heap:
        if deadline is not None and time.perf_counter() >= deadline:
            limit_hit = True
            break
        if node_limit is not None and nodes >= node_limit:
            limit_hit = True
            break
        bound_key, _, node = heapq.heappop(heap)
        if node.bound > -math.inf and _prune_bound(node.bound, best_e, p):
            if log:
                lines.append(f"{node.node_id} {node.parent} {node.bound:.9g} prune")
            continue
        nodes += 1
        cA, cb = node_cuts.pop(node.node_id)
        cut_A, cut_rhs = cA, cb
        node.cut_rows = n_global + cb.size
        prob = problem_for(node)
        sol = Simplex(prob).solve(node.basis)
        if not sol.optimal:
            if log:
                lines.append(f"{node.node_id} {node.parent} inf prune")
            continue
        bound = max(sol.objective, node.bound)
        action = None
        rounds = 0
        while use_cuts and node.depth <= MAX_CUT_DEPTH and rounds < MAX_CUT_ROUNDS and not is_integral(sol.x) \
                and not _prune_bound(bound, best_e, p):
            cuts = gomory_cuts(sol, prob, integer)
            if not cuts:
                break
            rounds += 1
            cut_A = np.vstack([cut_A] + [c.coefs[None, :] for c in cuts])
            cut_rhs = np.concatenate([cut_rhs, [c.rhs for c in cuts]])
            node.cut_rows = n_global + cut_rhs.size
            prob = problem_for(node)
            new = Simplex(prob).solve(sol.basis)
            if not new.optimal:
                sol = new
                break
            improved = new.objective - bound
            sol = new
            bound = max(bound, new.objective)
            action = "cut"
            if improved < 1e-6 * max(1.0, abs(bound)):
                break
        if not sol.optimal:
            if log:
                lines.append(f"{node.node_id} {node.parent} inf prune")
            continue
        if _prune_bound(bound, best_e, p):
            if log:
                lines.append(f"{node.node_id} {node.parent} {bound:.9g} prune")
            continue
        x = sol.x
        if is_integral(x):
            xr = np.round(x)
            e = energy(model, xr)
            if check_assignment(model, xr).feasible and e < best_e - 1e-9:
                best_e, best_x = e, xr
                history.append(best_e)
            if log:
                lines.append(f"{node.node_id} {node.parent} {bound:.9g} integral")
            continue
        guess = round_up_heuristic(model, x)
        if guess is not None:
            e = energy(model, guess)
            if e < best_e - 1e-9:
                best_e, best_x = e, guess
                history.append(best_e)
                if _prune_bound(bound, best_e, p):
                    if log:
                        lines.append(f"{node.node_id} {node.parent} {bound:.9g} prune")
                    continue
        j = _select_branch(x, delta_mask)
        if log:
            lines.append(f"{node.node_id} {node.parent} {bound:.9g} {action or 'branch'}")
        v = x[j]
        basis, cut_A, cut_rhs = _purge_slack_cuts(sol, model.n_vars, n_global, cut_A, cut_rhs)
        for side in (0, 1):
            lb, ub = node.lb.copy(), node.ub.copy()
            if side == 0:
                ub[j] = math.floor(v)
                change = (j, "<=", ub[j])
            else:
                lb[j] = math.ceil(v)
                change = (j, ">=", lb[j])
            if lb[j] > ub[j]:
                continue
            counter += 1
            child = BnbNode(counter, node.node_id, lb, ub, n_global + cut_rhs.size, bound,
                            node.depth + 1, basis.copy(), node.changes + (change,))
            node_cuts[counter] = (cut_A, cut_rhs)
            heapq.heappush(heap, (bound, counter, child))
    open_bounds = [b for b, _, _ in heap]
    if limit_hit:
        lower = min([best_e] + open_bounds)
        proven = False
    else:
        lower = best_e
        proven = True
    return SolveResult(best_x, best_e, proven, nodes, time.perf_counter() - t0, stage1, lower,
                       lines, incumbents=history)


def tsra(model: IlpModel, time_limit: Optional[float] = None, node_limit: Optional[int] = None,
         n_flip: int = N_FLIP, pump_max_iter: int = PUMP_MAX_ITER, seed: int = 0,
         use_cuts: bool = True, log: bool = False) -> SolveResult:
    """Feasibility pump, then branch-and-cut seeded with the pump's answer."""
    t0 = time.perf_counter()
    deadline = None if time_limit is None else t0 + time_limit
    pump = feasibility_pump(model, n_flip, pump_max_iter, seed, deadline)
    remaining = None if deadline is None else max(0.0, deadline - time.perf_counter())
    res = branch_and_cut(model, pump.assignment, remaining, node_limit, use_cuts=use_cuts, log=log)
    res.pump = pump
    res.wall_time = time.perf_counter() - t0
    return res
