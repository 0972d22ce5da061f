import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from fdran.errors import BadBounds
from fdran.lp import EQ, GE, LE, LpProblem, dual_bound, reoptimize, solve_lp


def random_lp(seed):
    r = np.random.default_rng(seed)
    n, m = int(r.integers(2, 10)), int(r.integers(1, 8))
    A = r.integers(-5, 6, (m, n)).astype(float)
    rhs = r.integers(-10, 20, m).astype(float)
    senses = list(r.choice([LE, GE, EQ], m, p=[0.45, 0.45, 0.1]))
    c = r.integers(-5, 6, n).astype(float)
    lb = r.integers(-3, 1, n).astype(float)
    ub = lb + r.integers(0, 6, n)
    return LpProblem(c, A, senses, rhs, lb, ub)


def highs(p: LpProblem):
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row, s, b in zip(p.A, p.senses, p.rhs):
        if s == LE:
            A_ub.append(row); b_ub.append(b)
        elif s == GE:
            A_ub.append(-row); b_ub.append(-b)
        else:
            A_eq.append(row); b_eq.append(b)
    return linprog(p.c, A_ub=A_ub or None, b_ub=b_ub or None, A_eq=A_eq or None, b_eq=b_eq or None,
                   bounds=list(zip(p.lb, p.ub)), method="highs")


def feasible(p, x, tol=1e-7):
    act = p.A @ x
    ok = np.all(x >= p.lb - tol) and np.all(x <= p.ub + tol)
    for a, s, b in zip(act, p.senses, p.rhs):
        ok &= (a <= b + tol) if s == LE else (a >= b - tol) if s == GE else abs(a - b) <= tol
    return bool(ok)


def test_box_only():
    s = solve_lp(LpProblem([1.0], np.zeros((0, 1)), [], [], [2.0], [5.0]))
    assert s.optimal and s.x[0] == 2 and s.objective == 2


def test_two_variable_example():
    p = LpProblem.from_rows([1.0, 2.0], [((0, 1), (1.0, 1.0), GE, 3.0)], [0, 0], [2, 2])
    s = solve_lp(p)
    assert s.optimal
    np.testing.assert_allclose(s.x, [2, 1], atol=1e-12)
    assert s.objective == pytest.approx(4)


def test_infeasible_row():
    s = solve_lp(LpProblem.from_rows([1.0], [((0,), (1.0,), GE, 3.0)], [0], [2]))
    assert s.status == "infeasible" and s.certificate


def test_maximize():
    p = LpProblem.from_rows([1.0, 1.0], [((0, 1), (1.0, 2.0), LE, 4.0)], [0, 0], [3, 3], maximize=True)
    s = solve_lp(p)
    assert s.objective == pytest.approx(3.5)


def test_bad_bounds():
    with pytest.raises(BadBounds):
        solve_lp(LpProblem([1.0], np.zeros((0, 1)), [], [], [3.0], [1.0]))
    with pytest.raises(BadBounds):
        solve_lp(LpProblem([1.0], np.zeros((0, 1)), [], [], [0.0], [np.inf]))


@settings(max_examples=200)
@given(st.integers(0, 2 ** 32 - 1))
def test_matches_highs_and_duality(seed):
    p = random_lp(seed)
    s = solve_lp(p)
    ref = highs(p)
    assert (ref.status == 0) == s.optimal
    if s.optimal:
        assert s.objective == pytest.approx(ref.fun, abs=1e-6)
        assert feasible(p, s.x)
        assert p.c @ s.x == pytest.approx(s.objective, abs=1e-7)
        # a dual certificate built from the row multipliers closes the gap
        assert dual_bound(p, s.duals) == pytest.approx(s.objective, abs=1e-6)


@settings(max_examples=200)
@given(st.integers(0, 2 ** 32 - 1))
def test_warm_equals_cold_over_mutations(seed):
    r = np.random.default_rng(seed)
    p = random_lp(seed)
    s = solve_lp(p)
    for _ in range(4):
        if not s.optimal:
            return
        lb, ub = p.lb.copy(), p.ub.copy()
        j = int(r.integers(p.n))
        if r.random() < 0.5:
            ub[j] = max(lb[j], np.floor(s.x[j] - 0.5))
        else:
            lb[j] = min(ub[j], np.ceil(s.x[j] + 0.5))
        q = p.with_bounds(lb, ub)
        if r.random() < 0.5:
            row = r.integers(-3, 4, p.n).astype(float)
            q = q.add_rows(row[None, :], [LE], [float(row @ s.x) + r.integers(-2, 3)])
        warm, cold = reoptimize(q, s.basis), solve_lp(q)
        assert warm.status == cold.status
        if cold.optimal:
            assert warm.objective == pytest.approx(cold.objective, abs=1e-9)
        p, s = q, warm


def test_reoptimize_examples():
    p = next(q for q in map(random_lp, range(100)) if solve_lp(q).optimal and q.m >= 3)
    s = solve_lp(p)
    same = reoptimize(p, s.basis)
    assert same.objective == pytest.approx(s.objective, abs=1e-9)
    np.testing.assert_allclose(same.x, s.x, atol=1e-9)
    loose = p.add_rows(np.ones((1, p.n)), [LE], [np.abs(p.ub).sum() + np.abs(p.lb).sum() + 1])
    assert reoptimize(loose, s.basis).objective == pytest.approx(s.objective)
    j = int(np.argmax(s.x - p.lb))
    if s.x[j] > p.lb[j] + 1e-9:
        ub = p.ub.copy()
        ub[j] = p.lb[j]
        t = reoptimize(p.with_bounds(p.lb, ub), s.basis)
        assert not t.optimal or t.objective >= s.objective - 1e-9


def test_deterministic_bytes():
    p = random_lp(99)
    a, b = solve_lp(p), solve_lp(random_lp(99))
    assert a.status == b.status
    if a.optimal:
        assert a.x.tobytes() == b.x.tobytes() and a.duals.tobytes() == b.duals.tobytes()


def test_dump_format():
    p = LpProblem.from_rows([1.0, 2.0], [((0, 1), (1.0, -2.5), LE, 3.0)], [0, 0], [1, 1])
    assert p.dump() == "<= 3 0:1 1:-2.5"
