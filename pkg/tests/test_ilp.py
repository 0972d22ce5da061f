from itertools import combinations, product

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fdran.errors import IncompleteRateMap
from fdran.ilp import (LightUser, assignment_from_counts, build_ilp, check_assignment,
                       counts_from_assignment, energy, enumerate_coop_sets, expected_row_counts,
                       full_cooperation_assignment, int_demand, int_rate, per_bs_load)
from fdran.instances import random_light
from fdran.sim.resources import map_energy, nested_segments, per_bs_counts, resource_map


def user(uid, demand, M, rate=100):
    return LightUser(uid, demand, {m: rate * bin(m).count("1") for m in range(1, 1 << M)})


def test_enumerate_coop_sets():
    assert [s.mask for s in enumerate_coop_sets(1)] == [1]
    assert [s.mask for s in enumerate_coop_sets(2)] == [0b01, 0b10, 0b11]
    pairs = [s for s in enumerate_coop_sets(3) if s.size == 2]
    # BS indices are 0-based bit positions: {1,2}, {1,3}, {2,3} in 1-based naming
    assert [tuple(q + 1 for q in s.members) for s in pairs] == [(1, 2), (1, 3), (2, 3)]
    with pytest.raises(ValueError):
        enumerate_coop_sets(0)


def test_single_bs_single_user():
    m = build_ilp([user(0, 250, 1)], K=5, M=1)
    assert m.n_vars == 2
    assert m.rows_by_family() == {"capacity": 1, "link": 1, "one-per-size": 1, "demand": 1}


def _compat_pairs_by_subset_enumeration(M):
    sets = [frozenset(c) for q in range(1, M + 1) for c in combinations(range(M), q)]
    return sum(1 for a in sets for b in sets if len(b) < len(a) and not b <= a)


def test_three_bs_single_user():
    m = build_ilp([user(0, 250, 3)], K=5, M=3)
    assert m.n_vars == 14
    fam = m.rows_by_family()
    assert fam["compat"] == _compat_pairs_by_subset_enumeration(3) == 3
    assert fam == expected_row_counts(3, 1)


@pytest.mark.parametrize("M,N", [(1, 3), (2, 2), (3, 3), (4, 2)])
def test_row_counts(M, N):
    m = build_ilp([user(i, 150, M) for i in range(N)], K=12, M=M)
    assert m.n_vars == 2 * (2 ** M - 1) * N
    exp = expected_row_counts(M, N)
    assert exp.get("compat", 0) == N * _compat_pairs_by_subset_enumeration(M)
    assert m.rows_by_family() == exp


def test_variables_and_objective():
    m = build_ilp([user(0, 100, 3), user(1, 100, 3)], K=9, p=2.0, M=3)
    for s in m.coop_sets:
        for uid in (0, 1):
            d, o = m.index("delta", uid, s.mask), m.index("o", uid, s.mask)
            assert (m.lb[d], m.ub[d], m.c[d]) == (0, 1, 0)
            assert (m.lb[o], m.ub[o], m.c[o]) == (0, 9, 2.0 * s.size)
    assert m.lam == 1000 and m.lam_eff == 9


def test_preconditions():
    with pytest.raises(ValueError):
        build_ilp([user(0, 10, 2)], K=10, lam=5, M=2)
    with pytest.raises(IncompleteRateMap):
        build_ilp([LightUser(0, 10, {1: 5, 2: 5})], K=4, M=2)


def test_integer_scaled_rates_and_demand():
    assert int_rate(1e5 - 1e-6) == 100000 and int_rate(99999.5) == 99999
    assert int_demand(1e5 + 1e-6) == 100000 and int_demand(100000.5) == 100001


def test_check_assignment_examples():
    m = build_ilp([user(0, 250, 2), user(1, 120, 2)], K=6, M=2)
    v = check_assignment(m, np.zeros(m.n_vars))
    assert not v.feasible and {"demand[u0]", "demand[u1]"} <= set(v.violated)
    x = full_cooperation_assignment(m)
    assert x is not None and check_assignment(m, x).feasible
    y = x.copy()
    y[m.index("delta", 0, 3)] = 0
    assert "link[u0,B3]" in check_assignment(m, y).violated
    z = x.copy()
    z[m.index("o", 0, 3)] += 0.5
    assert "integrality" in check_assignment(m, z).violated


def test_energy_examples():
    m = build_ilp([user(0, 400, 3)], K=8, p=1.0, M=3)
    assert energy(m, np.zeros(m.n_vars)) == 0
    x = assignment_from_counts(m, {0: {0b101: 5}})
    assert energy(m, x) == 10.0


def test_selected_sets_form_chains():
    # every delta pattern allowed by the compatibility and one-per-size rows is a chain
    M = 3
    m = build_ilp([user(0, 1, M)], K=7, M=M)
    masks = [s.mask for s in m.coop_sets]
    rows = [r for r in m.rows if r.tag.startswith(("compat", "one-per-size"))]
    for pattern in product((0, 1), repeat=len(masks)):
        x = np.zeros(m.n_vars)
        for mask, on in zip(masks, pattern):
            x[m.index("delta", 0, mask)] = on
        ok = all(sum(c * x[i] for i, c in zip(r.indices, r.coefs)) <= r.rhs for r in rows)
        chosen = sorted((mk for mk, on in zip(masks, pattern) if on), key=lambda t: bin(t).count("1"))
        is_chain = all(a & b == a and bin(a).count("1") < bin(b).count("1") for a, b in zip(chosen, chosen[1:]))
        assert ok == is_chain


@given(st.integers(0, 10 ** 6), st.sampled_from([2, 3]))
def test_per_bs_nesting_roundtrip(seed, M):
    r = np.random.default_rng(seed)
    users, K = random_light(r, M)
    m = build_ilp(users, K, 1.0, 1000.0, M=M)
    per_bs = {u.user_id: {q: int(r.integers(0, 3)) for q in range(M)} for u in users}
    counts = {uid: dict(nested_segments(pb)) for uid, pb in per_bs.items()}
    x = assignment_from_counts(m, counts)
    # the semantics survive the conversion in both directions
    assert counts_from_assignment(m, x) == {uid: {k: v for k, v in c.items()} for uid, c in counts.items()}
    for uid, pb in per_bs.items():
        assert per_bs_counts(counts[uid]) == {q: c for q, c in pb.items() if c > 0}
    load = per_bs_load(m, x)
    assert load == [sum(pb[q] for pb in per_bs.values()) for q in range(M)]
    assert energy(m, x) == sum(load)
    # no chain-rule row is violated by a nested decomposition
    v = check_assignment(m, x)
    assert not any(t.startswith(("compat", "one-per-size", "link")) for t in v.violated)
    if sum(sum(c.values()) for c in counts.values()) <= K:
        assert map_energy(resource_map(counts, K), 1.0) == energy(m, x)


@given(st.integers(0, 10 ** 6), st.sampled_from([2, 3]))
def test_full_cooperation_point_feasible(seed, M):
    users, K = random_light(np.random.default_rng(seed), M)
    m = build_ilp(users, K, 1.0, 1000.0, M=M)
    x = full_cooperation_assignment(m)
    assert x is not None and check_assignment(m, x).feasible


def test_disallowed_sets_are_fixed_to_zero():
    m = build_ilp([user(0, 100, 3)], K=6, M=3, allowed=[1, 5])
    for s in m.coop_sets:
        fixed = s.mask not in (1, 5)
        assert (m.ub[m.index("o", 0, s.mask)] == 0) == fixed


def test_dump_lists_every_row():
    m = build_ilp([user(0, 100, 2)], K=4, M=2)
    text = m.dump()
    lines = text.strip().splitlines()
    assert lines[0].startswith(f"vars {m.n_vars} rows {len(m.rows)}")
    assert sum(ln.startswith("row ") for ln in lines) == len(m.rows)
    assert "row capacity: +1*x1 +1*x3 +1*x5 <= 4" in text
    assert m.dump() == build_ilp([user(0, 100, 2)], K=4, M=2).dump()
