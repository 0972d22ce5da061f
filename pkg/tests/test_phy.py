from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fdran.errors import DimensionMismatch, EmptyInput, FormatError, LayerMismatch, RankDeficient
from fdran.phy.channel import gen_channel, path_gain
from fdran.phy.cqi import CQI_TABLE, MAX_CQI, real_cqi, threshold_linear, validate_table
from fdran.phy.link import (PhyConfig, Precoder, achievable_rate, achievable_rate_exact, jt_effective_channel,
                            layer_sinr, real_cqi_from_sinrs, zf_equalizer, zf_sinrs)
from fdran.phy.miesm import bicm_capacity, effective_snr, inverse_bicm_capacity
from fdran.phy.tensorio import channel_sets, read_channel_tensor, write_channel_tensor

CFG = PhyConfig()


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# -- CQI table -------------------------------------------------------------------

def test_table_is_strictly_increasing():
    validate_table(CQI_TABLE)
    assert MAX_CQI == 15


def test_validate_table_rejects_disorder():
    bad = [CQI_TABLE[1], CQI_TABLE[0]]
    with pytest.raises(ValueError):
        validate_table(bad)


def test_real_cqi_boundaries():
    assert real_cqi(threshold_linear(CQI_TABLE[0]) * 0.5) == 0
    assert real_cqi(threshold_linear(CQI_TABLE[6])) == 7
    assert real_cqi(float("inf")) == 15


@given(st.floats(-20, 40), st.floats(0, 10))
def test_real_cqi_monotone(db, step):
    a = real_cqi(10 ** (db / 10))
    b = real_cqi(10 ** ((db + step) / 10))
    assert b >= a


# -- channel -----------------------------------------------------------------------

def test_channel_deterministic():
    loc, bs = (10.0, 5.0, 1.5), (0.0, 0.0, 10.0)
    a = gen_channel(loc, bs, CFG, 12, seed=3, slot=4)
    b = gen_channel(loc, bs, CFG, 12, seed=3, slot=4)
    assert a.entries.tobytes() == b.entries.tobytes()


def test_channel_slot_changes_small_scale_only():
    loc, bs = (10.0, 5.0, 1.5), (0.0, 0.0, 10.0)
    a = gen_channel(loc, bs, CFG, 12, seed=3, slot=1)
    b = gen_channel(loc, bs, CFG, 12, seed=3, slot=2)
    assert abs(a.large_scale_gain - b.large_scale_gain) <= 1e-9
    assert not np.allclose(a.entries, b.entries)


def test_subcarrier_subset_matches_full_generation():
    loc, bs = (3.0, 7.0, 1.5), (20.0, 0.0, 10.0)
    full = gen_channel(loc, bs, CFG, 24, seed=1, slot=9).entries
    idx = np.array([0, 5, 23])
    part = gen_channel(loc, bs, CFG, 24, seed=1, slot=9, subcarrier_indices=idx).entries
    np.testing.assert_allclose(part, full[idx])


def test_channel_power_follows_path_loss():
    # empirical mean power over 10^4 slots at distances d and 2d
    cfg = PhyConfig(n_tx=2, n_rx=1)
    bs = np.zeros(3)
    powers = []
    for d in (10.0, 20.0):
        loc = (d, 0.0, 0.0)
        p = np.mean([np.mean(np.abs(gen_channel(loc, bs, cfg, 1, 5, s).entries) ** 2) for s in range(10000)])
        powers.append(p / path_gain(loc, bs))
    # normalized to the nominal gain, both links carry unit mean power
    for p in powers:
        assert abs(p - 1.0) < 0.08
    ratio = path_gain((20.0, 0, 0), bs) / path_gain((10.0, 0, 0), bs)
    assert ratio == pytest.approx(2 ** -3.5, rel=1e-12)


def test_zero_subcarriers_rejected():
    with pytest.raises(ValueError):
        gen_channel((0, 0, 0), (1, 1, 1), CFG, 0, 0, 0)


# -- ZF and SINR --------------------------------------------------------------------

def test_zf_identity_and_diagonal():
    np.testing.assert_allclose(zf_equalizer(np.eye(2)), np.eye(2))
    np.testing.assert_allclose(zf_equalizer(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))


def test_zf_inverts_random_channel(rng):
    g = crandn(rng, 4, 2)
    np.testing.assert_allclose(zf_equalizer(g) @ g, np.eye(2), atol=1e-9)


def test_zf_rank_deficient():
    g = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(RankDeficient):
        zf_equalizer(g)
    with pytest.raises(RankDeficient):
        zf_equalizer(np.ones((2, 3)))


def test_layer_sinr_scalar():
    s = layer_sinr(np.ones((1, 1)), np.ones((1, 1)), np.ones((1, 1)), 1.0)
    assert s[0] == pytest.approx(1.0)


def test_layer_sinr_zf_has_no_interlayer_terms(rng):
    g = crandn(rng, 4, 2)
    e = zf_equalizer(g)
    s = layer_sinr(g, np.eye(2), e, 0.3)
    np.testing.assert_allclose(s, 1.0 / (0.3 * np.sum(np.abs(e) ** 2, axis=1)))


def test_layer_sinr_matches_termwise_evaluation(rng):
    h = crandn(rng, 4, 16)
    w = Precoder.normalized(crandn(rng, 16, 2))
    e = zf_equalizer(h @ w.matrix)
    e = e + 0.05 * crandn(rng, 2, 4)  # not exactly ZF, so interference is present
    sigma2 = 0.1
    got = layer_sinr(h, w, e, sigma2)
    for l in range(2):
        num = 0.0
        den = 0.0
        for i in range(2):
            gli = sum(e[l, r] * h[r, t] * w.matrix[t, i] for r in range(4) for t in range(16))
            if i == l:
                num = abs(gli) ** 2
            else:
                den += abs(gli) ** 2
        den += sigma2 * sum(abs(e[l, r]) ** 2 for r in range(4))
        assert got[l] == pytest.approx(num / den, rel=1e-10)


def test_layer_sinr_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        layer_sinr(np.ones((4, 8)), np.ones((16, 2)) / np.sqrt(32), np.ones((2, 4)), 1.0)


@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-4, 10))
def test_sinr_nonnegative(seed, sigma2):
    r = np.random.default_rng(seed)
    g = crandn(r, 3, 4, 2)
    e = crandn(r, 3, 2, 4)
    s = layer_sinr(g, np.eye(2), e, sigma2)
    assert np.all(s >= 0)
    assert np.all(zf_sinrs(g, sigma2) >= 0)


def test_zf_sinrs_zero_for_rank_deficient_stack():
    g = np.stack([np.eye(4)[:, :2], np.ones((4, 2))])
    s = zf_sinrs(g, 1.0)
    assert np.all(s[1] == 0) and np.all(s[0] > 0)


def test_precoder_norm_enforced():
    with pytest.raises(ValueError):
        Precoder(np.ones((4, 1)))
    assert np.linalg.norm(Precoder.normalized(np.ones((4, 2))).matrix) == pytest.approx(1.0)


# -- rate -------------------------------------------------------------------------------

def test_rate_golden_value():
    cfg = PhyConfig(numerology=0, overhead=0.14)
    r = achievable_rate_exact(2, 15, 15, 10, cfg)
    assert CQI_TABLE[14].modulation_order == 6 and CQI_TABLE[14].code_rate == Fraction(948, 1024)
    assert r == Fraction(133756875, 100)
    assert achievable_rate(2, 15, 15, 10, cfg) == 1337568.75


def test_rate_zero_branches():
    assert achievable_rate(2, 8, 7, 10, CFG) == 0
    assert achievable_rate(2, 7, 7, 0, CFG) == 0
    assert achievable_rate(2, 0, 7, 5, CFG) == 0


@given(st.integers(1, 4), st.integers(1, 15), st.integers(0, 143))
def test_rate_monotone(layers, cqi, n):
    assert achievable_rate(layers, cqi, 15, n + 1, CFG) > achievable_rate(layers, cqi, 15, n, CFG)
    if cqi < 15:
        assert achievable_rate(layers, cqi + 1, 15, n, CFG) >= achievable_rate(layers, cqi, 15, n, CFG)


# -- joint transmission -------------------------------------------------------------------

def test_jt_singleton(rng):
    h = crandn(rng, 3, 4, 8)
    w = Precoder.normalized(crandn(rng, 8, 2))
    np.testing.assert_allclose(jt_effective_channel([h], [w]), h @ w.matrix)


def test_jt_cancellation(rng):
    h = crandn(rng, 3, 4, 8)
    w = crandn(rng, 8, 2)
    w = w / np.linalg.norm(w)
    out = jt_effective_channel([h, h], [w, -w])
    np.testing.assert_allclose(out, 0, atol=1e-12)


def test_jt_three_members_elementwise(rng):
    hs = [crandn(rng, 2, 4, 8) for _ in range(3)]
    ws = [Precoder.normalized(crandn(rng, 8, 2)) for _ in range(3)]
    got = jt_effective_channel(hs, ws)
    for k in range(2):
        for r in range(4):
            for l in range(2):
                ref = sum(hs[m][k, r, t] * ws[m].matrix[t, l] for m in range(3) for t in range(8))
                assert got[k, r, l] == pytest.approx(ref, abs=1e-12)


def test_jt_layer_mismatch(rng):
    with pytest.raises(LayerMismatch):
        jt_effective_channel([crandn(rng, 2, 4, 8)] * 2,
                             [Precoder.normalized(crandn(rng, 8, 1)), Precoder.normalized(crandn(rng, 8, 2))])


# -- MIESM ---------------------------------------------------------------------------------

QPSK_TWO_POINT = 2.1347481775696773  # quadrature + root-finding oracle, frozen


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("order", [2, 4, 6])
@pytest.mark.parametrize("s", [1e-3, 0.7, 3.0, 50.0, 1e4])
def test_miesm_equal_inputs(alpha, order, s):
    assert abs(effective_snr([s] * 7, alpha, order) - s) <= 1e-9 * max(1.0, s)


def test_miesm_single_and_empty():
    assert effective_snr([4.2]) == 4.2
    with pytest.raises(EmptyInput):
        effective_snr([])


def _qpsk_capacity_quad(snr):
    from scipy import integrate
    s2, a = 1 / (2 * snr), np.sqrt(0.5)
    f = lambda y: (np.exp(-(y - a) ** 2 / (2 * s2)) / np.sqrt(2 * np.pi * s2)
                   * np.logaddexp(0, -2 * a * y / s2) / np.log(2))
    v, _ = integrate.quad(f, a - 40 * np.sqrt(s2), a + 40 * np.sqrt(s2), limit=400)
    return 2 * (1 - v)


def test_miesm_two_point_against_quadrature():
    from scipy import optimize
    target = (_qpsk_capacity_quad(1.0) + _qpsk_capacity_quad(100.0)) / 2
    oracle = optimize.brentq(lambda s: _qpsk_capacity_quad(s) - target, 1e-3, 100, xtol=1e-14)
    assert oracle == pytest.approx(QPSK_TWO_POINT, rel=1e-9)
    got = effective_snr([1.0, 100.0], 1.0, 2)
    assert abs(10 * np.log10(got / QPSK_TWO_POINT)) < 0.05


@pytest.mark.parametrize("order", [2, 4, 6])
def test_capacity_curve_against_quadrature(order):
    # BPSK-per-dimension oracle only covers QPSK; higher orders are checked for shape
    snr = np.array([0.1, 1.0, 10.0, 100.0])
    cap = bicm_capacity(snr, order)
    assert np.all(np.diff(cap) > 0) and cap[-1] <= order
    if order == 2:
        for s, c in zip(snr, cap):
            assert c == pytest.approx(_qpsk_capacity_quad(s), abs=2e-4)


@pytest.mark.parametrize("order", [2, 4, 6])
def test_inverse_capacity_roundtrip(order):
    snr = 10 ** (np.linspace(-25, 30, 400) / 10)
    cap = bicm_capacity(snr, order)
    # the inverse is only well conditioned away from saturation
    keep = cap < order - 1e-3
    back = inverse_bicm_capacity(cap[keep], order)
    np.testing.assert_allclose(back, snr[keep], rtol=1e-6)


@given(st.lists(st.floats(1e-3, 1e4), min_size=1, max_size=20), st.floats(0.3, 3.0),
       st.sampled_from([2, 4, 6]))
def test_miesm_sandwich(s, alpha, order):
    v = effective_snr(s, alpha, order)
    assert min(s) <= v <= max(s)


@given(st.lists(st.floats(1e-3, 1e4), min_size=2, max_size=20), st.randoms(use_true_random=False))
def test_miesm_permutation_invariant(s, r):
    t = list(s)
    r.shuffle(t)
    assert effective_snr(t, 1.0, 4) == pytest.approx(effective_snr(s, 1.0, 4), rel=1e-12)


def test_real_cqi_from_sinrs_matches_effective_snr_route(rng):
    # capacity-domain shortcut versus explicit effective SNR per candidate
    rows = 10 ** (rng.uniform(-10, 30, size=(300, 8)) / 10)
    got = real_cqi_from_sinrs(rows, 1.0)
    for row, g in zip(rows, got):
        ref = 0
        for e in CQI_TABLE:
            if effective_snr(row, 1.0, e.modulation_order) >= threshold_linear(e) * (1 - 1e-9):
                ref = e.index
        assert g == ref


# -- tensor files ------------------------------------------------------------------------------

def test_tensor_roundtrip(tmp_path, rng):
    t = crandn(rng, 2, 3, 4, 2, 5)
    p = tmp_path / "h.bin"
    write_channel_tensor(p, t)
    np.testing.assert_array_equal(read_channel_tensor(p), t)
    sets = channel_sets(t, 1)
    assert len(sets) == 3 and sets[2].entries.shape == (4, 2, 5)


def test_tensor_format_errors(tmp_path, rng):
    p = tmp_path / "h.bin"
    write_channel_tensor(p, crandn(rng, 1, 1, 2, 2, 2))
    data = p.read_bytes()
    p.write_bytes(data[:-3])
    with pytest.raises(FormatError):
        read_channel_tensor(p)
    p.write_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(FormatError):
        read_channel_tensor(p)
