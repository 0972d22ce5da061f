import csv
import json

import numpy as np
import pytest

from fdran.errors import CapacityExceeded, ConfigError
from fdran.ffmap import derive_params
from fdran.phy.channel import gen_channel
from fdran.phy.link import SLOT_SECONDS, PhyConfig
from fdran.sim import baselines
from fdran.sim.baselines import (FEEDBACK_FREE, OPTIMAL, PMI, baseline_params, codebook, coop_masks,
                                 optimal_params, pmi_params)
from fdran.sim.config import PRESETS, NetworkConfig, SimConfig, from_dict
from fdran.sim.engine import (HEAVY, LIGHT, Decision, Episode, classify_load, demand_from_buffer,
                              phy_config, run_episode)
from fdran.sim.output import (SLOT_COLUMNS, aggregate_row, episode_csv_name, write_aggregate_csv,
                              write_episode_csv, write_manifest)
from fdran.sim.resources import (assert_no_double_booking, map_energy, nested_segments, per_bs_counts,
                                 resource_map)


# -- pure helpers -----------------------------------------------------------------

def test_classify_load_examples():
    assert classify_load({}, {}, 10) == LIGHT
    assert classify_load({0: 1000.0}, {0: 100.0}, 10) == LIGHT
    assert classify_load({0: 600.0, 1: 500.0}, {0: 100.0, 1: 100.0}, 10) == HEAVY
    assert classify_load({0: 5.0}, {0: 0.0}, 10) == HEAVY


def test_nested_segments_examples():
    # BS 1..3 are bits 0..2
    assert nested_segments({0: 8, 1: 2, 2: 4}) == [(0b111, 2), (0b101, 2), (0b001, 4)]
    assert nested_segments({0: 8, 1: 4, 2: 4}) == [(0b111, 4), (0b001, 4)]
    assert nested_segments({0: 5}) == [(0b001, 5)]
    assert per_bs_counts(dict(nested_segments({0: 8, 1: 2, 2: 4}))) == {0: 8, 1: 2, 2: 4}


def test_resource_map_layout():
    segs = resource_map({1: {0b11: 2, 0b01: 3}, 0: {0b10: 1}}, 8)
    assert [(s.user_id, s.mask, s.start, s.count) for s in segs] == [(0, 2, 0, 1), (1, 3, 1, 2), (1, 1, 3, 3)]
    assert_no_double_booking(segs, 8)
    assert map_energy(segs, 2.0) == 2.0 * (1 + 4 + 3)
    with pytest.raises(CapacityExceeded):
        resource_map({0: {1: 5}, 1: {1: 4}}, 8)


def test_demand_from_buffer():
    assert demand_from_buffer(0, 10) == 0
    assert demand_from_buffer(1e4, 10) == pytest.approx(1e6)
    assert demand_from_buffer(2e4, 10) == 2 * demand_from_buffer(1e4, 10)
    with pytest.raises(ValueError):
        demand_from_buffer(1.0, 0)


def test_coop_options():
    assert coop_masks("single", 3) == (1,)
    assert set(coop_masks("pair", 3)) == {0b001, 0b100, 0b101}
    assert coop_masks("flexible", 2) == (1, 2, 3)


# -- configuration ---------------------------------------------------------------------

def test_three_bs_preset_parameters():
    s = PRESETS["paper-3bs"]["sim"]
    cfg = from_dict(SimConfig, s)
    assert (cfg.K, cfg.M, cfg.N, cfg.p_mw, cfg.eta_min, cfg.n_flip, cfg.lam) == (144, 3, 10, 1.0, 0.1, 15, 1000.0)
    assert (cfg.d1, cfg.d2, cfg.d3, cfg.T_rp, cfg.T_sc, cfg.node_limit) == (2, 3, 3, 3, 10, 10000)
    assert from_dict(NetworkConfig, PRESETS["paper-3bs"]["network"]).n_bs == 3


@pytest.mark.parametrize("bad", [{"d1": -1}, {"T_sc": 0}, {"eta_min": 1.5}, {"lam": 10.0},
                                 {"tx_scheme": "magic"}, {"coop": "all"}, {"mode": "batch"}])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        SimConfig(**bad)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        from_dict(SimConfig, {"K": 12, "colour": "red"})


# -- baselines ------------------------------------------------------------------------------

def _report(seed, n=12, k=24):
    cfg = PhyConfig(noise_variance=1e-6)
    r = np.random.default_rng(seed)
    loc = (r.uniform(0, 40), r.uniform(0, 40), 1.5)
    idx = np.linspace(0, k - 1, n).round().astype(int)
    return cfg, loc, idx


def test_optimal_precoder_beats_codebook_without_delay():
    bs = np.array([-15.0, 20.0, 10.0])
    for seed in range(30):
        cfg, loc, idx = _report(seed)
        ch = [gen_channel(loc, bs, cfg, 24, 7, seed, subcarrier_indices=idx).entries]
        assert optimal_params(ch, cfg, 1).rate_per_subcarrier >= pmi_params(ch, cfg, 1).rate_per_subcarrier


def test_pmi_deterministic_and_codebook_fixed():
    bs = np.array([-15.0, 20.0, 10.0])
    cfg, loc, idx = _report(3)
    ch = [gen_channel(loc, bs, cfg, 24, 7, 3, subcarrier_indices=idx).entries]
    a, b = pmi_params(ch, cfg, 1), pmi_params(ch, cfg, 1)
    assert a.cqi_em == b.cqi_em and a.layers == b.layers
    np.testing.assert_array_equal(a.precoders[0].matrix, b.precoders[0].matrix)
    book = codebook(16, 2)
    assert len(book) == 16
    for w in book:
        np.testing.assert_allclose(w.conj().T @ w, np.eye(2), atol=1e-12)
    baselines.codebook.cache_clear()
    np.testing.assert_array_equal(codebook(16, 2)[5], book[5])
    with pytest.raises(ValueError):
        baseline_params(FEEDBACK_FREE, ch, cfg)


def test_one_slot_delay_bad_cqi_frequency():
    # measured over 10^3 slots: stale CSI sometimes overshoots the real CQI
    bs = np.array([-15.0, 20.0, 10.0])
    cfg, loc, idx = _report(11)
    from fdran.phy.link import real_cqi_from_sinrs, zf_sinrs
    bad = 0
    for s in range(1000):
        old = [gen_channel(loc, bs, cfg, 24, 7, s, subcarrier_indices=idx).entries]
        tp = optimal_params(old, cfg, 1)
        new = gen_channel(loc, bs, cfg, 24, 7, s + 1, subcarrier_indices=idx).entries
        sinr = zf_sinrs(new @ tp.precoders[0].matrix, cfg.noise_variance)
        bad += tp.cqi_em > real_cqi_from_sinrs(sinr.reshape(1, -1), cfg.alpha)[0]
    assert 0.05 < bad / 1000 < 0.95


# -- episode mechanics -------------------------------------------------------------------------

class StaticEpisode(Episode):
    """Every link sees the same flat channel in every slot."""

    H = None

    def channel(self, user, bs, slot, idx=None):
        n = self.cfg.K if idx is None else len(idx)
        return np.broadcast_to(self.H[bs], (n,) + self.H[bs].shape).copy()


def _static(tiny_cfg, tiny_net, tiny_map, scale=1.0, **over):
    cfg = tiny_cfg.replace(**over)
    ep = StaticEpisode(cfg, tiny_net, tiny_map)
    r = np.random.default_rng(8)
    ep.H = [scale * 1e-3 * (r.standard_normal((4, 16)) + 1j * r.standard_normal((4, 16))) for _ in range(cfg.M)]
    return ep


def test_static_channel_delivers_map_rate(tiny_cfg, tiny_net, tiny_map):
    ep = _static(tiny_cfg, tiny_net, tiny_map)
    phy = phy_config(tiny_net)
    tp = derive_params([[np.broadcast_to(ep.H[0], (12, 4, 16))]], phy, mask=1)
    assert tp.cqi_em >= 1
    segs = resource_map({0: {1: 5}}, tiny_cfg.K)
    d = Decision(0, 0, LIGHT, {0: {1: 5}}, {(0, 1): tp}, segs, map_energy(segs, 1.0))
    bits, bad, energy = ep.transmit(d, 0)
    assert not bad.any()
    assert bits[0] == int(np.floor(tp.rate_per_subcarrier * 5 * SLOT_SECONDS + 1e-9))
    assert energy[0] == 5.0


def test_bad_cqi_gives_zero(tiny_cfg, tiny_net, tiny_map):
    strong = _static(tiny_cfg, tiny_net, tiny_map)
    tp = derive_params([[np.broadcast_to(strong.H[0], (12, 4, 16))]], phy_config(tiny_net), mask=1)
    weak = _static(tiny_cfg, tiny_net, tiny_map, scale=1e-3)
    segs = resource_map({0: {1: 3}, 1: {1: 2}}, tiny_cfg.K)
    d = Decision(0, 0, LIGHT, {0: {1: 3}, 1: {1: 2}}, {(0, 1): tp, (1, 1): tp}, segs, 5.0)
    bits, bad, _ = weak.transmit(d, 0)
    assert bits.sum() == 0 and bad[0] and bad[1] and not bad[2]
    bits, bad, energy = weak.transmit(None, 0)
    assert bits.sum() == 0 and not bad.any() and energy.sum() == 0


def test_activation_delay_and_startup(tiny_cfg, tiny_net, tiny_map):
    cfg = tiny_cfg.replace(d1=2, d2=3, d3=3, T_rp=3, T_sc=10, episode_length=20, seed=4)
    ep = Episode(cfg, tiny_net, tiny_map)
    for t in range(20):
        rows = ep.step()
        if t < 16:
            # first decision is made at slot 10 (no report is old enough at slot 0)
            assert ep.active is None and sum(r.delivered for r in rows) == 0
    assert [d.made_slot for d in ep.decisions] == [10]
    d = ep.decisions[0]
    assert d.active_slot == 16 and d.report_slot == 6 and ep.active is d


def test_zero_delay_decision_used_same_slot(tiny_cfg, tiny_net, tiny_map):
    cfg = tiny_cfg.replace(d1=0, d2=0, d3=0, T_rp=1, T_sc=1, episode_length=5, mode="independent")
    ep = Episode(cfg, tiny_net, tiny_map)
    for t in range(5):
        ep.step()
        assert ep.active is ep.decisions[-1] and ep.active.made_slot == t


def test_zero_arrivals(tiny_cfg, tiny_net, tiny_map):
    res = run_episode(tiny_cfg.replace(arrival_mean_bits=0.0, episode_length=15), tiny_net, tiny_map)
    assert res.V == 1.0 and res.energy_mw == 0 and res.arrived == 0


def test_overload_is_always_heavy(tiny_cfg, tiny_net, tiny_map):
    top = max(tp.rate_per_subcarrier for tp in tiny_map.entries.values())
    per_slot = 2 * tiny_cfg.K * top * SLOT_SECONDS
    res = run_episode(tiny_cfg.replace(arrival_mean_bits=per_slot, episode_length=12), tiny_net, tiny_map)
    assert res.decisions and res.heavy_fraction == 1.0
    assert all(load == HEAVY and solver == "greedy" for _, load, solver in res.dispatch)


@pytest.mark.parametrize("scheme,mode,arrival", [(FEEDBACK_FREE, "consecutive", 150.0),
                                                 (PMI, "independent", 300.0),
                                                 (OPTIMAL, "consecutive", 600.0)])
def test_episode_invariants(tiny_cfg, tiny_net, tiny_map, scheme, mode, arrival):
    cfg = tiny_cfg.replace(tx_scheme=scheme, mode=mode, arrival_mean_bits=arrival, seed=9,
                           d1=1, d2=1, d3=1, T_rp=2, T_sc=3, episode_length=24)
    ep = Episode(cfg, tiny_net, tiny_map)
    for _ in range(cfg.episode_length):
        rows = ep.step()
        live = ep.active
        e = sum(r.energy_mw for r in rows)
        if live is None:
            assert e == 0
        else:
            # energy identity: slot energy = p x active (BS, subcarrier) pairs of the allocation
            ref = cfg.p_mw * sum(bin(m).count("1") * c for per in live.allocation.values() for m, c in per.items())
            assert e == pytest.approx(ref) and live.energy == pytest.approx(ref)
            assert_no_double_booking(live.segments, cfg.K)
        assert all(r.buffer >= 0 for r in rows)
    res = ep.run()
    assert res.arrived == res.delivered + res.residual
    assert 0 <= res.V <= 1 and 0 <= res.bad_cqi_ratio <= 1
    assert res.heavy_fraction + res.light_fraction == pytest.approx(1.0)
    for d, (slot, load, solver) in zip(res.decisions, res.dispatch):
        assert slot == d.made_slot and load == d.load_class
        assert solver == ("greedy" if load == HEAVY else "tsra")
        assert slot - d.report_slot >= cfg.d1
        if load == LIGHT and d.allocation:
            assert d.solver_proven is not None
        if load == HEAVY:
            assert all(set(per) <= {3} for per in d.allocation.values())


def test_episode_deterministic(tiny_cfg, tiny_net, tiny_map):
    cfg = tiny_cfg.replace(episode_length=12, seed=21)
    a, b = run_episode(cfg, tiny_net, tiny_map), run_episode(cfg, tiny_net, tiny_map)
    assert [(r.delivered, r.buffer) for r in a.records] == [(r.delivered, r.buffer) for r in b.records]


def test_mismatched_network_rejected(tiny_cfg, tiny_net, tiny_map):
    with pytest.raises(ConfigError):
        Episode(tiny_cfg.replace(M=3), tiny_net, tiny_map)


# -- outputs ------------------------------------------------------------------------------------

def test_csv_and_manifest(tmp_path, tiny_cfg, tiny_net, tiny_map):
    cfg = tiny_cfg.replace(episode_length=6)
    res = run_episode(cfg, tiny_net, tiny_map)
    write_episode_csv(tmp_path / episode_csv_name(0), res.records)
    write_aggregate_csv(tmp_path / "aggregate.csv", [aggregate_row(res, cfg)])
    with open(tmp_path / episode_csv_name(0)) as f:
        rows = list(csv.reader(f))
    assert rows[0] == SLOT_COLUMNS and len(rows) == 1 + cfg.N * cfg.episode_length
    write_manifest(tmp_path / "manifest.json", {"sim": {"K": cfg.K}}, [0],
                   [episode_csv_name(0), "aggregate.csv"], "abc")
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["seeds"] == [0] and set(man["outputs"]) == {episode_csv_name(0), "aggregate.csv"}
    assert len(man["config_sha256"]) == 64 and "numpy" in man["versions"]
