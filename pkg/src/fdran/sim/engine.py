"""Slot-level simulation of reporting, delayed scheduling and transmission.

Per slot, in order: arrivals join the buffers; every T_rp slots users report
location (and, for feedback schemes, channel state); every T_sc slots the
scheduler takes the newest report at least d1 slots old and computes a
decision that goes live d2 + d3 slots later; the live decision transmits on
this slot's channels; buffers lose what was delivered.
"""

import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import ConfigError, FairnessInfeasible
from ..ffmap import GridSpec, RateMap, TransmissionParams, build_map, members, training_subcarriers
from ..heavy import UserDemand, greedy_schedule
from ..ilp import LightUser, build_ilp, counts_from_assignment
from ..phy.channel import gen_channel
from ..phy.link import SLOT_SECONDS, PhyConfig, achievable_rate, real_cqi_from_sinrs, zf_sinrs
from ..tsra import tsra
from .baselines import FEEDBACK_FREE, baseline_params, coop_masks
from .config import NetworkConfig, SimConfig
from .resources import Segment, map_energy, resource_map

HEAVY, LIGHT, NONE = "heavy", "light", "none"
EPISODE_SLOT_BASE = 1 << 24


def phy_config(net: NetworkConfig) -> PhyConfig:
    return PhyConfig(n_tx=net.n_tx, n_rx=net.n_rx, noise_variance=net.noise_variance, alpha=net.alpha,
                     numerology=net.numerology, overhead=net.overhead)


def grid_spec(net: NetworkConfig) -> GridSpec:
    return GridSpec(net.grid_origin, net.grid_spacing, net.grid_nx, net.grid_ny)


def build_network_map(net: NetworkConfig, K: int) -> RateMap:
    return build_map(grid_spec(net), np.array(net.bs_positions), net.map_samples, phy_config(net),
                     net.map_seed, subcarriers=K, train_subcarriers=net.train_subcarriers)


def demand_from_buffer(buffer_bits: float, T_sc: int, slot_seconds: float = SLOT_SECONDS) -> float:
    """Rate that empties ``buffer_bits`` within one scheduling period."""
    if T_sc < 1:
        raise ValueError("T_sc must be >= 1")
    return buffer_bits / (T_sc * slot_seconds)


def required_subcarriers(demand: float, rate: float) -> Optional[int]:
    if demand <= 0:
        return 0
    if rate <= 0:
        return None
    q = demand / rate
    r = round(q)
    return int(r) if abs(q - r) <= 1e-9 * max(1.0, q) else math.ceil(q)


def classify_load(demands: Dict[int, float], full_rates: Dict[int, float], K: int) -> str:
    """Light iff every demand fits on the largest coop set within K subcarriers."""
    total = 0
    for uid, d in demands.items():
        need = required_subcarriers(d, full_rates.get(uid, 0.0))
        if need is None:
            return HEAVY
        total += need
    return LIGHT if total <= K else HEAVY


@dataclass
class Report:
    slot: int
    locations: np.ndarray
    csi: Optional[Dict[Tuple[int, int], np.ndarray]] = None  # (user, bs) -> (k, r, t)


@dataclass
class Decision:
    made_slot: int
    active_slot: int
    load_class: str
    allocation: Dict[int, Dict[int, int]]
    params: Dict[Tuple[int, int], TransmissionParams]
    segments: List[Segment]
    energy: float
    solver_proven: Optional[bool] = None
    report_slot: int = -1


@dataclass
class SlotRecord:
    slot: int
    user_id: int
    arrived: int
    delivered: int
    buffer: int
    bad_cqi: bool
    load_class: str
    energy_mw: float
    V_period: float = float("nan")


@dataclass
class EpisodeResult:
    seed: int
    records: List[SlotRecord]
    decisions: List[Decision]
    V: float
    energy_mw: float
    bad_cqi_ratio: float
    heavy_fraction: float
    light_fraction: float
    arrived: int
    delivered: int
    residual: int
    wall_time: float
    dispatch: List[Tuple[int, str, str]] = field(default_factory=list)


class Episode:
    """One seeded run of the slot loop; call ``run`` or ``step`` repeatedly."""

    def __init__(self, cfg: SimConfig, net: NetworkConfig, rate_map: RateMap,
                 locations: Optional[np.ndarray] = None):
        if net.n_bs != cfg.M or rate_map.n_bs != cfg.M:
            raise ConfigError(f"M={cfg.M} but the network has {net.n_bs} BSs")
        self.cfg, self.net, self.map = cfg, net, rate_map
        self.phy = phy_config(net)
        self.grid = grid_spec(net)
        self.bs = np.array(net.bs_positions)
        rng = np.random.default_rng([cfg.seed, 1])
        if locations is None:
            # users sit at map locations, as many per cell as needed when N exceeds the cells
            cells = rng.permutation(np.resize(np.arange(self.grid.n_cells), max(cfg.N, self.grid.n_cells)))
            locations = np.array([self.grid.cell_center(int(c)) for c in cells[:cfg.N]])
        self.locations = np.asarray(locations, dtype=float)
        self.means = cfg.arrival_mean_bits * rng.uniform(1 - cfg.arrival_spread, 1 + cfg.arrival_spread, cfg.N)
        self.arrival_rng = np.random.default_rng([cfg.seed, 2])
        self.weights = np.full(cfg.N, 1.0 / cfg.N)
        self.allowed = coop_masks(cfg.coop, cfg.M)
        self.max_mask = max(self.allowed, key=lambda m: (bin(m).count("1"), m))
        self.train_idx = training_subcarriers(cfg.K, net.train_subcarriers)
        self.slot_offset = EPISODE_SLOT_BASE * (cfg.seed + 1)
        self.buffers = np.zeros(cfg.N, dtype=np.int64)
        self.slot = 0
        self.reports: List[Report] = []
        self.pending: List[Decision] = []
        self.active: Optional[Decision] = None
        self.decisions: List[Decision] = []
        self.records: List[SlotRecord] = []
        self.dispatch: List[Tuple[int, str, str]] = []
        self.bad = 0
        self.transmissions = 0
        self.total_energy = 0.0
        self.period_start_buffer = None
        self.period_delivered = np.zeros(cfg.N, dtype=np.int64)
        self.period_values: List[float] = []
        self.slot_values: List[float] = []
        self._period_rows: List[SlotRecord] = []

    # -- channels ------------------------------------------------------------
    def channel(self, user: int, bs: int, slot: int, idx=None) -> np.ndarray:
        return gen_channel(self.locations[user], self.bs[bs], self.phy, self.cfg.K, self.net.map_seed,
                           self.slot_offset + slot, bs_id=bs, subcarrier_indices=idx).entries

    # -- scheduling ------------------------------------------------------------
    def _arrivals(self) -> np.ndarray:
        j = self.cfg.arrival_jitter
        draw = self.means * self.arrival_rng.uniform(1 - j, 1 + j, self.cfg.N)
        return np.round(draw).astype(np.int64)

    def _candidate_params(self, report: Report, user: int) -> Dict[int, TransmissionParams]:
        if self.cfg.tx_scheme == FEEDBACK_FREE:
            return {m: self.map.query(report.locations[user], m) for m in self.allowed}
        out = {}
        for m in self.allowed:
            chans = [report.csi[(user, b)] for b in members(m)]
            out[m] = baseline_params(self.cfg.tx_scheme, chans, self.phy, m)
        return out

    def _decide(self, slot: int, report: Report, arrivals: np.ndarray) -> Decision:
        cfg = self.cfg
        if cfg.mode == "consecutive":
            demand_bits = self.buffers.astype(float)
            demands = {u: demand_from_buffer(demand_bits[u], cfg.T_sc) for u in range(cfg.N)}
        else:
            demands = {u: float(arrivals[u]) / SLOT_SECONDS for u in range(cfg.N)}
        params = {}
        for u in range(cfg.N):
            for m, tp in self._candidate_params(report, u).items():
                params[(u, m)] = tp
        active = {u: d for u, d in demands.items() if d > 0}
        full = {u: params[(u, self.max_mask)].rate_per_subcarrier for u in active}
        load = classify_load(active, full, cfg.K)
        proven = None
        if load == HEAVY:
            users = [UserDemand(u, float(self.weights[u]), active[u], full[u]) for u in sorted(active) if full[u] > 0]
            try:
                alloc = greedy_schedule(users, cfg.K, cfg.eta_min)
            except FairnessInfeasible:
                alloc = greedy_schedule(users, cfg.K, 0.0)
            allocation = {u: {self.max_mask: c} for u, c in alloc.counts.items() if c > 0}
        else:
            light = [LightUser(u, active[u], {m: params[(u, m)].rate_per_subcarrier for m in self.allowed},
                               float(self.weights[u])) for u in sorted(active)]
            if light:
                model = build_ilp(light, cfg.K, cfg.p_mw, cfg.lam, M=cfg.M, allowed=self.allowed)
                tl = None if cfg.time_limit_ms is None else cfg.time_limit_ms / 1000.0
                res = tsra(model, time_limit=tl, node_limit=cfg.node_limit, n_flip=cfg.n_flip,
                           pump_max_iter=cfg.pump_max_iter, seed=cfg.seed * 100003 + slot)
                counts = counts_from_assignment(model, res.assignment)
                allocation = {u: c for u, c in counts.items() if c}
                proven = res.proven_optimal
            else:
                allocation = {}
        segs = resource_map(allocation, cfg.K)
        self.dispatch.append((slot, load, "greedy" if load == HEAVY else "tsra"))
        return Decision(slot, slot + cfg.d2 + cfg.d3, load, allocation, params, segs,
                        map_energy(segs, cfg.p_mw), proven, report.slot)

    # -- transmission ------------------------------------------------------------
    def transmit(self, decision: Optional[Decision], slot: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Bits each user can deliver this slot, bad-CQI flags and energy per user."""
        N = self.cfg.N
        bits = np.zeros(N, dtype=np.int64)
        bad = np.zeros(N, dtype=bool)
        energy = np.zeros(N)
        if decision is None:
            return bits, bad, energy
        for seg in decision.segments:
            tp = decision.params[(seg.user_id, seg.mask)]
            energy[seg.user_id] += self.cfg.p_mw * seg.size * seg.count
            idx = np.array(seg.indices)
            g = None
            for b, w in zip(members(seg.mask), tp.precoders):
                term = self.channel(seg.user_id, b, slot, idx) @ w.matrix
                g = term if g is None else g + term
            sinr = zf_sinrs(g, self.phy.noise_variance)
            cqi_re = int(real_cqi_from_sinrs(sinr.reshape(1, -1), self.phy.alpha)[0])
            if tp.cqi_em < 1 or tp.cqi_em > cqi_re:
                bad[seg.user_id] = True
                continue
            rate = achievable_rate(tp.layers, tp.cqi_em, cqi_re, seg.count, self.phy)
            bits[seg.user_id] += int(math.floor(rate * SLOT_SECONDS + 1e-9))
        return bits, bad, energy

    def step(self) -> List[SlotRecord]:
        cfg, t = self.cfg, self.slot
        arrivals = self._arrivals()
        self.buffers += arrivals
        if cfg.mode == "consecutive" and t % cfg.T_sc == 0:
            self._close_period()
            self.period_start_buffer = self.buffers.copy()
        if t % cfg.T_rp == 0:
            csi = None
            if cfg.tx_scheme != FEEDBACK_FREE:
                csi = {(u, b): self.channel(u, b, t, self.train_idx) for u in range(cfg.N) for b in range(cfg.M)}
            self.reports.append(Report(t, self.locations.copy(), csi))
        if t % cfg.T_sc == 0:
            usable = [r for r in self.reports if t - r.slot >= cfg.d1]
            if usable:
                d = self._decide(t, usable[-1], arrivals)
                self.decisions.append(d)
                self.pending.append(d)
            # reports older than the newest usable one are never needed again
            if len(usable) > 1:
                self.reports = [r for r in self.reports if r.slot >= usable[-1].slot]
        live = [d for d in self.pending if d.active_slot <= t]
        if live:
            self.active = live[-1]
            self.pending = [d for d in self.pending if d.active_slot > t]
        bits, bad, energy = self.transmit(self.active, t)
        delivered = np.minimum(bits, self.buffers)
        self.buffers -= delivered
        self.period_delivered += delivered
        if self.active is not None:
            users = {s.user_id for s in self.active.segments}
            self.transmissions += len(users)
            self.bad += int(bad.sum())
        self.total_energy += float(energy.sum())
        load = self.active.load_class if self.active is not None else NONE
        rows = [SlotRecord(t, u, int(arrivals[u]), int(delivered[u]), int(self.buffers[u]), bool(bad[u]),
                           load, float(energy[u])) for u in range(cfg.N)]
        if cfg.mode == "independent":
            v = self._weighted(delivered, arrivals)
            self.slot_values.append(v)
            for r in rows:
                r.V_period = v
        else:
            self._period_rows.extend(rows)
        self.records.extend(rows)
        self.slot += 1
        return rows

    def _weighted(self, delivered, reference) -> float:
        eta = np.where(reference > 0, np.minimum(1.0, delivered / np.maximum(reference, 1)), 1.0)
        return float(self.weights @ eta)

    def _close_period(self):
        if self.period_start_buffer is None:
            return
        v = self._weighted(self.period_delivered, self.period_start_buffer)
        self.period_values.append(v)
        for r in self._period_rows:
            r.V_period = v
        self._period_rows = []
        self.period_delivered = np.zeros(self.cfg.N, dtype=np.int64)

    def run(self) -> EpisodeResult:
        t0 = time.perf_counter()
        while self.slot < self.cfg.episode_length:
            self.step()
        if self.cfg.mode == "consecutive":
            self._close_period()
        values = self.period_values if self.cfg.mode == "consecutive" else self.slot_values
        V = float(np.mean(values)) if values else 1.0
        events = len(self.decisions)
        heavy = sum(d.load_class == HEAVY for d in self.decisions)
        arrived = sum(r.arrived for r in self.records)
        delivered = sum(r.delivered for r in self.records)
        return EpisodeResult(
            seed=self.cfg.seed, records=self.records, decisions=self.decisions, V=V,
            energy_mw=self.total_energy,
            bad_cqi_ratio=self.bad / self.transmissions if self.transmissions else 0.0,
            heavy_fraction=heavy / events if events else 0.0,
            light_fraction=(events - heavy) / events if events else 0.0,
            arrived=arrived, delivered=delivered, residual=int(self.buffers.sum()),
            wall_time=time.perf_counter() - t0, dispatch=self.dispatch)


def run_episode(cfg: SimConfig, net: NetworkConfig, rate_map: RateMap, locations=None) -> EpisodeResult:
    return Episode(cfg, net, rate_map, locations).run()
