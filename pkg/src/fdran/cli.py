"""Command-line entry point: build-map, schedule, simulate, verify."""

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigError, FairnessInfeasible, FdranError, FormatError, PumpFailed
from .ffmap import load_map, save_map
from .heavy import UserDemand, greedy_schedule
from .ilp import LightUser, build_ilp, counts_from_assignment
from .sim.engine import build_network_map, classify_load, grid_spec, phy_config, run_episode
from .sim.output import (aggregate_row, episode_csv_name, file_sha256, write_aggregate_csv,
                         write_episode_csv, write_manifest)
from .sim.resources import resource_map
from .tsra import tsra

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3, 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", choices=["paper-3bs", "tiny"], help="start from a named preset")
    p.add_argument("--seed", type=int, help="base seed (episodes use seed, seed+1, ...)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fdran", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-map", help="build the location-to-parameter map")
    _common(p)
    p.add_argument("--map", help="output map file (default <out>/map_K<K>.bin)")

    p = sub.add_parser("schedule", help="solve one scheduling instance")
    p.add_argument("mode", choices=["heavy", "light"])
    p.add_argument("instance", help="JSON-lines instance file")
    p.add_argument("--out", default=None, help="directory for allocation and resource map CSVs")
    p.add_argument("--force", action="store_true", help="run light mode even on a heavy-load instance")
    p.add_argument("--time-limit-ms", type=float, default=None)
    p.add_argument("--node-limit", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)

    for alias, mode in (("schedule-heavy", "heavy"), ("schedule-light", "light")):
        p = sub.add_parser(alias, help=f"same as 'schedule {mode}'")
        p.set_defaults(mode=mode)
        p.add_argument("instance")
        p.add_argument("--out", default=None)
        p.add_argument("--force", action="store_true")
        p.add_argument("--time-limit-ms", type=float, default=None)
        p.add_argument("--node-limit", type=int, default=None)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="run simulation episodes")
    _common(p)
    p.add_argument("--episodes", type=int, help="number of episodes")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--time-limit-ms", type=float, default=None, help="light-load solver budget per event")
    p.add_argument("--node-limit", type=int, default=None, help="branch-and-cut node limit per event")
    p.add_argument("--map", help="prebuilt map file")
    p.add_argument("--figures", action="store_true", help="also render PNG figures next to the CSVs")

    p = sub.add_parser("verify", help="check the schedulers against brute-force oracles")
    p.add_argument("--cases", type=int, default=50)
    p.add_argument("--max-n", type=int, default=3)
    p.add_argument("--max-k", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    return parser


# -- build-map -------------------------------------------------------------------

def _run_config(args, extra: Optional[dict] = None) -> RunConfig:
    overrides = dict(extra or {})
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    rc = load_config(args.config, args.preset, overrides)
    if args.out:
        rc.out = args.out
    return rc


def cmd_build_map(args) -> int:
    rc = _run_config(args)
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    path = Path(args.map) if args.map else out / f"map_K{rc.sim.K}.bin"
    t0 = time.perf_counter()
    m = build_network_map(rc.network, rc.sim.K)
    save_map(m, path)
    print(f"map: {path} ({m.grid.n_cells} cells x {2 ** m.n_bs - 1} coop sets, "
          f"{time.perf_counter() - t0:.1f} s, sha256 {file_sha256(path)[:16]})")
    print("mask,members,rate_p10,rate_p50,rate_p90,cqi_p50,layers_p50")
    for mask in range(1, 2 ** m.n_bs):
        tps = [m.entries[(c, mask)] for c in range(m.grid.n_cells)]
        r = np.array([t.rate_per_subcarrier for t in tps])
        mem = "+".join(str(b) for b in range(m.n_bs) if mask >> b & 1)
        print(f"{mask},{mem},{np.percentile(r, 10):.0f},{np.percentile(r, 50):.0f},{np.percentile(r, 90):.0f},"
              f"{np.median([t.cqi_em for t in tps]):.0f},{np.median([t.layers for t in tps]):.0f}")
    return EXIT_OK


# -- schedule -----------------------------------------------------------------------

def read_instance(path):
    """Header (optional) plus one user object per line."""
    header = {"K": 144, "p_mw": 1.0, "eta_min": 0.0, "M": None, "lam": 1000.0}
    users = []
    try:
        lines = Path(path).read_text().splitlines()
    except FileNotFoundError:
        raise ConfigError(f"instance file {path} not found")
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{n}: {exc}")
        if "network" in obj:
            net = obj["network"]
            bad = sorted(set(net) - set(header))
            if bad:
                raise ConfigError(f"{path}:{n}: unknown network keys {bad}")
            header.update(net)
            continue
        bad = sorted(set(obj) - {"user_id", "weight", "demand_rate", "rates", "rate_per_subcarrier"})
        if bad:
            raise ConfigError(f"{path}:{n}: unknown user keys {bad}")
        if "user_id" not in obj or "demand_rate" not in obj:
            raise FormatError(f"{path}:{n}: user_id and demand_rate are required")
        rates = {int(k): float(v) for k, v in obj.get("rates", {}).items()}
        users.append({"user_id": int(obj["user_id"]), "weight": float(obj.get("weight", 1.0)),
                      "demand_rate": float(obj["demand_rate"]), "rates": rates,
                      "rate_per_subcarrier": obj.get("rate_per_subcarrier")})
    if not users:
        raise FormatError(f"{path}: no users")
    if header["M"] is None:
        header["M"] = max((max(u["rates"]).bit_length() for u in users if u["rates"]), default=1)
    return header, users


def _full_rate(u, M):
    if u["rate_per_subcarrier"] is not None:
        return float(u["rate_per_subcarrier"])
    full = (1 << M) - 1
    if full not in u["rates"]:
        raise FormatError(f"user {u['user_id']} has no rate for the full coop set")
    return u["rates"][full]


def _write_allocation(out: Optional[str], allocation, K, energy_p, extra_cols=None):
    if out is None:
        return
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "allocation.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["user_id", "mask", "subcarriers"])
        for uid in sorted(allocation):
            for mask, c in sorted(allocation[uid].items()):
                w.writerow([uid, mask, c])
    with open(d / "resource_map.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["subcarrier", "user_id", "mask"])
        for seg in resource_map(allocation, K):
            for k in seg.indices:
                w.writerow([k, seg.user_id, seg.mask])


def cmd_schedule(args) -> int:
    header, raw = read_instance(args.instance)
    K, M = int(header["K"]), int(header["M"])
    if args.mode == "heavy":
        total_w = sum(u["weight"] for u in raw)
        users = [UserDemand(u["user_id"], u["weight"] / total_w, u["demand_rate"], _full_rate(u, M)) for u in raw]
        try:
            alloc = greedy_schedule(users, K, float(header["eta_min"]))
        except FairnessInfeasible as exc:
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_INFEASIBLE
        full = (1 << M) - 1
        allocation = {uid: {full: c} for uid, c in alloc.counts.items() if c > 0}
        _write_allocation(args.out, allocation, K, header["p_mw"])
        print(f"V = {alloc.value:.9g}")
        for uid in sorted(alloc.counts):
            print(f"user {uid}: {alloc.counts[uid]} subcarriers, eta {alloc.eta[uid]:.6g}")
        return EXIT_OK
    users = [LightUser(u["user_id"], u["demand_rate"], u["rates"], u["weight"]) for u in raw]
    load = classify_load({u.user_id: u.demand_rate for u in users if u.demand_rate > 0},
                         {u["user_id"]: _full_rate(u, M) for u in raw}, K)
    if load != "light" and not args.force:
        print("instance is heavy-load; use 'schedule heavy' or pass --force", file=sys.stderr)
        return EXIT_INFEASIBLE
    model = build_ilp([u for u in users if u.demand_rate > 0], K, float(header["p_mw"]),
                      max(float(header["lam"]), K), M=M)
    tl = None if args.time_limit_ms is None else args.time_limit_ms / 1000.0
    try:
        res = tsra(model, time_limit=tl, node_limit=args.node_limit, seed=args.seed)
    except PumpFailed as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    allocation = {u: c for u, c in counts_from_assignment(model, res.assignment).items() if c}
    _write_allocation(args.out, allocation, K, header["p_mw"])
    print(f"e* = {res.energy:.9g}")
    print(f"stage-1 energy = {res.stage1_energy:.9g}")
    print(f"proven optimal = {res.proven_optimal}, nodes = {res.nodes}, lower bound = {res.lower_bound:.9g}")
    for uid in sorted(allocation):
        parts = ", ".join(f"set {m}: {c}" for m, c in sorted(allocation[uid].items()))
        print(f"user {uid}: {parts}")
    return EXIT_OK if res.proven_optimal else EXIT_LIMIT


# -- simulate -------------------------------------------------------------------------

def _episode_job(payload):
    cfg, net, rate_map, out, figures = payload
    res = run_episode(cfg, net, rate_map)
    write_episode_csv(Path(out) / episode_csv_name(cfg.seed), res.records)
    if figures:
        from .report import render_episode
        render_episode(Path(out) / f"episode_seed{cfg.seed:06d}.png", res.records,
                       f"seed {cfg.seed}, {cfg.tx_scheme}, {cfg.coop}")
    res.records = []  # already on disk; keep the return payload small
    return res


def _load_or_build_map(rc: RunConfig, path: Optional[str], out: Path):
    if path is None:
        path = rc.map_path
    if path is not None:
        m = load_map(path)
        if (m.grid != grid_spec(rc.network) or m.cfg != phy_config(rc.network)
                or not np.allclose(m.bs_positions, rc.network.bs_positions)
                or m.seed != rc.network.map_seed or m.samples != rc.network.map_samples):
            raise ConfigError(f"map {path} was built for a different network configuration")
        return m, path
    cached = out / f"map_K{rc.sim.K}.bin"
    if cached.exists():
        try:
            return _load_or_build_map(rc, str(cached), out)
        except (ConfigError, FormatError):
            pass
    m = build_network_map(rc.network, rc.sim.K)
    save_map(m, cached)
    return m, str(cached)


def cmd_simulate(args) -> int:
    overrides = {}
    if args.time_limit_ms is not None:
        overrides["time_limit_ms"] = args.time_limit_ms
    if args.node_limit is not None:
        overrides["node_limit"] = args.node_limit
    rc = _run_config(args, overrides)
    if args.episodes is not None:
        if args.episodes < 1:
            raise ConfigError("--episodes must be >= 1")
        rc.episodes = args.episodes
        rc.seeds = None
    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    rate_map, map_path = _load_or_build_map(rc, args.map, out)
    seeds = rc.seed_list()
    jobs = [(rc.sim.replace(seed=s), rc.network, rate_map, str(out), args.figures) for s in seeds]
    t0 = time.perf_counter()
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_episode_job, jobs))
    else:
        results = [_episode_job(j) for j in jobs]
    rows = [aggregate_row(r, rc.sim) for r in results]
    write_aggregate_csv(out / "aggregate.csv", rows)
    outputs = [episode_csv_name(s) for s in seeds] + ["aggregate.csv"]
    if args.figures:
        from .report import render_aggregate
        render_aggregate(out / "aggregate.png", results)
    write_manifest(out / "manifest.json", rc.to_payload(), seeds, outputs, file_sha256(map_path))
    V = np.mean([r.V for r in results])
    print(f"{len(results)} episodes in {time.perf_counter() - t0:.1f} s; mean V {V:.4f}; "
          f"mean energy {np.mean([r.energy_mw for r in results]):.1f} mW; "
          f"heavy fraction {np.mean([r.heavy_fraction for r in results]):.3f}")
    print(f"outputs in {out}")
    return EXIT_OK


# -- verify ------------------------------------------------------------------------------

def cmd_verify(args, greedy=greedy_schedule) -> int:
    from .instances import random_heavy, random_light
    from .oracles import heavy_bruteforce, light_bruteforce
    rng = np.random.default_rng(args.seed)
    rows = []
    ok_h = 0
    for i in range(args.cases):
        users, K = random_heavy(rng, args.max_n, min(args.max_k * 2, 12))
        eta = 0.1 if i % 2 else 0.0
        best = heavy_bruteforce(users, K, eta)
        try:
            got = greedy(users, K, eta).value
        except FairnessInfeasible:
            got = None
        ok_h += (best is None and got is None) or (best is not None and got is not None and abs(best - got) <= 1e-9)
    rows.append(("greedy vs enumeration", ok_h, args.cases))
    ok_l = 0
    for i in range(args.cases):
        M = 2 + i % 2
        users, K = random_light(rng, M, args.max_n, args.max_k)
        model = build_ilp(users, K, 1.0, 1000.0, M=M)
        res = tsra(model, seed=i)
        best = light_bruteforce(users, M, K)
        ok_l += res.proven_optimal and best is not None and abs(res.energy - best) <= 1e-9
    rows.append(("tsra vs enumeration", ok_l, args.cases))
    print(f"{'suite':<24}{'passed':>8}{'cases':>8}  result")
    for name, ok, n in rows:
        print(f"{name:<24}{ok:>8}{n:>8}  {'PASS' if ok == n else 'FAIL'}")
    return EXIT_OK if all(ok == n for _, ok, n in rows) else EXIT_FAIL


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    handlers = {"build-map": cmd_build_map, "schedule": cmd_schedule, "schedule-heavy": cmd_schedule,
                "schedule-light": cmd_schedule, "simulate": cmd_simulate, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FairnessInfeasible, PumpFailed) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FdranError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
