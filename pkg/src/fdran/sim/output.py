"""CSV and manifest writers for simulation runs."""

import csv
import hashlib
import json
import platform
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .engine import EpisodeResult, SlotRecord

SLOT_COLUMNS = ["slot", "user_id", "arrived", "delivered", "buffer", "bad_cqi", "load_class",
                "energy_mw", "V_period"]
AGGREGATE_COLUMNS = ["seed", "tx_scheme", "coop", "mode", "V", "energy_mw", "bad_cqi_ratio",
                     "heavy_fraction", "light_fraction", "arrived", "delivered", "residual", "events"]


def episode_csv_name(seed: int) -> str:
    return f"episode_seed{seed:06d}.csv"


def write_episode_csv(path, records: Iterable[SlotRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SLOT_COLUMNS)
        for r in records:
            w.writerow([r.slot, r.user_id, r.arrived, r.delivered, r.buffer, int(r.bad_cqi), r.load_class,
                        f"{r.energy_mw:.6g}", f"{r.V_period:.9g}"])


def aggregate_row(res: EpisodeResult, cfg) -> list:
    return [res.seed, cfg.tx_scheme, cfg.coop, cfg.mode, f"{res.V:.9g}", f"{res.energy_mw:.6g}",
            f"{res.bad_cqi_ratio:.9g}", f"{res.heavy_fraction:.9g}", f"{res.light_fraction:.9g}",
            res.arrived, res.delivered, res.residual, len(res.decisions)]


def write_aggregate_csv(path, rows: Sequence[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(AGGREGATE_COLUMNS)
        for row in sorted(rows, key=lambda r: r[0]):
            w.writerow(row)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def write_manifest(path, payload: dict, seeds: List[int], outputs: List[str], map_hash: str) -> None:
    from .. import __version__
    manifest = {
        "config": payload,
        "config_sha256": config_hash(payload),
        "seeds": list(seeds),
        "map_sha256": map_hash,
        "outputs": {name: file_sha256(Path(path).parent / name) for name in outputs},
        "versions": {"fdran": __version__, "python": platform.python_version(), "numpy": np.__version__},
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
