"""Run configuration: a JSON file with ``preset``, ``sim``, ``network`` and
``run`` sections.  Unknown keys anywhere are rejected."""

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional

from .errors import ConfigError
from .sim.config import PRESETS, NetworkConfig, SimConfig, from_dict

TOP_KEYS = {"preset", "sim", "network", "run"}
RUN_KEYS = {"episodes", "seeds", "out", "map_path"}


@dataclass
class RunConfig:
    sim: SimConfig
    network: NetworkConfig
    preset: Optional[str] = None
    episodes: int = 1
    seeds: Optional[List[int]] = None
    out: str = "out"
    map_path: Optional[str] = None

    def seed_list(self) -> List[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return [self.sim.seed + i for i in range(self.episodes)]

    def to_payload(self) -> dict:
        return {"preset": self.preset, "sim": asdict(self.sim), "network": asdict(self.network),
                "run": {"episodes": self.episodes, "seeds": self.seeds}}


def load_config(path: Optional[str] = None, preset: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("config root must be an object")
    unknown = sorted(set(data) - TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    name = preset or data.get("preset")
    sim, net = {}, {}
    if name is not None:
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        sim.update(PRESETS[name]["sim"])
        net.update(PRESETS[name]["network"])
    for key, target in (("sim", sim), ("network", net)):
        section = data.get(key, {})
        if not isinstance(section, dict):
            raise ConfigError(f"{key} section must be an object")
        target.update(section)
    run = data.get("run", {})
    if not isinstance(run, dict):
        raise ConfigError("run section must be an object")
    bad = sorted(set(run) - RUN_KEYS)
    if bad:
        raise ConfigError(f"unknown run keys: {bad}")
    sim.update(overrides or {})
    sim_cfg = from_dict(SimConfig, sim)
    net_cfg = from_dict(NetworkConfig, net)
    if net_cfg.n_bs != sim_cfg.M:
        raise ConfigError(f"sim.M = {sim_cfg.M} but network lists {net_cfg.n_bs} BS positions")
    episodes = run.get("episodes", 1)
    if not isinstance(episodes, int) or episodes < 1:
        raise ConfigError("run.episodes must be a positive integer")
    seeds = run.get("seeds")
    if seeds is not None and (not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds)):
        raise ConfigError("run.seeds must be a list of integers")
    return RunConfig(sim_cfg, net_cfg, name, episodes, seeds, run.get("out", "out"), run.get("map_path"))
