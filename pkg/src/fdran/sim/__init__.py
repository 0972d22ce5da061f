from .baselines import FEEDBACK_FREE, OPTIMAL, PMI, baseline_params, codebook, coop_masks
from .config import NetworkConfig, PRESETS, SimConfig
from .engine import (Episode, EpisodeResult, build_network_map, classify_load, demand_from_buffer,
                     run_episode)
from .resources import Segment, nested_segments, per_bs_counts, resource_map

__all__ = [
    "FEEDBACK_FREE", "OPTIMAL", "PMI", "baseline_params", "codebook", "coop_masks", "NetworkConfig",
    "PRESETS", "SimConfig", "Episode", "EpisodeResult", "build_network_map", "classify_load",
    "demand_from_buffer", "run_episode", "Segment", "nested_segments", "per_bs_counts", "resource_map",
]
