"""Simulation and network configuration with strict validation."""

from dataclasses import asdict, dataclass, fields
from typing import Optional, Tuple

from ..errors import ConfigError
from .baselines import TX_SCHEMES

COOP_OPTIONS = ("single", "pair", "flexible")
MODES = ("consecutive", "independent")


@dataclass(frozen=True)
class SimConfig:
    d1: int = 2
    d2: int = 3
    d3: int = 3
    T_rp: int = 3
    T_sc: int = 10
    K: int = 144
    M: int = 3
    N: int = 10
    p_mw: float = 1.0
    eta_min: float = 0.1
    arrival_mean_bits: float = 300.0
    arrival_jitter: float = 0.2
    arrival_spread: float = 0.5
    episode_length: int = 100
    tx_scheme: str = "feedback-free"
    coop: str = "flexible"
    mode: str = "consecutive"
    seed: int = 0
    n_flip: int = 15
    lam: float = 1000.0
    node_limit: Optional[int] = 10000
    time_limit_ms: Optional[float] = None
    pump_max_iter: int = 200

    def __post_init__(self):
        for name in ("d1", "d2", "d3"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("T_rp", "T_sc", "K", "M", "N", "episode_length", "n_flip"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.p_mw <= 0:
            raise ConfigError("p_mw must be positive")
        if not 0 <= self.eta_min <= 1:
            raise ConfigError("eta_min must lie in [0, 1]")
        if self.arrival_mean_bits < 0:
            raise ConfigError("arrival_mean_bits must be >= 0")
        if not 0 <= self.arrival_jitter < 1 or not 0 <= self.arrival_spread < 1:
            raise ConfigError("arrival_jitter and arrival_spread must lie in [0, 1)")
        if self.tx_scheme not in TX_SCHEMES:
            raise ConfigError(f"tx_scheme must be one of {TX_SCHEMES}")
        if self.coop not in COOP_OPTIONS:
            raise ConfigError(f"coop must be one of {COOP_OPTIONS}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.lam < self.K:
            raise ConfigError("lam must be at least K")
        if self.node_limit is not None and self.node_limit < 0:
            raise ConfigError("node_limit must be >= 0")
        if self.time_limit_ms is not None and self.time_limit_ms < 0:
            raise ConfigError("time_limit_ms must be >= 0")

    def replace(self, **kw) -> "SimConfig":
        d = asdict(self)
        d.update(kw)
        return SimConfig(**d)


@dataclass(frozen=True)
class NetworkConfig:
    """Geometry, antenna setup and map-building parameters."""

    bs_positions: Tuple[Tuple[float, float, float], ...] = ((-20.0, -20.0, 10.0), (80.0, -20.0, 10.0),
                                                            (30.0, 80.0, 10.0))
    grid_origin: Tuple[float, float, float] = (0.0, 0.0, 1.5)
    grid_spacing: float = 10.0
    grid_nx: int = 6
    grid_ny: int = 6
    map_samples: int = 16
    map_seed: int = 7
    train_subcarriers: int = 12
    n_tx: int = 16
    n_rx: int = 4
    noise_variance: float = 1e-6
    alpha: float = 1.0
    numerology: int = 0
    overhead: float = 0.14

    def __post_init__(self):
        object.__setattr__(self, "bs_positions", tuple(tuple(float(c) for c in p) for p in self.bs_positions))
        object.__setattr__(self, "grid_origin", tuple(float(c) for c in self.grid_origin))
        if any(len(p) != 3 for p in self.bs_positions) or len(self.grid_origin) != 3:
            raise ConfigError("positions must have three coordinates")
        if not self.bs_positions:
            raise ConfigError("need at least one BS")
        if self.grid_nx < 1 or self.grid_ny < 1:
            raise ConfigError("grid must contain at least one cell")
        if self.grid_spacing <= 0:
            raise ConfigError("grid_spacing must be positive")
        if self.map_samples < 1 or self.train_subcarriers < 1:
            raise ConfigError("map_samples and train_subcarriers must be >= 1")
        if self.noise_variance <= 0:
            raise ConfigError("noise_variance must be positive")

    @property
    def n_bs(self) -> int:
        return len(self.bs_positions)


def from_dict(cls, data: dict):
    """Instantiate a config dataclass, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{cls.__name__} section must be an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {unknown}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


PRESETS = {
    "paper-3bs": {
        "sim": dict(d1=2, d2=3, d3=3, T_rp=3, T_sc=10, K=144, M=3, N=10, p_mw=1.0, eta_min=0.1,
                    n_flip=15, lam=1000.0, node_limit=10000, time_limit_ms=500.0, episode_length=100),
        "network": dict(),
    },
    "tiny": {
        "sim": dict(d1=0, d2=0, d3=0, T_rp=1, T_sc=1, K=24, M=2, N=3, p_mw=1.0, eta_min=0.1,
                    arrival_mean_bits=150.0, lam=1000.0, node_limit=2000, episode_length=20),
        "network": dict(bs_positions=((-15.0, 20.0, 10.0), (55.0, 20.0, 10.0)),
                        grid_spacing=10.0, grid_nx=4, grid_ny=4, map_samples=10),
    },
}
