from .channel import ChannelSet, gen_channel, path_gain
from .cqi import CQI_TABLE, CqiEntry, real_cqi
from .link import (PhyConfig, Precoder, achievable_rate, jt_effective_channel,
                   layer_sinr, real_cqi_from_sinrs, zf_equalizer, zf_sinrs)
from .miesm import bicm_capacity, effective_snr, inverse_bicm_capacity

__all__ = [
    "ChannelSet", "gen_channel", "path_gain", "CQI_TABLE", "CqiEntry", "real_cqi",
    "PhyConfig", "Precoder", "achievable_rate", "jt_effective_channel", "layer_sinr",
    "real_cqi_from_sinrs", "zf_equalizer", "zf_sinrs", "bicm_capacity", "effective_snr",
    "inverse_bicm_capacity",
]
