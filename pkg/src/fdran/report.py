"""Figures rendered next to simulation CSVs."""

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def render_episode(path, records, title: str = "") -> None:
    """Per-slot delivered vs arrived bits and energy of one episode."""
    slots = sorted({r.slot for r in records})
    arrived = np.zeros(len(slots))
    delivered = np.zeros(len(slots))
    energy = np.zeros(len(slots))
    index = {s: i for i, s in enumerate(slots)}
    for r in records:
        i = index[r.slot]
        arrived[i] += r.arrived
        delivered[i] += r.delivered
        energy[i] += r.energy_mw
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
    a1.plot(slots, arrived, label="arrived")
    a1.plot(slots, delivered, label="delivered")
    a1.set_ylabel("bits")
    a1.legend()
    a2.step(slots, energy, where="post")
    a2.set_ylabel("energy (mW)")
    a2.set_xlabel("slot")
    if title:
        a1.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_aggregate(path, results: Sequence) -> None:
    """Histogram of episode V and bad-CQI ratio over a sweep."""
    V = [r.V for r in results]
    bad = [r.bad_cqi_ratio for r in results]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
    a1.hist(V, bins=20, range=(0, 1))
    a1.set_xlabel("weighted satisfaction V")
    a2.hist(bad, bins=20, range=(0, 1))
    a2.set_xlabel("bad-CQI ratio")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
