"""Feedback-free multi-BS scheduling: location-based transmission maps, a
greedy heavy-load scheduler, an ILP-based light-load solver and a slot-level
simulator."""

__version__ = "0.1.0"
