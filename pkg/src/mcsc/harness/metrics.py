"""Evaluation metrics: PDR, latency, throughput, sync overhead, error rate."""

from __future__ import annotations

from typing import NamedTuple

from ..errors import UndefinedMetric

NA = "NA"


def compute_pdr(received: int, sent: int) -> float:
    if sent == 0:
        raise UndefinedMetric("PDR with zero packets sent")
    if not 0 <= received <= sent:
        raise ValueError(f"need sent >= received >= 0, got received={received} sent={sent}")
    return 100.0 * received / sent


class Latency(NamedTuple):
    mean_ms: float
    t_trans_ms: float
    t_prop_ms: float
    t_queue_ms: float
    t_proc_ms: float


def compute_latency(components, count: int) -> Latency:
    """Mean latency from summed (transmission, propagation, queueing, processing) delays."""
    if count <= 0:
        raise UndefinedMetric("latency with no delivered frames")
    trans, prop, queue, proc = (c / count for c in components)
    return Latency(trans + prop + queue + proc, trans, prop, queue, proc)


def compute_throughput(delivered_bits: float, elapsed_seconds: float) -> float:
    """Delivered kilobits per second."""
    if elapsed_seconds <= 0:
        raise UndefinedMetric("throughput over zero elapsed time")
    return delivered_bits / elapsed_seconds / 1000.0


def compute_sync_overhead(beacon_transmissions: int, data_transmissions: int) -> float:
    total = beacon_transmissions + data_transmissions
    if total == 0:
        raise UndefinedMetric("sync overhead with no transmissions")
    return 100.0 * beacon_transmissions / total


def compute_error_rate(corrupt_delivered: int, delivered_total: int) -> float:
    if delivered_total == 0:
        raise UndefinedMetric("error rate with nothing delivered")
    if corrupt_delivered > delivered_total:
        raise ValueError("corrupt count exceeds delivered count")
    return 100.0 * corrupt_delivered / delivered_total


def defense_percent(attack_success_percent: float) -> float:
    return 100.0 - attack_success_percent


def guarded(fn, *args):
    """Call a metric, mapping an undefined result to the NA sentinel."""
    try:
        return fn(*args)
    except UndefinedMetric:
        return NA
