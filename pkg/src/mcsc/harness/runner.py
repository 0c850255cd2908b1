"""Scenario execution, event logs, and metric aggregation."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, UndefinedMetric
from ..medium import ATTACKER, Kind, Outcome, replay_inject, resolve_slot
from ..hopping import HopSchedule
from ..node import Role, make_node, node_tick, receive
from ..packet import FRAME_BYTES
from .config import ScenarioConfig, config_from_dict, strip_strategy
from .metrics import (
    NA,
    compute_error_rate,
    compute_latency,
    compute_pdr,
    compute_sync_overhead,
    compute_throughput,
    defense_percent,
    guarded,
)

log = logging.getLogger(__name__)

FRAME_BITS = FRAME_BYTES * 8
CSV_COLUMNS = (
    "scenario", "strategy", "sent", "received", "pdr_pct", "lat_ms", "t_trans_ms",
    "t_prop_ms", "t_queue_ms", "t_proc_ms", "throughput_kbps", "energy_mj", "error_pct",
    "sync_overhead_pct", "jam_defense_pct", "eavesdrop_defense_pct", "replay_defense_pct",
)


@dataclass
class ScenarioMetrics:
    scenario: str
    strategy: str
    packets_sent: int
    packets_received: int
    pdr_percent: object
    mean_latency_ms: object
    t_trans_ms: object
    t_prop_ms: object
    t_queue_ms: object
    t_proc_ms: object
    throughput_kbps: object
    energy_mj: dict
    error_rate_percent: object
    sync_overhead_percent: object
    attack_success_percents: dict
    counts: dict = field(default_factory=dict)

    @property
    def energy_total_mj(self) -> float:
        return sum(self.energy_mj.values())

    def defense(self, attack: str):
        value = self.attack_success_percents.get(attack, NA)
        return NA if value == NA else defense_percent(value)

    def csv_row(self) -> dict:
        return {
            "scenario": self.scenario,
            "strategy": self.strategy,
            "sent": self.packets_sent,
            "received": self.packets_received,
            "pdr_pct": self.pdr_percent,
            "lat_ms": self.mean_latency_ms,
            "t_trans_ms": self.t_trans_ms,
            "t_prop_ms": self.t_prop_ms,
            "t_queue_ms": self.t_queue_ms,
            "t_proc_ms": self.t_proc_ms,
            "throughput_kbps": self.throughput_kbps,
            "energy_mj": self.energy_total_mj,
            "error_pct": self.error_rate_percent,
            "sync_overhead_pct": self.sync_overhead_percent,
            "jam_defense_pct": self.defense("jam"),
            "eavesdrop_defense_pct": self.defense("eavesdrop"),
            "replay_defense_pct": self.defense("replay"),
        }


@dataclass
class RunResult:
    config: ScenarioConfig
    metrics: ScenarioMetrics
    records: list
    nodes: list
    eavesdropper: object = None
    jammer: object = None

    def log_text(self) -> str:
        return records_to_text(self.records)

    def csv_text(self) -> str:
        return metrics_csv([self.metrics])


def _fmt(value) -> str:
    if value == NA:
        return NA
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for m in rows:
        row = m.csv_row()
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def metrics_table(rows) -> str:
    lines = [[_fmt(m.csv_row()[c]) for c in CSV_COLUMNS] for m in rows]
    widths = [max(len(c), *(len(line[i]) for line in lines)) for i, c in enumerate(CSV_COLUMNS)]
    out = ["  ".join(c.ljust(w) for c, w in zip(CSV_COLUMNS, widths))]
    out += ["  ".join(v.rjust(w) for v, w in zip(line, widths)) for line in lines]
    return "\n".join(out) + "\n"


def records_to_text(records) -> str:
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)


def records_from_text(text: str) -> list:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def run_scenario(config: ScenarioConfig, seed=None) -> RunResult:
    """Run ``config.total_slots`` slots and aggregate metrics from the event log."""
    seed = config.rng_seed if seed is None else seed
    if not isinstance(seed, int) or not 0 <= seed < 1 << 64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    params = config.protocol_params()
    streams = np.random.SeedSequence(seed).spawn(len(config.nodes) + 2)
    medium_rng = np.random.default_rng(streams[0])
    attacker_rng = np.random.default_rng(streams[1])

    configs = sorted(config.nodes, key=lambda n: n.address)
    schedule = HopSchedule(params.plan, params.master_key, params.initial_seed,
                           params.seed_rotation_slots)
    nodes = [make_node(c, params, np.random.default_rng(s), schedule)
             for c, s in zip(configs, streams[2:])]
    sink = config.master.address
    jammer = config.make_jammer()
    eavesdropper = config.make_eavesdropper()
    replayer = config.replayer
    n = config.plan.channel_count

    records = [_header(config, seed)]
    inboxes = {}
    for slot in range(config.total_slots):
        txs = []
        for node in nodes:
            _, out = node_tick(node, slot, inboxes.get(node.address, ()))
            txs.extend(out)
        if (replayer is not None and slot >= replayer.start_slot
                and (slot - replayer.start_slot) % replayer.interval_slots == 0
                and eavesdropper.data_captures()):
            txs.append(replay_inject(eavesdropper.log, slot, attacker_rng, channel_count=n,
                                     channel_mode=replayer.channel_mode))
        listeners = {nd.address: nd.listen_channel for nd in nodes
                     if nd.listen_channel is not None}
        result = resolve_slot(txs, config.interference, medium_rng, listeners=listeners,
                              channel_count=n, jammer=jammer, eavesdropper=eavesdropper,
                              propagation_ms=config.latency.propagation_ms)
        inboxes = result.inboxes
        for ev in result.events:
            records.append({
                "type": "tx", "slot": ev.slot, "channel": ev.channel, "sender": ev.sender,
                "kind": ev.kind.value, "outcome": ev.outcome.value, "injected": ev.injected,
                "receivers": list(ev.receivers), "enqueued_slot": ev.enqueued_slot,
            })
    # frames sent in the last slot still need the receiving tick
    for node in nodes:
        receive(node, inboxes.get(node.address, ()))

    if eavesdropper is not None:
        for c in eavesdropper.data_captures():
            records.append({"type": "capture", "slot": c.slot, "channel": c.channel,
                            "sender": c.sender})
    for node in nodes:
        c = node.counters
        records.append({
            "type": "node", "address": node.address, "role": node.config.role.value,
            "energy_mj": c.energy_mj, "arrivals": c.arrivals, "sent": c.sent,
            "dropped": c.dropped, "queued": len(node.queue), "received": c.received,
            "replay_accepted": c.replay_accepted, "replay_rejected": c.replay_rejected,
            "desync_events": c.desync_events, "rejoins": c.rejoins,
            "sync_anomalies": c.sync_anomalies,
        })
    metrics = derive_metrics(records)
    _check_accounting(records, nodes, sink)
    return RunResult(config, metrics, records, nodes, eavesdropper, jammer)


def _header(config: ScenarioConfig, seed: int) -> dict:
    return {
        "type": "scenario", "name": config.name, "strategy": config.strategy.value,
        "seed": seed, "slot_ms": config.slot_ms, "total_slots": config.total_slots,
        "channel_count": config.plan.channel_count, "sink": config.master.address,
        "frame_bits": FRAME_BITS, "data_rate_kbps": config.latency.data_rate_kbps,
        "propagation_ms": config.latency.propagation_ms,
        "processing_ms": config.latency.processing_ms,
        "jammer": config.jammer is not None, "eavesdropper": config.eavesdropper is not None,
        "replayer": config.replayer is not None,
    }


def _percent(part: int, whole: int) -> float:
    if whole == 0:
        raise UndefinedMetric("attack rate with no attempts")
    return 100.0 * part / whole


def derive_metrics(records) -> ScenarioMetrics:
    """Rebuild every metric from an event log; the live run uses this too."""
    header = records[0]
    if header.get("type") != "scenario":
        raise ValueError("event log must start with a scenario record")
    sink, slot_ms = header["sink"], header["slot_ms"]
    t_trans = header["frame_bits"] / header["data_rate_kbps"]
    t_prop, t_proc = header["propagation_ms"], header["processing_ms"]

    sent = received = corrupt = beacons = jammed = 0
    queue_sum = 0.0
    captures = 0
    energy = {}
    replay_accepted = 0
    replay_attempts = 0
    for r in records[1:]:
        kind = r["type"]
        if kind == "tx":
            if r["kind"] == Kind.BEACON.value:
                beacons += 1
            elif r["injected"]:
                replay_attempts += 1
            else:
                sent += 1
                if r["outcome"] == Outcome.JAMMED.value:
                    jammed += 1
                if sink in r["receivers"]:
                    received += 1
                    corrupt += r["outcome"] == Outcome.CORRUPT.value
                    queue_sum += (r["slot"] - r["enqueued_slot"]) * slot_ms
        elif kind == "capture":
            captures += 1
        elif kind == "node":
            energy[r["address"]] = r["energy_mj"]
            replay_accepted += r["replay_accepted"]

    attacks = {}
    if header["jammer"]:
        attacks["jam"] = guarded(_percent, jammed, sent)
    if header["eavesdropper"]:
        attacks["eavesdrop"] = guarded(_percent, captures, sent)
    if header["replayer"]:
        attacks["replay"] = guarded(_percent, replay_accepted, replay_attempts)

    lat = guarded(compute_latency, (received * t_trans, received * t_prop, queue_sum,
                                    received * t_proc), received)
    lat_fields = [NA] * 5 if lat == NA else list(lat)
    elapsed_s = header["total_slots"] * slot_ms / 1000.0
    return ScenarioMetrics(
        scenario=header["name"],
        strategy=header["strategy"],
        packets_sent=sent,
        packets_received=received,
        pdr_percent=guarded(compute_pdr, received, sent),
        mean_latency_ms=lat_fields[0],
        t_trans_ms=lat_fields[1],
        t_prop_ms=lat_fields[2],
        t_queue_ms=lat_fields[3],
        t_proc_ms=lat_fields[4],
        throughput_kbps=guarded(compute_throughput, received * header["frame_bits"], elapsed_s),
        energy_mj=energy,
        error_rate_percent=guarded(compute_error_rate, corrupt, received),
        sync_overhead_percent=guarded(compute_sync_overhead, beacons, sent),
        attack_success_percents=attacks,
        counts={"beacons": beacons, "corrupt": corrupt, "jammed": jammed,
                "captures": captures, "replay_attempts": replay_attempts,
                "replay_accepted": replay_accepted},
    )


def _check_accounting(records, nodes, sink) -> None:
    by_outcome = {}
    for r in records:
        if r["type"] == "tx" and r["kind"] == Kind.DATA.value and not r["injected"]:
            key = "received" if sink in r["receivers"] else r["outcome"]
            by_outcome[key] = by_outcome.get(key, 0) + 1
    transmitted = sum(by_outcome.values())
    members = [nd for nd in nodes if nd.config.role is Role.MEMBER]
    arrivals = sum(nd.counters.arrivals for nd in members)
    dropped = sum(nd.counters.dropped for nd in members)
    queued = sum(len(nd.queue) for nd in members)
    sink_node = next(nd for nd in nodes if nd.address == sink)
    if arrivals != transmitted + dropped + queued:
        raise AssertionError(f"frame conservation broken: {arrivals} offered, "
                             f"{transmitted} sent, {dropped} dropped, {queued} queued")
    # a bit flip in the sequence field can hit the replay window
    heard = sink_node.counters.received + sink_node.counters.legit_rejected
    if by_outcome.get("received", 0) != heard:
        raise AssertionError("sink reception count disagrees with the medium log")
    log.debug("accounting ok: %s", by_outcome)


def compare_strategies(configs, seed=None) -> list:
    """Run configs that differ only in strategy; one metrics row per config."""
    if len(configs) < 2:
        raise ConfigError("configs", "need at least two configs to compare")
    base = strip_strategy(configs[0].raw)
    for i, cfg in enumerate(configs[1:], start=1):
        if strip_strategy(cfg.raw) != base:
            raise ConfigError(f"configs[{i}]", "differs from configs[0] in more than strategy")
    return [run_scenario(cfg, seed).metrics for cfg in configs]


def config_with(config: ScenarioConfig, **changes) -> ScenarioConfig:
    """Copy of ``config`` with top-level document fields replaced."""
    data = dict(config.raw)
    data.update(changes)
    return config_from_dict(data)


__all__ = [
    "ATTACKER", "CSV_COLUMNS", "RunResult", "ScenarioMetrics", "compare_strategies",
    "config_with", "derive_metrics", "metrics_csv", "metrics_table", "records_from_text",
    "records_to_text", "run_scenario",
]
