"""Scenario configuration: JSON documents, validation, and shipped presets.

Top-level fields (all optional except ``nodes``)::

    name, rng_seed, slot_ms, total_slots, beacon_period_slots,
    seed_rotation_slots, t_max_offset_ms, max_missed_beacons,
    channel_plan {channel_count, base_frequency_mhz, channel_width_mhz},
    interference {name, per_packet_loss_prob, bit_error_prob,
                  noisy_channels, noisy_channel_loss_prob},
    jammer {mode, jammed_channels_per_slot, target_channel, cycle_slots} | null,
    eavesdropper {monitored_channels} | null,
    replayer {start_slot, interval_slots, channel_mode} | null,
    latency {propagation_ms, processing_ms, data_rate_kbps},
    keys {payload_key, master_key, hop_seed}   (hex; derived from rng_seed if absent),
    nodes [{address, role, strategy, fixed_channel, fhss_period, traffic,
            drift_rate, queue_capacity, initial_offset_ms, force_desync_at}]
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from ..crypto import AesKey
from ..errors import ConfigError
from ..hopping import ChannelPlan, HopSeed, InvalidChannelPlan
from ..medium import Eavesdropper, InterferenceScenario, Jammer
from ..node import NodeConfig, ProtocolParams, Role, Strategy

DATA_RATES_KBPS = (250, 1000, 2000)
STRATEGY_FIELDS = ("strategy", "fixed_channel", "fhss_period")
PRESET_NAMES = (
    "low_interference",
    "medium_interference",
    "high_interference",
    "no_channel_hopping",
    "with_jamming",
    "dynamic_channel_hopping",
)


@dataclass(frozen=True)
class LatencyConstants:
    propagation_ms: float = 0.0033
    processing_ms: float = 2.0
    data_rate_kbps: int = 250


@dataclass(frozen=True)
class ReplayerConfig:
    start_slot: int = 0
    interval_slots: int = 10
    channel_mode: str = "CAPTURED"


@dataclass
class ScenarioConfig:
    nodes: list
    name: str = "scenario"
    rng_seed: int = 0
    slot_ms: float = 10.0
    total_slots: int = 10000
    plan: ChannelPlan = field(default_factory=ChannelPlan)
    interference: InterferenceScenario = field(default_factory=InterferenceScenario)
    jammer: Optional[dict] = None
    eavesdropper: Optional[dict] = None
    replayer: Optional[ReplayerConfig] = None
    beacon_period_slots: int = 100
    seed_rotation_slots: int = 4096
    t_max_offset_ms: float = 2.0
    max_missed_beacons: int = 4
    latency: LatencyConstants = field(default_factory=LatencyConstants)
    keys: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def strategy(self) -> Strategy:
        return self.nodes[0].strategy

    @property
    def master(self) -> NodeConfig:
        return next(n for n in self.nodes if n.role is Role.MASTER)

    def make_jammer(self) -> Optional[Jammer]:
        return Jammer(**self.jammer) if self.jammer else None

    def make_eavesdropper(self) -> Optional[Eavesdropper]:
        return Eavesdropper(**self.eavesdropper) if self.eavesdropper else None

    def protocol_params(self) -> ProtocolParams:
        keys = _derive_keys(self.rng_seed)
        keys.update(self.keys)
        try:
            payload_key = AesKey.from_hex(keys["payload_key"])
            master_key = AesKey.from_hex(keys["master_key"])
            seed = HopSeed(bytes.fromhex(keys["hop_seed"]))
        except ValueError as exc:
            raise ConfigError("keys", str(exc)) from None
        return ProtocolParams(
            plan=self.plan,
            payload_key=payload_key,
            master_key=master_key,
            initial_seed=seed,
            slot_ms=self.slot_ms,
            beacon_period_slots=self.beacon_period_slots,
            seed_rotation_slots=self.seed_rotation_slots,
            t_max_offset=self.t_max_offset_ms,
            max_missed_beacons=self.max_missed_beacons,
            master_drift=self.master.drift_rate,
        )


def _derive_keys(seed: int) -> dict:
    rng = np.random.default_rng([seed, 0x6D637363])
    return {name: rng.bytes(16).hex() for name in ("payload_key", "master_key", "hop_seed")}


def _section(cls, data, path):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError(path, "must be an object")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None
    except ConfigError as exc:
        raise ConfigError(f"{path}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


_TOP_LEVEL = {
    "name", "rng_seed", "slot_ms", "total_slots", "channel_plan", "interference", "jammer",
    "eavesdropper", "replayer", "beacon_period_slots", "seed_rotation_slots",
    "t_max_offset_ms", "max_missed_beacons", "latency", "keys", "nodes", "description",
}


def config_from_dict(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = set(data) - _TOP_LEVEL
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    raw_nodes = data.get("nodes")
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise ConfigError("nodes", "must be a non-empty list")
    nodes = [_section(NodeConfig, n, f"nodes[{i}]") for i, n in enumerate(raw_nodes)]

    try:
        plan = ChannelPlan(**data.get("channel_plan", {}))
    except (InvalidChannelPlan, TypeError) as exc:
        raise ConfigError("channel_plan", str(exc)) from None
    interference = dict(data.get("interference", {}))
    interference["noisy_channels"] = frozenset(interference.get("noisy_channels", ()))
    cfg = ScenarioConfig(
        nodes=nodes,
        name=data.get("name", "scenario"),
        rng_seed=data.get("rng_seed", 0),
        slot_ms=data.get("slot_ms", 10.0),
        total_slots=data.get("total_slots", 10000),
        plan=plan,
        interference=_section(InterferenceScenario, interference, "interference"),
        jammer=data.get("jammer"),
        eavesdropper=data.get("eavesdropper"),
        replayer=_section(ReplayerConfig, data.get("replayer"), "replayer"),
        beacon_period_slots=data.get("beacon_period_slots", 100),
        seed_rotation_slots=data.get("seed_rotation_slots", 4096),
        t_max_offset_ms=data.get("t_max_offset_ms", 2.0),
        max_missed_beacons=data.get("max_missed_beacons", 4),
        latency=_section(LatencyConstants, data.get("latency", {}), "latency"),
        keys=data.get("keys") or {},
        raw=copy.deepcopy(data),
    )
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    if not isinstance(cfg.total_slots, int) or cfg.total_slots < 1:
        raise ConfigError("total_slots", "must be an integer >= 1")
    if not cfg.slot_ms > 0:
        raise ConfigError("slot_ms", "must be positive")
    if not isinstance(cfg.rng_seed, int) or not 0 <= cfg.rng_seed < 1 << 64:
        raise ConfigError("rng_seed", "must be an unsigned 64-bit integer")
    if cfg.beacon_period_slots < 1:
        raise ConfigError("beacon_period_slots", "must be >= 1")
    if cfg.seed_rotation_slots < 1:
        raise ConfigError("seed_rotation_slots", "must be >= 1")
    if cfg.t_max_offset_ms < 0:
        raise ConfigError("t_max_offset_ms", "must be non-negative")
    if cfg.max_missed_beacons < 1:
        raise ConfigError("max_missed_beacons", "must be >= 1")
    if cfg.latency.data_rate_kbps not in DATA_RATES_KBPS:
        raise ConfigError("latency.data_rate_kbps", f"must be one of {DATA_RATES_KBPS}")
    masters = [n for n in cfg.nodes if n.role is Role.MASTER]
    if len(masters) != 1:
        raise ConfigError("nodes", f"exactly one MASTER required, found {len(masters)}")
    addresses = [n.address for n in cfg.nodes]
    if len(set(addresses)) != len(addresses):
        raise ConfigError("nodes", "node addresses must be unique")
    strategies = {n.strategy for n in cfg.nodes}
    if len(strategies) != 1:
        raise ConfigError("nodes", "all nodes must run the same strategy")
    n = cfg.plan.channel_count
    for i, node in enumerate(cfg.nodes):
        if node.fixed_channel is not None and not 0 <= node.fixed_channel < n:
            raise ConfigError(f"nodes[{i}].fixed_channel", "outside the channel plan")
    for name, cls in (("jammer", Jammer), ("eavesdropper", Eavesdropper)):
        section = getattr(cfg, name)
        if section is not None:
            obj = _section(cls, section, name)
            channels = getattr(obj, "monitored_channels", ()) or ()
            if any(not 0 <= c < n for c in channels):
                raise ConfigError(f"{name}.monitored_channels", "outside the channel plan")
            if getattr(obj, "target_channel", None) is not None and not 0 <= obj.target_channel < n:
                raise ConfigError(f"{name}.target_channel", "outside the channel plan")
    if cfg.replayer is not None:
        if cfg.eavesdropper is None:
            raise ConfigError("replayer", "needs an eavesdropper to capture frames")
        if cfg.replayer.interval_slots < 1:
            raise ConfigError("replayer.interval_slots", "must be >= 1")
        if cfg.replayer.channel_mode not in ("CAPTURED", "RANDOM"):
            raise ConfigError("replayer.channel_mode", "must be CAPTURED or RANDOM")
    try:
        cfg.protocol_params()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("keys", str(exc)) from None


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from None
    return config_from_dict(data)


def preset_path(name: str):
    return resources.files("mcsc.harness").joinpath("presets", f"{name}.json")


def load_preset(name: str) -> ScenarioConfig:
    if name not in PRESET_NAMES:
        raise ConfigError("preset", f"unknown preset {name!r}")
    return config_from_dict(json.loads(preset_path(name).read_text()))


def resolve_config(ref: str) -> ScenarioConfig:
    """Load a config file, or a shipped preset by name."""
    if ref in PRESET_NAMES and not Path(ref).exists():
        return load_preset(ref)
    return load_config(ref)


def strip_strategy(data: dict) -> dict:
    """Config document with the strategy-specific fields removed, for comparisons."""
    data = copy.deepcopy(data)
    data.pop("name", None)
    data.pop("description", None)
    for node in data.get("nodes", []):
        for key in STRATEGY_FIELDS:
            node.pop(key, None)
    return data
