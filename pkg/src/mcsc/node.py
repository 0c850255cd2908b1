"""Per-node protocol state machine, stepped once per simulator slot.

The master is the beacon source and the data sink. Members generate
traffic, listen only on beacon slots, and sit in standby otherwise. A node
that misses ``max_missed_beacons`` beacons in a row declares itself
desynchronized, stops transmitting, and camps on a random channel, drawing
a fresh one after every beacon interval until a beacon arrives.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

from .crypto import AesKey
from .errors import ConfigError
from .hopping import (
    ChannelPlan,
    HopSchedule,
    HopSeed,
    beacon_channel,
    fhss_channel,
    resync_channel,
)
from .medium import Delivery, Kind, Transmission
from .packet import (
    NotSynchronized,
    ReplayRejected,
    ReplayWindow,
    TxContext,
    build_frame,
    deserialize,
    open_frame,
    serialize,
)
from .timesync import (
    ClockModel,
    SyncSignal,
    SyncState,
    advance_clock,
    process_sync_signal,
)

# Supply currents (mA) and rails (V) of the nRF24L01+ radio and ATmega328P MCU.
RADIO_MA = {"TX": 11.3, "RX": 13.5, "STANDBY": 0.026}
MCU_ACTIVE_MA = 15.0
MCU_SLEEP_MA = 0.75
RADIO_V = 3.3
MCU_V = 5.0


class Role(str, enum.Enum):
    MASTER = "MASTER"
    MEMBER = "MEMBER"


class Strategy(str, enum.Enum):
    MCSC = "MCSC"
    SINGLE_CHANNEL_AES = "SINGLE_CHANNEL_AES"
    FHSS_BASELINE = "FHSS_BASELINE"


class RadioMode(str, enum.Enum):
    TX = "TX"
    RX = "RX"
    STANDBY = "STANDBY"


def energy_for_slot(mode: RadioMode, slot_ms: float) -> float:
    """Millijoules drawn by radio plus MCU over one slot."""
    mode = RadioMode(mode)
    if slot_ms < 0:
        raise ValueError("slot_ms must be non-negative")
    mcu_ma = MCU_SLEEP_MA if mode is RadioMode.STANDBY else MCU_ACTIVE_MA
    return (RADIO_MA[mode.value] * RADIO_V + mcu_ma * MCU_V) * slot_ms / 1000.0


@dataclass(frozen=True)
class NodeConfig:
    address: int
    role: Role = Role.MEMBER
    strategy: Strategy = Strategy.MCSC
    fixed_channel: Optional[int] = None
    fhss_period: Optional[int] = None
    traffic: float = 0.0
    drift_rate: float = 0.0
    queue_capacity: int = 32
    initial_offset_ms: float = 0.0
    force_desync_at: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "force_desync_at", tuple(self.force_desync_at))
        if not 0 <= self.address < 1 << 16:
            raise ConfigError("address", f"must fit 16 bits, got {self.address}")
        if self.traffic < 0:
            raise ConfigError("traffic", "must be non-negative")
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity", "must be >= 1")
        if self.drift_rate <= -1:
            raise ConfigError("drift_rate", "must exceed -1")
        single = self.strategy is Strategy.SINGLE_CHANNEL_AES
        fhss = self.strategy is Strategy.FHSS_BASELINE
        if single != (self.fixed_channel is not None):
            raise ConfigError("fixed_channel", "required for SINGLE_CHANNEL_AES and only there")
        if fhss != (self.fhss_period is not None):
            raise ConfigError("fhss_period", "required for FHSS_BASELINE and only there")
        if fhss and self.fhss_period < 1:
            raise ConfigError("fhss_period", "must be >= 1")
        if self.role is Role.MASTER and self.traffic:
            raise ConfigError("traffic", "the master is the sink and generates no traffic")


@dataclass(frozen=True)
class ProtocolParams:
    """Parameters every node of one scenario shares."""

    plan: ChannelPlan
    payload_key: AesKey
    master_key: AesKey
    initial_seed: HopSeed
    slot_ms: float = 10.0
    beacon_period_slots: int = 100
    seed_rotation_slots: int = 4096
    t_max_offset: float = 2.0
    max_missed_beacons: int = 4
    master_drift: float = 0.0

    @property
    def t_sync(self) -> float:
        return self.beacon_period_slots * self.slot_ms

    @property
    def true_slot_ms(self) -> float:
        # the slot grid follows the master's clock
        return self.slot_ms / (1.0 + self.master_drift)


@dataclass
class NodeCounters:
    arrivals: int = 0
    sent: int = 0
    dropped: int = 0
    received: int = 0
    corrupt_received: int = 0
    replay_rejected: int = 0
    replay_accepted: int = 0
    legit_rejected: int = 0
    beacons_sent: int = 0
    beacons_received: int = 0
    beacons_missed: int = 0
    corrupt_beacons: int = 0
    sync_anomalies: int = 0
    desync_events: int = 0
    rejoins: int = 0
    seed_rotations: int = 0
    sequence_wraps: int = 0
    energy_mj: float = 0.0
    slots_tx: int = 0
    slots_rx: int = 0
    slots_standby: int = 0


@dataclass
class NodeState:
    config: NodeConfig
    params: ProtocolParams
    schedule: HopSchedule
    clock: ClockModel
    sync: SyncState
    tx: TxContext
    rng: object
    queue: deque = field(default_factory=deque)
    window: ReplayWindow = field(default_factory=ReplayWindow)
    counters: NodeCounters = field(default_factory=NodeCounters)
    missed_beacons: int = 0
    believed_slot: int = 0
    listen_channel: Optional[int] = None
    tuned_channel: Optional[int] = None
    mode: RadioMode = RadioMode.STANDBY
    awaiting_beacon: bool = False
    first_rotation_slot: Optional[int] = None
    first_wrap_slot: Optional[int] = None
    rejoin_slots: list = field(default_factory=list)

    @property
    def address(self) -> int:
        return self.config.address

    @property
    def hop(self):
        return self.tx.hop_state


def make_node(config: NodeConfig, params: ProtocolParams, rng,
              schedule: Optional[HopSchedule] = None) -> NodeState:
    if config.strategy is Strategy.SINGLE_CHANNEL_AES and not (
            0 <= config.fixed_channel < params.plan.channel_count):
        raise ConfigError("fixed_channel", "outside the channel plan")
    schedule = schedule or HopSchedule(params.plan, params.master_key, params.initial_seed,
                                       params.seed_rotation_slots)
    clock = ClockModel(drift_rate=config.drift_rate, local_origin=config.initial_offset_ms)
    sync = SyncState(t_sync_interval=params.t_sync, t_max_offset=params.t_max_offset)
    tx = TxContext(params.payload_key, config.address, schedule.state_at(0), schedule=schedule)
    return NodeState(config, params, schedule, clock, sync, tx, rng)


def data_channel(node: NodeState, slot: int) -> int:
    cfg, n = node.config, node.params.plan.channel_count
    if cfg.strategy is Strategy.SINGLE_CHANNEL_AES:
        return cfg.fixed_channel
    if cfg.strategy is Strategy.FHSS_BASELINE:
        return fhss_channel(slot, cfg.fhss_period, n)
    return node.schedule.channel_at(slot)


def sync_channel(node: NodeState, slot: int) -> int:
    if node.config.strategy is Strategy.MCSC:
        return beacon_channel(slot, node.params.plan.channel_count)
    return data_channel(node, slot)


def _camp_channel(node: NodeState) -> int:
    if node.config.strategy is Strategy.SINGLE_CHANNEL_AES:
        return node.config.fixed_channel
    return resync_channel(node.rng, node.params.plan)


def _desync(node: NodeState) -> None:
    if node.sync.synced:
        node.counters.desync_events += 1
    node.sync = node.sync.desync(_camp_channel(node))


def believed_slot(clock: ClockModel, slot_ms: float) -> int:
    return math.floor(clock.local_time / slot_ms + 0.5)


def _handle_beacon(node: NodeState, delivery: Delivery) -> bool:
    if delivery.corrupt:
        # a garbled timestamp would wreck the clock; the radio CRC drops it
        node.counters.corrupt_beacons += 1
        return False
    was_desynced = not node.sync.synced
    signal = SyncSignal.from_bytes(delivery.data)
    node.sync, node.clock = process_sync_signal(node.sync, node.clock, signal,
                                                node.params.slot_ms)
    node.counters.beacons_received += 1
    if was_desynced and node.sync.synced:
        node.counters.rejoins += 1
        node.rejoin_slots.append(delivery.slot)
    return True


def _handle_data(node: NodeState, delivery: Delivery) -> None:
    if node.config.role is not Role.MASTER or not node.sync.synced:
        return
    frame = deserialize(delivery.data)
    rx_slot = node.believed_slot
    try:
        open_frame(node.params.payload_key, frame, rx_slot, node.window)
    except ReplayRejected:
        if delivery.injected:
            node.counters.replay_rejected += 1
        else:
            node.counters.legit_rejected += 1
        return
    if delivery.injected:
        node.counters.replay_accepted += 1
        return
    node.counters.received += 1
    if delivery.corrupt:
        node.counters.corrupt_received += 1
    if frame.next_channel != data_channel(node, rx_slot + 1):
        # the shared schedule wins; the header is only a cross-check
        node.counters.sync_anomalies += 1


def receive(node: NodeState, inbox) -> bool:
    """Process deliveries from one slot; True if a usable beacon was among them."""
    got_beacon = False
    for delivery in inbox:
        if delivery.kind is Kind.BEACON:
            got_beacon = _handle_beacon(node, delivery) or got_beacon
        else:
            _handle_data(node, delivery)
    return got_beacon


def _arrivals(node: NodeState) -> int:
    whole, frac = divmod(node.config.traffic, 1.0)
    count = int(whole)
    if frac and node.rng.random() < frac:
        count += 1
    return count


def node_tick(node: NodeState, slot: int, inbox=()) -> tuple[NodeState, list]:
    """Run one slot: inbox from the previous slot, then clock, beacons, traffic, TX."""
    params, cfg, counters = node.params, node.config, node.counters

    # deliveries were received during the previous slot, before this clock step
    got_beacon = receive(node, inbox)
    if node.awaiting_beacon and cfg.role is Role.MEMBER:
        if got_beacon:
            node.missed_beacons = 0
        else:
            node.missed_beacons += 1
            counters.beacons_missed += 1
            if not node.sync.synced:
                node.sync = node.sync.desync(_camp_channel(node))
            elif node.missed_beacons >= params.max_missed_beacons:
                _desync(node)

    node.clock = advance_clock(node.clock, slot * params.true_slot_ms - node.clock.true_time)
    if slot in cfg.force_desync_at and cfg.role is Role.MEMBER:
        _desync(node)
    b = believed_slot(node.clock, params.slot_ms)
    node.believed_slot = b

    epoch = node.tx.hop_state.seed.epoch
    hop = node.schedule.seek(node.tx.hop_state, max(b, 0))
    if hop.seed.epoch > epoch:
        counters.seed_rotations += hop.seed.epoch - epoch
        if node.first_rotation_slot is None:
            node.first_rotation_slot = slot
    node.tx = replace(node.tx, hop_state=hop, synced=node.sync.synced)

    is_beacon_slot = b % params.beacon_period_slots == 0
    transmissions = []
    if cfg.role is Role.MASTER and is_beacon_slot:
        signal = SyncSignal(node.clock.local_time, hop.seed.epoch, b)
        transmissions.append(Transmission(cfg.address, sync_channel(node, b), slot,
                                          Kind.BEACON, signal.to_bytes()))
        counters.beacons_sent += 1

    for _ in range(_arrivals(node)):
        counters.arrivals += 1
        if len(node.queue) >= cfg.queue_capacity:
            counters.dropped += 1
        else:
            node.queue.append((node.rng.bytes(11), slot))

    if not transmissions and not is_beacon_slot and node.queue and node.sync.synced:
        plaintext, enqueued = node.queue.popleft()
        try:
            frame, node.tx = build_frame(node.tx, plaintext, data_channel(node, b + 1))
        except NotSynchronized:  # pragma: no cover - guarded above
            node.queue.appendleft((plaintext, enqueued))
        else:
            if node.tx.sequence == 0:
                counters.sequence_wraps += 1
                if node.first_wrap_slot is None:
                    node.first_wrap_slot = slot
            data = serialize(frame)
            transmissions.append(Transmission(cfg.address, data_channel(node, b), slot,
                                              Kind.DATA, data, enqueued_slot=enqueued))
            counters.sent += 1

    if transmissions:
        node.mode = RadioMode.TX
        node.listen_channel = None
        node.tuned_channel = transmissions[0].channel
    elif not node.sync.synced:
        node.mode = RadioMode.RX
        node.listen_channel = node.tuned_channel = node.sync.camped_channel
    elif cfg.role is Role.MASTER:
        node.mode = RadioMode.RX
        node.listen_channel = node.tuned_channel = data_channel(node, b)
    elif is_beacon_slot:
        node.mode = RadioMode.RX
        node.listen_channel = node.tuned_channel = sync_channel(node, b)
    else:
        node.mode = RadioMode.STANDBY
        node.listen_channel = None
        node.tuned_channel = data_channel(node, b)
    node.awaiting_beacon = cfg.role is Role.MEMBER and is_beacon_slot

    counters.energy_mj += energy_for_slot(node.mode, params.slot_ms)
    if node.mode is RadioMode.TX:
        counters.slots_tx += 1
    elif node.mode is RadioMode.RX:
        counters.slots_rx += 1
    else:
        counters.slots_standby += 1
    return node, transmissions


def rejoin_intervals(rng, plan: ChannelPlan, beacon_period_slots: int,
                     first_beacon_slot: int = 0, max_intervals: int = 1 << 20) -> int:
    """Beacon intervals a desynced MCSC node camps before hearing a beacon.

    Mirrors the node's camping rule without the slot loop: one fresh random
    channel per interval, success when it matches that interval's beacon
    channel.
    """
    slot = first_beacon_slot
    for interval in range(1, max_intervals + 1):
        if resync_channel(rng, plan) == beacon_channel(slot, plan.channel_count):
            return interval
        slot += beacon_period_slots
    return max_intervals
