"""Shared slotted radio medium and the adversaries that act on it.

Each slot is resolved independently, in this order: collisions, jamming,
interference loss, bit errors, eavesdropper capture, delivery to listeners.
The eavesdropper sees the same surviving bytes a legitimate listener would.
"""

from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import UndefinedMetric
from .timesync import SyncSignal

ATTACKER = -1


class MediumConsistencyError(RuntimeError):
    pass


class Kind(str, enum.Enum):
    DATA = "DATA"
    BEACON = "BEACON"


class Outcome(str, enum.Enum):
    DELIVERED = "delivered"
    CORRUPT = "corrupt"
    COLLIDED = "collided"
    JAMMED = "jammed"
    LOST = "lost"
    UNHEARD = "unheard"


@dataclass(frozen=True)
class InterferenceScenario:
    name: str = "CUSTOM"
    per_packet_loss_prob: float = 0.0
    bit_error_prob: float = 0.0
    # narrowband interferers sitting on a few channels (e.g. an overlapping WLAN)
    noisy_channels: frozenset = frozenset()
    noisy_channel_loss_prob: float = 0.0

    def __post_init__(self):
        for name in ("per_packet_loss_prob", "bit_error_prob", "noisy_channel_loss_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        object.__setattr__(self, "noisy_channels", frozenset(self.noisy_channels))

    def loss_prob(self, channel: int) -> float:
        if channel in self.noisy_channels:
            # independent losses: survive both
            return 1.0 - (1.0 - self.per_packet_loss_prob) * (1.0 - self.noisy_channel_loss_prob)
        return self.per_packet_loss_prob


class JamMode(str, enum.Enum):
    FIXED = "FIXED"
    SWEEPING = "SWEEPING"
    WIDEBAND = "WIDEBAND"
    RANDOM = "RANDOM"
    ADAPTIVE = "ADAPTIVE"


@dataclass
class Jammer:
    """Destroys every frame on the channels it covers in a slot.

    FIXED jams ``target_channel``. WIDEBAND jams a static block of ``k``
    channels from ``target_channel`` (default 0). SWEEPING moves that block by
    ``k`` each slot. RANDOM draws ``k`` distinct channels per slot. ADAPTIVE
    watches which channel carries data in each phase of a ``cycle_slots``-long
    cycle and jams its prediction once it has seen that phase.
    """

    mode: JamMode = JamMode.RANDOM
    jammed_channels_per_slot: int = 1
    target_channel: Optional[int] = None
    cycle_slots: Optional[int] = None
    _learned: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.mode = JamMode(self.mode)
        if self.jammed_channels_per_slot < 0:
            raise ValueError("jammed_channels_per_slot must be >= 0")
        if self.mode is JamMode.FIXED and self.target_channel is None:
            raise ValueError("FIXED jammer needs target_channel")
        if self.mode is JamMode.ADAPTIVE and not self.cycle_slots:
            raise ValueError("ADAPTIVE jammer needs cycle_slots")

    def channels_for_slot(self, slot: int, n: int, rng) -> frozenset:
        k = min(self.jammed_channels_per_slot, n)
        base = self.target_channel or 0
        if self.mode is JamMode.FIXED:
            return frozenset((self.target_channel,))
        if self.mode is JamMode.WIDEBAND:
            return frozenset((base + i) % n for i in range(k))
        if self.mode is JamMode.SWEEPING:
            start = base + slot * k
            return frozenset((start + i) % n for i in range(k))
        if self.mode is JamMode.ADAPTIVE:
            guess = self._learned.get(slot % self.cycle_slots)
            if guess is not None:
                return frozenset((guess,))
        if k == n:
            return frozenset(range(n))
        return frozenset(int(c) for c in rng.choice(n, size=k, replace=False))

    def observe(self, slot: int, data_channels) -> None:
        if self.mode is JamMode.ADAPTIVE and data_channels:
            self._learned[slot % self.cycle_slots] = min(data_channels)


@dataclass(frozen=True)
class Capture:
    slot: int
    channel: int
    sender: int
    kind: Kind
    data: bytes
    injected: bool = False


@dataclass
class Eavesdropper:
    monitored_channels: frozenset = frozenset()
    log: list = field(default_factory=list)

    def __post_init__(self):
        self.monitored_channels = frozenset(self.monitored_channels)

    def data_captures(self) -> list:
        return [c for c in self.log if c.kind is Kind.DATA and not c.injected]


@dataclass(frozen=True)
class Transmission:
    sender: int
    channel: int
    slot: int
    kind: Kind
    data: bytes
    injected: bool = False
    # simulator bookkeeping, never on the air
    enqueued_slot: Optional[int] = None


@dataclass(frozen=True)
class Delivery:
    slot: int
    channel: int
    sender: int
    kind: Kind
    data: bytes
    corrupt: bool = False
    injected: bool = False
    enqueued_slot: Optional[int] = None


@dataclass(frozen=True)
class MediumEvent:
    slot: int
    channel: int
    sender: int
    kind: Kind
    outcome: Outcome
    injected: bool = False
    receivers: tuple = ()
    enqueued_slot: Optional[int] = None


@dataclass
class SlotResult:
    inboxes: dict
    events: list
    jammed: frozenset = frozenset()


def _flip_bits(data: bytes, count: int, rng) -> bytes:
    nbits = len(data) * 8
    positions = rng.choice(nbits, size=count, replace=False)
    value = int.from_bytes(data, "big")
    for pos in positions:
        value ^= 1 << int(pos)
    return value.to_bytes(len(data), "big")


def resolve_slot(transmissions, scenario: InterferenceScenario, rng, *,
                 listeners: Optional[dict] = None, channel_count: int = 125,
                 jammer: Optional[Jammer] = None, eavesdropper: Optional[Eavesdropper] = None,
                 propagation_ms: float = 0.0) -> SlotResult:
    """Resolve one slot of transmissions into per-listener inboxes and events.

    ``listeners`` maps node address to the channel that node receives on
    this slot; transmitting nodes must be left out (half-duplex).
    """
    listeners = listeners or {}
    txs = sorted(transmissions, key=lambda t: (t.sender, t.kind.value, t.injected, t.channel))
    slots = {t.slot for t in txs}
    if len(slots) > 1:
        raise MediumConsistencyError(f"transmissions from several slots: {sorted(slots)}")
    if not txs:
        return SlotResult({}, [])
    slot = txs[0].slot

    by_channel = defaultdict(list)
    for tx in txs:
        by_channel[tx.channel].append(tx)
    jammed = jammer.channels_for_slot(slot, channel_count, rng) if jammer else frozenset()

    inboxes = defaultdict(list)
    events = []
    for tx in txs:
        receivers = ()
        data = tx.data
        if len(by_channel[tx.channel]) > 1:
            outcome = Outcome.COLLIDED
        elif tx.channel in jammed:
            outcome = Outcome.JAMMED
        else:
            loss = scenario.loss_prob(tx.channel)
            if loss > 0.0 and rng.random() < loss:
                outcome = Outcome.LOST
            else:
                flips = 0
                if scenario.bit_error_prob > 0.0:
                    flips = int(rng.binomial(len(data) * 8, scenario.bit_error_prob))
                if flips:
                    data = _flip_bits(data, flips, rng)
                if eavesdropper is not None and tx.channel in eavesdropper.monitored_channels:
                    eavesdropper.log.append(
                        Capture(slot, tx.channel, tx.sender, tx.kind, data, tx.injected))
                if tx.kind is Kind.BEACON and propagation_ms and not flips:
                    sig = SyncSignal.from_bytes(data)
                    data = SyncSignal(sig.master_time + propagation_ms, sig.seed_epoch,
                                      sig.slot_index).to_bytes()
                receivers = tuple(sorted(a for a, ch in listeners.items()
                                         if ch == tx.channel and a != tx.sender))
                if not receivers:
                    outcome = Outcome.UNHEARD
                else:
                    outcome = Outcome.CORRUPT if flips else Outcome.DELIVERED
                    delivery = Delivery(slot, tx.channel, tx.sender, tx.kind, data,
                                        bool(flips), tx.injected, tx.enqueued_slot)
                    for address in receivers:
                        inboxes[address].append(delivery)
        events.append(MediumEvent(slot, tx.channel, tx.sender, tx.kind, outcome,
                                  tx.injected, receivers, tx.enqueued_slot))

    if jammer is not None:
        jammer.observe(slot, [t.channel for t in txs if t.kind is Kind.DATA and not t.injected])
    return SlotResult(dict(inboxes), events, jammed)


def eavesdrop_success_rate(log, total_frames: int) -> float:
    """Fraction of legitimate data frames the eavesdropper captured."""
    if total_frames <= 0:
        raise UndefinedMetric("no frames transmitted")
    captured = sum(1 for c in log if c.kind is Kind.DATA and not c.injected)
    return captured / total_frames


def replay_inject(log, slot: int, rng, *, channel_count: int = 125,
                  channel_mode: str = "CAPTURED") -> Transmission:
    """Re-send a uniformly chosen captured data frame, byte for byte."""
    frames = [c for c in log if c.kind is Kind.DATA and not c.injected]
    if not frames:
        raise ValueError("replay needs a non-empty capture log")
    capture = frames[int(rng.integers(len(frames)))]
    if channel_mode == "CAPTURED":
        channel = capture.channel
    elif channel_mode == "RANDOM":
        channel = int(rng.integers(channel_count))
    else:
        raise ValueError(f"unknown replay channel_mode {channel_mode!r}")
    return Transmission(ATTACKER, channel, slot, Kind.DATA, capture.data, injected=True)


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)
