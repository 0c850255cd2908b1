"""Drifting clocks and master-beacon synchronization.

All times are milliseconds. A :class:`ClockModel` is evaluated from its
last anchor (``local = anchor_local + elapsed * (1 + drift)``) instead of
being accumulated slot by slot, which keeps integer-ms scenarios exact.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, replace
from typing import Optional


class InvalidSyncConfig(ValueError):
    pass


class SyncStatus(enum.Enum):
    SYNCED = "SYNCED"
    DESYNCED = "DESYNCED"


@dataclass(frozen=True)
class ClockModel:
    drift_rate: float = 0.0
    true_time_origin: float = 0.0
    local_origin: float = 0.0
    true_time: float = 0.0

    @property
    def local_time(self) -> float:
        elapsed = self.true_time - self.true_time_origin
        # elapsed + elapsed*drift, not elapsed*(1+drift): the small term
        # carries the rounding, so whole-ms drift stays exact.
        return self.local_origin + elapsed + elapsed * self.drift_rate

    def set_local(self, local_time: float) -> "ClockModel":
        return replace(self, true_time_origin=self.true_time, local_origin=local_time)


def advance_clock(clock: ClockModel, true_dt: float) -> ClockModel:
    if true_dt < 0:
        raise ValueError("true_dt must be non-negative")
    return replace(clock, true_time=clock.true_time + true_dt)


def time_offset(t_receiver: float, t_sender: float) -> float:
    return abs(t_receiver - t_sender)


def max_drift(t_sync: float, drift_rate: float, *other_rates: float) -> float:
    """Largest drift accumulated over one sync interval.

    With several clocks the worst case is the sum of their absolute rates.
    """
    if t_sync <= 0:
        raise InvalidSyncConfig(f"t_sync must be positive, got {t_sync}")
    return t_sync * sum(abs(r) for r in (drift_rate, *other_rates))


def in_sync(offset: float, delta_t: float) -> bool:
    return offset <= delta_t


def _round_half_away(x: float) -> float:
    return math.copysign(math.floor(abs(x) + 0.5), x)


def resynchronize(t_old: float, t_receiver: float, t_sender: float) -> float:
    """``t_old + (t_receiver - t_sender) / 2``, the half step rounded to whole ms."""
    return t_old + _round_half_away((t_receiver - t_sender) / 2)


@dataclass(frozen=True)
class SyncSignal:
    master_time: float
    seed_epoch: int
    slot_index: int

    _WIRE = struct.Struct(">dQQ")
    WIRE_SIZE = _WIRE.size

    def to_bytes(self) -> bytes:
        return self._WIRE.pack(self.master_time, self.seed_epoch, self.slot_index)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SyncSignal":
        if len(data) != cls.WIRE_SIZE:
            raise ValueError(f"beacon must be {cls.WIRE_SIZE} bytes, got {len(data)}")
        return cls(*cls._WIRE.unpack(data))


@dataclass(frozen=True)
class SyncState:
    t_sync_interval: float = 1000.0
    t_max_offset: float = 2.0
    status: SyncStatus = SyncStatus.SYNCED
    last_beacon_slot: int = -1
    camped_channel: Optional[int] = None
    seed_epoch: int = 0

    def __post_init__(self):
        if self.t_sync_interval <= 0:
            raise InvalidSyncConfig("t_sync_interval must be positive")
        if self.t_max_offset < 0:
            raise InvalidSyncConfig("t_max_offset must be non-negative")
        if (self.camped_channel is not None) != (self.status is SyncStatus.DESYNCED):
            raise ValueError("camped_channel must be set iff status is DESYNCED")

    @property
    def synced(self) -> bool:
        return self.status is SyncStatus.SYNCED

    def desync(self, channel: int) -> "SyncState":
        return replace(self, status=SyncStatus.DESYNCED, camped_channel=channel)


def process_sync_signal(state: SyncState, clock: ClockModel, signal: SyncSignal,
                        slot_ms: Optional[float] = None) -> tuple[SyncState, ClockModel]:
    """Apply one received beacon.

    Within ``t_max_offset`` the clock is left alone. Otherwise the local
    clock moves half the offset toward the master and the node adopts the
    beacon's epoch and slot. With ``slot_ms`` given, a node whose corrected
    clock still falls in a different slot than the beacon's is snapped to
    the master time, since halving alone cannot recover a long desync.
    """
    if signal.slot_index < state.last_beacon_slot:
        return state, clock
    if signal.slot_index == state.last_beacon_slot and state.synced:
        return state, clock

    local = clock.local_time
    offset = time_offset(local, signal.master_time)
    if in_sync(offset, state.t_max_offset) and state.synced:
        return replace(state, last_beacon_slot=signal.slot_index), clock

    if not in_sync(offset, state.t_max_offset):
        # The adjusting node applies the half-step toward the reference it received.
        corrected = resynchronize(local, signal.master_time, local)
        if slot_ms is not None and math.floor(corrected / slot_ms + 0.5) != signal.slot_index:
            corrected = signal.master_time
        clock = clock.set_local(corrected)
    state = replace(
        state,
        status=SyncStatus.SYNCED,
        camped_channel=None,
        last_beacon_slot=signal.slot_index,
        seed_epoch=signal.seed_epoch,
    )
    return state, clock
