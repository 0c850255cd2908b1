"""The 128-bit MCSC frame.

Wire layout, all fields big-endian, MSB first::

    byte  0       next_channel   u8   0-based index of the sender's next hop
    bytes 1..2    node_address   u16
    bytes 3..13   payload        88-bit ciphertext
    bytes 14..15  sequence       u16

Only the payload is encrypted. The keystream is keyed by the sender's
address, the frame sequence number and the slot the frame is sent in.
"""

from __future__ import annotations

import logging
import struct
from collections import deque
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

from .crypto import (
    PAYLOAD_BYTES,
    AesKey,
    CounterBlock,
    DomainTag,
    Payload88,
    decrypt_payload,
    encrypt_payload,
)
from .hopping import HopSchedule, HopState, prng_index

log = logging.getLogger(__name__)

FRAME_BYTES = 16
REPLAY_WINDOW = 1 << 12
_SEQ_MOD = 1 << 16
_HEADER = struct.Struct(">BH")
_TRAILER = struct.Struct(">H")


class FramingError(ValueError):
    pass


class NotSynchronized(RuntimeError):
    pass


class ReplayRejected(Exception):
    def __init__(self, address: int, sequence: int):
        super().__init__(f"replayed frame from {address:#06x} seq {sequence}")
        self.address = address
        self.sequence = sequence


@dataclass(frozen=True)
class Frame:
    next_channel: int = 0
    node_address: int = 0
    payload: Payload88 = bytes(PAYLOAD_BYTES)
    sequence: int = 0

    def __post_init__(self):
        if not 0 <= self.next_channel < 256:
            raise FramingError(f"next_channel does not fit 8 bits: {self.next_channel}")
        if not 0 <= self.node_address < _SEQ_MOD:
            raise FramingError(f"node_address does not fit 16 bits: {self.node_address}")
        if not 0 <= self.sequence < _SEQ_MOD:
            raise FramingError(f"sequence does not fit 16 bits: {self.sequence}")
        if len(self.payload) != PAYLOAD_BYTES:
            raise FramingError(f"payload must be 11 bytes, got {len(self.payload)}")


def serialize(frame: Frame) -> bytes:
    return (
        _HEADER.pack(frame.next_channel, frame.node_address)
        + bytes(frame.payload)
        + _TRAILER.pack(frame.sequence)
    )


def deserialize(data: bytes) -> Frame:
    if len(data) != FRAME_BYTES:
        raise FramingError(f"frame must be {FRAME_BYTES} bytes, got {len(data)}")
    next_channel, address = _HEADER.unpack_from(data, 0)
    (sequence,) = _TRAILER.unpack_from(data, 14)
    return Frame(next_channel, address, bytes(data[3:14]), sequence)


@dataclass(frozen=True)
class TxContext:
    key: AesKey
    node_address: int
    hop_state: HopState
    sequence: int = 0
    synced: bool = True
    schedule: Optional[HopSchedule] = field(default=None, compare=False)
    # bumped each time the sequence counter wraps; the owner must have rotated
    # the hop seed at least once per wrap so (address, sequence) is never
    # reused under one epoch
    rotation_events: int = 0


def payload_counter(address: int, sequence: int, slot: int) -> CounterBlock:
    return CounterBlock(address, sequence, slot, DomainTag.PAYLOAD)


def build_frame(ctx: TxContext, plaintext: Payload88,
                next_channel: Optional[int] = None) -> tuple[Frame, TxContext]:
    """Encrypt ``plaintext`` for the current slot and advance the sequence.

    ``next_channel`` defaults to the hop channel of the following slot; the
    baseline strategies pass their own.
    """
    if not ctx.synced:
        raise NotSynchronized("frame requested while node is desynchronized")
    if len(plaintext) != PAYLOAD_BYTES:
        raise ValueError(f"plaintext must be exactly 88 bits, got {len(plaintext) * 8}")
    slot = ctx.hop_state.current_slot
    if next_channel is None:
        if ctx.schedule is not None:
            next_channel = ctx.schedule.channel_at(slot + 1)
        else:
            next_channel = prng_index(ctx.hop_state.seed, slot + 1,
                                      ctx.hop_state.plan.channel_count)
    ciphertext = encrypt_payload(ctx.key, payload_counter(ctx.node_address, ctx.sequence, slot),
                                 plaintext)
    frame = Frame(next_channel, ctx.node_address, ciphertext, ctx.sequence)
    sequence = (ctx.sequence + 1) % _SEQ_MOD
    rotations = ctx.rotation_events
    if sequence == 0:
        rotations += 1
        log.debug("sequence wrap at node %#06x; seed rotation required", ctx.node_address)
    return frame, replace(ctx, sequence=sequence, rotation_events=rotations)


class ReplayWindow:
    """Most recent ``size`` sequence numbers accepted from each sender."""

    def __init__(self, size: int = REPLAY_WINDOW):
        self.size = size
        self._recent: dict[int, deque] = {}
        self._members: dict[int, set] = {}

    def seen(self, address: int, sequence: int) -> bool:
        return sequence in self._members.get(address, ())

    def record(self, address: int, sequence: int) -> None:
        recent = self._recent.setdefault(address, deque())
        members = self._members.setdefault(address, set())
        recent.append(sequence)
        members.add(sequence)
        if len(recent) > self.size:
            # check() refuses members, so each sequence sits in the deque at most once
            members.discard(recent.popleft())

    def check(self, address: int, sequence: int) -> None:
        if self.seen(address, sequence):
            raise ReplayRejected(address, sequence)
        self.record(address, sequence)


class OpenedFrame(NamedTuple):
    plaintext: Payload88
    next_channel: int
    address: int
    sequence: int


def open_frame(key: AesKey, frame: Frame, slot: int,
               window: Optional[ReplayWindow] = None) -> OpenedFrame:
    """Decrypt a received frame; raises :class:`ReplayRejected` on a duplicate."""
    if window is not None:
        window.check(frame.node_address, frame.sequence)
    plaintext = decrypt_payload(key, payload_counter(frame.node_address, frame.sequence, slot),
                                frame.payload)
    return OpenedFrame(plaintext, frame.next_channel, frame.node_address, frame.sequence)
