"""Keyed pseudo-random channel hopping.

Every synchronized node derives the channel for slot ``t`` as
``AES(seed, counter(t)) mod N``, so agreement needs only the shared seed
and the slot index. Seeds rotate every ``seed_rotation_slots`` slots; the
seed for epoch ``e`` depends only on the master key and ``e``, which lets a
node that missed rotations rebuild the current seed from a beacon.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

from .crypto import AesKey, CounterBlock, DomainTag, aes128_encrypt_block

DEFAULT_CHANNELS = 125
DEFAULT_SEED_ROTATION_SLOTS = 4096


class InvalidChannelPlan(ValueError):
    pass


@dataclass(frozen=True)
class ChannelPlan:
    channel_count: int = DEFAULT_CHANNELS
    base_frequency_mhz: float = 2400.0
    channel_width_mhz: float = 1.0

    def __post_init__(self):
        if self.channel_count < 1:
            raise InvalidChannelPlan(f"channel_count must be >= 1, got {self.channel_count}")
        if self.channel_count > 256:
            # next_channel travels in an 8-bit header field
            raise InvalidChannelPlan(f"channel_count must fit 8 bits, got {self.channel_count}")

    def frequency_mhz(self, index: int) -> float:
        check_index(index, self.channel_count)
        return self.base_frequency_mhz + index * self.channel_width_mhz


@dataclass(frozen=True)
class HopSeed:
    value: bytes
    epoch: int = 0

    def __post_init__(self):
        if len(self.value) != 16:
            raise ValueError("hop seed must be 16 bytes")

    def __repr__(self):
        return f"HopSeed(epoch={self.epoch})"


@dataclass(frozen=True)
class HopState:
    plan: ChannelPlan
    seed: HopSeed
    current_slot: int
    current_channel: int

    @classmethod
    def start(cls, plan: ChannelPlan, seed: HopSeed, slot: int = 0) -> "HopState":
        return cls(plan, seed, slot, prng_index(seed, slot, plan.channel_count))


def check_index(index: int, n: int) -> None:
    if not 0 <= index < n:
        raise IndexError(f"channel index {index} outside 0..{n - 1}")


@lru_cache(maxsize=1 << 16)
def _prng_word(seed_value: bytes, slot: int) -> int:
    block = CounterBlock(slot_index=slot, domain_tag=DomainTag.PRNG).to_bytes()
    return int.from_bytes(aes128_encrypt_block(AesKey(seed_value), block)[:8], "big")


def prng_index(seed: HopSeed, slot: int, n: int) -> int:
    """Channel index for ``slot``: first 8 PRF output bytes, big-endian, mod ``n``."""
    if n < 1:
        raise InvalidChannelPlan(f"channel count must be >= 1, got {n}")
    return _prng_word(seed.value, slot) % n


def channel_label(index: int, n: int = DEFAULT_CHANNELS) -> int:
    """1-based channel number for display; wire values stay 0-based."""
    check_index(index, n)
    return index + 1


def advance(state: HopState) -> tuple[HopState, int]:
    slot = state.current_slot + 1
    channel = prng_index(state.seed, slot, state.plan.channel_count)
    return replace(state, current_slot=slot, current_channel=channel), channel


def rotate_seed(master_key: AesKey, old: HopSeed) -> HopSeed:
    epoch = old.epoch + 1
    block = CounterBlock(slot_index=epoch, domain_tag=DomainTag.SEED).to_bytes()
    return HopSeed(aes128_encrypt_block(master_key, block), epoch)


def seed_for_epoch(master_key: AesKey, initial: HopSeed, epoch: int) -> HopSeed:
    if epoch == initial.epoch:
        return initial
    if epoch < initial.epoch:
        raise ValueError(f"cannot rewind seed from epoch {initial.epoch} to {epoch}")
    # rotation output depends only on the target epoch
    return rotate_seed(master_key, HopSeed(initial.value, epoch - 1))


def epoch_for_slot(slot: int, rotation_slots: int) -> int:
    return slot // rotation_slots


class HopSchedule:
    """Slot -> channel map for one shared (master key, initial seed) pair.

    Wraps :func:`advance` and :func:`rotate_seed` so callers can step or
    seek a :class:`HopState` with rotation applied at epoch boundaries.
    """

    def __init__(self, plan: ChannelPlan, master_key: AesKey, initial_seed: HopSeed,
                 rotation_slots: int = DEFAULT_SEED_ROTATION_SLOTS):
        if rotation_slots < 1:
            raise ValueError("seed_rotation_slots must be >= 1")
        self.plan = plan
        self.master_key = master_key
        self.initial_seed = initial_seed
        self.rotation_slots = rotation_slots
        self._seeds = {initial_seed.epoch: initial_seed}

    def seed_at(self, slot: int) -> HopSeed:
        epoch = self.initial_seed.epoch + epoch_for_slot(slot, self.rotation_slots)
        seed = self._seeds.get(epoch)
        if seed is None:
            seed = self._seeds[epoch] = seed_for_epoch(self.master_key, self.initial_seed, epoch)
        return seed

    def channel_at(self, slot: int) -> int:
        return prng_index(self.seed_at(slot), slot, self.plan.channel_count)

    def state_at(self, slot: int) -> HopState:
        return HopState(self.plan, self.seed_at(slot), slot, self.channel_at(slot))

    def step(self, state: HopState) -> tuple[HopState, int]:
        """Advance one slot, rotating the seed when the new slot opens an epoch."""
        state, channel = advance(state)
        if state.current_slot % self.rotation_slots == 0:
            seed = rotate_seed(self.master_key, state.seed)
            self._seeds.setdefault(seed.epoch, seed)
            channel = prng_index(seed, state.current_slot, self.plan.channel_count)
            state = replace(state, seed=seed, current_channel=channel)
        return state, channel

    def seek(self, state: HopState, slot: int) -> HopState:
        if slot == state.current_slot:
            return state
        if slot == state.current_slot + 1:
            return self.step(state)[0]
        return self.state_at(slot)


def resync_channel(rng, plan: ChannelPlan) -> int:
    """Uniform channel from the simulation RNG; the shared PRF is unusable when desynced."""
    if plan.channel_count == 1:
        return 0
    return int(rng.integers(plan.channel_count))


def beacon_channel(slot: int, n: int) -> int:
    """Public walk used for sync beacons only: ``slot mod n``."""
    return slot % n


def fhss_channel(slot: int, period: int, n: int) -> int:
    """Public cyclic baseline: dwell ``period`` slots per channel, then step by one."""
    return (slot // period) % n
