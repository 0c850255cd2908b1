"""AES-128 primitives for payload encryption and keyed channel selection.

The frame carries an 88-bit ciphertext, which a raw AES block cannot
produce. Payloads are therefore XORed with the first 11 bytes of a single
AES block computed over a counter block built from (address, sequence,
slot). The same block cipher, under a different domain tag, drives the
hopping PRF and the seed rotation.
"""

from __future__ import annotations

import enum
import struct
import threading
from dataclasses import dataclass

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

BLOCK_SIZE = 16
PAYLOAD_BYTES = 11
PAYLOAD_BITS = PAYLOAD_BYTES * 8

# Payload88 is an 11-byte ``bytes`` value.
Payload88 = bytes


class DomainTag(enum.IntEnum):
    PAYLOAD = 0x01
    PRNG = 0x02
    SEED = 0x03


@dataclass(frozen=True)
class AesKey:
    """A 16-byte AES-128 key. ``repr`` never shows the key bytes."""

    key: bytes

    def __post_init__(self):
        if not isinstance(self.key, (bytes, bytearray)) or len(self.key) != BLOCK_SIZE:
            raise ValueError("AES-128 key must be exactly 16 bytes")
        object.__setattr__(self, "key", bytes(self.key))

    @classmethod
    def from_hex(cls, text: str) -> "AesKey":
        return cls(bytes.fromhex(text))

    def __repr__(self):
        return "AesKey(<redacted>)"

    __str__ = __repr__


_COUNTER = struct.Struct(">HHQB3x")


@dataclass(frozen=True)
class CounterBlock:
    node_address: int = 0
    sequence_number: int = 0
    slot_index: int = 0
    domain_tag: DomainTag = DomainTag.PAYLOAD

    def __post_init__(self):
        if not 0 <= self.node_address < 1 << 16:
            raise ValueError(f"node_address out of 16-bit range: {self.node_address}")
        if not 0 <= self.sequence_number < 1 << 16:
            raise ValueError(f"sequence_number out of 16-bit range: {self.sequence_number}")
        if not 0 <= self.slot_index < 1 << 64:
            raise ValueError(f"slot_index out of 64-bit range: {self.slot_index}")

    def to_bytes(self) -> bytes:
        # address, sequence, slot, tag; big-endian, zero-padded to one block
        return _COUNTER.pack(
            self.node_address, self.sequence_number, self.slot_index, int(self.domain_tag)
        )


_local = threading.local()


def _ciphers(key: AesKey):
    # ECB contexts are stateless between blocks, so one pair per key per thread
    # can be reused. Building a fresh context costs ~10x a block operation.
    cache = getattr(_local, "cache", None)
    if cache is None:
        cache = _local.cache = {}
    pair = cache.get(key.key)
    if pair is None:
        if len(cache) > 256:
            cache.clear()
        cipher = Cipher(algorithms.AES(key.key), modes.ECB())
        pair = cache[key.key] = (cipher.encryptor(), cipher.decryptor())
    return pair


def _check_block(block: bytes) -> None:
    if len(block) != BLOCK_SIZE:
        raise ValueError(f"AES block must be 16 bytes, got {len(block)}")


def aes128_encrypt_block(key: AesKey, block: bytes) -> bytes:
    _check_block(block)
    return _ciphers(key)[0].update(bytes(block))


def aes128_decrypt_block(key: AesKey, block: bytes) -> bytes:
    _check_block(block)
    return _ciphers(key)[1].update(bytes(block))


def keystream88(key: AesKey, counter: CounterBlock) -> Payload88:
    return aes128_encrypt_block(key, counter.to_bytes())[:PAYLOAD_BYTES]


def _xor88(key: AesKey, counter: CounterBlock, data: bytes) -> Payload88:
    if len(data) != PAYLOAD_BYTES:
        raise ValueError(f"payload must be exactly 88 bits (11 bytes), got {len(data)} bytes")
    stream = keystream88(key, counter)
    return (int.from_bytes(data, "big") ^ int.from_bytes(stream, "big")).to_bytes(
        PAYLOAD_BYTES, "big"
    )


def encrypt_payload(key: AesKey, counter: CounterBlock, plaintext: Payload88) -> Payload88:
    return _xor88(key, counter, plaintext)


def decrypt_payload(key: AesKey, counter: CounterBlock, ciphertext: Payload88) -> Payload88:
    return _xor88(key, counter, ciphertext)
