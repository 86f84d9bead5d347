"""Outer tree code: per-slot parity chaining across a slotted codeword.

A B-bit payload is split into info sections of sizes b_1..b_S.  Slot s
carries a J-bit block ``(info << p_s) | parity`` where the p_s parity bits
are pseudo-random mod-2 combinations of every info bit transmitted in slots
1..s-1.  All users share the parity rules, so the receiver can stitch
per-slot candidate lists back into payloads by keeping exactly the paths
whose parity checks out.

Bit conventions (fixed, relied on by encoder and decoder alike):

* payload bit j (j = 0 first) is the coefficient of 2^(B-1-j), i.e. the
  payload integer reads big-endian in transmission order;
* within a block, info bits sit above parity bits, each field big-endian;
* parity bit i of slot s (i = 0 at the top of the parity field) is the
  mod-2 inner product of the info prefix with a mask drawn from the
  counter-based stream keyed by (parity_seed, s, i).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class PathOverflowError(RuntimeError):
    """Decoding would extend more paths than the configured cap allows."""


@dataclass(frozen=True)
class ParityProfile:
    """Per-slot split of a J-bit block into info and parity bits."""

    info_bits: tuple[int, ...]
    parity_bits: tuple[int, ...]

    def __post_init__(self) -> None:
        info = tuple(int(b) for b in self.info_bits)
        parity = tuple(int(p) for p in self.parity_bits)
        object.__setattr__(self, "info_bits", info)
        object.__setattr__(self, "parity_bits", parity)
        if len(info) != len(parity) or not info:
            raise ValueError("info and parity sequences must share a positive length")
        if any(b < 0 for b in info) or any(p < 0 for p in parity):
            raise ValueError("bit counts must be nonnegative")
        widths = {b + p for b, p in zip(info, parity)}
        if len(widths) != 1:
            raise ValueError("info + parity must equal the block width in every slot")
        if parity[0] != 0:
            raise ValueError("the first slot carries info bits only")
        if any(b >= self.block_bits for b in info[1:]):
            raise ValueError("slots after the first must carry at least one parity bit")

    @classmethod
    def from_parity(cls, parity: "list[int] | tuple[int, ...]",
                    bits_per_slot: int) -> "ParityProfile":
        parity = tuple(int(p) for p in parity)
        return cls(tuple(bits_per_slot - p for p in parity), parity)

    @property
    def num_slots(self) -> int:
        return len(self.info_bits)

    @property
    def block_bits(self) -> int:
        return self.info_bits[0] + self.parity_bits[0]

    @property
    def payload_bits(self) -> int:
        return sum(self.info_bits)

    @property
    def outer_rate(self) -> float:
        return self.payload_bits / (self.num_slots * self.block_bits)


def _parity_mask_words(parity_seed: int, slot: int, bit: int,
                       prefix_len: int, num_words: int) -> np.ndarray:
    """Mask over the info prefix for one parity bit, packed into uint64 words."""
    ss = np.random.SeedSequence(entropy=parity_seed, spawn_key=(slot, bit))
    bits = np.random.default_rng(ss).integers(0, 2, size=prefix_len,
                                              dtype=np.uint64)
    words = np.zeros(num_words, dtype=np.uint64)
    pos = np.flatnonzero(bits)
    np.bitwise_or.at(words, pos >> 6, np.uint64(1) << (pos & 63).astype(np.uint64))
    return words


@dataclass(frozen=True)
class TreeCodebook:
    """Parity rules shared by every user: one mask per (slot, parity bit)."""

    profile: ParityProfile
    parity_seed: int = 0
    masks: tuple[np.ndarray, ...] = field(init=False, repr=False)
    info_offsets: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        total = self.profile.payload_bits
        num_words = max(1, (total + 63) >> 6)
        masks = []
        offsets = []
        prefix_len = 0
        for s, (b, p) in enumerate(zip(self.profile.info_bits,
                                       self.profile.parity_bits)):
            offsets.append(prefix_len)
            m = np.zeros((p, num_words), dtype=np.uint64)
            for i in range(p):
                m[i] = _parity_mask_words(self.parity_seed, s, i,
                                          prefix_len, num_words)
            m.flags.writeable = False
            masks.append(m)
            prefix_len += b
        object.__setattr__(self, "masks", tuple(masks))
        object.__setattr__(self, "info_offsets", tuple(offsets))

    @property
    def num_words(self) -> int:
        return self.masks[0].shape[1]


def payload_to_bits(payload: int, payload_bits: int) -> np.ndarray:
    """Big-endian bit expansion of a payload integer."""
    if not 0 <= payload < (1 << payload_bits):
        raise ValueError("payload out of range for the profile")
    return np.array([(payload >> (payload_bits - 1 - j)) & 1
                     for j in range(payload_bits)], dtype=np.uint8)


def bits_to_payloads(bits: np.ndarray) -> list[int]:
    """Inverse of payload_to_bits, vectorized over rows."""
    bits = np.asarray(bits, dtype=np.uint8)
    n, width = bits.shape
    pad = (-width) % 8
    packed = np.packbits(bits, axis=1, bitorder="big")
    return [int.from_bytes(row.tobytes(), "big") >> pad for row in packed]


def _batch_parities(prefix: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Parity field values for each prefix row under the given masks."""
    p = masks.shape[0]
    if p == 0:
        return np.zeros(prefix.shape[0], dtype=np.int64)
    counts = np.bitwise_count(prefix[:, None, :] & masks[None, :, :])
    bits = counts.sum(axis=2, dtype=np.int64) & 1
    weights = np.left_shift(1, np.arange(p - 1, -1, -1, dtype=np.int64))
    return bits @ weights


def _append_info_bits(prefix: np.ndarray, info: np.ndarray, offset: int,
                      width: int) -> None:
    """Write big-endian ``info`` fields into prefix rows starting at offset."""
    for j in range(width):
        bit = ((info >> (width - 1 - j)) & 1).astype(np.uint64)
        pos = offset + j
        prefix[:, pos >> 6] |= bit << np.uint64(pos & 63)


def outer_encode_batch(payload_bits: np.ndarray,
                       codebook: TreeCodebook) -> np.ndarray:
    """Encode payload bit rows (one user per row) into per-slot block indices.

    Returns an (N, S) int64 array of J-bit codebook indices.
    """
    bits = np.asarray(payload_bits, dtype=np.uint8)
    if bits.ndim != 2 or bits.shape[1] != codebook.profile.payload_bits:
        raise ValueError("payload bit rows must match the profile width")
    n = bits.shape[0]
    profile = codebook.profile
    blocks = np.zeros((n, profile.num_slots), dtype=np.int64)
    prefix = np.zeros((n, codebook.num_words), dtype=np.uint64)
    offset = 0
    for s, (b, p) in enumerate(zip(profile.info_bits, profile.parity_bits)):
        info = np.zeros(n, dtype=np.int64)
        for j in range(b):
            info = (info << 1) | bits[:, offset + j]
        parity = _batch_parities(prefix, codebook.masks[s])
        blocks[:, s] = (info << p) | parity
        _append_info_bits(prefix, info, offset, b)
        offset += b
    return blocks


def outer_encode(payload: int, codebook: TreeCodebook) -> np.ndarray:
    """Encode one payload integer into its length-S block index sequence."""
    bits = payload_to_bits(payload, codebook.profile.payload_bits)
    return outer_encode_batch(bits[None, :], codebook)[0]


def or_mac_combine(per_user_blocks: np.ndarray) -> list[np.ndarray]:
    """Union the per-user block choices into one candidate set per slot.

    Models a noiseless OR multiple-access stage: the receiver learns which
    codebook indices were used in each slot, not how often or by whom.
    """
    blocks = np.asarray(per_user_blocks, dtype=np.int64)
    if blocks.ndim != 2:
        raise ValueError("expected an (num_users, num_slots) index array")
    return [np.unique(blocks[:, s]) for s in range(blocks.shape[1])]


def tree_decode(slot_lists, codebook: TreeCodebook,
                max_extensions: int = 10_000_000) -> set[int]:
    """Stitch per-slot candidate lists into the set of parity-consistent payloads.

    Walks the slots in order keeping every partial path whose parity bits
    match, and returns the deduplicated payload integers of the survivors.
    An empty candidate list in any slot kills every path.  Raises
    PathOverflowError when a single stage would create more than
    ``max_extensions`` path extensions.
    """
    profile = codebook.profile
    if len(slot_lists) != profile.num_slots:
        raise ValueError("need one candidate list per slot")
    width = profile.block_bits

    prefix = np.zeros((0, codebook.num_words), dtype=np.uint64)
    for s, (b, p) in enumerate(zip(profile.info_bits, profile.parity_bits)):
        cand = np.unique(np.asarray(list(slot_lists[s]), dtype=np.int64))
        if cand.size and (cand[0] < 0 or cand[-1] >= (1 << width)):
            raise ValueError("candidate index out of range for the block width")
        if s == 0:
            if cand.size == 0:
                return set()
            prefix = np.zeros((cand.size, codebook.num_words), dtype=np.uint64)
            _append_info_bits(prefix, cand, 0, b)
            continue
        if prefix.shape[0] == 0 or cand.size == 0:
            return set()

        cand_info = cand >> p
        cand_parity = cand & ((1 << p) - 1)
        order = np.argsort(cand_parity, kind="stable")
        cand_info = cand_info[order]
        cand_parity = cand_parity[order]

        want = _batch_parities(prefix, codebook.masks[s])
        lo = np.searchsorted(cand_parity, want, side="left")
        hi = np.searchsorted(cand_parity, want, side="right")
        counts = hi - lo
        total = int(counts.sum())
        if total > max_extensions:
            raise PathOverflowError(
                f"stage {s} would extend {total} paths "
                f"(cap {max_extensions})"
            )
        if total == 0:
            return set()
        path_idx = np.repeat(np.arange(prefix.shape[0]), counts)
        within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        cand_idx = np.repeat(lo, counts) + within
        prefix = prefix[path_idx]
        _append_info_bits(prefix, cand_info[cand_idx],
                          codebook.info_offsets[s], b)

    prefix = np.unique(prefix, axis=0)
    total_bits = profile.payload_bits
    bits = np.zeros((prefix.shape[0], total_bits), dtype=np.uint8)
    for j in range(total_bits):
        bits[:, j] = (prefix[:, j >> 6] >> np.uint64(j & 63)) & np.uint64(1)
    return set(bits_to_payloads(bits))


def entropy_bound(bits_per_slot: int, num_active: int) -> float:
    """Largest per-slot sum rate (in bits) an OR-style channel can support.

    With K_a active users each picking one of 2^J columns uniformly, a given
    column stays unused with probability q = (1 - 2^-J)^K_a, and the slot
    output carries at most 2^J H2(q) bits.
    """
    if bits_per_slot < 1 or num_active < 0:
        raise ValueError("bits_per_slot must be positive, num_active nonnegative")
    q = (1.0 - 2.0 ** (-bits_per_slot)) ** num_active
    if q <= 0.0 or q >= 1.0:
        h = 0.0
    else:
        h = -q * np.log2(q) - (1.0 - q) * np.log2(1.0 - q)
    return float((1 << bits_per_slot) * h)


def sumrate_feasible(bits_per_slot: int, num_active: int,
                     outer_rate: float) -> bool:
    """Check K_a J R_out against the per-slot entropy bound."""
    if not 0.0 < outer_rate <= 1.0:
        raise ValueError("outer_rate must lie in (0, 1]")
    demand = num_active * bits_per_slot * outer_rate
    return demand <= entropy_bound(bits_per_slot, num_active)
