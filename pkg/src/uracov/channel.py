"""Block-fading massive-MIMO channel model.

Every active user picks one column of a shared L x 2^J coding matrix per
slot.  With γ collecting the summed power coefficients of the picked
columns, the receiver observes

    Y = A diag(P γ)^(1/2) H + Z

where H has i.i.d. CN(0, 1) entries (one row per picked column, one column
per antenna), Z has i.i.d. CN(0, σ²) entries, and P is a per-slot power
scale.  Channel vectors are constant within a slot and independent across
slots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Refuse codebook allocations above this many complex128 entries (~1 GiB).
CODEBOOK_ENTRY_BUDGET = 1 << 26


class BudgetExceededError(RuntimeError):
    """A requested allocation exceeds the configured memory budget."""


def as_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """Coerce a seed or Generator into a Generator (None means seed 0)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = 0
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class SystemConfig:
    """Static link parameters shared by synthesis and decoding.

    Attributes
    ----------
    slot_len : int
        L, complex channel uses per slot.
    bits_per_slot : int
        J, bits carried by one column index; codebook has 2^J columns.
    num_slots : int
        S, slots per outer codeword.
    payload_bits : int
        B, information bits per user message.
    num_antennas : int
        M, receive antennas.
    noise_var : float
        σ², noise variance per complex entry.
    slot_powers : tuple of float
        Per-slot transmit power scale, all ones by default.
    """

    slot_len: int
    bits_per_slot: int
    num_slots: int
    payload_bits: int
    num_antennas: int
    noise_var: float
    slot_powers: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        for name in ("slot_len", "bits_per_slot", "num_slots", "payload_bits",
                     "num_antennas"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.noise_var <= 0.0:
            raise ValueError("noise_var must be positive")
        if not self.slot_powers:
            object.__setattr__(self, "slot_powers", (1.0,) * self.num_slots)
        if len(self.slot_powers) != self.num_slots:
            raise ValueError("slot_powers must have one entry per slot")
        if any(p <= 0.0 for p in self.slot_powers):
            raise ValueError("slot powers must be positive")


@dataclass(frozen=True)
class CodingMatrix:
    """Shared codebook: columns drawn uniformly on the sphere of radius √L."""

    entries: np.ndarray          # (L, 2^J) complex128, read-only
    column_norm_sq: float        # common squared column norm, equals L

    @property
    def slot_len(self) -> int:
        return self.entries.shape[0]

    @property
    def num_columns(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class ActiveSet:
    """Messages picked in one slot and the transmit coefficients behind them.

    ``messages`` is a multiset of column indices (one per active user, repeats
    allowed); ``gains`` holds the matching positive power coefficients.
    """

    messages: np.ndarray
    gains: np.ndarray

    def __post_init__(self) -> None:
        msgs = np.asarray(self.messages, dtype=np.int64)
        gains = np.asarray(self.gains, dtype=np.float64)
        if msgs.ndim != 1 or gains.ndim != 1:
            raise ValueError("messages and gains must be one-dimensional")
        if msgs.shape[0] != gains.shape[0]:
            raise ValueError("messages and gains must have equal length")
        if gains.size and not np.all(gains > 0.0):
            raise ValueError("gains must be positive")
        object.__setattr__(self, "messages", msgs)
        object.__setattr__(self, "gains", gains)

    @property
    def num_active(self) -> int:
        return self.messages.shape[0]


def sample_coding_matrix(
    slot_len: int,
    bits_per_slot: int,
    seed: int | np.random.Generator | None = None,
    *,
    max_entries: int = CODEBOOK_ENTRY_BUDGET,
) -> CodingMatrix:
    """Draw the shared L x 2^J codebook.

    Columns are i.i.d. complex Gaussian vectors rescaled to squared norm
    exactly L, i.e. uniform on the sphere of radius √L.  Deterministic given
    the seed.
    """
    num_cols = 1 << bits_per_slot
    if slot_len * num_cols > max_entries:
        raise BudgetExceededError(
            f"codebook of {slot_len}x{num_cols} entries exceeds the "
            f"budget of {max_entries}"
        )
    rng = as_rng(seed)
    shape = (slot_len, num_cols)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    norms = np.linalg.norm(a, axis=0, keepdims=True)
    a *= np.sqrt(slot_len) / norms
    a.flags.writeable = False
    return CodingMatrix(entries=a, column_norm_sq=float(slot_len))


def build_gamma(active: ActiveSet, bits_per_slot: int) -> np.ndarray:
    """Sum the gains of active users onto their picked column indices.

    Returns the length-2^J nonnegative coefficient vector γ with
    γ_r = Σ_k g_k over users k whose message index equals r.  Colliding
    messages add up.
    """
    num_cols = 1 << bits_per_slot
    msgs = active.messages
    if msgs.size and (msgs.min() < 0 or msgs.max() >= num_cols):
        raise ValueError("message index out of range for the codebook")
    gamma = np.zeros(num_cols, dtype=np.float64)
    np.add.at(gamma, msgs, active.gains)
    return gamma


def synthesize_slot(
    matrix: CodingMatrix,
    gamma: np.ndarray,
    num_antennas: int,
    noise_var: float,
    power: float = 1.0,
    seed: int | np.random.Generator | None = None,
) -> np.ndarray:
    """Generate one slot observation Y = A diag(p γ)^(1/2) H + Z.

    Channel rows are drawn only for the support of γ (in increasing column
    order) so the cost scales with the number of distinct active columns,
    not with 2^J.  ``power`` scales the transmit side, not the noise.
    Deterministic given the seed.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.shape != (matrix.num_columns,):
        raise ValueError("gamma length must match the codebook width")
    if gamma.size and gamma.min() < 0.0:
        raise ValueError("gamma must be nonnegative")
    if num_antennas < 1:
        raise ValueError("num_antennas must be positive")
    if noise_var < 0.0:
        raise ValueError("noise_var must be nonnegative")
    if power <= 0.0:
        raise ValueError("power must be positive")

    rng = as_rng(seed)
    L = matrix.slot_len
    support = np.flatnonzero(gamma)
    y = np.zeros((L, num_antennas), dtype=np.complex128)
    if support.size:
        shape = (support.size, num_antennas)
        h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        h *= np.sqrt(0.5)
        scale = np.sqrt(power * gamma[support])
        y = (matrix.entries[:, support] * scale) @ h
    if noise_var > 0.0:
        z = rng.standard_normal((L, num_antennas)) + 1j * rng.standard_normal(
            (L, num_antennas))
        y += np.sqrt(noise_var / 2.0) * z
    return y


def noise_var_from_ebn0(
    ebn0_db: float, payload_bits: int, num_slots: int, slot_len: int
) -> float:
    """Noise variance for a target Eb/N0 at unit symbol energy.

    The end-to-end rate is R = B / (S L) payload bits per complex use, so
    Eb/N0 = 1 / (R σ²) and σ² = 1 / (R 10^(Eb/N0[dB]/10)).
    """
    if payload_bits < 1 or num_slots < 1 or slot_len < 1:
        raise ValueError("payload_bits, num_slots and slot_len must be positive")
    rate = payload_bits / (num_slots * slot_len)
    return 1.0 / (rate * 10.0 ** (ebn0_db / 10.0))
