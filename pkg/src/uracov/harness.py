"""Monte-Carlo link simulation tying channel, decoder and tree code together.

One trial draws K_a uniform payloads, tree-encodes them, synthesizes every
slot observation, recovers per-slot candidate lists with the covariance
decoder, stitches them back into payloads, and scores missed detections
and false alarms.  Trials are fully deterministic given (master_seed,
trial index), which also makes results independent of how trials are
distributed over worker processes.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import repeat

import numpy as np

from uracov.channel import (
    ActiveSet,
    build_gamma,
    noise_var_from_ebn0,
    sample_coding_matrix,
    synthesize_slot,
)
from uracov.decoder import (
    DecoderSettings,
    coordinate_descent,
    sample_covariance,
    threshold_support,
    topk_support,
)
from uracov.treecode import (
    ParityProfile,
    TreeCodebook,
    bits_to_payloads,
    outer_encode_batch,
    tree_decode,
)

# Parity layout used by the default experiments: a 12-bit info-only first
# slot, 28 slots with 9 parity bits, then 3 parity-only slots (B = 96).
DEFAULT_PARITY_BITS = (0,) + (9,) * 28 + (12,) * 3

CSV_COLUMNS = [
    "sweep_param", "sweep_value", "trials", "Ka", "M", "L", "J", "S", "B",
    "ebn0_db", "decoder", "p_md", "p_fa", "pe", "ci_half_width",
    "wall_seconds", "seed",
]

_SWEEP_FIELDS = {
    "ebn0_db": "ebn0_db",
    "ka": "num_active",
    "antennas": "num_antennas",
}


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent substream addressed by a tuple under one master seed."""
    ss = np.random.SeedSequence(int(master_seed),
                                spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs; defaults mirror the stock setup."""

    slot_len: int = 100
    bits_per_slot: int = 12
    num_slots: int = 32
    num_antennas: int = 300
    num_active: int = 300
    ebn0_db: float = 0.0
    parity_bits: tuple[int, ...] = DEFAULT_PARITY_BITS
    parity_seed: int = 0
    gain: float = 1.0
    gain_range: tuple[float, float] | None = None
    slot_powers: tuple[float, ...] | None = None
    decoder: DecoderSettings = field(default_factory=DecoderSettings)
    support_mode: str = "threshold"     # "threshold" or "topk"
    support_nu: float | tuple[float, ...] | None = None
    support_delta: int = 0
    trials: int = 100
    master_seed: int = 1
    sweep_param: str | None = None      # "ebn0_db", "ka" or "antennas"
    sweep_values: tuple[float, ...] = ()
    out_path: str | None = None
    workers: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "parity_bits", tuple(self.parity_bits))
        if self.slot_powers is not None:
            object.__setattr__(self, "slot_powers", tuple(self.slot_powers))
        if self.gain_range is not None:
            object.__setattr__(self, "gain_range", tuple(self.gain_range))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        ParityProfile.from_parity(self.parity_bits, self.bits_per_slot)
        if len(self.parity_bits) != self.num_slots:
            raise ValueError("parity_bits must list one entry per slot")
        if self.num_active < 0:
            raise ValueError("num_active must be nonnegative")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.gain <= 0.0:
            raise ValueError("gain must be positive")
        if self.gain_range is not None:
            lo, hi = self.gain_range
            if not 0.0 < lo <= hi:
                raise ValueError("gain_range must satisfy 0 < lo <= hi")
        if self.slot_powers is not None and len(self.slot_powers) != self.num_slots:
            raise ValueError("slot_powers must list one entry per slot")
        if self.support_mode not in ("threshold", "topk"):
            raise ValueError("support_mode must be 'threshold' or 'topk'")
        if isinstance(self.support_nu, (tuple, list)):
            object.__setattr__(self, "support_nu",
                               tuple(float(v) for v in self.support_nu))
            if len(self.support_nu) != self.num_slots:
                raise ValueError("per-slot support_nu must list one entry "
                                 "per slot")
        if self.support_delta < 0:
            raise ValueError("support_delta must be nonnegative")
        if self.sweep_param is not None:
            if self.sweep_param not in _SWEEP_FIELDS:
                raise ValueError("sweep_param must be one of "
                                 + ", ".join(sorted(_SWEEP_FIELDS)))
            if not self.sweep_values:
                raise ValueError("sweep_values must be nonempty when sweeping")
        if not isinstance(self.decoder, DecoderSettings):
            raise TypeError("decoder must be a DecoderSettings instance")

    @property
    def payload_bits(self) -> int:
        return sum(self.bits_per_slot - p for p in self.parity_bits)

    @property
    def noise_var(self) -> float:
        return noise_var_from_ebn0(self.ebn0_db, self.payload_bits,
                                   self.num_slots, self.slot_len)


@dataclass(frozen=True)
class TrialRecord:
    """Outcome counts of one decoded trial."""

    trial_index: int
    num_active: int
    missed: int
    false_alarms: int
    list_size: int

    def __post_init__(self) -> None:
        if not 0 <= self.missed <= self.num_active:
            raise ValueError("missed count must lie in [0, num_active]")
        if not 0 <= self.false_alarms <= self.list_size:
            raise ValueError("false alarm count must lie in [0, list_size]")


@dataclass(frozen=True)
class Metrics:
    """Pooled error rates with binomial confidence half-widths."""

    p_md: float
    p_fa: float
    pe: float
    md_half_width: float
    fa_half_width: float
    pe_half_width: float
    md_events: int
    md_total: int
    fa_events: int
    fa_total: int


@lru_cache(maxsize=8)
def _cached_matrix(slot_len: int, bits_per_slot: int, master_seed: int):
    return sample_coding_matrix(slot_len, bits_per_slot,
                                derive_rng(master_seed, 0))


@lru_cache(maxsize=8)
def _cached_codebook(parity_bits: tuple, bits_per_slot: int,
                     parity_seed: int) -> TreeCodebook:
    profile = ParityProfile.from_parity(parity_bits, bits_per_slot)
    return TreeCodebook(profile, parity_seed)


def _slot_threshold(config: RunConfig, gains: np.ndarray, slot: int,
                    power: float) -> float:
    if config.support_nu is None:
        base = float(gains.min()) if gains.size else config.gain
        return 0.5 * base * power
    if isinstance(config.support_nu, (tuple, list)):
        return float(config.support_nu[slot])
    return float(config.support_nu)


def run_trial(config: RunConfig, trial_index: int) -> TrialRecord:
    """Simulate and decode one complete multi-slot transmission."""
    matrix = _cached_matrix(config.slot_len, config.bits_per_slot,
                            config.master_seed)
    codebook = _cached_codebook(config.parity_bits, config.bits_per_slot,
                                config.parity_seed)
    ka = config.num_active
    sigma2 = config.noise_var
    powers = config.slot_powers or (1.0,) * config.num_slots

    pay_rng = derive_rng(config.master_seed, trial_index, 0)
    bits = pay_rng.integers(0, 2, size=(ka, config.payload_bits),
                            dtype=np.uint8)
    if config.gain_range is not None:
        gain_rng = derive_rng(config.master_seed, trial_index, 1)
        gains = gain_rng.uniform(config.gain_range[0], config.gain_range[1],
                                 size=ka)
    else:
        gains = np.full(ka, config.gain, dtype=np.float64)
    blocks = outer_encode_batch(bits, codebook)

    slot_lists = []
    for s in range(config.num_slots):
        active = ActiveSet(messages=blocks[:, s], gains=gains)
        gamma = build_gamma(active, config.bits_per_slot)
        y = synthesize_slot(
            matrix, gamma, config.num_antennas, sigma2, power=powers[s],
            seed=derive_rng(config.master_seed, trial_index, 2, s),
        )
        sc = sample_covariance(y)
        gamma_hat = coordinate_descent(
            sc, matrix, sigma2, config.decoder,
            rng=derive_rng(config.master_seed, trial_index, 3, s),
        )
        if config.support_mode == "threshold":
            decision = threshold_support(
                gamma_hat, _slot_threshold(config, gains, s, powers[s]))
        else:
            decision = topk_support(gamma_hat, ka + config.support_delta)
        slot_lists.append(decision.indices)

    decoded = tree_decode(slot_lists, codebook)
    sent = set(bits_to_payloads(bits)) if ka else set()
    missed = len(sent - decoded)
    false_alarms = len(decoded - sent)
    return TrialRecord(
        trial_index=trial_index,
        num_active=ka,
        missed=missed,
        false_alarms=false_alarms,
        list_size=len(decoded),
    )


def _proportion_half_width(events: int, total: int) -> float:
    """95% half-width: normal approximation, Wilson below 20 events."""
    if total == 0:
        return 0.0
    z = 1.959963984540054
    p = events / total
    if events < 20:
        half = z * math.sqrt(p * (1.0 - p) / total + z * z / (4.0 * total * total))
        return half / (1.0 + z * z / total)
    return z * math.sqrt(p * (1.0 - p) / total)


def compute_metrics(records) -> Metrics:
    """Pool per-trial counts into error rates; empty ratios count as zero."""
    records = list(records)
    if not records:
        raise ValueError("need at least one trial record")
    md_events = sum(r.missed for r in records)
    md_total = sum(r.num_active for r in records)
    fa_events = sum(r.false_alarms for r in records)
    fa_total = sum(r.list_size for r in records)
    p_md = md_events / md_total if md_total else 0.0
    p_fa = fa_events / fa_total if fa_total else 0.0
    md_hw = _proportion_half_width(md_events, md_total)
    fa_hw = _proportion_half_width(fa_events, fa_total)
    return Metrics(
        p_md=p_md,
        p_fa=p_fa,
        pe=p_md + p_fa,
        md_half_width=md_hw,
        fa_half_width=fa_hw,
        pe_half_width=math.hypot(md_hw, fa_hw),
        md_events=md_events,
        md_total=md_total,
        fa_events=fa_events,
        fa_total=fa_total,
    )


def _run_trials(config: RunConfig, workers: int | None) -> list[TrialRecord]:
    n = config.trials
    if workers is None:
        workers = config.workers if config.workers else (os.cpu_count() or 1)
    workers = max(1, min(int(workers), n))
    if workers == 1:
        return [run_trial(config, i) for i in range(n)]
    chunk = max(1, n // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_trial, repeat(config), range(n),
                             chunksize=chunk))


def _apply_sweep_value(config: RunConfig, value) -> RunConfig:
    if value is None:
        return config
    name = _SWEEP_FIELDS[config.sweep_param]
    if name in ("num_active", "num_antennas"):
        return replace(config, **{name: int(value)})
    return replace(config, **{name: float(value)})


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


class _CsvSink:
    """Append-mode CSV writer that flushes after every row."""

    def __init__(self, path: str):
        fresh = not (os.path.exists(path) and os.path.getsize(path) > 0)
        self._fh = open(path, "a", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if fresh:
            self._writer.writerow(CSV_COLUMNS)
            self._fh.flush()

    def write_row(self, row: dict) -> None:
        self._writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def run_sweep(config: RunConfig, *, workers: int | None = None,
              clock=time.perf_counter) -> list[dict]:
    """Run the configured experiment, one result row per sweep value.

    Without a sweep axis a single row is produced.  Rows are appended to
    ``config.out_path`` (with a header when the file is new) and flushed
    one by one, so partial results survive interruption.  ``clock`` feeds
    the wall_seconds column and can be replaced for reproducible output.
    """
    values = list(config.sweep_values) if config.sweep_param else [None]
    sink = _CsvSink(config.out_path) if config.out_path else None
    rows: list[dict] = []
    try:
        for value in values:
            cfg = _apply_sweep_value(config, value)
            start = clock()
            records = _run_trials(cfg, workers)
            wall = clock() - start
            metrics = compute_metrics(records)
            row = {
                "sweep_param": config.sweep_param or "",
                "sweep_value": "" if value is None else value,
                "trials": cfg.trials,
                "Ka": cfg.num_active,
                "M": cfg.num_antennas,
                "L": cfg.slot_len,
                "J": cfg.bits_per_slot,
                "S": cfg.num_slots,
                "B": cfg.payload_bits,
                "ebn0_db": cfg.ebn0_db,
                "decoder": cfg.decoder.method,
                "p_md": metrics.p_md,
                "p_fa": metrics.p_fa,
                "pe": metrics.pe,
                "ci_half_width": metrics.pe_half_width,
                "wall_seconds": wall,
                "seed": cfg.master_seed,
            }
            rows.append(row)
            if sink is not None:
                sink.write_row(row)
    finally:
        if sink is not None:
            sink.close()
    return rows
