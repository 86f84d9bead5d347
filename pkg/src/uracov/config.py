"""YAML experiment configuration.

A config file carries up to five sections; every key is optional and
unknown keys are rejected:

    system:   slot_len, bits_per_slot, num_slots, num_antennas, ebn0_db,
              slot_powers
    code:     parity_bits, parity_seed, gain, gain_range
    decoder:  method, max_sweeps, rel_tol, schedule, resync_period
    support:  mode, nu, delta
    run:      num_active, trials, master_seed, sweep_param, sweep_values,
              out, workers
"""

from __future__ import annotations

from dataclasses import replace

import yaml

from uracov.decoder import DecoderSettings
from uracov.harness import RunConfig

_SECTIONS = {
    "system": {
        "slot_len": ("slot_len", int),
        "bits_per_slot": ("bits_per_slot", int),
        "num_slots": ("num_slots", int),
        "num_antennas": ("num_antennas", int),
        "ebn0_db": ("ebn0_db", float),
        "slot_powers": ("slot_powers", lambda v: tuple(float(x) for x in v)),
    },
    "code": {
        "parity_bits": ("parity_bits", lambda v: tuple(int(x) for x in v)),
        "parity_seed": ("parity_seed", int),
        "gain": ("gain", float),
        "gain_range": ("gain_range", lambda v: tuple(float(x) for x in v)),
    },
    "support": {
        "mode": ("support_mode", str),
        "nu": ("support_nu",
               lambda v: tuple(float(x) for x in v)
               if isinstance(v, (list, tuple)) else float(v)),
        "delta": ("support_delta", int),
    },
    "run": {
        "num_active": ("num_active", int),
        "trials": ("trials", int),
        "master_seed": ("master_seed", int),
        "sweep_param": ("sweep_param", str),
        "sweep_values": ("sweep_values", lambda v: tuple(float(x) for x in v)),
        "out": ("out_path", str),
        "workers": ("workers", int),
    },
}

_DECODER_KEYS = {
    "method": str,
    "max_sweeps": int,
    "rel_tol": float,
    "schedule": str,
    "resync_period": int,
}


def config_from_mapping(data: dict) -> RunConfig:
    """Build a RunConfig from a parsed config mapping, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ValueError("config root must be a mapping of sections")
    unknown = set(data) - set(_SECTIONS) - {"decoder"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")

    fields: dict = {}
    for section, keys in _SECTIONS.items():
        body = data.get(section) or {}
        if not isinstance(body, dict):
            raise ValueError(f"section '{section}' must be a mapping")
        bad = set(body) - set(keys)
        if bad:
            raise ValueError(f"unknown keys in '{section}': {sorted(bad)}")
        for key, value in body.items():
            name, conv = keys[key]
            fields[name] = None if value is None else conv(value)

    dec_body = data.get("decoder") or {}
    if not isinstance(dec_body, dict):
        raise ValueError("section 'decoder' must be a mapping")
    bad = set(dec_body) - set(_DECODER_KEYS)
    if bad:
        raise ValueError(f"unknown keys in 'decoder': {sorted(bad)}")
    dec_kwargs = {k: _DECODER_KEYS[k](v) for k, v in dec_body.items()}
    fields["decoder"] = DecoderSettings(**dec_kwargs)

    return RunConfig(**fields)


def load_run_config(path: str) -> RunConfig:
    """Parse a YAML config file into a RunConfig."""
    with open(path, "r") as fh:
        data = yaml.safe_load(fh)
    return config_from_mapping(data or {})


def apply_overrides(config: RunConfig, **updates) -> RunConfig:
    """Replace fields, skipping entries whose value is None."""
    updates = {k: v for k, v in updates.items() if v is not None}
    if "decoder_method" in updates:
        method = updates.pop("decoder_method")
        updates["decoder"] = replace(config.decoder, method=method)
    return replace(config, **updates) if updates else config
