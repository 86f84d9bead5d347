"""Command line front end: run, sweep, analyze."""

from __future__ import annotations

import argparse
import sys

from uracov.config import apply_overrides, load_run_config
from uracov.harness import RunConfig, run_sweep
from uracov.treecode import ParityProfile, entropy_bound, sumrate_feasible


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _parse_support(text: str) -> tuple[str, float | None]:
    name, _, arg = text.partition(":")
    if name == "threshold":
        return name, (float(arg) if arg else None)
    if name == "topk":
        return name, (int(arg) if arg else 0)
    raise argparse.ArgumentTypeError(
        "support must look like threshold[:<nu>] or topk[:<delta>]")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--ebn0-db", type=_float_list, metavar="LIST",
                        help="Eb/N0 values in dB, comma separated")
    parser.add_argument("--ka", type=_float_list, metavar="LIST",
                        help="number of active users, comma separated")
    parser.add_argument("--antennas", type=_float_list, metavar="LIST",
                        help="receive antenna counts, comma separated")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--decoder", choices=("ml", "nnls"))
    parser.add_argument("--support", type=_parse_support,
                        help="threshold[:<nu>] or topk[:<delta>]")
    parser.add_argument("--out", help="CSV output path")
    parser.add_argument("--workers", type=int)


def _base_config(args) -> RunConfig:
    config = load_run_config(args.config) if args.config else RunConfig()
    updates = dict(
        trials=args.trials,
        master_seed=args.seed,
        decoder_method=args.decoder,
        out_path=args.out,
        workers=args.workers,
    )
    if args.support is not None:
        mode, param = args.support
        updates["support_mode"] = mode
        if mode == "threshold":
            updates["support_nu"] = param
        else:
            updates["support_delta"] = param
    return apply_overrides(config, **updates)


def _single(name: str, values: list[float] | None) -> float | None:
    if values is None:
        return None
    if len(values) != 1:
        raise SystemExit(f"run takes a single --{name} value, got {values}")
    return values[0]


def _cmd_run(args) -> int:
    config = _base_config(args)
    ebn0 = _single("ebn0-db", args.ebn0_db)
    ka = _single("ka", args.ka)
    antennas = _single("antennas", args.antennas)
    config = apply_overrides(
        config,
        ebn0_db=ebn0,
        num_active=None if ka is None else int(ka),
        num_antennas=None if antennas is None else int(antennas),
        sweep_param=None,
        sweep_values=(),
    )
    rows = run_sweep(config)
    _print_rows(rows)
    return 0


def _cmd_sweep(args) -> int:
    config = _base_config(args)
    axes = [name for name, vals in
            (("ebn0_db", args.ebn0_db), ("ka", args.ka),
             ("antennas", args.antennas)) if vals]
    if len(axes) > 1:
        raise SystemExit("sweep takes exactly one list out of "
                         "--ebn0-db / --ka / --antennas")
    if axes:
        param = axes[0]
        values = {"ebn0_db": args.ebn0_db, "ka": args.ka,
                  "antennas": args.antennas}[param]
        config = apply_overrides(config, sweep_param=param,
                                 sweep_values=tuple(values))
    if config.sweep_param is None:
        raise SystemExit("no sweep axis given (flag or config sweep_param)")
    rows = run_sweep(config)
    _print_rows(rows)
    return 0


def _cmd_analyze(args) -> int:
    config = load_run_config(args.config) if args.config else RunConfig()
    j = args.bits_per_slot or config.bits_per_slot
    profile = ParityProfile.from_parity(config.parity_bits,
                                        config.bits_per_slot)
    rout = args.rout if args.rout is not None else profile.outer_rate
    ka_values = [int(v) for v in (args.ka or [config.num_active])]
    for ka in ka_values:
        bound = entropy_bound(j, ka)
        demand = ka * j * rout
        verdict = "yes" if sumrate_feasible(j, ka, rout) else "no"
        print(f"Ka={ka} J={j} R_out={rout:.6g} sum_rate_bits={demand:.6g} "
              f"entropy_bound_bits={bound:.6g} feasible={verdict}")
    return 0


def _print_rows(rows: list[dict]) -> None:
    for row in rows:
        label = (f"{row['sweep_param']}={row['sweep_value']} "
                 if row["sweep_param"] else "")
        print(f"{label}trials={row['trials']} Ka={row['Ka']} M={row['M']} "
              f"ebn0_db={row['ebn0_db']} p_md={row['p_md']:.6g} "
              f"p_fa={row['p_fa']:.6g} pe={row['pe']:.6g} "
              f"ci={row['ci_half_width']:.3g} "
              f"wall_s={row['wall_seconds']:.1f}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="uracov",
        description="Unsourced random access link simulator "
                    "(covariance decoding + tree code)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one operating point")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="sweep one axis")
    _add_common(p_sweep)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_an = sub.add_parser("analyze",
                          help="outer-code feasibility (entropy bound)")
    p_an.add_argument("--config", help="YAML config file")
    p_an.add_argument("--ka", type=_float_list, metavar="LIST")
    p_an.add_argument("--bits-per-slot", type=int)
    p_an.add_argument("--rout", type=float, help="outer code rate override")
    p_an.set_defaults(func=_cmd_analyze)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
