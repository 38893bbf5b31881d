"""Command line entry point: ``gfdmim <subcommand> ...``.

Exit codes: 0 success, 2 bad configuration or arguments, 3 refused
infeasible run (ML enumeration above the cap), 4 I/O or file-format error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import complexity as cx
from .config import ConfigError, load_config
from .detectors import ML_CAP, InfeasibleSearch
from .harness import (DETECTORS, DatasetError, MissingModel, ber_sweep, dataset_config,
                      emit_results, generate_dataset, read_dataset, write_dataset, write_metadata)
from .imcodec import candidate_blocks, int_to_bits, nearest_index, table_for
from .modem import build_prototype, modulation_matrix, save_matrix
from .neural import (CheckpointError, HyperParams, TrainingConfig, detect_bits, forward,
                     load_params, save_params, train)

log = logging.getLogger("gfdmim")

EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 2, 3, 4


def parse_snr_list(text: str) -> list[float]:
    """``"0:30:5"`` (inclusive range) or ``"0,10,20"``."""
    if ":" in text:
        lo, hi, step = (float(x) for x in text.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 10) for i in range(n)]
    return [float(x) for x in text.split(",") if x.strip()]


def _config_args(p):
    g = p.add_argument_group("system configuration")
    g.add_argument("--config", type=Path, help="key = value configuration file")
    for name in ("K", "M", "u", "v", "Q"):
        g.add_argument(f"--{name}", type=int)
    g.add_argument("--rolloff", type=float)
    g.add_argument("--ncp", type=int, dest="n_cp")
    g.add_argument("--nch", type=int, dest="n_ch")
    g.add_argument("--channel", choices=("uniform", "epa"), default="epa")
    g.add_argument("--seed", type=int, default=0)


def _config(args):
    return load_config(args.config, K=args.K, M=args.M, u=args.u, v=args.v, Q=args.Q,
                       rolloff=args.rolloff, n_cp=args.n_cp, n_ch=args.n_ch)


def _hyper(args, Q):
    base = HyperParams.for_q(Q) if Q in (2, 4, 16) else HyperParams(16, 64)
    return HyperParams(args.T or base.T, args.tau or base.tau)


def cmd_gen_data(args):
    cfg = _config(args)
    ds = generate_dataset(cfg, args.symbols, args.snr, args.seed, args.channel)
    write_dataset(ds, args.out)
    log.info("wrote %d records to %s", len(ds), args.out)


def cmd_train(args):
    if args.data:
        ds = read_dataset(args.data)
        cfg = dataset_config(ds)
    else:
        cfg = _config(args)
        ds = generate_dataset(cfg, args.symbols, args.train_snr, args.seed, args.channel)
    tc = TrainingConfig(learning_rate=args.lr, batch_size=args.batch, epochs=args.epochs,
                        train_snr_db=ds.header["snr_db"], seed=args.seed, loss=args.loss)
    params, history = train(ds.blocks, ds.bits, tc, _hyper(args, cfg.Q))
    save_params(args.out, params, cfg.v, cfg.Q)
    stem = Path(args.out).with_suffix("")
    with open(f"{stem}_loss.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        w.writerows((i + 1, repr(v)) for i, v in enumerate(history))
    if not args.no_plot:
        from .plotting import plot_loss
        plot_loss(history, f"{stem}_loss.png")


def _model_for(cfg, path):
    params, _ = load_params(path, expect={"u": cfg.u, "v": cfg.v, "Q": cfg.Q, "p": cfg.dims.p})
    return params


def cmd_ber_sweep(args):
    cfg = _config(args)
    detectors = [d for item in args.detector for d in item.split(",") if d]
    model = _model_for(cfg, args.model) if args.model else None
    snrs = parse_snr_list(args.snr)
    records = ber_sweep(cfg, detectors, snrs, args.symbols, args.seed, args.channel, model=model,
                        ml_cap=args.ml_cap, allow_low_confidence=args.allow_low_confidence)
    emit_results(records, args.out)
    stem = Path(args.out).with_suffix("")
    write_metadata(f"{stem}.json", cfg, profile=args.channel, seed=args.seed, symbols=args.symbols,
                   detectors=detectors, snr_db=snrs, model=str(args.model) if args.model else None)
    if not args.no_plot:
        from .plotting import plot_ber
        plot_ber(records, f"{stem}.png", title=f"K={cfg.K}, M={cfg.M}, Q={cfg.Q}")


def cmd_complexity(args):
    explicit = args.config is not None or any(getattr(args, k) is not None for k in ("K", "M", "Q", "u", "v"))
    configs = [_config(args)] if explicit else None
    rows = cx.table_rows(configs, args.lam, args.delta, args.formula)
    text = cx.to_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
        if args.plot:
            from .plotting import plot_complexity
            plot_complexity(rows, Path(args.out).with_suffix(".png"))
    else:
        sys.stdout.write(text)


def cmd_evaluate(args):
    """Block-level BER of the fine detector and the ZF decision on a dataset."""
    ds = read_dataset(args.data)
    cfg = dataset_config(ds)
    params = _model_for(cfg, args.model)
    bits_nn = detect_bits(forward(ds.blocks, params))
    cands = candidate_blocks(table_for(cfg), cfg.constellation)
    bits_zf = int_to_bits(nearest_index(ds.blocks, cands), cfg.dims.p)
    total = ds.bits.size
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["detector", "snr_db", "ber", "bit_errors", "bits_total"])
        for name, bits in (("zf", bits_zf), ("deepconv", bits_nn)):
            err = int(np.count_nonzero(bits != ds.bits))
            w.writerow([name, repr(float(ds.header["snr_db"])), repr(err / total), err, total])
    finally:
        if args.out:
            out.close()


def cmd_inspect(args):
    cfg = _config(args)
    if args.what == "table":
        text = table_for(cfg).dump()
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
        return
    target = args.out or sys.stdout.buffer
    if args.what == "prototype":
        save_matrix(target, build_prototype(cfg)[None, :])
    else:
        save_matrix(target, modulation_matrix(cfg))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfdmim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a ZF-equalised block dataset")
    _config_args(p)
    p.add_argument("--snr", type=float, default=15.0)
    p.add_argument("--symbols", type=int, default=10000)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the fine detector")
    _config_args(p)
    p.add_argument("--data", type=Path, help="dataset from gen-data (else generated)")
    p.add_argument("--symbols", type=int, default=10000)
    p.add_argument("--train-snr", type=float, default=15.0)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=8e-4)
    p.add_argument("--batch", type=int, default=1000)
    p.add_argument("--T", type=int, dest="T")
    p.add_argument("--tau", type=int)
    p.add_argument("--loss", choices=("norm", "squared"), default="norm")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ber-sweep", help="Monte Carlo BER versus SNR")
    _config_args(p)
    p.add_argument("--detector", nargs="+", default=["zf"],
                   help=f"any of {', '.join(DETECTORS)} (space or comma separated)")
    p.add_argument("--snr", default="0:30:5", help="lo:hi:step or comma list, dB")
    p.add_argument("--symbols", type=int, default=10000)
    p.add_argument("--model", type=Path)
    p.add_argument("--ml-cap", type=int, default=ML_CAP)
    p.add_argument("--allow-low-confidence", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_ber_sweep)

    p = sub.add_parser("complexity", help="complex-multiplication counts per detector")
    _config_args(p)
    p.add_argument("--lambda", type=float, dest="lam", default=6)
    p.add_argument("--delta", type=float, default=6)
    p.add_argument("--formula", choices=cx.FORMULAS, default="table2")
    p.add_argument("--out", type=Path)
    p.add_argument("--plot", action="store_true", help="also write a bar chart next to --out")
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="dump the pattern table, prototype or GFDM matrix")
    _config_args(p)
    p.add_argument("what", choices=("table", "prototype", "matrix"))
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except InfeasibleSearch as exc:
        log.error("%s", exc)
        return EXIT_INFEASIBLE
    except (OSError, DatasetError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    except CheckpointError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG if "does not match" in str(exc) else EXIT_IO
    except (ConfigError, MissingModel, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
