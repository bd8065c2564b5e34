"""Command-line entry point: ``ris-chest run | sweep | selftest``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys

import numpy as np

from .config import RunConfig, SystemConfig, apply_overrides, dump_config, known_keys, load_config
from .harness import ESTIMATORS, ExperimentSpec, format_csv, run_trial, sweep

log = logging.getLogger("ris_chest")


def _float_list(text: str) -> tuple:
    out = []
    for tok in text.replace(",", " ").split():
        out.append(math.inf if tok.lower() in ("inf", "+inf") else float(tok))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return tuple(out)


def _name_list(text: str) -> tuple:
    names = tuple(t for t in text.replace(",", " ").split() if t)
    bad = [n for n in names if n not in ESTIMATORS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"estimators must be among {', '.join(ESTIMATORS)}")
    return names


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int, default=0, help="base seed (trial i uses seed + i)")
    p.add_argument("--full-scale", action="store_true",
                   help="32x32 RIS, 2x8 UE, 64 sub-bands (keeps n_p unless overridden)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key; repeatable")
    # every config key is also a flag of the same name
    for key in known_keys():
        p.add_argument(f"--{key.replace('_', '-')}", dest=f"key_{key}", metavar="V",
                       help=argparse.SUPPRESS)
    p.add_argument("--alignment", choices=("optimal", "unit"), default="optimal",
                   help="NMSE scalar alignment")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ris-chest",
        description="Semi-passive RIS channel estimation: 1-bit matrix completion + EM-GAMP.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="one trial, JSON result on stdout")
    _add_common(run)
    run.add_argument("--snr", type=float, default=None, help="SNR in dB (default: config snr_db)")
    run.add_argument("--estimators", type=_name_list, default=("proposed",))
    run.add_argument("--on-grid", action="store_true", help="draw on-grid (exactly sparse) channels")

    sw = sub.add_parser("sweep", help="Monte-Carlo SNR sweep, CSV output")
    _add_common(sw)
    sw.add_argument("--snr-grid", type=_float_list, default=(0, 5, 10, 15, 20, 25, 30))
    sw.add_argument("--trials", type=int, default=50)
    sw.add_argument("--estimators", type=_name_list, default=ESTIMATORS)
    sw.add_argument("--out", help="CSV path (default: stdout)")
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--on-grid", action="store_true")

    st = sub.add_parser("selftest", help="quick invariant checks; nonzero exit on failure")
    _add_common(st)

    cfg = sub.add_parser("config", help="print the resolved configuration")
    _add_common(cfg)
    return parser


def resolve_config(args) -> RunConfig:
    run = load_config(args.config) if args.config else RunConfig()
    if args.full_scale:
        s = run.system
        full = SystemConfig.full(s.n_p)
        run = apply_overrides(run, {k: getattr(full, k) for k in ("rx_h", "rx_v", "tx_h", "tx_v", "n_k")})
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip().replace("-", "_")] = value
    for key in known_keys():
        value = getattr(args, f"key_{key}", None)
        if value is not None:
            overrides[key] = value
    return apply_overrides(run, overrides) if overrides else run


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def _finite(v):
    return v if not (isinstance(v, float) and not math.isfinite(v)) else str(v)


def cmd_run(args) -> int:
    run = resolve_config(args)
    snr = run.system.snr_db if args.snr is None else args.snr
    spec = ExperimentSpec(run=run, snr_grid=(snr,), trials=1, estimators=args.estimators,
                          base_seed=args.seed, alignment=args.alignment, on_grid=args.on_grid)
    out = []
    for est in args.estimators:
        res = run_trial(spec, est, snr, args.seed)
        out.append({k: _finite(v) for k, v in res.to_dict().items()})
    doc = out[0] if len(out) == 1 else out
    json.dump(doc, sys.stdout, indent=2, default=_json_default)
    sys.stdout.write("\n")
    return 0 if all(r["error"] is None for r in out) else 1


def cmd_sweep(args) -> int:
    run = resolve_config(args)
    spec = ExperimentSpec(run=run, snr_grid=args.snr_grid, trials=args.trials,
                          estimators=args.estimators, base_seed=args.seed, out=args.out,
                          workers=args.workers, alignment=args.alignment, on_grid=args.on_grid)

    def progress(est, seed):
        log.info("done %s seed %d", est, seed)

    rows, results = sweep(spec, progress)
    if not args.out:
        sys.stdout.write(format_csv(rows))
    failed = sum(1 for r in results if not r.ok)
    if failed:
        print(f"{failed} of {len(results)} trials failed", file=sys.stderr)
        return 1
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    failures = run_selftest(resolve_config(args), seed=args.seed)
    for name, message in failures:
        print(f"FAIL {name}: {message}", file=sys.stderr)
    if failures:
        return 1
    print("selftest passed")
    return 0


def cmd_config(args) -> int:
    sys.stdout.write(dump_config(resolve_config(args)))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "selftest": cmd_selftest, "config": cmd_config}
    try:
        return handlers[args.command](args)
    except (KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
