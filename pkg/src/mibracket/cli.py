"""Command-line entry point: ``mibracket {estimate,attribute,synth,validate,report}``.

Exit codes: 0 success, 2 config error, 3 data error, 4 training fault,
5 validation failure, 6 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

from . import __version__
from .config import RunConfig
from .data import SyntheticSpec, save_features, synth_generate, write_sidecar
from .errors import ConfigError, MiBracketError, UsageError, ValidationFailure
from .pipeline import estimate, run_attribution
from .report import format_table2, load_report, render_tables, write_report


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {v}")
    return v


def _positive(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _load_config(args):
    cfg = RunConfig.load(args.config) if args.config else RunConfig.from_dict({})
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    if getattr(args, "pairing", None) is not None:
        overrides["pairing"] = args.pairing
    if overrides:
        base = getattr(cfg, "_base", None)
        cfg = dataclasses.replace(cfg, **overrides)
        cfg.validate()
        if base is not None:
            cfg._base = base
    return cfg


def cmd_estimate(args):
    cfg = _load_config(args)
    if not (cfg.combinations and cfg.pairs) and not cfg.synthetic_pairs:
        raise ConfigError("nothing to estimate: configure combinations + pairs or synthetic_pairs")
    t0 = time.perf_counter()
    body = estimate(cfg, log=_log)
    out = write_report(body, args.out, wall_clock=time.perf_counter() - t0)
    print(format_table2(body))
    _log(f"wrote {out}")
    return 0


def cmd_attribute(args):
    cfg = _load_config(args)
    if not cfg.attribution:
        raise ConfigError("attribution section is required (source, filter, dimensions)")
    t0 = time.perf_counter()
    body = run_attribution(cfg, log=_log)
    out = write_report(body, args.out, wall_clock=time.perf_counter() - t0)
    for row in body["attribution"]:
        print(f"{row['dimension']:<20} A_source={row['a_source']:.3f} "
              f"[{row['ci_low']:.3f}, {row['ci_high']:.3f}] A_filter={row['a_filter']:.3f}")
    _log(f"wrote {out}")
    return 0


def cmd_synth(args):
    spec = SyntheticSpec(
        family=args.family,
        dims=(args.dx, args.dy),
        rho=args.rho,
        n=args.n,
        seed=args.seed,
        coupled=args.coupled,
    )
    x, y, true_mi = synth_generate(spec)
    out = Path(args.out)
    save_features(x, out / "x.csv")
    save_features(y, out / "y.csv")
    fields = {**dataclasses.asdict(spec), "dims": list(spec.dims), "coupled": spec.n_coupled}
    write_sidecar(out / "truth.json", true_mi=true_mi if true_mi != float("inf") else "inf", **fields)
    print(f"true_mi={true_mi:.4f}")
    return 0


def cmd_validate(args):
    from . import validation

    if args.k is not None and args.k < 1:
        raise UsageError(f"k must be a positive integer, got {args.k}")
    seeds = tuple(range(args.seeds))
    rhos = tuple(args.rho) if args.rho else validation.GRID_RHOS
    checks = validation.run_all(seeds=seeds, rhos=rhos, k=args.k, log=print)
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    if failed:
        raise ValidationFailure("failed checks:\n  " + "\n  ".join(c.line() for c in failed))
    return 0


def cmd_report(args):
    body = load_report(args.report)
    out = Path(args.out) if args.out else Path(args.report)
    if out.suffix == ".json":
        out = out.parent
    written = render_tables(body, out)
    if body.get("summary"):
        print(format_table2(body))
    _log(f"wrote {', '.join(written) or 'no tables'} to {out}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="mibracket", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_flags(sp):
        sp.add_argument("--config", type=Path, help="JSON run config")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--seed", type=_u64, help="master seed (overrides config)")
        sp.add_argument("--workers", type=_positive, help="process-pool size for ensemble members")
        sp.add_argument("--pairing", choices=("same-rows", "random"), help="row pairing policy")

    sp = sub.add_parser("estimate", help="MI brackets for every configured pair")
    run_flags(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("attribute", help="source/filter shares per dimension")
    run_flags(sp)
    sp.set_defaults(func=cmd_attribute)

    sp = sub.add_parser("synth", help="write a synthetic pair with known MI")
    sp.add_argument("--family", default="correlated-gaussian",
                    choices=("correlated-gaussian", "independent-uniform", "deterministic-map"))
    sp.add_argument("--rho", type=float, default=0.0)
    sp.add_argument("--dx", type=int, default=1)
    sp.add_argument("--dy", type=int, default=1)
    sp.add_argument("--coupled", type=int, help="number of coupled coordinate pairs")
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--seed", type=_u64, default=0)
    sp.add_argument("--out", type=Path, default=Path("synth"))
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("validate", help="run the estimator acceptance battery")
    sp.add_argument("--seeds", type=_positive, default=10, help="seeds per Gaussian cell")
    sp.add_argument("--rho", type=float, action="append", help="restrict the grid (repeatable)")
    sp.add_argument("--k", type=int, help="KSG neighbour count override")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("report", help="re-render tables from a saved report.json")
    sp.add_argument("report", type=Path, help="report.json or its directory")
    sp.add_argument("--out", type=Path, help="table directory (default: next to the report)")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MiBracketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
