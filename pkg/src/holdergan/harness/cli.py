"""Command line entry point: ``holdergan <subcommand> [--config FILE] ...``.

Exit status is 0 exactly when every verdict of the run passes.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .. import bounds
from .core import default_config, emit_csv, emit_svg, load_config, run

SUBCOMMANDS = {
    "rate": "rate",
    "approx-scaling": "approx_scaling",
    "transport-check": "transport_check",
    "cover-oracle": "covering_oracle",
    "stat-error": "stat_error",
    "bounds": "bounds",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holdergan", description="Desk-scale GAN rate experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment configuration")
        p.add_argument("--seed", type=int, default=None, help="base seed for all replicates")
        p.add_argument("--out-dir", type=Path, default=None, help="directory for CSV/SVG output")
        p.add_argument("--constants-mode", choices=bounds.CONSTANTS_MODES, default=None)
        if name == "rate":
            p.add_argument("--latent", default=None, help="'population', 'n^2' or an integer pool size")
            p.add_argument("--workers", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    kind = SUBCOMMANDS[args.command]
    if args.config is not None:
        cfg = load_config(args.config)
        if cfg.kind != kind:
            print(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}", file=sys.stderr)
            return 2
    else:
        cfg = default_config(kind)
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.out_dir is not None:
        cfg.out_dir = str(args.out_dir)
    if args.constants_mode is not None:
        cfg.constants_mode = args.constants_mode
    if getattr(args, "latent", None) is not None:
        cfg.latent = args.latent if args.latent in ("population", "n^2") else int(args.latent)
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers

    report = run(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(report, out / f"{report.experiment}.csv")
    emit_svg(report, out / f"{report.experiment}.svg")
    if "specs" in report.tables:
        specs = report.tables["specs"]
        with open(out / "architecture_specs.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(specs[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(specs)
        print(f"{'sizing_rule':<15}{'input':>14}{'L':>5}{'p':>7}{'K':>9}  mode")
        for s in specs:
            key, val = s["inputs"].split(";")[0].split("=")
            print(f"{s['sizing_rule']:<15}{key + '=' + format(float(val), '.4g'):>14}{s['L']:>5}{s['p']:>7}"
                  f"{s['K']:>9}  {s['constants_mode']}")
    print(report.summary())
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
