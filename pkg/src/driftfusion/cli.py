"""Command-line entry point.

Exit codes: 0 success, 1 a verification property failed, 2 usage error,
3 configuration error, 4 file or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import apply_overrides, config_from_dict, load_config_dict
from .core import ConfigError
from .harness import csv_text, run_experiment, run_sweep
from .stream import PRESETS, Stream, build_schedule
from .verify import CHECKS, FAIL, format_result, run_checks, verify_config_from_dict

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3, 4


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _effective(args) -> dict:
    data = load_config_dict(args.config) if args.config else {}
    extra = []
    if getattr(args, "preset", None):
        extra.append(f"stream.preset={json.dumps(args.preset)}")
    if getattr(args, "seed", None) is not None:
        extra.append(f"harness.seed={args.seed}")
    return apply_overrides(data, extra + list(args.override or []))


def _write_run(out_dir: Path, summary: dict, adaptive_csv: str, static_csv: str) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "adaptive.csv").write_text(adaptive_csv, encoding="utf-8")
    (out_dir / "static.csv").write_text(static_csv, encoding="utf-8")
    _dump_json(summary, out_dir / "summary.json")
    _dump_json(summary["config"], out_dir / "config.json")


def cmd_run(args) -> int:
    cfg = config_from_dict(_effective(args))
    res = run_experiment(cfg)
    out = Path(args.output_dir)
    _write_run(out, res.summary, csv_text(res.adaptive), csv_text(res.static))
    a, s = res.summary["adaptive"], res.summary["static_baseline"]
    print(
        f"{cfg.stream.preset} seed={cfg.seed}: adaptive terminal F1 {a['terminal_f1']:.4f}, "
        f"static terminal F1 {s['terminal_f1']:.4f}, final alpha {res.summary['alpha_final']:.4f} -> {out}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = config_from_dict(_effective(args))
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else list(range(args.n_seeds))
    results = run_sweep(cfg, seeds, args.workers)
    out = Path(args.output_dir)
    merged = {}
    for run_id, summary, adaptive_csv, static_csv in results:
        _write_run(out / run_id, summary, adaptive_csv, static_csv)
        merged[run_id] = {k: summary[k] for k in ("adaptive", "static_baseline", "alpha_final", "actions")}
    _dump_json(merged, out / "sweep.json")
    for run_id, m in merged.items():
        print(f"{run_id}: adaptive F1 {m['adaptive']['terminal_f1']:.4f} static F1 {m['static_baseline']['terminal_f1']:.4f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    data = _effective(args)
    vcfg = verify_config_from_dict(data.get("verify", {}))
    only = [n for chunk in (args.only or []) for n in chunk.split(",") if n]
    results = run_checks(vcfg, only or None)
    for r in results:
        print(format_result(r))
    return EXIT_VERIFY if any(r.status == FAIL for r in results) else EXIT_OK


def cmd_dump_stream(args) -> int:
    cfg = config_from_dict(_effective(args))
    schedule = build_schedule(cfg.stream)
    stream = Stream(schedule, cfg.seed)
    d1, d2 = schedule.d1, schedule.d2
    header = ["t", "i", "y", "drifted"] + [f"x1_{j}" for j in range(d1)] + [f"x2_{j}" for j in range(d2)]
    fh = open(args.output, "w", newline="", encoding="utf-8") if args.output else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t in range(args.start, args.start + args.steps):
            b = stream.batch(t, cfg.batch_size)
            m = schedule.drifted_modality(t)
            for i in range(len(b)):
                w.writerow([t, i, int(b.y[i]), m] + [f"{v:.12g}" for v in b.x1[i]] + [f"{v:.12g}" for v in b.x2[i]])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="driftfusion", description="Drift-adaptive two-modality online learner")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_output_dir=True):
        p.add_argument("--config", help="TOML or JSON config file")
        p.add_argument("--override", action="append", metavar="SECTION.KEY=VALUE", help="repeatable")
        p.add_argument("--seed", type=int)
        p.add_argument("--preset", choices=PRESETS)
        if with_output_dir:
            p.add_argument("--output-dir", default="out")

    p = sub.add_parser("run", help="phase 1 + phase 2 (adaptive and static baseline)")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="independent runs over several seeds, in parallel")
    common(p)
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--n-seeds", type=int, default=4, help="seeds 0..N-1 when --seeds is absent")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="stability and convergence property checks")
    common(p, with_output_dir=False)
    p.add_argument("--only", action="append", metavar="NAME", help=f"subset of {', '.join(CHECKS)}")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("dump-stream", help="write raw stream samples as CSV")
    common(p, with_output_dir=False)
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--output", help="file path (default stdout)")
    p.set_defaults(func=cmd_dump_stream)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        name = getattr(exc, "filename", None)
        print(f"file error: {name + ': ' if name else ''}{exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
