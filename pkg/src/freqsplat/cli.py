"""Command line entry point: ``freqsplat <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flag, missing
or invalid config, missing target).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from . import trainer
from .imaging import ImageBuffer, ImageFormatError, load_image, save_image
from .splat import RenderSettings, SnapshotError, load_snapshot, render
from .suite import SUITE_NAMES, load_suite_image

log = logging.getLogger("freqsplat")

RESOLVED_CONFIG = "resolved_config.cfg"
PLOT_SERIES = ("gaussian_count", "psnr", "kernel_size", "level")
DEFAULT_SUITE_SIZE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, output_required: bool = True) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="setting applied after the config file (repeatable)")
    p.add_argument("--output-dir", required=output_required, help="directory for all outputs (created if absent)")
    p.add_argument("--target", help=f"image path (.png/.ppm) or suite:NAME with NAME in {', '.join(SUITE_NAMES)}")
    p.add_argument("--target-size", type=int, help=f"edge length for suite targets (default {DEFAULT_SUITE_SIZE})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="freqsplat", description="Frequency-modulated 2D Gaussian splatting experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="{train,compare,ablate,render-snapshot,export}",
                                parser_class=_Parser)

    p = sub.add_parser("train", help="train one configuration")
    _common(p)

    p = sub.add_parser("compare", help="train two configurations and write a paired comparison CSV")
    _common(p)
    p.add_argument("--set-a", action="append", default=[], metavar="KEY=VALUE", help="override for run a")
    p.add_argument("--set-b", action="append", default=[], metavar="KEY=VALUE", help="override for run b")
    p.add_argument("--label-a", default="a")
    p.add_argument("--label-b", default="b")

    p = sub.add_parser("ablate", help="grid over schedule families, filters and initial kernel sizes")
    _common(p)
    p.add_argument("--families", help="comma separated schedule families")
    p.add_argument("--filters", help="comma separated filter kinds")
    p.add_argument("--kernel-sizes", help="comma separated odd initial kernel sizes")
    p.add_argument("--seeds", help="comma separated seeds (default: the config seed)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("render-snapshot", help="render a saved snapshot to an image")
    p.add_argument("snapshot", help="snapshot .bin file (its .json sidecar supplies size and background)")
    p.add_argument("--output", required=True, help="output .png or .ppm")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)

    p = sub.add_parser("export", help="write long-format plot data from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--output", help="CSV path (default RUN_DIR/plot_data.csv)")
    return parser


def _split_list(text):
    return [t.strip() for t in text.split(",") if t.strip()] if text else None


def _resolve(args, extra_overrides=()):
    overrides = list(args.override) + list(extra_overrides)
    if args.target:
        overrides.append(f"target={args.target}")
    if args.target_size is not None:
        overrides.append(f"target_size={args.target_size}")
    if args.config:
        cfg, run = cfgmod.load_config(args.config, overrides)
    else:
        settings = cfgmod.parse_overrides(overrides)
        cfg = cfgmod.build_config(settings)
        run = {k: settings[k] for k in cfgmod.RUN_KEYS if k in settings}
    if "target" not in run:
        raise UsageError("no target given (use --target or a target= config key)")
    return cfg, run


def load_target(source: str, size=None) -> tuple[ImageBuffer, dict]:
    """Load ``suite:NAME`` or an image file; return it with canonical run keys."""
    if source.startswith("suite:"):
        name = source.split(":", 1)[1]
        if name not in SUITE_NAMES:
            raise UsageError(f"unknown suite image {name!r}; choose from {', '.join(SUITE_NAMES)}")
        n = int(size) if size is not None else DEFAULT_SUITE_SIZE
        return load_suite_image(name, n), {"target": source, "target_size": str(n)}
    path = Path(source)
    if not path.exists():
        raise UsageError(f"target image not found: {source}")
    return load_image(path), {"target": str(path.resolve())}


def _prepare_output(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise RuntimeError(f"output directory {out} is not writable: {exc}") from exc
    return out


def _cmd_train(args) -> int:
    cfg, run = _resolve(args)
    target, run = load_target(run["target"], run.get("target_size"))
    out = _prepare_output(args.output_dir)
    cfgmod.save_config(cfg, out / RESOLVED_CONFIG, run)
    res = trainer.train(target, cfg, out)
    print(f"final count {res.final_count} peak {res.peak_count} psnr {res.final_psnr:.3f} "
          f"ssim {res.final_ssim:.4f} time {res.wall_time:.1f}s -> {out}")
    return 0


def _cmd_compare(args) -> int:
    cfg_a, run = _resolve(args, args.set_a)
    cfg_b, _ = _resolve(args, args.set_b)
    target, run = load_target(run["target"], run.get("target_size"))
    out = _prepare_output(args.output_dir)
    if args.label_a == args.label_b:
        raise UsageError("--label-a and --label-b must differ")
    for label, cfg in ((args.label_a, cfg_a), (args.label_b, cfg_b)):
        (out / label).mkdir(exist_ok=True)
        cfgmod.save_config(cfg, out / label / RESOLVED_CONFIG, run)
    report = trainer.compare(target, cfg_a, cfg_b, (args.label_a, args.label_b), out)
    for row in report.rows():
        print(", ".join(f"{k}={v}" for k, v in row.items()))
    return 0


def _cmd_ablate(args) -> int:
    base, run = _resolve(args)
    target, run = load_target(run["target"], run.get("target_size"))
    out = _prepare_output(args.output_dir)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    try:
        kernels = [int(k) for k in _split_list(args.kernel_sizes) or []] or None
        seeds = [int(s) for s in _split_list(args.seeds) or []] or [base.seed]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfgmod.save_config(base, out / RESOLVED_CONFIG, run)
    rows = []
    for seed in seeds:
        rows += trainer.ablate(target, dataclasses.replace(base, seed=seed), _split_list(args.families),
                               _split_list(args.filters), kernels, jobs=args.jobs)
    trainer.write_rows_csv(rows, out / "ablation.csv", trainer.ABLATION_FIELDS)
    if kernels and len(kernels) > 1:
        (best_k, best_q), curve = trainer.peak_location(rows)
        trainer.dump_json({"peak_kernel": best_k, "peak_psnr": best_q, "curve": curve}, out / "kernel_peak.json")
    print(f"{len(rows)} rows -> {out / 'ablation.csv'}")
    return 0


def _cmd_render(args) -> int:
    gs, meta = load_snapshot(args.snapshot)
    width = args.width or meta.get("width")
    height = args.height or meta.get("height")
    if not width or not height:
        raise UsageError("snapshot sidecar lacks width/height; pass --width and --height")
    bg = tuple(meta.get("background", (0.0, 0.0, 0.0)))
    img = render(gs, int(width), int(height), settings=RenderSettings(background=bg)).image
    save_image(img, args.output)
    print(f"rendered {len(gs)} Gaussians at {width}x{height} -> {args.output}")
    return 0


def export_plot_data(run_dir, output=None) -> list[tuple[str, str, str]]:
    """Long-format (iteration, series, value) rows from a run's metrics.csv.

    Values are copied verbatim from the source file. With ``output`` the rows
    are also written there as CSV.
    """
    src = Path(run_dir) / "metrics.csv"
    if not src.exists():
        raise FileNotFoundError(f"no metrics.csv in {run_dir}")
    with open(src, newline="") as fh:
        records = list(csv.DictReader(fh))
    rows = [(r["iteration"], s, r[s]) for r in records for s in PLOT_SERIES]
    if output is not None:
        with open(output, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["iteration", "series", "value"])
            wr.writerows(rows)
    return rows


def _cmd_export(args) -> int:
    output = args.output or Path(args.run_dir) / "plot_data.csv"
    rows = export_plot_data(args.run_dir, output)
    print(f"{len(rows)} rows -> {output}")
    return 0


COMMANDS = {
    "train": _cmd_train,
    "compare": _cmd_compare,
    "ablate": _cmd_ablate,
    "render-snapshot": _cmd_render,
    "export": _cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        print(f"freqsplat: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, cfgmod.ConfigError) as exc:
        print(f"freqsplat: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ValueError, ImageFormatError, SnapshotError) as exc:
        print(f"freqsplat: {args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
