"""Command-line entry point.

Exit codes: 0 success, 2 configuration or schema error, 3 numerical
divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, DivergenceError, DynamicsSingularityError, WristError
from .config import load_config
from .experiments import run_experiment
from .metrics import METRIC_NAMES, MetricsReport, compare_runs, compute_metrics
from .plots import emit_plots
from .series_io import read_series

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("tcawrist")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS, help="override the config seed")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help="print nothing on success")

    p = argparse.ArgumentParser(prog="tcawrist", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="open-loop run of a sinusoidal power drive")
    s.add_argument("config")
    s = sub.add_parser("track", parents=[common], help="closed-loop tracking run (nmpc or pid)")
    s.add_argument("config")
    s = sub.add_parser("compare", parents=[common], help="percent improvement of run A over baseline run B")
    s.add_argument("run_a")
    s.add_argument("run_b")
    s = sub.add_parser("metrics", parents=[common], help="tracking metrics of a series CSV")
    s.add_argument("csv")
    s = sub.add_parser("plot", parents=[common], help="write SVG figures for a run directory")
    s.add_argument("run")
    return p


def _say(args, text):
    if not args.quiet:
        print(text)


def _run(args, closed: bool) -> int:
    cfg = load_config(args.config)
    if closed and cfg.controller.kind == "open_loop":
        raise ConfigError(f"{args.config}: 'track' needs controller type nmpc or pid")
    if not closed and cfg.controller.kind != "open_loop":
        raise ConfigError(f"{args.config}: 'simulate' needs controller type open_loop")
    res = run_experiment(cfg, out_dir=args.out, seed=args.seed)
    m = res.metrics
    text = f"{res.directory}: {len(res.series)} samples"
    if m.samples:
        text += f", RMSE theta {m.rmse_theta:.3f} deg, RMSE phi {m.rmse_phi:.3f} deg"
    _say(args, text)
    return EXIT_OK


def _load_metrics(path: Path) -> MetricsReport:
    if path.is_dir():
        mpath = path / "metrics.json"
        if mpath.exists():
            return MetricsReport.from_dict(json.loads(mpath.read_text()))
        path = path / "series.csv"
    if path.suffix == ".json":
        return MetricsReport.from_dict(json.loads(path.read_text()))
    return compute_metrics(read_series(path))


def _compare(args) -> int:
    a, b = _load_metrics(Path(args.run_a)), _load_metrics(Path(args.run_b))
    imp = compare_runs(a, b)
    doc = {"candidate": str(args.run_a), "baseline": str(args.run_b),
           "improvement_percent": imp, "candidate_metrics": a.to_dict(), "baseline_metrics": b.to_dict()}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    for name in METRIC_NAMES:
        v = imp[name]
        _say(args, f"{name:11s} {getattr(a, name):9.4f} {getattr(b, name):9.4f}  "
                   + ("n/a" if v is None else f"{v:+.1f}%"))
    return EXIT_OK


def _metrics(args) -> int:
    m = compute_metrics(read_series(args.csv))
    text = json.dumps(m.to_dict(), indent=2, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(text + "\n")
    _say(args, text)
    return EXIT_OK


def _plot(args) -> int:
    run = Path(args.run)
    csv_path = run / "series.csv" if run.is_dir() else run
    series = read_series(csv_path)
    out = Path(args.out) if args.out else csv_path.parent
    out.mkdir(parents=True, exist_ok=True)
    for path in emit_plots(series, out):
        _say(args, str(path))
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    for name, default in (("out", None), ("seed", None), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    handlers = {
        "simulate": lambda: _run(args, closed=False),
        "track": lambda: _run(args, closed=True),
        "compare": lambda: _compare(args),
        "metrics": lambda: _metrics(args),
        "plot": lambda: _plot(args),
    }
    try:
        return handlers[args.command]()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, DynamicsSingularityError) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except WristError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
