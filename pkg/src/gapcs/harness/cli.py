"""Command-line entry point: ``gapcs <experiment> [flags]``.

Exit status is 0 when every configuration met its success threshold, 1 when
some did not (CSVs are still written), and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..errors import GapcsError, ParseError
from .experiments import ExperimentSpec, run_experiment
from .plotting import render_plots

log = logging.getLogger("gapcs")

COMMANDS = {
    "convergence": "convergence",
    "mstar-sweep": "m_star_sweep",
    "k-sweep": "k_sweep",
    "noise-est": "noise_estimation",
    "theory-grid": "theory_grid",
    "image": "image",
}

# per-command defaults that differ from ExperimentSpec
_COMMAND_DEFAULTS = {
    "mstar-sweep": {"seeds": "0-4"},
    "k-sweep": {"seeds": "0-4"},
    "image": {"seeds": "0-4"},
    "convergence": {"max_iters": 300},
    "noise-est": {"max_iters": 300},
}


def parse_seeds(text: str) -> list[int]:
    """``"0-19"``, ``"1,5,9"`` or a mix such as ``"0-3,10"``."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds or any(s < 0 for s in seeds):
        raise ValueError(f"bad seed list {text!r}")
    return seeds


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment; list values are comma-separated."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        out[key] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("problem")
    g.add_argument("--m", type=int, help="measurements M (default 300)")
    g.add_argument("--n", type=int, help="signal length N (default 512)")
    g.add_argument("--k", type=int, action="append", help="sparsity K; repeat for k-sweep points")
    g.add_argument("--mstar", type=int, action="append", help="support budget m*; repeat for mstar-sweep points")
    g.add_argument("--alpha", type=float, action="append", help="step size; repeatable")
    g.add_argument("--snr-db", type=str, help="SNR of the noisy condition in dB, or 'none' (default 60)")
    g.add_argument("--matrix", choices=["gaussian", "binary"])
    g.add_argument("--seeds", help="e.g. 0-19 or 0,3,7")
    g.add_argument("--max-iters", type=int)
    r = common.add_argument_group("run")
    r.add_argument("--out", type=Path, help="output directory (default results/<command>)")
    r.add_argument("--workers", type=int, help="parallel jobs (default 1)")
    r.add_argument("--config", type=Path, help="key=value file; flags override it")
    r.add_argument("--no-plot", action="store_true", default=None, help="write CSVs only")
    r.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gapcs", description="GAP vs AIT compressive sensing experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("convergence", parents=[common], help="error traces for GAP and AIT")
    sub.add_parser("mstar-sweep", parents=[common], help="final error versus m* at fixed K")
    sub.add_parser("k-sweep", parents=[common], help="final error versus K with m* = K")
    p = sub.add_parser("noise-est", parents=[common], help="noise std recovered by GAP")
    p.add_argument("--sigma", type=float, action="append", help="true noise std; repeatable")
    p = sub.add_parser("theory-grid", parents=[common], help="optimal-rate grid and theorem report")
    p.add_argument("--points", type=int)
    p = sub.add_parser("image", parents=[common], help="patch-DCT image compressive sensing")
    p.add_argument("--image", type=Path, help="8-bit binary PGM (default: built-in 64x64 test image)")
    p.add_argument("--rate", type=float)
    p.add_argument("--patch", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--mstar-fraction", type=float)
    p = sub.add_parser("plot", help="render SVG figures from a results directory")
    p.add_argument("csv_dir", type=Path)
    p.add_argument("--out", type=Path, help="figure directory (default: csv_dir)")
    return parser


def _merge(args, command) -> dict:
    """Combine command defaults, config file and flags (flags win)."""
    values = dict(_COMMAND_DEFAULTS.get(command, {}))
    if args.config is not None:
        from_file = read_config(args.config)
        unknown = sorted(set(from_file) - set(vars(args)) - {"command"})
        if unknown:
            raise ParseError(f"{args.config}: unknown keys for '{command}': {', '.join(unknown)}")
        values.update(from_file)
    for key, val in vars(args).items():
        if val is None or key in ("command", "config"):
            continue
        values[key] = val
    return values


def _truthy(value) -> bool:
    return str(value).strip().lower() in ("1", "true", "yes", "on")


def _as_list(value, cast):
    if isinstance(value, list):
        return [cast(v) for v in value]
    return [cast(v) for v in str(value).split(",") if v.strip()]


def spec_from_values(command: str, v: dict) -> ExperimentSpec:
    kw = {"experiment": COMMANDS[command]}
    for key, field_name, cast in [("m", "m", int), ("n", "n", int), ("matrix", "matrix_kind", str),
                                  ("workers", "workers", int), ("max_iters", "max_iters", int),
                                  ("points", "grid_points", int), ("rate", "rate", float),
                                  ("patch", "patch", int), ("stride", "stride", int),
                                  ("mstar_fraction", "m_star_fraction", float)]:
        if key in v:
            kw[field_name] = cast(v[key])
    if "image" in v:
        kw["image_path"] = Path(v["image"])
    if command == "image" and "max_iters" in kw:
        kw["image_iters"] = kw.pop("max_iters")
    if "seeds" in v:
        kw["seeds"] = v["seeds"] if isinstance(v["seeds"], list) else parse_seeds(v["seeds"])
    if "snr_db" in v:
        kw["snr_db"] = None if str(v["snr_db"]).lower() in ("none", "inf", "off") else float(v["snr_db"])
    if "alpha" in v:
        alphas = _as_list(v["alpha"], float)
        kw["alphas"] = alphas
        kw["sweep_alpha"] = alphas[0]
    if "k" in v:
        ks = _as_list(v["k"], int)
        if command == "k-sweep":
            kw["k_values"] = ks
        else:
            kw["k"] = ks[0]
    if "mstar" in v:
        ms = _as_list(v["mstar"], int)
        if command == "mstar-sweep":
            kw["m_star_values"] = ms
        else:
            kw["m_star"] = ms[0]
    if "sigma" in v:
        kw["noise_stds"] = _as_list(v["sigma"], float)
    kw["output_dir"] = Path(v["out"]) if "out" in v else Path("results") / command
    return ExperimentSpec(**kw)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")

    if args.command == "plot":
        try:
            paths = render_plots(args.csv_dir, args.out or args.csv_dir)
        except ParseError as exc:
            print(f"gapcs: {exc}", file=sys.stderr)
            return 2
        for p in paths:
            print(p)
        return 0

    try:
        values = _merge(args, args.command)
        spec = spec_from_values(args.command, values)
    except (ValueError, GapcsError, OSError) as exc:
        print(f"gapcs: {exc}", file=sys.stderr)
        return 2

    try:
        result = run_experiment(spec)
    except (GapcsError, OSError) as exc:
        print(f"gapcs: {exc}", file=sys.stderr)
        return 2
    files = list(result.files)
    if not _truthy(values.get("no_plot", False)):
        files += render_plots(spec.output_dir, spec.output_dir)
    for f in files:
        print(f)
    if result.failures:
        log.warning("%s: %d configuration(s) below success threshold", result.experiment, result.failures)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
