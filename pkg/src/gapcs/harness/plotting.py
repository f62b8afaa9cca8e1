"""Render experiment CSVs to SVG figures.

Figures are built on :class:`matplotlib.figure.Figure` directly (no pyplot
state) and saved with a fixed SVG hash salt and no timestamp, so the same
CSV input always produces byte-identical files.
"""
from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from ..errors import ParseError

_RC = {
    "svg.hashsalt": "gapcs",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
}
_COLORS = {"gap": "#1f5fa8", "ait": "#c4452b"}
_STYLES = ["-", "--", ":", "-."]


def read_table(path, required, numeric=()):
    """Read a headered CSV into ``{column: list}``; numeric columns become floats."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if len(rows) < 2:
        raise ParseError(f"{path}: no data rows")
    header = rows[0]
    missing = [c for c in required if c not in header]
    if missing:
        raise ParseError(f"{path}: missing columns {missing}")
    cols = {h: [] for h in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for h, v in zip(header, row):
            cols[h].append(v)
    for c in numeric:
        try:
            cols[c] = [float(v) if v != "" else np.nan for v in cols[c]]
        except ValueError as exc:
            raise ParseError(f"{path}: column {c!r}: {exc}") from exc
    return cols


def _save(fig, path):
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def _new_figure(ncols=1, width=3.4):
    with matplotlib.rc_context(_RC):
        fig = Figure(figsize=(width * ncols, 2.8), layout="constrained")
        axes = fig.subplots(1, ncols, squeeze=False)[0]
    return fig, axes


def _padded_median(traces):
    """Median across seeds; shorter traces are held at their final value."""
    length = max(len(t) for t in traces)
    stack = np.array([np.pad(t, (0, length - len(t)), mode="edge") for t in traces])
    return np.median(stack, axis=0)


def _plot_convergence(tables, out):
    groups = defaultdict(lambda: defaultdict(list))
    for cols in tables:
        for noise, alg, alpha, seed, err in zip(cols["noise"], cols["algorithm"], cols["alpha"],
                                                cols["seed"], cols["err_w"]):
            groups[(noise, alg, alpha)][seed].append(err)
    noises = [n for n in ("noiseless", "noisy") if any(k[0] == n for k in groups)]
    fig, axes = _new_figure(len(noises))
    alphas = sorted({k[2] for k in groups})
    for ax, noise in zip(axes, noises):
        for alg in ("gap", "ait"):
            for j, alpha in enumerate(alphas):
                seeds = groups.get((noise, alg, alpha))
                if not seeds:
                    continue
                med = _padded_median([np.asarray(v) for v in seeds.values()])
                med = np.maximum(med, 1e-300)
                ax.semilogy(np.arange(1, len(med) + 1), med, color=_COLORS[alg],
                            linestyle=_STYLES[j % len(_STYLES)], label=f"{alg.upper()} a={alpha:g}",
                            gid=f"trace-{noise}-{alg}-{alpha:g}")
        ax.set_title(noise)
        ax.set_xlabel("iteration t")
        ax.set_ylabel(r"median $\|w_t - x^*\|^2$")
        ax.legend(loc="upper right", ncol=2)
    return _save(fig, out)


def _plot_sweep(cols, xcol, out):
    fig, axes = _new_figure(len(set(cols["noise"])))
    for ax, noise in zip(axes, sorted(set(cols["noise"]), key=lambda s: s != "noiseless")):
        for alg in ("gap", "ait"):
            pts = sorted((x, e) for x, e, n, a in zip(cols[xcol], cols["median_final_err_w"], cols["noise"],
                                                      cols["algorithm"]) if n == noise and a == alg)
            if not pts:
                continue
            xs, es = zip(*pts)
            es = np.clip(np.nan_to_num(np.asarray(es), nan=1e12, posinf=1e12), 1e-300, 1e12)
            ax.semilogy(xs, es, "o-", color=_COLORS[alg], markersize=3, label=alg.upper())
        ax.set_title(noise)
        ax.set_xlabel("m*" if xcol == "m_star" else "K")
        ax.set_ylabel("median final error")
        ax.legend()
    return _save(fig, out)


def _plot_noise(cols, out):
    fig, axes = _new_figure(1)
    ax = axes[0]
    true = np.asarray(cols["true_std"])
    est = np.asarray(cols["estimated_std"])
    ax.loglog(true, est, "o", color=_COLORS["gap"], markersize=3, alpha=0.6, label="GAP estimate")
    lim = [true[true > 0].min() / 2, true.max() * 2]
    ax.loglog(lim, lim, "k--", linewidth=0.8, label="truth")
    ax.set_xlabel("true noise std")
    ax.set_ylabel("estimated noise std")
    ax.legend()
    return _save(fig, out)


def _plot_theory(cols, out):
    fig, axes = _new_figure(2)
    g1, g2 = np.asarray(cols["gamma1_star"]), np.asarray(cols["gamma2_star"])
    for ax, (gap, a, b, label) in zip(axes, [(g1, "gamma3_star", "gamma4_star", "noiseless"),
                                            (g2, "gamma5_star", "gamma6_star", "noisy")]):
        ax.loglog(gap, np.asarray(cols[a]), ".", markersize=2, color=_COLORS["ait"], label="AIT branch a")
        ax.loglog(gap, np.asarray(cols[b]), ".", markersize=2, color="#7a7a7a", label="AIT branch b")
        lim = [min(gap.min(), 1e-3), max(gap.max(), 1.0)]
        ax.loglog(lim, lim, "k--", linewidth=0.8)
        ax.set_xlabel("optimal GAP rate")
        ax.set_ylabel("optimal AIT rate")
        ax.set_title(label)
        ax.legend()
    return _save(fig, out)


def _plot_image(cols, out):
    fig, axes = _new_figure(len(set(cols["noise"])))
    for ax, noise in zip(axes, sorted(set(cols["noise"]), key=lambda s: s != "noiseless")):
        for alg in ("gap", "ait"):
            per_seed = defaultdict(list)
            for n, a, s, p in zip(cols["noise"], cols["algorithm"], cols["seed"], cols["psnr"]):
                if n == noise and a == alg:
                    per_seed[s].append(p)
            if per_seed:
                med = _padded_median([np.asarray(v) for v in per_seed.values()])
                ax.plot(np.arange(1, len(med) + 1), med, color=_COLORS[alg], label=alg.upper())
        ax.set_title(noise)
        ax.set_xlabel("iteration t")
        ax.set_ylabel("PSNR (dB)")
        ax.legend()
    return _save(fig, out)


def render_plots(csv_dir, out_dir) -> list[Path]:
    """Render one SVG per experiment whose CSVs are present in ``csv_dir``.

    All inputs are parsed before anything is written, so a malformed CSV
    leaves ``out_dir`` untouched.
    """
    csv_dir, out_dir = Path(csv_dir), Path(out_dir)
    jobs = []
    conv = sorted(csv_dir.glob("convergence_*_alpha*.csv"))
    if conv:
        tables = [read_table(p, ["noise", "algorithm", "alpha", "seed", "err_w"], ["alpha", "err_w"]) for p in conv]
        jobs.append((_plot_convergence, tables, "convergence.svg"))
    for name, xcol in (("m_star_sweep", "m_star"), ("k_sweep", "k")):
        p = csv_dir / f"{name}_summary.csv"
        if p.exists():
            cols = read_table(p, ["noise", xcol, "algorithm", "median_final_err_w"], [xcol, "median_final_err_w"])
            jobs.append((lambda c, o, x=xcol: _plot_sweep(c, x, o), cols, f"{name}.svg"))
    p = csv_dir / "noise_estimation.csv"
    if p.exists():
        jobs.append((_plot_noise, read_table(p, ["true_std", "estimated_std"], ["true_std", "estimated_std"]),
                     "noise_estimation.svg"))
    p = csv_dir / "theory_grid.csv"
    if p.exists():
        gcols = [f"gamma{i}_star" for i in range(1, 7)]
        jobs.append((_plot_theory, read_table(p, gcols, gcols), "theory_grid.svg"))
    p = csv_dir / "image_psnr.csv"
    if p.exists():
        jobs.append((_plot_image, read_table(p, ["seed", "noise", "algorithm", "psnr"], ["psnr"]), "image.svg"))
    if not jobs:
        raise ParseError(f"{csv_dir}: no experiment CSVs found")

    out_dir.mkdir(parents=True, exist_ok=True)
    return [fn(data, out_dir / name) for fn, data, name in jobs]
