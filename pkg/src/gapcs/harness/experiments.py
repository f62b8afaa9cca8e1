"""Desk-scale reproductions of the GAP vs AIT simulation study.

Each runner takes an :class:`ExperimentSpec`, writes its CSV files into
``spec.output_dir`` and returns an :class:`ExperimentResult` listing the
files, the summary rows and how many configurations failed their success
threshold. Runs are deterministic functions of ``(spec, seeds)``.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import build_operator, make_problem, rip_constant_sampled
from ..errors import DomainError
from ..imaging import ImageCsSpec, read_pgm, run_image_cs, synthetic_image, write_pgm
from ..solvers import Algorithm, SolverConfig, StopReason, estimate_noise, run_solver
from ..theory import TheoryInputs, certify, optimal_rates, reports_to_text, write_reports_json
from .generators import (
    add_noise,
    gaussian_noise,
    gen_sensing_matrix,
    gen_sparse_signal,
)

EXPERIMENTS = ("convergence", "m_star_sweep", "k_sweep", "noise_estimation", "theory_grid", "image")

# final ||w_t - x*||^2 below which a run counts as a successful recovery
SUCCESS_NOISELESS = 1e-6
SUCCESS_NOISY = 1e-1
CONVERGENCE_TARGET = 1e-8
PLATEAU_WINDOW = 10


@dataclass
class ExperimentSpec:
    experiment: str = "convergence"
    matrix_kind: str = "gaussian"
    m: int = 300
    n: int = 512
    k: int = 20
    m_star: int | None = None
    alphas: list = field(default_factory=lambda: [0.9, 1.0, 1.1])
    snr_db: float | None = 60.0
    seeds: list = field(default_factory=lambda: list(range(20)))
    output_dir: Path = Path("results")
    workers: int = 1
    max_iters: int = 500
    sweep_alpha: float = 1.0
    m_star_values: list = field(default_factory=lambda: list(range(10, 101, 10)))
    k_values: list = field(default_factory=lambda: list(range(5, 51, 5)))
    noise_stds: list = field(default_factory=lambda: [1e-4, 1e-3, 1e-2, 1e-1])
    noise_tolerance: float = 0.10
    grid_points: int = 1000
    image_path: Path | None = None
    image_size: int = 64
    rate: float = 0.10
    patch: int = 8
    stride: int = 4
    m_star_fraction: float = 0.10
    image_iters: int = 300

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}")
        if self.m_star is None:
            self.m_star = self.k
        if not 1 <= self.m < self.n:
            raise DomainError(f"need 1 <= m < n, got m={self.m}, n={self.n}")
        if self.k < 1 or self.m_star < 1:
            raise DomainError("k and m_star must be positive")
        if not self.seeds:
            raise DomainError("at least one seed is required")
        self.output_dir = Path(self.output_dir)

    @property
    def noise_conditions(self):
        out = [("noiseless", None)]
        if self.snr_db is not None:
            out.append(("noisy", self.snr_db))
        return out


@dataclass
class ExperimentResult:
    experiment: str
    files: list
    summary: list
    failures: int = 0
    rows: list = field(default_factory=list)  # per-run records behind the summary


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (StopReason, Algorithm)):
        return v.value
    return str(v)


def write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            values = [row[h] for h in header] if isinstance(row, dict) else row
            out.writerow([_fmt(v) for v in values])
    return path


def _run_jobs(fn, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def make_instance(m, n, k, kind, seed, snr_db=None, noise_std=None):
    """Operator, K-sparse truth and measurements for one seed."""
    op = build_operator(gen_sensing_matrix(m, n, kind, seed))
    x = gen_sparse_signal(n, k, seed)
    noise = None
    if snr_db is not None:
        _, noise = add_noise(op.forward(x), snr_db, seed)
    elif noise_std is not None:
        noise = gaussian_noise(m, noise_std, seed)
    return make_problem(op, x, noise)


def _success_threshold(noise: str) -> float:
    return SUCCESS_NOISELESS if noise == "noiseless" else SUCCESS_NOISY


def _median(values):
    vals = [v for v in values if v is not None]
    return float(np.median(vals)) if vals else float("nan")


# --- convergence traces -------------------------------------------------------

def _convergence_job(args):
    spec, seed, noise, snr = args
    problem = make_instance(spec.m, spec.n, spec.k, spec.matrix_kind, seed, snr_db=snr)
    out = []
    for alpha in spec.alphas:
        for alg in Algorithm:
            cfg = SolverConfig(
                algorithm=alg, alpha=alpha, m_star=spec.m_star, max_iters=spec.max_iters,
                track_truth=problem.x_true, keep_iterates=False, check_identity=True,
            )
            tr = run_solver(problem, cfg)
            tail = tr.err_w[-PLATEAU_WINDOW:]
            out.append({
                "seed": seed, "noise": noise, "algorithm": alg.value, "alpha": alpha,
                "err_w": tr.err_w, "err_theta": tr.err_theta, "lambda": tr.lambdas,
                "support_size": [len(s) for s in tr.supports],
                "iters_to_target": tr.iterations_to(CONVERGENCE_TARGET),
                "initial_err": tr.err_w[0],
                "plateau_err": float(np.mean(tail)),
                "plateau_spread": float((np.max(tail) - np.min(tail)) / np.mean(tail)) if np.mean(tail) > 0 else 0.0,
                "max_support": int(tr.support_sizes.max()),
                "final_err_w": tr.final_err_w,
                "iterations_run": tr.iterations_run,
                "stop_reason": tr.stop_reason,
                "identity_residual": tr.max_identity_residual if alg is Algorithm.GAP else None,
            })
    return out


def run_convergence_experiment(spec: ExperimentSpec) -> ExperimentResult:
    jobs = [(spec, s, noise, snr) for s in spec.seeds for noise, snr in spec.noise_conditions]
    runs = [r for batch in _run_jobs(_convergence_job, jobs, spec.workers) for r in batch]

    files = []
    keys = sorted({(r["noise"], r["algorithm"], r["alpha"]) for r in runs})
    header = ["matrix", "noise", "algorithm", "alpha", "seed", "iter", "err_w", "err_theta", "lambda", "support_size"]
    for noise, alg, alpha in keys:
        rows = []
        for r in runs:
            if (r["noise"], r["algorithm"], r["alpha"]) != (noise, alg, alpha):
                continue
            for i in range(len(r["err_w"])):
                rows.append([spec.matrix_kind, noise, alg, alpha, r["seed"], i + 1,
                             r["err_w"][i], r["err_theta"][i], r["lambda"][i], r["support_size"][i]])
        files.append(write_csv(spec.output_dir / f"convergence_{noise}_{alg}_alpha{alpha:g}.csv", header, rows))

    summary, failures = [], 0
    for r in runs:
        ok = r["final_err_w"] < _success_threshold(r["noise"])
        failures += not ok
        summary.append({
            "matrix": spec.matrix_kind, "noise": r["noise"], "algorithm": r["algorithm"],
            "alpha": r["alpha"], "seed": r["seed"], "iters_to_1e-8": r["iters_to_target"],
            "initial_err": r["initial_err"], "plateau_err": r["plateau_err"],
            "plateau_spread": r["plateau_spread"], "final_err_w": r["final_err_w"],
            "max_support": r["max_support"],
            "iterations_run": r["iterations_run"], "stop_reason": r["stop_reason"],
            "identity_residual": r["identity_residual"], "success": ok,
        })
    files.append(write_csv(spec.output_dir / "convergence_summary.csv", list(summary[0]), summary))

    medians = []
    for noise, alg, alpha in keys:
        sel = [s for s in summary if (s["noise"], s["algorithm"], s["alpha"]) == (noise, alg, alpha)]
        iters = [s["iters_to_1e-8"] if s["iters_to_1e-8"] is not None else math.inf for s in sel]
        medians.append({
            "noise": noise, "algorithm": alg, "alpha": alpha,
            "median_iters_to_1e-8": float(np.median(iters)),
            "median_plateau_err": _median([s["plateau_err"] for s in sel]),
            "n_seeds": len(sel),
        })
    files.append(write_csv(spec.output_dir / "convergence_medians.csv", list(medians[0]), medians))
    return ExperimentResult("convergence", files, summary, failures, summary)


# --- m* and K sweeps ------------------------------------------------------------

def _sweep_job(args):
    spec, seed, noise, snr, points = args
    out = []
    for k, m_star in points:
        problem = make_instance(spec.m, spec.n, k, spec.matrix_kind, seed, snr_db=snr)
        thr = _success_threshold(noise)
        for alg in Algorithm:
            cfg = SolverConfig(
                algorithm=alg, alpha=spec.sweep_alpha, m_star=m_star, max_iters=spec.max_iters,
                track_truth=problem.x_true, truth_tol=thr, keep_iterates=False, check_identity=True,
            )
            tr = run_solver(problem, cfg)
            out.append({
                "noise": noise, "k": k, "m_star": m_star, "algorithm": alg.value, "seed": seed,
                "final_err_w": tr.final_err_w, "iterations_run": tr.iterations_run,
                "max_support": int(tr.support_sizes.max()),
                "identity_residual": tr.max_identity_residual if alg is Algorithm.GAP else None,
                "stop_reason": tr.stop_reason, "budget_ok": m_star >= k,
                "success": tr.final_err_w < thr,
            })
    return out


def _run_sweep(spec, name, points):
    jobs = [(spec, s, noise, snr, points) for s in spec.seeds for noise, snr in spec.noise_conditions]
    rows = [r for batch in _run_jobs(_sweep_job, jobs, spec.workers) for r in batch]
    header = ["noise", "k", "m_star", "algorithm", "seed", "final_err_w", "iterations_run",
              "max_support", "identity_residual", "stop_reason", "budget_ok", "success"]
    files = [write_csv(spec.output_dir / f"{name}.csv", header, rows)]

    summary, failures = [], 0
    for noise, _ in spec.noise_conditions:
        for k, m_star in points:
            for alg in Algorithm:
                sel = [r for r in rows if (r["noise"], r["k"], r["m_star"], r["algorithm"]) == (noise, k, m_star, alg.value)]
                med = _median([r["final_err_w"] for r in sel])
                ok = med < _success_threshold(noise)
                failures += not ok
                summary.append({
                    "noise": noise, "k": k, "m_star": m_star, "algorithm": alg.value,
                    "median_final_err_w": med,
                    "n_success": sum(r["success"] for r in sel), "n_seeds": len(sel),
                    "n_diverged": sum(r["stop_reason"] is StopReason.DIVERGED for r in sel),
                    "budget_ok": m_star >= k, "success": ok,
                })
    files.append(write_csv(spec.output_dir / f"{name}_summary.csv", list(summary[0]), summary))
    return ExperimentResult(name, files, summary, failures, rows)


def run_mstar_sweep(spec: ExperimentSpec) -> ExperimentResult:
    """Final error of GAP and AIT for each support budget m* at fixed K."""
    return _run_sweep(spec, "m_star_sweep", [(spec.k, ms) for ms in spec.m_star_values])


def run_k_sweep(spec: ExperimentSpec) -> ExperimentResult:
    """Final error of GAP and AIT for each sparsity K with m* = K."""
    return _run_sweep(spec, "k_sweep", [(k, k) for k in spec.k_values])


# --- noise estimation -------------------------------------------------------------

def _noise_job(args):
    spec, seed = args
    out = []
    for std in spec.noise_stds:
        problem = make_instance(spec.m, spec.n, spec.k, spec.matrix_kind, seed, noise_std=std)
        cfg = SolverConfig(algorithm=Algorithm.GAP, alpha=spec.sweep_alpha, m_star=spec.m_star,
                           max_iters=spec.max_iters, keep_iterates=False, check_identity=True)
        tr = run_solver(problem, cfg)
        eps_hat = estimate_noise(tr.last_w, tr.prev_theta, spec.sweep_alpha, problem.operator)
        est = float(np.std(eps_hat, ddof=1))
        out.append({
            "seed": seed, "true_std": std, "estimated_std": est,
            "rel_error": abs(est - std) / std if std > 0 else est,
            "iterations_run": tr.iterations_run, "max_support": int(tr.support_sizes.max()),
            "identity_residual": tr.max_identity_residual, "stop_reason": tr.stop_reason,
        })
    return out


def run_noise_estimation(spec: ExperimentSpec) -> ExperimentResult:
    rows = [r for batch in _run_jobs(_noise_job, [(spec, s) for s in spec.seeds], spec.workers) for r in batch]
    header = ["seed", "true_std", "estimated_std", "rel_error", "iterations_run", "max_support",
              "identity_residual", "stop_reason"]
    files = [write_csv(spec.output_dir / "noise_estimation.csv", header, rows)]
    summary, failures = [], 0
    for std in spec.noise_stds:
        sel = [r for r in rows if r["true_std"] == std]
        med = _median([r["estimated_std"] for r in sel])
        rel = abs(med - std) / std if std > 0 else med
        ok = rel < spec.noise_tolerance if std > 0 else med < 1e-6
        failures += not ok
        summary.append({"true_std": std, "median_estimated_std": med, "relative_error": rel,
                        "n_seeds": len(sel), "success": ok})
    files.append(write_csv(spec.output_dir / "noise_estimation_summary.csv", list(summary[0]), summary))
    return ExperimentResult("noise_estimation", files, summary, failures, rows)


# --- theory grid -------------------------------------------------------------------

def theory_grid_rows(points: int, seed: int = 0, max_m_star: int = 100):
    """Optimal rates on random valid ``(delta, e_max, m*)`` with ``e_max > 1 - delta``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    rows = []
    for _ in range(points):
        delta = float(rng.uniform(1e-3, 1 - 1e-3))
        e_max = float((1.0 - delta) * (1.0 + rng.uniform(1e-3, 5.0)))
        m_star = int(rng.integers(1, max_m_star + 1))
        inp = TheoryInputs(delta=delta, m_star=m_star, k=1, e_max=e_max, e_min=min(e_max, 1e-3), alpha=1.0)
        g = optimal_rates(inp)
        ordering = g[1] < g[3] and g[1] < g[4] and g[2] < g[5] and g[2] < g[6]
        row = {"delta": delta, "e_max": e_max, "m_star": m_star}
        row.update({f"gamma{i}_star": g[i] for i in range(1, 7)})
        row["gap_faster"] = ordering
        rows.append(row)
    return rows


def run_theory_grid(spec: ExperimentSpec) -> ExperimentResult:
    """Rate-ordering grid plus a theorem report for the configured problem size."""
    rows = theory_grid_rows(spec.grid_points, seed=spec.seeds[0])
    files = [write_csv(spec.output_dir / "theory_grid.csv", list(rows[0]), rows)]
    failures = sum(not r["gap_faster"] for r in rows)

    # delta_{m*+K} is intractable at this size; report with a sampled lower bound
    problem = make_instance(spec.m, spec.n, spec.k, spec.matrix_kind, spec.seeds[0])
    s = min(spec.m_star + spec.k, spec.n)
    delta = rip_constant_sampled(problem.operator, s, n_samples=2000, seed=spec.seeds[0])
    cfg = SolverConfig(algorithm=Algorithm.GAP, alpha=spec.sweep_alpha, m_star=spec.m_star)
    reports = certify(problem, cfg, delta, delta_source="sampled lower bound")
    text = spec.output_dir / "theory_report.txt"
    text.write_text(
        f"# M={spec.m} N={spec.n} K={spec.k} m*={spec.m_star} matrix={spec.matrix_kind} seed={spec.seeds[0]}\n"
        f"# e_max={problem.operator.e_max:.6g} e_min={problem.operator.e_min:.6g}\n"
        + reports_to_text(reports),
        encoding="utf-8",
    )
    js = spec.output_dir / "theory_report.json"
    write_reports_json(reports, js)
    files += [text, js]
    summary = [{"points": len(rows), "ordering_violations": failures,
                "certified_theorems": [r.theorem.value for r in reports if r.hypotheses_hold]}]
    return ExperimentResult("theory_grid", files, summary, failures)


# --- image CS ----------------------------------------------------------------------

def _image_job(args):
    spec, image, seed, noise, snr = args
    out = []
    for alg in Algorithm:
        res = run_image_cs(ImageCsSpec(
            image=image, measurement_rate=spec.rate, patch_size=spec.patch, stride=spec.stride,
            algorithm=alg, m_star_fraction=spec.m_star_fraction, snr_db=snr, seed=seed,
            max_iters=spec.image_iters,
        ))
        out.append({"seed": seed, "noise": noise, "algorithm": alg.value, "psnr": res.psnr_trace,
                    "err": res.err_trace, "final_psnr": res.final_psnr, "alpha": res.alpha,
                    "stop_reason": res.trace.stop_reason, "reconstruction": res.reconstruction})
    return out


def load_experiment_image(spec: ExperimentSpec) -> np.ndarray:
    if spec.image_path is not None:
        return read_pgm(spec.image_path)
    return synthetic_image(spec.image_size)


def run_image_experiment(spec: ExperimentSpec) -> ExperimentResult:
    image = load_experiment_image(spec)
    jobs = [(spec, image, s, noise, snr) for s in spec.seeds for noise, snr in spec.noise_conditions]
    runs = [r for batch in _run_jobs(_image_job, jobs, spec.workers) for r in batch]

    trace_rows = []
    for r in runs:
        for i, (p, e) in enumerate(zip(r["psnr"], r["err"])):
            trace_rows.append([r["seed"], r["noise"], r["algorithm"], i + 1, p, e])
    files = [write_csv(spec.output_dir / "image_psnr.csv",
                       ["seed", "noise", "algorithm", "iter", "psnr", "mse"], trace_rows)]
    summary, failures = [], 0
    for r in runs:
        diverged = r["stop_reason"] is StopReason.DIVERGED
        failures += diverged
        summary.append({"seed": r["seed"], "noise": r["noise"], "algorithm": r["algorithm"],
                        "alpha": r["alpha"], "final_psnr": r["final_psnr"],
                        "stop_reason": r["stop_reason"], "success": not diverged})
    files.append(write_csv(spec.output_dir / "image_summary.csv", list(summary[0]), summary))

    first = spec.seeds[0]
    write_pgm(spec.output_dir / "image_original.pgm", image)
    files.append(spec.output_dir / "image_original.pgm")
    for r in runs:
        if r["seed"] == first:
            path = spec.output_dir / f"image_{r['noise']}_{r['algorithm']}.pgm"
            write_pgm(path, r["reconstruction"])
            files.append(path)
    return ExperimentResult("image", files, summary, failures, summary)


RUNNERS = {
    "convergence": run_convergence_experiment,
    "m_star_sweep": run_mstar_sweep,
    "k_sweep": run_k_sweep,
    "noise_estimation": run_noise_estimation,
    "theory_grid": run_theory_grid,
    "image": run_image_experiment,
}


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    spec.output_dir.mkdir(parents=True, exist_ok=True)
    return RUNNERS[spec.experiment](spec)
