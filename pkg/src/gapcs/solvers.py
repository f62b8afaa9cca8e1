"""Adaptive GAP and AIT iterations.

Both algorithms alternate a data-consistency step with soft-thresholding,
where the threshold is re-chosen every iteration so that at most ``m_star``
entries survive::

    w_{t+1}     = theta_t + alpha * B (y - A theta_t)
    lambda_{t+1} = (m_star + 1)-th largest |w_{t+1}|
    theta_{t+1} = soft(w_{t+1}, lambda_{t+1})

GAP uses ``B = A^T (A A^T)^{-1}``; AIT uses ``B = A^T``.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import ProblemInstance, SensingOperator, apply_gram_inverse
from .errors import DimensionError, DomainError

__all__ = [
    "Algorithm",
    "StopReason",
    "SolverConfig",
    "IterateTrace",
    "select_lambda",
    "shrink",
    "gap_step",
    "ait_step",
    "run_solver",
    "estimate_noise",
    "write_trace_csv",
    "write_vectors_csv",
]

DIVERGENCE_LIMIT = 1e12


class Algorithm(str, enum.Enum):
    GAP = "gap"
    AIT = "ait"


class StopReason(str, enum.Enum):
    CONVERGED = "converged"            # iterate change fell below stop_epsilon
    TRUTH_TOLERANCE = "truth_tolerance"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters for :func:`run_solver`.

    ``track_truth`` enables the ``err_w`` / ``err_theta`` traces; with it set,
    ``truth_tol`` additionally stops the run once ``||w_t - x*||^2`` drops
    below it. ``check_identity`` records, for GAP, the worst relative
    violation of ``A w_{t+1} = alpha y + (1 - alpha) A theta_t``.
    """

    algorithm: Algorithm = Algorithm.GAP
    alpha: float = 1.0
    m_star: int = 20
    max_iters: int = 500
    stop_epsilon: float = 1e-14
    track_truth: np.ndarray | None = field(default=None, repr=False, compare=False)
    truth_tol: float | None = None
    keep_iterates: bool = True
    check_identity: bool = False

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm(self.algorithm))
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if self.m_star < 1:
            raise DomainError(f"m_star must be >= 1, got {self.m_star}")
        if self.max_iters < 1:
            raise DomainError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.stop_epsilon < 0:
            raise DomainError("stop_epsilon must be nonnegative")


@dataclass
class IterateTrace:
    """Per-iteration record of a run; index ``i`` holds iteration ``t = i + 1``."""

    w: list = field(default_factory=list)
    theta: list = field(default_factory=list)
    lambdas: list = field(default_factory=list)
    err_w: list = field(default_factory=list)
    err_theta: list = field(default_factory=list)
    supports: list = field(default_factory=list)
    iterations_run: int = 0
    converged: bool = False
    stop_reason: StopReason | None = None
    max_identity_residual: float = 0.0
    last_w: np.ndarray | None = None
    last_theta: np.ndarray | None = None
    prev_theta: np.ndarray | None = None

    @property
    def support_sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.supports], dtype=int)

    @property
    def final_err_w(self) -> float:
        return self.err_w[-1] if self.err_w else float("nan")

    def iterations_to(self, threshold: float) -> int | None:
        """First iteration ``t`` with ``err_w(t) < threshold``, or None."""
        for i, e in enumerate(self.err_w):
            if e < threshold:
                return i + 1
        return None


def select_lambda(w, m_star: int) -> float:
    """The (m_star + 1)-th largest magnitude of ``w`` (0 when m_star >= N)."""
    if m_star < 1:
        raise DomainError("m_star must be >= 1")
    a = np.abs(np.asarray(w, dtype=np.float64)).ravel()
    n = a.size
    if m_star >= n:
        return 0.0
    return float(np.partition(a, n - m_star - 1)[n - m_star - 1])


def shrink(w, lam: float) -> np.ndarray:
    """Soft-threshold ``w`` at ``lam``; zeros stay zero."""
    if lam < 0:
        raise DomainError("threshold must be nonnegative")
    w = np.asarray(w, dtype=np.float64)
    return np.sign(w) * np.maximum(np.abs(w) - lam, 0.0)


def _check_dims(theta, y, op):
    if theta.shape != (op.n,) or y.shape != (op.m,):
        raise DimensionError(
            f"operator is {op.m}x{op.n}; got theta {theta.shape} and y {y.shape}"
        )


def gap_step(theta, y, alpha: float, op: SensingOperator) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_dims(theta, y, op)
    r = y - op.forward(theta)
    return theta + alpha * op.adjoint(apply_gram_inverse(op, r))


def ait_step(theta, y, alpha: float, op: SensingOperator) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_dims(theta, y, op)
    return theta + alpha * op.adjoint(y - op.forward(theta))


_STEPS = {Algorithm.GAP: gap_step, Algorithm.AIT: ait_step}


def run_solver(problem: ProblemInstance, config: SolverConfig, shrinkage=None) -> IterateTrace:
    """Alternate the data step and adaptive shrinkage starting from zero.

    ``shrinkage`` optionally replaces the coefficient-domain thresholding: it
    is called as ``shrinkage(w, m_star)`` and must return ``(theta, lambda)``.
    The imaging module uses this to threshold patch DCT coefficients.
    """
    op = problem.operator
    y = problem.y
    if config.m_star > op.n:
        raise DomainError(f"m_star={config.m_star} exceeds N={op.n}")
    step = _STEPS[config.algorithm]
    truth = None if config.track_truth is None else np.asarray(config.track_truth, dtype=np.float64)
    if truth is not None and truth.shape != (op.n,):
        raise DimensionError("track_truth must have length N")
    y_scale = float(np.linalg.norm(y)) or 1.0

    trace = IterateTrace()
    theta = np.zeros(op.n)
    w_prev = theta
    for t in range(1, config.max_iters + 1):
        w = step(theta, y, config.alpha, op)
        if config.check_identity and config.algorithm is Algorithm.GAP:
            lhs = op.forward(w)
            rhs = config.alpha * y + (1.0 - config.alpha) * op.forward(theta)
            res = float(np.linalg.norm(lhs - rhs)) / y_scale
            trace.max_identity_residual = max(trace.max_identity_residual, res)

        if shrinkage is None:
            lam = select_lambda(w, config.m_star)
            theta_next = shrink(w, lam)
        else:
            theta_next, lam = shrinkage(w, config.m_star)

        trace.lambdas.append(lam)
        trace.supports.append(np.flatnonzero(theta_next))
        if config.keep_iterates:
            trace.w.append(w)
            trace.theta.append(theta_next)
        if truth is not None:
            dw = w - truth
            dt = theta_next - truth
            trace.err_w.append(float(dw @ dw))
            trace.err_theta.append(float(dt @ dt))
        trace.iterations_run = t
        trace.last_w, trace.last_theta, trace.prev_theta = w, theta_next, theta

        size = trace.err_w[-1] if truth is not None else float(w @ w)
        if not np.isfinite(size) or size > DIVERGENCE_LIMIT:
            trace.stop_reason = StopReason.DIVERGED
            return trace
        if config.truth_tol is not None and truth is not None and trace.err_w[-1] < config.truth_tol:
            trace.converged = True
            trace.stop_reason = StopReason.TRUTH_TOLERANCE
            return trace
        dw = w - w_prev
        if float(dw @ dw) < config.stop_epsilon:
            trace.converged = True
            trace.stop_reason = StopReason.CONVERGED
            return trace
        w_prev = w
        theta = theta_next

    trace.stop_reason = StopReason.MAX_ITERS
    return trace


def estimate_noise(w_next, theta, alpha: float, op: SensingOperator) -> np.ndarray:
    """Noise estimate ``A (w_{t+1} - theta_t) / alpha`` from a GAP step."""
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    w_next = np.asarray(w_next, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    if w_next.shape != (op.n,) or theta.shape != (op.n,):
        raise DimensionError(f"vectors must have length {op.n}")
    return op.forward(w_next - theta) / alpha


def _fmt(x) -> str:
    return "%.17g" % x


def write_trace_csv(trace: IterateTrace, path) -> None:
    """Columns: iter, err_w, err_theta, lambda, support_size."""
    n = trace.iterations_run
    nan = float("nan")
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["iter", "err_w", "err_theta", "lambda", "support_size"])
        for i in range(n):
            out.writerow([
                i + 1,
                _fmt(trace.err_w[i] if trace.err_w else nan),
                _fmt(trace.err_theta[i] if trace.err_theta else nan),
                _fmt(trace.lambdas[i]),
                len(trace.supports[i]),
            ])


def write_vectors_csv(trace: IterateTrace, path, which: str = "w") -> None:
    """One row per iteration holding the full ``w_t`` or ``theta_t`` vector."""
    rows = {"w": trace.w, "theta": trace.theta}[which]
    if not rows:
        raise ValueError("trace was recorded without keep_iterates")
    np.savetxt(Path(path), np.vstack(rows), fmt="%.17g", delimiter=",", encoding="utf-8")
