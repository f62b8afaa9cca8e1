"""Closed-form convergence conditions and rate constants for GAP and AIT.

Every theorem has the same shape: a contraction factor ``gamma`` that is a
positive multiple of a quadratic in the step size, an admissible open
interval of step sizes (the ``gamma < 1`` sublevel set), an upper bound on
``delta = delta_{m*+K}`` and an upper bound on ``e_max``. The theorems are
sufficient conditions only; at realistic sizes they usually do not hold even
though the algorithms converge, and this module reports that as-is.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import ProblemInstance
from .errors import DomainError
from .solvers import SolverConfig

__all__ = [
    "Theorem",
    "TheoryInputs",
    "TheoryReport",
    "OptimalRates",
    "gamma_gap_noiseless",
    "gamma_gap_noisy",
    "gamma_ait",
    "ait_error_bound",
    "gamma",
    "alpha_interval",
    "alpha_interval_gap_noiseless",
    "alpha_interval_gap_noisy",
    "alpha_interval_ait",
    "delta_bound",
    "e_max_bound",
    "optimal_rates",
    "evaluate",
    "certify",
    "reports_to_text",
    "write_reports_json",
]

UNRELIABLE_FLOOR_RATIO = 1e-6


class Theorem(str, enum.Enum):
    GAP_NOISELESS = "GAP_noiseless"
    GAP_NOISY = "GAP_noisy"
    AIT_NOISELESS_A = "AIT_noiseless_a"
    AIT_NOISELESS_B = "AIT_noiseless_b"
    AIT_NOISY_A = "AIT_noisy_a"
    AIT_NOISY_B = "AIT_noisy_b"

    @property
    def is_gap(self) -> bool:
        return self in (Theorem.GAP_NOISELESS, Theorem.GAP_NOISY)

    @property
    def noisy(self) -> bool:
        return self in (Theorem.GAP_NOISY, Theorem.AIT_NOISY_A, Theorem.AIT_NOISY_B)

    @property
    def branch(self) -> str | None:
        if self.is_gap:
            return None
        return self.value[-1]


def _ait_theorem(branch: str, noisy: bool) -> Theorem:
    if branch not in ("a", "b"):
        raise DomainError(f"branch must be 'a' or 'b', got {branch!r}")
    key = f"AIT_{'noisy' if noisy else 'noiseless'}_{branch}"
    return Theorem(key)


@dataclass(frozen=True)
class TheoryInputs:
    delta: float
    m_star: int
    k: int
    e_max: float
    e_min: float
    alpha: float
    noise_norm_sq: float = 0.0

    def __post_init__(self):
        if self.m_star < self.k:
            raise DomainError(f"m_star={self.m_star} must be >= K={self.k}")
        if not self.e_max > 0:
            raise DomainError("e_max must be positive")


def _multiplier(m_star: int, noisy: bool) -> float:
    return 8.0 + 4.0 * m_star if noisy else 4.0 + 2.0 * m_star


def _ratio(m_star: int, noisy: bool) -> float:
    """(2m*+3)/(2m*+4) noiseless, (4m*+7)/(4m*+8) noisy; equals 1 - 1/multiplier."""
    return (4.0 * m_star + 7.0) / (4.0 * m_star + 8.0) if noisy else (2.0 * m_star + 3.0) / (2.0 * m_star + 4.0)


def _check_delta(delta):
    if not 0.0 < delta < 1.0:
        raise DomainError(f"RIP constant must lie in (0, 1), got {delta}")


def _gamma_raw(theorem: Theorem, inp: TheoryInputs, alpha: float) -> float:
    d, e, a = inp.delta, inp.e_max, alpha
    f = _multiplier(inp.m_star, theorem.noisy)
    if theorem.is_gap:
        return f * (1.0 + (a * a - 2.0 * a) * (1.0 - d) / e)
    if theorem.branch == "a":
        return f * (1.0 + a * a * e * e - 2.0 * a * (1.0 - d))
    return f * (1.0 + a * a * e * (1.0 + d) - 2.0 * a * (1.0 - d))


def gamma_gap_noiseless(inputs: TheoryInputs) -> float:
    """Contraction factor of GAP without noise; not clamped, may exceed 1."""
    _check_delta(inputs.delta)
    if not 0.0 < inputs.alpha < 2.0:
        raise DomainError(f"GAP step size must lie in (0, 2), got {inputs.alpha}")
    return _gamma_raw(Theorem.GAP_NOISELESS, inputs, inputs.alpha)


def gamma_gap_noisy(inputs: TheoryInputs) -> tuple[float, float]:
    """Returns ``(gamma, noise_floor)`` with floor ``2 alpha^2 ||eps||^2 / e_min``."""
    _check_delta(inputs.delta)
    if not 0.0 < inputs.alpha < 2.0:
        raise DomainError(f"GAP step size must lie in (0, 2), got {inputs.alpha}")
    if not inputs.e_min > 0:
        raise DomainError("e_min must be positive for the noisy bound")
    g = _gamma_raw(Theorem.GAP_NOISY, inputs, inputs.alpha)
    return g, 2.0 * inputs.alpha**2 * inputs.noise_norm_sq / inputs.e_min


def gamma_ait(inputs: TheoryInputs, branch: str, noisy: bool) -> float:
    _check_delta(inputs.delta)
    if not inputs.alpha > 0:
        raise DomainError("alpha must be positive")
    return _gamma_raw(_ait_theorem(branch, noisy), inputs, inputs.alpha)


def ait_error_bound(inputs: TheoryInputs) -> float:
    return 2.0 * inputs.alpha**2 * inputs.e_max * inputs.noise_norm_sq


def gamma(theorem: Theorem, inputs: TheoryInputs, alpha: float | None = None) -> float:
    """Rate constant of ``theorem`` at ``alpha`` (defaults to ``inputs.alpha``)."""
    _check_delta(inputs.delta)
    return _gamma_raw(Theorem(theorem), inputs, inputs.alpha if alpha is None else alpha)


def _center(theorem: Theorem, inp: TheoryInputs) -> float:
    d, e = inp.delta, inp.e_max
    if theorem.is_gap:
        return 1.0
    if theorem.branch == "a":
        return (1.0 - d) / (e * e)
    return (1.0 - d) / (e * (1.0 + d))


def _radicand(theorem: Theorem, inp: TheoryInputs) -> float:
    d, e = inp.delta, inp.e_max
    c = _ratio(inp.m_star, theorem.noisy)
    if theorem.is_gap:
        return 1.0 - e * c / (1.0 - d)
    if theorem.branch == "a":
        return 1.0 - c * e * e / (1.0 - d) ** 2
    return 1.0 - c * (1.0 + d) * e / (1.0 - d) ** 2


def alpha_interval(theorem: Theorem, inputs: TheoryInputs) -> tuple[float, float] | None:
    """Open interval of step sizes with ``gamma < 1``, or None when it is empty."""
    theorem = Theorem(theorem)
    _check_delta(inputs.delta)
    rad = _radicand(theorem, inputs)
    if not rad > 0:
        return None
    r = math.sqrt(rad)
    c = _center(theorem, inputs)
    return (c * (1.0 - r), c * (1.0 + r))


def alpha_interval_gap_noiseless(inputs: TheoryInputs):
    return alpha_interval(Theorem.GAP_NOISELESS, inputs)


def alpha_interval_gap_noisy(inputs: TheoryInputs):
    return alpha_interval(Theorem.GAP_NOISY, inputs)


def alpha_interval_ait(inputs: TheoryInputs, branch: str, noisy: bool):
    return alpha_interval(_ait_theorem(branch, noisy), inputs)


def delta_bound(theorem: Theorem, m_star: int, e_max: float) -> float:
    """Upper bound on delta_{m*+K} required by ``theorem``."""
    theorem = Theorem(theorem)
    c = _ratio(m_star, theorem.noisy)
    if theorem.is_gap:
        return 1.0 - c * e_max
    if theorem.branch == "a":
        return 1.0 - e_max * math.sqrt(c)
    return 1.0 / (4.0 * m_star + 7.0) if theorem.noisy else 1.0 / (2.0 * m_star + 3.0)


def e_max_bound(theorem: Theorem, m_star: int) -> float:
    """Upper bound on the largest eigenvalue of A A^T required by ``theorem``."""
    theorem = Theorem(theorem)
    c = _ratio(m_star, theorem.noisy)
    if theorem.branch == "a":
        return 1.0 / math.sqrt(c)
    return 1.0 / c


@dataclass(frozen=True)
class OptimalRates:
    gamma_star: dict
    alpha_star: dict

    def __getitem__(self, i: int) -> float:
        """``rates[1]`` .. ``rates[6]`` in theorem order."""
        return self.gamma_star[list(Theorem)[i - 1]]


def optimal_rates(inputs: TheoryInputs) -> OptimalRates:
    """Minimum of every gamma over alpha, with the minimizing step sizes."""
    _check_delta(inputs.delta)
    d, e = inputs.delta, inputs.e_max
    a_gap = 1.0
    a_branch_a = (1.0 - d) / (e * e)
    a_branch_b = (1.0 - d) / (e * (1.0 + d))
    alpha_star = {
        Theorem.GAP_NOISELESS: a_gap,
        Theorem.GAP_NOISY: a_gap,
        Theorem.AIT_NOISELESS_A: a_branch_a,
        Theorem.AIT_NOISELESS_B: a_branch_b,
        Theorem.AIT_NOISY_A: a_branch_a,
        Theorem.AIT_NOISY_B: a_branch_b,
    }
    base = {
        "gap": (e - (1.0 - d)) / e,
        "a": (e * e - (1.0 - d) ** 2) / (e * e),
        "b": (e * (1.0 + d) - (1.0 - d) ** 2) / (e * (1.0 + d)),
    }
    gamma_star = {}
    for th in Theorem:
        key = "gap" if th.is_gap else th.branch
        gamma_star[th] = _multiplier(inputs.m_star, th.noisy) * base[key]
    return OptimalRates(gamma_star=gamma_star, alpha_star=alpha_star)


@dataclass
class TheoryReport:
    theorem: Theorem
    hypotheses_hold: bool
    conditions: dict
    alpha: float
    alpha_interval: tuple | None
    gamma: float
    gamma_star: float
    alpha_star: float
    delta: float
    delta_source: str = "exact"
    error_bound: float | None = None
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["theorem"] = self.theorem.value
        out["alpha_interval"] = None if self.alpha_interval is None else list(self.alpha_interval)
        return out


def evaluate(theorem: Theorem, inputs: TheoryInputs, delta_source: str = "exact") -> TheoryReport:
    """Check every hypothesis of one theorem and evaluate its rate constants."""
    theorem = Theorem(theorem)
    d, e, a, m = inputs.delta, inputs.e_max, inputs.alpha, inputs.m_star
    delta_ok = 0.0 < d < 1.0 and d < delta_bound(theorem, m, e)
    emax_ok = e < e_max_bound(theorem, m)
    notes = []
    if delta_source != "exact":
        notes.append(f"delta from {delta_source}")

    if 0.0 < d < 1.0:
        interval = alpha_interval(theorem, inputs)
        g = _gamma_raw(theorem, inputs, a)
        rates = optimal_rates(inputs)
        g_star, a_star = rates.gamma_star[theorem], rates.alpha_star[theorem]
    else:
        notes.append("RIP hypothesis 0 < delta < 1 fails")
        interval = None
        g = g_star = a_star = float("nan")
    # strict membership, no tolerance slack
    alpha_ok = interval is not None and interval[0] < a < interval[1]
    if theorem.is_gap and not 0.0 < a < 2.0:
        alpha_ok = False

    error_bound = None
    if theorem.noisy:
        if theorem.is_gap:
            error_bound = 2.0 * a * a * inputs.noise_norm_sq / inputs.e_min if inputs.e_min > 0 else float("inf")
            if inputs.e_min < UNRELIABLE_FLOOR_RATIO * e:
                notes.append("floor unreliable: e_min < 1e-6 * e_max")
        else:
            error_bound = ait_error_bound(inputs)

    conditions = {"delta_bound": delta_ok, "e_max_bound": emax_ok, "alpha_in_interval": alpha_ok}
    return TheoryReport(
        theorem=theorem,
        hypotheses_hold=all(conditions.values()),
        conditions=conditions,
        alpha=a,
        alpha_interval=interval,
        gamma=g,
        gamma_star=g_star,
        alpha_star=a_star,
        delta=d,
        delta_source=delta_source,
        error_bound=error_bound,
        notes=notes,
    )


def certify(problem: ProblemInstance, config: SolverConfig, rip_delta: float,
            delta_source: str = "exact") -> list[TheoryReport]:
    """One report per theorem for the given problem, solver settings and delta_{m*+K}.

    ``delta_source`` labels where ``rip_delta`` came from (``"exact"``,
    ``"supplied"`` or ``"sampled lower bound"``).
    """
    op = problem.operator
    k = problem.sparsity_k
    budget_ok = config.m_star >= k
    inputs = TheoryInputs(
        delta=float(rip_delta),
        m_star=config.m_star,
        k=min(k, config.m_star),
        e_max=op.e_max,
        e_min=op.e_min,
        alpha=config.alpha,
        noise_norm_sq=problem.noise_norm_sq,
    )
    reports = []
    for th in Theorem:
        rep = evaluate(th, inputs, delta_source)
        rep.conditions["m_star_ge_k"] = budget_ok
        rep.hypotheses_hold = rep.hypotheses_hold and budget_ok
        if not budget_ok:
            rep.notes.append(f"support budget m*={config.m_star} below sparsity K={k}")
        reports.append(rep)
    return reports


def _num(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float) and np.isnan(x):
        return "nan"
    return f"{x:.6g}"


def reports_to_text(reports) -> str:
    lines = []
    for r in reports:
        verdict = "HOLDS" if r.hypotheses_hold else "fails"
        failed = [k for k, ok in r.conditions.items() if not ok]
        interval = "empty" if r.alpha_interval is None else f"({_num(r.alpha_interval[0])}, {_num(r.alpha_interval[1])})"
        lines.append(f"{r.theorem.value}: {verdict}" + (f" [failed: {', '.join(failed)}]" if failed else ""))
        lines.append(f"  delta={_num(r.delta)} ({r.delta_source})  alpha={_num(r.alpha)}  interval={interval}")
        lines.append(f"  gamma={_num(r.gamma)}  gamma*={_num(r.gamma_star)} at alpha*={_num(r.alpha_star)}")
        if r.error_bound is not None:
            lines.append(f"  noise floor={_num(r.error_bound)}")
        for note in r.notes:
            lines.append(f"  note: {note}")
    return "\n".join(lines) + "\n"


def write_reports_json(reports, path) -> None:
    def clean(v):
        if isinstance(v, float) and not np.isfinite(v):
            return None if np.isnan(v) else str(v)
        return v

    records = []
    for r in reports:
        rec = {k: clean(v) for k, v in r.as_dict().items()}
        records.append(rec)
    Path(path).write_text(json.dumps(records, indent=2) + "\n", encoding="utf-8")
