"""Sensing operators, problem instances and exact desk-scale RIP constants.

A :class:`SensingOperator` wraps a dense ``M x N`` matrix together with a
Cholesky factorization of ``A A^T`` that is computed once and reused by every
GAP iteration, plus the extreme eigenvalues of ``A A^T``.
"""
from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NotOrthonormal, ParseError, SingularGram, TooManySubsets

__all__ = [
    "SensingOperator",
    "ProblemInstance",
    "build_operator",
    "apply_gram_inverse",
    "make_problem",
    "rip_constant_exact",
    "rip_constant_sampled",
    "rip_invariance_check",
    "shared_spectrum_check",
    "save_matrix",
    "load_matrix",
]

RELATIVE_SINGULAR_TOL = 1e-12
DEFAULT_SUBSET_CAP = 10**6
_CHUNK = 16384


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SensingOperator:
    """Measurement matrix with its Gram factorization.

    Attributes:
        entries: the ``M x N`` matrix ``A`` (read-only).
        gram_factor: ``(c, lower)`` Cholesky factor of ``A A^T`` as returned by
            :func:`scipy.linalg.cho_factor`.
        e_max: largest eigenvalue of ``A A^T``.
        e_min: smallest eigenvalue of ``A A^T``.
    """

    entries: np.ndarray
    gram_factor: tuple = field(repr=False)
    e_max: float
    e_min: float

    @property
    def shape(self):
        return self.entries.shape

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def gram(self) -> np.ndarray:
        return self.entries @ self.entries.T

    def forward(self, x):
        return self.entries @ x

    def adjoint(self, v):
        return self.entries.T @ v

    def __repr__(self):
        return f"SensingOperator(M={self.m}, N={self.n}, e_max={self.e_max:.6g}, e_min={self.e_min:.6g})"


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """``y = A x_true + noise`` with a K-sparse ``x_true``."""

    operator: SensingOperator
    x_true: np.ndarray
    noise: np.ndarray
    y: np.ndarray
    sparsity_k: int

    @property
    def noise_norm_sq(self) -> float:
        return float(self.noise @ self.noise)


def build_operator(entries, tolerance: float | None = None) -> SensingOperator:
    """Factor ``A A^T`` and compute its extreme eigenvalues.

    ``tolerance`` is an absolute floor for the smallest eigenvalue of
    ``A A^T``; when omitted it defaults to ``1e-12 * e_max``.
    """
    a = np.asarray(entries, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError(f"sensing matrix must be 2-D, got shape {a.shape}")
    m, n = a.shape
    if m > n:
        raise DimensionError(f"need M <= N, got M={m}, N={n}")
    if tolerance is not None and not tolerance > 0:
        raise ValueError("tolerance must be positive")

    gram = a @ a.T
    evals = np.linalg.eigvalsh(gram)
    e_min, e_max = float(evals[0]), float(evals[-1])
    tol = RELATIVE_SINGULAR_TOL * e_max if tolerance is None else tolerance
    if not e_max > 0 or e_min < tol:
        raise SingularGram(f"A A^T is singular: smallest eigenvalue {e_min:.3e} < {tol:.3e}")
    c, lower = sla.cho_factor(gram, lower=True)
    c.setflags(write=False)
    return SensingOperator(entries=_frozen(a), gram_factor=(c, lower), e_max=e_max, e_min=e_min)


def apply_gram_inverse(op: SensingOperator, v) -> np.ndarray:
    """Solve ``(A A^T) u = v`` with the stored factorization."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (op.m,):
        raise DimensionError(f"expected vector of length {op.m}, got shape {v.shape}")
    return sla.cho_solve(op.gram_factor, v, check_finite=False)


def make_problem(op: SensingOperator, x_true, noise=None) -> ProblemInstance:
    x = _frozen(x_true)
    if x.shape != (op.n,):
        raise DimensionError(f"x_true must have length {op.n}, got shape {x.shape}")
    eps = np.zeros(op.m) if noise is None else np.asarray(noise, dtype=np.float64)
    if eps.shape != (op.m,):
        raise DimensionError(f"noise must have length {op.m}, got shape {eps.shape}")
    y = op.forward(x) + eps
    return ProblemInstance(
        operator=op,
        x_true=x,
        noise=_frozen(eps),
        y=_frozen(y),
        sparsity_k=int(np.count_nonzero(x)),
    )


def _as_matrix(op):
    return op.entries if isinstance(op, SensingOperator) else np.asarray(op, dtype=np.float64)


def _subset_deviation(gram_cols, subsets):
    """Max of ``|lambda - 1|`` over the Gram eigenvalues of each subset in the batch."""
    sub = gram_cols[subsets[:, :, None], subsets[:, None, :]]
    evals = np.linalg.eigvalsh(sub)
    return np.maximum(1.0 - evals[:, 0], evals[:, -1] - 1.0)


def rip_constant_exact(op, s: int, max_subsets: int = DEFAULT_SUBSET_CAP) -> float:
    """Exact RIP constant of order ``s`` by enumerating every column subset.

    The result may equal or exceed 1; in that case the RIP hypothesis
    ``0 < delta < 1`` fails and callers are expected to report it.
    """
    a = _as_matrix(op)
    n = a.shape[1]
    if not 1 <= s <= n:
        raise DimensionError(f"subset size s={s} must lie in [1, {n}]")
    count = math.comb(n, s)
    if count > max_subsets:
        raise TooManySubsets(f"C({n}, {s}) = {count} exceeds the cap of {max_subsets}")

    gram_cols = a.T @ a
    combos = itertools.combinations(range(n), s)
    delta = 0.0
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        dev = _subset_deviation(gram_cols, np.array(chunk, dtype=np.intp))
        delta = max(delta, float(dev.max()))
    return delta


def rip_constant_sampled(op, s: int, n_samples: int, seed: int = 0) -> float:
    """Monte-Carlo *lower bound* on the RIP constant from random column subsets.

    Useful at sizes where exact enumeration is intractable (e.g. 300 x 512).
    """
    a = _as_matrix(op)
    n = a.shape[1]
    if not 1 <= s <= n:
        raise DimensionError(f"subset size s={s} must lie in [1, {n}]")
    rng = np.random.default_rng(seed)
    gram_cols = a.T @ a
    delta = 0.0
    remaining = n_samples
    while remaining > 0:
        batch = min(remaining, _CHUNK)
        subsets = np.argsort(rng.random((batch, n)), axis=1)[:, :s]
        delta = max(delta, float(_subset_deviation(gram_cols, subsets).max()))
        remaining -= batch
    return delta


def rip_invariance_check(op: SensingOperator, orthonormal_u, s: int, atol: float = 1e-10) -> bool:
    """Check that left-multiplying by an orthonormal ``U`` leaves delta_s unchanged."""
    u = np.asarray(orthonormal_u, dtype=np.float64)
    if u.shape != (op.m, op.m):
        raise DimensionError(f"U must be {op.m}x{op.m}, got shape {u.shape}")
    if np.max(np.abs(u @ u.T - np.eye(op.m))) > atol:
        raise NotOrthonormal("U U^T deviates from the identity")
    d_a = rip_constant_exact(op, s)
    d_ua = rip_constant_exact(u @ op.entries, s)
    return abs(d_a - d_ua) <= atol


def shared_spectrum_check(op: SensingOperator, rtol: float = 1e-8) -> bool:
    """Nonzero eigenvalues of ``A A^T`` and ``A^T A`` coincide."""
    a = op.entries
    left = np.linalg.eigvalsh(a @ a.T)
    # A^T A is N x N with rank M; its M largest eigenvalues are the nonzero ones.
    right = np.linalg.eigvalsh(a.T @ a)[-op.m:]
    return bool(np.all(np.abs(left - right) <= rtol * np.abs(left)))


# --- matrix files -----------------------------------------------------------

_BIN_HEADER = struct.Struct("<II")


def save_matrix(path, matrix) -> None:
    """Write a matrix as CSV (``.csv``) or raw little-endian float64 (anything else).

    The binary layout is an 8-byte header holding ``M`` and ``N`` as
    little-endian uint32, followed by the entries in row-major order.
    """
    path = Path(path)
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError("only 2-D matrices can be saved")
    if path.suffix.lower() == ".csv":
        np.savetxt(path, a, fmt="%.17g", delimiter=",", encoding="utf-8")
        return
    with open(path, "wb") as fh:
        fh.write(_BIN_HEADER.pack(*a.shape))
        fh.write(a.astype("<f8").tobytes(order="C"))


def load_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        try:
            a = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64, encoding="utf-8")
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}") from exc
        if a.size == 0:
            raise ParseError(f"{path}: empty matrix file")
        return a
    raw = path.read_bytes()
    if len(raw) < _BIN_HEADER.size:
        raise ParseError(f"{path}: truncated header")
    m, n = _BIN_HEADER.unpack_from(raw)
    body = raw[_BIN_HEADER.size:]
    if len(body) != 8 * m * n:
        raise ParseError(f"{path}: header says {m}x{n} but payload has {len(body)} bytes")
    return np.frombuffer(body, dtype="<f8").reshape(m, n).astype(np.float64)
