"""Seeded synthetic data: sparse signals, sensing matrices and noise.

Every draw comes from a PCG64 stream keyed by ``(seed, stream)``, so the
matrix, signal and noise for one seed are independent of each other and do
not shift when another quantity is added to an experiment.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import DomainError

STREAM_MATRIX = 0
STREAM_SIGNAL = 1
STREAM_NOISE = 2
STREAM_SUPPORT = 3

MATRIX_KINDS = ("gaussian", "binary")


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    if seed < 0 or stream < 0:
        raise DomainError("seed and stream id must be nonnegative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream)])))


def gen_sparse_signal(n: int, k: int, seed: int, stream: int = STREAM_SIGNAL) -> np.ndarray:
    """Length-``n`` vector with ``k`` standard-normal entries at random positions."""
    if not 0 <= k <= n:
        raise DomainError(f"need 0 <= k <= n, got k={k}, n={n}")
    x = np.zeros(n)
    if k == 0:
        return x
    rng = rng_for(seed, stream)
    support = rng.choice(n, size=k, replace=False)
    values = rng.standard_normal(k)
    # a draw of exactly 0.0 would silently lower the sparsity
    values[values == 0.0] = np.finfo(float).tiny
    x[support] = values
    return x


def gen_sensing_matrix(m: int, n: int, kind: str = "gaussian", seed: int = 0,
                       stream: int = STREAM_MATRIX) -> np.ndarray:
    """``m x n`` matrix with i.i.d. N(0, 1/m) entries, or +-1/sqrt(m) for ``kind='binary'``."""
    if not 1 <= m <= n:
        raise DomainError(f"need 1 <= m <= n, got m={m}, n={n}")
    rng = rng_for(seed, stream)
    if kind == "gaussian":
        return rng.standard_normal((m, n)) / math.sqrt(m)
    if kind == "binary":
        signs = rng.integers(0, 2, size=(m, n)) * 2 - 1
        return signs / math.sqrt(m)
    raise DomainError(f"unknown matrix kind {kind!r}; expected one of {MATRIX_KINDS}")


def add_noise(clean, snr_db: float, seed: int, stream: int = STREAM_NOISE):
    """Add Gaussian noise rescaled to hit ``snr_db`` exactly.

    Returns ``(y, noise)``. ``snr_db = inf`` gives zero noise.
    """
    clean = np.asarray(clean, dtype=np.float64)
    if math.isinf(snr_db) and snr_db > 0:
        noise = np.zeros_like(clean)
        return clean + noise, noise
    power = float(clean @ clean)
    if power == 0.0:
        raise DomainError("cannot set a finite SNR on an all-zero signal")
    raw = rng_for(seed, stream).standard_normal(clean.shape)
    target = power * 10.0 ** (-snr_db / 10.0)
    noise = raw * math.sqrt(target / float(raw @ raw))
    return clean + noise, noise


def gaussian_noise(m: int, std: float, seed: int, stream: int = STREAM_NOISE) -> np.ndarray:
    """i.i.d. N(0, std^2) noise with no rescaling (used for noise estimation)."""
    if std < 0:
        raise DomainError("noise std must be nonnegative")
    if std == 0:
        return np.zeros(m)
    return std * rng_for(seed, stream).standard_normal(m)
