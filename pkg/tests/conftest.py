import itertools

import numpy as np
import pytest

from gapcs.core import build_operator
from gapcs.harness.generators import gen_sensing_matrix


def brute_force_rip(entries, s):
    """Reference RIP constant: one SVD per column subset.

    Independent of the library path (batched Gram blocks + eigvalsh); the
    squared singular values of A_S are the eigenvalues of A_S^T A_S.
    """
    a = np.asarray(entries, dtype=float)
    worst = 0.0
    for subset in itertools.combinations(range(a.shape[1]), s):
        sv = np.linalg.svd(a[:, subset], compute_uv=False)
        lo, hi = sv.min() ** 2, sv.max() ** 2
        worst = max(worst, 1.0 - lo, hi - 1.0)
    return worst


def removed_row_operator(n, seed, scale=1.0, spread=0.1):
    """Rows of an orthogonal n x n matrix with one near-uniform row q removed.

    Then A A^T = scale^2 I and, for scale 1, A_S^T A_S = I - q_S q_S^T, so
    delta_s is the largest sum of s entries of q^2: about s/n.
    """
    rng = np.random.default_rng([seed, 7])
    q = np.ones(n) + spread * rng.standard_normal(n)
    q /= np.linalg.norm(q)
    basis, _ = np.linalg.qr(np.column_stack([q, rng.standard_normal((n, n - 1))]))
    return build_operator(scale * basis[:, 1:].T)


def hadamard(n):
    h = np.array([[1.0]])
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


@pytest.fixture
def gaussian_6x10():
    return build_operator(gen_sensing_matrix(6, 10, "gaussian", seed=3))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.verdict_lines():
        terminalreporter.write_line(line)
