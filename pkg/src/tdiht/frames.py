"""Frames and restricted isometry diagnostics.

The D-RIP constant of ``M`` against a dictionary ``D`` at sparsity ``k``
is the smallest ``delta`` with

    (1 - delta) ||D a||^2 <= ||M D a||^2 <= (1 + delta) ||D a||^2

for every k-sparse ``a``. For a fixed support ``T`` the extreme ratios are
the eigenvalues of ``M*M`` compressed to ``range(D_T)``, which is how
every estimator here evaluates a support.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .linops import AnalysisPair, DenseMap, LinearMap, RankError, as_matrix
from .seeding import make_rng

__all__ = [
    "ENUMERATION_BUDGET",
    "FrameBounds",
    "RipEstimate",
    "ContractionCheck",
    "BudgetError",
    "random_tight_frame",
    "frame_bounds",
    "gram_of",
    "support_delta",
    "drip_exhaustive",
    "drip_monte_carlo",
    "rip_projection_residual",
    "check_contraction_condition",
]

ENUMERATION_BUDGET = 200_000
MAX_EXHAUSTIVE_P = 20


class BudgetError(ValueError):
    """Exhaustive enumeration would exceed :data:`ENUMERATION_BUDGET` supports."""


@dataclass(frozen=True)
class FrameBounds:
    A: float
    B: float

    def __post_init__(self):
        if not 0 < self.A <= self.B < math.inf:
            raise ValueError(f"invalid frame bounds A={self.A}, B={self.B}")


@dataclass(frozen=True)
class RipEstimate:
    k: int
    delta: float
    method: str
    trials: int
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


class ContractionCheck(NamedTuple):
    rho: float
    satisfied: bool


def random_tight_frame(p: int, d: int, seed: int) -> AnalysisPair:
    """Parseval frame from the polar factor of a ``p x d`` Gaussian draw.

    The columns of the result are orthonormal, so omega^T omega = I and
    the synthesis map is omega^T.
    """
    if p < d:
        raise ValueError(f"a frame needs p >= d, got p={p}, d={d}")
    g = make_rng(seed).standard_normal((p, d))
    u, _, vt = np.linalg.svd(g, full_matrices=False)
    omega = u @ vt
    return AnalysisPair(DenseMap(omega), DenseMap(omega.T), 1.0, 1.0)


def frame_bounds(omega) -> FrameBounds:
    """``A`` and ``B`` are the smallest and largest singular values of omega."""
    mat = as_matrix(omega)
    s = np.linalg.svd(mat, compute_uv=False)
    if mat.shape[0] < mat.shape[1] or s[-1] <= 1e-12 * s[0]:
        raise RankError("omega is not full column rank")
    return FrameBounds(float(s[-1]), float(s[0]))


def gram_of(m_map) -> np.ndarray:
    """``M*M`` as a real symmetric matrix (real part for complex maps)."""
    if isinstance(m_map, LinearMap) and not isinstance(m_map, DenseMap):
        d = m_map.cols
        g = np.empty((d, d))
        e = np.zeros(d)
        for j in range(d):
            e[j] = 1.0
            g[:, j] = m_map.adjoint(m_map.forward(e))
            e[j] = 0.0
    else:
        mat = as_matrix(m_map)
        g = np.real(mat.conj().T @ mat)
    return 0.5 * (g + g.T)


def _range_basis(cols: np.ndarray) -> np.ndarray:
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return u[:, :0]
    rank = int(np.sum(s > s[0] * max(cols.shape) * np.finfo(float).eps))
    return u[:, :rank]


def support_delta(gram: np.ndarray, dictionary: np.ndarray, support) -> float:
    """``max(lam_max - 1, 1 - lam_min)`` of ``M*M`` compressed to ``range(D_T)``."""
    basis = _range_basis(dictionary[:, list(support)])
    if basis.shape[1] == 0:
        return 0.0
    lam = np.linalg.eigvalsh(basis.T @ gram @ basis)
    return float(max(lam[-1] - 1.0, 1.0 - lam[0]))


def _batch_deltas(gram: np.ndarray, dictionary: np.ndarray, supports: np.ndarray) -> np.ndarray:
    """Vectorized :func:`support_delta` over an ``(n, k)`` array of supports."""
    cols = np.transpose(dictionary[:, supports], (1, 0, 2))  # (n, d, k)
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    tol = s[:, :1] * max(cols.shape[1:]) * np.finfo(float).eps
    full_rank = np.all(s > tol, axis=1)
    out = np.empty(len(supports))
    if np.any(full_rank):
        uf = u[full_rank]
        lam = np.linalg.eigvalsh(np.swapaxes(uf, 1, 2) @ gram @ uf)
        out[full_rank] = np.maximum(lam[:, -1] - 1.0, 1.0 - lam[:, 0])
    for i in np.flatnonzero(~full_rank):
        out[i] = support_delta(gram, dictionary, supports[i])
    return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("COSPARSE_THREADS", "")))
    except ValueError:
        return os.cpu_count() or 1


def drip_exhaustive(m_map, dictionary, k: int, chunk: int = 4096) -> RipEstimate:
    """Exact D-RIP constant by enumerating every support of size ``k``.

    Refuses (``BudgetError``) when ``p > 20`` or ``C(p, k)`` exceeds the
    enumeration budget instead of silently sampling.
    """
    dictionary = np.real_if_close(as_matrix(dictionary)).astype(float)
    p = dictionary.shape[1]
    if not 0 <= k <= p:
        raise ValueError(f"k must lie in [0, {p}], got {k}")
    if p > MAX_EXHAUSTIVE_P:
        raise BudgetError(f"p={p} exceeds the exhaustive budget (p <= {MAX_EXHAUSTIVE_P})")
    if math.comb(p, k) > ENUMERATION_BUDGET:
        raise BudgetError(
            f"C({p}, {k}) = {math.comb(p, k)} supports exceeds the budget of {ENUMERATION_BUDGET}"
        )
    if k == 0:
        return RipEstimate(0, 0.0, "exhaustive", 0, 0)
    gram = gram_of(m_map)
    delta = 0.0
    combos = itertools.combinations(range(p), k)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
        if block.size == 0:
            break
        delta = max(delta, float(_batch_deltas(gram, dictionary, block).max()))
    return RipEstimate(k, delta, "exhaustive", 0, 0)


def _mc_supports(p: int, k: int, seed: int, start: int, stop: int) -> np.ndarray:
    return np.array([np.sort(make_rng(seed, i).choice(p, size=k, replace=False))
                     for i in range(start, stop)], dtype=np.intp).reshape(stop - start, k)


def drip_monte_carlo(m_map, dictionary, k: int, trials: int, seed: int = 0) -> RipEstimate:
    """Lower estimate of the D-RIP constant from ``trials`` random supports.

    Trial ``i`` draws its support from the stream ``(seed, i)``, so a run
    with more trials evaluates a superset of the supports of a shorter one
    and the estimate can only grow. Chunks may run on several threads; the
    max-reduction makes the result independent of scheduling.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    dictionary = np.real_if_close(as_matrix(dictionary)).astype(float)
    p = dictionary.shape[1]
    if not 0 <= k <= p:
        raise ValueError(f"k must lie in [0, {p}], got {k}")
    if k == 0:
        return RipEstimate(0, 0.0, "monte_carlo", trials, seed)
    gram = gram_of(m_map)

    chunk = 2048
    bounds = [(s, min(s + chunk, trials)) for s in range(0, trials, chunk)]

    def run(b):
        return float(_batch_deltas(gram, dictionary, _mc_supports(p, k, seed, *b)).max())

    workers = min(_threads(), len(bounds))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            deltas = list(pool.map(run, bounds))
    else:
        deltas = [run(b) for b in bounds]
    return RipEstimate(k, max(deltas), "monte_carlo", trials, seed)


def rip_projection_residual(m_map, dictionary, t1, t2) -> float:
    """Spectral norm of ``P_T1 (I - M*M) P_T2`` with ``P_T`` the projector onto ``range(D_T)``."""
    dictionary = as_matrix(dictionary)
    t1, t2 = list(t1), list(t2)
    if not t1 or not t2:
        return 0.0
    u1 = _range_basis(dictionary[:, t1])
    u2 = _range_basis(dictionary[:, t2])
    gram = gram_of(m_map)
    core = u1.T @ u2 - u1.T @ gram @ u2
    return float(np.linalg.norm(core, 2))


def check_contraction_condition(bounds: FrameBounds, delta_ak: float) -> ContractionCheck:
    """``rho = 2 delta B / A``; the iteration contracts when ``rho < 1``."""
    if delta_ak < 0:
        raise ValueError("delta must be nonnegative")
    rho = 2.0 * delta_ak * bounds.B / bounds.A
    return ContractionCheck(rho, rho < 1.0)
