"""Greedy solvers for the cosparse analysis model.

Three iterative hard thresholding variants share the machinery here:

* :func:`iht_recover` works on a synthesis representation ``alpha`` with
  the effective dictionary ``A = M D``;
* :func:`aiht_recover` works in the signal domain and projects onto the
  cosparse subspace picked by :func:`cosupport_select`;
* :func:`tdiht_recover` works on the analysis coefficients ``w`` and only
  ever applies ``M``, ``M*``, ``omega`` and ``D``.

All solvers start from zero, are deterministic, and keep per-iteration
residual traces.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .linops import AnalysisPair, LinearMap, as_matrix

__all__ = [
    "RecoveryProblem",
    "ConstantStep",
    "AdaptiveStep",
    "HaltingRule",
    "RecoveryOutput",
    "StepResult",
    "DivergenceError",
    "hard_threshold",
    "cosupport_select",
    "cosparse_project",
    "tdiht_step",
    "adaptive_step_size",
    "tdiht_recover",
    "iht_recover",
    "aiht_recover",
]

log = logging.getLogger(__name__)


class DivergenceError(ArithmeticError):
    """An iterate became non-finite."""

    def __init__(self, iteration: int, algorithm: str = "tdiht"):
        super().__init__(f"{algorithm}: non-finite values at iteration {iteration}")
        self.iteration = iteration
        self.algorithm = algorithm


@dataclass(frozen=True)
class RecoveryProblem:
    """Measurements ``y = M x + e`` with an analysis pair and a sparsity budget ``k``.

    ``k`` counts the nonzeros allowed in the transform domain (``k = p - ell``).
    """

    y: np.ndarray
    m_map: LinearMap
    pair: AnalysisPair
    k: int

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.shape != (self.m_map.rows,):
            raise ValueError(f"y has shape {y.shape}, expected ({self.m_map.rows},)")
        if self.pair.d != self.m_map.cols:
            raise ValueError(
                f"analysis pair acts on R^{self.pair.d} but M acts on R^{self.m_map.cols}"
            )
        if not 0 <= self.k <= self.pair.p:
            raise ValueError(f"k must lie in [0, {self.pair.p}], got {self.k}")
        object.__setattr__(self, "y", y)

    @property
    def ell(self) -> int:
        return self.pair.p - self.k


@dataclass(frozen=True)
class ConstantStep:
    mu: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"constant step must be finite and positive, got {self.mu}")


@dataclass(frozen=True)
class AdaptiveStep:
    """Exact line search restricted to the union of the old and the gradient support."""


StepSizeRule = Union[ConstantStep, AdaptiveStep]


@dataclass(frozen=True)
class HaltingRule:
    """When to stop iterating.

    With ``relative=True`` (default) both tolerances are multiplied by
    ``||y||_2``. The run stops after ``max_iterations``, when the residual
    drops to ``residual_tolerance``, or when the residual improved by less
    than ``stagnation_epsilon`` over the last ``stagnation_window``
    iterations (a window of 0 disables that test).
    """

    max_iterations: int = 500
    residual_tolerance: float = 1e-7
    stagnation_window: int = 10
    stagnation_epsilon: float = 1e-9
    relative: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.residual_tolerance < 0 or self.stagnation_window < 0:
            raise ValueError("tolerances must be nonnegative")

    def thresholds(self, y_norm: float) -> tuple[float, float]:
        scale = y_norm if self.relative else 1.0
        return self.residual_tolerance * scale, self.stagnation_epsilon * scale

    def should_stop(self, residuals: list[float], y_norm: float) -> bool:
        tol, eps = self.thresholds(y_norm)
        if residuals and residuals[-1] <= tol:
            return True
        w = self.stagnation_window
        if w and len(residuals) > w and residuals[-1 - w] - residuals[-1] < eps:
            return True
        return False


@dataclass
class RecoveryOutput:
    x_hat: np.ndarray
    w_hat: np.ndarray
    support: np.ndarray
    iterations: int
    residual_trace: np.ndarray
    transform_error_trace: Optional[np.ndarray] = None
    step_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    cosupport: Optional[np.ndarray] = None
    converged: bool = False


@dataclass
class StepResult:
    w_g: np.ndarray
    w_hat: np.ndarray
    support: np.ndarray


# ---------------------------------------------------------------------------
# thresholding primitives


def _top_k(mag: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest entries of ``mag``; ties go to the lowest index."""
    p = mag.size
    if k <= 0:
        return np.empty(0, dtype=np.intp)
    if k >= p:
        return np.arange(p)
    kth = np.partition(mag, p - k)[p - k]
    above = np.flatnonzero(mag > kth)
    ties = np.flatnonzero(mag == kth)[: k - above.size]
    return np.sort(np.concatenate([above, ties]))


def hard_threshold(w: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Best k-term approximation.

    Returns ``(support, thresholded)`` where ``support`` holds the indices
    of the ``k`` largest magnitudes (lowest index wins ties) in increasing
    order and ``thresholded`` is ``w`` zeroed off the support.
    """
    w = np.asarray(w)
    if not 0 <= k <= w.size:
        raise ValueError(f"k must lie in [0, {w.size}], got {k}")
    support = _top_k(np.abs(w), k)
    out = np.zeros_like(w)
    out[support] = w[support]
    return support, out


def cosupport_select(z: np.ndarray, ell: int, omega) -> np.ndarray:
    """Indices of the ``ell`` smallest entries of ``|omega z|``.

    This is the complement of ``hard_threshold(omega z, p - ell)``, so ties
    go to the highest index.
    """
    omega_z = omega.forward(z) if isinstance(omega, LinearMap) else np.asarray(omega) @ z
    p = omega_z.size
    if not 0 <= ell <= p:
        raise ValueError(f"ell must lie in [0, {p}], got {ell}")
    keep = np.zeros(p, dtype=bool)
    keep[_top_k(np.abs(omega_z), p - ell)] = True
    return np.flatnonzero(~keep)


def cosparse_project(z: np.ndarray, cosupport, omega) -> np.ndarray:
    """Orthogonal projection of ``z`` onto the null space of ``omega[cosupport]``."""
    z = np.asarray(z, dtype=float)
    cosupport = np.asarray(cosupport, dtype=np.intp)
    if cosupport.size == 0:
        return z.copy()
    rows = as_matrix(omega)[cosupport]
    _, s, vt = np.linalg.svd(rows, full_matrices=False)
    rank = int(np.sum(s > s[0] * max(rows.shape) * np.finfo(float).eps)) if s[0] > 0 else 0
    basis = vt[:rank]
    return z - basis.T @ (basis @ z)


# ---------------------------------------------------------------------------
# TDIHT


def _real_dot(a, b) -> float:
    return float(np.real(np.vdot(a, b)))


def _check_finite(v, iteration, algorithm):
    if not np.all(np.isfinite(v)):
        raise DivergenceError(iteration, algorithm)


def _restricted(pair: AnalysisPair, v: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``D_T omega_T v`` for the support ``T`` given as a boolean mask."""
    coeffs = pair.omega.forward(v)
    coeffs[~mask] = 0.0
    return pair.synthesis.forward(coeffs)


def adaptive_step_size(
    problem: RecoveryProblem,
    w_prev: np.ndarray,
    support_prev,
    *,
    residual: Optional[np.ndarray] = None,
    gradient: Optional[np.ndarray] = None,
) -> float:
    """Closed-form step that minimizes the residual on the candidate support.

    The candidate support is the previous support joined with the ``k``
    largest entries of ``omega M* (y - M D w_prev)``. Returns 0 when the
    search direction vanishes (its squared norm is at most
    ``1e-14 ||y||^2``), which the solver treats as convergence.
    ``residual`` and ``gradient`` may be passed to skip recomputation.
    """
    pair, M, y = problem.pair, problem.m_map, problem.y
    x_prev = pair.synthesis.forward(w_prev)
    if residual is None:
        residual = y - M.forward(x_prev)
    if gradient is None:
        gradient = M.adjoint(residual)

    mask = np.zeros(pair.p, dtype=bool)
    mask[np.asarray(support_prev, dtype=np.intp)] = True
    mask[_top_k(np.abs(pair.omega.forward(gradient)), problem.k)] = True

    direction = M.forward(_restricted(pair, gradient, mask))
    denom = _real_dot(direction, direction)
    if denom <= 1e-14 * _real_dot(y, y):
        return 0.0
    restricted_residual = y - M.forward(_restricted(pair, x_prev, mask))
    return _real_dot(restricted_residual, direction) / denom


def tdiht_step(
    w_prev: np.ndarray,
    problem: RecoveryProblem,
    mu: float,
    *,
    iteration: int = 1,
    residual: Optional[np.ndarray] = None,
    gradient: Optional[np.ndarray] = None,
) -> StepResult:
    """One TDIHT update: gradient step mapped through omega, then hard thresholding."""
    pair, M = problem.pair, problem.m_map
    x_prev = pair.synthesis.forward(w_prev)
    if gradient is None:
        if residual is None:
            residual = problem.y - M.forward(x_prev)
        gradient = M.adjoint(residual)
    w_g = pair.omega.forward(x_prev + mu * gradient)
    _check_finite(w_g, iteration, "tdiht")
    support, w_hat = hard_threshold(w_g, problem.k)
    return StepResult(w_g, w_hat, support)


def _step_rule_value(rule, compute_adaptive):
    if isinstance(rule, ConstantStep):
        return rule.mu
    if isinstance(rule, AdaptiveStep):
        return compute_adaptive()
    raise TypeError(f"unknown step rule {rule!r}")


def tdiht_recover(
    problem: RecoveryProblem,
    step_rule: StepSizeRule = AdaptiveStep(),
    halting: HaltingRule = HaltingRule(),
    ground_truth: Optional[np.ndarray] = None,
) -> RecoveryOutput:
    """Transform-domain IHT from ``w = 0``.

    When ``ground_truth`` is given, ``transform_error_trace[t]`` holds
    ``||(omega x - w_g^t)`` restricted to ``T`` union the current support,
    with ``T`` the ``k`` largest entries of ``omega x``.
    """
    pair, M, y, k = problem.pair, problem.m_map, problem.y, problem.k
    p, d = pair.p, pair.d
    w_hat = np.zeros(p)
    support = np.empty(0, dtype=np.intp)
    if k == 0:
        return RecoveryOutput(np.zeros(d), w_hat, support, 0, np.empty(0),
                              None if ground_truth is None else np.empty(0), converged=True)

    true_coeffs = true_support = None
    if ground_truth is not None:
        true_coeffs = pair.omega.forward(np.asarray(ground_truth, dtype=float))
        true_support = _top_k(np.abs(true_coeffs), k)

    y_norm = float(np.linalg.norm(y))
    residuals: list[float] = []
    errors: list[float] = []
    steps: list[float] = []
    converged = False

    residual = y.astype(complex if np.iscomplexobj(y) else float)
    for t in range(1, halting.max_iterations + 1):
        gradient = M.adjoint(residual)
        mu = _step_rule_value(
            step_rule,
            lambda: adaptive_step_size(problem, w_hat, support, residual=residual, gradient=gradient),
        )
        if mu == 0.0:
            converged = True
            break
        result = tdiht_step(w_hat, problem, mu, iteration=t, gradient=gradient)
        w_hat, support = result.w_hat, result.support
        residual = y - M.forward(pair.synthesis.forward(w_hat))
        _check_finite(residual, t, "tdiht")
        residuals.append(float(np.linalg.norm(residual)))
        steps.append(mu)
        if true_coeffs is not None:
            union = np.union1d(true_support, support)
            errors.append(float(np.linalg.norm((true_coeffs - result.w_g)[union])))
        if halting.should_stop(residuals, y_norm):
            converged = residuals[-1] <= halting.thresholds(y_norm)[0]
            break

    log.debug("tdiht: %d iterations, residual %.3g", len(residuals), residuals[-1] if residuals else 0.0)
    return RecoveryOutput(
        x_hat=pair.synthesis.forward(w_hat),
        w_hat=w_hat,
        support=support,
        iterations=len(residuals),
        residual_trace=np.array(residuals),
        transform_error_trace=None if true_coeffs is None else np.array(errors),
        step_trace=np.array(steps),
        converged=converged,
    )


# ---------------------------------------------------------------------------
# IHT on the synthesis representation


def iht_recover(
    problem: RecoveryProblem,
    step_rule: StepSizeRule = AdaptiveStep(),
    halting: HaltingRule = HaltingRule(),
    ground_truth: Optional[np.ndarray] = None,
) -> RecoveryOutput:
    """Synthesis IHT on ``alpha`` with ``A = M D``; returns ``x_hat = D alpha``.

    The adaptive rule is the exact line search along the gradient
    restricted to the previous support joined with the ``k`` largest
    gradient entries.
    """
    pair, M, y, k = problem.pair, problem.m_map, problem.y, problem.k
    D = pair.synthesis
    p = pair.p
    alpha = np.zeros(p)
    support = np.empty(0, dtype=np.intp)
    if k == 0:
        return RecoveryOutput(np.zeros(pair.d), alpha, support, 0, np.empty(0), converged=True)

    true_alpha = true_support = None
    if ground_truth is not None:
        true_alpha = pair.omega.forward(np.asarray(ground_truth, dtype=float))
        true_support = _top_k(np.abs(true_alpha), k)

    y_norm = float(np.linalg.norm(y))
    residuals, steps, errors = [], [], []
    converged = False
    residual = y.astype(complex if np.iscomplexobj(y) else float)
    for t in range(1, halting.max_iterations + 1):
        gradient = D.adjoint(M.adjoint(residual))

        def line_search():
            mask = np.zeros(p, dtype=bool)
            mask[support] = True
            mask[_top_k(np.abs(gradient), k)] = True
            direction = M.forward(D.forward(np.where(mask, gradient, 0.0)))
            denom = _real_dot(direction, direction)
            if denom <= 1e-14 * y_norm**2:
                return 0.0
            return _real_dot(residual, direction) / denom

        mu = _step_rule_value(step_rule, line_search)
        if mu == 0.0:
            converged = True
            break
        alpha_g = alpha + mu * gradient
        _check_finite(alpha_g, t, "iht")
        support, alpha = hard_threshold(alpha_g, k)
        residual = y - M.forward(D.forward(alpha))
        residuals.append(float(np.linalg.norm(residual)))
        steps.append(mu)
        if true_alpha is not None:
            union = np.union1d(true_support, support)
            errors.append(float(np.linalg.norm((true_alpha - alpha_g)[union])))
        if halting.should_stop(residuals, y_norm):
            converged = residuals[-1] <= halting.thresholds(y_norm)[0]
            break

    return RecoveryOutput(
        x_hat=D.forward(alpha),
        w_hat=alpha,
        support=support,
        iterations=len(residuals),
        residual_trace=np.array(residuals),
        transform_error_trace=None if true_alpha is None else np.array(errors),
        step_trace=np.array(steps),
        converged=converged,
    )


# ---------------------------------------------------------------------------
# AIHT in the signal domain


def aiht_recover(
    problem: RecoveryProblem,
    ell: Optional[int] = None,
    step_rule: StepSizeRule = AdaptiveStep(),
    halting: HaltingRule = HaltingRule(),
) -> RecoveryOutput:
    """Analysis IHT with hard-thresholding cosupport selection.

    Needs a dense omega for the cosparse projection. The adaptive rule is
    the exact line search along the gradient projected onto the previous
    cosparse subspace (the gradient's own cosupport at the first iteration).
    """
    pair, M, y = problem.pair, problem.m_map, problem.y
    if ell is None:
        ell = problem.ell
    if not 0 <= ell <= pair.p:
        raise ValueError(f"ell must lie in [0, {pair.p}], got {ell}")
    omega = as_matrix(pair.omega)
    d = pair.d
    x = np.zeros(d)
    cosupport = None
    if ell == pair.p and np.linalg.matrix_rank(omega) == d:
        return RecoveryOutput(x, np.zeros(pair.p), np.empty(0, dtype=np.intp), 0, np.empty(0),
                              cosupport=np.arange(pair.p), converged=True)

    y_norm = float(np.linalg.norm(y))
    residuals, steps = [], []
    converged = False
    residual = y.astype(complex if np.iscomplexobj(y) else float)
    for t in range(1, halting.max_iterations + 1):
        gradient = M.adjoint(residual)

        def line_search():
            lam = cosupport if cosupport is not None else cosupport_select(gradient, ell, omega)
            direction_x = cosparse_project(gradient, lam, omega)
            direction = M.forward(direction_x)
            denom = _real_dot(direction, direction)
            if denom <= 1e-14 * y_norm**2:
                return 0.0
            return _real_dot(residual, direction) / denom

        mu = _step_rule_value(step_rule, line_search)
        if mu == 0.0:
            converged = True
            break
        x_g = x + mu * gradient
        _check_finite(x_g, t, "aiht")
        cosupport = cosupport_select(x_g, ell, omega)
        x = cosparse_project(x_g, cosupport, omega)
        residual = y - M.forward(x)
        residuals.append(float(np.linalg.norm(residual)))
        steps.append(mu)
        if halting.should_stop(residuals, y_norm):
            converged = residuals[-1] <= halting.thresholds(y_norm)[0]
            break

    w = omega @ x
    if cosupport is not None:
        w[cosupport] = 0.0
    support = np.flatnonzero(w)
    return RecoveryOutput(
        x_hat=x,
        w_hat=w,
        support=support,
        iterations=len(residuals),
        residual_trace=np.array(residuals),
        step_trace=np.array(steps),
        cosupport=cosupport,
        converged=converged,
    )
