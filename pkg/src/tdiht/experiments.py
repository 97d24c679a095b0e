"""Experiment protocols: phase-transition diagrams, Fourier image recovery
and the Gaussian denoising ensemble.

Every random quantity is drawn from a stream keyed by the spec seed and
the position of the draw (cell, trial), never by execution order, so
results do not depend on how many worker threads run them.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .frames import random_tight_frame
from .linops import AnalysisPair, DenseMap, SamplingMask, partial_fourier, undecimated_haar
from .recovery import (
    AdaptiveStep,
    DivergenceError,
    HaltingRule,
    RecoveryProblem,
    StepSizeRule,
    aiht_recover,
    iht_recover,
    tdiht_recover,
)
from .seeding import derive_seed, make_rng
from .signals import CosparseSpec, NoiseSpec, add_noise, cosparsify, gen_cosparse_signal, psnr

__all__ = [
    "ALGORITHMS",
    "PhaseGridSpec",
    "CellResult",
    "PhaseGridResult",
    "MriRunSpec",
    "MriResult",
    "grid_values",
    "cell_dimensions",
    "run_phase_cell",
    "run_phase_grid",
    "run_mri",
    "naive_recovery",
    "denoising_ensemble",
    "worker_count",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("tdiht", "iht", "aiht")


def worker_count() -> int:
    """Thread pool size from ``COSPARSE_THREADS`` (default: CPU count)."""
    raw = os.environ.get("COSPARSE_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            log.warning("ignoring non-integer COSPARSE_THREADS=%r", raw)
    return os.cpu_count() or 1


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def grid_values(n: int) -> np.ndarray:
    """``n`` evenly spaced values in (0, 1], ending at 1."""
    if n < 1:
        raise ValueError("grid needs at least one value")
    return np.arange(1, n + 1) / n


def _solve(algorithm: str, problem: RecoveryProblem, step_rule, halting, ground_truth=None):
    if algorithm == "tdiht":
        return tdiht_recover(problem, step_rule, halting, ground_truth)
    if algorithm == "iht":
        return iht_recover(problem, step_rule, halting, ground_truth)
    if algorithm == "aiht":
        return aiht_recover(problem, None, step_rule, halting)
    raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")


# ---------------------------------------------------------------------------
# phase transition


@dataclass(frozen=True)
class PhaseGridSpec:
    """Synthetic phase-transition experiment.

    ``identity_measurements`` and ``identity_frame`` replace the random
    draws by ``I`` (diagnostic mode; ``identity_frame`` needs ``p == d``).
    """

    d: int = 120
    p: int = 144
    delta_values: Sequence[float] = tuple(grid_values(20))
    rho_values: Sequence[float] = tuple(grid_values(20))
    trials: int = 50
    algorithm: str = "tdiht"
    step_rule: StepSizeRule = AdaptiveStep()
    halting: HaltingRule = HaltingRule()
    success_tolerance: float = 1e-6
    seed: int = 0
    identity_measurements: bool = False
    identity_frame: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.p < self.d:
            raise ValueError("p must be at least d")
        if self.identity_frame and self.p != self.d:
            raise ValueError("identity frame needs p == d")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        for v in list(self.delta_values) + list(self.rho_values):
            if not 0 < v <= 1:
                raise ValueError(f"grid values must lie in (0, 1], got {v}")


def cell_dimensions(spec: PhaseGridSpec, delta: float, rho: float) -> tuple[int, int, int]:
    """``(m, ell, k)`` for one cell: ``m = delta d``, ``ell = d - rho m``, ``k = p - ell``.

    Both products are rounded half up and clamped to at least 1, so every
    cell has a measurement and a nonzero signal.
    """
    m = max(1, _round_half_up(delta * spec.d))
    ell = spec.d - max(1, _round_half_up(rho * m))
    return m, ell, spec.p - ell


@dataclass
class CellResult:
    success_rate: float
    mean_iterations: float
    m: int = 0
    ell: int = 0


def _trial(spec: PhaseGridSpec, m: int, ell: int, k: int, trial_seed: int) -> tuple[bool, int]:
    rng = make_rng(trial_seed)
    d, p = spec.d, spec.p
    if spec.identity_measurements:
        mat = np.eye(d)[:m] if m < d else np.eye(d)
    else:
        mat = rng.standard_normal((m, d)) / np.sqrt(m)
    if spec.identity_frame:
        pair = AnalysisPair(DenseMap(np.eye(d)), DenseMap(np.eye(d)))
    else:
        pair = random_tight_frame(p, d, int(rng.integers(2**63)))
    x = gen_cosparse_signal(CosparseSpec(pair, ell, int(rng.integers(2**63))))
    M = DenseMap(mat)
    problem = RecoveryProblem(M.forward(x), M, pair, k)
    try:
        out = _solve(spec.algorithm, problem, spec.step_rule, spec.halting)
    except DivergenceError as exc:
        log.debug("trial diverged: %s", exc)
        return False, spec.halting.max_iterations
    err = np.linalg.norm(out.x_hat - x) / np.linalg.norm(x)
    return bool(err <= spec.success_tolerance), out.iterations


def run_phase_cell(spec: PhaseGridSpec, delta: float, rho: float, index: tuple[int, int] = (0, 0)) -> CellResult:
    """Success rate over ``spec.trials`` fresh problems at one ``(delta, rho)``.

    ``index`` (delta index, rho index) keys the per-trial seeds.
    """
    m, ell, k = cell_dimensions(spec, delta, rho)
    if not 0 <= ell <= spec.p:
        raise ValueError(f"cell (delta={delta}, rho={rho}) gives invalid ell={ell}")
    successes, iterations = 0, 0
    for t in range(spec.trials):
        ok, its = _trial(spec, m, ell, k, derive_seed(spec.seed, index[0], index[1], t))
        successes += ok
        iterations += its
    return CellResult(successes / spec.trials, iterations / spec.trials, m, ell)


@dataclass
class PhaseGridResult:
    """``success_rate[i, j]`` belongs to ``rho_values[i]`` and ``delta_values[j]``."""

    success_rate: np.ndarray
    mean_iterations: np.ndarray
    spec: PhaseGridSpec = field(repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["delta", "rho", "success_rate", "mean_iterations"])
        for i, rho in enumerate(self.spec.rho_values):
            for j, delta in enumerate(self.spec.delta_values):
                writer.writerow([f"{v:.6g}" for v in
                                 (delta, rho, self.success_rate[i, j], self.mean_iterations[i, j])])
        return buf.getvalue()


def run_phase_grid(spec: PhaseGridSpec, threads: Optional[int] = None) -> PhaseGridResult:
    n_rho, n_delta = len(spec.rho_values), len(spec.delta_values)
    cells = [(i, j) for i in range(n_rho) for j in range(n_delta)]

    def run(cell):
        i, j = cell
        return run_phase_cell(spec, spec.delta_values[j], spec.rho_values[i], index=(j, i))

    threads = worker_count() if threads is None else max(1, threads)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(c) for c in cells]

    rate = np.empty((n_rho, n_delta))
    iters = np.empty((n_rho, n_delta))
    for (i, j), r in zip(cells, results):
        rate[i, j] = r.success_rate
        iters[i, j] = r.mean_iterations
    return PhaseGridResult(rate, iters, spec)


# ---------------------------------------------------------------------------
# Fourier image recovery


@dataclass(frozen=True)
class MriRunSpec:
    """Fourier image recovery run.

    ``naive_scale`` multiplies the zero-filled baseline; 1 keeps the plain
    adjoint, ``d / count`` compensates the energy removed by the mask.
    """

    image: np.ndarray = field(repr=False)
    mask: SamplingMask = field(repr=False)
    threshold: float = 0.01
    noise: NoiseSpec = NoiseSpec()
    algorithm: str = "tdiht"
    step_rule: StepSizeRule = AdaptiveStep()
    halting: HaltingRule = HaltingRule(max_iterations=1000)
    seed: int = 0
    naive_scale: float = 1.0

    def __post_init__(self):
        img = np.asarray(self.image, dtype=float)
        if img.ndim != 2:
            raise ValueError("image must be 2-D")
        if img.shape != self.mask.sampled.shape:
            raise ValueError(f"mask {self.mask.sampled.shape} does not match image {img.shape}")
        if self.algorithm not in ("tdiht", "iht"):
            raise ValueError("image recovery supports tdiht and iht (aiht needs a dense omega)")


@dataclass
class MriResult:
    recon: np.ndarray
    naive: np.ndarray
    psnr: float
    naive_psnr: float
    model_error_psnr: float
    k: int
    measurements: int
    iterations: int
    seed: int

    def report(self) -> dict:
        return {
            "psnr": self.psnr,
            "naive_psnr": self.naive_psnr,
            "model_error_psnr": self.model_error_psnr,
            "k": self.k,
            "measurements": self.measurements,
            "iterations": self.iterations,
            "seed": self.seed,
        }


def naive_recovery(m_map, y: np.ndarray, shape) -> np.ndarray:
    """Zero-filled inverse DFT of the samples (real part)."""
    return m_map.adjoint(y).reshape(shape)


def run_mri(spec: MriRunSpec) -> MriResult:
    """Recover a [0, 1] image from undersampled unitary Fourier samples.

    The undecimated Haar frame provides the analysis model; the budget
    ``k`` comes from cosparsifying the true image at ``spec.threshold``.
    """
    img = np.asarray(spec.image, dtype=float)
    h, w = img.shape
    pair = undecimated_haar(h, w)
    M = partial_fourier(spec.mask)
    model = cosparsify(img, pair, spec.threshold)

    # the noise stream is keyed by the run seed; spec.noise.seed is ignored
    noise = replace(spec.noise, seed=derive_seed(spec.seed, 1))
    y, _ = add_noise(M.forward(img.ravel()), noise)

    problem = RecoveryProblem(y, M, pair, model.k)
    out = _solve(spec.algorithm, problem, spec.step_rule, spec.halting)
    recon = out.x_hat.reshape(h, w)
    naive = spec.naive_scale * naive_recovery(M, y, (h, w))
    return MriResult(
        recon=recon,
        naive=naive,
        psnr=psnr(img, recon),
        naive_psnr=psnr(img, naive),
        model_error_psnr=model.model_error_psnr,
        k=model.k,
        measurements=M.rows,
        iterations=out.iterations,
        seed=spec.seed,
    )


# ---------------------------------------------------------------------------
# Gaussian denoising


def denoising_ensemble(
    d: int = 120,
    p: int = 144,
    m: int = 100,
    ell: int = 110,
    snr: float = 10.0,
    trials: int = 100,
    seed: int = 0,
    step_rule: StepSizeRule = AdaptiveStep(),
    halting: HaltingRule = HaltingRule(),
) -> dict:
    """Mean squared TDIHT error against the signal-domain noise power.

    Each trial draws a Gaussian ``M`` (columns scaled by ``1/sqrt(m)``), a
    random tight frame, an ``ell``-cosparse unit signal and white Gaussian
    noise with ``sigma = ||M x|| / (snr sqrt(m))``. The noise power of a
    trial is ``||pinv(M) e||^2``, i.e. ``d`` times the equivalent
    per-sample signal-domain variance.
    """
    errors = np.empty(trials)
    powers = np.empty(trials)
    for t in range(trials):
        rng = make_rng(seed, t)
        mat = rng.standard_normal((m, d)) / np.sqrt(m)
        pair = random_tight_frame(p, d, int(rng.integers(2**63)))
        x = gen_cosparse_signal(CosparseSpec(pair, ell, int(rng.integers(2**63))))
        clean = mat @ x
        sigma = np.linalg.norm(clean) / (snr * np.sqrt(m))
        y, e = add_noise(clean, NoiseSpec.gaussian(sigma, int(rng.integers(2**63))))
        out = tdiht_recover(RecoveryProblem(y, DenseMap(mat), pair, p - ell), step_rule, halting)
        errors[t] = np.sum((out.x_hat - x) ** 2)
        powers[t] = np.sum(np.linalg.lstsq(mat, e, rcond=None)[0] ** 2)
    return {
        "mean_squared_error": float(errors.mean()),
        "mean_noise_power": float(powers.mean()),
        "ratio": float(errors.mean() / powers.mean()),
        "trials": trials,
    }
