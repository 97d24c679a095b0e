"""Test signals, noise models, image cosparsification and quality metrics.

Images are real arrays scaled to [0, 1]; PSNR uses a peak of 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linops import AnalysisPair, LinearMap, as_matrix
from .seeding import make_rng
from .recovery import cosparse_project

__all__ = [
    "PSNR_CAP",
    "NoiseSpec",
    "CosparseSpec",
    "Cosparsified",
    "gen_cosparse_signal",
    "add_noise",
    "snr_db_to_ratio",
    "cosparsify",
    "psnr",
    "shepp_logan",
    "MODIFIED_SHEPP_LOGAN",
    "lemma7_bound_check",
]

PSNR_CAP = 300.0


@dataclass(frozen=True)
class NoiseSpec:
    """Additive measurement noise.

    ``variant`` is one of ``none``, ``adversarial`` (``level`` is the l2
    bound epsilon), ``gaussian`` (``level`` is the per-component standard
    deviation sigma) or ``target_snr`` (``level`` is the ratio
    ``||M x|| / ||e||``).
    """

    variant: str = "none"
    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.variant not in ("none", "adversarial", "gaussian", "target_snr"):
            raise ValueError(f"unknown noise variant {self.variant!r}")
        if self.variant == "target_snr" and not self.level > 0:
            raise ValueError("target SNR must be positive")
        if self.level < 0:
            raise ValueError("noise level must be nonnegative")

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls()

    @classmethod
    def gaussian(cls, sigma: float, seed: int = 0) -> "NoiseSpec":
        return cls("gaussian", sigma, seed)

    @classmethod
    def adversarial(cls, epsilon: float, seed: int = 0) -> "NoiseSpec":
        return cls("adversarial", epsilon, seed)

    @classmethod
    def target_snr(cls, ratio: float, seed: int = 0) -> "NoiseSpec":
        return cls("target_snr", ratio, seed)


def snr_db_to_ratio(db: float) -> float:
    """Amplitude ratio for an SNR given in decibels (20 log10 convention)."""
    return float(10.0 ** (db / 20.0))


def _gaussian_like(rng, clean: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(clean):
        return (rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)) / np.sqrt(2)
    return rng.standard_normal(clean.shape)


def add_noise(clean: np.ndarray, spec: NoiseSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(clean + e, e)``.

    Complex measurements get independent real and imaginary parts, each
    with half the variance, so ``E||e||^2 = m sigma^2`` either way.
    """
    clean = np.asarray(clean)
    if spec.variant == "none":
        e = np.zeros_like(clean)
        return clean + e, e
    rng = make_rng(spec.seed)
    g = _gaussian_like(rng, clean)
    if spec.variant == "gaussian":
        e = spec.level * g
    elif spec.variant == "adversarial":
        e = spec.level * g / np.linalg.norm(g)
    else:
        e = (np.linalg.norm(clean) / spec.level) * g / np.linalg.norm(g)
    return clean + e, e


@dataclass(frozen=True)
class CosparseSpec:
    pair: AnalysisPair
    ell: int
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.ell <= self.pair.p:
            raise ValueError(f"ell must lie in [0, {self.pair.p}], got {self.ell}")

    @property
    def k(self) -> int:
        return self.pair.p - self.ell


def gen_cosparse_signal(spec: CosparseSpec, *, return_cosupport: bool = False):
    """Draw a unit-norm signal orthogonal to ``ell`` random rows of omega.

    A cosupport is drawn uniformly, a Gaussian vector is projected onto the
    null space of those rows and normalized. A projection that vanishes is
    redrawn up to 10 times before giving up.
    """
    omega = as_matrix(spec.pair.omega)
    p, d = omega.shape
    rng = make_rng(spec.seed)
    for _ in range(10):
        cosupport = np.sort(rng.choice(p, size=spec.ell, replace=False))
        x = cosparse_project(rng.standard_normal(d), cosupport, omega)
        norm = np.linalg.norm(x)
        if norm > 1e-10:
            x = x / norm
            return (x, cosupport) if return_cosupport else x
    raise RuntimeError(f"could not draw a nonzero {spec.ell}-cosparse signal in R^{d}")


# ---------------------------------------------------------------------------
# images


def psnr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Peak SNR in dB for [0, 1] images, capped at :data:`PSNR_CAP`."""
    reference = np.asarray(reference, dtype=float).ravel()
    estimate = np.asarray(estimate, dtype=float).ravel()
    if reference.shape != estimate.shape:
        raise ValueError(f"size mismatch: {reference.size} vs {estimate.size}")
    mse = float(np.mean((reference - estimate) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


@dataclass
class Cosparsified:
    w: np.ndarray
    k: int
    model_error_psnr: float


def cosparsify(image: np.ndarray, pair: AnalysisPair, threshold: float) -> Cosparsified:
    """Zero the analysis coefficients of ``image`` whose magnitude is below ``threshold``.

    ``model_error_psnr`` compares the image with the synthesis of what is
    left, i.e. the best this coefficient budget can do.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(image, dtype=float).ravel()
    w = pair.omega.forward(x)
    w[np.abs(w) < threshold] = 0.0
    k = int(np.count_nonzero(w))
    return Cosparsified(w, k, psnr(x, pair.synthesis.forward(w)))


# (intensity, semi-axis a, semi-axis b, centre x, centre y, rotation in degrees)
MODIFIED_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def shepp_logan(n: int) -> np.ndarray:
    """Ten-ellipse (modified, high-contrast) Shepp-Logan phantom, ``n x n``.

    Pixel centres sit on a uniform grid over [-1, 1] with ``y`` pointing
    up; a pixel belongs to an ellipse when its centre does. The result is
    clipped to [0, 1].
    """
    if n < 16:
        raise ValueError("phantom side must be at least 16")
    axis = (np.arange(n) - (n - 1) / 2) / ((n - 1) / 2)
    xg = np.tile(axis, (n, 1))
    yg = np.rot90(xg)
    img = np.zeros((n, n))
    for value, a, b, x0, y0, phi in MODIFIED_SHEPP_LOGAN:
        phi = np.deg2rad(phi)
        x, y = xg - x0, yg - y0
        c, s = np.cos(phi), np.sin(phi)
        inside = ((x * c + y * s) / a) ** 2 + ((y * c - x * s) / b) ** 2 <= 1.0
        img[inside] += value
    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Gaussian noise through the analysis operator


def lemma7_bound_check(
    m_map: LinearMap,
    omega,
    k: int,
    sigma: float,
    trials: int,
    seed: int = 0,
    delta_1: Optional[float] = None,
) -> dict:
    """Compare ``E max_{|T|<=k} ||omega_T M* e||^2`` against its Gaussian-noise bound.

    The maximum over supports is the sum of the ``k`` largest squared
    entries of ``omega M* e``. The bound is
    ``4 max_i ||omega_i||^2 (1 + delta_1) k log(p) sigma^2`` with
    ``delta_1`` the exhaustive one-sparse D-RIP constant of ``M`` against
    the columns of ``omega^T`` (computed when not supplied).

    Returns a dict with ``empirical``, ``std_error``, ``bound`` and ``delta_1``.
    """
    from .frames import drip_exhaustive

    omega = as_matrix(omega)
    p = omega.shape[0]
    if delta_1 is None:
        delta_1 = drip_exhaustive(m_map, omega.T, 1).delta
    bound = 4.0 * float(np.max(np.sum(omega**2, axis=1))) * (1 + delta_1) * k * np.log(p) * sigma**2

    rng = make_rng(seed)
    samples = np.empty(trials)
    for i in range(trials):
        e = sigma * rng.standard_normal(m_map.rows)
        sq = (omega @ m_map.adjoint(e)) ** 2
        samples[i] = np.sum(np.sort(sq)[p - k:]) if k > 0 else 0.0
    std_error = float(samples.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return {"empirical": float(samples.mean()), "std_error": std_error,
            "bound": float(bound), "delta_1": float(delta_1)}
