"""Matrix-free linear operators.

Every operator maps length-``cols`` vectors to length-``rows`` vectors and
knows its adjoint. Signals live in real double precision; operators whose
output is complex (the subsampled Fourier map) are treated as real-linear
maps, so their adjoint returns the real part and inner products on the
output side are ``Re <u, v>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LinearMap",
    "DenseMap",
    "ComposedMap",
    "PartialFourier",
    "HaarAnalysis",
    "HaarSynthesis",
    "AnalysisPair",
    "SamplingMask",
    "RankError",
    "dense_map",
    "partial_fourier",
    "undecimated_haar",
    "pseudo_inverse",
    "radial_mask",
    "as_matrix",
]


class RankError(ValueError):
    """Raised when an operator lacks the column rank an operation needs."""


class LinearMap:
    """Base class: a ``rows x cols`` operator with forward and adjoint actions.

    Subclasses implement ``_forward`` and ``_adjoint``; the public methods
    check vector lengths.
    """

    field = "real"

    def __init__(self, rows: int, cols: int):
        if rows < 1 or cols < 1:
            raise ValueError(f"dimensions must be positive, got {rows}x{cols}")
        self.rows = int(rows)
        self.cols = int(cols)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.cols,):
            raise ValueError(f"forward expects a length-{self.cols} vector, got shape {x.shape}")
        return self._forward(x)

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y)
        if y.shape != (self.rows,):
            raise ValueError(f"adjoint expects a length-{self.rows} vector, got shape {y.shape}")
        return self._adjoint(y)

    def _forward(self, x):
        raise NotImplementedError

    def _adjoint(self, y):
        raise NotImplementedError

    def __matmul__(self, other: "LinearMap") -> "ComposedMap":
        return ComposedMap(self, other)

    def to_dense(self) -> np.ndarray:
        """Materialize the operator column by column. Only sensible for small maps."""
        dtype = complex if self.field == "complex" else float
        out = np.empty((self.rows, self.cols), dtype=dtype)
        e = np.zeros(self.cols)
        for j in range(self.cols):
            e[j] = 1.0
            out[:, j] = self._forward(e)
            e[j] = 0.0
        return out

    def __repr__(self):
        return f"{type(self).__name__}({self.rows}x{self.cols}, {self.field})"


class DenseMap(LinearMap):
    def __init__(self, matrix: np.ndarray):
        matrix = np.array(matrix)
        if matrix.ndim != 2:
            raise ValueError("matrix must be two-dimensional")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("matrix has non-finite entries")
        if np.iscomplexobj(matrix):
            matrix = matrix.astype(complex)
            self.field = "complex"
        else:
            matrix = matrix.astype(float)
        matrix.setflags(write=False)
        super().__init__(*matrix.shape)
        self.matrix = matrix

    def _forward(self, x):
        return self.matrix @ x

    def _adjoint(self, y):
        return self.matrix.conj().T @ y

    def to_dense(self):
        return self.matrix.copy()


class ComposedMap(LinearMap):
    """``outer @ inner``: forward applies ``inner`` first."""

    def __init__(self, outer: LinearMap, inner: LinearMap):
        if outer.cols != inner.rows:
            raise ValueError(f"cannot compose {outer.shape} with {inner.shape}")
        super().__init__(outer.rows, inner.cols)
        self.outer = outer
        self.inner = inner
        if "complex" in (outer.field, inner.field):
            self.field = "complex"

    def _forward(self, x):
        return self.outer._forward(self.inner._forward(x))

    def _adjoint(self, y):
        return self.inner._adjoint(self.outer._adjoint(y))


def dense_map(matrix) -> DenseMap:
    return DenseMap(matrix)


def as_matrix(op) -> np.ndarray:
    """Return an explicit matrix for ``op`` (a ``LinearMap`` or an array)."""
    if isinstance(op, DenseMap):
        return op.matrix
    if isinstance(op, LinearMap):
        return op.to_dense()
    return np.asarray(op)


# ---------------------------------------------------------------------------
# Fourier sampling


@dataclass(frozen=True)
class SamplingMask:
    """Boolean k-space grid stored in centered layout (DC at ``(h//2, w//2)``)."""

    sampled: np.ndarray = field(repr=False)

    def __post_init__(self):
        grid = np.array(self.sampled, dtype=bool)
        if grid.ndim != 2:
            raise ValueError("mask must be a 2-D grid")
        grid.setflags(write=False)
        object.__setattr__(self, "sampled", grid)

    @property
    def height(self) -> int:
        return self.sampled.shape[0]

    @property
    def width(self) -> int:
        return self.sampled.shape[1]

    @property
    def count(self) -> int:
        return int(self.sampled.sum())

    @property
    def fraction(self) -> float:
        return self.count / self.sampled.size

    def unshifted(self) -> np.ndarray:
        """Mask in FFT layout (DC at ``(0, 0)``)."""
        return np.fft.ifftshift(self.sampled)


class PartialFourier(LinearMap):
    """Unitary 2-D DFT of a real image restricted to the sampled cells."""

    field = "complex"

    def __init__(self, mask: SamplingMask):
        if mask.count == 0:
            raise ValueError("mask samples no cells")
        super().__init__(mask.count, mask.height * mask.width)
        self.mask = mask
        self.grid_shape = (mask.height, mask.width)
        self._index = np.flatnonzero(mask.unshifted())

    def _forward(self, x):
        k = np.fft.fft2(x.reshape(self.grid_shape), norm="ortho")
        return k.ravel()[self._index]

    def _adjoint(self, y):
        full = np.zeros(self.cols, dtype=complex)
        full[self._index] = y
        img = np.fft.ifft2(full.reshape(self.grid_shape), norm="ortho")
        return img.real.ravel()


def partial_fourier(mask: SamplingMask) -> PartialFourier:
    return PartialFourier(mask)


def radial_mask(n: int, lines: int) -> SamplingMask:
    """Star-shaped sampling pattern of ``lines`` lines through the DC cell.

    Angles are ``j*pi/lines``. Each line is swept with ``2n`` parameter
    samples across the grid along its dominant axis; the dominant
    coordinate is snapped to the nearest cell first and the other one
    follows, so every line is 8-connected with one cell per step.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not 1 <= lines <= 2 * n:
        raise ValueError(f"lines must lie in [1, {2 * n}], got {lines}")
    grid = np.zeros((n, n), dtype=bool)
    c = n // 2
    sweep = np.rint(np.linspace(-n / 2, n / 2, 2 * n))
    for theta in np.arange(lines) * np.pi / lines:
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        if abs(cos_t) >= abs(sin_t):
            col_off = sweep
            row_off = np.rint(-sweep * sin_t / cos_t)
        else:
            row_off = -sweep
            col_off = np.rint(sweep * cos_t / sin_t)
        rows = (c + row_off).astype(int)
        cols = (c + col_off).astype(int)
        keep = (rows >= 0) & (rows < n) & (cols >= 0) & (cols < n)
        grid[rows[keep], cols[keep]] = True
    grid[c, c] = True
    return SamplingMask(grid)


# ---------------------------------------------------------------------------
# Undecimated Haar frame
#
# One level, four full-resolution subbands in the order LL, LH, HL, HH, with
# periodic boundaries. The 1-D filters are (1, +-1)/2 so every 2-D subband
# filter has norm 1/2 and the stacked analysis operator is a Parseval frame.


def _lo(a, axis):
    return 0.5 * (a + np.roll(a, -1, axis=axis))


def _hi(a, axis):
    return 0.5 * (a - np.roll(a, -1, axis=axis))


def _lo_t(a, axis):
    return 0.5 * (a + np.roll(a, 1, axis=axis))


def _hi_t(a, axis):
    return 0.5 * (a - np.roll(a, 1, axis=axis))


class HaarAnalysis(LinearMap):
    def __init__(self, height: int, width: int):
        super().__init__(4 * height * width, height * width)
        self.grid_shape = (height, width)

    def subbands(self, x: np.ndarray) -> np.ndarray:
        """Return the ``(4, h, w)`` stack LL, LH, HL, HH."""
        img = np.asarray(x, dtype=float).reshape(self.grid_shape)
        lo, hi = _lo(img, 0), _hi(img, 0)
        return np.stack([_lo(lo, 1), _hi(lo, 1), _lo(hi, 1), _hi(hi, 1)])

    def _forward(self, x):
        return self.subbands(x).ravel()

    def _adjoint(self, w):
        ll, lh, hl, hh = w.reshape((4,) + self.grid_shape)
        lo = _lo_t(ll, 1) + _hi_t(lh, 1)
        hi = _lo_t(hl, 1) + _hi_t(hh, 1)
        return (_lo_t(lo, 0) + _hi_t(hi, 0)).ravel()


class HaarSynthesis(LinearMap):
    """Transpose of :class:`HaarAnalysis`; an exact left inverse of it."""

    def __init__(self, analysis: HaarAnalysis):
        super().__init__(analysis.cols, analysis.rows)
        self.analysis = analysis

    def _forward(self, w):
        return self.analysis._adjoint(w)

    def _adjoint(self, x):
        return self.analysis._forward(x)


@dataclass(frozen=True)
class AnalysisPair:
    """Analysis operator ``omega`` (p x d) with a synthesis map satisfying D omega = I."""

    omega: LinearMap
    synthesis: LinearMap
    frame_lower: float = 1.0
    frame_upper: float = 1.0

    def __post_init__(self):
        if self.synthesis.shape != (self.omega.cols, self.omega.rows):
            raise ValueError(
                f"synthesis shape {self.synthesis.shape} does not match omega {self.omega.shape}"
            )
        if not 0 < self.frame_lower <= self.frame_upper:
            raise ValueError("frame bounds must satisfy 0 < A <= B")

    @property
    def d(self) -> int:
        return self.omega.cols

    @property
    def p(self) -> int:
        return self.omega.rows

    @property
    def is_dense(self) -> bool:
        return isinstance(self.omega, DenseMap)

    @classmethod
    def from_matrix(cls, omega: np.ndarray) -> "AnalysisPair":
        """Pair a dense full-column-rank ``omega`` with its pseudo-inverse."""
        omega = np.asarray(omega, dtype=float)
        s = np.linalg.svd(omega, compute_uv=False)
        if s[-1] <= 1e-12 * s[0]:
            raise RankError("omega is not full column rank")
        return cls(DenseMap(omega), DenseMap(pseudo_inverse(omega)), float(s[-1]), float(s[0]))


def undecimated_haar(height: int, width: int) -> AnalysisPair:
    if height < 2 or width < 2:
        raise ValueError("undecimated Haar needs height, width >= 2")
    omega = HaarAnalysis(height, width)
    return AnalysisPair(omega, HaarSynthesis(omega), 1.0, 1.0)


def pseudo_inverse(omega: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a tall full-column-rank matrix.

    Raises :class:`RankError` when the smallest singular value is below
    ``1e-12`` times the largest.
    """
    omega = np.asarray(omega)
    p, d = omega.shape
    if p < d:
        raise RankError(f"omega must have at least as many rows as columns, got {p}x{d}")
    u, s, vt = np.linalg.svd(omega, full_matrices=False)
    if s[-1] <= 1e-12 * s[0]:
        raise RankError(f"omega is rank deficient (sigma_min/sigma_max = {s[-1] / s[0]:.3g})")
    return (vt.conj().T / s) @ u.conj().T
