"""
Noise model, SVD and the spectral cut-off factorization indicator.

For a sampling point z with normalized probe b, the indicator is

    ind(z) = sum_{j : phi(sigma_j; alpha) = 1, sigma_j > 0} |<u_j, b>|^2 / sigma_j

and the imaging functional is W_reg(z) = 1 / ind(z), rescaled by its maximum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .forward_model import DtNMatrix
from .probe import SamplePoint, probe_matrix

__all__ = [
    "NoiseSpec",
    "RegularizationSpec",
    "SvdSystem",
    "ImagingMap",
    "SamplingGrid",
    "ImagingError",
    "DEGENERATE_THRESHOLD",
    "inject_noise",
    "noise_matrix",
    "decompose",
    "filter_factor",
    "spectral_cutoff",
    "FILTERS",
    "indicator",
    "indicator_values",
    "is_degenerate",
    "build_imaging_map",
    "relative_noise_level",
]

log = logging.getLogger(__name__)

DEGENERATE_THRESHOLD = 1e-300


class ImagingError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


def spectral_cutoff(t, alpha: float):
    """1 where ``t**2 >= alpha``, else 0."""
    t = np.asarray(t, dtype=float)
    out = np.where(t * t >= alpha, 1.0, 0.0)
    return float(out) if out.ndim == 0 else out


FILTERS: dict[str, Callable] = {"spectral-cutoff": spectral_cutoff}


@dataclass(frozen=True)
class RegularizationSpec:
    alpha: float
    filter: str = "spectral-cutoff"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.filter not in FILTERS:
            raise ValueError(f"unknown filter {self.filter!r}; known: {sorted(FILTERS)}")

    def weights(self, sigma) -> np.ndarray:
        return np.asarray(FILTERS[self.filter](sigma, self.alpha), dtype=float)


def filter_factor(t: float, alpha: float) -> float:
    if t < 0 or not alpha > 0:
        raise ValueError("filter_factor needs t >= 0 and alpha > 0")
    return spectral_cutoff(t, alpha)


def noise_matrix(N: int, seed: int, *, max_iter: int = 200, tol: float = 1e-10) -> np.ndarray:
    """Uniform [-1, 1] entries, scaled to unit spectral norm.

    The norm comes from power iteration on ``E.T @ E``; a direct SVD norm
    checks the estimate and replaces it if power iteration stalled.
    """
    rng = np.random.default_rng(seed)
    E = rng.uniform(-1.0, 1.0, size=(N, N))
    v = np.ones(N) / np.sqrt(N)
    est = 0.0
    for _ in range(max_iter):
        Ev = E @ v
        new = float(np.linalg.norm(Ev))  # Rayleigh quotient of E^T E, square-rooted
        w = E.T @ Ev
        v = w / np.linalg.norm(w)
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    direct = float(np.linalg.norm(E, 2))
    if abs(direct - est) > 1e-8 * direct:
        log.info("power iteration norm %.12g differs from direct %.12g; using direct", est, direct)
        est = direct
    return E / est


def inject_noise(A: DtNMatrix, spec: NoiseSpec) -> DtNMatrix:
    """Entrywise multiplicative noise ``A * (1 + delta E)`` with ``||E||_2 = 1``."""
    if A.values.shape[0] != A.values.shape[1]:
        raise ValueError("DtN matrix must be square")
    if spec.delta == 0:
        return A
    E = noise_matrix(A.N, spec.seed)
    return DtNMatrix(A.values * (1.0 + spec.delta * E))


def relative_noise_level(A: DtNMatrix, A_delta: DtNMatrix) -> float:
    """Measured ``||A_delta - A||_2 / ||A||_2``."""
    base = np.linalg.norm(A.values, 2)
    if base == 0:
        return 0.0
    return float(np.linalg.norm(A_delta.values - A.values, 2) / base)


@dataclass(frozen=True)
class SvdSystem:
    sigma: np.ndarray
    U: np.ndarray
    Vt: np.ndarray

    @property
    def N(self) -> int:
        return self.sigma.size


def decompose(A_delta: DtNMatrix) -> SvdSystem:
    values = A_delta.values
    if not np.all(np.isfinite(values)):
        raise ValueError("DtN matrix has non-finite entries")
    U, s, Vt = np.linalg.svd(values)
    for arr in (U, s, Vt):
        arr.flags.writeable = False
    return SvdSystem(sigma=s, U=U, Vt=Vt)


def is_degenerate(ind: float) -> bool:
    return not ind >= DEGENERATE_THRESHOLD


def indicator_values(probes: np.ndarray, svd: SvdSystem, reg: RegularizationSpec) -> np.ndarray:
    """Indicator sums for a stack of normalized probes (one per row)."""
    phi = reg.weights(svd.sigma)
    keep = (phi != 0) & (svd.sigma > 0)
    coeff = np.zeros_like(svd.sigma)
    coeff[keep] = phi[keep] ** 2 / svd.sigma[keep]
    proj = probes @ svd.U
    return (proj * proj) @ coeff


def indicator(
    z: SamplePoint,
    svd: SvdSystem,
    reg: RegularizationSpec,
    N: int | None = None,
    probe_norm: str = "unit",
) -> float:
    """Filtered Picard sum at ``z``; values below 1e-300 mark a degenerate point.

    ``probe_norm`` selects the probe scaling, see :func:`shtomo.probe.probe_matrix`.
    """
    N = svd.N if N is None else N
    if N != svd.N:
        raise ValueError(f"probe size {N} does not match SVD size {svd.N}")
    probes = probe_matrix([z.r], [z.theta_z], N, norm=probe_norm)
    return float(indicator_values(probes, svd, reg)[0])


@dataclass(frozen=True)
class SamplingGrid:
    """Cartesian lattice over ``[-extent, extent]^2`` clipped to ``r <= r_max``.

    For odd ``resolution`` the lattice is shifted by half a cell along both
    axes so no node lands on the origin; even lattices already avoid it.
    """

    resolution: int = 101
    r_max: float = 0.95
    extent: float | None = None

    def __post_init__(self):
        if self.resolution < 1:
            raise ValueError("grid resolution must be positive")
        if not 0 < self.r_max < 1:
            raise ValueError(f"r_max must lie in (0, 1), got {self.r_max}")

    def axis(self) -> np.ndarray:
        ext = self.r_max if self.extent is None else self.extent
        if self.resolution == 1:
            return np.array([ext / 2])
        ax = np.linspace(-ext, ext, self.resolution)
        if self.resolution % 2:
            ax = ax + 0.5 * (ax[1] - ax[0])
        return ax

    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(x, y, row, col)`` of lattice nodes inside the clip radius."""
        ax = self.axis()
        col, row = np.meshgrid(np.arange(self.resolution), np.arange(self.resolution))
        x, y = ax[col], ax[::-1][row]
        inside = np.hypot(x, y) <= self.r_max
        return x[inside], y[inside], row[inside], col[inside]


@dataclass(frozen=True)
class ImagingMap:
    """Indicator values on a sampling grid; degenerate points hold NaN."""

    x: np.ndarray
    y: np.ndarray
    row: np.ndarray
    col: np.ndarray
    shape: tuple[int, int]
    w_reg: np.ndarray
    w: np.ndarray

    @property
    def r(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    def to_csv(self, path=None) -> str:
        def fmt(v):
            return "" if not np.isfinite(v) else repr(float(v))

        lines = ["x,y,w_reg,w"]
        for x, y, wr, w in zip(self.x.tolist(), self.y.tolist(), self.w_reg.tolist(), self.w.tolist()):
            lines.append(f"{x!r},{y!r},{fmt(wr)},{fmt(w)}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    def image(self) -> np.ndarray:
        """Grayscale levels 0..255, row 0 at the top (largest y)."""
        img = np.zeros(self.shape, dtype=int)
        w = np.where(np.isfinite(self.w), self.w, 0.0)
        img[self.row, self.col] = np.rint(255 * np.clip(w, 0, 1)).astype(int)
        return img

    def to_pgm(self, path=None) -> str:
        img = self.image()
        rows, cols = img.shape
        body = "\n".join(" ".join(str(v) for v in line) for line in img.tolist())
        text = f"P2\n{cols} {rows}\n255\n{body}\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    def contrast(self, rho: float) -> float:
        """Mean W inside ``r < rho`` over mean W outside."""
        finite = np.isfinite(self.w)
        inside = finite & (self.r < rho)
        outside = finite & (self.r > rho)
        return float(self.w[inside].mean() / self.w[outside].mean())


def build_imaging_map(
    A: DtNMatrix,
    noise: NoiseSpec,
    reg: RegularizationSpec,
    grid: SamplingGrid | None = None,
    *,
    svd: SvdSystem | None = None,
    probe_norm: str = "unit",
) -> ImagingMap:
    """Noise, SVD and indicator over every grid point.

    Pass ``svd`` to reuse a decomposition of an already-noisy matrix; ``A``
    and ``noise`` are then ignored. With ``probe_norm="raw"`` the probe is
    scaled by the raw kernel norm, which leaves ``W`` spiked like ``1/|z|^2``
    at the center.
    """
    grid = grid or SamplingGrid()
    if svd is None:
        svd = decompose(inject_noise(A, noise))
    x, y, row, col = grid.points()
    if x.size == 0:
        raise ImagingError("sampling grid is empty")
    probes = probe_matrix(np.hypot(x, y), np.arctan2(y, x), svd.N, norm=probe_norm)
    ind = indicator_values(probes, svd, reg)
    degenerate = ~(ind >= DEGENERATE_THRESHOLD)
    if np.all(degenerate):
        raise ImagingError("imaging map empty")
    w_reg = np.full(ind.shape, np.nan)
    w_reg[~degenerate] = 1.0 / ind[~degenerate]
    w = w_reg / np.nanmax(w_reg)
    return ImagingMap(x=x, y=y, row=row, col=col, shape=(grid.resolution, grid.resolution), w_reg=w_reg, w=w)
