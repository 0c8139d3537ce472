"""
Analytic forward model for a concentric disk inclusion with a strain-gradient
interface under antiplane shear.

Outer domain is the unit disk, the inclusion is the disk of radius ``rho``.
The difference of boundary maps ``Lambda - Lambda_0`` is a convolution on the
unit circle with kernel

    K(theta, phi) = sum_{n >= 1} 2 kappa_n cos(n (theta - phi)),

so everything here reduces to per-mode algebra.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

__all__ = [
    "MaterialParams",
    "ModeCoefficients",
    "KernelSpectrum",
    "DtNMatrix",
    "DisplacementField",
    "ForwardModelError",
    "solve_mode_system",
    "kappa_closed_form",
    "build_kernel_spectrum",
    "evaluate_kernel",
    "assemble_dtn_matrix",
    "forward_apply",
    "solve_displacement",
    "MATRIX_MAGIC",
]

MATRIX_MAGIC = b"SHTOMO01"
_TINY = 1e-300


class ForwardModelError(ValueError):
    """Raised for degenerate or inconsistent forward-model input."""


@dataclass(frozen=True)
class MaterialParams:
    """Material and geometry of the inclusion.

    ``mu`` is the inclusion/bulk shear-modulus ratio, ``mu_s`` the interface
    stiffness, ``ell2`` the squared gradient length and ``rho`` the radius.
    """

    mu: float
    mu_s: float
    ell2: float
    rho: float

    def __post_init__(self):
        for name in ("mu", "mu_s", "ell2", "rho"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.mu <= 0:
            raise ValueError(f"mu must be > 0, got {self.mu}")
        if self.mu_s <= 0:
            raise ValueError(f"mu_s must be > 0, got {self.mu_s}")
        if self.ell2 <= 0:
            raise ValueError(f"ell2 must be > 0, got {self.ell2}")
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")

    def as_dict(self) -> dict:
        return {"mu": self.mu, "mu_s": self.mu_s, "ell2": self.ell2, "rho": self.rho}


@dataclass(frozen=True)
class ModeCoefficients:
    """Normalized coefficients of mode ``n``: ``a_n = a_tilde f_n`` etc.

    ``sigma_minus_one`` carries ``sigma_n - 1`` without the cancellation that
    ``sigma - 1`` suffers once ``b_tilde`` drops below machine epsilon.
    """

    n: int
    a_tilde: float
    b_tilde: float
    c_tilde: float
    sigma: float
    sigma_minus_one: float
    residual: float

    @property
    def kappa(self) -> float:
        return abs(self.n) * self.sigma_minus_one


def _interface_load(n: int, params: MaterialParams) -> float:
    # mu_s n^2 + mu_s ell^2 n^4 / rho^2: symbol of the interface operator times rho^2
    return params.mu_s * n**2 + params.mu_s * params.ell2 * n**4 / params.rho**2


def mode_system(n: int, params: MaterialParams) -> tuple[np.ndarray, np.ndarray]:
    """Raw 3x3 system for ``(a_tilde, b_tilde, c_tilde)`` of mode ``n``."""
    m = abs(int(n))
    rho = params.rho
    r2m = rho ** (2 * m)
    matrix = np.array(
        [
            [1.0, 1.0, 0.0],
            [r2m, 1.0, -r2m],
            [
                m * rho ** (m - 1),
                -m * rho ** (-m - 1),
                -(params.mu * m * rho ** (m - 1) + rho ** (m - 2) * _interface_load(m, params)),
            ],
        ]
    )
    return matrix, np.array([1.0, 0.0, 0.0])


def solve_mode_system(n: int, params: MaterialParams) -> ModeCoefficients:
    """Solve the interface-matching system of mode ``n`` (``n != 0``).

    The unknowns are shifted to the deviation ``a_tilde - 1`` from the
    unperturbed solution and rescaled by ``rho^(2|n|)`` so that the dense
    solve works on O(1) entries; ``b_tilde`` is then resolved to full
    relative precision even when it is far below machine epsilon.
    """
    n = int(n)
    if n == 0:
        raise ValueError("mode 0 has no interface system; a_0 = c_0 = f_0, b_0 = 0")
    m = abs(n)
    rho = params.rho
    r2m = rho ** (2 * m)
    load = _interface_load(m, params) / rho
    # unknowns: x' = (a_tilde - 1) / rho^2m, beta = b_tilde / rho^2m, c_tilde
    scaled = np.array(
        [
            [1.0, 1.0, 0.0],
            [r2m, 1.0, -1.0],
            [m * r2m, -m, -(params.mu * m + load)],
        ]
    )
    rhs = np.array([0.0, -1.0, -float(m)])
    det = np.linalg.det(scaled)
    if not abs(det) > _TINY:
        raise ForwardModelError("degenerate mode system")
    x_s, beta, c_t = np.linalg.solve(scaled, rhs)
    dev_a = x_s * r2m
    b_t = beta * r2m
    a_t = 1.0 + dev_a

    # residual of the equilibrated system, rows scaled to unit magnitude
    residual = float(np.max(np.abs(scaled @ np.array([x_s, beta, c_t]) - rhs)))
    return ModeCoefficients(
        n=n,
        a_tilde=a_t,
        b_tilde=b_t,
        c_tilde=c_t,
        sigma=a_t - b_t,
        sigma_minus_one=dev_a - b_t,
        residual=residual,
    )


def kappa_closed_form(n: int, params: MaterialParams) -> float:
    """Closed-form kernel coefficient ``kappa_n`` (``kappa_0 = 0``)."""
    m = abs(int(n))
    if m == 0:
        return 0.0
    rho, mu, mu_s, ell2 = params.rho, params.mu, params.mu_s, params.ell2
    r2m = rho ** (2 * m)
    contrast = rho**3 * (mu - 1) * m + rho**2 * mu_s * m**2 + mu_s * ell2 * m**4
    denom = rho**3 * m * (mu + 1) + rho**2 * mu_s * m**2 + mu_s * ell2 * m**4 - r2m * contrast
    if not abs(denom) >= _TINY:
        raise ForwardModelError("kernel denominator underflow")
    return m * 2.0 * r2m * contrast / denom


@dataclass(frozen=True)
class KernelSpectrum:
    """Kernel coefficients ``kappa[n]`` for ``0 <= n <= n_max``."""

    kappa: np.ndarray

    def __post_init__(self):
        kappa = np.asarray(self.kappa, dtype=float)
        if kappa.ndim != 1 or kappa.size < 2:
            raise ValueError("kappa must be 1-d with at least modes 0 and 1")
        if not np.all(np.isfinite(kappa)):
            raise ValueError("kappa must be finite")
        if kappa[0] != 0.0:
            raise ValueError("kappa_0 must be 0")
        kappa = kappa.copy()
        kappa.flags.writeable = False
        object.__setattr__(self, "kappa", kappa)

    @property
    def n_max(self) -> int:
        return self.kappa.size - 1

    def __getitem__(self, n: int) -> float:
        m = abs(int(n))
        return float(self.kappa[m]) if m <= self.n_max else 0.0

    def to_csv(self, path=None) -> str:
        lines = ["n,kappa_n"]
        lines += [f"{n},{k!r}" for n, k in enumerate(self.kappa.tolist())]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "KernelSpectrum":
        data = read_kappa_csv(path)
        n_max = max(n for n, _ in data)
        kappa = np.zeros(n_max + 1)
        for n, k in data:
            kappa[n] = k
        return cls(kappa)


def read_kappa_csv(path) -> list[tuple[int, float]]:
    """Read ``n,kappa_n`` rows; header required."""
    rows = Path(path).read_text().strip().splitlines()
    if not rows or rows[0].replace(" ", "") != "n,kappa_n":
        raise ValueError(f"{path}: expected header 'n,kappa_n'")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row.strip():
            continue
        parts = row.split(",")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected two fields")
        out.append((int(parts[0]), float(parts[1])))
    return out


def build_kernel_spectrum(params: MaterialParams, n_max: int = 100) -> KernelSpectrum:
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    kappa = np.array([kappa_closed_form(n, params) for n in range(n_max + 1)])
    return KernelSpectrum(kappa)


def evaluate_kernel(spec: KernelSpectrum, theta, phi):
    """K(theta, phi) from the truncated cosine series; broadcasts over arrays."""
    diff = np.subtract.outer(np.asarray(theta, float), np.asarray(phi, float))
    n = np.arange(1, spec.n_max + 1)
    vals = np.cos(np.multiply.outer(diff, n)) @ (2.0 * spec.kappa[1:])
    return float(vals) if np.ndim(vals) == 0 else vals


@dataclass(frozen=True)
class DtNMatrix:
    """Collocation matrix of ``Lambda - Lambda_0`` on ``N`` equispaced nodes."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("DtN matrix must be 2-d")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def nodes(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.N) / self.N

    def to_csv(self, path=None) -> str:
        text = "".join(",".join(repr(v) for v in row) + "\n" for row in self.values.tolist())
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_bytes(self) -> bytes:
        rows, cols = self.values.shape
        return MATRIX_MAGIC + struct.pack("<QQ", rows, cols) + self.values.astype("<f8").tobytes(order="C")

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "DtNMatrix":
        if blob[:8] != MATRIX_MAGIC:
            raise ValueError("not a DtN matrix file (bad magic)")
        rows, cols = struct.unpack("<QQ", blob[8:24])
        payload = blob[24:]
        if len(payload) != 8 * rows * cols:
            raise ValueError(f"payload has {len(payload)} bytes, expected {8 * rows * cols}")
        return cls(np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(float))

    @classmethod
    def load(cls, path) -> "DtNMatrix":
        return cls.from_bytes(Path(path).read_bytes())


def assemble_dtn_matrix(spec: KernelSpectrum, N: int = 128) -> DtNMatrix:
    """``A[j, k] = K(theta_j, theta_k) / N`` with ``theta_j = 2 pi j / N``.

    The matrix is circulant; its first column is built once from the integer
    phase ``n m mod N`` and symmetrized so that ``A == A.T`` exactly. Modes
    with ``n = 0 mod N`` alias onto constants and are dropped, keeping the
    constants in the null space.
    """
    if N < 4:
        raise ValueError(f"N must be >= 4, got {N}")
    n = np.arange(1, spec.n_max + 1)
    weights = 2.0 * spec.kappa[1:] / N
    weights = np.where(n % N == 0, 0.0, weights)
    m = np.arange(N)
    phase = np.multiply.outer(m, n) % N
    column = np.cos(2 * np.pi * phase / N) @ weights
    column = 0.5 * (column + column[(-m) % N])
    index = (m[:, None] - m[None, :]) % N
    return DtNMatrix(column[index])


def forward_apply(A: DtNMatrix, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (A.N,):
        raise ValueError(f"boundary data has shape {f.shape}, expected ({A.N},)")
    return A.values @ f


@dataclass(frozen=True)
class DisplacementField:
    """Series solution on the annulus (``rho < r <= 1``) and the inclusion.

    ``a``, ``b``, ``c`` map mode ``n`` to the complex coefficients of
    ``r^|n|``, ``r^-|n|`` (annulus) and ``r^|n|`` (inclusion); mode 0 holds
    ``a_0``, ``b_0 = 0`` and ``c_0``.
    """

    params: MaterialParams
    a: dict
    b: dict
    c: dict
    r: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def evaluate(self, r, theta, side: str | None = None) -> np.ndarray:
        """Evaluate the series at ``(r, theta)``.

        ``side`` forces the annulus (``"outer"``) or inclusion (``"inner"``)
        expansion regardless of ``r``; used to compare traces at ``r = rho``.
        """
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        r, theta = np.broadcast_arrays(r, theta)
        if side is None:
            outer = r > self.params.rho
        else:
            outer = np.full(r.shape, side == "outer")
        out = np.zeros(r.shape, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            for n in self.a:
                m = abs(n)
                e = np.exp(1j * n * theta)
                if m == 0:
                    annulus = self.a[0] * np.ones_like(r)
                    disk = self.c[0] * np.ones_like(r)
                else:
                    rm = r**m
                    annulus = self.a[n] * rm + np.where(r > 0, self.b[n] * r ** (-float(m)), 0.0)
                    disk = self.c[n] * rm
                out += np.where(outer, annulus, disk) * e
        return out


def solve_displacement(params: MaterialParams, f_hat: Mapping[int, complex], r, theta) -> DisplacementField:
    """Displacement field for boundary data with Fourier coefficients ``f_hat``.

    ``f_hat`` maps mode ``n`` to ``f_n``; ``u(1, theta) = sum f_n e^{i n theta}``.
    Values are complex; take ``.real`` when ``f_hat`` is Hermitian.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("grid point outside unit disk")
    a, b, c = {}, {}, {}
    for n, fn in f_hat.items():
        n = int(n)
        if n == 0:
            a[0], b[0], c[0] = complex(fn), 0j, complex(fn)
            continue
        coeffs = solve_mode_system(n, params)
        a[n] = coeffs.a_tilde * fn
        b[n] = coeffs.b_tilde * fn
        c[n] = coeffs.c_tilde * fn
    partial = DisplacementField(params, a, b, c, r, theta, np.empty(0))
    values = partial.evaluate(r, theta)
    return DisplacementField(params, a, b, c, r, theta, values)
