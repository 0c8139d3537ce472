"""Poisson-kernel probe vectors for sampling points in the unit disk."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SamplePoint",
    "ProbeVector",
    "poisson_normal_derivative",
    "assemble_probe",
    "probe_matrix",
    "PROBE_NORMS",
]


_ROUNDOFF = 1e-13


@dataclass(frozen=True)
class SamplePoint:
    r: float
    theta_z: float

    def __post_init__(self):
        if not (0 <= self.r < 1):
            raise ValueError("sample point outside domain")

    @classmethod
    def from_xy(cls, x: float, y: float) -> "SamplePoint":
        return cls(float(np.hypot(x, y)), float(np.arctan2(y, x)))

    @property
    def xy(self) -> tuple[float, float]:
        return self.r * np.cos(self.theta_z), self.r * np.sin(self.theta_z)


@dataclass(frozen=True)
class ProbeVector:
    """Probe samples at the collocation nodes.

    ``normalized`` divides the centered samples by the norm of the raw
    samples; ``unit`` divides by the norm of the centered samples instead.
    """

    raw: np.ndarray
    centered: np.ndarray
    normalized: np.ndarray
    norm_raw: float

    @property
    def unit(self) -> np.ndarray:
        norm = np.linalg.norm(self.centered)
        if norm <= _ROUNDOFF * self.norm_raw:
            return np.zeros_like(self.centered)
        return self.centered / norm


def poisson_normal_derivative(z: SamplePoint, theta):
    """Normal derivative on the unit circle of the Dirichlet Green's function.

    This is the Poisson kernel ``(1 - r^2) / (2 pi (1 + r^2 - 2 r cos(theta - theta_z)))``.
    """
    r = z.r
    if not r < 1:
        raise ValueError("sample point outside domain")
    theta = np.asarray(theta, dtype=float)
    val = (1 - r**2) / (2 * np.pi * (r**2 + 1 - 2 * r * np.cos(theta - z.theta_z)))
    return float(val) if val.ndim == 0 else val


def assemble_probe(z: SamplePoint, N: int = 128) -> ProbeVector:
    if N < 4:
        raise ValueError(f"N must be >= 4, got {N}")
    raw = poisson_normal_derivative(z, 2 * np.pi * np.arange(N) / N)
    # constant kernel at the center: mean removal is exact there
    centered = raw - raw.mean() if z.r > 0 else np.zeros(N)
    norm_raw = float(np.linalg.norm(raw))
    return ProbeVector(raw=raw, centered=centered, normalized=centered / norm_raw, norm_raw=norm_raw)


PROBE_NORMS = ("unit", "raw")


def probe_matrix(r, theta_z, N: int = 128, norm: str = "unit") -> np.ndarray:
    """Normalized probes for many points at once, one row per point.

    Row ``i`` equals ``assemble_probe(SamplePoint(r[i], theta_z[i]), N).unit``,
    or ``.normalized`` when ``norm="raw"``.
    """
    if norm not in PROBE_NORMS:
        raise ValueError(f"unknown probe norm {norm!r}; known: {PROBE_NORMS}")
    r = np.asarray(r, dtype=float)[:, None]
    theta_z = np.asarray(theta_z, dtype=float)[:, None]
    if np.any(r >= 1) or np.any(r < 0):
        raise ValueError("sample point outside domain")
    nodes = 2 * np.pi * np.arange(N) / N
    raw = (1 - r**2) / (2 * np.pi * (r**2 + 1 - 2 * r * np.cos(nodes[None, :] - theta_z)))
    centered = np.where(r > 0, raw - raw.mean(axis=1, keepdims=True), 0.0)
    norm_raw = np.linalg.norm(raw, axis=1, keepdims=True)
    if norm == "raw":
        return centered / norm_raw
    norm_c = np.linalg.norm(centered, axis=1, keepdims=True)
    # centered probe is pure roundoff near the origin; keep it zero there
    flat = norm_c <= _ROUNDOFF * norm_raw
    return np.where(flat, 0.0, centered / np.where(flat, 1.0, norm_c))
