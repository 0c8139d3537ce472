"""
Inverse parameter problem: coercivity threshold and kernel-data fitting.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .forward_model import MaterialParams

__all__ = [
    "CoercivityReport",
    "FitResult",
    "FitError",
    "compute_mu0",
    "positivity_margin",
    "kappa_model",
    "kappa_log_jacobian",
    "asymptotic_seed",
    "linearized_seed",
    "fit_parameters",
]


# ---------------------------------------------------------------------------
# coercivity threshold
# ---------------------------------------------------------------------------


def _u(z, mu, mu_s, ell2, b_norm):
    return mu_s * z**2 + mu_s * ell2 * z**4 - (1 - mu) * z - abs(1 - mu) * b_norm


def _du(z, mu, mu_s, ell2):
    return 2 * mu_s * z + 4 * mu_s * ell2 * z**3 - (1 - mu)


@dataclass(frozen=True)
class CoercivityReport:
    """Threshold ``mu0`` above which the interface term stays positive.

    ``z_min = 1/rho`` is the first nonzero eigenvalue of the tangential
    square-root Laplacian on the inclusion boundary. ``mu0_sqrt`` repeats the
    computation at ``sqrt(z_min)`` for comparison.
    """

    mu0: float
    z_min: float
    b_norm: float
    u_at_mu0: float
    du_at_mu0: float
    mu0_closed: float
    mu0_sqrt: float
    z_min_sqrt: float

    def as_dict(self) -> dict:
        return {
            "mu0": self.mu0,
            "z_min": self.z_min,
            "b_norm": self.b_norm,
            "u_at_mu0": self.u_at_mu0,
            "du_at_mu0": self.du_at_mu0,
            "mu0_closed": self.mu0_closed,
            "mu0_sqrt": self.mu0_sqrt,
            "z_min_sqrt": self.z_min_sqrt,
        }

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in self.as_dict().items())

    def to_csv(self) -> str:
        return "param,value\n" + "".join(f"{k},{v!r}\n" for k, v in self.as_dict().items())


def _mu0_bisect(z, mu_s, ell2, b_norm, tol=1e-12):
    def ok(mu):
        return _u(z, mu, mu_s, ell2, b_norm) > 0 and _du(z, mu, mu_s, ell2) > 0

    # both conditions are monotone in mu on [0, 1] and hold at mu = 1
    if ok(0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _mu0_closed(z, mu_s, ell2, b_norm):
    from_u = (mu_s * z**2 + mu_s * ell2 * z**4) / (z + b_norm)
    from_du = 2 * mu_s * z + 4 * mu_s * ell2 * z**3
    return max(0.0, 1.0 - min(from_u, from_du))


def compute_mu0(params: MaterialParams, b_norm: float = 0.0) -> CoercivityReport:
    """Smallest ``mu0`` in [0, 1) with ``u(z_min) > 0`` and ``u'(z_min) > 0``
    for every ``mu`` in ``(mu0, 1]``.

    ``params.mu`` is not used. Found by bisection to 1e-12; the closed form
    is reported alongside as ``mu0_closed``.
    """
    if not b_norm >= 0:
        raise ValueError(f"b_norm must be >= 0, got {b_norm}")
    z = 1.0 / params.rho
    mu0 = _mu0_bisect(z, params.mu_s, params.ell2, b_norm)
    zs = math.sqrt(z)
    return CoercivityReport(
        mu0=mu0,
        z_min=z,
        b_norm=b_norm,
        u_at_mu0=_u(z, mu0, params.mu_s, params.ell2, b_norm),
        du_at_mu0=_du(z, mu0, params.mu_s, params.ell2),
        mu0_closed=_mu0_closed(z, params.mu_s, params.ell2, b_norm),
        mu0_sqrt=_mu0_bisect(zs, params.mu_s, params.ell2, b_norm),
        z_min_sqrt=zs,
    )


def positivity_margin(mu, mu_s, ell2, rho, b_norm=0.0, n_max=10_000) -> float:
    """min over ``1 <= n <= n_max`` of the interface symbol minus the contrast
    term, with ``lambda_n = n / rho``."""
    lam = np.arange(1, n_max + 1) / rho
    vals = mu_s * lam**2 + mu_s * ell2 * lam**4 - (1 - mu) * lam - abs(1 - mu) * b_norm
    return float(vals.min())


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


class FitError(RuntimeError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class FitResult:
    mu: float
    mu_s: float
    ell2: float
    residual: float
    iterations: int
    modes: tuple = field(default=(), repr=False)

    def as_dict(self) -> dict:
        return {
            "mu": self.mu,
            "mu_s": self.mu_s,
            "ell2": self.ell2,
            "residual": self.residual,
            "iterations": self.iterations,
        }

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in self.as_dict().items())

    def to_csv(self) -> str:
        return "param,value\n" + "".join(f"{k},{v!r}\n" for k, v in self.as_dict().items())


def _contrast(n, mu, mu_s, ell2, rho):
    return rho**3 * (mu - 1) * n + rho**2 * mu_s * n**2 + mu_s * ell2 * n**4


def kappa_model(n, mu, mu_s, ell2, rho) -> np.ndarray:
    """Vectorized kernel coefficients for ``n >= 1``.

    Same value as the closed form, written as
    ``2 n rho^2n P / (2 rho^3 n + (1 - rho^2n) P)``.
    """
    n = np.asarray(n, dtype=float)
    r2n = rho ** (2 * n)
    P = _contrast(n, mu, mu_s, ell2, rho)
    return 2 * n * r2n * P / (2 * rho**3 * n + (1 - r2n) * P)


def kappa_log_jacobian(n, mu, mu_s, ell2, rho) -> np.ndarray:
    """d log(kappa_n) / d log(mu, mu_s, ell2), shape ``(len(n), 3)``."""
    n = np.asarray(n, dtype=float)
    r2n = rho ** (2 * n)
    P = _contrast(n, mu, mu_s, ell2, rho)
    D = 2 * rho**3 * n + (1 - r2n) * P
    dP = np.stack(
        [rho**3 * n * mu, (rho**2 * n**2 + ell2 * n**4) * mu_s, mu_s * n**4 * ell2],
        axis=1,
    )
    # d log kappa = dP (1/P - (1 - rho^2n)/D) = dP * 2 rho^3 n / (P D)
    return dP * (2 * rho**3 * n / (P * D))[:, None]


def asymptotic_seed(n, kappa, rho) -> float:
    """Estimate of ``mu_s * ell2`` from the largest usable mode.

    For large ``n`` the quartic term dominates ``P`` and
    ``kappa_n / (2 n rho^2n) ~ 1 / (1 - rho^2n + 2 rho^3 n / P)``.
    """
    n = int(n)
    r2n = rho ** (2 * n)
    q = kappa / (2 * n * r2n)
    if not (q > 0 and 1 / q - (1 - r2n) > 0):
        raise ValueError("mode not in the asymptotic regime")
    P = 2 * rho**3 * n / (1 / q - (1 - r2n))
    return P / n**4


def linearized_seed(n, kappa, rho):
    """Algebraic estimate of ``(mu, mu_s, ell2)``.

    Undoing the rational map gives ``P_n = 2 rho^3 n q / (1 - (1 - rho^2n) q)``
    with ``q = kappa_n / (2 n rho^2n)``, and ``P_n`` is linear in
    ``(mu - 1, mu_s, mu_s ell2)``. Returns None when the estimate is not
    strictly positive.
    """
    n = np.asarray(n, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    r2n = rho ** (2 * n)
    with np.errstate(all="ignore"):
        q = kappa / (2 * n * r2n)
        P = 2 * rho**3 * n * q / (1 - (1 - r2n) * q)
        # the subtraction loses digits once P >> 2 rho^3 n
        weight = 1 / (np.abs(P) * (1 + np.abs(P) / (2 * rho**3 * n)))
    ok = np.isfinite(P) & np.isfinite(weight) & (weight > 0)
    if ok.sum() < 3:
        return None
    M = np.stack([rho**3 * n, rho**2 * n**2, n**4], axis=1)[ok] * weight[ok, None]
    col = np.linalg.norm(M, axis=0)
    if np.any(col == 0):
        return None
    coef, *_ = np.linalg.lstsq(M / col, P[ok] * weight[ok], rcond=None)
    dmu, mu_s, mu_s_ell2 = coef / col
    mu, ell2 = 1 + dmu, mu_s_ell2 / mu_s if mu_s != 0 else -1.0
    if not (mu > 0 and mu_s > 0 and ell2 > 0):
        return None
    return float(mu), float(mu_s), float(ell2)


_GRID = (
    np.geomspace(0.3, 300.0, 5),
    np.geomspace(1e-4, 3.0, 5),
    np.geomspace(1e-9, 1e-1, 5),
)
_DEFAULT_INIT = (2.0, 0.1, 1e-3)


def _residual(logp, n, data, scale, rho):
    with np.errstate(all="ignore"):
        mu, mu_s, ell2 = np.exp(logp)
        return (kappa_model(n, mu, mu_s, ell2, rho) - data) / scale


def _gauss_newton(logp, n, data, scale, rho, max_iter=200, step_tol=1e-12):
    r = _residual(logp, n, data, scale, rho)
    cost = float(r @ r)
    lam = 1e-6
    for it in range(1, max_iter + 1):
        mu, mu_s, ell2 = np.exp(logp)
        kap = kappa_model(n, mu, mu_s, ell2, rho)
        J = (kap / scale)[:, None] * kappa_log_jacobian(n, mu, mu_s, ell2, rho)
        g = J.T @ r
        H = J.T @ J
        accepted = False
        for _ in range(40):
            # damping on the Hessian diagonal; lam -> 0 recovers Gauss-Newton
            step = np.linalg.solve(H + lam * np.diag(np.diag(H) + 1e-300), -g)
            trial = logp + step
            r_new = _residual(trial, n, data, scale, rho)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new <= cost:
                accepted = True
                break
            lam *= 10
        if not accepted:
            return logp, cost, it, True
        logp, r, cost = trial, r_new, cost_new
        lam = max(lam / 10, 1e-12)
        if np.linalg.norm(step) < step_tol or cost == 0.0:
            return logp, cost, it, True
    return logp, cost, max_iter, False


def fit_parameters(
    kappa_data, rho: float, init: MaterialParams | None = None, *, max_iter: int = 200
) -> FitResult:
    """Recover ``(mu, mu_s, ell2)`` from kernel coefficients at known ``rho``.

    Minimizes the squared misfit of each ``kappa_n`` relative to its data
    magnitude, by damped Gauss-Newton in log-parameters so that all three
    stay positive. Modes below ``1e-14 * max|kappa|`` are dropped.

    Raises :class:`FitError` (with the best iterate attached) when no start
    converges within ``max_iter`` iterations.
    """
    if not 0 < rho < 1:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    pairs = {}
    for n, k in kappa_data:
        n = abs(int(n))
        if n == 0:
            continue
        if not math.isfinite(k):
            raise ValueError(f"kappa_{n} is not finite")
        pairs[n] = float(k)
    if len(pairs) < 3:
        raise ValueError("need at least 3 distinct modes with n >= 1")
    n = np.array(sorted(pairs), dtype=float)
    data = np.array([pairs[int(m)] for m in n])
    peak = np.max(np.abs(data))
    if peak == 0:
        raise FitError("unidentifiable: zero-contrast data")
    usable = np.abs(data) > 1e-14 * peak
    if usable.sum() < 3:
        raise FitError("unidentifiable: fewer than 3 modes above the noise floor")
    n, data = n[usable], data[usable]
    scale = np.abs(data)

    def cost_at(p):
        r = _residual(np.log(p), n, data, scale, rho)
        c = float(r @ r)
        return c if np.isfinite(c) else np.inf

    if init is not None:
        starts = [(init.mu, init.mu_s, init.ell2)]
    else:
        candidates = [_DEFAULT_INIT] + list(itertools.product(*_GRID))
        starts = sorted(candidates, key=cost_at)[:5]
        seed = linearized_seed(n, data, rho)
        if seed is not None:
            starts.insert(0, seed)

    best = None
    for start in starts:
        logp, cost, iters, converged = _gauss_newton(np.log(np.array(start, float)), n, data, scale, rho, max_iter)
        if best is None or (converged, -cost) > (best[3], -best[1]):
            best = (logp, cost, iters, converged)
        if converged and cost <= 1e-20 * len(n):
            break
    logp, cost, iters, converged = best
    mu, mu_s, ell2 = (float(v) for v in np.exp(logp))
    misfit = kappa_model(n, mu, mu_s, ell2, rho) - data
    rms = float(np.sqrt(np.mean(misfit**2)))
    result = FitResult(mu=mu, mu_s=mu_s, ell2=ell2, residual=rms, iterations=iters, modes=tuple(int(m) for m in n))
    if not converged:
        raise FitError(f"fit did not converge in {max_iter} iterations", best=result)
    return result
