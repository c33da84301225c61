"""Predicted growth-rate shapes and exponents for moment Lyapunov slopes.

Everything here is a closed-form function of (alpha, d_h, d_w).  Free
multiplicative constants are never invented: predictions are exponents and
shapes, and comparisons against measured slopes are log-log fits across
intensity sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RecurrenceError, UnsupportedRegimeError
from .spectral import DIRICHLET

SUB = "sub"
CRITICAL = "critical"
SMOOTH = "smooth"


@dataclass(frozen=True)
class RatePrediction:
    """Large-intensity behavior of the growth rate of E[u^p].

    ``upper_exponent_largebeta`` is the power of beta in the upper bound
    (log corrections noted in ``upper_shape``); the lower-bound fields
    describe the matching lower estimates.  Constants are left symbolic.
    """

    regime: str
    alpha: float
    d_h: float
    d_w: float
    upper_exponent_largebeta: float
    upper_shape: str
    lower_exponent_largebeta: float
    lower_shape: str
    constants: str = "unknown C"

    @property
    def d_s(self):
        return 2.0 * self.d_h / self.d_w


def regime_and_exponents(alpha, d_h, d_w):
    """Classify (alpha, d_h, d_w) and return the rate exponents.

    Regimes split at alpha = d_h / (2 d_w): below it the upper exponent is
    2 d_w / ((1 + 2 alpha) d_w - d_h), at it the shape is beta^2 (ln beta)^2,
    above it plain beta^2.  Lower bounds match the upper exponent for
    0 < alpha below the threshold, carry beta^2 ln(beta) at the threshold,
    and for white noise give 2 d_w / (d_w - d_h) on cusp-free regions.
    """
    if alpha < 0:
        raise ValueError(f"need alpha >= 0, got {alpha}")
    if d_h >= d_w:
        raise RecurrenceError(
            f"need d_h < d_w for the recurrent range, got d_h={d_h}, d_w={d_w}")
    crit = d_h / (2.0 * d_w)
    if alpha < crit:
        upper = 2.0 * d_w / ((1.0 + 2.0 * alpha) * d_w - d_h)
        if alpha == 0:
            lower = 2.0 * d_w / (d_w - d_h)
            lower_shape = f"beta^{lower:.6g}"
        else:
            lower = upper
            lower_shape = f"beta^{lower:.6g}"
        return RatePrediction(regime=SUB, alpha=alpha, d_h=d_h, d_w=d_w,
                              upper_exponent_largebeta=upper,
                              upper_shape=f"beta^{upper:.6g}",
                              lower_exponent_largebeta=lower,
                              lower_shape=lower_shape)
    if alpha == crit:
        return RatePrediction(regime=CRITICAL, alpha=alpha, d_h=d_h, d_w=d_w,
                              upper_exponent_largebeta=2.0,
                              upper_shape="beta^2 * (ln beta)^2",
                              lower_exponent_largebeta=2.0,
                              lower_shape="beta^2 * ln beta")
    return RatePrediction(regime=SMOOTH, alpha=alpha, d_h=d_h, d_w=d_w,
                          upper_exponent_largebeta=2.0,
                          upper_shape="beta^2",
                          lower_exponent_largebeta=2.0,
                          lower_shape="beta^2")


def _bisect_decreasing(f, target, lo, hi, rel_tol=1e-10, max_iter=400):
    """Root of a strictly decreasing f on [lo, hi] with f(lo) >= target >= f(hi)."""
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        if f(mid) >= target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rel_tol * mid:
            break
    return math.sqrt(lo * hi)


def rho_c_solve(alpha, beta, C, d_h, d_w):
    """Positive root of C beta^2 F(rho) = 1.

    Below the threshold, F(rho) = 1/rho + rho^-(1 + 2 alpha - d_h/d_w) is a
    decreasing bijection and the root is unique.  At the threshold F(rho) =
    ln(max(3/2, rho))^2 / rho is not monotone, so the largest root is
    returned (the one that bounds the growth rate).
    """
    if C <= 0 or beta <= 0:
        raise ValueError("need C > 0 and beta > 0")
    if d_h >= d_w:
        raise RecurrenceError(f"need d_h < d_w, got d_h={d_h}, d_w={d_w}")
    crit = d_h / (2.0 * d_w)
    if alpha > crit:
        raise UnsupportedRegimeError(
            "rho_c is defined for the sub and critical regimes only")
    target = 1.0 / (C * beta**2)

    if alpha < crit:
        q = 1.0 + 2.0 * alpha - d_h / d_w

        def f(rho):
            return 1.0 / rho + rho ** (-q)
    else:
        def f(rho):
            return math.log(max(1.5, rho)) ** 2 / rho

    lo, hi = 1.0, 1.0
    if alpha == crit:
        # F is not monotone at the threshold: it decreases up to 3/2, rises
        # to a hump at e^2, then decays.  The largest root sits on the tail
        # when the target lies below the hump, else on the branch below 3/2.
        e2 = math.e**2
        if f(e2) >= target:
            lo, hi = e2, 2.0 * e2
        else:
            lo, hi = 1e-300, 1.5
    while f(lo) < target:
        lo /= 2.0
    while f(hi) >= target:
        hi *= 2.0
    root = _bisect_decreasing(f, target, lo, hi)
    residual = abs(C * beta**2 * f(root) - 1.0)
    if residual > 1e-9:
        raise UnsupportedRegimeError(f"root residual {residual:.2e} too large")
    return root


def phi_inverse(y, c1, c2, d_w):
    """Solve c1 * x * exp(c2 * x^(1/d_w)) = y for the unique positive x."""
    if y <= 0 or c1 <= 0 or c2 <= 0:
        raise ValueError("need y, c1, c2 > 0")

    def g(x):
        return c1 * x * math.exp(c2 * x ** (1.0 / d_w))

    lo, hi = 1.0, 1.0
    while g(lo) > y:
        lo /= 2.0
    while g(hi) < y:
        hi *= 2.0
    for _ in range(400):
        mid = math.sqrt(lo * hi)
        if g(mid) <= y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * mid:
            break
    x = math.sqrt(lo * hi)
    if abs(g(x) - y) > 1e-9 * y:
        raise ValueError(f"inverse residual too large at x={x}")
    return x


def dirichlet_decay_floor(spec, p, beta=0.0):
    """Deterministic reference slope -p lambda_1 (0 under Neumann)."""
    if spec.bc != DIRICHLET:
        return 0.0
    return -p * spec.lambda_1


def exponent_from_sweep(betas, slopes, offset=0.0):
    """Log-log slope of (measured slope + offset) against beta.

    Used to compare a sweep of Lyapunov slopes with the predicted power;
    ``offset`` removes a known additive floor such as 2 lambda_1.
    """
    betas = np.asarray(betas, dtype=float)
    vals = np.asarray(slopes, dtype=float) + offset
    if np.any(vals <= 0):
        raise ValueError("slopes plus offset must be positive for a log-log fit")
    expo, _ = np.polyfit(np.log(betas), np.log(vals), 1)
    return float(expo)
