"""Gaussian driving noise: white in time, eigenbasis-colored in space.

An increment over a step dt is

    dW = sqrt(dt) * sum_j lambda_j^-alpha xi_j phi_j        (Dirichlet)

with i.i.d. standard normal xi_j; alpha = 0 runs over the full basis and
reduces to space-time white noise with Var dW(x) = dt / mu(x).  Under
Neumann conditions the colored sum skips the constant mode and an
independent constant component sqrt(c_u dt) xi_0 is added, matching the
shifted covariance dt (G_2a + c_u).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigurationError, InvalidStepError
from .rng import substream
from .spectral import DIRICHLET, NEUMANN, check_bc, riesz_kernel

# Headroom added to the minimal nonnegativity shift for Neumann kernels.
DEFAULT_SHIFT_MARGIN = 0.1


def neumann_shift(spec, order, margin=DEFAULT_SHIFT_MARGIN):
    """Default constant shift making G_order + c_u entrywise nonnegative."""
    g = riesz_kernel(spec, order).values
    return max(0.0, -float(g.min())) + margin


@dataclass(frozen=True)
class NoiseModel:
    """Noise parameters: order alpha, intensity beta, boundary condition,
    Neumann shift c_u, and the master seed for stream derivation."""

    alpha: float
    beta: float
    bc: str
    c_u: float = 0.0
    seed: int = 0

    def __post_init__(self):
        check_bc(self.bc)
        if self.alpha < 0:
            raise InvalidConfigurationError(f"need alpha >= 0, got {self.alpha}")
        if self.beta < 0:
            raise InvalidConfigurationError(f"need beta >= 0, got {self.beta}")
        if self.c_u < 0:
            raise InvalidConfigurationError(f"need c_u >= 0, got {self.c_u}")
        if self.alpha == 0 and self.c_u != 0:
            raise InvalidConfigurationError(
                "white noise (alpha = 0) is identical under both boundary "
                "conditions and takes no shift; c_u must be 0")
        if self.bc == DIRICHLET and self.c_u != 0:
            raise InvalidConfigurationError("c_u applies to Neumann only")


def make_noise_model(spec, alpha, beta, seed=0):
    """NoiseModel with the default Neumann shift filled in when needed."""
    c_u = 0.0
    if spec.bc == NEUMANN and alpha > 0:
        c_u = neumann_shift(spec, 2.0 * alpha)
    return NoiseModel(alpha=float(alpha), beta=float(beta), bc=spec.bc,
                      c_u=c_u, seed=int(seed))


@dataclass(frozen=True)
class NoiseIncrement:
    dt: float
    values: np.ndarray  # field over active vertices


def _mode_weights(spec, model):
    """Per-mode amplitudes lambda^-alpha; zero modes drop out for alpha > 0."""
    lam = spec.lambdas
    if model.alpha == 0:
        return np.ones_like(lam)
    w = np.zeros_like(lam)
    pos = lam > 0
    w[pos] = lam[pos] ** (-model.alpha)
    return w


def increment_covariance(spec, model):
    """Exact covariance matrix of a unit-dt increment."""
    w = _mode_weights(spec, model)
    cov = (spec.phis * w**2) @ spec.phis.T
    if model.bc == NEUMANN and model.alpha > 0:
        cov = cov + model.c_u
    return 0.5 * (cov + cov.T)


def sample_increment_matrix(spec, model, dt, stream, count):
    """Sample ``count`` independent increments as columns of an (n, count) array.

    ``stream`` is an integer key tuple appended to the model seed, so any
    batch can be regenerated independently of every other batch.
    """
    if dt <= 0:
        raise InvalidStepError(f"need dt > 0, got {dt}")
    if model.bc != spec.bc:
        raise InvalidConfigurationError(
            f"model is {model.bc}, spectral data is {spec.bc}")
    if isinstance(stream, int):
        stream = (stream,)
    rng = substream(model.seed, *stream)
    w = _mode_weights(spec, model)
    xi = rng.standard_normal((spec.n_modes, count))
    fields = spec.phis @ (w[:, None] * xi)
    if model.bc == NEUMANN and model.alpha > 0:
        xi0 = rng.standard_normal(count)
        fields = fields + np.sqrt(model.c_u) * xi0[None, :]
    return np.sqrt(dt) * fields


def sample_increment(spec, model, dt, stream):
    """Single noise increment for the given substream key."""
    values = sample_increment_matrix(spec, model, dt, stream, 1)[:, 0]
    return NoiseIncrement(dt=float(dt), values=values)


def covariance_check(spec, model, samples, dt=1.0, stream=(0,)):
    """Largest standardized deviation of the sample covariance from its target.

    Draws ``samples`` increments, forms the empirical covariance, and
    compares it entrywise with dt * (G_2a (+ c_u)); each deviation is
    divided by the Gaussian standard error sqrt((C_ii C_jj + C_ij^2) / N).
    """
    if samples < 1000:
        raise InvalidConfigurationError(
            f"need at least 1000 samples for a covariance check, got {samples}")
    fields = sample_increment_matrix(spec, model, dt, stream, samples)
    emp = fields @ fields.T / samples
    target = dt * increment_covariance(spec, model)
    var_entry = (np.outer(np.diag(target), np.diag(target)) + target**2) / samples
    dev = np.abs(emp - target) / np.sqrt(var_entry)
    return float(dev.max())
