"""Spectral calculus on a discrete space.

Assembles the measure-symmetric Laplacian pair (stiffness A, mass M) under
Dirichlet or Neumann conditions, solves the generalized eigenproblem
A phi = lambda M phi with mu-orthonormal eigenvectors, and exposes the
derived objects: heat kernels, semigroup action, fractional Riesz kernels,
and eigenvalue-counting dimension fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg
import scipy.special

from .errors import (
    EigensolverError,
    FieldMismatchError,
    InsufficientSpectrumError,
    InvalidConfigurationError,
    InvalidOrderError,
    InvalidTimeError,
    MissingBoundaryError,
)

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

# Discrete eigenvalues track the continuum ones only in the lower part of the
# spectrum; fits use this fraction of the modes.
TRUST_FRACTION = 0.25


def check_bc(bc):
    if bc not in (DIRICHLET, NEUMANN):
        raise InvalidConfigurationError(f"boundary condition must be "
                                        f"'{DIRICHLET}' or '{NEUMANN}', got {bc!r}")
    return bc


def assemble_laplacian(space, bc):
    """Stiffness/mass pair (A, M) for the space under the given condition.

    A is the conductance-weighted graph Laplacian, M = diag(mu).  Dirichlet
    removes boundary rows and columns; Neumann keeps every vertex.  Returns
    (A, M, active) where ``active`` indexes the retained vertices.
    """
    check_bc(bc)
    n = space.n_vertices
    adj = space.adjacency
    deg = np.asarray(adj.sum(axis=1)).ravel()
    lap = sp.diags(deg) - adj
    if bc == DIRICHLET:
        if space.boundary.size == 0:
            raise MissingBoundaryError(
                "Dirichlet condition on a space with empty boundary")
        active = np.setdiff1d(np.arange(n), space.boundary)
        lap = lap.tocsr()[active][:, active]
    else:
        active = np.arange(n)
    mass = sp.diags(space.mu[active])
    return lap.tocsr(), mass.tocsr(), active


@dataclass(frozen=True)
class SpectralData:
    """Eigenpairs of the generalized problem A phi = lambda M phi.

    ``lambdas`` ascend; ``phis`` columns are orthonormal in the mu-weighted
    inner product.  ``active`` maps rows of phis back to space vertices.
    """

    space: object
    bc: str
    lambdas: np.ndarray
    phis: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        self.lambdas.setflags(write=False)
        self.phis.setflags(write=False)
        self.active.setflags(write=False)

    @property
    def n_active(self):
        return self.active.shape[0]

    @property
    def n_modes(self):
        return self.lambdas.shape[0]

    @cached_property
    def mu(self):
        """Vertex weights restricted to the active set."""
        m = self.space.mu[self.active]
        m.setflags(write=False)
        return m

    @property
    def lambda_1(self):
        """Smallest nonzero eigenvalue."""
        pos = self.lambdas[self.lambdas > 0]
        return float(pos[0])

    @cached_property
    def total_mass(self):
        return float(self.space.mu.sum())

    def propagator(self, t):
        """Dense matrix of the semigroup action, exp(-t L) with L = M^-1 A.

        Row x gives sum_y p_t(x, y) mu(y) f(y) when applied to a field f.
        """
        w = np.exp(-self.lambdas * t)
        return (self.phis * w) @ (self.phis.T * self.mu)


@dataclass(frozen=True)
class HeatKernel:
    t: float
    values: np.ndarray  # symmetric (n_active, n_active), 1/mass units


@dataclass(frozen=True)
class RieszKernel:
    alpha: float
    bc: str
    values: np.ndarray


def _fix_signs(phis, tol=1e-8):
    # first component of each eigenvector with non-negligible size is positive
    out = np.array(phis, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        big = np.flatnonzero(np.abs(col) > tol * np.abs(col).max())
        if big.size and col[big[0]] < 0:
            out[:, j] = -col
    return out


def eigendecompose(space, bc, count="all"):
    """Solve A phi = lambda M phi and return SpectralData.

    The problem is symmetrized through M^-1/2 (M is diagonal), which keeps
    the returned eigenvectors exactly mu-orthonormal.  Sign convention:
    the first non-negligible component of each eigenvector is positive.
    For Neumann the zero mode is replaced by its exact form, the constant
    mu(U)^-1/2 at eigenvalue 0.
    """
    a_mat, m_mat, active = assemble_laplacian(space, bc)
    n = a_mat.shape[0]
    mu = space.mu[active]
    d_inv_sqrt = 1.0 / np.sqrt(mu)
    b = (a_mat.multiply(d_inv_sqrt[:, None])).multiply(d_inv_sqrt[None, :])

    if count == "all" or count >= n:
        lam, vecs = scipy.linalg.eigh(b.toarray())
    else:
        k = int(count)
        # shift-invert about a point below the spectrum; B is PSD
        lam, vecs = scipy.sparse.linalg.eigsh(b.tocsc(), k=k, sigma=-1e-3,
                                              which="LM")
        order = np.argsort(lam)
        lam, vecs = lam[order], vecs[:, order]

    phis = d_inv_sqrt[:, None] * vecs
    phis = _fix_signs(phis)
    lam = lam.copy()

    if bc == NEUMANN:
        # the constant is an exact kernel vector of A; snap the numerical
        # zero mode onto it
        total = space.mu.sum()
        const = np.full(n, 1.0 / math.sqrt(total))
        overlap = float(phis[:, 0] @ (mu * const))
        if abs(lam[0]) > 1e-8 * max(lam[-1], 1.0) or abs(abs(overlap) - 1.0) > 1e-6:
            raise EigensolverError(
                f"Neumann zero mode not found: lambda0={lam[0]}, overlap={overlap}",
                residual=lam[0])
        lam[0] = 0.0
        phis[:, 0] = const

    data = SpectralData(space=space, bc=bc, lambdas=lam, phis=phis, active=active)
    _check_invariants(data, a_mat, m_mat)
    return data


def _check_invariants(data, a_mat, m_mat):
    phis, lam = data.phis, data.lambdas
    gram = (phis.T * data.mu) @ phis
    ortho = np.abs(gram - np.eye(gram.shape[0])).max()
    if ortho > 1e-10:
        raise EigensolverError(f"mu-orthonormality violated: {ortho:.3e}",
                               residual=ortho)
    resid = np.abs(a_mat @ phis - (m_mat @ phis) * lam).max()
    scale = max(np.abs(a_mat.data).max(), 1.0)
    if resid > 1e-8 * scale:
        raise EigensolverError(
            f"eigen residual {resid:.3e} exceeds 1e-8 * ||A|| = {1e-8 * scale:.3e}",
            residual=resid)
    if data.bc == DIRICHLET and lam[0] <= 0:
        raise EigensolverError(f"Dirichlet lambda_1 = {lam[0]} is not positive",
                               residual=lam[0])


def heat_kernel(spec, t):
    """Heat kernel p_t(x, y) = sum_j exp(-lambda_j t) phi_j(x) phi_j(y)."""
    if t <= 0:
        raise InvalidTimeError(f"need t > 0, got {t}")
    w = np.exp(-spec.lambdas * t)
    values = (spec.phis * w) @ spec.phis.T
    values = 0.5 * (values + values.T)
    return HeatKernel(t=float(t), values=values)


def apply_semigroup(spec, t, f):
    """Apply exp(-t L) to a field on the active vertex set; t = 0 is identity."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != spec.n_active:
        raise FieldMismatchError(
            f"field has {f.shape[0]} entries, active set has {spec.n_active}")
    if t < 0:
        raise InvalidTimeError(f"need t >= 0, got {t}")
    if t == 0:
        return f.copy()
    coef = spec.phis.T @ (spec.mu * f)
    return spec.phis @ (np.exp(-spec.lambdas * t) * coef)


def riesz_kernel(spec, alpha):
    """Kernel of the inverse fractional power, sum_j lambda_j^-alpha phi phi^T.

    Zero modes (the Neumann constant) are excluded; for Dirichlet all modes
    enter since lambda_1 > 0.
    """
    if alpha <= 0:
        raise InvalidOrderError(f"need alpha > 0, got {alpha}")
    keep = spec.lambdas > 0
    lam = spec.lambdas[keep]
    phis = spec.phis[:, keep]
    values = (phis * lam ** (-alpha)) @ phis.T
    values = 0.5 * (values + values.T)
    return RieszKernel(alpha=float(alpha), bc=spec.bc, values=values)


def riesz_from_heat_quadrature(spec, alpha, eps=1e-8, nodes=400):
    """Riesz kernel computed from the time integral of the heat kernel.

    Independent route used to cross-check riesz_kernel: (1/Gamma(alpha))
    times the integral of t^(alpha-1) p_t dt, with Gauss-Legendre quadrature
    in log t on (eps, 1), the analytic small-t head below eps, and the exact
    per-mode tail on (1, inf) via upper incomplete gamma.  Neumann runs over
    the nonzero modes only (the constant term of the kernel is excluded).
    """
    if alpha <= 0:
        raise InvalidOrderError(f"need alpha > 0, got {alpha}")
    keep = spec.lambdas > 0
    lam = spec.lambdas[keep]
    phis = spec.phis[:, keep]

    s_nodes, s_weights = np.polynomial.legendre.leggauss(nodes)
    lo, hi = math.log(eps), 0.0
    s = 0.5 * (hi - lo) * s_nodes + 0.5 * (hi + lo)
    w = 0.5 * (hi - lo) * s_weights
    mid = np.zeros((phis.shape[0], phis.shape[0]))
    for sk, wk in zip(s, w):
        t = math.exp(sk)
        pt = (phis * np.exp(-lam * t)) @ phis.T
        mid += wk * t**alpha * pt

    # below eps the kernel is flat on the scale eps: integral ~ p_eps * eps^a / a
    p_eps = (phis * np.exp(-lam * eps)) @ phis.T
    head = p_eps * (eps**alpha / alpha)

    tail_w = lam ** (-alpha) * scipy.special.gammaincc(alpha, lam)
    tail = (phis * tail_w) @ phis.T

    values = (head + mid) / scipy.special.gamma(alpha) + tail
    return RieszKernel(alpha=float(alpha), bc=spec.bc, values=0.5 * (values + values.T))


@dataclass(frozen=True)
class WeylFit:
    d_s: float
    slope: float
    lambda_window: tuple
    n_modes_used: int


def weyl_fit(spec, fraction=TRUST_FRACTION, skip=5, min_modes=50):
    """Spectral dimension from the eigenvalue counting function.

    Least-squares slope s of log N(lambda) against log lambda over the
    trusted lower part of the spectrum; returns d_s = 2 s.  Requires at
    least ``min_modes`` eigenvalues inside the trusted window.
    """
    lam = spec.lambdas[spec.lambdas > 0]
    j_max = int(fraction * lam.size)
    if j_max < min_modes:
        raise InsufficientSpectrumError(
            f"only {j_max} eigenvalues in the trusted window, need {min_modes}")
    j = np.arange(1, lam.size + 1)
    sel = slice(skip, j_max)
    x = np.log(lam[sel])
    y = np.log(j[sel])
    slope, _ = np.polyfit(x, y, 1)
    return WeylFit(d_s=2.0 * float(slope), slope=float(slope),
                   lambda_window=(float(lam[sel][0]), float(lam[sel][-1])),
                   n_modes_used=j_max - skip)


def decay_slope(spec, f=None, t_window=(0.3, 0.6), points=7):
    """Log-slope of sup |P_t f| over a late-time window (f defaults to 1).

    For Dirichlet data this converges to -lambda_1 once the spectral gap has
    damped the higher modes.
    """
    if f is None:
        f = np.ones(spec.n_active)
    ts = np.linspace(t_window[0], t_window[1], points)
    sup = [np.abs(apply_semigroup(spec, t, f)).max() for t in ts]
    slope, _ = np.polyfit(ts, np.log(sup), 1)
    return float(slope)


def diagonal_decay_fit(spec, x, t_lo, t_hi, points=9):
    """Log-log slope of p_2t(x, x) in t; tracks -d_h/d_w below the mesh scale."""
    ts = np.geomspace(t_lo, t_hi, points)
    vals = []
    for t in ts:
        w = np.exp(-spec.lambdas * (2.0 * t))
        vals.append(float((spec.phis[x] ** 2 * w).sum()))
    slope, _ = np.polyfit(np.log(ts), np.log(vals), 1)
    return float(slope)


def riesz_singularity_fit(spec, alpha, center=None):
    """Fitted exponent of the Riesz kernel's diagonal singularity.

    Bins G_alpha(x, .) at exact dyadic graph distances from a deep interior
    vertex (default: nearest the centroid) and fits the log-log slope of the
    successive differences G(r/2) - G(r).  Differencing cancels the smooth
    background, whose size is comparable to the kernel at moderate
    distances; the coarsest and finest differences are dropped (boundary
    and mesh saturation).  Returns the fitted exponent of d(x, y).
    """
    space = spec.space
    if center is None:
        center = int(np.argmin(
            np.linalg.norm(space.coords - space.coords.mean(axis=0), axis=1)))
    pos = np.flatnonzero(spec.active == center)
    if pos.size == 0:
        raise InvalidConfigurationError(f"center {center} is not an active vertex")
    g_row = riesz_kernel(spec, alpha).values[int(pos[0])]
    dist = space.geodesic_distances([center])[0][spec.active]

    level = int(round(-math.log2(space.edge_length.min())))
    radii = 2.0 ** (-np.arange(1, level))
    means = []
    for r in radii:
        sel = np.abs(dist - r) < 1e-12 * max(r, 1.0)
        if sel.sum() == 0:
            raise InvalidConfigurationError(f"no vertices at dyadic distance {r}")
        means.append(g_row[sel].mean())
    means = np.asarray(means)
    diffs = means[1:] - means[:-1]
    rr = radii[1:]
    if diffs.size < 4 or np.any(diffs <= 0):
        raise InsufficientSpectrumError("too few dyadic scales for a slope fit")
    slope, _ = np.polyfit(np.log(rr[1:-1]), np.log(diffs[1:-1]), 1)
    return float(slope)


def heat_check(spec, ts=(0.01, 0.1, 1.0)):
    """Diagnostic report: conservation, symmetry, semigroup property, decay.

    Returns a dict of scalar diagnostics used by the heat-check pipeline.
    """
    report = {}
    cons = []
    sym = []
    semi = []
    neg = []
    for t in ts:
        hk = heat_kernel(spec, t)
        row_mass = hk.values @ spec.mu
        cons.append(float(np.abs(row_mass - 1.0).max()))
        sym.append(float(np.abs(hk.values - hk.values.T).max()))
        neg.append(float(hk.values.min()))
        half = heat_kernel(spec, t / 2.0).values
        composed = half @ (spec.mu[:, None] * half)
        denom = max(np.abs(hk.values).max(), 1.0)
        semi.append(float(np.abs(composed - hk.values).max() / denom))
    report["times"] = list(ts)
    report["conservation_max_dev"] = cons
    report["symmetry_max_dev"] = sym
    report["semigroup_rel_residual"] = semi
    report["min_entry"] = neg
    report["decay_slope"] = decay_slope(spec)
    report["lambda_1"] = spec.lambda_1
    return report


def restricted_lambda1(space, region):
    """Smallest eigenvalue of the Laplacian restricted to ``region`` vertices.

    Vertices outside the region act as killing boundary (rows and columns
    dropped), matching the law of a walk stopped on exiting the region.
    """
    region = np.asarray(sorted(region), dtype=int)
    adj = space.adjacency
    deg = np.asarray(adj.sum(axis=1)).ravel()
    lap = (sp.diags(deg) - adj).tocsr()[region][:, region]
    mu = space.mu[region]
    d_inv_sqrt = 1.0 / np.sqrt(mu)
    b = (lap.multiply(d_inv_sqrt[:, None])).multiply(d_inv_sqrt[None, :])
    if b.shape[0] <= 200:
        lam = scipy.linalg.eigh(b.toarray(), eigvals_only=True,
                                subset_by_index=[0, 0])
        return float(lam[0])
    lam = scipy.sparse.linalg.eigsh(b.tocsc(), k=1, sigma=-1e-3, which="LM",
                                    return_eigenvectors=False)
    return float(lam[0])
