"""Continuous-time random walks and path-interaction moment estimators.

The walk is the CTMC whose generator is the measure-symmetric Laplacian of
the space: at vertex p it waits an exponential time with rate
(sum of incident conductances) / mu(p), then moves to a neighbor chosen
proportionally to conductance.  Under Dirichlet conditions the walk is
absorbed on hitting the boundary; under Neumann the boundary vertices just
use their own (smaller) rates.

Moments of the multiplicative-noise heat equation are estimated from
p-tuples of independent walks carrying the exponential pairwise interaction
exp(beta^2 * sum_{i<k} int_0^t G_2a(B^i_s, B^k_s) ds); the time integral is
evaluated exactly along the holding intervals of the joint chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidConfigurationError,
    InvalidRegionError,
    InvalidTimeError,
    UnsupportedRegimeError,
)
from .pam import interaction_kernel
from .rng import substream
from .spectral import DIRICHLET, check_bc

_WALK_CHUNK = 8192


class TransitionTable:
    """Padded per-vertex jump rates, neighbor lists and selection weights."""

    def __init__(self, space, bc):
        check_bc(bc)
        self.space = space
        self.bc = bc
        adj = space.adjacency.tocsr()
        n = space.n_vertices
        strength = np.asarray(adj.sum(axis=1)).ravel()
        self.rates = strength / space.mu
        maxdeg = int(np.diff(adj.indptr).max())
        self.neighbors = np.zeros((n, maxdeg), dtype=np.int64)
        self.cumprob = np.ones((n, maxdeg))
        for v in range(n):
            lo, hi = adj.indptr[v], adj.indptr[v + 1]
            nbr = adj.indices[lo:hi]
            w = adj.data[lo:hi]
            k = nbr.size
            self.neighbors[v, :k] = nbr
            if k:
                c = np.cumsum(w) / w.sum()
                c[-1] = 1.0
                self.cumprob[v, :k] = c
                self.neighbors[v, k:] = nbr[-1] if k else 0
        self.absorbing = np.zeros(n, dtype=bool)
        if bc == DIRICHLET:
            self.absorbing[space.boundary] = True

    def sample_neighbors(self, vertices, rng):
        r = rng.random(vertices.shape[0])
        rows = self.cumprob[vertices]
        idx = (rows < r[:, None]).sum(axis=1)
        idx = np.minimum(idx, rows.shape[1] - 1)
        return self.neighbors[vertices, idx]


_tables = {}


def transition_table(space, bc):
    """Cached TransitionTable per (space, bc)."""
    key = (id(space), bc)
    if key not in _tables:
        _tables[key] = TransitionTable(space, bc)
    return _tables[key]


@dataclass(frozen=True)
class WalkPath:
    """A single trajectory: arrival times (times[0] = 0) and visited vertices.

    For an absorbed walk killed_at holds the boundary hitting time and the
    path is frozen there.
    """

    times: np.ndarray
    positions: np.ndarray
    killed_at: float | None


def simulate_walk(space, bc, x0, T, stream=0, seed=0):
    """Sample one walk on [0, T] started at vertex x0."""
    if T < 0:
        raise InvalidTimeError(f"need T >= 0, got {T}")
    table = transition_table(space, bc)
    if isinstance(stream, int):
        stream = (stream,)
    rng = substream(seed, 0x57A1, *stream)
    times = [0.0]
    pos = [int(x0)]
    killed_at = None
    t = 0.0
    x = int(x0)
    if table.absorbing[x]:
        return WalkPath(np.array(times), np.array(pos, dtype=np.int64), 0.0)
    while True:
        tau = rng.exponential(1.0) / table.rates[x]
        if t + tau > T:
            break
        t += tau
        x = int(table.sample_neighbors(np.array([x]), rng)[0])
        times.append(t)
        pos.append(x)
        if table.absorbing[x]:
            killed_at = t
            break
    return WalkPath(np.asarray(times), np.asarray(pos, dtype=np.int64), killed_at)


def walk_positions_at(space, bc, x0, t, trials, seed=0, stream=(0,)):
    """Vectorized endpoint sampler: positions of ``trials`` walks at time t.

    Returns (positions, alive); for Dirichlet, alive marks walks not yet
    absorbed and positions of absorbed walks are the absorbing vertex.
    """
    table = transition_table(space, bc)
    if isinstance(stream, int):
        stream = (stream,)
    pos = np.full(trials, int(x0), dtype=np.int64)
    alive = np.ones(trials, dtype=bool)
    out_pos = pos.copy()
    done = 0
    chunk_id = 0
    while done < trials:
        b = min(_WALK_CHUNK, trials - done)
        rng = substream(seed, 0x0CC0, chunk_id, *stream)
        p, a = _advance(table, int(x0), t, b, rng)
        out_pos[done:done + b] = p
        alive[done:done + b] = a
        done += b
        chunk_id += 1
    return out_pos, alive


def _advance(table, x0, t_target, count, rng):
    """March ``count`` independent walks to time t_target (or absorption)."""
    pos = np.full(count, x0, dtype=np.int64)
    tcur = np.zeros(count)
    running = np.ones(count, dtype=bool)
    alive = np.ones(count, dtype=bool)
    if table.absorbing[x0]:
        return pos, np.zeros(count, dtype=bool)
    while running.any():
        idx = np.flatnonzero(running)
        tau = rng.exponential(1.0, idx.size) / table.rates[pos[idx]]
        reach = tcur[idx] + tau >= t_target
        tcur[idx] += tau
        running[idx[reach]] = False
        move = idx[~reach]
        if move.size == 0:
            continue
        q = table.sample_neighbors(pos[move], rng)
        pos[move] = q
        dead = table.absorbing[q]
        if dead.any():
            alive[move[dead]] = False
            running[move[dead]] = False
    return pos, alive


@dataclass(frozen=True)
class FkEstimate:
    p: int
    value: float
    stderr: float
    trials: int


def fk_moment(spec, model, u0, p, t, x, trials, seed=None):
    """Path-interaction estimate of E[u(t, x)^p] for colored noise.

    ``x`` indexes the active vertex set of ``spec``.  Runs ``trials``
    independent p-tuples of walks; each surviving tuple contributes
    prod_j u0(B^j_t) * exp(beta^2 * sum_{i<k} int_0^t G(B^i, B^k) ds),
    absorbed tuples contribute zero (Dirichlet).  White noise (alpha = 0)
    is rejected: the pair interaction would need an intersection local
    time, which this estimator does not implement.
    """
    if model.alpha == 0:
        raise UnsupportedRegimeError(
            "the path estimator needs alpha > 0; white noise would require "
            "intersection local times")
    if int(p) != p or p < 2:
        raise InvalidConfigurationError(f"need integer p >= 2, got {p}")
    if t <= 0:
        raise InvalidTimeError(f"need t > 0, got {t}")
    p = int(p)
    seed = model.seed if seed is None else seed
    space = spec.space
    table = transition_table(space, model.bc)
    g = interaction_kernel(spec, model)
    beta2 = model.beta**2

    full_to_active = np.full(space.n_vertices, -1, dtype=np.int64)
    full_to_active[spec.active] = np.arange(spec.n_active)
    if u0 is None:
        u0 = np.ones(spec.n_active)
    u0 = np.asarray(u0, dtype=float)
    x_full = int(spec.active[int(x)])

    total = 0.0
    total_sq = 0.0
    done = 0
    chunk_id = 0
    while done < trials:
        b = min(_WALK_CHUNK // p, trials - done)
        rng = substream(seed, 0xFE, int(x), chunk_id)
        w = _fk_chunk(table, full_to_active, g, beta2, u0, p, t, x_full, b, rng)
        total += w.sum()
        total_sq += (w**2).sum()
        done += b
        chunk_id += 1

    mean = total / trials
    var = max(total_sq / trials - mean**2, 0.0) * trials / max(trials - 1, 1)
    return FkEstimate(p=p, value=float(mean),
                      stderr=float(np.sqrt(var / trials)), trials=trials)


def _fk_chunk(table, full_to_active, g, beta2, u0, p, t, x_full, count, rng):
    """Advance ``count`` joint p-walker chains to time t, accumulating the
    pairwise kernel integral exactly over the joint holding intervals."""
    pos = np.full((p, count), x_full, dtype=np.int64)
    tcur = np.zeros(count)
    acc = np.zeros(count)
    running = np.ones(count, dtype=bool)
    survived = np.ones(count, dtype=bool)

    while running.any():
        idx = np.flatnonzero(running)
        rates = table.rates[pos[:, idx]]
        rtot = rates.sum(axis=0)
        tau = rng.exponential(1.0, idx.size) / rtot

        a = full_to_active[pos[:, idx]]
        gsum = np.zeros(idx.size)
        for i in range(p):
            for k in range(i + 1, p):
                gsum += g[a[i], a[k]]
        hold = np.minimum(tau, t - tcur[idx])
        acc[idx] += gsum * hold

        reach = tcur[idx] + tau >= t
        tcur[idx] += tau
        running[idx[reach]] = False
        move = idx[~reach]
        if move.size == 0:
            continue
        r = rng.random(move.size) * rtot[~reach]
        which = (np.cumsum(rates[:, ~reach], axis=0) < r).sum(axis=0)
        which = np.minimum(which, p - 1)
        vsel = pos[which, move]
        q = table.sample_neighbors(vsel, rng)
        pos[which, move] = q
        dead = table.absorbing[q]
        if dead.any():
            died = move[dead]
            survived[died] = False
            running[died] = False

    weights = np.zeros(count)
    ok = survived
    if ok.any():
        a_fin = full_to_active[pos[:, ok]]
        w = np.exp(beta2 * acc[ok])
        for j in range(p):
            w = w * u0[a_fin[j]]
        weights[ok] = w
    return weights


@dataclass
class SurvivalCurve:
    times: np.ndarray
    survival: np.ndarray
    stderr: np.ndarray
    trials: int
    lambda1_region: float


def exit_time_tail(space, region, x, t_grid, trials, bc=DIRICHLET, seed=0):
    """Monte Carlo survival P(T_region > t) on a time grid, with the
    restricted-Laplacian reference rate.

    ``region`` is a set of vertex ids; the walk exits when it first jumps to
    a vertex outside it.  The companion eigenvalue lambda1_region comes from
    the Laplacian with rows and columns restricted to the region, whose
    semigroup is exactly the law of the stopped walk.
    """
    from .spectral import restricted_lambda1

    region = np.asarray(sorted(set(int(v) for v in region)), dtype=np.int64)
    if region.size == 0:
        raise InvalidRegionError("empty region")
    if int(x) not in set(region.tolist()):
        raise InvalidRegionError(f"start vertex {x} lies outside the region")
    t_grid = np.asarray(t_grid, dtype=float)
    table = transition_table(space, bc)
    in_region = np.zeros(space.n_vertices, dtype=bool)
    in_region[region] = True

    t_max = float(t_grid.max())
    exit_times = np.full(trials, np.inf)
    done = 0
    chunk_id = 0
    while done < trials:
        b = min(_WALK_CHUNK, trials - done)
        rng = substream(seed, 0xE717, chunk_id)
        exit_times[done:done + b] = _exit_chunk(table, in_region, int(x),
                                                t_max, b, rng)
        done += b
        chunk_id += 1

    surv = np.array([(exit_times > t).mean() for t in t_grid])
    se = np.sqrt(np.maximum(surv * (1.0 - surv), 1e-12) / trials)
    lam1 = restricted_lambda1(space, region)
    return SurvivalCurve(times=t_grid, survival=surv, stderr=se,
                         trials=trials, lambda1_region=float(lam1))


def _exit_chunk(table, in_region, x0, t_max, count, rng):
    pos = np.full(count, x0, dtype=np.int64)
    tcur = np.zeros(count)
    running = np.ones(count, dtype=bool)
    exit_t = np.full(count, np.inf)
    while running.any():
        idx = np.flatnonzero(running)
        tau = rng.exponential(1.0, idx.size) / table.rates[pos[idx]]
        tcur[idx] += tau
        censored = tcur[idx] > t_max
        running[idx[censored]] = False
        move = idx[~censored]
        if move.size == 0:
            continue
        q = table.sample_neighbors(pos[move], rng)
        pos[move] = q
        left = ~in_region[q]
        if left.any():
            out = move[left]
            exit_t[out] = tcur[out]
            running[out] = False
    return exit_t
