"""Configuration-driven experiment pipelines with reproducible CSV reports.

A report is a CSV file whose leading lines are a '#'-commented manifest
(version, seed, config echo).  Identical (config, seed) pairs produce
byte-identical files: no timestamps, fixed column orders, repr-exact
floats, and all randomness derived from keyed substreams.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from . import __version__ as _version
from .errors import CompareError, ConfigError, PamlabError
from .noise import NoiseModel, covariance_check, neumann_shift
from .pam import (
    cell_beta_factor,
    cell_beta_factor_consistent,
    lyapunov_fit,
    mc_moments,
    scaling_check_gasket,
    second_moment_volterra,
)
from .rates import regime_and_exponents
from .spaces import build_gasket, build_interval, build_metric_graph, space_to_json
from .spectral import DIRICHLET, NEUMANN, eigendecompose, heat_check
from .walkers import fk_moment

PIPELINES = ("build-space", "spectrum", "heat-check", "simulate", "moments",
             "fk", "scaling-test", "theory", "phase-sweep")


@dataclass
class ExperimentConfig:
    """Validated description of one run.

    Spaces: interval (level = grid count), gasket (level = depth), graph
    (edges list of [u, v, length] plus mesh).  ``beta`` is always a list;
    single-beta pipelines use its first entry.
    """

    pipeline: str
    space: str = "interval"
    level: int = 50
    mesh: float = 0.25
    length: float = 1.0
    edges: list = field(default_factory=list)
    graph_boundary: list = field(default_factory=list)
    bc: str = DIRICHLET
    alpha: float = 0.0
    beta: list = field(default_factory=lambda: [1.0])
    dt: float = 1e-3
    T: float = 0.2
    trials: int = 200
    p_max: int = 2
    probes: list = field(default_factory=list)
    word: list = field(default_factory=lambda: [1])
    times: list = field(default_factory=lambda: [0.01, 0.1, 1.0])
    count: int = 0  # 0 means every eigenvalue
    seed: int = 0
    out: str = "report.csv"

    def validate(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError("pipeline", f"unknown pipeline {self.pipeline!r}; "
                                          f"choose from {PIPELINES}")
        if self.space not in ("interval", "gasket", "graph"):
            raise ConfigError("space", f"unknown space {self.space!r}")
        if self.bc not in (DIRICHLET, NEUMANN):
            raise ConfigError("bc", f"unknown boundary condition {self.bc!r}")
        if not self.beta:
            raise ConfigError("beta", "empty sweep list")
        if any(b < 0 for b in self.beta):
            raise ConfigError("beta", "negative intensity")
        if self.alpha < 0:
            raise ConfigError("alpha", "negative order")
        if self.dt <= 0:
            raise ConfigError("dt", "nonpositive step")
        if self.T <= 0:
            raise ConfigError("T", "nonpositive horizon")
        if self.trials < 1:
            raise ConfigError("trials", "need at least one trial")
        if self.space == "graph" and self.pipeline != "theory" and not self.edges:
            raise ConfigError("edges", "graph space needs an edge list")
        if int(self.seed) != self.seed:
            raise ConfigError("seed", "seed must be an integer")
        return self

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown config field")
        return cls(**doc).validate()


def build_space(cfg):
    if cfg.space == "interval":
        return build_interval(cfg.level, cfg.length)
    if cfg.space == "gasket":
        return build_gasket(cfg.level)
    return build_metric_graph([tuple(e) for e in cfg.edges], cfg.mesh,
                              boundary=cfg.graph_boundary)


def _spec_for(cfg):
    space = build_space(cfg)
    spec = eigendecompose(space, cfg.bc)
    return space, spec


def _resolve_probes(cfg, spec):
    if cfg.probes:
        bad = [p for p in cfg.probes if not (0 <= p < spec.n_active)]
        if bad:
            raise ConfigError("probes", f"vertex {bad[0]} outside the active set "
                                        f"(size {spec.n_active})")
        return list(cfg.probes)
    k = min(5, spec.n_active)
    stride = max(1, spec.n_active // (k + 1))
    return list(range(stride, spec.n_active, stride))[:k]


def _model_for(cfg, spec, beta):
    c_u = 0.0
    if cfg.bc == NEUMANN and cfg.alpha > 0:
        c_u = neumann_shift(spec, 2.0 * cfg.alpha)
    return NoiseModel(alpha=cfg.alpha, beta=beta, bc=cfg.bc, c_u=c_u,
                      seed=cfg.seed)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(path, manifest, header, rows):
    """Write a CSV with a '#'-commented manifest block; returns the path."""
    lines = [f"# pamlab {_version}"]
    for key in sorted(manifest):
        lines.append(f"# {key}={manifest[key]}")
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    text = "\n".join(lines) + "\n"
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def read_report(path):
    """Parse a report back into (manifest, header, rows of strings)."""
    manifest = {}
    header = None
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, val = body.split("=", 1)
                    manifest[key] = val
                continue
            if header is None:
                header = line.split(",")
                continue
            if line:
                rows.append(line.split(","))
    if header is None:
        raise CompareError(f"{path}: no header line")
    return manifest, header, rows


def _manifest(cfg):
    doc = cfg.to_dict()
    doc.pop("out", None)  # output location is not part of the run identity
    return {"config": json.dumps(doc, sort_keys=True), "seed": cfg.seed}


def run(cfg, out=None):
    """Execute the configured pipeline; returns the report path."""
    cfg.validate()
    path = out or cfg.out
    name = cfg.pipeline

    if name == "build-space":
        space = build_space(cfg)
        text = space_to_json(space)
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(text + "\n")
        return path

    if name == "theory":
        space = build_space(cfg)
        pred = regime_and_exponents(cfg.alpha, space.d_h, space.d_w)
        rows = [[pred.alpha, pred.d_h, pred.d_w, pred.regime,
                 pred.upper_exponent_largebeta, pred.upper_shape,
                 pred.lower_exponent_largebeta, pred.lower_shape]]
        return write_report(path, _manifest(cfg),
                            ["alpha", "d_h", "d_w", "regime", "upper_exponent",
                             "upper_shape", "lower_exponent", "lower_shape"], rows)

    space, spec = _spec_for(cfg)

    if name == "spectrum":
        k = cfg.count or spec.n_modes
        rows = [[j, float(spec.lambdas[j])] for j in range(min(k, spec.n_modes))]
        return write_report(path, _manifest(cfg), ["index", "eigenvalue"], rows)

    if name == "heat-check":
        rep = heat_check(spec, tuple(cfg.times))
        rows = []
        for i, t in enumerate(rep["times"]):
            rows.append([t, rep["conservation_max_dev"][i],
                         rep["symmetry_max_dev"][i],
                         rep["semigroup_rel_residual"][i], rep["min_entry"][i]])
        manifest = _manifest(cfg)
        manifest["decay_slope"] = repr(rep["decay_slope"])
        manifest["lambda_1"] = repr(rep["lambda_1"])
        return write_report(path, manifest,
                            ["t", "conservation", "symmetry", "semigroup_residual",
                             "min_entry"], rows)

    if name in ("simulate", "moments"):
        model = _model_for(cfg, spec, cfg.beta[0])
        p_max = 1 if name == "simulate" else cfg.p_max
        save_every = max(1, int(round(cfg.T / cfg.dt / 50)))
        est = mc_moments(spec, model, None, cfg.T, cfg.dt, p_max, cfg.trials,
                         save_every=save_every)
        probes = _resolve_probes(cfg, spec)
        rows = []
        for it, t in enumerate(est.times):
            for x in probes:
                for p in range(1, p_max + 1):
                    rows.append([float(t), x, p, float(est.values[it, x, p - 1]),
                                 float(est.stderr[it, x, p - 1])])
        manifest = _manifest(cfg)
        manifest["c_u"] = repr(model.c_u)
        manifest["trials"] = cfg.trials
        return write_report(path, manifest,
                            ["t", "x", "p", "estimate", "stderr"], rows)

    if name == "fk":
        model = _model_for(cfg, spec, cfg.beta[0])
        probes = _resolve_probes(cfg, spec)
        rows = []
        for x in probes:
            est = fk_moment(spec, model, None, cfg.p_max, cfg.T, x, cfg.trials)
            rows.append([x, cfg.p_max, est.value, est.stderr, est.trials])
        manifest = _manifest(cfg)
        manifest["c_u"] = repr(model.c_u)
        return write_report(path, manifest,
                            ["x", "p", "estimate", "stderr", "trials"], rows)

    if name == "scaling-test":
        if cfg.space != "gasket":
            raise ConfigError("space", "scaling-test needs a gasket")
        t_grid = [t for t in cfg.times if t > 0]
        rows = []
        for factor_name, factor in (
                ("advertised", cell_beta_factor(cfg.alpha, len(cfg.word))),
                ("consistent", cell_beta_factor_consistent(cfg.alpha, len(cfg.word)))):
            chk = scaling_check_gasket(cfg.level, tuple(cfg.word), cfg.alpha,
                                       cfg.beta[0], t_grid, bc=cfg.bc, dt=cfg.dt,
                                       seed=cfg.seed, beta_factor=factor)
            rows.append([factor_name, chk.n, chk.beta_factor, chk.eigenvalue_rel,
                         chk.heat_kernel_rel, chk.moment_rel])
        return write_report(path, _manifest(cfg),
                            ["beta_factor_rule", "n", "beta_factor",
                             "eigenvalue_rel", "heat_kernel_rel", "moment_rel"],
                            rows)

    if name == "phase-sweep":
        probes = _resolve_probes(cfg, spec)
        x = probes[len(probes) // 2]
        rows = []
        save_every = max(1, int(round(cfg.T / cfg.dt / 400)))
        for beta in cfg.beta:
            model = _model_for(cfg, spec, beta)
            mf = second_moment_volterra(spec, model, None, cfg.T, cfg.dt,
                                        save_every=save_every)
            series = np.array([m[x, x] for m in mf.matrices])
            rep = lyapunov_fit(mf.times, series)
            rows.append([beta, rep.slope, rep.stderr, rep.window[0],
                         rep.window[1], x])
        return write_report(path, _manifest(cfg),
                            ["beta", "slope", "stderr", "window_lo", "window_hi",
                             "probe"], rows)

    raise ConfigError("pipeline", f"unhandled pipeline {name!r}")


def compare(path_a, path_b, value_col="estimate", stderr_col="stderr",
            sigma=3.0, rel_tol=None):
    """Row-by-row comparison of two reports sharing a schema.

    Key columns are everything except the value/stderr columns.  With
    stderr columns present the standardized difference must stay within
    ``sigma``; otherwise ``rel_tol`` bounds the relative difference.
    Returns a list of dict rows with a 'pass' flag.
    """
    _, head_a, rows_a = read_report(path_a)
    _, head_b, rows_b = read_report(path_b)
    if head_a != head_b:
        raise CompareError(f"schema mismatch: {head_a} vs {head_b}")
    if value_col not in head_a:
        raise CompareError(f"missing value column {value_col!r}")
    vi = head_a.index(value_col)
    si = head_a.index(stderr_col) if stderr_col in head_a else None
    keys = [i for i in range(len(head_a)) if i not in (vi, si)]

    def key_of(row):
        return tuple(row[i] for i in keys)

    index_b = {key_of(r): r for r in rows_b}
    if len(index_b) != len(rows_b):
        raise CompareError("duplicate keys in second report")
    out = []
    for row in rows_a:
        k = key_of(row)
        if k not in index_b:
            raise CompareError(f"row {k} missing from {path_b}")
        a_val = float(row[vi])
        b_val = float(index_b[k][vi])
        if si is not None and rel_tol is None:
            se = math.hypot(float(row[si]), float(index_b[k][si]))
            z = abs(a_val - b_val) / se if se > 0 else (0.0 if a_val == b_val
                                                        else math.inf)
            ok = z <= sigma
            out.append({"key": k, "a": a_val, "b": b_val, "z": z, "pass": ok})
        else:
            tol = rel_tol if rel_tol is not None else 0.0
            denom = max(abs(a_val), abs(b_val), 1e-300)
            rd = abs(a_val - b_val) / denom
            out.append({"key": k, "a": a_val, "b": b_val, "rel": rd,
                        "pass": rd <= tol})
    if len(rows_a) != len(rows_b):
        raise CompareError("reports have different row counts")
    return out
