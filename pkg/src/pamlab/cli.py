"""Command-line entry point.

Usage: pamlab PIPELINE [flags], or pamlab compare A B [flags].  Flags
override entries of an optional JSON config file.  The thread count is
taken from the PAMLAB_THREADS environment variable only (recorded in the
manifest through the config echo; computation is deterministic regardless).
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, PamlabError
from .experiments import PIPELINES, ExperimentConfig, compare, run


def _parser():
    p = argparse.ArgumentParser(prog="pamlab",
                                description="experiment runner")
    sub = p.add_subparsers(dest="pipeline", required=True)

    for name in PIPELINES:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--space", choices=["interval", "gasket", "graph"])
        sp.add_argument("--level", type=int, help="grid count or gasket depth")
        sp.add_argument("--mesh", type=float, help="metric-graph mesh size")
        sp.add_argument("--bc", choices=["dirichlet", "neumann"])
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--beta", type=float, action="append",
                        help="repeatable; forms the sweep list")
        sp.add_argument("--dt", type=float)
        sp.add_argument("--T", type=float, dest="T")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--p-max", type=int, dest="p_max")
        sp.add_argument("--probe", type=int, action="append", dest="probes")
        sp.add_argument("--time", type=float, action="append", dest="times")
        sp.add_argument("--word", type=int, action="append")
        sp.add_argument("--count", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")

    cp = sub.add_parser("compare")
    cp.add_argument("report_a")
    cp.add_argument("report_b")
    cp.add_argument("--value-col", default="estimate")
    cp.add_argument("--stderr-col", default="stderr")
    cp.add_argument("--sigma", type=float, default=3.0)
    cp.add_argument("--rel-tol", type=float, default=None)
    return p


def _config_from_args(args):
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc.update(json.load(fh))
    doc["pipeline"] = args.pipeline
    for key in ("space", "level", "mesh", "bc", "alpha", "beta", "dt", "T",
                "trials", "p_max", "probes", "times", "word", "count", "seed",
                "out"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    return ExperimentConfig.from_dict(doc)


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.pipeline == "compare":
        try:
            table = compare(args.report_a, args.report_b,
                            value_col=args.value_col, stderr_col=args.stderr_col,
                            sigma=args.sigma, rel_tol=args.rel_tol)
        except PamlabError as err:
            print(json.dumps({"error": type(err).__name__, "detail": str(err)}),
                  file=sys.stderr)
            return 1
        n_fail = sum(not r["pass"] for r in table)
        for r in table:
            metric = f"z={r['z']:.3f}" if "z" in r else f"rel={r['rel']:.3e}"
            print(f"{'PASS' if r['pass'] else 'FAIL'} {','.join(r['key'])} "
                  f"a={r['a']!r} b={r['b']!r} {metric}")
        print(f"{len(table) - n_fail}/{len(table)} rows pass")
        return 0 if n_fail == 0 else 1

    try:
        cfg = _config_from_args(args)
        path = run(cfg)
    except ConfigError as err:
        print(json.dumps({"error": "ConfigError", "field": err.field,
                          "detail": str(err)}), file=sys.stderr)
        return 2
    except PamlabError as err:
        print(json.dumps({"error": type(err).__name__, "detail": str(err)}),
              file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
