"""Command line front end.

    divspde run --config cfg.json [--output DIR] [--seed-override SEED]
    divspde solve|verify|converge|potential-table --config cfg.json ...

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure. Errors are
printed to stderr as a JSON record (and written to DIR/error.json when the
output directory is known).
"""

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from . import io
from .config import load_config
from .errors import ConfigError, DivSpdeError, NumericalFailure
from .potential import conjugate, make_potential, moreau, pluto_identity_residual, resolvent, yosida

SEED_ENV = "DIVSPDE_SEED"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


def build_parser():
    ap = argparse.ArgumentParser(prog="divspde", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "solve", "verify", "converge", "potential-table"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--output", default=None, help="output directory (overrides experiment.output_dir)")
        sp.add_argument("--seed-override", type=int, default=None)
    return ap


def _resolve_seed(cfg, flag):
    if flag is not None:
        return cfg.with_seed(flag), "flag"
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return cfg.with_seed(int(env)), "env"
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    return cfg, "config"


def manifest(cfg, seed_source):
    d = cfg.resolved().to_dict()
    d["manifest"] = {"tool": "divspde", "version": __version__, "seed": cfg.experiment.seed,
                     "seed_source": seed_source, "workers": cfg.experiment.workers}
    return d


def _write_solve(cfg, out):
    s, l2, summaries, snaps, noises = ex.run_solve(cfg)
    io.write_csv(out / "ensemble.csv", ["time", "mean_l2", "var_l2"], ex.ensemble_rows(l2, s.solver.tau))
    pdir = out / "paths"
    pdir.mkdir(exist_ok=True)
    for rec in summaries:
        io.write_json(pdir / f"path_{rec['path_id']:05d}.json", rec)
    if snaps:
        sdir = out / "snapshots"
        sdir.mkdir(exist_ok=True)
        for n, values in sorted(snaps.items()):
            t = n * s.solver.tau
            io.write_json(sdir / f"snapshot_{n:07d}.json", io.field_snapshot(s.grid, t, values, path_id=0))
    if cfg.experiment.dump_noise:
        for nzp in noises:
            nzp.dump(out / f"noise_{nzp.path_ids[0]:05d}.bin")
    return {"paths": len(summaries)}


def _write_verify(cfg, out):
    s, checks, refinement = ex.run_verify(cfg)
    io.write_json(out / "report.json", {"checks": checks})
    io.write_csv(out / "refinement.csv", ["tau", "path", "residual"], refinement)
    return {"checks": len(checks), "passed": sum(c["pass"] for c in checks)}


def _write_converge(cfg, out):
    s, rows, metric = ex.run_converge(cfg)
    io.write_csv(out / "converge.csv", ["level", "value", "metric", "ratio"],
                 [(r.level, r.value, r.metric, r.ratio) for r in rows])
    return {"ladder": cfg.converge.ladder, "metric": metric, "rows": len(rows)}


def _write_table(cfg, out):
    grid = cfg.grid.build()
    p = make_potential(cfg.potential, grid.dim)
    lam = cfg.solver.lam
    n, R = cfg.experiment.table_points, cfg.experiment.table_max
    x = np.zeros((n, grid.dim))
    x[:, 0] = np.linspace(0.0, R, n)
    k, gam = p.k(x), p.gamma(x)
    rows = zip(x[:, 0], k, gam[:, 0], conjugate(p, gam), resolvent(p, lam, x)[:, 0],
               yosida(p, lam, x)[:, 0], moreau(p, lam, x), pluto_identity_residual(p, lam, x))
    io.write_csv(out / "potential_table.csv",
                 ["x", "k", "gamma", "kstar_of_gamma", "resolvent", "yosida", "moreau", "pluto_residual"], rows)
    return {"points": n}


WRITERS = {"solve": _write_solve, "verify": _write_verify, "converge": _write_converge,
           "potential-table": _write_table}


def _fail(code, exc, out=None):
    rec = exc.record() if isinstance(exc, DivSpdeError) else {"kind": type(exc).__name__, "message": str(exc)}
    rec["exit_code"] = code
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            io.write_json(out / "error.json", rec)
        except OSError:
            pass
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = None
    try:
        cfg = load_config(args.config)
        cfg, seed_source = _resolve_seed(cfg, args.seed_override)
        if args.command != "run":
            cfg = replace(cfg, experiment=replace(cfg.experiment, kind=args.command))
        if args.output is not None:
            cfg = replace(cfg, experiment=replace(cfg.experiment, output_dir=args.output))
        out = Path(cfg.experiment.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        io.write_json(out / "manifest.json", manifest(cfg, seed_source))
        summary = WRITERS[cfg.experiment.kind](cfg.resolved(), out)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc, out)
    except NumericalFailure as exc:
        return _fail(EXIT_NUMERICAL, exc, out)
    except (ValueError, TypeError) as exc:
        return _fail(EXIT_CONFIG, exc, out)
    print(json.dumps({"status": "ok", "kind": cfg.experiment.kind, "output": str(out), **summary},
                     sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
