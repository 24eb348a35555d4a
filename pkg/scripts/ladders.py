"""Coupled refinement ladders on a config: lambda, epsilon and the time step.

    python3 scripts/ladders.py configs/example_converge.json --paths 20
"""
import argparse
from dataclasses import replace

from divspde import experiments as ex
from divspde.config import load_config


def show(title, rows):
    print(title)
    print(f"  {'level':>5} {'value':>10} {'metric':>12} {'ratio':>8}")
    for r in rows:
        print(f"  {r.level:>5} {r.value:>10.4g} {r.metric:>12.4e} {r.ratio:>8.3f}")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config")
    ap.add_argument("--paths", type=int, default=None, help="override the number of paths")
    ap.add_argument("--lams", type=float, nargs="+", default=[0.2, 0.1, 0.05])
    ap.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.2, 0.1])
    ap.add_argument("--taus", type=float, nargs="+", default=None,
                    help="time steps for the energy-identity ladder (default: tau, tau/2, tau/4)")
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    if args.paths is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment, paths=args.paths))
    s = ex.setup(cfg)
    paths = s.cfg.experiment.paths
    noise = ex.sample(s, list(range(paths)))
    method = s.cfg.solver.method
    show("lambda ladder: E max |u_v - u_v/2|^2",
         ex.parameter_ladder(s.potential, s.grid, s.diffusion, s.u0, s.solver, noise, "lam", args.lams, method))
    show("epsilon ladder: E max |u_v - u_v/2|^2",
         ex.parameter_ladder(s.potential, s.grid, s.diffusion, s.u0, s.solver, noise, "epsilon", args.eps, method))
    tau = s.solver.tau
    taus = args.taus or [tau, tau / 2, tau / 4]
    taus, res = ex.tau_ladder(s.potential, s.grid, s.diffusion, s.u0, s.solver, s.wiener, taus, paths)
    show("time-step ladder: mean |energy identity residual|", ex.tau_ladder_table(taus, res))


if __name__ == "__main__":
    main()
