"""Experiment drivers shared by the command line, the scripts and the acceptance suite."""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import noise as nz
from . import verify as vf
from .config import (RunConfig, build_diffusion, build_initial, build_potential,
                     build_wiener)
from .grid import norms
from .solver import (check_stability, kappa_diagnostics, solve_additive, solve_direct,
                     solve_multiplicative)

ISOMETRY_PATHS = 10_000


def run_paths(p, grid, B, u0, cfg, noise, method="direct", record_flux=True):
    """Solve on the given noise; multiplicative operators use ``method`` (direct or picard)."""
    if B is None or noise is None:
        paths = np.shape(u0)[0] if np.ndim(u0) == grid.dim + 1 else 1
        return solve_additive(p, grid, None, u0, cfg, None, paths=paths, record_flux=record_flux), None
    if B.kind == "additive":
        return solve_additive(p, grid, B, u0, cfg, noise, record_flux=record_flux), None
    if method == "picard":
        res = solve_multiplicative(p, grid, B, u0, cfg, noise, record_flux=record_flux)
        return res.path, res
    return solve_direct(p, grid, B, u0, cfg, noise, record_flux=record_flux), None


@dataclass
class Setup:
    cfg: RunConfig
    grid: object
    potential: object
    wiener: object
    diffusion: object
    u0: np.ndarray
    solver: object


def setup(cfg):
    cfg = cfg.resolved()
    grid = cfg.grid.build()
    wiener = build_wiener(cfg, grid)
    return Setup(cfg, grid, build_potential(cfg, grid), wiener, build_diffusion(cfg, grid, wiener),
                 build_initial(cfg, grid), cfg.solver.build())


def sample(s, ids, steps=None, tau=None):
    tau = s.solver.tau if tau is None else tau
    steps = s.solver.steps if steps is None else steps
    return nz.sample_increments(s.wiener, steps, tau, len(ids), ids[0])


# ---------------------------------------------------------------------------
# solve: ensemble with per-path summaries


def _solve_chunk(cfg_dict, ids, snapshot_steps):
    s = setup(RunConfig.from_dict(cfg_dict))
    noise = sample(s, ids) if s.diffusion is not None else None
    paths = len(ids)
    if noise is None:
        path, picard = run_paths(s.potential, s.grid, None, np.broadcast_to(s.u0, (paths,) + s.grid.shape),
                                 s.solver, None, record_flux=True)
    else:
        path, picard = run_paths(s.potential, s.grid, s.diffusion, s.u0, s.solver, noise,
                                 s.cfg.solver.method)
    g = s.grid
    l2 = np.sqrt(g.inner(path.fields, path.fields)).T  # (P, N+1)
    kd = kappa_diagnostics(path)
    summaries = []
    for i, pid in enumerate(ids):
        summaries.append({
            "path_id": pid,
            "final_l2": l2[i, -1],
            "max_l2": float(np.max(l2[i])),
            "final_linf": float(norms(g, path.fields[-1, i]).linf),
            "kappa": {k: float(getattr(kd, k)[i]) for k in kd.__dataclass_fields__},
        })
        if picard is not None:
            summaries[-1]["picard"] = {"iterations": picard.picard_iters, "alpha": picard.alpha,
                                       "distances": picard.distances,
                                       "contraction_ratios": picard.contraction_ratios}
    snaps = {n: path.fields[n, 0] for n in snapshot_steps} if ids and ids[0] == 0 else {}
    return l2, summaries, snaps, noise


def run_solve(cfg, workers=None):
    """Run the configured ensemble; work is split into contiguous path-id chunks."""
    s = setup(cfg)
    check_stability(s.solver, s.grid)
    P = s.cfg.experiment.paths
    workers = s.cfg.experiment.workers if workers is None else workers
    steps = sorted({int(round(t / s.solver.tau)) for t in s.cfg.experiment.snapshot_times})
    bounds = np.linspace(0, P, min(workers, P) + 1).astype(int)
    chunks = [list(range(a, b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    d = s.cfg.to_dict()
    if len(chunks) == 1:
        results = [_solve_chunk(d, chunks[0], steps)]
    else:
        with ProcessPoolExecutor(max_workers=len(chunks)) as ex:
            results = list(ex.map(_solve_chunk, [d] * len(chunks), chunks, [steps] * len(chunks)))
    l2 = np.concatenate([r[0] for r in results])
    summaries = [x for r in results for x in r[1]]
    snaps = {}
    for r in results:
        snaps.update(r[2])
    noises = [r[3] for r in results if r[3] is not None]
    return s, l2, summaries, snaps, noises


def ensemble_rows(l2, tau):
    P = l2.shape[0]
    rows = []
    for n in range(l2.shape[1]):
        col = l2[:, n].tolist()
        mean = math.fsum(col) / P
        var = math.fsum((x - mean) ** 2 for x in col) / P
        rows.append((n * tau, mean, var))
    return rows


# ---------------------------------------------------------------------------
# ladders on coupled noise


def parameter_ladder(p, grid, B, u0, cfg, noise, name, values, method="direct"):
    """For each value v: E max_n |u_v - u_{v/2}|^2 on shared noise, with ratios along the ladder."""
    cache = {}

    def solve(v):
        key = round(v, 15)
        if key not in cache:
            c = replace(cfg, **{name: v})
            cache[key] = run_paths(p, grid, B, u0, c, noise, method, record_flux=False)[0]
        return cache[key]

    dists = [vf.coupled_distance(solve(v), solve(v / 2)) for v in values]
    return vf.ladder_table(list(values), dists)


def tau_ladder(p, grid, B, u0, cfg, wiener, taus, paths, first_path=0, pairing="left"):
    """Energy-identity residuals on a coupled time-step ladder (coarse to fine)."""
    taus = sorted(taus, reverse=True)
    fine_tau = taus[-1]
    factors = [t / fine_tau for t in taus]
    if any(abs(f - round(f)) > 1e-9 for f in factors):
        raise ValueError("time steps must be integer multiples of the finest step")
    steps = int(round(cfg.T / fine_tau))
    fine = nz.sample_increments(wiener, steps, fine_tau, paths, first_path) if B is not None else None
    residuals = []
    for tau, f in zip(taus, factors):
        c = replace(cfg, tau=tau)
        noise = None if fine is None else fine.coarsen(int(round(f)))
        path = run_paths(p, grid, B, u0 if fine is not None else np.broadcast_to(u0, (paths,) + grid.shape),
                         c, noise)[0]
        residuals.append(vf.energy_identity_residual(path, pairing=pairing).final)
    return taus, residuals


def tau_ladder_table(taus, residuals):
    metrics = [math.fsum(np.abs(r).tolist()) / len(r) for r in residuals]
    return vf.ladder_table(taus, metrics)


# ---------------------------------------------------------------------------
# verify: a bundle of diagnostics on the configured setup


def _check(name, lhs, rhs, passed, **extra):
    return {"check_name": name, "lhs": float(lhs), "rhs": float(rhs), "slack": float(rhs - lhs),
            "pass": bool(passed), **extra}


def run_verify(cfg):
    s = setup(cfg)
    g, p, B, sc = s.grid, s.potential, s.diffusion, s.solver
    check_stability(sc, g)
    P = s.cfg.experiment.paths
    checks = []

    # energy identity under tau refinement (needs the finest step to pass the CFL bound)
    taus = [sc.tau, sc.tau / 2, sc.tau / 4]
    ladder = tau_ladder(p, g, B, s.u0, sc, s.wiener, taus, P)
    rates = vf.refinement_rates(ladder[1])
    ok = np.ones(P, dtype=bool)
    for r in rates:
        ok &= (r >= 0.5) & (r <= 1.5)
    frac = float(np.mean(ok))
    checks.append(_check("energy_identity_rate", 0.9, frac, frac >= 0.9,
                         note="lhs is the required fraction of paths with log2 ratios in [0.5, 1.5]"))
    refinement = [(t, i, float(r[i])) for t, r in zip(ladder[0], ladder[1]) for i in range(P)]

    # deterministic identity (noise off) with midpoint pairing
    det, _ = run_paths(p, g, None, s.u0, sc, None)
    led = vf.energy_identity_residual(det, pairing="midpoint")
    res = float(np.max(np.abs(led.final)))
    checks.append(_check("deterministic_energy_identity", res, 1e-10, res <= 1e-10))

    noise = sample(s, list(range(P))) if B is not None else None
    path, _ = run_paths(p, g, B, s.u0, sc, noise, s.cfg.solver.method)
    if noise is None:
        path = det

    ap = vf.apriori_bound(path)
    checks.append(_check("apriori_constant", ap.lhs, ap.rhs, math.isfinite(ap.constant),
                         constant=ap.constant))

    ui = vf.uniform_integrability_report([path])
    mags = ui.magnitudes
    top = float(mags.max()) if len(mags) else 1.0
    for frac_R in (0.25, 0.5, 0.75):
        R = max(frac_R * top, 1e-12)
        tail, maj = ui.tail_mass(R), ui.majorant(R)
        checks.append(_check("uniform_integrability_tail", tail, maj, tail <= maj * (1 + 1e-12), R=R))

    kd = kappa_diagnostics(path)
    finite = all(np.all(np.isfinite(getattr(kd, k))) for k in kd.__dataclass_fields__)
    checks.append(_check("kappa_integrals_finite", 0.0, 0.0, finite,
                         **{k: float(np.mean(getattr(kd, k))) for k in kd.__dataclass_fields__}))

    if B is not None:
        eps_grid = [1e-3, 1e-2, 1e-1, 1.0]
        cal_noise = sample(s, list(range(P, 2 * P)))
        cal_path, _ = run_paths(p, g, B, s.u0, sc, cal_noise, s.cfg.solver.method, record_flux=False)
        Beff = path.diffusion
        frozen = path.frozen if path.frozen is not None else path.fields
        cal_frozen = cal_path.frozen if cal_path.frozen is not None else cal_path.fields
        cal = vf.maximal_statistics(g, cal_path.fields, Beff, cal_noise, cal_frozen)
        c = vf.fit_maximal_constant(cal, eps_grid)
        ev = vf.maximal_statistics(g, path.fields, Beff, noise, frozen)
        for row in vf.maximal_estimate_check(ev, eps_grid, c):
            checks.append(_check("maximal_estimate", row.lhs, row.lhs + row.slack, row.ok,
                                 eps=row.eps, N=row.N, required_N=row.required_N,
                                 protocol="N(eps) = c/eps with c fitted on a disjoint calibration batch"))
        iso = nz.ito_isometry_check(Beff, s.wiener, ISOMETRY_PATHS, sc.steps, sc.tau, u=s.u0,
                                    first_path=2 * P)
        checks.append(_check("ito_isometry", iso.rel_err, 0.05, iso.rel_err < 0.05,
                             mc_lhs=iso.lhs, mc_rhs=iso.rhs))
    return s, checks, refinement


# ---------------------------------------------------------------------------
# converge


def run_converge(cfg):
    s = setup(cfg)
    g, p, B, sc = s.grid, s.potential, s.diffusion, s.solver
    P = s.cfg.experiment.paths
    c = s.cfg.converge
    if c.ladder == "tau":
        taus, res = tau_ladder(p, g, B, s.u0, sc, s.wiener, list(c.values), P)
        return s, tau_ladder_table(taus, res), "mean_abs_energy_residual"
    noise = sample(s, list(range(P))) if B is not None else None
    u0 = s.u0 if noise is not None else np.broadcast_to(s.u0, (P,) + g.shape)
    if c.ladder == "lambda":
        check_stability(replace(sc, lam=min(c.values) / 2), g)
    name = {"lambda": "lam", "epsilon": "epsilon"}[c.ladder]
    rows = parameter_ladder(p, g, B, u0, sc, noise, name, list(c.values))
    return s, rows, "coupled_sup_l2_sq_to_half"
