"""Executable versions of the energy identities, maximal inequality, a priori
bound and uniform-integrability estimates, evaluated on recorded paths.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import noise as nz
from .potential import conjugate
from .solver import flux_vectors

PAIRINGS = ("left", "midpoint")


def _fsum_mean(x):
    x = np.asarray(x, dtype=float).ravel()
    return math.fsum(x) / len(x) if len(x) else 0.0


# ---------------------------------------------------------------------------
# stochastic energy identity


@dataclass(frozen=True)
class EnergyLedger:
    """Cumulative ledger terms, shape (N+1, P); row n covers [0, t_n]."""

    half_norm_sq: np.ndarray
    damping_sum: np.ndarray
    flux_sum: np.ndarray
    ito_correction: np.ndarray
    martingale_sum: np.ndarray
    residual: np.ndarray
    pairing: str
    alpha: float
    c: float
    integrability: np.ndarray = None

    @property
    def final(self):
        return self.residual[-1]


def _pair(a, b, pairing):
    return 0.5 * (a + b) if pairing == "midpoint" else a


def energy_identity_residual(path, B=None, alpha=None, pairing="left", c=1.0, potential=None):
    """Ledger of 1/2|y_t|^2 + a sum tau|y|^2 + sum tau <zeta, grad y> - 1/2|y_0|^2
    - 1/2 sum tau |C|_HS^2 - sum <y_n, C_n dW_n>.

    zeta is the full applied flux gamma_lambda(grad u) + lambda grad u_{n+1}.
    ``pairing="left"`` evaluates y at t_n in the flux and damping terms; the
    residual is then exactly 1/2 sum (|u_{n+1} - u_n|^2 - tau |C_n|_HS^2).
    ``pairing="midpoint"`` uses (y_n + y_{n+1})/2, which makes the noise-free
    identity hold to rounding for any potential.
    The damping coefficient defaults to the solver's ``damping``. Given a
    ``potential``, the ledger also accumulates sum tau int k(c grad y) + k*(c zeta).
    """
    if pairing not in PAIRINGS:
        raise ValueError(f"pairing must be one of {PAIRINGS}")
    path.require_flux()
    g, tau, N = path.grid, path.tau, path.steps
    a = path.config.damping if alpha is None else float(alpha)
    B = path.diffusion if B is None else B
    u = path.fields
    P = path.paths
    half = 0.5 * g.inner(u, u)
    damp = np.zeros((N + 1, P))
    flux = np.zeros((N + 1, P))
    ito = np.zeros((N + 1, P))
    mart = np.zeros((N + 1, P))
    integ = None if potential is None else np.zeros((N + 1, P))
    for n in range(N):
        t = n * tau
        ybar = _pair(u[n], u[n + 1], pairing)
        zeta = path.step_flux(n)
        # the explicit scheme damps u_n, the implicit reference u_{n+1}
        ud = u[n] if path.config.scheme == "explicit-drift" else u[n + 1]
        damp[n + 1] = damp[n] + tau * a * g.inner(ud, ybar)
        flux[n + 1] = flux[n] + tau * g.face_inner(zeta, g.gradient(ybar))
        if B is not None and path.noise is not None:
            arg = path.noise_input(n)
            ito[n + 1] = ito[n] + 0.5 * tau * nz.hs_norm_sq(B, t, arg)
            xi = nz.apply_diffusion(B, t, arg, path.noise.increments[:, n])
            mart[n + 1] = mart[n] + g.inner(u[n], xi)
        else:
            ito[n + 1] = ito[n]
            mart[n + 1] = mart[n]
        if integ is not None:
            xs = g.face_vectors(g.gradient(u[n]))
            zs = g.face_vectors(zeta)
            vals = [potential.k(c * x) + conjugate(potential, c * z) for x, z in zip(xs, zs)]
            integ[n + 1] = integ[n] + tau * g.face_integral(vals)
    residual = half + damp + flux - half[0] - ito - mart
    return EnergyLedger(half, damp, flux, ito, mart, residual, pairing, a, c, integ)


def deterministic_energy_identity(grid, tau, y_path, flux_path, f_path=None, pairing="midpoint"):
    """Residual of |y_N - f_N|^2 + 2 sum tau <zeta_n, grad w_n> - |y_0 - f_0|^2 with w = y - f.

    y_path and f_path are (N+1, ...) field paths, flux_path a tuple of (N, ...)
    face arrays (the flux applied on each step). ``pairing`` chooses w_n or the
    midpoint (w_n + w_{n+1})/2 in the flux term.
    """
    if pairing not in PAIRINGS:
        raise ValueError(f"pairing must be one of {PAIRINGS}")
    y = np.asarray(y_path, dtype=float)
    w = y if f_path is None else y - np.asarray(f_path, dtype=float)
    N = w.shape[0] - 1
    total = grid.inner(w[-1], w[-1]) - grid.inner(w[0], w[0])
    for n in range(N):
        wb = _pair(w[n], w[n + 1], pairing)
        total = total + 2.0 * tau * grid.face_inner(tuple(f[n] for f in flux_path), grid.gradient(wb))
    return total


def forcing_path(path):
    """f_n = sum_{k<n} C_k dW_k, the accumulated stochastic forcing of an additive run."""
    g, tau = path.grid, path.tau
    f = np.zeros_like(path.fields)
    if path.diffusion is None or path.noise is None:
        return f
    for n in range(path.steps):
        f[n + 1] = f[n] + nz.apply_diffusion(path.diffusion, n * tau, path.noise_input(n),
                                             path.noise.increments[:, n])
    return f


def applied_fluxes(path):
    """Tuple of (N, P, *face) arrays of the flux applied on each step."""
    steps = [path.step_flux(n) for n in range(path.steps)]
    return tuple(np.stack([s[a] for s in steps]) for a in range(path.grid.dim))


def refinement_rates(residuals):
    """log2 of successive |residual| ratios along a coarse-to-fine ladder."""
    r = [np.abs(np.asarray(x, dtype=float)) for x in residuals]
    with np.errstate(divide="ignore", invalid="ignore"):
        return [np.log2(a / b) for a, b in zip(r[:-1], r[1:])]


# ---------------------------------------------------------------------------
# maximal inequality for stochastic integrals


@dataclass(frozen=True)
class MaximalStats:
    lhs: float
    op_term: float
    hs_term: float
    paths: int


def maximal_statistics(grid, F, B, noise, u=None):
    """Monte Carlo E max_n |sum_{k<n} <F_k, G_k dW_k>|, E max_n |F_n|^2, E sum tau |G_n|_HS^2.

    F is an (N+1, P, ...) path (or a single field held constant); G_k = B(t_k, u_k)
    with u an (N+1, P, ...) path, a single field, or None (zero field).
    """
    N, P, tau = noise.steps, noise.paths, noise.tau
    F = np.asarray(F, dtype=float)
    if F.ndim == grid.dim:
        F = np.broadcast_to(F, (N + 1, P) + grid.shape)
    if u is None:
        u = grid.zeros()
    u = np.asarray(u, dtype=float)
    arg = (lambda n: u[n]) if u.ndim == grid.dim + 2 else (lambda n: u)
    mart = np.zeros(P)
    best = np.zeros(P)
    hs = np.zeros(P)
    for n in range(N):
        xi = nz.apply_diffusion(B, n * tau, arg(n), noise.increments[:, n])
        mart = mart + grid.inner(F[n], xi)
        best = np.maximum(best, np.abs(mart))
        hs = hs + tau * np.broadcast_to(nz.hs_norm_sq(B, n * tau, arg(n)), (P,))
    op = np.max(grid.inner(F, F), axis=0)
    return MaximalStats(_fsum_mean(best), _fsum_mean(op), _fsum_mean(hs), P)


def required_constant(stats, eps):
    """Smallest N with lhs <= eps * op_term + N * hs_term."""
    if stats.hs_term == 0:
        return 0.0
    return max(stats.lhs - eps * stats.op_term, 0.0) / stats.hs_term


def fit_maximal_constant(stats, eps_grid, safety=1.5):
    """c in N(eps) = c / eps, fitted on a calibration batch."""
    return safety * max(eps * required_constant(stats, eps) for eps in eps_grid)


@dataclass(frozen=True)
class MaximalRow:
    eps: float
    lhs: float
    op_term: float
    hs_term: float
    N: float
    slack: float
    required_N: float
    ok: bool


def maximal_estimate_check(stats, eps_grid, c):
    """Check lhs <= eps * op + (c / eps) * hs for each eps with the frozen constant c."""
    rows = []
    for eps in eps_grid:
        N = c / eps
        slack = eps * stats.op_term + N * stats.hs_term - stats.lhs
        rows.append(MaximalRow(eps, stats.lhs, stats.op_term, stats.hs_term, N, slack,
                               required_constant(stats, eps), slack >= 0))
    return rows


# ---------------------------------------------------------------------------
# uniform integrability of the drift flux


def min_conjugate_slope(p, R, directions=64):
    """min over |x| = R of k*(x)/|x| (exact on one ray for radial potentials)."""
    if p.radial is not None or p.dim == 1:
        e = np.zeros(p.dim)
        e[0] = R
        return float(conjugate(p, e)) / R
    th = np.linspace(0.0, 2 * np.pi, directions, endpoint=False)
    pts = R * np.stack([np.cos(th), np.sin(th)], axis=-1)
    return float(np.min(conjugate(p, pts))) / R


@dataclass(frozen=True)
class UIReport:
    bound: float
    magnitudes: np.ndarray
    weights: np.ndarray
    potential: object

    def tail_mass(self, R):
        sel = self.magnitudes > R
        return math.fsum((self.magnitudes[sel] * self.weights[sel]).tolist())

    def majorant(self, R):
        return self.bound / min_conjugate_slope(self.potential, R)


def uniform_integrability_report(paths, p=None):
    """Average of sum tau cellvol sum_x k*(gamma_lambda(grad u)) over every path in the ensemble."""
    totals, mags, wts = [], [], []
    count = sum(path.paths for path in paths)
    for path in paths:
        p_ = path.potential if p is None else p
        g, lam, tau = path.grid, path.config.lam, path.tau
        per_path = 0.0
        for n in range(path.steps):
            _, gams = flux_vectors(p_, lam, g, path.fields[n])
            per_path = per_path + tau * g.face_integral([conjugate(p_, y) for y in gams])
            for y in gams:
                m = np.sqrt(np.sum(y * y, axis=-1)).ravel()
                mags.append(m)
                wts.append(np.full(m.shape, tau * g.cell_volume / g.dim / count))
        totals.extend(np.broadcast_to(per_path, (path.paths,)))
    bound = math.fsum(totals) / count if count else 0.0
    mags = np.concatenate(mags) if mags else np.zeros(0)
    wts = np.concatenate(wts) if wts else np.zeros(0)
    return UIReport(bound, mags, wts, paths[0].potential if p is None and paths else p)


# ---------------------------------------------------------------------------
# a priori bound


@dataclass(frozen=True)
class AprioriBound:
    sup_term: float
    grad_term: float
    flux_term: float
    lhs: float
    rhs: float
    constant: float


def apriori_bound(path):
    """(E max|u|^2)^{1/2} + lam^{1/2} (E sum tau |grad u|^2)^{1/2} + E sum tau <gamma_lambda, grad u>
    against E|u_0|^2 + E sum tau |G|_HS^2 + 1."""
    path.require_flux()
    g, tau, lam = path.grid, path.tau, path.config.lam
    u = path.fields
    sup = _fsum_mean(np.max(g.inner(u, u), axis=0))
    grad = np.zeros(path.paths)
    flux = np.zeros(path.paths)
    hs = np.zeros(path.paths)
    for n in range(path.steps):
        gr = g.gradient(u[n])
        grad = grad + tau * g.face_inner(gr, gr)
        flux = flux + tau * g.face_inner(tuple(f[n] for f in path.drift_flux), gr)
        if path.diffusion is not None and path.noise is not None:
            hs = hs + tau * np.broadcast_to(nz.hs_norm_sq(path.diffusion, n * tau, path.noise_input(n)),
                                            (path.paths,))
    sup_term = math.sqrt(sup)
    grad_term = math.sqrt(lam * _fsum_mean(grad))
    flux_term = _fsum_mean(flux)
    lhs = sup_term + grad_term + flux_term
    rhs = _fsum_mean(g.inner(u[0], u[0])) + _fsum_mean(hs) + 1.0
    return AprioriBound(sup_term, grad_term, flux_term, lhs, rhs, lhs / rhs)


# ---------------------------------------------------------------------------
# coupled distances


def coupled_distance(a, b, alpha=0.0):
    """E max_n e^{-2 alpha t_n} |u_a(t_n) - u_b(t_n)|^2 for paths on one time grid and noise."""
    fa, fb = _common_grid(a, b)
    d = fa - fb
    sq = a.grid.inner(d, d)
    if alpha:
        sq = sq * np.exp(-2.0 * alpha * a.tau * np.arange(len(sq)))[:, None]
    return _fsum_mean(np.max(sq, axis=0))


def _common_grid(a, b):
    # align two recorded paths whose steps differ by an integer factor
    if a.steps == b.steps:
        return a.fields, b.fields
    if a.steps > b.steps:
        fb, fa = _common_grid(b, a)
        return fa, fb
    r = b.steps // a.steps
    if r * a.steps != b.steps:
        raise ValueError("time grids are not nested")
    return a.fields, b.fields[::r]


def hs_difference(B1, B2, tau, steps, u1=None, u2=None):
    """sum_n tau |B1(t_n, u1_n) - B2(t_n, u2_n)|_HS^2, averaged over paths."""
    total = 0.0
    for n in range(steps):
        a = None if u1 is None else u1[n]
        b = None if u2 is None else u2[n]
        total = total + tau * nz.hs_distance_sq(B1, B2, n * tau, a, b)
    return _fsum_mean(total)


@dataclass(frozen=True)
class LadderRow:
    level: int
    value: float
    metric: float
    ratio: float


def ladder_table(values, distances):
    """Rows (level, parameter, distance to the next level, ratio to the previous distance)."""
    rows = []
    for i, (v, d) in enumerate(zip(values, distances)):
        ratio = d / distances[i - 1] if i > 0 and distances[i - 1] > 0 else float("nan")
        rows.append(LadderRow(i, v, d, ratio))
    return rows


def strictly_decreasing(xs):
    return all(b < a for a, b in zip(xs[:-1], xs[1:]))
