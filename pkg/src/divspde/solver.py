"""Time integration of the regularized equation

    du - div gamma_lambda(grad u) dt - lambda Laplacian u dt = C(t) dW,

its noise-mollified version, and the Picard loop for multiplicative noise.

All solves are batched over Monte Carlo paths: a state has shape (P, *grid.shape)
and a recorded trajectory (N+1, P, *grid.shape).
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import noise as nz
from .errors import MissingFlux, NonConvergence, PicardDivergence, StabilityViolation
from .grid import norms
from .potential import conjugate, yosida, yosida_jacobian

SCHEMES = ("explicit-drift", "prox-implicit-reference")
NEWTON_RTOL = 1e-12
NEWTON_MAX = 50


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 0.1
    tau: float = 1e-4
    T: float = 0.01
    epsilon: float = 0.0
    m: Optional[int] = None
    alpha: Optional[float] = None
    picard_tol: float = 1e-8
    picard_max: int = 50
    scheme: str = "explicit-drift"
    cfl_c: float = 0.25
    damping: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not 0 < self.tau <= self.T:
            raise ValueError("need 0 < tau <= T")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.damping < 0:
            raise ValueError("damping must be nonnegative")

    @property
    def steps(self):
        n = int(round(self.T / self.tau))
        if not math.isclose(n * self.tau, self.T, rel_tol=1e-9):
            raise ValueError("T must be an integer multiple of tau")
        return n

    def resolved_m(self, dim):
        return nz.default_m(dim) if self.m is None else int(self.m)


def stability_bound(cfg, grid):
    return cfg.cfl_c * cfg.lam * grid.h_min ** 2


def check_stability(cfg, grid):
    if cfg.scheme != "explicit-drift":
        return
    bound = stability_bound(cfg, grid)
    if cfg.tau > bound * (1 + 1e-12):
        raise StabilityViolation(
            f"tau={cfg.tau:g} exceeds the explicit-drift bound {bound:g}", cfg.tau, bound)


# ---------------------------------------------------------------------------
# fluxes


def drift_flux(p, lam, grid, u):
    """gamma_lambda(grad u) on every face family (own-axis component per family)."""
    grads = grid.gradient(u)
    if grid.dim == 1:
        return (yosida(p, lam, grads[0][..., None])[..., 0],)
    vecs = grid.face_vectors(grads)
    return tuple(yosida(p, lam, v)[..., a] for a, v in enumerate(vecs))


def flux_vectors(p, lam, grid, u):
    """Full vectors (grad u, gamma_lambda(grad u)) per face family, each (..., *face, dim)."""
    vecs = grid.face_vectors(grid.gradient(u))
    return vecs, [yosida(p, lam, v) for v in vecs]


def _flux_derivative(p, lam, grid, u):
    # d gamma_lambda_a / d x_a on the faces of axis a (transverse coupling dropped)
    vecs = grid.face_vectors(grid.gradient(u))
    return tuple(yosida_jacobian(p, lam, v)[..., a, a] for a, v in enumerate(vecs))


# ---------------------------------------------------------------------------
# steps


def _noise_term(B, t, frozen, dw):
    if B is None:
        return 0.0
    return nz.apply_diffusion(B, t, frozen, dw)


def step_regularized(p, grid, B, u_n, t_n, dw_n, cfg, frozen=None):
    """(I - tau lam Laplacian) u_{n+1} = u_n + tau div gamma_lambda(grad u_n) + C_n dW_n.

    ``frozen`` is the field fed to a multiplicative B (defaults to u_n).
    """
    check_stability(cfg, grid)
    return _explicit(p, grid, B, u_n, t_n, dw_n, cfg, u_n if frozen is None else frozen)[0]


def _explicit(p, grid, B, u_n, t_n, dw_n, cfg, frozen, flux=None):
    if flux is None:
        flux = drift_flux(p, cfg.lam, grid, u_n)
    rhs = (1.0 - cfg.tau * cfg.damping) * u_n + cfg.tau * grid.divergence(flux)
    rhs = rhs + _noise_term(B, t_n, frozen, dw_n)
    return grid.solve_shifted(rhs, cfg.tau * cfg.lam), flux


def _thomas(lower, diag, upper, rhs):
    # batched tridiagonal solve along the last axis
    n = diag.shape[-1]
    c = np.empty_like(diag)
    d = np.empty_like(rhs)
    c[..., 0] = upper[..., 0] / diag[..., 0]
    d[..., 0] = rhs[..., 0] / diag[..., 0]
    for i in range(1, n):
        den = diag[..., i] - lower[..., i - 1] * c[..., i - 1]
        if i < n - 1:
            c[..., i] = upper[..., i] / den
        d[..., i] = (rhs[..., i] - lower[..., i - 1] * d[..., i - 1]) / den
    x = np.empty_like(d)
    x[..., -1] = d[..., -1]
    for i in range(n - 2, -1, -1):
        x[..., i] = d[..., i] - c[..., i] * x[..., i + 1]
    return x


def _implicit_operator(p, grid, u, cfg):
    flux = drift_flux(p, cfg.lam, grid, u)
    return u * (1.0 + cfg.tau * cfg.damping) - cfg.tau * grid.divergence(flux) - cfg.tau * cfg.lam * grid.laplacian(u), flux


def _implicit(p, grid, u_n, rhs, cfg):
    """Newton for u + tau a u - tau div gamma_lambda(grad u) - tau lam Laplacian u = rhs."""
    u = u_n.copy()
    scale = 1.0 + np.sqrt(np.sum(rhs * rhs, axis=grid.axes))
    for it in range(NEWTON_MAX):
        F, flux = _implicit_operator(p, grid, u, cfg)
        F = F - rhs
        res = np.sqrt(np.sum(F * F, axis=grid.axes))
        if np.all(res <= NEWTON_RTOL * scale):
            return u, flux
        D = _flux_derivative(p, grid=grid, lam=cfg.lam, u=u)
        if grid.dim == 1:
            cf = cfg.tau * (D[0] + cfg.lam) / grid.h[0] ** 2
            diag = 1.0 + cfg.tau * cfg.damping + cf[..., :-1] + cf[..., 1:]
            off = -cf[..., 1:-1]
            du = _thomas(off, diag, off, -F)
        else:
            du = np.empty_like(u)
            flat_u = u.reshape((-1,) + grid.shape)
            Ds = [d.reshape((-1,) + d.shape[-2:]) for d in D]
            Fs = F.reshape(flat_u.shape)
            out = du.reshape(flat_u.shape)
            for i in range(flat_u.shape[0]):
                A = _jacobian_2d(grid, [d[i] for d in Ds], cfg)
                out[i] = spla.spsolve(A, -Fs[i].ravel()).reshape(grid.shape)
        u = u + du
    raise NonConvergence("implicit reference step: Newton did not converge",
                         residual=float(np.max(res / scale)), iterations=NEWTON_MAX)


def _jacobian_2d(grid, D, cfg):
    idx = np.arange(grid.size).reshape(grid.shape)
    rows, cols, vals = [], [], []
    diag = np.full(grid.shape, 1.0 + cfg.tau * cfg.damping)
    for a, (d, h) in enumerate(zip(D, grid.h)):
        c = cfg.tau * (d + cfg.lam) / h ** 2
        lo = [slice(None)] * 2
        hi = [slice(None)] * 2
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        diag += c[tuple(lo)] + c[tuple(hi)]
        inner = [slice(None)] * 2
        inner[a] = slice(1, -1)
        ci = c[tuple(inner)]
        left = [slice(None)] * 2
        left[a] = slice(0, -1)
        right = [slice(None)] * 2
        right[a] = slice(1, None)
        i0, i1 = idx[tuple(left)].ravel(), idx[tuple(right)].ravel()
        rows += [i0, i1]
        cols += [i1, i0]
        vals += [-ci.ravel(), -ci.ravel()]
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(grid.size, grid.size))


# ---------------------------------------------------------------------------
# trajectories


@dataclass(eq=False)
class SolutionPath:
    """A batch of trajectories on shared configuration.

    ``fields[n]`` is u at t_n for every path; ``drift_flux[a][n]`` holds
    gamma_lambda(grad u_n) on the faces of axis a. ``frozen`` is the field path
    that was fed to a multiplicative operator (None means u itself).
    """

    grid: object
    potential: object
    config: SolverConfig
    fields: np.ndarray
    drift_flux: Optional[tuple]
    noise: Optional[nz.NoisePath]
    diffusion: Optional[nz.DiffusionOperator]
    frozen: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def steps(self):
        return self.fields.shape[0] - 1

    @property
    def paths(self):
        return self.fields.shape[1]

    @property
    def tau(self):
        return self.config.tau

    @property
    def times(self):
        return self.tau * np.arange(self.steps + 1)

    def require_flux(self):
        if self.drift_flux is None:
            raise MissingFlux("path does not carry recorded drift fluxes")
        return self.drift_flux

    def step_flux(self, n):
        """The full discrete flux applied over [t_n, t_{n+1}]."""
        flux = self.require_flux()
        k = n if self.config.scheme == "explicit-drift" else n + 1
        g = self.grid.gradient(self.fields[n + 1])
        return tuple(f[k] + self.config.lam * ga for f, ga in zip(flux, g))

    def noise_input(self, n):
        """Field fed to the diffusion coefficient at step n."""
        return self.fields[n] if self.frozen is None else self.frozen[n]

    def select(self, idx):
        idx = np.atleast_1d(np.arange(self.paths)[idx])
        return replace(
            self,
            fields=self.fields[:, idx],
            drift_flux=None if self.drift_flux is None else tuple(f[:, idx] for f in self.drift_flux),
            noise=None if self.noise is None else self.noise.select(idx),
            frozen=None if self.frozen is None else self.frozen[:, idx],
        )

    def truncate(self, steps):
        """The same paths restricted to [0, steps * tau]."""
        cfg = replace(self.config, T=steps * self.tau)
        noise = self.noise
        if noise is not None:
            noise = nz.NoisePath(noise.increments[:, :steps], noise.tau, noise.seed, noise.path_ids)
        return replace(
            self, config=cfg, fields=self.fields[: steps + 1],
            drift_flux=None if self.drift_flux is None else tuple(f[: steps + 1] for f in self.drift_flux),
            noise=noise, frozen=None if self.frozen is None else self.frozen[: steps + 1],
        )


def _batch_u0(grid, u0, paths):
    u0 = np.asarray(u0, dtype=float)
    if u0.shape == grid.shape:
        u0 = np.broadcast_to(u0, (paths,) + grid.shape)
    if u0.shape != (paths,) + grid.shape:
        raise ValueError(f"initial datum must have shape {grid.shape} or {(paths,) + grid.shape}")
    return np.array(u0, dtype=float)


def _effective_operator(B, cfg, grid):
    if B is None or cfg.epsilon == 0:
        return B
    return nz.mollify(B, cfg.epsilon, cfg.resolved_m(grid.dim))


def integrate(p, grid, B, u0, cfg, noise=None, frozen=None, paths=None, record_flux=True):
    """Run the configured scheme on all paths.

    B may be None (deterministic) or a diffusion operator; with a
    multiplicative B the coefficient is evaluated at ``frozen[n]`` if given,
    otherwise at the current state (direct Euler-Maruyama).
    """
    check_stability(cfg, grid)
    N = cfg.steps
    if noise is not None:
        if noise.steps != N or not math.isclose(noise.tau, cfg.tau, rel_tol=1e-12):
            raise ValueError("noise path does not match (steps, tau) of the configuration")
        paths = noise.paths
    paths = 1 if paths is None else paths
    Beff = _effective_operator(B, cfg, grid) if noise is not None else None
    u = _batch_u0(grid, u0, paths)
    fields = np.empty((N + 1,) + u.shape)
    fields[0] = u
    fluxes = None
    flux = drift_flux(p, cfg.lam, grid, u)
    if record_flux:
        fluxes = tuple(np.empty((N + 1,) + f.shape) for f in flux)
        for rec, f in zip(fluxes, flux):
            rec[0] = f
    for n in range(N):
        t = n * cfg.tau
        dw = None if Beff is None else noise.increments[:, n]
        arg = u if frozen is None else frozen[n]
        if cfg.scheme == "explicit-drift":
            u, _ = _explicit(p, grid, Beff, u, t, dw, cfg, arg, flux=flux)
            flux = drift_flux(p, cfg.lam, grid, u)
        else:
            rhs = u + _noise_term(Beff, t, arg, dw)
            u, flux = _implicit(p, grid, u, rhs, cfg)
        if not np.all(np.isfinite(u)):
            raise NonConvergence(f"non-finite state at step {n + 1}", iterations=n + 1)
        fields[n + 1] = u
        if record_flux:
            for rec, f in zip(fluxes, flux):
                rec[n + 1] = f
    return SolutionPath(grid, p, cfg, fields, fluxes, noise, Beff, frozen)


def solve_additive(p, grid, B, u0, cfg, noise=None, paths=None, record_flux=True):
    if B is not None and B.kind != "additive":
        raise ValueError("solve_additive needs an additive operator")
    return integrate(p, grid, B, u0, cfg, noise, paths=paths, record_flux=record_flux)


def solve_direct(p, grid, B, u0, cfg, noise, record_flux=True):
    """Euler-Maruyama with the coefficient at the current state; the Picard fixed point."""
    return integrate(p, grid, B, u0, cfg, noise, record_flux=record_flux)


# ---------------------------------------------------------------------------
# Picard loop


def default_alpha(B):
    return 4.0 * nz.hs_lipschitz_constant(B) ** 2


def e_alpha_distance(v, w, tau, alpha):
    """Per-path sum_{n>=1} tau e^{-2 alpha t_n} sum_x (v_n - w_n)^2 for (N+1, P, ...) paths.

    Multiply by the cell volume and average over paths for the squared E_alpha distance.
    """
    d = v[1:] - w[1:]
    axes = tuple(range(2, d.ndim))
    sq = np.sum(d * d, axis=axes)
    weights = tau * np.exp(-2.0 * alpha * tau * np.arange(1, v.shape[0]))
    per_path = (weights[:, None] * sq).sum(axis=0)
    return per_path


@dataclass(eq=False)
class PicardResult:
    path: SolutionPath
    picard_iters: int
    distances: list
    contraction_ratios: list
    alpha: float


def solve_multiplicative(p, grid, B, u0, cfg, noise, init=None, record_flux=True):
    """Picard iteration v^{k+1} = Gamma(v^k) in E_alpha on fixed noise.

    Each sweep freezes the previous iterate in B and integrates the resulting
    additive equation. ``init`` is the starting path (N+1, P, ...) or a field;
    defaults to u0 held constant in time.
    """
    if B.kind != "multiplicative":
        raise ValueError("solve_multiplicative needs a multiplicative operator")
    alpha = default_alpha(B) if cfg.alpha is None else float(cfg.alpha)
    N, P = cfg.steps, noise.paths
    u0b = _batch_u0(grid, u0, P)
    if init is None:
        v = np.broadcast_to(u0b, (N + 1,) + u0b.shape).copy()
    else:
        init = np.asarray(init, dtype=float)
        v = np.broadcast_to(init, (N + 1,) + u0b.shape).copy() if init.ndim <= u0b.ndim else init.copy()
    distances, ratios = [], []
    stalls = 0
    for k in range(1, cfg.picard_max + 1):
        path = integrate(p, grid, B, u0b, cfg, noise, frozen=v, record_flux=record_flux)
        d = math.sqrt(math.fsum(e_alpha_distance(path.fields, v, cfg.tau, alpha) * grid.cell_volume) / P)
        if distances:
            prev = distances[-1]
            ratios.append(d / prev if prev > 0 else 0.0)
            stalls = stalls + 1 if d >= prev else 0
        distances.append(d)
        v = path.fields
        if d <= cfg.picard_tol:
            path.meta.update(picard_iters=k, alpha=alpha)
            return PicardResult(path, k, distances, ratios, alpha)
        if stalls >= 3:
            raise PicardDivergence("Picard distances failed to decrease for 3 consecutive sweeps",
                                   distances, alpha)
    raise NonConvergence("Picard iteration budget exhausted", residual=distances[-1],
                         iterations=cfg.picard_max)


# ---------------------------------------------------------------------------
# diagnostics of the solution class


@dataclass(frozen=True)
class KappaDiagnostics:
    sup_l2_sq: np.ndarray
    int_w11: np.ndarray
    int_abs_gamma: np.ndarray
    int_k_plus_kstar: np.ndarray
    int_kres_plus_kstar: np.ndarray
    int_pluto_rhs: np.ndarray


def kappa_diagnostics(path, p=None):
    """Per-path discrete versions of the integrals defining the solution class.

    Time integrals are left Riemann sums over n = 0..N-1. ``int_kres_plus_kstar``
    uses k at the resolvent point J_lambda(grad u) and equals ``int_pluto_rhs``
    (the integral of gamma_lambda.grad u - lambda |gamma_lambda|^2) exactly.
    """
    path.require_flux()
    p = path.potential if p is None else p
    g, lam, tau = path.grid, path.config.lam, path.tau
    u = path.fields
    l2sq = np.sum(u * u, axis=g.axes) * g.cell_volume
    w11 = norms(g, u[:-1]).w11
    acc = {k: 0.0 for k in ("abs", "kk", "kres", "rhs")}
    for n in range(path.steps):
        vecs, gams = flux_vectors(p, lam, g, u[n])
        absg, kk, kres, rhs = [], [], [], []
        for x, y in zip(vecs, gams):
            ks = conjugate(p, y)
            J = x - lam * y
            absg.append(np.sqrt(np.sum(y * y, axis=-1)))
            kk.append(p.k(x) + ks)
            kres.append(p.k(J) + ks)
            rhs.append(np.sum(y * x, axis=-1) - lam * np.sum(y * y, axis=-1))
        acc["abs"] = acc["abs"] + tau * g.face_integral(absg)
        acc["kk"] = acc["kk"] + tau * g.face_integral(kk)
        acc["kres"] = acc["kres"] + tau * g.face_integral(kres)
        acc["rhs"] = acc["rhs"] + tau * g.face_integral(rhs)
    zero = np.zeros(path.paths)
    return KappaDiagnostics(
        sup_l2_sq=l2sq.max(axis=0),
        int_w11=tau * w11.sum(axis=0) if path.steps else zero,
        int_abs_gamma=acc["abs"] + zero,
        int_k_plus_kstar=acc["kk"] + zero,
        int_kres_plus_kstar=acc["kres"] + zero,
        int_pluto_rhs=acc["rhs"] + zero,
    )
