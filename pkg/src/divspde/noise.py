"""Truncated cylindrical Wiener noise on the discrete sine basis.

The basis functions e_j are the Dirichlet-Laplacian eigenvectors sampled on the
grid, scaled so that they are exactly orthonormal in the discrete L^2 product.
Increments come from a counter-based generator (Philox) keyed by (seed, path),
so any subset of paths can be regenerated independently and in any order.
"""

import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .grid import Grid

SEED_MASK = (1 << 64) - 1


def default_modes(grid):
    return min(grid.size, 16)


def default_m(dim):
    # smallest integer m > 1/2 + n/4
    return int(math.floor(0.5 + dim / 4.0)) + 1


@dataclass(frozen=True, eq=False)
class WienerConfig:
    grid: Grid
    modes: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        modes = default_modes(self.grid) if self.modes is None else int(self.modes)
        if not 1 <= modes <= self.grid.size:
            raise ValueError(f"modes must lie in [1, {self.grid.size}]")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "seed", int(self.seed) & SEED_MASK)

    @cached_property
    def mode_index(self):
        """Per-axis wave numbers of the M lowest Laplacian modes, shape (M, dim)."""
        mu = self.grid.laplacian_eigenvalues()
        order = np.argsort(mu, axis=None, kind="stable")[: self.modes]
        return np.stack(np.unravel_index(order, self.grid.shape), axis=-1) + 1

    @cached_property
    def eigenvalues(self):
        mu = self.grid.laplacian_eigenvalues()
        return mu[tuple((self.mode_index - 1).T)]

    @cached_property
    def basis(self):
        g = self.grid
        out = np.ones((self.modes,) + g.shape)
        for a, (x, L) in enumerate(zip(g.coords(), g.extent)):
            shape = [1] * g.dim
            shape[a] = g.nodes[a]
            k = self.mode_index[:, a].reshape((-1,) + (1,) * g.dim)
            out = out * np.sqrt(2.0 / L) * np.sin(k * np.pi * x.reshape(shape) / L)
        return out

    @cached_property
    def sup_norms(self):
        return np.max(np.abs(self.basis), axis=tuple(range(1, self.grid.dim + 1)))


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Increments dW[p, n, j] ~ N(0, tau), one row per path."""

    increments: np.ndarray
    tau: float
    seed: int
    path_ids: tuple

    @property
    def paths(self):
        return self.increments.shape[0]

    @property
    def steps(self):
        return self.increments.shape[1]

    @property
    def modes(self):
        return self.increments.shape[2]

    def coarsen(self, factor):
        """Sum blocks of ``factor`` consecutive increments: the same Brownian path at step factor*tau."""
        factor = int(factor)
        if factor < 1 or self.steps % factor:
            raise ValueError("factor must divide the number of steps")
        inc = self.increments.reshape(self.paths, self.steps // factor, factor, self.modes).sum(axis=2)
        return NoisePath(inc, self.tau * factor, self.seed, self.path_ids)

    def select(self, idx):
        idx = np.atleast_1d(np.arange(self.paths)[idx])
        return NoisePath(self.increments[idx], self.tau, self.seed,
                         tuple(self.path_ids[i] for i in idx))

    def dump(self, path):
        """Binary dump: one JSON header line, then float64 little-endian (path, step, mode) row-major."""
        header = {"tau": self.tau, "seed": self.seed, "path_ids": list(self.path_ids),
                  "shape": list(self.increments.shape), "dtype": "<f8"}
        with open(path, "wb") as fh:
            fh.write(json.dumps(header).encode() + b"\n")
            fh.write(np.ascontiguousarray(self.increments, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            header = json.loads(fh.readline())
            data = np.frombuffer(fh.read(), dtype=header["dtype"])
        inc = data.reshape(header["shape"]).astype(float)
        return cls(inc, float(header["tau"]), int(header["seed"]), tuple(header["path_ids"]))


def path_generator(seed, path_id):
    return np.random.Generator(np.random.Philox(key=[int(seed) & SEED_MASK, int(path_id) & SEED_MASK]))


def sample_increments(cfg, steps, tau, paths=1, first_path=0):
    if steps < 1 or not tau > 0:
        raise ValueError("need steps >= 1 and tau > 0")
    ids = tuple(range(int(first_path), int(first_path) + int(paths)))
    inc = np.empty((len(ids), steps, cfg.modes))
    scale = math.sqrt(tau)
    for i, pid in enumerate(ids):
        inc[i] = path_generator(cfg.seed, pid).standard_normal((steps, cfg.modes)) * scale
    return NoisePath(inc, float(tau), cfg.seed, ids)


# ---------------------------------------------------------------------------
# diffusion operators


SIGMA_KINDS = {
    "clipped": lambda s: np.clip(s, -1.0, 1.0),
    "tanh": np.tanh,
    "affine": lambda s: s,
}

TIME_PROFILES = {
    "constant": lambda t: 1.0,
    "exp_decay": lambda t: math.exp(-t),
    "sin": lambda t: 1.0 + 0.5 * math.sin(2.0 * math.pi * t),
}


def decay_weights(modes, q_decay=1.1, scale=1.0):
    return scale * np.arange(1, modes + 1, dtype=float) ** (-q_decay)


@dataclass(frozen=True, eq=False)
class DiffusionOperator:
    """Additive G(t) e_j = f(t) q_j e_j or multiplicative (B(u) e_j)(x) = sigma(u(x)) q_j e_j(x).

    A positive ``epsilon`` composes with (I - epsilon Laplacian)^{-m} on the left.
    """

    kind: str
    wiener: WienerConfig
    weights: np.ndarray
    sigma: Optional[Callable] = None
    lipschitz: float = 0.0
    time_profile: Callable = TIME_PROFILES["constant"]
    epsilon: float = 0.0
    m: int = 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("additive", "multiplicative"):
            raise ValueError(f"unknown diffusion kind {self.kind!r}")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.wiener.modes,):
            raise ValueError("need one weight per mode")
        object.__setattr__(self, "weights", w)
        if self.kind == "multiplicative" and self.sigma is None:
            raise ValueError("multiplicative operator needs sigma")

    @property
    def grid(self):
        return self.wiener.grid

    @cached_property
    def filter(self):
        """Diagonal action of the mollifier on the basis."""
        if self.epsilon == 0:
            return np.ones(self.wiener.modes)
        return (1.0 + self.epsilon * self.wiener.eigenvalues) ** (-self.m)

    @cached_property
    def weighted_sq(self):
        # sum_j q_j^2 e_j^2, the pointwise density of the unmollified HS norm
        return np.tensordot(self.weights ** 2, self.wiener.basis ** 2, axes=1)

    def spec(self):
        return {"kind": self.kind, **self.params, "epsilon": self.epsilon, "m": self.m}


def additive(wiener, weights=None, q_decay=1.1, scale=1.0, time_profile="constant"):
    if weights is None:
        weights = decay_weights(wiener.modes, q_decay, scale)
    return DiffusionOperator("additive", wiener, weights, time_profile=TIME_PROFILES[time_profile],
                             params={"q_decay": q_decay, "scale": scale, "time_profile": time_profile})


def multiplicative(wiener, sigma_kind="tanh", L_B=1.0, sigma0=0.0, weights=None, q_decay=1.1, scale=1.0):
    if sigma_kind not in SIGMA_KINDS:
        raise ValueError(f"unknown sigma kind {sigma_kind!r}")
    if weights is None:
        weights = decay_weights(wiener.modes, q_decay, scale)
    f = SIGMA_KINDS[sigma_kind]
    sigma = lambda s: sigma0 + L_B * f(s)
    return DiffusionOperator("multiplicative", wiener, weights, sigma=sigma, lipschitz=abs(L_B),
                             params={"sigma_kind": sigma_kind, "L_B": L_B, "sigma0": sigma0,
                                     "q_decay": q_decay, "scale": scale})


def mollify(B, epsilon, m=None):
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    m = default_m(B.grid.dim) if m is None else int(m)
    if m < 1:
        raise ValueError("m must be a positive integer")
    return replace(B, epsilon=float(epsilon), m=m)


def c_basis(B):
    """sqrt(sum_j q_j^2 |e_j|_inf^2): HS norm of u -> (u q_j e_j)_j from L^2, as an upper bound."""
    return float(np.sqrt(np.sum(B.weights ** 2 * B.wiener.sup_norms ** 2)))


def hs_lipschitz_constant(B):
    return B.lipschitz * c_basis(B) if B.kind == "multiplicative" else 0.0


def _smooth(B, f):
    if B.epsilon == 0:
        return f
    return B.grid.solve_shifted(f, B.epsilon, B.m)


def apply_diffusion(B, t, u, dw):
    """sum_j (B(t, u) e_j) dW_j for batched u (..., *shape) and dw (..., M)."""
    dw = np.asarray(dw, dtype=float)
    basis = B.wiener.basis
    if B.kind == "additive":
        coef = B.time_profile(t) * B.weights * B.filter * dw
        return np.tensordot(coef, basis, axes=1)
    raw = np.tensordot(B.weights * dw, basis, axes=1)
    return _smooth(B, B.sigma(np.asarray(u, dtype=float)) * raw)


def components(B, t, u):
    """The mode images B(t, u) e_j, shape (..., M, *shape)."""
    basis = B.wiener.basis
    if B.kind == "additive":
        coef = B.time_profile(t) * B.weights * B.filter
        return coef.reshape((-1,) + (1,) * B.grid.dim) * basis
    s = B.sigma(np.asarray(u, dtype=float))
    s = np.expand_dims(s, axis=s.ndim - B.grid.dim)
    qe = B.weights.reshape((-1,) + (1,) * B.grid.dim) * basis
    return _smooth(B, s * qe)


def hs_norm_sq(B, t, u=None):
    g = B.grid
    if B.kind == "additive":
        return B.time_profile(t) ** 2 * float(np.sum((B.weights * B.filter) ** 2))
    u = np.asarray(u, dtype=float)
    if B.epsilon == 0:
        return g.inner(B.sigma(u) ** 2, B.weighted_sq)
    c = components(B, t, u)
    return np.sum(c * c, axis=tuple(range(c.ndim - g.dim - 1, c.ndim))) * g.cell_volume


def hs_distance_sq(B1, B2, t, u1=None, u2=None):
    """|B1(t, u1) - B2(t, u2)|_HS^2 with both operators on the same basis."""
    g = B1.grid
    u1 = g.zeros() if u1 is None else u1
    u2 = g.zeros() if u2 is None else u2
    d = components(B1, t, u1) - components(B2, t, u2)
    return np.sum(d * d, axis=tuple(range(d.ndim - g.dim - 1, d.ndim))) * g.cell_volume


@dataclass(frozen=True)
class IsometryCheck:
    lhs: float
    rhs: float
    rel_err: float


def ito_isometry_check(B, cfg, paths, steps, tau, u=None, chunk=2000, first_path=0):
    """Monte Carlo E|sum_n B(t_n, u) dW_n|^2 against sum_n tau |B(t_n, u)|_HS^2 with frozen u."""
    if paths < 100:
        raise ValueError("need at least 100 paths")
    g = B.grid
    u = g.zeros() if u is None else np.asarray(u, dtype=float)
    rhs = math.fsum(tau * float(hs_norm_sq(B, n * tau, u)) for n in range(steps))
    parts = []
    for start in range(0, paths, chunk):
        cnt = min(chunk, paths - start)
        noise = sample_increments(cfg, steps, tau, cnt, first_path + start)
        total = 0.0
        for n in range(steps):
            total = total + apply_diffusion(B, n * tau, u, noise.increments[:, n])
        parts.extend(np.sum(total * total, axis=g.axes) * g.cell_volume)
    lhs = math.fsum(parts) / paths
    if rhs == 0:
        rel = 0.0 if lhs == 0 else math.inf
    else:
        rel = abs(lhs - rhs) / rhs
    return IsometryCheck(lhs, rhs, rel)
