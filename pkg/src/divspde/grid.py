"""Uniform Dirichlet grids on rectangles in 1 or 2 dimensions.

Fields are float arrays whose trailing axes equal ``grid.shape`` (the interior
nodes); any leading axes are batch axes (paths, time steps). A vector field is a
tuple with one array per axis, holding forward differences on the faces along
that axis (``nodes[a] + 1`` entries, boundary faces included).

The divergence is the exact negative adjoint of the gradient, so
<div z, f> = -<z, grad f> holds to rounding for every pair.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.fft import dstn

from .errors import LinearSolveFailure

SOLVE_RTOL = 1e-10
CG_RTOL = 1e-12


@dataclass(frozen=True)
class Grid:
    extent: tuple
    nodes: tuple

    def __post_init__(self):
        extent = tuple(float(e) for e in np.atleast_1d(self.extent))
        nodes = tuple(int(n) for n in np.atleast_1d(self.nodes))
        if len(extent) != len(nodes) or len(nodes) not in (1, 2):
            raise ValueError("grid must have matching extent/nodes of dimension 1 or 2")
        if min(nodes) < 2:
            raise ValueError("need at least 2 interior nodes per axis")
        if min(extent) <= 0:
            raise ValueError("extent must be positive")
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "nodes", nodes)

    @property
    def dim(self):
        return len(self.nodes)

    @property
    def shape(self):
        return self.nodes

    @property
    def size(self):
        return int(np.prod(self.nodes))

    @property
    def h(self):
        return tuple(e / (n + 1) for e, n in zip(self.extent, self.nodes))

    @property
    def h_min(self):
        return min(self.h)

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def axes(self):
        return tuple(range(-self.dim, 0))

    def coords(self):
        """Interior node coordinates per axis."""
        return tuple(h * np.arange(1, n + 1) for h, n in zip(self.h, self.nodes))

    def mesh(self):
        return np.meshgrid(*self.coords(), indexing="ij")

    def face_shape(self, axis):
        s = list(self.nodes)
        s[axis] += 1
        return tuple(s)

    def zeros(self, *batch):
        return np.zeros(tuple(batch) + self.shape)

    # -- difference operators -------------------------------------------------

    def gradient(self, f):
        f = np.asarray(f, dtype=float)
        out = []
        for a, h in enumerate(self.h):
            ax = f.ndim - self.dim + a
            pad = [(0, 0)] * f.ndim
            pad[ax] = (1, 1)
            out.append(np.diff(np.pad(f, pad), axis=ax) / h)
        return tuple(out)

    def divergence(self, z):
        total = 0.0
        for a, (za, h) in enumerate(zip(z, self.h)):
            za = np.asarray(za, dtype=float)
            total = total + np.diff(za, axis=za.ndim - self.dim + a) / h
        return total

    def laplacian(self, f):
        return self.divergence(self.gradient(f))

    # -- inner products and norms ---------------------------------------------

    def inner(self, f, g):
        return np.sum(np.asarray(f) * np.asarray(g), axis=self.axes) * self.cell_volume

    def face_inner(self, z, w):
        return sum(np.sum(za * wa, axis=self.axes) for za, wa in zip(z, w)) * self.cell_volume

    def norm(self, f):
        return np.sqrt(self.inner(f, f))

    def face_vectors(self, grads):
        """Full gradient vectors on each face family.

        Along axis a the own component is exact; transverse components are the
        mean of the four surrounding transverse faces (zero outside the domain).
        Returns a list of arrays shaped (..., *face_shape(a), dim).
        """
        if self.dim == 1:
            return [grads[0][..., None]]
        gx, gy = grads
        # x-faces (n1+1, n2): average y-faces of nodes i and i+1
        gy_pad = np.pad(gy, [(0, 0)] * (gy.ndim - 2) + [(1, 1), (0, 0)])
        gy_at_x = 0.25 * (gy_pad[..., :-1, :-1] + gy_pad[..., :-1, 1:] + gy_pad[..., 1:, :-1] + gy_pad[..., 1:, 1:])
        gx_pad = np.pad(gx, [(0, 0)] * (gx.ndim - 2) + [(0, 0), (1, 1)])
        gx_at_y = 0.25 * (gx_pad[..., :-1, :-1] + gx_pad[..., 1:, :-1] + gx_pad[..., :-1, 1:] + gx_pad[..., 1:, 1:])
        return [np.stack([gx, gy_at_x], axis=-1), np.stack([gx_at_y, gy], axis=-1)]

    def face_integral(self, values):
        """Integral of a pointwise quantity sampled on every face family (mean over families)."""
        return sum(np.sum(v, axis=self.axes) for v in values) * self.cell_volume / self.dim

    # -- spectral structure of the Dirichlet Laplacian --------------------------

    def laplacian_eigenvalues(self):
        """Eigenvalues of -Laplacian indexed like the DST-I coefficients."""
        mu = 0.0
        for a, (h, n) in enumerate(zip(self.h, self.nodes)):
            k = np.arange(1, n + 1)
            m = (4.0 / h**2) * np.sin(k * np.pi / (2 * (n + 1))) ** 2
            shape = [1] * self.dim
            shape[a] = n
            mu = mu + m.reshape(shape)
        return np.broadcast_to(mu, self.shape).copy()

    def to_modes(self, f):
        return dstn(np.asarray(f, dtype=float), type=1, axes=self.axes, norm="ortho")

    def from_modes(self, c):
        return dstn(c, type=1, axes=self.axes, norm="ortho")

    def solve_shifted(self, f, delta, m=1, check=True):
        """(I - delta Laplacian)^{-m} f via the sine transform."""
        f = np.asarray(f, dtype=float)
        if delta == 0:
            return f.copy()
        g = f
        factor = 1.0 / (1.0 + delta * self.laplacian_eigenvalues())
        for _ in range(m):
            rhs = g
            g = self.from_modes(self.to_modes(rhs) * factor)
            if check:
                _check_residual(self, g, rhs, delta)
        return g

    def laplacian_matrix(self):
        """Sparse 5-point (3-point in 1D) Dirichlet Laplacian, node-major (C order)."""
        mats = []
        for h, n in zip(self.h, self.nodes):
            mats.append(sp.diags([np.ones(n - 1), -2 * np.ones(n), np.ones(n - 1)], [-1, 0, 1]) / h**2)
        if self.dim == 1:
            return sp.csr_matrix(mats[0])
        i0, i1 = sp.identity(self.nodes[0]), sp.identity(self.nodes[1])
        return sp.csr_matrix(sp.kron(mats[0], i1) + sp.kron(i0, mats[1]))


def _check_residual(grid, g, f, delta):
    r = g - delta * grid.laplacian(g) - f
    rn = np.sqrt(np.sum(r * r, axis=grid.axes))
    fn = np.sqrt(np.sum(f * f, axis=grid.axes))
    if np.any(rn > SOLVE_RTOL * fn):
        raise LinearSolveFailure("shifted Laplacian solve residual too large",
                                 residual=float(np.max(rn / np.maximum(fn, 1e-300))))


def resolvent_smoother(grid, f, delta, m=1, method="spectral"):
    """(I - delta Laplacian)^{-m} f, an L^2- and L^inf-contraction preserving positivity.

    ``method="cg"`` performs the m solves with Jacobi-preconditioned conjugate
    gradients on the sparse matrix instead of the sine transform.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if int(m) < 1:
        raise ValueError("m must be a positive integer")
    f = np.asarray(f, dtype=float)
    if method == "spectral":
        return grid.solve_shifted(f, delta, int(m))
    if method != "cg":
        raise ValueError(f"unknown method {method!r}")
    A = sp.identity(grid.size, format="csr") - delta * grid.laplacian_matrix()
    dinv = 1.0 / A.diagonal()
    M = spla.LinearOperator(A.shape, matvec=lambda v: dinv * v)
    batch = f.shape[: f.ndim - grid.dim]
    flat = f.reshape((-1, grid.size))
    out = np.empty_like(flat)
    for i, b in enumerate(flat):
        g = b
        for _ in range(int(m)):
            rhs = g
            if not np.any(rhs):
                g = np.zeros_like(rhs)
                continue
            g, info = spla.cg(A, rhs, rtol=CG_RTOL, atol=0.0, M=M, maxiter=10 * grid.size)
            res = np.linalg.norm(A @ g - rhs)
            if info != 0 or res > SOLVE_RTOL * np.linalg.norm(rhs):
                raise LinearSolveFailure("conjugate gradient did not reach tolerance",
                                         residual=res / np.linalg.norm(rhs))
        out[i] = g
    return out.reshape(batch + grid.shape)


class Norms(NamedTuple):
    l2: np.ndarray
    w11: np.ndarray
    h10: np.ndarray
    linf: np.ndarray


def norms(grid, f):
    f = np.asarray(f, dtype=float)
    g = grid.gradient(f)
    vecs = grid.face_vectors(g)
    grad_abs = grid.face_integral([np.sqrt(np.sum(v * v, axis=-1)) for v in vecs])
    return Norms(
        l2=grid.norm(f),
        w11=np.sum(np.abs(f), axis=grid.axes) * grid.cell_volume + grad_abs,
        h10=np.sqrt(grid.face_inner(g, g)),
        linf=np.max(np.abs(f), axis=grid.axes),
    )
