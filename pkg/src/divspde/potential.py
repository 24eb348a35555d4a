"""Convex potentials k: R^n -> R_+ with gradient gamma, conjugate k*, and their
Yosida / Moreau regularizations.

All point arguments are arrays whose last axis has length ``p.dim``; leading axes
are batch axes and every operation is vectorized over them.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import lambertw

from .errors import NonConvergence

RTOL = 1e-10
MAX_NEWTON = 100
MAX_BISECT = 200
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class RadialProfile:
    """Scalar profile phi on [0, inf); a radial potential is k(x) = phi(|x|)."""

    name: str
    phi: Callable
    dphi: Callable
    d2phi: Callable
    conj: Optional[Callable] = None
    # (r, lam) -> s with s + lam * dphi(s) = r
    prox: Optional[Callable] = None


@dataclass(frozen=True, eq=False)
class Potential:
    dim: int
    eval_k: Callable
    eval_gamma: Callable
    conjugate_closed_form: Optional[Callable] = None
    resolvent_closed_form: Optional[Callable] = None
    hessian: Optional[Callable] = None
    asymmetry_bound: float = 1.0
    name: str = "custom"
    params: dict = field(default_factory=dict)
    radial: Optional[RadialProfile] = None
    components: Optional[tuple] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.asymmetry_bound < 1.0:
            raise ValueError("asymmetry_bound must be >= 1")

    def k(self, x):
        return self.eval_k(_points(self, x))

    def gamma(self, x):
        return self.eval_gamma(_points(self, x))

    def spec(self):
        return {"kind": self.name, **self.params}


@dataclass(frozen=True, eq=False)
class RegularizedPotential:
    """The pair (k, lambda) with accessors for gamma_lambda, k_lambda and J_lambda."""

    base: Potential
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")

    def resolvent(self, x):
        return resolvent(self.base, self.lam, x)

    def gamma(self, x):
        return yosida(self.base, self.lam, x)

    def k(self, x):
        return moreau(self.base, self.lam, x)


def _points(p, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != p.dim:
        raise ValueError(f"expected points with trailing axis {p.dim}, got shape {x.shape}")
    return x


def _norm(x):
    with np.errstate(over="ignore"):
        return np.sqrt(np.sum(x * x, axis=-1))


def _unit(x, r):
    with np.errstate(invalid="ignore", divide="ignore"):
        u = x / r[..., None]
    return np.where(r[..., None] > 0, u, 0.0)


# ---------------------------------------------------------------------------
# scalar monotone solves


def solve_increasing(fun, dfun, target, lo, hi, rtol=RTOL, max_newton=MAX_NEWTON,
                     max_bisect=MAX_BISECT, what="monotone equation"):
    """Solve fun(s) = target elementwise for nondecreasing fun with fun(lo) <= target <= fun(hi).

    Safeguarded Newton: a Newton step is taken when it stays strictly inside the
    current bracket and at least halves the previous step, otherwise bisect. After
    ``max_newton`` sweeps only bisection is used. Converged when
    |fun(s) - target| <= rtol (1 + |target|) or when the bracket has collapsed to
    a few ulps; a last in-bracket Newton step then polishes the root.
    """
    target = np.asarray(target, dtype=float)
    shape = target.shape
    lo = np.array(np.broadcast_to(lo, shape), dtype=float)
    hi = np.array(np.broadcast_to(hi, shape), dtype=float)
    tol = rtol * (1.0 + np.abs(target))
    s = hi.copy()
    dx_old = hi - lo
    done = np.zeros(shape, dtype=bool)
    val = np.zeros(shape)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for it in range(max_newton + max_bisect):
            val = fun(s) - target
            done = done | (np.abs(val) <= tol) | ((hi - lo) <= 4 * _EPS * np.abs(s))
            if done.all():
                # one polishing Newton step takes a 1e-10 residual to rounding level
                step = s - val / dfun(s)
                keep = np.isfinite(step) & (step >= lo) & (step <= hi)
                return np.where(keep, step, s)
            too_big = (val > 0) | np.isnan(val)
            hi = np.where(~done & too_big, s, hi)
            lo = np.where(~done & (val < 0), s, lo)
            mid = 0.5 * (lo + hi)
            if it < max_newton:
                step = s - val / dfun(s)
                ok = (np.isfinite(step) & (step > lo) & (step < hi)
                      & (np.abs(step - s) <= 0.5 * np.abs(dx_old)))
                new = np.where(ok, step, mid)
            else:
                new = mid
            dx_old = np.where(done, dx_old, new - s)
            s = np.where(done, s, new)
    bad = ~done
    resid = float(np.nanmax(np.abs(val[bad]))) if bad.any() else float("nan")
    raise NonConvergence(f"{what}: {int(bad.sum())} points unconverged", residual=resid,
                         iterations=max_newton + max_bisect)


def _radial_prox(profile, lam, r, rtol=RTOL):
    if profile.prox is not None:
        return profile.prox(r, lam)
    return solve_increasing(lambda s: s + lam * profile.dphi(s),
                            lambda s: 1.0 + lam * profile.d2phi(s),
                            r, 0.0, r, rtol=rtol, what="resolvent")


def _invert_dphi(profile, t, rtol=RTOL):
    """s >= 0 with dphi(s) = t, for t >= 0."""
    t = np.asarray(t, dtype=float)
    if not np.isfinite(t).all():
        raise NonConvergence("conjugate: |y| overflows", residual=float("inf"))
    hi = np.maximum(1.0, t)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(2100):
            short = ~(profile.dphi(hi) >= t)
            if not short.any():
                break
            hi = np.where(short, 2.0 * hi, hi)
            if not np.isfinite(hi[short]).all():
                raise NonConvergence("conjugate: target outside the representable range of gamma",
                                     residual=float(np.max(t[short])))
    return solve_increasing(profile.dphi, profile.d2phi, t, 0.0, hi, rtol=rtol,
                            what="conjugate (gamma(r) = y)")


# ---------------------------------------------------------------------------
# built-in radial profiles


def p_power_profile(p):
    if not p > 1:
        raise ValueError("p-power potential needs p > 1")
    q = p / (p - 1.0)

    def d2phi(s):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (p - 1.0) * np.power(s, p - 2.0)

    prox = None
    if p == 2.0:
        prox = lambda r, lam: r / (1.0 + lam)
    elif p == 3.0:
        # lam s^2 + s - r = 0, rationalized root
        prox = lambda r, lam: 2.0 * r / (1.0 + np.sqrt(1.0 + 4.0 * lam * r))
    return RadialProfile(
        name=f"p_power({p:g})",
        phi=lambda s: np.power(s, p) / p,
        dphi=lambda s: np.power(s, p - 1.0),
        d2phi=d2phi,
        conj=lambda t: np.power(t, q) / q,
        prox=prox,
    )


def _cosh_conj(t):
    # t asinh t - (sqrt(1+t^2) - 1), cancellation-free near 0
    return t * np.arcsinh(t) - t * t / (np.sqrt(1.0 + t * t) + 1.0)


def cosh_profile():
    return RadialProfile(
        name="cosh",
        phi=lambda s: 2.0 * np.sinh(0.5 * s) ** 2,
        dphi=np.sinh,
        d2phi=np.cosh,
        conj=_cosh_conj,
    )


def _exp_conj(t):
    t = np.asarray(t, dtype=float)
    # phi'(s) = s exp(s^2/2) = t  <=>  s^2 = W(t^2)
    s = np.sqrt(np.real(lambertw(t * t)))
    return t * s - np.expm1(0.5 * s * s)


def exp_profile():
    return RadialProfile(
        name="exp_quadratic",
        phi=lambda s: np.expm1(0.5 * s * s),
        dphi=lambda s: s * np.exp(0.5 * s * s),
        d2phi=lambda s: (1.0 + s * s) * np.exp(0.5 * s * s),
        conj=_exp_conj,
    )


def radial_potential(profile, dim, name=None, params=None):
    def k(x):
        return profile.phi(_norm(x))

    def gamma(x):
        r = _norm(x)
        with np.errstate(over="ignore"):
            return profile.dphi(r)[..., None] * _unit(x, r)

    def hess(x):
        r = _norm(x)
        u = _unit(x, r)
        d2 = profile.d2phi(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            tang = np.where(r > 0, profile.dphi(r) / r, d2)
        eye = np.eye(dim)
        uu = u[..., :, None] * u[..., None, :]
        return d2[..., None, None] * uu + tang[..., None, None] * (eye - uu)

    conj = None
    if profile.conj is not None:
        conj = lambda y: profile.conj(_norm(y))
    res = None
    if profile.prox is not None:
        def res(x, lam):
            r = _norm(x)
            return profile.prox(r, lam)[..., None] * _unit(x, r)
    return Potential(dim=dim, eval_k=k, eval_gamma=gamma, conjugate_closed_form=conj,
                     resolvent_closed_form=res, hessian=hess, name=name or profile.name,
                     params=dict(params or {}), radial=profile)


def separable_potential(profiles, name="anisotropic", params=None):
    """k(x) = sum_i phi_i(|x_i|)."""
    profiles = tuple(profiles)
    dim = len(profiles)

    def k(x):
        return sum(pr.phi(np.abs(x[..., i])) for i, pr in enumerate(profiles))

    def gamma(x):
        return np.stack([pr.dphi(np.abs(x[..., i])) * np.sign(x[..., i])
                         for i, pr in enumerate(profiles)], axis=-1)

    def hess(x):
        d = np.stack([pr.d2phi(np.abs(x[..., i])) for i, pr in enumerate(profiles)], axis=-1)
        return d[..., :, None] * np.eye(dim)

    conj = None
    if all(pr.conj is not None for pr in profiles):
        conj = lambda y: sum(pr.conj(np.abs(y[..., i])) for i, pr in enumerate(profiles))
    res = None
    if all(pr.prox is not None for pr in profiles):
        def res(x, lam):
            return np.stack([pr.prox(np.abs(x[..., i]), lam) * np.sign(x[..., i])
                             for i, pr in enumerate(profiles)], axis=-1)
    return Potential(dim=dim, eval_k=k, eval_gamma=gamma, conjugate_closed_form=conj,
                     resolvent_closed_form=res, hessian=hess, name=name,
                     params=dict(params or {}), components=profiles)


# ---------------------------------------------------------------------------
# registry

_REGISTRY = {}
_PROFILES = {
    "p_power": lambda spec: p_power_profile(float(spec.get("p", 2.0))),
    "cosh": lambda spec: cosh_profile(),
    "exp_quadratic": lambda spec: exp_profile(),
}


def register_potential(kind):
    """Decorator registering ``factory(spec: dict, dim: int) -> Potential`` under ``kind``."""

    def deco(factory):
        _REGISTRY[kind] = factory
        return factory

    return deco


def registered_kinds():
    return sorted(_REGISTRY)


def make_potential(spec, dim):
    spec = dict(spec)
    kind = spec.get("kind")
    if kind not in _REGISTRY:
        raise KeyError(f"unknown potential kind {kind!r}; known: {registered_kinds()}")
    return _REGISTRY[kind](spec, int(dim))


def _radial_factory(kind):
    def factory(spec, dim):
        params = {k: v for k, v in spec.items() if k != "kind"}
        if kind == "p_power":
            params["p"] = float(params.get("p", 2.0))
        return radial_potential(_PROFILES[kind](spec), dim, name=kind, params=params)

    return factory


for _kind in _PROFILES:
    register_potential(_kind)(_radial_factory(_kind))


@register_potential("anisotropic")
def _anisotropic(spec, dim):
    comps = spec.get("components")
    if not comps:
        # default: p=3 along x, cosh along y (a 1D grid keeps the first)
        comps = [{"kind": "p_power", "p": 3.0}, {"kind": "cosh"}][:dim]
    comps = list(comps)
    if len(comps) == 1:
        comps = comps * dim
    if len(comps) != dim:
        raise ValueError(f"anisotropic potential needs 1 or {dim} components, got {len(comps)}")
    for c in comps:
        if c.get("kind") not in _PROFILES:
            raise KeyError(f"anisotropic component kind {c.get('kind')!r} is not a radial profile")
    profiles = [_PROFILES[c["kind"]](c) for c in comps]
    return separable_potential(profiles, params={"components": [dict(c) for c in comps]})


BUILTIN_SPECS = [
    {"kind": "p_power", "p": 1.5},
    {"kind": "p_power", "p": 2.0},
    {"kind": "p_power", "p": 3.0},
    {"kind": "p_power", "p": 4.0},
    {"kind": "cosh"},
    {"kind": "exp_quadratic"},
    {"kind": "anisotropic"},
]


def strip_closed_forms(p):
    """Same k and gamma, without any closed form or structural shortcut (forces generic Newton)."""
    return Potential(dim=p.dim, eval_k=p.eval_k, eval_gamma=p.eval_gamma,
                     asymmetry_bound=p.asymmetry_bound, name=p.name + "[generic]", params=p.params)


# ---------------------------------------------------------------------------
# derivatives


def fd_hessian(p, x):
    x = _points(p, x)
    h = 1e-6 * (1.0 + _norm(x))
    cols = []
    for j in range(p.dim):
        e = np.zeros(p.dim)
        e[j] = 1.0
        step = h[..., None] * e
        cols.append((p.eval_gamma(x + step) - p.eval_gamma(x - step)) / (2.0 * h[..., None]))
    H = np.stack(cols, axis=-1)
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def _hessian(p, x):
    if p.hessian is not None:
        return p.hessian(x)
    return fd_hessian(p, x)


# ---------------------------------------------------------------------------
# resolvent, Yosida, Moreau


def _check_lam(lam):
    if not lam > 0:
        raise ValueError("lambda must be positive")


def resolvent(p, lam, x, method="auto", rtol=RTOL):
    """(I + lam gamma)^{-1} x, i.e. the minimizer of k(z) + |x - z|^2 / (2 lam).

    ``method``: "auto" uses a closed form if the potential has one, else the
    scalar reduction for radial/separable potentials, else damped Newton;
    "scalar" skips closed forms; "newton" forces the generic Newton path.
    """
    _check_lam(lam)
    x = _points(p, x)
    if method == "auto" and p.resolvent_closed_form is not None:
        return p.resolvent_closed_form(x, lam)
    if method in ("auto", "scalar"):
        if p.radial is not None:
            r = _norm(x)
            s = solve_increasing(lambda s: s + lam * p.radial.dphi(s),
                                 lambda s: 1.0 + lam * p.radial.d2phi(s),
                                 r, 0.0, r, rtol=rtol, what="resolvent")
            return s[..., None] * _unit(x, r)
        if p.components is not None:
            out = []
            for i, pr in enumerate(p.components):
                r = np.abs(x[..., i])
                s = solve_increasing(lambda s, pr=pr: s + lam * pr.dphi(s),
                                     lambda s, pr=pr: 1.0 + lam * pr.d2phi(s),
                                     r, 0.0, r, rtol=rtol, what="resolvent")
                out.append(s * np.sign(x[..., i]))
            return np.stack(out, axis=-1)
    return _newton_resolvent(p, lam, x, rtol)


def _newton_resolvent(p, lam, x, rtol):
    # Newton on y + lam gamma(y) = x with Armijo backtracking on the strongly
    # convex objective k(y) + |x - y|^2/(2 lam)
    flat = x.reshape(-1, p.dim)
    tol = rtol * (1.0 + _norm(flat))
    obj = lambda y: p.eval_k(y) + np.sum((flat - y) ** 2, axis=-1) / (2 * lam)
    with np.errstate(over="ignore", invalid="ignore"):
        y = flat / (1.0 + lam)
        bad_start = ~np.isfinite(obj(y))
        y[bad_start] = 0.0
        eye = np.eye(p.dim)
        for it in range(MAX_NEWTON):
            F = y + lam * p.eval_gamma(y) - flat
            fn = _norm(F)
            if (fn <= tol).all():
                return y.reshape(x.shape)
            J = eye + lam * _hessian(p, y)
            try:
                d = -np.linalg.solve(J, F[..., None])[..., 0]
            except np.linalg.LinAlgError as exc:
                raise NonConvergence("resolvent (Newton): singular Jacobian, gamma is not monotone",
                                     residual=float(np.max(fn)), iterations=it) from exc
            d[fn <= tol] = 0.0
            f0 = obj(y)
            slope = np.sum(F * d, axis=-1) / lam
            t = np.ones(len(y))
            # close to the root the objective cannot resolve the decrease; take full steps
            near = fn <= 1e-5 * (1.0 + _norm(flat))
            for _ in range(60):
                trial = y + t[:, None] * d
                ok = near | (obj(trial) <= f0 + 1e-4 * t * slope)
                if ok.all():
                    break
                t = np.where(ok, t, 0.5 * t)
            y = y + t[:, None] * d
    F = y + lam * p.eval_gamma(y) - flat
    raise NonConvergence("resolvent (Newton): iteration budget exhausted",
                         residual=float(np.nanmax(_norm(F))), iterations=MAX_NEWTON)


def yosida(p, lam, x, method="auto"):
    """gamma_lambda(x) = (x - J_lambda x) / lambda."""
    x = _points(p, x)
    return (x - resolvent(p, lam, x, method=method)) / lam


def moreau(p, lam, x, method="auto"):
    """k_lambda(x), the infimum being attained at the resolvent."""
    x = _points(p, x)
    J = resolvent(p, lam, x, method=method)
    return p.eval_k(J) + np.sum((x - J) ** 2, axis=-1) / (2 * lam)


def yosida_jacobian(p, lam, x):
    """D gamma_lambda(x) = (I - (I + lam D gamma(Jx))^{-1}) / lam, shape (..., n, n)."""
    _check_lam(lam)
    x = _points(p, x)
    J = resolvent(p, lam, x)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if p.radial is not None:
            pr = p.radial
            s = _norm(J)
            u = _unit(x, _norm(x))
            a = 1.0 / (1.0 / pr.d2phi(s) + lam)
            ratio = np.where(s > 0, s / pr.dphi(s), 1.0 / pr.d2phi(s))
            b = 1.0 / (ratio + lam)
            b = np.where(s > 0, b, a)
            uu = u[..., :, None] * u[..., None, :]
            return a[..., None, None] * uu + b[..., None, None] * (np.eye(p.dim) - uu)
        if p.components is not None:
            d = np.stack([1.0 / (1.0 / pr.d2phi(np.abs(J[..., i])) + lam)
                          for i, pr in enumerate(p.components)], axis=-1)
            return d[..., :, None] * np.eye(p.dim)
    H = _hessian(p, J)
    inv = np.linalg.inv(np.eye(p.dim) + lam * H)
    return (np.eye(p.dim) - inv) / lam


# ---------------------------------------------------------------------------
# conjugate and the identities built on it


def conjugate(p, y, method="auto", rtol=RTOL):
    """k*(y) = sup_r (y.r - k(r)).

    ``method``: "auto" prefers the closed form; "scalar" inverts phi' for
    radial/separable potentials; "newton" solves gamma(r) = y by damped Newton.
    """
    y = _points(p, y)
    if method == "auto" and p.conjugate_closed_form is not None:
        return p.conjugate_closed_form(y)
    if method in ("auto", "scalar"):
        if p.radial is not None:
            t = _norm(y)
            s = _invert_dphi(p.radial, t, rtol)
            return t * s - p.radial.phi(s)
        if p.components is not None:
            total = 0.0
            for i, pr in enumerate(p.components):
                t = np.abs(y[..., i])
                s = _invert_dphi(pr, t, rtol)
                total = total + t * s - pr.phi(s)
            return total
    r = _newton_conjugate_point(p, y, rtol)
    return np.sum(y * r, axis=-1) - p.eval_k(r)


def _newton_conjugate_point(p, y, rtol):
    # minimize k(r) - y.r; Newton direction on gamma(r) = y, Armijo on the objective
    flat = y.reshape(-1, p.dim)
    tol = rtol * (1.0 + _norm(flat))
    obj = lambda r: p.eval_k(r) - np.sum(flat * r, axis=-1)
    eye = np.eye(p.dim)
    with np.errstate(over="ignore", invalid="ignore"):
        r = flat.copy()
        bad = ~np.isfinite(obj(r)) | ~np.isfinite(p.eval_gamma(r)).all(axis=-1)
        r[bad] = 0.0
        for it in range(MAX_NEWTON + MAX_BISECT):
            F = p.eval_gamma(r) - flat
            fn = _norm(F)
            conv = fn <= tol
            if conv.all():
                return r.reshape(y.shape)
            H = _hessian(p, r)
            H = np.where(np.isfinite(H), H, 0.0)
            mu = 1e-12 * (1.0 + np.abs(np.trace(H, axis1=-2, axis2=-1)))
            d = -np.linalg.solve(H + mu[:, None, None] * eye, F[..., None])[..., 0]
            d[conv] = 0.0
            f0 = obj(r)
            slope = np.sum(F * d, axis=-1)
            t = np.ones(len(r))
            near = fn <= 1e-5 * (1.0 + _norm(flat))
            for _ in range(80):
                ok = near | (obj(r + t[:, None] * d) <= f0 + 1e-4 * t * slope)
                if ok.all():
                    break
                t = np.where(ok, t, 0.5 * t)
            r = r + t[:, None] * d
    F = p.eval_gamma(r) - flat
    raise NonConvergence("conjugate (Newton): gamma(r) = y unsolved",
                         residual=float(np.nanmax(_norm(F))), iterations=MAX_NEWTON + MAX_BISECT)


def fenchel_young_gap(p, y, r, method="auto"):
    """k(y) + k*(r) - r.y, nonnegative and zero exactly when r = gamma(y)."""
    y = _points(p, y)
    r = _points(p, r)
    return p.eval_k(y) + conjugate(p, r, method=method) - np.sum(r * y, axis=-1)


def pluto_terms(p, lam, x):
    x = _points(p, x)
    J = resolvent(p, lam, x)
    g = (x - J) / lam
    lhs = p.eval_k(J) + conjugate(p, g)
    gx = np.sum(g * x, axis=-1)
    return {"lhs": lhs, "rhs": gx - lam * np.sum(g * g, axis=-1), "upper": gx}


def pluto_identity_residual(p, lam, x):
    """k(J x) + k*(gamma_lambda x) - (gamma_lambda(x).x - lam |gamma_lambda(x)|^2)."""
    _check_lam(lam)
    t = pluto_terms(p, lam, x)
    return t["lhs"] - t["rhs"]


def truncate(R, x):
    """Radial truncation onto the closed ball of radius R."""
    if not R > 0:
        raise ValueError("R must be positive")
    x = np.asarray(x, dtype=float)
    r = _norm(x)
    scale = np.where(r > R, R / np.where(r > 0, r, 1.0), 1.0)
    return x * scale[..., None]


# ---------------------------------------------------------------------------
# structural checks used when registering user potentials


def check_potential(p, samples, radii=(1.0, 2.0, 4.0, 8.0)):
    """Count violations of the standing assumptions on sampled points.

    Returns a dict of counts; all zero means the samples are consistent with a
    convex, nonnegative, superlinear k with k(0) = 0 and monotone gamma.
    """
    x = _points(p, samples)
    n = len(x)
    y = np.roll(x, 1, axis=0)
    k0 = float(p.eval_k(np.zeros(p.dim)))
    kx, ky = p.eval_k(x), p.eval_k(y)
    scale = 1.0 + np.abs(kx) + np.abs(ky)
    mono = np.sum((p.eval_gamma(x) - p.eval_gamma(y)) * (x - y), axis=-1)
    nx = _norm(x)
    unit = _unit(x, nx)[nx > 0]
    slopes = np.stack([p.eval_k(R * unit) / R for R in radii])
    with np.errstate(over="ignore", invalid="ignore"):
        sym = p.eval_k(-x) / kx
    return {
        "k0": int(abs(k0) > 1e-14),
        "negative": int(np.sum(kx < -1e-14)),
        "convexity": int(np.sum(p.eval_k(0.5 * (x + y)) > 0.5 * (kx + ky) + 1e-12 * scale)),
        "monotonicity": int(np.sum(mono < -1e-12 * (1 + nx + _norm(y)) ** 2)),
        "superlinearity": int(np.sum(np.diff(slopes, axis=0) < -1e-12)),
        "asymmetry": int(np.sum(np.nan_to_num(sym[nx > 1], nan=0.0) > p.asymmetry_bound * (1 + 1e-12)))
        if n else 0,
    }
