"""Anisotropic integrands F(x, v) and their mollified squares G_delta.

Vectors are passed as arrays of shape ``(..., n)``.  Spatial dependence is a
positive periodic multiplier ``m(x)`` so that ``F(x, v) = m(x) F0(v)`` and
``G_delta(x, v) = m(x)^2 G0_delta(v)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import NdBSpline, make_interp_spline

FAMILIES = ("isotropic", "quadratic", "quartic")
MIN_QUAD_ORDER = 4


class IntegrandError(ValueError):
    pass


@dataclass(frozen=True)
class Modulation:
    """m(x) = 1 + amplitude * cos(2 pi k.x / L + phase)."""

    amplitude: float = 0.0
    wavevector: tuple[int, ...] = (1,)
    phase: float = 0.0

    def __post_init__(self):
        if not 0 <= abs(self.amplitude) < 1:
            raise IntegrandError("modulation amplitude must satisfy |a| < 1")

    def _arg(self, x, lengths):
        x = np.asarray(x, dtype=float)
        k = np.asarray(self.wavevector, dtype=float)
        L = np.asarray(lengths, dtype=float)
        return 2 * np.pi * np.tensordot(x, k / L, axes=([-1], [0])) + self.phase

    def value(self, x, lengths):
        return 1 + self.amplitude * np.cos(self._arg(x, lengths))

    def gradient(self, x, lengths):
        k = np.asarray(self.wavevector, dtype=float)
        L = np.asarray(lengths, dtype=float)
        s = -self.amplitude * np.sin(self._arg(x, lengths))
        return s[..., None] * (2 * np.pi * k / L)


@dataclass(frozen=True, eq=False)
class IntegrandSpec:
    """Anisotropic integrand.

    Parameters
    ----------
    family : 'isotropic', 'quadratic' or 'quartic'
        ``quartic`` is the mixture ``(|v|^4 + beta sum v_i^4)^(1/4)``.
    n : spatial dimension.
    matrix : symmetric positive definite matrix for the quadratic family.
    beta : mixture weight for the quartic family.
    modulation : optional spatial multiplier.
    lengths : torus period lengths used to evaluate the modulation.
    """

    family: str = "isotropic"
    n: int = 2
    matrix: tuple | None = None
    beta: float = 0.0
    modulation: Modulation | None = None
    lengths: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise IntegrandError(f"unknown integrand family {self.family!r}")
        if self.n not in (1, 2, 3):
            raise IntegrandError("dimension must be 1, 2 or 3")
        if self.family == "quadratic":
            if self.matrix is None:
                raise IntegrandError("quadratic family needs a matrix")
            A = np.asarray(self.matrix, dtype=float)
            if A.shape != (self.n, self.n) or not np.allclose(A, A.T, atol=1e-14):
                raise IntegrandError("matrix must be symmetric n x n")
            if np.linalg.eigvalsh(A)[0] <= 0:
                raise IntegrandError("matrix must be positive definite")
        if self.family == "quartic" and self.beta < 0:
            raise IntegrandError("beta must be nonnegative")
        if self.modulation is not None and len(self.modulation.wavevector) != self.n:
            raise IntegrandError("modulation wavevector has the wrong dimension")
        if self.lengths is None:
            object.__setattr__(self, "lengths", (1.0,) * self.n)

    @property
    def A(self) -> np.ndarray:
        if self.family == "quadratic":
            return np.asarray(self.matrix, dtype=float)
        return np.eye(self.n)

    @property
    def is_quadratic(self) -> bool:
        return self.family in ("isotropic", "quadratic")

    @property
    def autonomous(self) -> bool:
        return self.modulation is None or self.modulation.amplitude == 0

    def key(self):
        A = None if self.matrix is None else tuple(map(tuple, np.asarray(self.matrix, float)))
        return (self.family, self.n, A, float(self.beta))

    # -- spatial factor ---------------------------------------------------
    def m(self, x):
        x = np.asarray(x, dtype=float)
        if self.autonomous:
            return np.ones(x.shape[:-1])
        return self.modulation.value(x, self.lengths)

    def grad_m(self, x):
        x = np.asarray(x, dtype=float)
        if self.autonomous:
            return np.zeros(x.shape)
        return self.modulation.gradient(x, self.lengths)

    # -- F0^2 and derivatives --------------------------------------------
    def f2(self, v, order: int = 1):
        """Return ``F0^2``, its gradient and (if ``order >= 2``) Hessian."""
        v = np.asarray(v, dtype=float)
        if self.is_quadratic:
            A = self.A
            Av = v @ A
            f2 = np.einsum("...i,...i->...", v, Av)
            hess = None
            if order >= 2:
                hess = np.broadcast_to(2 * A, v.shape + (self.n,)).copy()
            return f2, 2 * Av, hess
        b = self.beta
        v2 = v * v
        r2 = v2.sum(axis=-1)
        Q = r2 * r2 + b * (v2 * v2).sum(axis=-1)
        sq = np.sqrt(Q)
        if order <= 0:
            return sq, None, None
        dQ = 4 * r2[..., None] * v + 4 * b * v**3
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(sq > 0, 1.0 / np.where(sq > 0, sq, 1.0), 0.0)
        df2 = 0.5 * dQ * inv[..., None]
        hess = None
        if order >= 2:
            eye = np.eye(self.n)
            d2Q = (4 * r2[..., None, None] * eye + 8 * v[..., :, None] * v[..., None, :]
                   + 12 * b * (v**2)[..., :, None] * eye)
            hess = (0.5 * d2Q * inv[..., None, None]
                    - 0.25 * dQ[..., :, None] * dQ[..., None, :] * (inv**3)[..., None, None])
        return sq, df2, hess

    def F0(self, v):
        return np.sqrt(np.maximum(self.f2(v, 1)[0], 0.0))

    def dF0(self, v):
        """Gradient of F0 (defined for v != 0)."""
        f2, df2, _ = self.f2(v, 1)
        F = np.sqrt(f2)
        return df2 / (2 * F[..., None])

    def d2F0(self, v):
        f2, df2, d2f2 = self.f2(v, 2)
        F = np.sqrt(f2)[..., None, None]
        dF = df2 / (2 * F[..., 0])
        return (d2f2 - 2 * dF[..., :, None] * dF[..., None, :]) / (2 * F)

    def F(self, x, v):
        return self.m(x) * self.F0(v)


def make_integrand(family="isotropic", n=2, matrix=None, beta=0.0, modulation=None,
                   lengths=None) -> IntegrandSpec:
    if matrix is not None:
        matrix = tuple(tuple(float(a) for a in row) for row in np.asarray(matrix, float))
    if lengths is not None:
        lengths = tuple(float(a) for a in lengths)
    return IntegrandSpec(family=family, n=n, matrix=matrix, beta=beta,
                         modulation=modulation, lengths=lengths)


def f_eval(spec: IntegrandSpec, x, v, hessian: bool = False):
    """Evaluate ``F(x, v)``, ``D_v F^2`` and optionally ``D_v^2 F^2``."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise IntegrandError("non-finite vector")
    x = np.zeros(v.shape) if x is None else np.asarray(x, dtype=float)
    m = spec.m(x)
    f2, df2, d2f2 = spec.f2(v, 2 if hessian else 1)
    F = m * np.sqrt(np.maximum(f2, 0.0))
    df2 = (m * m)[..., None] * df2
    if not hessian:
        return F, df2
    if not spec.is_quadratic and np.any(np.einsum("...i,...i->...", v, v) == 0):
        raise IntegrandError("D^2 F^2 is undefined at v = 0 for this family")
    return F, df2, (m * m)[..., None, None] * d2f2


# -- audit -----------------------------------------------------------------

def _unit_vectors(n, samples, rng):
    if n == 1:
        return np.array([[1.0], [-1.0]])
    v = rng.standard_normal((samples, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    if n == 2:
        th = np.linspace(0, 2 * np.pi, 721)[:-1]
        v = np.vstack([v, np.stack([np.cos(th), np.sin(th)], axis=1)])
    return v


@dataclass
class IntegrandAudit:
    passed: bool
    lam: float
    lam_prime: float
    lam_cvx: float
    lam_sq: float
    Lam_sq: float
    evenness: float
    homogeneity: float
    violations: list = field(default_factory=list)

    def as_dict(self):
        return {
            "passed": self.passed,
            "lambda_est": self.lam,
            "lambda_prime_est": self.lam_prime,
            "lambda_cvx": self.lam_cvx,
            "lambda_sq": self.lam_sq,
            "Lambda_sq": self.Lam_sq,
            "worst_evenness_residual": self.evenness,
            "worst_homogeneity_residual": self.homogeneity,
            "violations": self.violations,
        }


def audit_integrand(spec: IntegrandSpec, samples: int = 2000, seed: int = 0) -> IntegrandAudit:
    """Sample positivity, evenness, homogeneity and the convexity constants.

    ``lam`` is the largest value with ``lam |v| <= F <= |v| / lam``;
    ``lam_prime`` is the constant used downstream for the monotonicity of
    ``D G_delta``, the mass bound and the energy sandwich.
    """
    rng = np.random.default_rng(seed)
    n = spec.n
    v = _unit_vectors(n, samples, rng)
    if spec.autonomous:
        x = np.zeros((1, n))
    else:
        L = np.asarray(spec.lengths)
        x = rng.random((64, n)) * L
        x = np.vstack([x, np.zeros((1, n))])
    m = spec.m(x)
    F0 = spec.F0(v)
    violations = []
    if np.min(F0) <= 0:
        violations.append({"clause": "F > 0", "v": v[np.argmin(F0)].tolist()})
    even = float(np.max(np.abs(spec.F0(-v) - F0)))
    tau = rng.random(v.shape[0]) * 10
    homog = float(np.max(np.abs(spec.F0(tau[:, None] * v) - tau * F0) / (1 + tau)))
    Fall = m[:, None] * F0[None, :]
    lam = float(min(np.min(Fall), 1.0 / np.max(Fall)))

    _, _, H2 = spec.f2(v, 2)
    eig = np.linalg.eigvalsh(H2)
    mm = m * m
    lam_sq = float(0.5 * np.min(eig[:, 0]) * np.min(mm))
    Lam_sq = float(0.5 * np.max(eig[:, -1]) * np.max(mm))

    lam_cvx = math.inf
    if n > 1:
        # tangential curvature of F on the unit sphere
        w = rng.standard_normal(v.shape)
        w -= np.einsum("ij,ij->i", w, v)[:, None] * v
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        curv = np.einsum("ij,ijk,ik->i", w, spec.d2F0(v), w)
        lam_cvx = float(np.min(curv) * np.min(m))
        if not lam_cvx > 0:
            i = int(np.argmin(curv))
            violations.append({"clause": "D^2F(v)[w,w] >= lam |w|^2/|v|",
                               "v": v[i].tolist(), "w": w[i].tolist()})
    if not lam_sq > 0:
        violations.append({"clause": "D^2 F^2 >= 2 lam'", "v": v[np.argmin(eig[:, 0])].tolist()})
    if even > 1e-12:
        violations.append({"clause": "F(-v) = F(v)", "residual": even})
    if homog > 1e-12:
        violations.append({"clause": "F(tau v) = tau F(v)", "residual": homog})
    lam_prime = min(lam, lam_sq, math.sqrt(max(lam_sq, 0.0)), 1.0 / math.sqrt(Lam_sq))
    return IntegrandAudit(
        passed=not violations,
        lam=lam,
        lam_prime=float(lam_prime),
        lam_cvx=lam_cvx,
        lam_sq=lam_sq,
        Lam_sq=Lam_sq,
        evenness=even,
        homogeneity=homog,
        violations=violations,
    )


# -- mollifier quadrature --------------------------------------------------

def bump(r2):
    """Unnormalized radial bump exp(-1/(1-|y|^2)) as a function of |y|^2."""
    r2 = np.asarray(r2, dtype=float)
    out = np.zeros_like(r2)
    inside = r2 < 1
    out[inside] = np.exp(-1.0 / (1.0 - r2[inside]))
    return out


def _gl01(q):
    x, w = np.polynomial.legendre.leggauss(q)
    return 0.5 * (x + 1), 0.5 * w


def _sphere_rule(n, q, mirrored=True):
    """Directions and weights on S^{n-1}, closed under antipodes."""
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if n == 2:
        t, wt = _gl01(q)
        th = np.pi * t
        th = np.concatenate([th, th + np.pi])
        w = np.concatenate([wt, wt]) * np.pi
        return np.stack([np.cos(th), np.sin(th)], axis=1), w
    c, wc = np.polynomial.legendre.leggauss(q)
    t, wt = _gl01(q)
    ph = np.concatenate([np.pi * t, np.pi * t + np.pi])
    wp = np.concatenate([wt, wt]) * np.pi
    C, P = np.meshgrid(c, ph, indexing="ij")
    S = np.sqrt(1 - C * C)
    dirs = np.stack([S * np.cos(P), S * np.sin(P), C], axis=-1).reshape(-1, 3)
    w = np.outer(wc, wp).ravel()
    return dirs, w


@lru_cache(maxsize=32)
def ball_rule(n: int, q: int):
    """Point-symmetric polar Gauss rule for the normalized bump on the unit ball."""
    if q < MIN_QUAD_ORDER:
        raise IntegrandError(f"quadrature order must be at least {MIN_QUAD_ORDER}")
    rho, wr = _gl01(q)
    dirs, wd = _sphere_rule(n, q)
    nodes = (rho[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    w = (wr * rho ** (n - 1) * bump(rho * rho))[:, None] * wd[None, :]
    w = w.ravel()
    w /= w.sum()
    nodes.setflags(write=False)
    w.setflags(write=False)
    return nodes, w


def _smoothstep(r, r0, r1):
    """C^2 step equal to 1 for r <= r0 and 0 for r >= r1, with derivatives."""
    t = np.clip((r - r0) / (r1 - r0), 0.0, 1.0)
    s = 1 - t**3 * (10 - 15 * t + 6 * t * t)
    ds = -30 * t * t * (1 - t) ** 2 / (r1 - r0)
    d2s = -60 * t * (1 - t) * (1 - 2 * t) / (r1 - r0) ** 2
    return s, ds, d2s


TABLE_RADIUS = 2.0
BLEND_START = 1.5


@dataclass(eq=False)
class MollifiedIntegrand:
    """``G_delta = (F^2 * eta_delta)(v) - (F^2 * eta_delta)(0)``.

    Evaluation happens at unit scale, ``G_delta(v) = delta^2 G_1(v/delta)``.
    For ``|v/delta| >= 2`` the moving polar rule is used directly; closer to
    the origin, where ``F^2`` has its kink inside the support, a tensor cubic
    spline of an accurate tabulation of ``G_1`` takes over, blended with a
    C^2 step on ``1.5 <= |v/delta| <= 2``.  Quadratic families are closed form.
    """

    spec: IntegrandSpec
    delta: float
    quad_order: int = 12

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise IntegrandError("delta must lie in (0, 1)")
        self.nodes, self.weights = ball_rule(self.spec.n, self.quad_order)
        self._c0 = None

    # -- unit-scale pieces ------------------------------------------------
    def _rule1(self, w, order=2, nodes=None, weights=None):
        """Moving-rule G_1 and derivatives at unit-scale points ``w`` (N, n)."""
        nodes = self.nodes if nodes is None else nodes
        weights = self.weights if weights is None else weights
        spec = self.spec
        n = spec.n
        N = w.shape[0]
        G = np.zeros(N)
        DG = np.zeros((N, n)) if order >= 1 else None
        D2G = np.zeros((N, n, n)) if order >= 2 else None
        chunk = max(1, 200000 // len(weights))
        for a in range(0, N, chunk):
            z = w[a:a + chunk, None, :] - nodes[None, :, :]
            f2, df2, d2f2 = spec.f2(z, order)
            G[a:a + chunk] = f2 @ weights
            if order >= 1:
                DG[a:a + chunk] = np.einsum("pki,k->pi", df2, weights)
            if order >= 2:
                D2G[a:a + chunk] = np.einsum("pkij,k->pij", d2f2, weights)
        c0 = self._c0_value(nodes, weights)
        return G - c0, DG, D2G

    def _c0_value(self, nodes, weights):
        f2 = self.spec.f2(nodes, 0)[0]
        return float(f2 @ weights)

    def _table_eval(self, w, order):
        tab = _g1_table(self.spec.key())
        n = self.spec.n
        G = tab(w)
        if order == 0:
            return G, None, None
        DG = np.zeros(w.shape)
        for i in range(n):
            nu = [0] * n
            nu[i] = 1
            DG[:, i] = tab(w, nu=nu)
        D2G = None
        if order >= 2:
            D2G = np.zeros(w.shape + (n,))
            for i in range(n):
                for j in range(i, n):
                    nu = [0] * n
                    nu[i] += 1
                    nu[j] += 1
                    D2G[:, i, j] = D2G[:, j, i] = tab(w, nu=nu)
        return G, DG, D2G

    def unit_eval(self, w, order: int = 2):
        """``G_1`` and its derivatives at unit-scale points."""
        w = np.asarray(w, dtype=float).reshape(-1, self.spec.n)
        N, n = w.shape
        r = np.linalg.norm(w, axis=1)
        G = np.empty(N)
        DG = np.empty((N, n))
        D2G = np.empty((N, n, n)) if order >= 2 else None
        far = r >= TABLE_RADIUS
        near = r <= BLEND_START
        mid = ~far & ~near
        if np.any(far):
            g, dg, d2g = self._rule1(w[far], order)
            G[far] = g
            if order >= 1:
                DG[far] = dg
            if order >= 2:
                D2G[far] = d2g
        if np.any(near):
            g, dg, d2g = self._table_eval(w[near], order)
            G[near] = g
            if order >= 1:
                DG[near] = dg
            if order >= 2:
                D2G[near] = d2g
        if np.any(mid):
            wm = w[mid]
            rm = r[mid]
            gt, dgt, d2gt = self._table_eval(wm, order)
            gr, dgr, d2gr = self._rule1(wm, order)
            s, ds, d2s = _smoothstep(rm, BLEND_START, TABLE_RADIUS)
            e = wm / rm[:, None]
            Ds = ds[:, None] * e
            diff = gt - gr
            G[mid] = gr + s * diff
            if order == 0:
                return G, None, None
            ddiff = dgt - dgr
            DG[mid] = dgr + s[:, None] * ddiff + Ds * diff[:, None]
            if order >= 2:
                P = np.eye(n)[None] - e[:, :, None] * e[:, None, :]
                D2s = d2s[:, None, None] * e[:, :, None] * e[:, None, :] + (ds / rm)[:, None, None] * P
                D2G[mid] = (d2gr + s[:, None, None] * (d2gt - d2gr)
                            + Ds[:, :, None] * ddiff[:, None, :] + ddiff[:, :, None] * Ds[:, None, :]
                            + D2s * diff[:, None, None])
        return G, (DG if order >= 1 else None), D2G

    # -- public evaluation --------------------------------------------------
    def g0(self, v, order: int = 2):
        """``G0_delta(v)`` without spatial factor; ``v`` has shape (N, n)."""
        v = np.asarray(v, dtype=float)
        if self.spec.is_quadratic:
            A = self.spec.A
            Av = v @ A
            G = np.einsum("...i,...i->...", v, Av)
            D2G = np.broadcast_to(2 * A, v.shape + (self.spec.n,)) if order >= 2 else None
            return G, 2 * Av, D2G
        d = self.delta
        shape = v.shape
        g, dg, d2g = self.unit_eval(v.reshape(-1, shape[-1]) / d, order)
        G = (d * d * g).reshape(shape[:-1])
        DG = None if dg is None else (d * dg).reshape(shape)
        D2G = d2g.reshape(shape + (shape[-1],)) if order >= 2 else None
        return G, DG, D2G

    def g0_quadrature(self, v, order: int = 2, quad_order: int | None = None):
        """Direct moving-rule evaluation at scale delta (reference path)."""
        v = np.asarray(v, dtype=float).reshape(-1, self.spec.n)
        if quad_order is None:
            nodes, weights = self.nodes, self.weights
        else:
            nodes, weights = ball_rule(self.spec.n, quad_order)
        d = self.delta
        g, dg, d2g = self._rule1(v / d, order, nodes, weights)
        return d * d * g, None if dg is None else d * dg, d2g

    def g_eval(self, x, v, order: int = 2):
        """``G_delta(x, v)``, ``D_v G_delta`` and ``D_v^2 G_delta``."""
        v = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(v)):
            raise IntegrandError("non-finite vector")
        scalar = v.ndim == 1
        vv = v.reshape(-1, self.spec.n)
        x = np.zeros(vv.shape) if x is None else np.asarray(x, dtype=float).reshape(-1, self.spec.n)
        m2 = self.spec.m(x) ** 2
        G, DG, D2G = self.g0(vv, order)
        G = m2 * G
        DG = m2[:, None] * DG
        if order >= 2:
            D2G = m2[:, None, None] * D2G
        if scalar:
            return (float(G[0]), DG[0], None if D2G is None else D2G[0])
        return G, DG, D2G


def mollify(spec: IntegrandSpec, delta: float, quad_order: int = 12) -> MollifiedIntegrand:
    if quad_order < MIN_QUAD_ORDER:
        raise IntegrandError(f"quad_order must be at least {MIN_QUAD_ORDER}")
    return MollifiedIntegrand(spec=spec, delta=float(delta), quad_order=int(quad_order))


def g_eval(m: MollifiedIntegrand, x, v, order: int = 2):
    return m.g_eval(x, v, order)


# -- accurate unit-scale tabulation ----------------------------------------

_TABLE_SETTINGS = {
    # half-width, spacing, kink-rule radial/angular orders, moving-rule order
    1: (2.5, 0.01, 48, 1, 48),
    2: (2.4, 0.03, 32, 64, 24),
    3: (2.4, 0.15, 16, 10, 10),
}


def _kink_rule_g1(spec: IntegrandSpec, w, nr, na):
    """``(F^2 * eta)(w)`` for ``|w| < 1`` in polar coordinates about the kink."""
    n = spec.n
    if n == 1:
        dirs, wd = np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    elif n == 2:
        th = 2 * np.pi * np.arange(na) / na
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        wd = np.full(na, 2 * np.pi / na)
    else:
        c, wc = np.polynomial.legendre.leggauss(na)
        ph = 2 * np.pi * np.arange(2 * na) / (2 * na)
        C, P = np.meshgrid(c, ph, indexing="ij")
        S = np.sqrt(1 - C * C)
        dirs = np.stack([S * np.cos(P), S * np.sin(P), C], axis=-1).reshape(-1, 3)
        wd = np.outer(wc, np.full(2 * na, 2 * np.pi / (2 * na))).ravel()
    f2dir = spec.f2(dirs, 1)[0]
    t, wt = _gl01(nr)
    out = np.empty(w.shape[0])
    chunk = max(1, 400000 // (len(wd) * nr))
    for a in range(0, w.shape[0], chunk):
        wv = w[a:a + chunk]
        b = wv @ dirs.T
        rmax = b + np.sqrt(np.maximum(b * b - np.sum(wv * wv, axis=1)[:, None] + 1, 0.0))
        rho = rmax[..., None] * t
        # |w - rho d|^2 = |w|^2 - 2 rho b + rho^2
        r2 = np.sum(wv * wv, axis=1)[:, None, None] - 2 * rho * b[..., None] + rho * rho
        radial = (rho ** (n + 1) * bump(r2)) @ wt * rmax
        out[a:a + chunk] = radial @ (wd * f2dir)
    return out


def _bump_mass(n, nr, na):
    t, wt = _gl01(nr)
    if n == 1:
        area = 2.0
    elif n == 2:
        area = 2 * np.pi
    else:
        area = 4 * np.pi
    return area * float(np.sum(wt * t ** (n - 1) * bump(t * t)))


@lru_cache(maxsize=8)
def _g1_table(key):
    family, n, A, beta = key
    spec = IntegrandSpec(family=family, n=n, matrix=A, beta=beta)
    half, h, nr, na, qm = _TABLE_SETTINGS[n]
    m = int(round(2 * half / h))
    axis = np.linspace(-half, half, m + 1)
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    r = np.linalg.norm(pts, axis=1)
    vals = np.empty(pts.shape[0])

    Z = _bump_mass(n, nr, na if n > 1 else 1)
    zero = np.zeros((1, n))
    c0 = _kink_rule_g1(spec, zero, nr, na)[0] / Z

    inner = r < 1
    vals[inner] = _kink_rule_g1(spec, pts[inner], nr, na) / Z - c0

    # nodes beyond this radius only shape the spline outside the blend zone
    used = TABLE_RADIUS + 3 * h * math.sqrt(n)
    helper = MollifiedIntegrand.__new__(MollifiedIntegrand)
    helper.spec = spec
    for sel, q in (((r >= 1) & (r <= used), qm), (r > used, MIN_QUAD_ORDER + 4)):
        nodes, weights = ball_rule(n, q)
        vals[sel] = helper._rule1(pts[sel], 0, nodes, weights)[0]
    vals = vals.reshape((m + 1,) * n)

    # tensor cubic interpolation, one axis at a time
    coef = vals
    knots = []
    for ax in range(n):
        spl = make_interp_spline(axis, coef, k=3, axis=ax)
        coef = spl.c
        knots.append(spl.t)
    return NdBSpline(tuple(knots), coef, 3)
