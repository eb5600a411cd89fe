"""Geometric diagnostics of phase fields: discrepancy, diffuse varifold,
first variations, stress-energy tensor, stability and slice quantization.

All pointwise quantities use the centered gradient of :mod:`anisoac.domain`
and the raw integrand ``F`` unless stated otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import Grid, grad, integrate, interpolate
from .energy import EnergyParams
from .potential import compute_cw


class GeometryError(ValueError):
    pass


def gradient_floor(p: EnergyParams) -> float:
    return 1e-8 / p.epsilon


def _coords(p):
    return p.grid.coords()


def _flat_only(p: EnergyParams):
    if not p.metric.flat:
        raise GeometryError("this diagnostic is implemented for the flat metric only")


def _F_and_DF2(p: EnergyParams, Du, mollified: bool = False):
    """``F(x, Du)`` (or ``sqrt G``) and ``D_v F^2`` per cell."""
    x = _coords(p)
    m2 = p.m2
    v = Du.reshape(-1, p.grid.n)
    if mollified and p.mollified is not None:
        G, DG, _ = p.mollified.g0(v, 1)
    else:
        G, DG, _ = p.integrand.f2(v, 1)
    G = m2 * G.reshape(p.grid.shape)
    DG = m2[..., None] * DG.reshape(Du.shape)
    return np.sqrt(np.maximum(G, 0.0)), DG


def pointwise_energy(u, p: EnergyParams, mollified: bool = False):
    """``eps F(x, grad u)^2 / 2 + W(u) / eps`` with the centered gradient."""
    Du = grad(u, p.grid)
    F, _ = _F_and_DF2(p, Du, mollified)
    return 0.5 * p.epsilon * F * F + p.potential.W(u) / p.epsilon


# -- discrepancy ---------------------------------------------------------

@dataclass
class ModicaReport:
    discrepancy: np.ndarray
    max: float
    positive_mass: float

    def as_dict(self):
        return {"max": self.max, "positive_mass": self.positive_mass}


def modica_check(u, p: EnergyParams) -> ModicaReport:
    """Discrepancy ``eps F^2(x, grad u)/2 - W(u)/eps`` and its positive-part mass."""
    u = p.grid.check(u)
    Du = grad(u, p.grid)
    F, _ = _F_and_DF2(p, Du)
    xi = 0.5 * p.epsilon * F * F - p.potential.W(u) / p.epsilon
    pos = integrate(np.maximum(xi, 0.0), p.grid, p.metric)
    return ModicaReport(xi, float(np.max(xi)), pos)


# -- diffuse varifold ----------------------------------------------------

@dataclass
class GridMeasure:
    weight: np.ndarray  # sqrt(2W(u)) |grad u| per cell
    normal: np.ndarray  # unit normal, zero where absent
    present: np.ndarray  # mask of cells with a normal
    grid: Grid
    vol: np.ndarray

    @property
    def mass(self) -> float:
        return float(np.sum(self.weight * self.vol))


def build_varifold(u, p: EnergyParams) -> GridMeasure:
    u = p.grid.check(u)
    Du = grad(u, p.grid)
    if not p.metric.flat:
        Du = Du * np.asarray(p.scale)[..., None]
    norm = np.linalg.norm(Du, axis=-1)
    present = norm > gradient_floor(p)
    normal = np.zeros_like(Du)
    normal[present] = Du[present] / norm[present][:, None]
    w = np.where(present, p.potential.sqrt2W(u) * norm, 0.0)
    vol = np.broadcast_to(p.vol, p.grid.shape)
    return GridMeasure(w, normal, present, p.grid, vol)


def varifold_mass(V: GridMeasure, region=None) -> float:
    """Mass of ``V`` in ``region`` (boolean mask, callable on coordinates, or None)."""
    if region is None:
        return V.mass
    if callable(region):
        region = np.asarray(region(V.grid.coords()), dtype=bool)
    return float(np.sum(np.where(region, V.weight * V.vol, 0.0)))


def unit_ball_measure(k: int) -> float:
    """Volume of the unit ball in R^k (2 for k = 1)."""
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)


def density_ratios(V: GridMeasure, x, r_list):
    """``|V|(B_r(x)) / (omega_{n-1} r^{n-1})`` for each radius.

    The normalization makes a flat interface carrying mass density ``c``
    have ratio ``c``.
    """
    grid = V.grid
    n = grid.n
    d = grid.periodic_delta(grid.coords(), x)
    r2 = np.sum(d * d, axis=-1)
    out = []
    for r in r_list:
        if r <= 0 or r > 0.5 * min(grid.lengths):
            raise GeometryError("radius must lie in (0, half the smallest period]")
        m = float(np.sum(np.where(r2 <= r * r, V.weight * V.vol, 0.0)))
        out.append(m / (unit_ball_measure(n - 1) * r ** (n - 1)))
    return out


# -- test fields and first variations ----------------------------------------

@dataclass(frozen=True)
class TrigField:
    """``X(x) = e_component * f(2 pi k.x / L + phase)`` with ``f = cos``."""

    component: int
    wavevector: tuple[int, ...]
    phase: float = 0.0
    lengths: tuple[float, ...] | None = None

    def _arg(self, x):
        L = np.ones(len(self.wavevector)) if self.lengths is None else np.asarray(self.lengths)
        self_k = 2 * np.pi * np.asarray(self.wavevector, dtype=float) / L
        return x @ self_k + self.phase, self_k

    def value(self, x):
        a, _ = self._arg(np.asarray(x, dtype=float))
        out = np.zeros(np.shape(x))
        out[..., self.component] = np.cos(a)
        return out

    def jacobian(self, x):
        """``DX[..., i, j] = d X_i / d x_j``."""
        a, k = self._arg(np.asarray(x, dtype=float))
        out = np.zeros(np.shape(x) + (len(self.wavevector),))
        out[..., self.component, :] = -np.sin(a)[..., None] * k
        return out

    def c1_norm(self) -> float:
        _, k = self._arg(np.zeros(len(self.wavevector)))
        return 1.0 + float(np.linalg.norm(k))

    def sup_norm(self) -> float:
        return 1.0


def trig_fields(n: int, count: int = 12, lengths=None, max_freq: int = 2):
    """Deterministic list of ``count`` trigonometric test fields."""
    fields = []
    freqs = []
    for total in range(1, max_freq * n + 1):
        for k in np.ndindex(*([2 * max_freq + 1] * n)):
            kk = tuple(int(a) - max_freq for a in k)
            if sum(abs(a) for a in kk) == total and kk > tuple([0] * n):
                freqs.append(kk)
    i = 0
    while len(fields) < count:
        kk = freqs[(i // (2 * n)) % len(freqs)]
        comp = (i // 2) % n
        phase = 0.0 if i % 2 == 0 else np.pi / 2
        fields.append(TrigField(comp, kk, phase, None if lengths is None else tuple(lengths)))
        i += 1
    return fields


def _field_eval(X, x):
    if hasattr(X, "value"):
        return X.value(x), X.jacobian(x)
    val, jac = X(x)
    return np.asarray(val), np.asarray(jac)


def first_variation_iso(V: GridMeasure, X) -> float:
    """``int div_P X dV`` with ``P`` the plane orthogonal to the normal."""
    x = V.grid.coords()
    _, DX = _field_eval(X, x)
    nu = V.normal
    divX = np.trace(DX, axis1=-2, axis2=-1)
    nDn = np.einsum("...i,...ij,...j->...", nu, DX, nu)
    return float(np.sum(np.where(V.present, (divX - nDn) * V.weight * V.vol, 0.0)))


def _aniso_density(spec, x, nu, DX, Xval):
    F0 = spec.F0(nu)
    dF0 = spec.dF0(nu)
    m = spec.m(x)
    divX = np.trace(DX, axis1=-2, axis2=-1)
    DXt_nu = np.einsum("...ij,...i->...j", DX, nu)
    dens = m * (F0 * divX - np.einsum("...j,...j->...", dF0, DXt_nu))
    if not spec.autonomous:
        dens = dens + F0 * np.einsum("...i,...i->...", spec.grad_m(x), Xval)
    return dens


def first_variation_aniso(V, spec, X) -> float:
    """``int [F(nu) div X - <D_v F(nu), DX^T nu> + <D_x F(nu), X>] dV``.

    ``V`` may be a :class:`GridMeasure` or an :class:`Interface`.
    """
    if isinstance(V, Interface):
        x, nu, w = V.midpoints, V.normals, V.measures
        Xval, DX = _field_eval(X, x)
        return float(np.sum(_aniso_density(spec, x, nu, DX, Xval) * w))
    x = V.grid.coords()
    Xval, DX = _field_eval(X, x)
    mask = V.present
    nu = np.where(mask[..., None], V.normal, 1.0 / math.sqrt(V.grid.n))
    dens = _aniso_density(spec, x, nu, DX, Xval)
    return float(np.sum(np.where(mask, dens * V.weight * V.vol, 0.0)))


# -- stress-energy tensor --------------------------------------------------

def stress_tensor(u, p: EnergyParams) -> np.ndarray:
    """``T = e I - eps grad u (x) D_v(F^2/2)(grad u)``, shape ``(*cells, n, n)``.

    Uses the integrand the energy was built with (``G_delta`` when delta > 0).
    """
    _flat_only(p)
    u = p.grid.check(u)
    Du = grad(u, p.grid)
    F, DG = _F_and_DF2(p, Du, mollified=True)
    e = 0.5 * p.epsilon * F * F + p.potential.W(u) / p.epsilon
    n = p.grid.n
    T = e[..., None, None] * np.eye(n)
    T -= p.epsilon * Du[..., :, None] * (0.5 * DG)[..., None, :]
    return T


def divergence_test(T, X, grid: Grid, vol=None) -> float:
    """``int <T, DX> = sum_ik T_ik d_k X_i`` (volume-weighted)."""
    _, DX = _field_eval(X, grid.coords())
    dens = np.einsum("...ik,...ik->...", T, DX)
    w = grid.cell_volume if vol is None else vol
    return float(np.sum(dens * w))


def nonautonomous_term(u, p: EnergyParams, X) -> float:
    """``int (eps/2) D_x(F^2)(x, grad u) . X``.

    At a critical point ``int <T, DX>`` equals minus this term up to
    discretization error.
    """
    if p.integrand.autonomous:
        return 0.0
    Du = grad(u, p.grid)
    x = p.grid.coords()
    v = Du.reshape(-1, p.grid.n)
    if p.mollified is not None:
        G0 = p.mollified.g0(v, 0)[0]
    else:
        G0 = p.integrand.f2(v, 0)[0]
    G0 = G0.reshape(p.grid.shape)
    m = p.integrand.m(x)
    dm2 = 2 * m[..., None] * p.integrand.grad_m(x)
    Xval, _ = _field_eval(X, x)
    dens = 0.5 * p.epsilon * G0 * np.einsum("...i,...i->...", dm2, Xval)
    return float(np.sum(dens * p.grid.cell_volume))


def tensor_norm(T) -> np.ndarray:
    """Operator norm per cell."""
    return np.linalg.norm(T, ord=2, axis=(-2, -1))


# -- lambda split and C_F ------------------------------------------------------

def cf_split(u, p: EnergyParams):
    """``lambda_eps = min(eps F^2 / e, 1)`` (0 where e = 0) and ``C_F(nu)``."""
    u = p.grid.check(u)
    Du = grad(u, p.grid)
    F, _ = _F_and_DF2(p, Du)
    e = 0.5 * p.epsilon * F * F + p.potential.W(u) / p.epsilon
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(e > 0, np.minimum(p.epsilon * F * F / np.where(e > 0, e, 1.0), 1.0), 0.0)
    norm = np.linalg.norm(Du, axis=-1)
    present = norm > gradient_floor(p)
    n = p.grid.n
    CF = np.zeros(p.grid.shape + (n, n))
    if np.any(present):
        nu = Du[present] / norm[present][:, None]
        CF[present] = cf_map(p.integrand, nu)
    return lam, CF


def cf_map(spec, nu):
    """``C_F(nu) = I - nu (x) D F(nu) / F(nu)`` for unit vectors ``nu`` (m, n)."""
    nu = np.asarray(nu, dtype=float)
    F = spec.F0(nu)
    dF = spec.dF0(nu)
    n = nu.shape[-1]
    return np.eye(n) - nu[..., :, None] * dF[..., None, :] / F[..., None, None]


# -- stability -----------------------------------------------------------------

def hessian_field(u, grid: Grid) -> np.ndarray:
    """Centered second differences, shape ``(*cells, n, n)``."""
    n = grid.n
    H = np.empty(grid.shape + (n, n))
    for i in range(n):
        hi = grid.h[i]
        H[..., i, i] = (np.roll(u, -1, i) - 2 * u + np.roll(u, 1, i)) / hi**2
        for j in range(i + 1, n):
            hj = grid.h[j]
            pp = np.roll(np.roll(u, -1, i), -1, j)
            pm = np.roll(np.roll(u, -1, i), 1, j)
            mp = np.roll(np.roll(u, 1, i), -1, j)
            mm = np.roll(np.roll(u, 1, i), 1, j)
            H[..., i, j] = H[..., j, i] = (pp - pm - mp + mm) / (4 * hi * hj)
    return H


def second_fundamental_form_sq(u, grid: Grid, tau: float):
    """``|II|^2`` of the level sets of ``u`` on ``{|grad u| > tau}``, else 0."""
    Du = grad(u, grid)
    norm = np.linalg.norm(Du, axis=-1)
    present = norm > tau
    out = np.zeros(grid.shape)
    if not np.any(present):
        return out
    H = hessian_field(u, grid)[present]
    nu = Du[present] / norm[present][:, None]
    P = np.eye(grid.n) - nu[:, :, None] * nu[:, None, :]
    PHP = P @ H @ P
    out[present] = np.sum(PHP * PHP, axis=(-2, -1)) / norm[present] ** 2
    return out


@dataclass
class StabilityReport:
    lhs: float
    rhs: float
    ratio: float

    def as_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "ratio": self.ratio}


def stability_diagnostic(u, p: EnergyParams, phi=None, tau: float | None = None) -> StabilityReport:
    """``LHS = int phi^2 |II|^2 eps F_delta^2`` and ``RHS = int e_{eps,delta}``."""
    if p.delta <= 0:
        raise GeometryError("stability diagnostic needs delta > 0")
    if tau is None:
        tau = gradient_floor(p)
    if tau <= 0:
        raise GeometryError("gradient floor must be positive")
    _flat_only(p)
    u = p.grid.check(u)
    phi = np.ones(p.grid.shape) if phi is None else p.grid.check(phi)
    II2 = second_fundamental_form_sq(u, p.grid, tau)
    Du = grad(u, p.grid)
    F, _ = _F_and_DF2(p, Du, mollified=True)
    lhs = integrate(phi**2 * II2 * p.epsilon * F * F, p.grid)
    rhs = integrate(0.5 * p.epsilon * F * F + p.potential.W(u) / p.epsilon, p.grid)
    return StabilityReport(lhs, rhs, lhs / rhs if rhs > 0 else math.inf)


# -- tangential energy and slices ------------------------------------------------

def tangential_energy(u, p: EnergyParams, direction) -> float:
    """``int eps |grad u - (grad u . d) d|^2`` for the unit direction ``d``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    Du = grad(u, p.grid)
    tan = Du - np.einsum("...i,i->...", Du, d)[..., None] * d
    return integrate(p.epsilon * np.sum(tan * tan, axis=-1), p.grid, p.metric)


def tangential_fraction(u, p: EnergyParams, direction) -> float:
    Du = grad(u, p.grid)
    total = integrate(p.epsilon * np.sum(Du * Du, axis=-1), p.grid, p.metric)
    return tangential_energy(u, p, direction) / total if total > 0 else 0.0


def standard_cutoff(t):
    """C^1 cutoff on (-1, 1), equal to 1 on [-1/2, 1/2]."""
    t = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    out[t <= 0.5] = 1.0
    mid = (t > 0.5) & (t < 1)
    s = (t[mid] - 0.5) / 0.5
    out[mid] = 1 - s * s * (3 - 2 * s)
    return out


@dataclass
class SliceRecord:
    base: tuple
    q: float
    k: int
    dist: float
    tangential_fraction: float
    passes: bool


def slice_quantization(u, p: EnergyParams, axis: int = 1, offsets=None, chi=None,
                       samples: int | None = None, tan_tol: float = 0.05):
    """Normalized slice energies ``q = int chi e / F(x, nu)`` along lines parallel to ``axis``.

    ``chi`` is a function of the rescaled line parameter in ``[-1, 1)``; by
    default the whole periodic line is used.  Each record reports the nearest
    integer multiple of ``c_W`` and whether the line passes the
    tangential-energy certificate (share of ``eps |grad u|^2`` along the line
    coming from directions orthogonal to the line at most ``tan_tol``).
    """
    grid = p.grid
    n = grid.n
    if samples is None:
        samples = 4 * grid.cells[axis]
    d = np.zeros(n)
    d[axis] = 1.0
    L = grid.lengths[axis]
    cw = compute_cw(p.potential)
    Du = grad(u, grid)
    e = pointwise_energy(u, p)
    x = grid.coords()
    norm = np.linalg.norm(Du, axis=-1)
    present = norm > gradient_floor(p)
    nu = np.where(present[..., None], Du / np.where(present, norm, 1.0)[..., None], d)
    Fnu = p.integrand.F(x, nu)
    dens = e / Fnu
    grad_sq = p.epsilon * norm**2
    tan_sq = p.epsilon * (norm**2 - Du[..., axis] ** 2)
    if offsets is None:
        others = [i for i in range(n) if i != axis]
        offsets = list(np.ndindex(*[grid.cells[i] for i in others]))
        offsets = [tuple(grid.h[i] * j for i, j in zip(others, o)) for o in offsets]
    s = np.arange(samples) * (L / samples)
    ds = L / samples
    weight = np.ones(samples) if chi is None else chi(2 * s / L - 1)
    records = []
    for off in offsets:
        base = np.zeros(n)
        others = [i for i in range(n) if i != axis]
        base[others] = off
        pts = base[None, :] + s[:, None] * d[None, :]
        q = float(np.sum(weight * interpolate(dens, grid, pts)) * ds)
        gsum = float(np.sum(interpolate(grad_sq, grid, pts)))
        tsum = float(np.sum(interpolate(tan_sq, grid, pts)))
        frac = tsum / gsum if gsum > 0 else 0.0
        k = int(round(q / cw))
        records.append(SliceRecord(tuple(float(a) for a in base), q, k,
                                   abs(q / cw - k), frac, frac <= tan_tol))
    return records


def quantization_summary(records, dist_tol: float = 0.15):
    good = [r for r in records if r.passes]
    hist = {}
    for r in good:
        hist[r.k] = hist.get(r.k, 0) + 1
    modal = max(hist, key=lambda k: (hist[k], -k)) if hist else None
    within = sum(1 for r in good if r.dist <= dist_tol)
    return {
        "lines": len(records),
        "certified": len(good),
        "certified_fraction": len(good) / len(records) if records else 0.0,
        "within_tol_fraction": within / len(good) if good else 0.0,
        "modal_integer": modal,
        "histogram": {str(k): v for k, v in sorted(hist.items())},
    }


# -- interface extraction -----------------------------------------------------

@dataclass
class Interface:
    midpoints: np.ndarray
    measures: np.ndarray
    normals: np.ndarray
    segments: np.ndarray | None = None

    @property
    def total(self) -> float:
        return float(np.sum(self.measures))


def _edge_root(a, b):
    return a / (a - b)


def extract_interface(u, grid: Grid, level: float = 0.0) -> Interface:
    """Level set ``{u = level}`` by marching squares (2D) or tetrahedra (3D).

    Crossings are located by linear interpolation along cell edges; the
    periodic grid wraps so the resulting chains are closed.  Normals come
    from the interpolated centered gradient and point towards increasing u.
    """
    u = grid.check(u) - level
    if grid.n == 1:
        f1 = np.roll(u, -1)
        idx = np.flatnonzero(np.sign(u) != np.sign(f1))
        idx = idx[(u[idx] != 0) | (f1[idx] != 0)]
        if idx.size == 0:
            raise GeometryError("empty level set")
        t = _edge_root(u[idx], f1[idx])
        pts = ((idx + t) * grid.h[0])[:, None]
        normals = np.sign(f1[idx] - u[idx])[:, None].astype(float)
        return Interface(pts, np.ones(idx.size), normals)
    if grid.n == 2:
        segs = _marching_squares(u, grid)
    else:
        segs = _marching_tets(u, grid)
    if len(segs) == 0:
        raise GeometryError("empty level set")
    segs = np.asarray(segs)
    mid = segs.mean(axis=1)
    L = np.array(grid.lengths)
    mid = np.mod(mid, L)
    if grid.n == 2:
        tvec = segs[:, 1] - segs[:, 0]
        meas = np.linalg.norm(tvec, axis=1)
        nrm = np.stack([-tvec[:, 1], tvec[:, 0]], axis=1)
    else:
        cr = np.cross(segs[:, 1] - segs[:, 0], segs[:, 2] - segs[:, 0])
        meas = 0.5 * np.linalg.norm(cr, axis=1)
        nrm = cr
    keep = meas > 0
    mid, meas, nrm, segs = mid[keep], meas[keep], nrm[keep], segs[keep]
    nrm = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
    Du = grad(u, grid)
    gmid = np.stack([interpolate(Du[..., i], grid, mid) for i in range(grid.n)], axis=1)
    flip = np.einsum("ij,ij->i", nrm, gmid) < 0
    nrm[flip] *= -1
    return Interface(mid, meas, nrm, segs)


def _marching_squares(u, grid):
    hx, hy = grid.h
    f00 = u
    f10 = np.roll(u, -1, 0)
    f11 = np.roll(np.roll(u, -1, 0), -1, 1)
    f01 = np.roll(u, -1, 1)
    corners = [f00, f10, f11, f01]
    offs = [(0, 0), (1, 0), (1, 1), (0, 1)]
    I, J = np.meshgrid(np.arange(grid.cells[0]), np.arange(grid.cells[1]), indexing="ij")
    pos = [c > 0 for c in corners]
    segs = []
    # edges: 0 bottom (c0-c1), 1 right (c1-c2), 2 top (c2-c3), 3 left (c3-c0)
    edge_pts = []
    edge_cross = []
    for e in range(4):
        a, b = e, (e + 1) % 4
        fa, fb = corners[a], corners[b]
        cross = pos[a] != pos[b]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(cross, fa / (fa - fb), 0.0)
        oa, ob = np.array(offs[a]), np.array(offs[b])
        px = (I + oa[0] + t * (ob[0] - oa[0])) * hx
        py = (J + oa[1] + t * (ob[1] - oa[1])) * hy
        edge_pts.append(np.stack([px, py], axis=-1))
        edge_cross.append(cross)
    cnt = sum(c.astype(int) for c in edge_cross)
    two = cnt == 2
    if np.any(two):
        idx = np.argwhere(two)
        for i, j in idx:
            es = [e for e in range(4) if edge_cross[e][i, j]]
            segs.append([edge_pts[es[0]][i, j], edge_pts[es[1]][i, j]])
    four = cnt == 4
    if np.any(four):
        center = 0.25 * (f00 + f10 + f11 + f01)
        for i, j in np.argwhere(four):
            if (center[i, j] > 0) == pos[0][i, j]:
                pairs = [(0, 1), (2, 3)]
            else:
                pairs = [(0, 3), (1, 2)]
            for a, b in pairs:
                segs.append([edge_pts[a][i, j], edge_pts[b][i, j]])
    return segs


_CUBE_TETS = [
    (0, 1, 3, 7), (0, 1, 5, 7), (0, 2, 3, 7), (0, 2, 6, 7), (0, 4, 5, 7), (0, 4, 6, 7),
]


def _marching_tets(u, grid):
    h = grid.h
    verts = [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]
    vals = []
    for off in verts:
        v = u
        for ax, o in enumerate(off):
            if o:
                v = np.roll(v, -1, ax)
        vals.append(v)
    base = np.stack(np.meshgrid(*[np.arange(c) for c in grid.cells], indexing="ij"), axis=-1)
    tris = []
    for tet in _CUBE_TETS:
        f = np.stack([vals[k] for k in tet], axis=-1)
        pos = f > 0
        npos = pos.sum(axis=-1)
        active = (npos > 0) & (npos < 4)
        for idx in np.argwhere(active):
            fv = f[tuple(idx)]
            pv = pos[tuple(idx)]
            P = [(base[tuple(idx)] + np.array(verts[k])) * h for k in tet]
            ins = [a for a in range(4) if pv[a]]
            out = [a for a in range(4) if not pv[a]]
            pts = []
            for a in ins:
                for b in out:
                    t = fv[a] / (fv[a] - fv[b])
                    pts.append(P[a] + t * (P[b] - P[a]))
            if len(pts) == 3:
                tris.append(pts)
            else:
                tris.append([pts[0], pts[1], pts[3]])
                tris.append([pts[0], pts[3], pts[2]])
    return tris
