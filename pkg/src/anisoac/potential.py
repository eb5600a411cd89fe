"""Double-well potentials, the transition cost c_W and heteroclinic profiles."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad, solve_ivp
from scipy.interpolate import CubicHermiteSpline

FAMILIES = ("quartic", "cosine", "custom")

# 1 - |U| below which the heteroclinic is continued by its linearization
_TAIL_SWITCH = 1e-10


class PotentialError(ValueError):
    pass


@dataclass(eq=False)
class PotentialSpec:
    """A double-well potential W with wells at +-1.

    Built-in families are glued at ``|s| = glue_at`` to an asymptotically
    quadratic C^2 extension so that the growth conditions hold outside
    ``[-1, 1]``.  The ``custom`` family is the polynomial with the given
    coefficients (increasing degree) and is used as-is.
    """

    family: str = "quartic"
    coefficients: tuple[float, ...] = ()
    glue_at: float = 1.5
    claimed_c: float | None = None
    claimed_C: float | None = None
    _cw: float | None = field(default=None, init=False, repr=False)
    _profile: "Profile1D | None" = field(default=None, init=False, repr=False)
    _htable: tuple | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise PotentialError(f"unknown potential family {self.family!r}")
        if self.family == "custom":
            if len(self.coefficients) == 0:
                raise PotentialError("custom potential needs coefficients")
            self._poly = np.polynomial.Polynomial(np.asarray(self.coefficients, float))
            self._dpoly = self._poly.deriv()
            self._d2poly = self._dpoly.deriv()
        else:
            g = self.glue_at
            w0, w1, w2 = self._core(np.array([g]))
            self._glue = (float(w0[0]), float(w1[0]), float(w2[0]))

    # -- closed forms on the core interval -------------------------------
    def _core(self, s):
        if self.family == "quartic":
            return (1 - s * s) ** 2 / 4, s**3 - s, 3 * s * s - 1
        pi = math.pi
        return 1 + np.cos(pi * s), -pi * np.sin(pi * s), -(pi**2) * np.cos(pi * s)

    def _tail(self, t):
        # t = |s| - glue_at >= 0; returns W, dW/dt, d2W/dt2
        w0, w1, w2 = self._glue
        if self.family == "quartic":
            return w0 + w1 * t + 0.5 * w2 * t * t, w1 + w2 * t, np.full_like(t, w2)
        # cosine: curvature vanishes at the glue point, so a pure quadratic
        # cannot match; t^3/(1+t) is C^2-flat at 0 and quadratic at infinity
        return (
            w0 + w1 * t + t**3 / (1 + t),
            w1 + (2 * t**3 + 3 * t**2) / (1 + t) ** 2,
            (2 * t**3 + 6 * t**2 + 6 * t) / (1 + t) ** 3,
        )

    def evaluate(self, s):
        """Return ``(W, W', W'')`` at ``s`` (scalar or array)."""
        s = np.asarray(s, dtype=float)
        if not np.all(np.isfinite(s)):
            raise PotentialError("non-finite argument to the potential")
        if self.family == "custom":
            return self._poly(s), self._dpoly(s), self._d2poly(s)
        w, dw, d2w = (np.array(a, dtype=float) for a in self._core(s))
        outside = np.abs(s) > self.glue_at
        if np.any(outside):
            so = s[outside]
            tw, tdw, td2w = self._tail(np.abs(so) - self.glue_at)
            w[outside] = tw
            dw[outside] = np.sign(so) * tdw
            d2w[outside] = td2w
        return w, dw, d2w

    def W(self, s):
        return self.evaluate(s)[0]

    def dW(self, s):
        return self.evaluate(s)[1]

    def d2W(self, s):
        return self.evaluate(s)[2]

    def sqrt2W(self, s):
        return np.sqrt(2.0 * np.maximum(self.W(s), 0.0))


def make_potential(family="quartic", coefficients=()):
    return PotentialSpec(family=family, coefficients=tuple(coefficients))


def eval_potential(spec: PotentialSpec, s):
    """Evaluate ``(W(s), W'(s), W''(s))``."""
    w, dw, d2w = spec.evaluate(s)
    if np.ndim(w) == 0:
        return float(w), float(dw), float(d2w)
    return w, dw, d2w


def compute_cw(spec: PotentialSpec) -> float:
    """Transition cost ``c_W = int_{-1}^{1} sqrt(2 W)``, cached on the potential."""
    if spec._cw is not None:
        return spec._cw
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, err = quad(lambda s: float(spec.sqrt2W(s)), -1.0, 1.0,
                            epsabs=1e-13, epsrel=1e-13, limit=200)
        except IntegrationWarning as exc:
            raise PotentialError(f"c_W quadrature did not converge: {exc}") from exc
    if err > 1e-10:
        raise PotentialError(f"c_W quadrature error estimate {err:.2e} too large")
    if not val > 0:
        raise PotentialError("c_W must be positive; is W >= 0 on [-1, 1]?")
    spec._cw = float(val)
    return spec._cw


@dataclass
class Profile1D:
    """Samples of a monotone one-dimensional transition profile."""

    t: np.ndarray
    U: np.ndarray
    dU: np.ndarray
    rate_plus: float = math.sqrt(2.0)
    rate_minus: float = math.sqrt(2.0)

    def __post_init__(self):
        self._spline = CubicHermiteSpline(self.t, self.U, self.dU)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        t0, t1 = self.t[0], self.t[-1]
        out = np.empty_like(s)
        inside = (s >= t0) & (s <= t1)
        out[inside] = self._spline(s[inside])
        hi = s > t1
        out[hi] = 1 - (1 - self.U[-1]) * np.exp(-self.rate_plus * (s[hi] - t1))
        lo = s < t0
        out[lo] = -1 + (1 + self.U[0]) * np.exp(self.rate_minus * (s[lo] - t0))
        return out

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        t0, t1 = self.t[0], self.t[-1]
        out = np.empty_like(s)
        inside = (s >= t0) & (s <= t1)
        out[inside] = self._spline(s[inside], 1)
        hi = s > t1
        out[hi] = self.rate_plus * (1 - self.U[-1]) * np.exp(-self.rate_plus * (s[hi] - t1))
        lo = s < t0
        out[lo] = self.rate_minus * (1 + self.U[0]) * np.exp(self.rate_minus * (s[lo] - t0))
        return out


def _half_heteroclinic(spec, t_end, sign):
    """Integrate U' = sqrt(2W(U)) from U(0)=0 towards sign*1.

    Returns a dense callable on [0, |t_end|] (in the direction of t_end)."""
    target = float(sign)
    kappa = math.sqrt(float(spec.d2W(target)))

    def rhs(t, y):
        return [float(spec.sqrt2W(y[0]))]

    def near_well(t, y):
        return _TAIL_SWITCH - (1 - sign * y[0])

    near_well.terminal = True
    sol = solve_ivp(rhs, (0.0, t_end), [0.0], method="DOP853", rtol=1e-13,
                    atol=1e-15, dense_output=True, events=near_well)
    if sol.status < 0:
        raise PotentialError(f"heteroclinic integration failed: {sol.message}")
    if sol.t_events[0].size:
        t_sw = float(sol.t_events[0][0])
        gap = 1 - sign * float(sol.y_events[0][0][0])
    else:
        t_sw, gap = float(sol.t[-1]), None

    def evaluate(t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        before = np.abs(t) <= abs(t_sw)
        if np.any(before):
            out[before] = sol.sol(t[before])[0]
        if np.any(~before):
            # linearized tail: 1 - sign U decays like exp(-kappa |t - t_sw|)
            out[~before] = target - sign * gap * np.exp(-kappa * np.abs(t[~before] - t_sw))
        return out

    return evaluate, kappa


def heteroclinic(spec: PotentialSpec, t_max: float = 40.0, n: int = 8001) -> Profile1D:
    """Heteroclinic profile ``U' = sqrt(2 W(U))``, ``U(0) = 0`` sampled on [-t_max, t_max]."""
    if not t_max > 0 or n < 2:
        raise ValueError("need t_max > 0 and n >= 2")
    t = np.linspace(-t_max, t_max, n)
    U = np.empty(n)
    up, k_plus = _half_heteroclinic(spec, t_max, +1)
    down, k_minus = _half_heteroclinic(spec, -t_max, -1)
    pos = t >= 0
    U[pos] = up(t[pos])
    U[~pos] = down(t[~pos])
    U = np.clip(U, -1.0, 1.0)
    return Profile1D(t=t, U=U, dU=spec.sqrt2W(U), rate_plus=k_plus, rate_minus=k_minus)


def default_profile(spec: PotentialSpec) -> Profile1D:
    if spec._profile is None:
        spec._profile = heteroclinic(spec)
    return spec._profile


def truncated_profile(spec: PotentialSpec, gamma: float, t):
    """Truncated heteroclinic: U on [-gamma, gamma], compressed tails reaching
    +-1 exactly at |t| = 2 gamma, constant beyond."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("non-finite argument")
    U = default_profile(spec)
    out = np.empty_like(t)
    out[t <= -2 * gamma] = -1.0
    out[t >= 2 * gamma] = 1.0
    mid = np.abs(t) <= gamma
    out[mid] = U(t[mid])
    left = (t > -2 * gamma) & (t < -gamma)
    out[left] = U(gamma * t[left] / (2 * gamma + t[left]))
    right = (t > gamma) & (t < 2 * gamma)
    out[right] = U(gamma * t[right] / (2 * gamma - t[right]))
    return out if out.ndim else float(out)


def truncated_profile_derivative(spec: PotentialSpec, gamma: float, t):
    t = np.asarray(t, dtype=float)
    U = default_profile(spec)
    out = np.zeros_like(t)
    mid = np.abs(t) <= gamma
    out[mid] = U.derivative(t[mid])
    left = (t > -2 * gamma) & (t < -gamma)
    tl = t[left]
    out[left] = U.derivative(gamma * tl / (2 * gamma + tl)) * 2 * gamma**2 / (2 * gamma + tl) ** 2
    right = (t > gamma) & (t < 2 * gamma)
    tr = t[right]
    out[right] = U.derivative(gamma * tr / (2 * gamma - tr)) * 2 * gamma**2 / (2 * gamma - tr) ** 2
    return out


def h_table(spec: PotentialSpec, n: int = 10001):
    """Tabulated ``H(t) = int_0^t sqrt(2W)`` on [-1, 1] (cached)."""
    if spec._htable is None or spec._htable[0].size != n:
        from scipy.integrate import cumulative_simpson

        s = np.linspace(-1.0, 1.0, n)
        f = spec.sqrt2W(s)
        H = cumulative_simpson(f, x=s, initial=0.0)
        H -= np.interp(0.0, s, H)
        spec._htable = (s, H)
    return spec._htable


@dataclass
class PotentialAudit:
    passed: bool
    violations: list[tuple[str, float]]
    c_concavity: float
    c_growth: float
    C_growth: float
    C_slope: float
    worst_margins: dict[str, float]

    def as_dict(self):
        return {
            "passed": self.passed,
            "violations": [{"clause": c, "at": x} for c, x in self.violations],
            "c_concavity": self.c_concavity,
            "c_growth": self.c_growth,
            "C_growth": self.C_growth,
            "C_slope": self.C_slope,
            "worst_margins": self.worst_margins,
        }


def audit_potential(spec: PotentialSpec, n: int = 20001) -> PotentialAudit:
    """Sample the structural conditions on W and estimate their constants."""
    viol: list[tuple[str, float]] = []
    margins: dict[str, float] = {}

    w_wells, _, d2_wells = spec.evaluate(np.array([-1.0, 1.0]))
    margins["W(+-1)=0"] = float(np.max(np.abs(w_wells)))
    if margins["W(+-1)=0"] > 1e-12:
        viol.append(("W(+-1)=0", float([-1.0, 1.0][int(np.argmax(np.abs(w_wells)))])))
    margins["W''(+-1)>0"] = float(np.min(d2_wells))
    if not np.min(d2_wells) > 0:
        viol.append(("W''(+-1)>0", float([-1.0, 1.0][int(np.argmin(d2_wells))])))

    s_all = np.linspace(-10, 10, 4 * n)
    s_all = s_all[np.abs(np.abs(s_all) - 1) > 1e-3]
    w_all = spec.W(s_all)
    margins["W>0 off wells"] = float(np.min(w_all))
    if not np.min(w_all) > 0:
        viol.append(("W>0 off wells", float(s_all[np.argmin(w_all)])))

    s_in = np.linspace(-1 + 1e-3, 1 - 1e-3, n)
    w, dw, d2w = spec.evaluate(s_in)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq2 = (2 * w * d2w - dw * dw) / (4 * np.maximum(w, 1e-300) ** 1.5)
    worst = float(np.nanmax(sq2))
    margins["(sqrtW)''<=-c"] = worst
    if not worst < 0:
        viol.append(("(sqrtW)''<=-c", float(s_in[np.nanargmax(sq2)])))

    s_out = np.linspace(1 + 1e-6, 10, n)
    slope_p = spec.dW(s_out)
    slope_m = spec.dW(-s_out)
    margins["W'>0 on (1,inf)"] = float(np.min(slope_p))
    margins["W'<0 on (-inf,-1)"] = float(-np.max(slope_m))
    if not np.min(slope_p) > 0:
        viol.append(("W'>0 on (1,inf)", float(s_out[np.argmin(slope_p)])))
    if not np.max(slope_m) < 0:
        viol.append(("W'<0 on (-inf,-1)", float(-s_out[np.argmax(slope_m)])))
    C_slope = float(max(np.max(np.abs(slope_p) / s_out), np.max(np.abs(slope_m) / s_out)))

    s_far = np.concatenate([np.linspace(2, 10, n), -np.linspace(2, 10, n)])
    ratio = spec.W(s_far) / s_far**2
    c_growth, C_growth = float(np.min(ratio)), float(np.max(ratio))
    margins["c s^2 <= W"] = c_growth
    if not c_growth > 0:
        viol.append(("c s^2 <= W", float(s_far[np.argmin(ratio)])))
    if spec.claimed_c is not None and c_growth < spec.claimed_c:
        viol.append(("claimed c too large", float(s_far[np.argmin(ratio)])))
    if spec.claimed_C is not None and C_growth > spec.claimed_C:
        viol.append(("claimed C too small", float(s_far[np.argmax(ratio)])))

    return PotentialAudit(
        passed=not viol,
        violations=viol,
        c_concavity=-worst,
        c_growth=c_growth,
        C_growth=C_growth,
        C_slope=C_slope,
        worst_margins=margins,
    )
