"""Critical points: residuals, descent, Newton refinement and Hessian spectra."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.linalg import LinearOperator, cg, minres

from .domain import laplacian_symbol
from .energy import EnergyParams, HessianOperator, energy, grad_energy

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


@dataclass
class CriticalReport:
    residual_sup: float
    residual_l2: float
    energy: float
    eigenvalues: list[float] = field(default_factory=list)
    eig_residuals: list[float] = field(default_factory=list)
    morse_index: int | None = None
    overshoot: float = 0.0
    converged: bool = False
    iterations: int = 0
    history: list[float] = field(default_factory=list)

    @property
    def bounded(self) -> bool:
        return self.overshoot <= 1e-6

    def as_dict(self):
        return asdict(self)


def el_residual(u, p: EnergyParams) -> np.ndarray:
    """Discrete Euler-Lagrange residual (the energy gradient per unit volume)."""
    return grad_energy(u, p)


def _norms(g, p):
    return float(np.max(np.abs(g))), float(np.sqrt(np.sum(g * g * p.vol)))


class FourierPreconditioner:
    """Inverse of ``eps * sum_i a_i L_i + shift`` on the flat torus (SPD)."""

    def __init__(self, p: EnergyParams, shift: float | None = None):
        grid = p.grid
        if shift is None:
            shift = float(max(p.potential.d2W(np.array([-1.0, 1.0])))) / p.epsilon
        if shift <= 0:
            raise SolverError("preconditioner shift must be positive")
        weight = float(np.mean(p.m2 * np.asarray(p.scale) ** 2))
        diag = np.diag(p.integrand.A) if p.integrand.is_quadratic else np.ones(grid.n)
        L = laplacian_symbol(grid)
        self.symbol = p.epsilon * weight * np.tensordot(diag, L, axes=(0, 0)) + shift
        self.shape = grid.shape

    def __call__(self, r):
        return np.real(np.fft.ifftn(np.fft.fftn(r) / self.symbol))


def gradient_flow(u0, p: EnergyParams, dt: float | None = None, steps: int = 1000,
                  tol: float = 1e-8, precondition: bool = True, max_backtracks: int = 40):
    """Backtracking descent on the discrete energy.

    With ``precondition`` the step is taken along ``-P grad E`` where ``P`` is
    the Fourier preconditioner and the initial step is 1; without it the
    initial step is ``eps * h^2 / 4``.  Returns ``(u, trace)`` where ``trace``
    is a list of ``(step, energy, residual_sup, dt)``.
    """
    u = p.grid.check(u0).copy()
    P = FourierPreconditioner(p) if precondition else (lambda r: r)
    if dt is None:
        dt = 1.0 if precondition else p.epsilon * float(np.min(p.grid.h)) ** 2 / 4
    E = energy(u, p)
    g = grad_energy(u, p)
    trace = [(0, E, float(np.max(np.abs(g))), dt)]
    for k in range(1, steps + 1):
        if np.max(np.abs(g)) < tol:
            break
        d = P(g)
        slope = float(np.sum(g * d * p.vol))
        for _ in range(max_backtracks):
            trial = u - dt * d
            Et = energy(trial, p)
            if Et <= E - 1e-4 * dt * slope:
                break
            dt *= 0.5
        else:
            if E - Et >= 0 and slope * dt < 1e-13 * max(abs(E), 1.0):
                break
            raise SolverError(f"line search failed at step {k}")
        u, E = trial, Et
        g = grad_energy(u, p)
        trace.append((k, E, float(np.max(np.abs(g))), dt))
        dt *= 1.5
    return u, trace


def _weighted(p):
    return p.vol if np.ndim(p.vol) else np.full(p.grid.shape, p.vol)


def newton_refine(u0, p: EnergyParams, tol: float = 1e-9, max_iter: int = 50,
                  k_eig: int = 3, inner_rtol: float = 1e-10, spectrum_check: bool = True):
    """Damped Newton iteration on the Euler-Lagrange residual.

    Inner solves use preconditioned MINRES on the symmetric (indefinite)
    Hessian; globalization is a backtracking line search on ``|grad E|^2``.
    Returns ``(u, CriticalReport)``.
    """
    if p.delta <= 0:
        raise SolverError("Newton refinement needs delta > 0")
    grid = p.grid
    u = grid.check(u0).copy()
    vol = _weighted(p)
    P = FourierPreconditioner(p)
    N = u.size

    def merit(g):
        return float(np.sum(g * g * vol))

    g = grad_energy(u, p)
    history = [float(np.max(np.abs(g)))]
    it = 0
    converged = history[-1] <= tol
    shift = 0.0
    while not converged and it < max_iter:
        it += 1
        H = HessianOperator(u, p)

        def mv(x, H=H, shift=shift):
            x = x.reshape(grid.shape)
            return (vol * (H(x) + shift * x)).ravel()

        A = LinearOperator((N, N), matvec=mv, dtype=float)
        M = LinearOperator((N, N), matvec=lambda r: P(r.reshape(grid.shape) / vol).ravel(),
                           dtype=float)
        rhs = -(vol * g).ravel()
        step, info = minres(A, rhs, M=M, rtol=inner_rtol, maxiter=2000)
        if info < 0 or not np.all(np.isfinite(step)):
            raise SolverError("inner Krylov solve broke down")
        step = step.reshape(grid.shape)
        m0 = merit(g)
        t = 1.0
        accepted = False
        for _ in range(30):
            trial = u + t * step
            gt = grad_energy(trial, p)
            if merit(gt) <= (1 - 1e-4 * t) * m0:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # indefinite model far from a critical point: regularize and retry
            shift = max(2 * shift, 1.0 / p.epsilon)
            log.debug("newton: no decrease, shift -> %g", shift)
            if shift > 1e6 / p.epsilon:
                break
            continue
        shift = 0.0 if t == 1.0 else shift * 0.5
        u, g = trial, gt
        history.append(float(np.max(np.abs(g))))
        converged = history[-1] <= tol
        if len(history) > 6 and history[-1] > 0.5 * history[-6]:
            break  # stagnated at the rounding floor or in a bad basin
    rs, r2 = _norms(g, p)
    report = CriticalReport(
        residual_sup=rs,
        residual_l2=r2,
        energy=energy(u, p),
        overshoot=float(max(np.max(np.abs(u)) - 1.0, 0.0)),
        converged=converged,
        iterations=it,
        history=history,
    )
    if spectrum_check:
        vals, res, idx = spectrum(u, p, k_eig)
        report.eigenvalues, report.eig_residuals, report.morse_index = vals, res, idx
    if not converged:
        err = SolverError(f"Newton did not converge: residual {rs:.3e} after {it} iterations")
        err.report = report
        err.field = u
        raise err
    return u, report


def lanczos(op, n_dim, k, inner, rng, max_steps=120, tol=1e-10):
    """Lanczos with full reorthogonalization for the largest eigenvalues of ``op``.

    ``op`` must be self-adjoint for ``inner``.  Returns Ritz values (descending)
    and the corresponding Ritz vectors as a list of flat arrays.
    """
    q = rng.standard_normal(n_dim)
    q /= np.sqrt(inner(q, q))
    Q = [q]
    alpha, beta = [], []
    ritz_prev = None
    for j in range(max_steps):
        w = op(Q[-1])
        a = inner(Q[-1], w)
        alpha.append(a)
        for _ in range(2):
            for qi in Q:
                w = w - inner(qi, w) * qi
        b = np.sqrt(max(inner(w, w), 0.0))
        T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        vals = np.linalg.eigvalsh(T)[::-1]
        if len(vals) >= k + 2:
            top = vals[:k]
            if ritz_prev is not None and np.max(np.abs(top - ritz_prev)) <= tol * np.max(np.abs(top)):
                break
            ritz_prev = top
        if b < 1e-14 * max(1.0, abs(a)):
            break
        beta.append(b)
        Q.append(w / b)
    m = len(alpha)
    T = np.diag(alpha) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
    vals, vecs = np.linalg.eigh(T)
    order = np.argsort(vals)[::-1][:k]
    Qm = np.array(Q[:m])
    return vals[order], [vecs[:, i] @ Qm for i in order]


def spectrum(u, p: EnergyParams, k: int = 3, seed: int = 0, index_tol: float = 1e-6):
    """Smallest ``k`` Hessian eigenvalues with residuals and the Morse-index estimate.

    Lanczos runs on the shift-inverted operator ``(H - sigma)^{-1}`` with
    ``sigma`` below the spectrum, so the wanted eigenvalues are the dominant
    ones; inner solves are preconditioned conjugate gradients.  Eigenvalues
    are reported as Rayleigh quotients of ``H`` itself.
    """
    if p.delta <= 0:
        raise SolverError("spectrum needs delta > 0")
    if not 1 <= k <= 10:
        raise SolverError("k must lie in [1, 10]")
    grid = p.grid
    u = grid.check(u)
    vol = _weighted(p).ravel()
    H = HessianOperator(u, p)
    N = u.size
    eps = p.epsilon
    sigma = H.diagonal_shift() - 0.5 / eps
    P = FourierPreconditioner(p, shift=max(1.0 / eps, abs(sigma)))

    def hmv(x):
        return H(x.reshape(grid.shape)).ravel()

    A = LinearOperator((N, N), matvec=lambda x: vol * (hmv(x) - sigma * x), dtype=float)
    M = LinearOperator((N, N), matvec=lambda r: P(r.reshape(grid.shape)).ravel() / vol, dtype=float)

    def shift_invert(x):
        y, info = cg(A, vol * x, M=M, rtol=1e-13, atol=0.0, maxiter=5000)
        if info < 0:
            raise SolverError("inner solve broke down in spectrum")
        return y

    def inner(a, b):
        return float(np.sum(a * b * vol))

    rng = np.random.default_rng(seed)
    _, vecs = lanczos(shift_invert, N, min(k + 3, N), inner, rng, max_steps=min(N, 40 + 6 * k))
    # Rayleigh-Ritz with H on the Ritz subspace
    V = np.array(vecs)
    Vh = np.array([hmv(v) for v in V])
    G = (V * vol) @ V.T
    Hs = (V * vol) @ Vh.T
    Hs = 0.5 * (Hs + Hs.T)
    lam, C = eigh(Hs, G)
    out_vals, out_res = [], []
    for i in np.argsort(lam)[:k]:
        x = C[:, i] @ V
        x /= np.sqrt(inner(x, x))
        hx = hmv(x)
        rq = inner(x, hx)
        out_vals.append(float(rq))
        out_res.append(float(np.sqrt(inner(hx - rq * x, hx - rq * x))))
    index = int(sum(v < -index_tol / eps for v in out_vals))
    return out_vals, out_res, index


def hessian_norm_estimate(u, p: EnergyParams) -> float:
    """Upper bound on ``|H|`` from the stencil structure."""
    h = p.grid.h
    eps = p.epsilon
    A = p.integrand.A if p.integrand.is_quadratic else np.eye(p.grid.n) * 2.0
    lam_max = float(np.max(np.linalg.eigvalsh(A)))
    grad_part = eps * lam_max * float(np.max(p.m2 * np.asarray(p.scale) ** 2)) * float(np.sum(4 / h**2))
    return grad_part + float(np.max(np.abs(p.potential.d2W(u)))) / eps
