"""Mountain-pass paths: sweep initialization, string relaxation with a
climbing node, and saddle extraction."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .critical import CriticalReport, FourierPreconditioner, newton_refine
from .domain import load_snapshot, save_snapshot
from .energy import EnergyParams, energy, grad_energy
from .potential import truncated_profile


class PathError(ValueError):
    pass


@dataclass
class PathOfFields:
    nodes: np.ndarray  # shape (K, *cells)
    energies: np.ndarray = field(default=None)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.shape[0] < 3:
            raise PathError("a path needs at least three nodes")
        if not (np.all(self.nodes[0] == -1.0) and np.all(self.nodes[-1] == 1.0)):
            raise PathError("path endpoints must be the constants -1 and +1")

    @property
    def K(self) -> int:
        return self.nodes.shape[0]

    def evaluate(self, p: EnergyParams):
        self.energies = np.array([energy(u, p) for u in self.nodes])
        return self.energies


def default_gamma(epsilon: float) -> float:
    return 2.0 * math.log(1.0 / epsilon)


def init_sweep_path(p: EnergyParams, direction: int = 1, K: int = 33, gamma: float | None = None,
                    center: float = 0.0, anchored: bool = False) -> PathOfFields:
    """Sweep a band of the +1 phase across the torus along axis ``direction``.

    The band has two fronts at signed distance ``w`` from the line
    ``x_direction = center``; each front carries the truncated heteroclinic
    profile scaled by ``eps * F(nu)``.  As ``w`` grows from ``-2 gamma eps F``
    (all -1) to ``L/2 + 2 gamma eps F`` (all +1) the band nucleates, widens
    and fills the torus.  With ``anchored`` the lower front stays at
    ``center`` and only the upper front travels, once around the torus.
    """
    if K < 8:
        raise PathError("the sweep path needs K >= 8")
    grid = p.grid
    if not 0 <= direction < grid.n:
        raise PathError("direction must be a grid axis")
    eps = p.epsilon
    nu = np.zeros(grid.n)
    nu[direction] = 1.0
    Fnu = float(p.integrand.F0(nu))
    L = grid.lengths[direction]
    if gamma is None:
        gamma = default_gamma(eps)
    # both truncated layers must fit in one period
    gamma = min(gamma, L / (8.0 * eps * Fnu))
    width = 4.0 * gamma * eps * Fnu
    if width < 4.0 * eps * Fnu or 2 * width > L:
        raise PathError("band width below 4 eps F(nu) or layers do not fit in the period")
    x = grid.coords()[..., direction]
    ws = np.linspace(-2 * gamma * eps * Fnu, L / 2 + 2 * gamma * eps * Fnu, K)
    nodes = np.empty((K,) + grid.shape)
    nodes[0] = -1.0
    nodes[-1] = 1.0
    for k in range(1, K - 1):
        c = center + ws[k] if anchored else center
        d = np.abs(x - c - L * np.round((x - c) / L))
        nodes[k] = truncated_profile(p.potential, gamma, (ws[k] - d) / (eps * Fnu))
    path = PathOfFields(nodes)
    path.evaluate(p)
    return path


def constant_path(p: EnergyParams, K: int = 3) -> PathOfFields:
    """Path through constant fields from -1 to +1."""
    levels = np.linspace(-1.0, 1.0, K)
    nodes = np.stack([np.full(p.grid.shape, c) for c in levels])
    path = PathOfFields(nodes)
    path.evaluate(p)
    return path


def minmax_value(path: PathOfFields) -> float:
    if path.energies is None:
        raise PathError("path energies not evaluated")
    return float(np.max(path.energies))


def _l2(a, vol):
    return float(np.sqrt(np.sum(a * a * vol)))


def _reparametrize(nodes, vol, lo, hi):
    """Equal-L^2-arclength redistribution of nodes ``lo..hi`` (ends fixed)."""
    seg = nodes[lo:hi + 1]
    m = seg.shape[0]
    if m <= 2:
        return
    lengths = np.array([_l2(seg[i + 1] - seg[i], vol) for i in range(m - 1)])
    s = np.concatenate([[0.0], np.cumsum(lengths)])
    if s[-1] <= 0:
        return
    targets = np.linspace(0.0, s[-1], m)
    new = seg.copy()
    for i in range(1, m - 1):
        j = int(np.clip(np.searchsorted(s, targets[i], side="right") - 1, 0, m - 2))
        t = (targets[i] - s[j]) / lengths[j] if lengths[j] > 0 else 0.0
        new[i] = (1 - t) * seg[j] + t * seg[j + 1]
    nodes[lo + 1:hi] = new[1:-1]


@dataclass
class RelaxResult:
    path: PathOfFields
    value: float
    argmax: int
    residual: float
    converged: bool
    rounds: int
    log: list = field(default_factory=list)


def _transverse(g, tangent, vol):
    tn = _l2(tangent, vol)
    if tn == 0:
        return g
    t = tangent / tn
    return g - float(np.sum(g * t * vol)) * t


def _checkpoint_write(directory, path, state):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid_state = state["grid"]
    for k, u in enumerate(path.nodes):
        save_snapshot(directory / f"node_{k:03d}.f64", u, _GridLike(grid_state), tags={"node": k})
    tmp = directory / "state.json.tmp"
    tmp.write_text(json.dumps(state, sort_keys=True, indent=1) + "\n")
    os.replace(tmp, directory / "state.json")


class _GridLike:
    def __init__(self, g):
        self.cells = tuple(g["dims"])
        self.lengths = tuple(g["lengths"])
        self.n = len(self.cells)
        self.shape = self.cells


def load_checkpoint(directory, p: EnergyParams, seed: int):
    """Return ``(path, state)`` from a checkpoint written by :func:`relax_path`."""
    directory = Path(directory)
    try:
        state = json.loads((directory / "state.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise PathError(f"cannot read checkpoint: {exc}") from exc
    if state["grid"] != p.grid.as_dict():
        raise PathError("checkpoint grid differs from the requested grid")
    if state["seed"] != seed:
        raise PathError(f"checkpoint seed {state['seed']} differs from requested seed {seed}")
    nodes = []
    for k in range(state["K"]):
        u, _, _ = load_snapshot(directory / f"node_{k:03d}.f64")
        if u.shape != p.grid.shape:
            raise PathError("checkpoint node does not match the grid")
        nodes.append(u)
    path = PathOfFields(np.stack(nodes))
    path.energies = np.array(state["energies"])
    return path, state


def relax_path(path: PathOfFields, p: EnergyParams, rounds: int = 500, tol: float = 1e-6,
               step: float = 0.5, climb: bool = True, climb_after: int = 0,
               checkpoint_dir=None, checkpoint_every: int = 0, seed: int = 0,
               resume_state: dict | None = None, stop_after: int | None = None) -> RelaxResult:
    """String relaxation with a climbing argmax node.

    Each round takes a preconditioned descent step on every interior node
    (with backtracking so that no node energy increases), an ascent-along-
    tangent step on the argmax node, and then redistributes the nodes on
    either side of the argmax node at equal L^2 spacing.  Endpoints never
    move.  Stops when the transverse residual of the argmax node is below
    ``tol`` (sup norm).
    """
    vol = p.vol if np.ndim(p.vol) else np.full(p.grid.shape, p.vol)
    P = FourierPreconditioner(p)
    nodes = path.nodes.copy()
    K = nodes.shape[0]
    if path.energies is None:
        path.evaluate(p)
    E = path.energies.copy()
    steps = np.full(K, step)
    start = 0
    log = []
    if resume_state is not None:
        start = resume_state["round"]
        steps = np.array(resume_state["steps"])
        log = [tuple(r) for r in resume_state["log"]]
    residual = math.inf
    kstar = int(np.argmax(E))
    converged = False
    r = start
    for r in range(start + 1, rounds + 1):
        kstar = int(np.argmax(E[1:-1])) + 1
        climbing = climb and r > climb_after
        grads = [None] * K
        for k in range(1, K - 1):
            grads[k] = grad_energy(nodes[k], p)
        tangent = nodes[kstar + 1] - nodes[kstar - 1]
        residual = float(np.max(np.abs(_transverse(grads[kstar], tangent, vol))))
        log.append((r, float(E[kstar]), kstar, residual))
        if residual < tol:
            converged = True
            break
        for k in range(1, K - 1):
            g = grads[k]
            d = P(g)
            if k == kstar and climbing:
                Pinv_t = np.real(np.fft.ifftn(np.fft.fftn(tangent) * P.symbol))
                coef = float(np.sum(g * tangent * vol)) / float(np.sum(tangent * Pinv_t * vol))
                nodes[k] = nodes[k] - steps[k] * (d - 2 * coef * tangent)
                E[k] = energy(nodes[k], p)
                continue
            slope = float(np.sum(g * d * vol))
            for _ in range(30):
                trial = nodes[k] - steps[k] * d
                Et = energy(trial, p)
                if Et <= E[k] - 1e-4 * steps[k] * slope:
                    break
                steps[k] *= 0.5
            else:
                trial, Et = nodes[k], E[k]
            nodes[k], E[k] = trial, Et
            steps[k] = min(step, steps[k] * 1.25)
        _reparametrize(nodes, vol, 0, kstar)
        _reparametrize(nodes, vol, kstar, K - 1)
        for k in range(1, K - 1):
            E[k] = energy(nodes[k], p)
        if checkpoint_dir is not None and checkpoint_every and r % checkpoint_every == 0:
            state = {
                "round": r,
                "K": K,
                "grid": p.grid.as_dict(),
                "seed": seed,
                "steps": steps.tolist(),
                "energies": E.tolist(),
                "log": [list(x) for x in log],
            }
            _checkpoint_write(checkpoint_dir, PathOfFields(nodes, E), state)
        if stop_after is not None and r >= stop_after:
            break
    out = PathOfFields(nodes, E)
    kstar = int(np.argmax(E[1:-1])) + 1
    return RelaxResult(out, float(E[kstar]), kstar, residual, converged, r, log)


def extract_saddle(path: PathOfFields, p: EnergyParams, tol: float = 1e-9, max_iter: int = 60,
                   k_eig: int = 3):
    """Newton refinement from the argmax node; returns ``(u, CriticalReport)``."""
    if path.energies is None:
        path.evaluate(p)
    k = int(np.argmax(path.energies))
    return newton_refine(path.nodes[k], p, tol=tol, max_iter=max_iter, k_eig=k_eig)


@dataclass
class ContinuationStep:
    delta: float
    energy: float
    residual: float
    c1_change: float
    report: CriticalReport


def delta_continuation(u, p: EnergyParams, deltas=(0.05, 0.02, 0.01), tol: float = 1e-9,
                       k_eig: int = 3):
    """Re-refine a saddle along decreasing delta, recording the C^1 change."""
    from .domain import grad

    steps = []
    prev = u
    for d in deltas:
        q = p.with_delta(d)
        u_new, rep = newton_refine(prev, q, tol=tol, k_eig=k_eig)
        du = u_new - prev
        c1 = float(np.max(np.abs(du)) + np.max(np.abs(grad(du, p.grid))))
        steps.append(ContinuationStep(d, rep.energy, rep.residual_sup, c1, rep))
        prev = u_new
    return prev, steps


@dataclass
class MountainPassResult:
    field: np.ndarray
    report: CriticalReport
    relax: RelaxResult
    minmax: float
    continuation: list = field(default_factory=list)


def mountain_pass(p: EnergyParams, direction: int = 1, K: int = 33, rounds: int = 300,
                  relax_tol: float = 1e-4, center: float = 0.0, anchored: bool = False,
                  tol: float = 1e-9, deltas=(), k_eig: int = 3, **relax_kw) -> MountainPassResult:
    """Sweep path, string relaxation, Newton extraction and optional delta continuation.

    The reported min-max value is the path maximum after relaxation.  The
    returned report belongs to the final field (after continuation).
    """
    path = init_sweep_path(p, direction, K, center=center, anchored=anchored)
    res = relax_path(path, p, rounds=rounds, tol=relax_tol, **relax_kw)
    u, rep = extract_saddle(res.path, p, tol=tol, k_eig=k_eig)
    steps = []
    if deltas:
        u, steps = delta_continuation(u, p, deltas, tol=tol, k_eig=k_eig)
        rep = steps[-1].report
    return MountainPassResult(u, rep, res, res.value, steps)
