"""Periodic grids, conformal weights and discrete calculus.

Scalar fields are arrays of shape ``grid.shape``; vector fields carry an extra
trailing axis of length ``n``.  Cell ``j`` sits at ``x = j * h``.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

MIN_CELLS = 8


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    cells: tuple[int, ...]
    lengths: tuple[float, ...] | None = None

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        object.__setattr__(self, "cells", cells)
        if not 1 <= len(cells) <= 3:
            raise GridError("grid dimension must be 1, 2 or 3")
        if min(cells) < MIN_CELLS:
            raise GridError(f"need at least {MIN_CELLS} cells per axis")
        lengths = (1.0,) * len(cells) if self.lengths is None else tuple(float(a) for a in self.lengths)
        if len(lengths) != len(cells) or min(lengths) <= 0:
            raise GridError("lengths must be positive, one per axis")
        object.__setattr__(self, "lengths", lengths)

    @property
    def n(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def h(self) -> np.ndarray:
        return np.array(self.lengths) / np.array(self.cells)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axes(self):
        return [np.arange(c) * hh for c, hh in zip(self.cells, self.h)]

    def coords(self) -> np.ndarray:
        """Cell positions, shape ``(*cells, n)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def check(self, u, vector: bool = False):
        u = np.asarray(u, dtype=float)
        want = self.shape + ((self.n,) if vector else ())
        if u.shape != want:
            raise GridError(f"field shape {u.shape} does not match grid {want}")
        if not np.all(np.isfinite(u)):
            raise GridError("field has non-finite values")
        return u

    def sample(self, func, tol: float = 1e-9):
        """Evaluate ``func(x)`` (x of shape (..., n)) at cell positions.

        The function must be periodic; this is checked by re-evaluating with
        every coordinate shifted by one period.
        """
        x = self.coords()
        u = np.asarray(func(x), dtype=float)
        L = np.array(self.lengths)
        for i in range(self.n):
            shift = np.zeros(self.n)
            shift[i] = L[i]
            if np.max(np.abs(np.asarray(func(x + shift), dtype=float) - u)) > tol * (1 + np.max(np.abs(u))):
                raise GridError(f"function is not periodic along axis {i}")
        return u

    def periodic_delta(self, x, center):
        """Minimal-image displacement ``x - center``."""
        L = np.array(self.lengths)
        d = np.asarray(x) - np.asarray(center, dtype=float)
        return d - L * np.round(d / L)

    def as_dict(self):
        return {"dims": list(self.cells), "lengths": list(self.lengths)}


@dataclass
class ConformalMetric:
    """Metric ``e^{2 phi} |dx|^2`` on the torus; ``phi = None`` is flat."""

    grid: Grid
    phi: np.ndarray | None = None
    _vol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.phi is not None:
            self.phi = self.grid.check(self.phi)
        n = self.grid.n
        w = self.grid.cell_volume
        self._vol = np.full(self.grid.shape, w) if self.phi is None else w * np.exp(n * self.phi)

    @property
    def flat(self) -> bool:
        return self.phi is None or not np.any(self.phi)

    @property
    def vol(self) -> np.ndarray:
        """Cell volumes ``h^n e^{n phi}``."""
        return self._vol

    @property
    def inv_scale(self):
        """Factor ``e^{-phi}`` mapping coordinate gradients to orthonormal components."""
        return 1.0 if self.phi is None else np.exp(-self.phi)


def flat_metric(grid: Grid) -> ConformalMetric:
    return ConformalMetric(grid)


def _tree_sum(a):
    # pairwise summation in a fixed order, independent of threading
    return float(np.sum(np.ascontiguousarray(a).ravel()))


def grad(u, grid: Grid) -> np.ndarray:
    """Centered periodic difference, shape ``(*cells, n)``."""
    u = grid.check(u)
    out = np.empty(grid.shape + (grid.n,))
    for i, h in enumerate(grid.h):
        out[..., i] = (np.roll(u, -1, axis=i) - np.roll(u, 1, axis=i)) / (2 * h)
    return out


def div(X, grid: Grid, metric: ConformalMetric | None = None) -> np.ndarray:
    """Negative adjoint of :func:`grad` for the volume-weighted cell sum."""
    X = grid.check(X, vector=True)
    vol = None if metric is None or metric.flat else metric.vol
    out = np.zeros(grid.shape)
    for i, h in enumerate(grid.h):
        Y = X[..., i] if vol is None else vol * X[..., i]
        out += (np.roll(Y, -1, axis=i) - np.roll(Y, 1, axis=i)) / (2 * h)
    return out if vol is None else out / vol


def corners(n: int):
    """All one-sided stencil choices: 0 = backward, 1 = forward, per axis."""
    return list(itertools.product((0, 1), repeat=n))


def one_sided(u, grid: Grid, i: int, forward: int):
    h = grid.h[i]
    if forward:
        return (np.roll(u, -1, axis=i) - u) / h
    return (u - np.roll(u, 1, axis=i)) / h


def one_sided_T(Y, grid: Grid, i: int, forward: int):
    """Transpose of :func:`one_sided` under the plain cell sum."""
    h = grid.h[i]
    if forward:
        return (np.roll(Y, 1, axis=i) - Y) / h
    return (Y - np.roll(Y, -1, axis=i)) / h


def corner_gradients(u, grid: Grid):
    """Stacked one-sided gradients, shape ``(2^n, *cells, n)``."""
    n = grid.n
    cs = corners(n)
    out = np.empty((len(cs),) + grid.shape + (n,))
    fwd = [one_sided(u, grid, i, 1) for i in range(n)]
    bwd = [one_sided(u, grid, i, 0) for i in range(n)]
    for k, s in enumerate(cs):
        for i in range(n):
            out[k, ..., i] = fwd[i] if s[i] else bwd[i]
    return out


def corner_gradients_T(Y, grid: Grid):
    """Transpose of :func:`corner_gradients` under the plain cell sum."""
    n = grid.n
    cs = corners(n)
    fsum = [np.zeros(grid.shape) for _ in range(n)]
    bsum = [np.zeros(grid.shape) for _ in range(n)]
    for k, s in enumerate(cs):
        for i in range(n):
            (fsum if s[i] else bsum)[i] += Y[k, ..., i]
    out = np.zeros(grid.shape)
    for i in range(n):
        out += one_sided_T(fsum[i], grid, i, 1) + one_sided_T(bsum[i], grid, i, 0)
    return out


def laplacian_symbol(grid: Grid) -> np.ndarray:
    """Fourier symbol of the positive 3-point Laplacian, per axis, shape ``(n, *cells)``."""
    out = []
    for i, (c, h) in enumerate(zip(grid.cells, grid.h)):
        k = 2 * np.pi * np.fft.fftfreq(c)
        s = (2 - 2 * np.cos(k)) / h**2
        shape = [1] * grid.n
        shape[i] = c
        out.append(np.broadcast_to(s.reshape(shape), grid.shape))
    return np.stack(out)


def integrate(f, grid: Grid, metric: ConformalMetric | None = None) -> float:
    f = grid.check(f)
    vol = grid.cell_volume if metric is None else metric.vol
    return _tree_sum(f * vol)


def inner(a, b, grid: Grid, metric: ConformalMetric | None = None) -> float:
    vol = grid.cell_volume if metric is None else metric.vol
    if a.ndim > grid.n:
        return _tree_sum(np.sum(a * b, axis=-1) * vol)
    return _tree_sum(a * b * vol)


def ball_mass(f, grid: Grid, center, r: float, metric: ConformalMetric | None = None) -> float:
    """Integral of ``f`` over the periodic ball ``B_r(center)``."""
    if r <= 0 or r > 0.5 * min(grid.lengths):
        raise GridError("radius must lie in (0, half the smallest period]")
    f = grid.check(f)
    d = grid.periodic_delta(grid.coords(), center)
    mask = np.sum(d * d, axis=-1) <= r * r
    vol = grid.cell_volume if metric is None else metric.vol
    return _tree_sum(np.where(mask, f * vol, 0.0))


def interpolate(f, grid: Grid, points) -> np.ndarray:
    """Periodic multilinear interpolation of a scalar field at ``points`` (m, n)."""
    pts = np.asarray(points, dtype=float)
    idx = (pts / grid.h).T
    return map_coordinates(np.asarray(f, dtype=float), idx, order=1, mode="grid-wrap")


def line_slice(f, grid: Grid, base, direction, n: int, length: float | None = None):
    """Sample ``f`` along the periodic line ``base + s * direction``.

    Returns ``(s, values)`` with ``n`` equispaced parameters in ``[0, length)``;
    by default ``length`` is the smallest period of the line when the direction
    is axis-aligned and the largest torus length otherwise.
    """
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    if length is None:
        nz = np.flatnonzero(np.abs(d) > 1e-14)
        length = grid.lengths[nz[0]] if len(nz) == 1 else max(grid.lengths)
    s = np.arange(n) * (length / n)
    pts = np.asarray(base, dtype=float)[None, :] + s[:, None] * d[None, :]
    return s, interpolate(f, grid, pts)


# -- snapshots -------------------------------------------------------------

class SnapshotError(ValueError):
    pass


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def save_snapshot(path, u, grid: Grid, epsilon=None, delta=None, tags=None):
    """Write ``path`` (raw little-endian float64, row-major) and ``path.json``."""
    path = Path(path)
    u = np.asarray(u, dtype="<f8")
    if u.shape[: grid.n] != grid.shape:
        raise SnapshotError("field does not match grid")
    header = {
        "dims": list(u.shape),
        "lengths": list(grid.lengths),
        "epsilon": epsilon,
        "delta": delta,
        "tags": dict(tags or {}),
    }
    _atomic_write(path, np.ascontiguousarray(u).tobytes(order="C"))
    _atomic_write(path.with_name(path.name + ".json"),
                  (json.dumps(header, sort_keys=True, indent=1) + "\n").encode())
    return path


def load_snapshot(path):
    """Return ``(u, grid, header)``."""
    path = Path(path)
    try:
        header = json.loads(path.with_name(path.name + ".json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SnapshotError(f"cannot read snapshot header: {exc}") from exc
    dims = tuple(int(d) for d in header["dims"])
    raw = path.read_bytes()
    if len(raw) != 8 * math.prod(dims):
        raise SnapshotError("snapshot length does not match its header")
    u = np.frombuffer(raw, dtype="<f8").reshape(dims).astype(float)
    lengths = header["lengths"]
    grid = Grid(dims[: len(lengths)], tuple(lengths))
    return u, grid, header
