"""Forecast and action spaces, grids, projections and the geometric constants
(diameter, bounding radius) that show up in every finite-time bound."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

MEMBERSHIP_TOL = 1e-9

KINDS = ("cube", "simplex", "hull")


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _as_point(z, dim: int) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (dim,):
        raise ValueError(f"expected a point of dimension {dim}, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("point has non-finite coordinates")
    return z


def project_simplex(z: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    m = z.shape[0]
    u = np.sort(z)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, m + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(z - theta, 0.0)


def min_norm_point(points: np.ndarray, tol: float = 1e-12, max_iter: int = 10_000):
    """Wolfe's algorithm: minimum-norm point of conv(points).

    Returns the point together with its convex weights over ``points``.
    """
    P = np.asarray(points, dtype=float)
    k = P.shape[0]
    scale = max(1.0, float(np.max(np.einsum("ij,ij->i", P, P))))
    j0 = int(np.argmin(np.einsum("ij,ij->i", P, P)))
    S = [j0]
    w = np.array([1.0])
    x = P[j0].copy()
    for _ in range(max_iter):
        j = int(np.argmin(P @ x))
        if x @ x - P[j] @ x <= tol * scale or j in S:
            break
        S.append(j)
        w = np.append(w, 0.0)
        while True:
            Q = P[S]
            n = len(S)
            M = np.zeros((n + 1, n + 1))
            M[:n, :n] = Q @ Q.T
            M[:n, n] = 1.0
            M[n, :n] = 1.0
            rhs = np.zeros(n + 1)
            rhs[n] = 1.0
            v = np.linalg.lstsq(M, rhs, rcond=None)[0][:n]
            if np.all(v > 1e-14):
                w = v
                break
            shrink = (v <= 1e-14) & (w - v > 0)
            theta = min(1.0, float(np.min(w[shrink] / (w[shrink] - v[shrink])))) if shrink.any() else 1.0
            w = theta * v + (1.0 - theta) * w
            keep = w > 1e-14
            if keep.all():
                keep[int(np.argmin(w))] = False
            S = [s for s, kp in zip(S, keep) if kp]
            w = w[keep]
            w = w / w.sum()
        x = w @ P[S]
    weights = np.zeros(k)
    weights[S] = w
    return x, weights


@dataclass(frozen=True)
class Space:
    """A forecast set ``C`` together with the finite action set ``A``.

    ``kind`` is ``"cube"`` for [0,1]^m, ``"simplex"`` for the probability
    simplex in R^m, or ``"hull"`` for the convex hull of a finite action set.
    """

    dim: int
    kind: str
    actions: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown space kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dimension must be positive")
        acts = np.atleast_2d(np.asarray(self.actions, dtype=float))
        if acts.shape[1] != self.dim:
            raise ValueError("action dimension does not match space dimension")
        object.__setattr__(self, "actions", _readonly(acts))
        if self.kind != "hull":
            for a in acts:
                if not self.contains(a):
                    raise ValueError(f"action {a} lies outside the forecast set")

    @classmethod
    def cube(cls, m: int) -> "Space":
        verts = np.array(list(itertools.product((0.0, 1.0), repeat=m)))
        return cls(m, "cube", verts)

    @classmethod
    def simplex(cls, m: int) -> "Space":
        if m < 2:
            raise ValueError("the simplex needs at least two coordinates")
        return cls(m, "simplex", np.eye(m))

    @classmethod
    def hull(cls, points) -> "Space":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        pts = np.unique(pts, axis=0)
        return cls(pts.shape[1], "hull", pts)

    @property
    def vertices(self) -> np.ndarray:
        """Extreme points of C (for the hull kind, the action points)."""
        return self.actions

    @property
    def diameter(self) -> float:
        return diameter(self)

    @property
    def centroid(self) -> np.ndarray:
        if self.kind == "cube":
            return np.full(self.dim, 0.5)
        if self.kind == "simplex":
            return np.full(self.dim, 1.0 / self.dim)
        return self.actions.mean(axis=0)

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = _as_point(x, self.dim)
        if self.kind == "cube":
            return bool(np.all(x >= -tol) and np.all(x <= 1.0 + tol))
        if self.kind == "simplex":
            return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)
        return bool(np.linalg.norm(self.project(x) - x) <= tol)

    def project(self, z) -> np.ndarray:
        return project(self, z)


def diameter(space: Space) -> float:
    if space.kind == "cube":
        return math.sqrt(space.dim)
    if space.kind == "simplex":
        return math.sqrt(2.0)
    P = space.actions
    d2 = np.sum((P[:, None, :] - P[None, :, :]) ** 2, axis=-1)
    return float(math.sqrt(d2.max()))


def min_bounding_radius(space: Space) -> tuple[float, np.ndarray]:
    """Radius and center of the smallest ball containing C.

    Exact for the cube and simplex kinds.  For a hull the fallback is the ball
    of radius equal to the diameter around the centroid, which always contains
    C but is not minimal.
    """
    m = space.dim
    if space.kind == "cube":
        return math.sqrt(m) / 2.0, np.full(m, 0.5)
    if space.kind == "simplex":
        return math.sqrt((m - 1) / m), np.full(m, 1.0 / m)
    return diameter(space), space.centroid


def project(space: Space, z) -> np.ndarray:
    """Nearest point of C in Euclidean norm."""
    z = _as_point(z, space.dim)
    if space.kind == "cube":
        return np.clip(z, 0.0, 1.0)
    if space.kind == "simplex":
        return project_simplex(z)
    x, _ = min_norm_point(space.actions - z)
    return x + z


@dataclass(frozen=True)
class Grid:
    """A finite delta-grid of C.

    ``lattice`` holds integer coordinates for every point; rows of it are the
    exact bin keys of forecasts drawn from the grid.  ``covering_radius`` is
    the exact max over C of the distance to the grid, and ``delta`` sits just
    above it so the covering inequality is strict.
    """

    points: np.ndarray = field(repr=False)
    delta: float
    resolution: int
    lattice: np.ndarray = field(repr=False)
    covering_radius: float

    def __post_init__(self):
        object.__setattr__(self, "points", _readonly(self.points))
        lat = np.array(self.lattice, dtype=np.int64)
        lat.setflags(write=False)
        object.__setattr__(self, "lattice", lat)
        object.__setattr__(self, "_index", {tuple(int(v) for v in row): i for i, row in enumerate(lat)})
        if len(self._index) != len(lat):
            raise ValueError("grid points must be distinct")

    def __len__(self) -> int:
        return self.points.shape[0]

    def key(self, i: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.lattice[i])

    def index_of(self, key) -> int:
        return self._index[tuple(key)]

    def nearest(self, x) -> int:
        d2 = np.sum((self.points - np.asarray(x, dtype=float)) ** 2, axis=1)
        return int(np.argmin(d2))


def _strictly_above(r: float) -> float:
    return r * (1.0 + 1e-9) + 1e-15


def simplex_lattice(m: int, k: int) -> np.ndarray:
    """All compositions of ``k`` into ``m`` nonnegative integer parts."""
    out = []
    for bars in itertools.combinations(range(k + m - 1), m - 1):
        prev = -1
        comp = []
        for b in bars:
            comp.append(b - prev - 1)
            prev = b
        comp.append(k + m - 2 - prev)
        out.append(comp)
    return np.array(out, dtype=np.int64)


def simplex_lattice_covering_radius(m: int, k: int) -> float:
    # Covering radius of the root lattice A_{m-1} (minimal norm sqrt 2),
    # scaled by 1/k; the simplex is a union of its Delaunay cells.
    n = m - 1
    a = (n + 1) // 2
    return math.sqrt(a * (n + 1 - a) / (n + 1)) / k


def make_grid(space: Space, resolution: int) -> Grid:
    """Regular lattice with per-axis step 1/resolution, intersected with C."""
    if resolution < 1:
        raise ValueError("resolution must be at least 1")
    m, k = space.dim, resolution
    if space.kind == "cube":
        lat = np.array(list(itertools.product(range(k + 1), repeat=m)), dtype=np.int64)
        rad = math.sqrt(m) / (2.0 * k)
        return Grid(lat / k, _strictly_above(rad), k, lat, rad)
    if space.kind == "simplex":
        lat = simplex_lattice(m, k)
        rad = simplex_lattice_covering_radius(m, k)
        return Grid(lat / k, _strictly_above(rad), k, lat, rad)
    # hull: project a lattice over the bounding box; projection is
    # nonexpansive toward points of C, so the box covering radius carries over
    lo = space.actions.min(axis=0)
    hi = space.actions.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    box = np.array(list(itertools.product(range(k + 1), repeat=m)), dtype=float) / k
    pts = np.array([project(space, lo + span * p) for p in box])
    pts = np.unique(np.round(pts, 12), axis=0)
    rad = float(np.linalg.norm(span)) / (2.0 * k)
    lat = np.arange(len(pts))[:, None]
    return Grid(pts, _strictly_above(rad), k, lat, rad)


def kl_divergence(x, y) -> float:
    """Relative entropy sum x_i log(x_i / y_i), with 0 log 0 = 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pos = x > 0
    if np.any(y[pos] <= 0):
        return math.inf
    return float(np.sum(x[pos] * np.log(x[pos] / y[pos])))


@dataclass(frozen=True)
class LogGrid:
    """A finite grid of strictly positive points of the simplex whose
    KL-covering radius is below ``delta``."""

    points: np.ndarray = field(repr=False)
    delta: float
    floor: float
    resolution: int
    lattice: np.ndarray = field(repr=False)
    covering_radius: float

    def __post_init__(self):
        object.__setattr__(self, "points", _readonly(self.points))
        lat = np.array(self.lattice, dtype=np.int64)
        lat.setflags(write=False)
        object.__setattr__(self, "lattice", lat)

    def __len__(self) -> int:
        return self.points.shape[0]

    def key(self, i: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.lattice[i])


def _kl_cell_vertices(points: np.ndarray, j: int) -> np.ndarray:
    """Vertices of {x in simplex : KL(x||d_j) <= KL(x||d_i) for all i}.

    KL(x||d_j) - KL(x||d_i) = <x, log d_i - log d_j> is linear in x, so each
    cell is a polytope and the convex function KL(.||d_j) peaks at a vertex.
    """
    from scipy.spatial import HalfspaceIntersection

    m = points.shape[1]
    logs = np.log(points)
    # reduced coordinates y = x[:m-1], x_m = 1 - sum(y)
    rows = []
    for i in range(len(points)):
        if i == j:
            continue
        g = logs[j] - logs[i]  # need <x, g> >= 0
        rows.append(np.append(-(g[:-1] - g[-1]), -g[-1]))
    for i in range(m - 1):
        e = np.zeros(m)
        e[i] = -1.0
        rows.append(e)
    rows.append(np.append(np.ones(m - 1), -1.0))
    hs = np.array(rows)
    interior = points[j][:-1]
    hsi = HalfspaceIntersection(hs, interior)
    y = hsi.intersections
    return np.column_stack([y, 1.0 - y.sum(axis=1)])


def log_grid_covering_radius(points: np.ndarray) -> float:
    """Exact sup over the simplex of min over grid points of KL(x||d)."""
    points = np.asarray(points, dtype=float)
    m = points.shape[1]
    if m == 2:
        p = np.sort(points[:, 0])
        cands = [0.0, 1.0]
        for lo, hi in zip(p[:-1], p[1:]):
            # KL(x||lo) = KL(x||hi) is linear in x
            s = math.log(hi / lo) - math.log((1 - hi) / (1 - lo))
            cands.append(-math.log((1 - hi) / (1 - lo)) / s)
        worst = 0.0
        for x in cands:
            xv = np.array([x, 1.0 - x])
            worst = max(worst, min(kl_divergence(xv, d) for d in points))
        return worst
    worst = 0.0
    for j in range(len(points)):
        for v in _kl_cell_vertices(points, j):
            v = np.clip(v, 0.0, None)
            v = v / v.sum()
            worst = max(worst, kl_divergence(v, points[j]))
    return worst


def make_log_grid(m: int, resolution: int, floor: float | None = None) -> LogGrid:
    """Simplex lattice pulled toward the center so every coordinate is at
    least ``floor`` (default 1/(m*resolution))."""
    if m < 2 or resolution < 1:
        raise ValueError("need m >= 2 and resolution >= 1")
    eps = 1.0 / (m * resolution) if floor is None else float(floor)
    if not 0.0 < eps < 1.0 / m:
        raise ValueError("floor must lie in (0, 1/m)")
    lat = simplex_lattice(m, resolution)
    pts = (1.0 - m * eps) * (lat / resolution) + eps
    rad = log_grid_covering_radius(pts)
    return LogGrid(pts, _strictly_above(rad), eps, resolution, lat, rad)
