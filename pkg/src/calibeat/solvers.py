"""Finite zero-sum games and the "outgoing" primitives built on them.

The row player maximizes, the column player minimizes.  Calibrated
forecasters need, every period, a distribution over grid points whose
expected "outgoing" payoff  ||x - y||^2 - ||x - g(y)||^2  is small for every
target x; that distribution is the minimizer's optimal strategy in a small
matrix game.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .geometry import Grid, LogGrid, Space, make_grid, project

LP_SIZE_LIMIT = 200
PROBE_CAP = 10_000


@dataclass(frozen=True)
class MatrixGame:
    payoff: np.ndarray
    row_labels: list | None = None
    col_labels: list | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.payoff, dtype=float))
        if A.size == 0:
            raise ValueError("empty payoff matrix")
        if not np.all(np.isfinite(A)):
            raise ValueError("payoff matrix has non-finite entries")
        object.__setattr__(self, "payoff", A)


@dataclass(frozen=True)
class ZeroSumSolution:
    min_strategy: np.ndarray
    max_strategy: np.ndarray
    upper: float  # max over rows of the payoff against min_strategy
    lower: float  # min over columns of the payoff against max_strategy
    method: str

    @property
    def value(self) -> float:
        return self.upper

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def _clean(p: np.ndarray) -> np.ndarray:
    p = np.where(p > 0, p, 0.0)
    return p / p.sum()


def _certify(A, q, p, method) -> ZeroSumSolution:
    q = _clean(q)
    p = _clean(p)
    return ZeroSumSolution(q, p, float(np.max(A @ q)), float(np.min(p @ A)), method)


def _solve_two_rows(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact solution when the maximizer has two pure actions.

    The minimizer's optimum mixes at most two columns; the maximizer's is a
    breakpoint of a concave piecewise-linear function of one variable.
    """
    n = A.shape[1]
    r0, r1 = A[0], A[1]
    d = r0 - r1
    pure = np.maximum(r0, r1)
    jbest = int(np.argmin(pure))
    best_val = pure[jbest]
    q = np.zeros(n)
    q[jbest] = 1.0
    pos = np.nonzero(d > 0)[0]
    neg = np.nonzero(d < 0)[0]
    if pos.size and neg.size:
        J, K = np.meshgrid(pos, neg, indexing="ij")
        J, K = J.ravel(), K.ravel()
        mu = -d[K] / (d[J] - d[K])
        vals = mu * r0[J] + (1.0 - mu) * r0[K]
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            q = np.zeros(n)
            q[J[i]] = mu[i]
            q[K[i]] += 1.0 - mu[i]
    # maximizer: maximize min_j (pi * d_j + r1_j) over pi in [0, 1]
    cands = [0.0, 1.0]
    if n > 1:
        J, K = np.triu_indices(n, 1)
        den = d[J] - d[K]
        ok = den != 0
        pis = (r1[K][ok] - r1[J][ok]) / den[ok]
        cands.extend(pis[(pis > 0) & (pis < 1)].tolist())
    cands = np.array(cands)
    f = np.min(cands[:, None] * d[None, :] + r1[None, :], axis=1)
    pi = float(cands[int(np.argmax(f))])
    return q, np.array([pi, 1.0 - pi])


def _solve_simplex(A: np.ndarray, eps: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Dense tableau simplex on  max 1'u  s.t.  A'u <= 1, u >= 0  with
    A' = A - min(A) + 1 > 0.  Primal gives the minimizer, duals the maximizer."""
    r, n = A.shape
    shift = 1.0 - A.min()
    Ap = A + shift
    T = np.zeros((r + 1, n + r + 1))
    T[:r, :n] = Ap
    T[:r, n:n + r] = np.eye(r)
    T[:r, -1] = 1.0
    T[r, :n] = -1.0
    basis = list(range(n, n + r))
    degenerate = 0
    for _ in range(50 * (n + r) + 1000):
        cost = T[r, :-1]
        if degenerate > 2 * (n + r):
            cand = np.nonzero(cost < -eps)[0]
            if cand.size == 0:
                break
            j = int(cand[0])  # Bland's rule once we stall
        else:
            j = int(np.argmin(cost))
            if cost[j] >= -eps:
                break
        col = T[:r, j]
        mask = col > eps
        if not mask.any():
            raise RuntimeError("unbounded pivot in zero-sum LP")
        ratios = np.full(r, np.inf)
        ratios[mask] = T[:r, -1][mask] / col[mask]
        rmin = ratios.min()
        ties = np.nonzero(ratios <= rmin + 1e-15)[0]
        i = int(min(ties, key=lambda k: basis[k]))
        degenerate = degenerate + 1 if rmin <= eps else 0
        T[i] /= T[i, j]
        others = np.arange(r + 1) != i
        T[others] -= np.outer(T[others, j], T[i])
        basis[i] = j
    else:
        raise RuntimeError("simplex iteration limit reached")
    u = np.zeros(n + r)
    for i, b in enumerate(basis):
        u[b] = T[i, -1]
    q = u[:n]
    y = T[r, n:n + r]
    return q / q.sum(), np.maximum(y, 0.0) / max(np.maximum(y, 0.0).sum(), 1e-300)


def _solve_mw(A: np.ndarray, tol: float, max_iter: int = 200_000) -> tuple[np.ndarray, np.ndarray]:
    """Optimistic multiplicative weights in self-play; averaged iterates."""
    r, n = A.shape
    scale = max(float(np.max(np.abs(A))), 1e-12)
    B = A / scale
    eta = 0.1
    lp = np.zeros(r)
    lq = np.zeros(n)
    gp_prev = np.zeros(r)
    gq_prev = np.zeros(n)
    sp = np.zeros(r)
    sq = np.zeros(n)
    for it in range(1, max_iter + 1):
        p = np.exp(eta * (lp + gp_prev - (lp + gp_prev).max()))
        p /= p.sum()
        q = np.exp(-eta * (lq + gq_prev - (lq + gq_prev).min()))
        q /= q.sum()
        gp = B @ q
        gq = p @ B
        lp += gp
        lq += gq
        gp_prev, gq_prev = gp, gq
        sp += p
        sq += q
        if it % 100 == 0:
            P, Q = sp / it, sq / it
            if (np.max(B @ Q) - np.min(P @ B)) * scale <= tol:
                break
    return sq / sq.sum(), sp / sp.sum()


def solve_zero_sum(game: MatrixGame | np.ndarray, tol: float | None = None) -> ZeroSumSolution:
    """Optimal strategies of a finite zero-sum game (rows maximize).

    Exact methods are used up to 200x200; beyond that optimistic
    multiplicative weights run until the certified duality gap is <= tol.
    """
    A = game.payoff if isinstance(game, MatrixGame) else MatrixGame(game).payoff
    r, n = A.shape
    if r == 1:
        q = np.zeros(n)
        q[int(np.argmin(A[0]))] = 1.0
        return _certify(A, q, np.ones(1), "pure")
    if n == 1:
        p = np.zeros(r)
        p[int(np.argmax(A[:, 0]))] = 1.0
        return _certify(A, np.ones(1), p, "pure")
    if r == 2:
        q, p = _solve_two_rows(A)
        return _certify(A, q, p, "two-row")
    if max(r, n) <= LP_SIZE_LIMIT:
        q, p = _solve_simplex(A)
        sol = _certify(A, q, p, "simplex")
        t = 1e-9 if tol is None else tol
        if sol.gap <= t * max(1.0, float(np.max(np.abs(A)))):
            return sol
    q, p = _solve_mw(A, 1e-4 if tol is None else tol)
    return _certify(A, q, p, "mw")


@dataclass(frozen=True)
class OutgoingDistribution:
    """Finite-support distribution over grid indices.

    ``guarantee`` bounds the expected payoff against every target in C (or,
    for the log version, every point of the simplex); ``target`` is the level
    the construction promises (delta^2, resp. delta).
    """

    indices: np.ndarray
    probs: np.ndarray
    points: np.ndarray = field(repr=False)
    guarantee: float
    target: float
    certified: bool

    @property
    def support_size(self) -> int:
        return int(self.indices.size)

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ self.points

    def sample(self, u: float) -> int:
        """Inverse-CDF draw over the support (sorted by grid index)."""
        cdf = np.cumsum(self.probs)
        k = int(np.searchsorted(cdf, u, side="right"))
        return int(self.indices[min(k, self.indices.size - 1)])


def _distribution(q, points, guarantee_fn, target, tol) -> OutgoingDistribution:
    q = _clean(np.asarray(q, dtype=float))
    idx = np.nonzero(q > 0)[0]
    probs = q[idx] / q[idx].sum()
    full = np.zeros_like(q)
    full[idx] = probs
    g = guarantee_fn(full)
    return OutgoingDistribution(idx, probs, points[idx], g, target, bool(g <= target + tol))


def outgoing_payoff(X: np.ndarray, Y: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Matrix of ||x - y||^2 - ||x - g(y)||^2 (rows x, columns y)."""
    # = 2 x.(g - y) + ||y||^2 - ||g||^2, affine in x
    return 2.0 * X @ (G - Y).T + (np.sum(Y * Y, axis=1) - np.sum(G * G, axis=1))[None, :]


def probe_grid(space: Space, grid: Grid) -> tuple[Grid, float]:
    """Probe grid of mesh delta1 = (delta^2 - delta0^2) / (4 gamma), with at
    most PROBE_CAP points; returns the grid and its covering radius."""
    gamma = space.diameter
    d1 = (grid.delta ** 2 - grid.covering_radius ** 2) / (4.0 * gamma)
    m = space.dim
    if space.kind == "cube":
        k = max(1, math.ceil(math.sqrt(m) / (2.0 * d1))) if d1 > 0 else 10 ** 9
        k = min(k, max(1, int(round(PROBE_CAP ** (1.0 / m))) - 1))
    else:
        k = max(1, math.ceil(1.0 / d1)) if d1 > 0 else 10 ** 9
        while k > 1 and math.comb(k + m - 1, m - 1) > PROBE_CAP:
            k -= 1
    D1 = make_grid(space, k)
    return D1, D1.covering_radius


def outgoing_mm(g, grid: Grid, space: Space, probe: Grid | None = None, tol: float = 1e-9) -> OutgoingDistribution:
    """Distribution eta over ``grid`` with
    E_eta ||x - y||^2 - ||x - g(y)||^2 <= delta^2 (+ tol) for all x in C.

    The payoff is affine in x, so with the default probe set (the extreme
    points of C) the certificate is exact over all of C.  With an explicit
    probe grid the Lipschitz extension adds 4 * gamma * (probe covering radius).
    """
    Y = grid.points
    G = np.asarray(g, dtype=float).reshape(Y.shape)
    G = np.array([project(space, v) for v in G]) if space.kind == "hull" else _project_rows(space, G)
    if probe is None:
        X = space.vertices
        slack = 0.0
    else:
        X = probe.points
        slack = 4.0 * space.diameter * probe.covering_radius
    M = outgoing_payoff(X, Y, G)
    sol = solve_zero_sum(M, tol)

    def guarantee(q):
        return float(np.max(M @ q)) + slack

    return _distribution(sol.min_strategy, Y, guarantee, grid.delta ** 2, tol)


def _project_rows(space: Space, G: np.ndarray) -> np.ndarray:
    if space.kind == "cube":
        return np.clip(G, 0.0, 1.0)
    return np.array([project(space, v) for v in G])


def outgoing_mm_log(g, grid: LogGrid, tol: float = 1e-9) -> OutgoingDistribution:
    """Distribution eta over a log-grid with
    E_eta [L(a, c) - L(a, g(c))] <= delta (+ tol) for every a in the simplex.

    L(a, c) = -sum a_i log c_i is linear in a, so the unit-vector rows certify
    the bound for the whole simplex.
    """
    D = grid.points
    G = np.asarray(g, dtype=float).reshape(D.shape)
    if np.any(G <= 0):
        raise ValueError("g must take strictly positive values")
    M = (np.log(G) - np.log(D)).T  # rows: unit vectors a = e_k
    sol = solve_zero_sum(M, tol)

    def guarantee(q):
        return float(np.max(M @ q))

    return _distribution(sol.min_strategy, D, guarantee, grid.delta, tol)


@dataclass(frozen=True)
class FixedPointResult:
    point: float
    residual: float
    kind: str  # "interior", "lower" or "upper"
    value: float  # f at the returned point


def outgoing_fixed_point_1d(
    f: Callable[[float], float],
    lo: float = 0.0,
    hi: float = 1.0,
    tol: float = 1e-12,
    breakpoints=None,
    scan: int = 256,
) -> FixedPointResult:
    """Point y of [lo, hi] with f(y) * (x - y) <= 0 for every x in [lo, hi],
    where f(y) = g(y) - y.

    Scans left to right and returns the first outward endpoint or the first
    sign change (refined by bisection plus a final secant step).
    """

    def ev(y):
        v = float(f(y))
        if not math.isfinite(v):
            raise ValueError(f"f({y}) is not finite")
        return v

    def residual(y, v):
        # max over x in [lo, hi] of ||x - y||^2 - ||x - y - v||^2
        return max(2.0 * v * (x - y) - v * v for x in (lo, hi))

    flo = ev(lo)
    if flo <= 0:
        return FixedPointResult(lo, residual(lo, flo), "lower", flo)
    pts = np.linspace(lo, hi, scan + 1)
    if breakpoints is not None:
        bp = np.asarray(breakpoints, dtype=float)
        pts = np.union1d(pts, bp[(bp > lo) & (bp < hi)])
    left, fl = lo, flo
    for y in pts[1:]:
        fy = ev(float(y))
        if fy <= 0:
            right, fr = float(y), fy
            while right - left > tol * max(1.0, abs(hi - lo)):
                mid = 0.5 * (left + right)
                fm = ev(mid)
                if fm > 0:
                    left, fl = mid, fm
                else:
                    right, fr = mid, fm
                if abs(fm) <= tol:
                    break
            best = [(left, fl), (right, fr)]
            if fl != fr:
                ys = min(max(left + fl * (right - left) / (fl - fr), left), right)
                best.append((ys, ev(ys)))
            y, v = min(best, key=lambda p: abs(p[1]))
            return FixedPointResult(y, residual(y, v), "interior", v)
        left, fl = float(y), fy
    return FixedPointResult(hi, residual(hi, fl), "upper", fl)
