"""Independent reference implementations used only by the tests."""

import itertools

import numpy as np


def support_enumeration_value(A, eps=1e-9):
    """Value of the zero-sum game A (rows maximize, columns minimize) by
    enumerating equal-size square supports and solving the equalizing
    systems, batched per support size.  Degenerate games are handled by the
    pure-strategy checks and by accepting any feasible certified pair."""
    A = np.asarray(A, dtype=float)
    r, n = A.shape
    # pure saddle points
    lo, hi = np.max(np.min(A, axis=1)), np.min(np.max(A, axis=0))
    if abs(hi - lo) <= eps:
        return float(hi)
    for k in range(2, min(r, n) + 1):
        rows = list(itertools.combinations(range(r), k))
        cols = list(itertools.combinations(range(n), k))
        I = np.array([i for i in rows for _ in cols])
        J = np.array([j for _ in rows for j in cols])
        sub = A[I[:, :, None], J[:, None, :]]  # (P, k, k)
        P = len(I)
        # columns: sub q = v 1, sum q = 1
        M = np.zeros((P, k + 1, k + 1))
        M[:, :k, :k] = sub
        M[:, :k, k] = -1.0
        M[:, k, :k] = 1.0
        rhs = np.zeros((P, k + 1))
        rhs[:, k] = 1.0
        Mt = np.zeros((P, k + 1, k + 1))
        Mt[:, :k, :k] = np.transpose(sub, (0, 2, 1))
        Mt[:, :k, k] = -1.0
        Mt[:, k, :k] = 1.0
        ok = np.abs(np.linalg.det(M)) > 1e-12
        if not ok.any():
            continue
        x = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
        y = np.linalg.solve(Mt[ok], rhs[ok][..., None])[..., 0]
        for (q_s, p_s, i_s, j_s) in zip(x, y, I[ok], J[ok]):
            if np.any(q_s[:k] < -eps) or np.any(p_s[:k] < -eps):
                continue
            q = np.zeros(n)
            q[j_s] = q_s[:k]
            p = np.zeros(r)
            p[i_s] = p_s[:k]
            upper = np.max(A @ q)
            lower = np.min(p @ A)
            if upper - lower <= 1e-8:
                return float(0.5 * (upper + lower))
    raise AssertionError("no equilibrium found")
