"""Distance from points to the convex hull of leader positions.

The hull is kept as its generators; distances come from a fully corrective
Frank-Wolfe iteration over the simplex of generator weights (Wolfe's
nearest-point method).  The Frank-Wolfe duality gap is the stopping rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GAP_TOL = 1e-9
MAX_ITER = 10_000


@dataclass(frozen=True)
class ConvexHullRef:
    points: np.ndarray  # (m, N)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("hull needs at least one generator")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class HullProjection:
    distance: float
    weights: np.ndarray
    gap: float
    iterations: int
    converged: bool


def _affine_min_norm(Y):
    """Weights mu (sum 1) minimizing ||Y.T @ mu|| over the affine hull of the rows of Y."""
    k = Y.shape[0]
    G = Y @ Y.T
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = G
    K[:k, k] = 1.0
    K[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:k]


def project_to_hull(p, hull, tol: float = GAP_TOL, max_iter: int = MAX_ITER) -> HullProjection:
    """Nearest point of ``conv(hull)`` to ``p`` as convex weights on the generators."""
    X = hull.points if isinstance(hull, ConvexHullRef) else np.atleast_2d(np.asarray(hull, dtype=float))
    p = np.asarray(p, dtype=float).reshape(-1)
    Y = X - p
    m = Y.shape[0]
    if m == 1:
        return HullProjection(float(np.linalg.norm(Y[0])), np.ones(1), 0.0, 0, True)

    sq = np.einsum("ij,ij->i", Y, Y)
    active = [int(np.argmin(sq))]
    lam = np.ones(1)
    gap = np.inf
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        x = lam @ Y[active]
        scores = Y @ x
        j = int(np.argmin(scores))
        gap = float(x @ x - scores[j])
        if gap <= tol or x @ x <= tol * tol:
            converged = True
            break
        if j in active:
            # numerically stalled on the current face
            converged = gap <= 1e-12 * max(float(sq.max()), 1.0)
            break
        active.append(j)
        lam = np.append(lam, 0.0)
        # corrective inner loop: move to the affine minimizer, clipping at the simplex boundary
        while True:
            mu = _affine_min_norm(Y[active])
            if np.all(mu > 1e-14):
                lam = mu
                break
            neg = mu <= 1e-14
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - mu), np.inf)
            theta = float(np.clip(np.min(ratios), 0.0, 1.0))
            lam = lam + theta * (mu - lam)
            keep = lam > 1e-14
            if keep.all():
                # theta landed on an entry that is numerically positive; drop the smallest
                keep[int(np.argmin(lam))] = False
            active = [a for a, k in zip(active, keep) if k]
            lam = lam[keep]
            lam = lam / lam.sum()
            if len(active) == 1:
                lam = np.ones(1)
                break

    x = lam @ Y[active]
    weights = np.zeros(m)
    weights[active] = lam
    dist = float(np.linalg.norm(x))
    if dist <= tol:
        dist = 0.0
    return HullProjection(dist, weights, max(gap, 0.0), it, converged)


def distance_to_hull(p, hull) -> float:
    """Euclidean distance from ``p`` to the convex hull of ``hull``'s generators (0 inside)."""
    return project_to_hull(p, hull).distance


def follower_hull_distances(x_F, x_R) -> np.ndarray:
    """Per-follower hull distance for positions ``x_F`` (nF, N) and leader positions ``x_R`` (m, N)."""
    x_F = np.atleast_2d(np.asarray(x_F, dtype=float))
    x_R = np.atleast_2d(np.asarray(x_R, dtype=float))
    if x_R.shape[0] == 1:
        return np.linalg.norm(x_F - x_R[0], axis=1)
    return np.array([project_to_hull(p, x_R).distance for p in x_F])


def containment_error(state, part=None) -> float:
    """Worst follower distance to the hull of the current leader positions.

    ``state`` is anything with ``x_F`` and ``x_R`` attributes; ``part`` is
    accepted for call-site symmetry and unused.
    """
    return float(follower_hull_distances(state.x_F, state.x_R).max())
