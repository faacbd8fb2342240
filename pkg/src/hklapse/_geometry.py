"""Exact diameters of finite point clouds."""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, QhullError

_BRUTE_FORCE_LIMIT = 150


def _brute_force_diameter(points: np.ndarray) -> float:
    best = 0.0
    n = len(points)
    chunk = max(1, 4_000_000 // max(n, 1))
    for start in range(0, n, chunk):
        block = points[start:start + chunk]
        diff = block[:, None, :] - points[None, :, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        best = max(best, float(dist.max()))
    return best


def extreme_points(points: np.ndarray) -> np.ndarray:
    """Return a subset of ``points`` whose diameter equals that of the full set.

    For d >= 2 this is the convex hull vertex set; degenerate (flat) clouds
    fall back to the deduplicated cloud itself.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    if len(points) == 0:
        return points
    d = points.shape[1]
    if d == 1:
        return np.array([[points.min()], [points.max()]])
    pts = np.unique(points, axis=0)
    if len(pts) <= d + 1:
        return pts
    try:
        return pts[ConvexHull(pts).vertices]
    except QhullError:
        return pts[_flat_extreme_indices(pts)]


def _flat_extreme_indices(pts: np.ndarray) -> np.ndarray:
    # cloud lies in a lower-dimensional affine subspace: take hull there
    centered = pts - pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int(np.sum(sv > 1e-12 * max(sv[0], 1e-300)))
    if rank == 0:
        return np.array([0])
    coords = centered @ vt[:rank].T
    if rank == 1:
        return np.array([np.argmin(coords[:, 0]), np.argmax(coords[:, 0])])
    try:
        return ConvexHull(coords).vertices
    except QhullError:
        return np.arange(len(pts))


def point_set_diameter(points: np.ndarray) -> float:
    """Largest Euclidean distance between two rows of ``points`` (0 for one row)."""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        raise ValueError("empty point set")
    if points.shape[1] == 1:
        return float(points.max() - points.min())
    if len(points) > _BRUTE_FORCE_LIMIT:
        points = extreme_points(points)
    return _brute_force_diameter(points)
