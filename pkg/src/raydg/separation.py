"""Reduction of raw per-cell ray directions to a separated representative set.

The wavefront tracker captures many nearly identical direction vectors per
mesh cell.  ``separate`` greedily clusters them with closed eps-balls, seeded
by the default directions, and emits one representative per cluster, either
the cluster centroid (default) or its first member.  If the default set is
(eps/2)-separable the output is guaranteed (eps/2)-separable in the centroid
variant and eps-separable in the representative variant; every raw direction
ends up within eps of the output set.
"""
from __future__ import annotations

import numpy as np


def separate(
    raw,
    defaults,
    eps: float,
    variant: str = "centroid",
) -> np.ndarray:
    """Cluster raw directions into a separated set containing the defaults.

    Parameters
    ----------
    raw : array_like, shape (m, 2)
        Captured directions in insertion order; order decides which cluster
        forms first, so identical inputs give identical outputs.
    defaults : array_like, shape (d, 2)
        Always-kept directions seeding the result.
    eps : float
        Clustering radius (closed balls).
    variant : {"centroid", "representative"}
        Representative for each cluster: its centroid or its first member.

    Returns
    -------
    ndarray, shape (d + n_clusters, 2), defaults first then cluster
    representatives in creation order.
    """
    if eps <= 0.0:
        raise ValueError(f"separation radius must be positive, got {eps}")
    if variant not in ("centroid", "representative"):
        raise ValueError(f"unknown separation variant: {variant}")
    defaults = np.atleast_2d(np.asarray(defaults, dtype=float)).reshape(-1, 2)
    raw = np.asarray(raw, dtype=float).reshape(-1, 2)
    result = [d for d in defaults]

    alive = raw
    for d in defaults:
        if alive.size == 0:
            break
        alive = alive[np.linalg.norm(alive - d, axis=1) > eps]

    while alive.shape[0] > 0:
        p = alive[0]
        in_ball = np.linalg.norm(alive - p, axis=1) <= eps
        q = np.mean(alive[in_ball], axis=0) if variant == "centroid" else p.copy()
        result.append(q)
        alive = alive[np.linalg.norm(alive - q, axis=1) > eps]

    return np.array(result).reshape(-1, 2)


def check_separable(points, delta: float) -> bool:
    """True when all pairwise distances in the set are >= delta."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] < 2:
        return True
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    iu = np.triu_indices(pts.shape[0], k=1)
    return bool(np.all(dist[iu] >= delta))


def deviation(anchor, probe) -> float:
    """One-sided deviation sup_{q in probe} min_{p in anchor} |p - q|.

    Measures how far the probe set strays from the anchor set; 0.0 when the
    probe is empty.
    """
    anchor = np.asarray(anchor, dtype=float).reshape(-1, 2)
    probe = np.asarray(probe, dtype=float).reshape(-1, 2)
    if probe.shape[0] == 0:
        return 0.0
    if anchor.shape[0] == 0:
        return float("inf")
    dist = np.linalg.norm(probe[:, None, :] - anchor[None, :, :], axis=2)
    return float(np.max(np.min(dist, axis=1)))
