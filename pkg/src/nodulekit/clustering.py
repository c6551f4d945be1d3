"""Transitive-closure clustering of points under pairwise distance predicates.

Used for reader-annotation merging, candidate merging and detector cluster
fusion. Clustering is the transitive closure of the pairwise predicate on the
ORIGINAL point positions, which makes the result independent of input order.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class DisjointSet:
    """Array-based union-find with path compression."""

    def __init__(self, n: int):
        self.parent = np.arange(n)

    def find(self, i: int) -> int:
        parent = self.parent
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)

    def labels(self) -> np.ndarray:
        """Cluster labels numbered 0..k-1 in order of first appearance."""
        roots = np.array([self.find(i) for i in range(len(self.parent))])
        out = np.empty_like(roots)
        mapping: dict[int, int] = {}
        for i, r in enumerate(roots):
            if r not in mapping:
                mapping[r] = len(mapping)
            out[i] = mapping[r]
        return out


def cluster_by_radii(points: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Cluster points where dist(p_i, p_j) < radii[i] + radii[j] (strict).

    Returns per-point cluster labels, 0..k-1 in first-seen order.
    """
    points = np.asarray(points, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    n = len(points)
    dsu = DisjointSet(n)
    if n > 1:
        search = 2.0 * float(radii.max())
        pairs = cKDTree(points).query_pairs(r=search, output_type="ndarray")
        if len(pairs):
            dist = np.linalg.norm(points[pairs[:, 0]] - points[pairs[:, 1]], axis=1)
            close = dist < radii[pairs[:, 0]] + radii[pairs[:, 1]]
            for i, j in pairs[close]:
                dsu.union(int(i), int(j))
    return dsu.labels()


def cluster_within(points: np.ndarray, max_distance: float) -> np.ndarray:
    """Cluster points under dist < max_distance (strict), transitively."""
    points = np.asarray(points, dtype=np.float64)
    return cluster_by_radii(points, np.full(len(points), max_distance / 2.0))


def merge_point_groups(groups: list[np.ndarray], radius: float) -> np.ndarray:
    """Cluster whole point groups whose minimum inter-group distance < radius.

    Returns one label per group (transitive closure over group pairs).
    """
    n_groups = len(groups)
    dsu = DisjointSet(n_groups)
    if n_groups > 1:
        sizes = [len(g) for g in groups]
        owner = np.repeat(np.arange(n_groups), sizes)
        allpts = np.concatenate([np.asarray(g, dtype=np.float64) for g in groups])
        pairs = cKDTree(allpts).query_pairs(r=radius, output_type="ndarray")
        if len(pairs):
            dist = np.linalg.norm(allpts[pairs[:, 0]] - allpts[pairs[:, 1]], axis=1)
            keep = dist < radius
            for i, j in pairs[keep]:
                gi, gj = int(owner[i]), int(owner[j])
                if gi != gj:
                    dsu.union(gi, gj)
    return dsu.labels()
