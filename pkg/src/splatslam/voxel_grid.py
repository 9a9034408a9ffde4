"""Uniform voxel hash grid over 3D points for nearest-neighbor queries."""

import math
from collections import defaultdict

import numpy as np


class VoxelHashGrid:
    """Hash grid with cubic cells; supports incremental insertion.

    Nearest-neighbor searches expand cell shells outward and stop once the
    best candidate distance is certified against the unscanned shells, so
    results are exact for any cell size.
    """

    def __init__(self, cell_size):
        if cell_size <= 0:
            raise ValueError("cell size must be positive")
        self.cell_size = float(cell_size)
        self.cells = defaultdict(list)
        self.points = np.zeros((0, 3))
        self._count = 0

    def __len__(self):
        return self._count

    def _key(self, p):
        c = self.cell_size
        return (math.floor(p[0] / c), math.floor(p[1] / c), math.floor(p[2] / c))

    def insert(self, points):
        """Insert one (3,) point or an (N, 3) batch; returns first new index."""
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        start = self._count
        self.points = np.concatenate([self.points, points])
        for i, p in enumerate(points):
            self.cells[self._key(p)].append(start + i)
        self._count += len(points)
        return start

    def _shell_keys(self, center, radius):
        cx, cy, cz = center
        if radius == 0:
            yield (cx, cy, cz)
            return
        r = radius
        for dx in range(-r, r + 1):
            for dy in range(-r, r + 1):
                for dz in range(-r, r + 1):
                    if max(abs(dx), abs(dy), abs(dz)) == r:
                        yield (cx + dx, cy + dy, cz + dz)

    def _candidates_in_shell(self, center, radius):
        out = []
        for key in self._shell_keys(center, radius):
            out.extend(self.cells.get(key, ()))
        return out

    def any_within(self, q, radius):
        """True if some stored point lies within `radius` of q (exact).

        Only cell shells up to ceil(radius / cell) need scanning: a point
        within `radius` can be at most that many cells away per axis.
        """
        if self._count == 0:
            return False
        q = np.asarray(q, dtype=np.float64)
        center = self._key(q)
        max_shell = math.ceil(radius / self.cell_size)
        r2 = radius * radius
        for shell in range(max_shell + 1):
            idx = self._candidates_in_shell(center, shell)
            if idx:
                d2 = np.sum((self.points[idx] - q) ** 2, axis=1)
                if np.any(d2 <= r2):
                    return True
        return False

    def nearest_distances(self, q, k=1):
        """Sorted distances from q to its k nearest stored points.

        Returns fewer than k entries when the grid holds fewer points.
        """
        if self._count == 0:
            return np.zeros(0)
        q = np.asarray(q, dtype=np.float64)
        center = self._key(q)
        best = []
        shell = 0
        # Points in shell s are at least (s - 1) * cell away from q, so the
        # current k-th distance certifies once it drops below that bound.
        while True:
            idx = self._candidates_in_shell(center, shell)
            if idx:
                d = np.sqrt(np.sum((self.points[idx] - q) ** 2, axis=1))
                best = np.sort(np.concatenate([best, d]))[:k]
            if len(best) == k and best[-1] <= (shell) * self.cell_size:
                return np.asarray(best)
            shell += 1
            if (shell - 1) * self.cell_size > self._max_possible(q):
                return np.asarray(best)

    def min_distance(self, q):
        """Exact distance from q to the nearest stored point (inf if empty)."""
        d = self.nearest_distances(q, k=1)
        return float(d[0]) if len(d) else float("inf")

    def _max_possible(self, q):
        # Loose upper bound on any point distance; terminates shell growth.
        if self._count == 0:
            return 0.0
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        corner = np.maximum(np.abs(lo - q), np.abs(hi - q))
        return float(np.linalg.norm(corner))
