"""Pure-Python (numpy) nearest-neighbour fallback.

Blockwise exhaustive search. Same query contract as the compiled
``_kdtree.KDTree``: exact distances, ties resolved to the lowest index,
and the same ``(dx*dx + dy*dy) + dz*dz`` accumulation order.
"""
import numpy as np

_BLOCK_ELEMENTS = 1 << 20


class KDTree:
    def __init__(self, points):
        self._pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        self.n = self._pts.shape[0]

    def query(self, queries):
        if self.n == 0:
            raise ValueError("query on an empty tree")
        q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        m = q.shape[0]
        dist = np.empty(m, dtype=np.float64)
        idx = np.empty(m, dtype=np.intp)
        px, py, pz = self._pts[:, 0], self._pts[:, 1], self._pts[:, 2]
        block = max(1, _BLOCK_ELEMENTS // self.n)
        for start in range(0, m, block):
            qb = q[start:start + block]
            dx = qb[:, 0:1] - px
            dy = qb[:, 1:2] - py
            dz = qb[:, 2:3] - pz
            d2 = dx * dx + dy * dy
            d2 += dz * dz
            best = np.argmin(d2, axis=1)
            idx[start:start + block] = best
            dist[start:start + block] = np.sqrt(d2[np.arange(len(qb)), best])
        return dist, idx
