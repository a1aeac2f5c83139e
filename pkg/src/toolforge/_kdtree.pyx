# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled exact nearest-neighbour index for 3-D point clouds.

Distances are accumulated as ``(dx*dx + dy*dy) + dz*dz`` so results are
bit-identical to the numpy fallback in ``_nn_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()

cdef enum:
    LEAFSIZE = 40


cdef class KDTree:
    cdef readonly Py_ssize_t n
    cdef double[:, ::1] _pts          # points in tree (slot) order
    cdef Py_ssize_t[::1] _perm        # slot -> original index
    cdef Py_ssize_t[::1] _lo, _hi     # slot range per node
    cdef Py_ssize_t[::1] _left, _right, _dim
    cdef double[:, ::1] _bmin, _bmax  # per-node bounding boxes
    cdef Py_ssize_t _n_nodes

    def __cinit__(self, points):
        cdef const double[:, ::1] src = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        cdef Py_ssize_t n = src.shape[0]
        # leaves hold more than LEAFSIZE // 2 points, so this bounds the node count
        cdef Py_ssize_t cap = 2 * (n // (LEAFSIZE // 2) + 1) + 1
        self.n = n
        self._perm = np.arange(n, dtype=np.intp)
        self._lo = np.empty(cap, dtype=np.intp)
        self._hi = np.empty(cap, dtype=np.intp)
        self._left = np.empty(cap, dtype=np.intp)
        self._right = np.empty(cap, dtype=np.intp)
        self._dim = np.zeros(cap, dtype=np.intp)
        self._bmin = np.empty((cap, 3), dtype=np.float64)
        self._bmax = np.empty((cap, 3), dtype=np.float64)
        self._n_nodes = 0
        if n > 0:
            with nogil:
                self._build(src, 0, n)
        pts = np.empty((n, 3), dtype=np.float64)
        self._pts = pts
        cdef Py_ssize_t s, d
        for s in range(n):
            for d in range(3):
                self._pts[s, d] = src[self._perm[s], d]

    cdef Py_ssize_t _build(self, const double[:, ::1] src, Py_ssize_t lo, Py_ssize_t hi) noexcept nogil:
        cdef Py_ssize_t node = self._n_nodes
        cdef Py_ssize_t s, d, dim, mid
        cdef double v, extent, best_extent
        self._n_nodes += 1
        self._lo[node] = lo
        self._hi[node] = hi
        for d in range(3):
            self._bmin[node, d] = INFINITY
            self._bmax[node, d] = -INFINITY
        for s in range(lo, hi):
            for d in range(3):
                v = src[self._perm[s], d]
                if v < self._bmin[node, d]:
                    self._bmin[node, d] = v
                if v > self._bmax[node, d]:
                    self._bmax[node, d] = v
        if hi - lo <= LEAFSIZE:
            self._left[node] = -1
            self._right[node] = -1
            return node
        dim = 0
        best_extent = -1.0
        for d in range(3):
            extent = self._bmax[node, d] - self._bmin[node, d]
            if extent > best_extent:
                best_extent = extent
                dim = d
        mid = (lo + hi) // 2
        self._dim[node] = dim
        self._select(src, lo, hi, mid, dim)
        self._left[node] = self._build(src, lo, mid)
        self._right[node] = self._build(src, mid, hi)
        return node

    cdef void _select(self, const double[:, ::1] src, Py_ssize_t lo, Py_ssize_t hi,
                      Py_ssize_t k, Py_ssize_t dim) noexcept nogil:
        # Hoare-style quickselect on perm[lo:hi] keyed by coordinate `dim`
        cdef Py_ssize_t left = lo, right = hi - 1, i, j, m, tmp
        cdef double pivot, a, b, c
        while right > left:
            m = left + (right - left) // 2
            a = src[self._perm[left], dim]
            b = src[self._perm[m], dim]
            c = src[self._perm[right], dim]
            # median of three
            if (a <= b and b <= c) or (c <= b and b <= a):
                pivot = b
            elif (b <= a and a <= c) or (c <= a and a <= b):
                pivot = a
            else:
                pivot = c
            i = left
            j = right
            while i <= j:
                while src[self._perm[i], dim] < pivot:
                    i += 1
                while src[self._perm[j], dim] > pivot:
                    j -= 1
                if i <= j:
                    tmp = self._perm[i]
                    self._perm[i] = self._perm[j]
                    self._perm[j] = tmp
                    i += 1
                    j -= 1
            if k <= j:
                right = j
            elif k >= i:
                left = i
            else:
                return

    cdef void _query_one(self, double q0, double q1, double q2, Py_ssize_t* stack,
                         double* out_d2, Py_ssize_t* out_i) noexcept nogil:
        cdef double best = INFINITY
        cdef Py_ssize_t best_i = -1
        cdef Py_ssize_t top = 0, node, s, orig, near, far, dim
        cdef double d2, dx, dy, dz, g, lo_gap
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            # squared distance from q to the node box
            g = 0.0
            lo_gap = self._bmin[node, 0] - q0
            if lo_gap > 0:
                g = g + lo_gap * lo_gap
            else:
                lo_gap = q0 - self._bmax[node, 0]
                if lo_gap > 0:
                    g = g + lo_gap * lo_gap
            lo_gap = self._bmin[node, 1] - q1
            if lo_gap > 0:
                g = g + lo_gap * lo_gap
            else:
                lo_gap = q1 - self._bmax[node, 1]
                if lo_gap > 0:
                    g = g + lo_gap * lo_gap
            lo_gap = self._bmin[node, 2] - q2
            if lo_gap > 0:
                g = g + lo_gap * lo_gap
            else:
                lo_gap = q2 - self._bmax[node, 2]
                if lo_gap > 0:
                    g = g + lo_gap * lo_gap
            # `>` not `>=`: equal-distance points with lower index must still be seen
            if g > best:
                continue
            if self._left[node] < 0:
                for s in range(self._lo[node], self._hi[node]):
                    dx = q0 - self._pts[s, 0]
                    dy = q1 - self._pts[s, 1]
                    dz = q2 - self._pts[s, 2]
                    d2 = dx * dx + dy * dy
                    d2 = d2 + dz * dz
                    orig = self._perm[s]
                    if d2 < best or (d2 == best and orig < best_i):
                        best = d2
                        best_i = orig
            else:
                # visit first the child on the query's side of the split
                near = self._left[node]
                far = self._right[node]
                dim = self._dim[node]
                if (q0 if dim == 0 else (q1 if dim == 1 else q2)) > self._bmax[near, dim]:
                    near, far = far, near
                stack[top] = far
                stack[top + 1] = near
                top += 2
        out_d2[0] = best
        out_i[0] = best_i

    def query(self, queries):
        """Return ``(distances, indices)`` of the nearest point for each query row."""
        cdef const double[:, ::1] q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        cdef Py_ssize_t m = q.shape[0], r
        dist = np.empty(m, dtype=np.float64)
        idx = np.empty(m, dtype=np.intp)
        cdef double[::1] dv = dist
        cdef Py_ssize_t[::1] iv = idx
        stack_arr = np.empty(max(self._n_nodes, 1) + 2, dtype=np.intp)
        cdef Py_ssize_t[::1] stack = stack_arr
        cdef double d2
        cdef Py_ssize_t bi
        if self.n == 0:
            raise ValueError("query on an empty tree")
        with nogil:
            for r in range(m):
                self._query_one(q[r, 0], q[r, 1], q[r, 2], &stack[0], &d2, &bi)
                dv[r] = sqrt(d2)
                iv[r] = bi
        return dist, idx
