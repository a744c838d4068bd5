"""Compiled inner loops for the simulator and nearest-belief lookup."""
from __future__ import annotations

import numba as nb
import numpy as np

LEAF_SIZE = 16

MODE_IDLE, MODE_MAF, MODE_ROUNDROBIN, MODE_RANDOM, MODE_TABLE = range(5)

# error codes returned by the episode loop
OK, ERR_ZERO_MASS, ERR_DRIFT = 0, 1, 2


class FlatTree:
    """KD-tree over the rows of ``points`` stored as flat arrays.

    Internal node ``i`` splits on ``dim[i]`` at ``split[i]``; leaves have
    ``dim[i] == -1`` and own ``perm[start[i]:stop[i]]``.
    """

    def __init__(self, points: np.ndarray, leaf_size: int = LEAF_SIZE):
        self.points = np.ascontiguousarray(points, dtype=np.float64)
        n = len(self.points)
        perm = np.arange(n, dtype=np.int64)
        dims, splits, left, right, start, stop = [], [], [], [], [], []

        def new_node():
            for lst, val in ((dims, -1), (splits, 0.0), (left, -1), (right, -1),
                             (start, 0), (stop, 0)):
                lst.append(val)
            return len(dims) - 1

        root = new_node()
        todo = [(root, 0, n)]
        while todo:
            node, lo, hi = todo.pop()
            start[node], stop[node] = lo, hi
            if hi - lo <= leaf_size:
                continue
            idx = perm[lo:hi]
            spread = self.points[idx].max(axis=0) - self.points[idx].min(axis=0)
            d = int(np.argmax(spread))
            if spread[d] <= 0.0:
                continue
            order = np.argsort(self.points[idx, d], kind="stable")
            perm[lo:hi] = idx[order]
            mid = lo + (hi - lo) // 2
            dims[node] = d
            splits[node] = float(self.points[perm[mid], d])
            l_node, r_node = new_node(), new_node()
            left[node], right[node] = l_node, r_node
            todo.append((l_node, lo, mid))
            todo.append((r_node, mid, hi))
        self.perm = perm
        self.dim = np.array(dims, dtype=np.int64)
        self.split = np.array(splits, dtype=np.float64)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.stop = np.array(stop, dtype=np.int64)

    def arrays(self):
        return (self.points, self.perm, self.dim, self.split, self.left, self.right,
                self.start, self.stop)

    def query(self, q: np.ndarray) -> int:
        return int(nearest(np.ascontiguousarray(q, dtype=np.float64), *self.arrays()))


@nb.njit(cache=True)
def nearest(q, points, perm, dim, split, left, right, start, stop):
    """Index of the point with the smallest squared distance; ties to the lowest index."""
    best_d = np.inf
    best_i = -1
    stack = np.empty(256, dtype=np.int64)
    gaps = np.empty(256, dtype=np.float64)
    top = 0
    stack[0] = 0
    gaps[0] = 0.0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        # equal gaps must still be visited for the lowest-index tie rule
        if gaps[top] > best_d:
            continue
        if dim[node] < 0:
            for j in range(start[node], stop[node]):
                i = perm[j]
                d = 0.0
                for c in range(q.shape[0]):
                    diff = points[i, c] - q[c]
                    d += diff * diff
                if d < best_d or (d == best_d and i < best_i):
                    best_d = d
                    best_i = i
            continue
        delta = q[dim[node]] - split[node]
        if delta < 0.0:
            near, far = left[node], right[node]
        else:
            near, far = right[node], left[node]
        stack[top] = far
        gaps[top] = delta * delta
        top += 1
        stack[top] = near
        gaps[top] = 0.0
        top += 1
    return best_i


@nb.njit(cache=True)
def nearest_many(qs, points, perm, dim, split, left, right, start, stop):
    out = np.empty(qs.shape[0], dtype=np.int64)
    for r in range(qs.shape[0]):
        out[r] = nearest(qs[r], points, perm, dim, split, left, right, start, stop)
    return out


@nb.njit(cache=True)
def run_episode_loop(kernel, cdf, lag_kernel, bits, dist_table, belief0, history0,
                     source_u, channel_u, rand_actions, mode, p_s, gamma, warmup, tie_tol,
                     drift_tol, table_actions, points, perm, dim, split, left, right,
                     start, stop):
    n, k = bits.shape
    horizon = source_u.shape[0]
    lag1 = history0.shape[0]
    hist = history0.copy()
    b = belief0.copy()
    e = np.empty(n)
    nb_ = np.empty(n)
    aoi = np.ones(k, dtype=np.int64)
    aoi_sum = np.zeros(k)
    dist_sum = 0.0
    cost_sum = 0.0
    n_tx = 0
    for t in range(horizon):
        x = hist[lag1 - 1]
        # estimate of X(t) from the belief pushed lag steps ahead
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += b[i] * lag_kernel[i, j]
            e[j] = acc
        xhat = 0
        for s in range(k):
            one = 0.0
            for i in range(n):
                if bits[i, s] == 1:
                    one += e[i]
            xhat = xhat * 2 + (1 if one - (1.0 - one) > tie_tol else 0)
        if mode == MODE_IDLE:
            a = 0
        elif mode == MODE_MAF:
            a = 0
            for s in range(1, k):
                if aoi[s] > aoi[a]:
                    a = s
            a += 1
        elif mode == MODE_ROUNDROBIN:
            a = t % k + 1
        elif mode == MODE_RANDOM:
            a = rand_actions[t]
        else:
            a = table_actions[nearest(b, points, perm, dim, split, left, right, start, stop)]
        if t >= warmup:
            d = dist_table[x, xhat]
            dist_sum += d
            cost_sum += d + (gamma if a != 0 else 0.0)
            if a != 0:
                n_tx += 1
            for s in range(k):
                aoi_sum[s] += aoi[s]
        delivered = a != 0 and channel_u[t] < p_s
        src = a - 1
        value = 0
        if delivered:
            value = bits[hist[0], src]
        # advance the sources
        row_end = cdf[x, n - 1]
        u = source_u[t] * row_end
        nxt = 0
        for j in range(n):
            if cdf[x, j] <= u:
                nxt += 1
        if nxt > n - 1:
            nxt = n - 1
        for j in range(lag1 - 1):
            hist[j] = hist[j + 1]
        hist[lag1 - 1] = nxt
        # belief update
        if delivered:
            mass = 0.0
            for i in range(n):
                if bits[i, src] != value:
                    b[i] = 0.0
                mass += b[i]
            if mass <= 0.0:
                return dist_sum, cost_sum, n_tx, aoi_sum, ERR_ZERO_MASS
            for i in range(n):
                b[i] /= mass
        total = 0.0
        for j in range(n):
            acc = 0.0
            for i in range(n):
                acc += b[i] * kernel[i, j]
            nb_[j] = acc
            total += acc
        if abs(total - 1.0) > drift_tol:
            return dist_sum, cost_sum, n_tx, aoi_sum, ERR_DRIFT
        for j in range(n):
            b[j] = nb_[j] / total
        for s in range(k):
            aoi[s] += 1
        if delivered:
            aoi[src] = 1
    return dist_sum, cost_sum, n_tx, aoi_sum, OK
