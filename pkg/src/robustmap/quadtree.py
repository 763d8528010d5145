"""Quadtree repulsion sums for the Barnes-Hut embedding gradient.

The tree is stored level by level as flat arrays (cell codes, counts,
centers of mass), built and traversed with vectorized operations instead
of per-node recursion. A cell is summarized for a query point when
cell_side < theta * distance(point, cell center of mass); leaf cells are
always evaluated exactly per member with the query point excluded, which
makes the theta = 0 traversal reproduce the exact pairwise sums.
"""

from __future__ import annotations

import numpy as np

MAX_DEPTH = 24


class _Level:
    __slots__ = ("codes", "count", "com", "start", "order", "is_leaf", "side", "ix", "iy")


class QuadTree:
    """Square-cell quadtree over a fixed set of 2D points."""

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2:
            raise ValueError(f"expected (N, 2) points, got {points.shape}")
        self.points = points
        n = points.shape[0]
        origin = points.min(axis=0) if n else np.zeros(2)
        extent = points.max(axis=0) - origin if n else np.zeros(2)
        self.origin = origin
        root_side = float(extent.max()) if n else 0.0
        self.levels: list[_Level] = []

        ix = np.zeros(n, dtype=np.int64)
        iy = np.zeros(n, dtype=np.int64)
        depth = 0
        side = root_side
        while True:
            lvl = self._build_level(ix, iy, depth, side)
            self.levels.append(lvl)
            at_cap = depth >= MAX_DEPTH
            if at_cap or lvl.is_leaf.all():
                lvl.is_leaf[:] = True  # cap: remaining cells are evaluated exactly
                break
            # split on the geometric center of each point's current cell
            cx = origin[0] + (ix + 0.5) * side
            cy = origin[1] + (iy + 0.5) * side
            ix = 2 * ix + (points[:, 0] > cx)
            iy = 2 * iy + (points[:, 1] > cy)
            depth += 1
            side *= 0.5

    def _build_level(self, ix, iy, depth, side) -> _Level:
        n = ix.shape[0]
        codes = ix * (np.int64(1) << depth) + iy
        order = np.argsort(codes, kind="stable")
        sorted_codes = codes[order]
        uniq, start, count = np.unique(sorted_codes, return_index=True, return_counts=True)
        pts_sorted = self.points[order]
        lvl = _Level()
        lvl.codes = uniq
        lvl.count = count
        lvl.start = start
        lvl.order = order
        lvl.side = side
        lvl.ix = uniq // (np.int64(1) << depth)
        lvl.iy = uniq % (np.int64(1) << depth)
        if n:
            sums = np.add.reduceat(pts_sorted, start, axis=0)
            lvl.com = sums / count[:, None]
            spans = (np.maximum.reduceat(pts_sorted, start, axis=0)
                     - np.minimum.reduceat(pts_sorted, start, axis=0))
            lvl.is_leaf = (count == 1) | (spans.max(axis=1) == 0.0)
        else:
            lvl.com = np.zeros((0, 2))
            lvl.is_leaf = np.zeros(0, dtype=bool)
        return lvl

    def repulsion(self, theta: float) -> tuple[np.ndarray, float]:
        """Unnormalized repulsive force numerators and the partition sum.

        Returns (num, z_total) where num[i] = sum_cells n_c * q^2 * (y_i - com_c)
        with q = 1 / (1 + d^2), and z_total approximates sum_{k != l} q_kl.
        """
        pts_all = self.points
        n = pts_all.shape[0]
        num = np.zeros((n, 2))
        zsum = np.zeros(n)
        if n == 0:
            return num, 0.0

        pts = np.arange(n)
        crow = np.zeros(n, dtype=np.int64)
        theta2 = theta * theta
        for depth, lvl in enumerate(self.levels):
            com = lvl.com[crow]
            cnt = lvl.count[crow]
            diff = pts_all[pts] - com
            d2 = (diff * diff).sum(axis=1)
            leaf = lvl.is_leaf[crow]
            accept = ~leaf & (lvl.side * lvl.side < theta2 * d2)
            if accept.any():
                q = 1.0 / (1.0 + d2[accept])
                w = cnt[accept] * q
                self._scatter(num, zsum, pts[accept], w * q, diff[accept], w)
            if leaf.any():
                self._leaf_exact(num, zsum, lvl, pts[leaf], crow[leaf])
            rem = ~(leaf | accept)
            if not rem.any() or depth + 1 >= len(self.levels):
                break
            pts, crow = self._expand(lvl, self.levels[depth + 1], depth,
                                     pts[rem], crow[rem])
            if pts.size == 0:
                break
        return num, float(zsum.sum())

    def _scatter(self, num, zsum, idx, qq, diff, w):
        n = num.shape[0]
        num[:, 0] += np.bincount(idx, weights=qq * diff[:, 0], minlength=n)
        num[:, 1] += np.bincount(idx, weights=qq * diff[:, 1], minlength=n)
        zsum += np.bincount(idx, weights=w, minlength=n)

    def _leaf_exact(self, num, zsum, lvl, qpts, crows):
        cnt = lvl.count[crows]
        starts = lvl.start[crows]
        total = int(cnt.sum())
        reps = np.repeat(np.arange(qpts.size), cnt)
        bases = np.concatenate(([0], np.cumsum(cnt)[:-1]))
        offs = np.arange(total) - np.repeat(bases, cnt)
        members = lvl.order[np.repeat(starts, cnt) + offs]
        qi = qpts[reps]
        keep = members != qi
        qi, members = qi[keep], members[keep]
        diff = self.points[qi] - self.points[members]
        d2 = (diff * diff).sum(axis=1)
        q = 1.0 / (1.0 + d2)
        self._scatter(num, zsum, qi, q * q, diff, q)

    def _expand(self, lvl, nxt, depth, pts, crows):
        pix, piy = lvl.ix[crows], lvl.iy[crows]
        shift = np.int64(1) << (depth + 1)
        out_pts, out_rows = [], []
        for a in (0, 1):
            for b in (0, 1):
                ccode = (2 * pix + a) * shift + (2 * piy + b)
                pos = np.searchsorted(nxt.codes, ccode)
                pos_c = np.minimum(pos, len(nxt.codes) - 1)
                ok = nxt.codes[pos_c] == ccode
                out_pts.append(pts[ok])
                out_rows.append(pos_c[ok])
        return np.concatenate(out_pts), np.concatenate(out_rows)
