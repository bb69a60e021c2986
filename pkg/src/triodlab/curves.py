"""Planar curve backends: signed distances, foot-point data, curvature.

Two representations share one query interface:

* ``PolylineCurve`` - the production representation used by the flow and
  the field assembly; distances are exact point-to-polyline distances.
* ``SplineCurve`` - a C^2 parametric cubic-spline fit through the same
  nodes; distances come from Newton projection onto the spline.  Used where
  differentiating through the distance matters (residual audits), since a
  polyline's gradient kinks inject noise into second differences.

Sign conventions (used consistently across the package):

* A curve is oriented by increasing node index; the unit left normal is
  rot90(tangent).
* ``positive_side = +1`` places d > 0 on the left of the orientation.
* Curvature ``k`` is reported with the sign that makes the tube identities
  of an evolving front read  laplacian(d) = k / (1 + k d)  and, for motion
  by curvature,  d_t = k  at the foot point: k = -(curvature vector) . n+
  where n+ is the unit normal toward the positive side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree


@dataclass
class FootData:
    """Result of a closest-point query against a curve."""

    distance: np.ndarray  # signed
    foot: np.ndarray  # (M, 2)
    tangent: np.ndarray  # (M, 2) unit, along orientation
    curvature: np.ndarray  # (M,) tube-identity sign (see module docstring)
    param: np.ndarray  # (M,) arclength fraction in [0, 1]

    @property
    def normal_pos(self):
        """Unit normal toward the positive-distance side."""
        t = self.tangent
        return np.stack([-t[:, 1], t[:, 0]], axis=-1) * self._side

    _side: float = 1.0


def polyline_lengths(points, closed=False):
    pts = np.asarray(points, dtype=float)
    if closed:
        pts = np.vstack([pts, pts[:1]])
    return np.linalg.norm(np.diff(pts, axis=0), axis=1)


def polyline_arclength(points, closed=False):
    seg = polyline_lengths(points, closed)
    return np.concatenate([[0.0], np.cumsum(seg)])


def resample_polyline(points, n, closed=False):
    """Resample to n nodes at uniform arclength; endpoints are preserved.

    New nodes lie exactly on the original polyline, so resampling never
    moves material in the normal direction and cannot increase length.
    """
    pts = np.asarray(points, dtype=float)
    if closed:
        ring = np.vstack([pts, pts[:1]])
        s = polyline_arclength(pts, closed=True)
        target = np.linspace(0.0, s[-1], n, endpoint=False)
        x = np.interp(target, s, ring[:, 0])
        y = np.interp(target, s, ring[:, 1])
        return np.stack([x, y], axis=-1)
    s = polyline_arclength(pts)
    if s[-1] == 0.0:
        return np.repeat(pts[:1], n, axis=0)
    target = np.linspace(0.0, s[-1], n)
    x = np.interp(target, s, pts[:, 0])
    y = np.interp(target, s, pts[:, 1])
    out = np.stack([x, y], axis=-1)
    out[0], out[-1] = pts[0], pts[-1]
    return out


def menger_curvature(points, closed=False):
    """Signed circumcircle curvature at nodes (left-bending positive).

    Open curves copy the adjacent interior value to the two end nodes.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    k = np.zeros(n)
    if closed:
        a = pts - np.roll(pts, 1, axis=0)
        b = np.roll(pts, -1, axis=0) - pts
        sel = slice(None)
    else:
        a = pts[1:-1] - pts[:-2]
        b = pts[2:] - pts[1:-1]
        sel = slice(1, n - 1)
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    la = np.linalg.norm(a, axis=1)
    lb = np.linalg.norm(b, axis=1)
    lc = np.linalg.norm(a + b, axis=1)
    denom = la * lb * lc
    with np.errstate(divide="ignore", invalid="ignore"):
        kk = np.where(denom > 0, 2.0 * cross / denom, 0.0)
    k[sel] = kk
    if not closed and n > 2:
        k[0] = k[1]
        k[-1] = k[-2]
    return k


class PolylineCurve:
    """Oriented polyline with signed-distance queries.

    Parameters
    ----------
    points : (N, 2) array
    closed : bool
        Periodic topology (last node connects back to the first).
    positive_side : +1 or -1
        Side of the orientation carrying positive distance (+1 = left).
    """

    def __init__(self, points, closed=False, positive_side=1):
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must have shape (N, 2)")
        if len(self.points) < 2:
            raise ValueError("need at least two nodes")
        self.closed = bool(closed)
        self.positive_side = float(positive_side)
        pts = self.points
        if closed:
            self._a = pts
            self._b = np.roll(pts, -1, axis=0)
        else:
            self._a = pts[:-1]
            self._b = pts[1:]
        self._e = self._b - self._a
        self._len2 = np.maximum((self._e**2).sum(1), 1e-300)
        self._seglen = np.sqrt(self._len2)
        self._cum = np.concatenate([[0.0], np.cumsum(self._seglen)])
        self._total = self._cum[-1]
        self._tree = cKDTree(self.points)
        self._node_curv = menger_curvature(self.points, closed)
        # average direction at each node for side classification at vertices
        if closed:
            dirs = self._e / self._seglen[:, None]
            node_dir = dirs + np.roll(dirs, 1, axis=0)
        else:
            dirs = self._e / self._seglen[:, None]
            node_dir = np.vstack([dirs[:1], dirs[:-1] + dirs[1:], dirs[-1:]])
        self._node_dir = node_dir

    @property
    def n_segments(self):
        return len(self._a)

    @property
    def length(self):
        return float(self._total)

    def _candidate_segments(self, x, window):
        _, node = self._tree.query(x)
        node = np.atleast_1d(node)
        nseg = self.n_segments
        offs = np.arange(-window, window + 1)
        cand = node[:, None] + offs[None, :]
        if self.closed:
            cand %= nseg
        else:
            cand = np.clip(cand, 0, nseg - 1)
        return cand

    def query(self, x, window=None, exact=False):
        """Closest-point query.

        ``exact`` scans all segments (oracle mode); otherwise a KD-tree on
        nodes prefilters to a +-window of segments around the nearest node,
        which is exact for near-uniform sampling.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        m = len(x)
        if exact or self.n_segments <= 32:
            cand = np.broadcast_to(np.arange(self.n_segments), (m, self.n_segments))
        else:
            cand = self._candidate_segments(x, window or 8)
        a = self._a[cand]  # (m, C, 2)
        e = self._e[cand]
        l2 = self._len2[cand]
        diff = x[:, None, :] - a
        t = np.clip((diff * e).sum(-1) / l2, 0.0, 1.0)
        foot = a + t[..., None] * e
        d2 = ((x[:, None, :] - foot) ** 2).sum(-1)
        best = np.argmin(d2, axis=1)
        rows = np.arange(m)
        seg = cand[rows, best]
        tbest = t[rows, best]
        footb = foot[rows, best]
        dist = np.sqrt(d2[rows, best])

        # side classification; at vertices use the angle-bisector direction
        at_vertex = (tbest <= 0.0) | (tbest >= 1.0)
        ref_dir = self._e[seg].copy()
        if at_vertex.any():
            vid = np.where(tbest[at_vertex] <= 0.0, seg[at_vertex], seg[at_vertex] + 1)
            if self.closed:
                vid %= len(self.points)
            else:
                vid = np.clip(vid, 0, len(self.points) - 1)
            ref_dir[at_vertex] = self._node_dir[vid]
        rel = x - footb
        cross = ref_dir[:, 0] * rel[:, 1] - ref_dir[:, 1] * rel[:, 0]
        sign = np.where(cross >= 0, 1.0, -1.0) * self.positive_side

        tangent = self._e[seg] / self._seglen[seg][:, None]
        # node curvature interpolated along the segment, tube-identity sign
        k0 = self._node_curv[seg]
        k1 = self._node_curv[(seg + 1) % len(self.points) if self.closed else seg + 1]
        k_menger = (1 - tbest) * k0 + tbest * k1
        k = -self.positive_side * k_menger
        param = (self._cum[seg] + tbest * self._seglen[seg]) / max(self._total, 1e-300)
        return FootData(
            distance=sign * dist,
            foot=footb,
            tangent=tangent,
            curvature=k,
            param=param,
            _side=self.positive_side,
        )

    def signed_distance(self, x, exact=False):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 1
        res = self.query(np.atleast_2d(x), exact=exact).distance
        return float(res[0]) if scalar else res

    def unsigned_distance_bruteforce(self, x):
        """Plain loop over all segments; the oracle for the fast query."""
        x = np.asarray(x, dtype=float)
        best = np.inf
        for a, e, l2 in zip(self._a, self._e, self._len2):
            t = min(max(float((x - a) @ e / l2), 0.0), 1.0)
            foot = a + t * e
            best = min(best, float(np.hypot(*(x - foot))))
        return best


class SplineCurve:
    """C^2 parametric cubic spline through the given nodes.

    Distance queries use Newton projection seeded from a dense presampling,
    so the resulting distance field is smooth (no polyline gradient kinks).
    """

    def __init__(self, points, closed=False, positive_side=1, presample=4):
        pts = np.asarray(points, dtype=float)
        self.closed = bool(closed)
        self.positive_side = float(positive_side)
        if closed:
            pts_ext = np.vstack([pts, pts[:1]])
        else:
            pts_ext = pts
        chord = np.concatenate(
            [[0.0], np.cumsum(np.linalg.norm(np.diff(pts_ext, axis=0), axis=1))]
        )
        self._S = chord[-1]
        bc = "periodic" if closed else "natural"
        self._spline = CubicSpline(chord, pts_ext, axis=0, bc_type=bc)
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)
        m = presample * len(pts)
        s_dense = np.linspace(0.0, self._S, m, endpoint=closed is False)
        self._s_dense = s_dense
        self._tree = cKDTree(self._spline(s_dense))

    @property
    def length(self):
        return float(self._S)

    def point(self, s):
        return self._spline(np.mod(s, self._S) if self.closed else np.clip(s, 0, self._S))

    def query(self, x, newton_iters=8):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        _, idx = self._tree.query(x)
        s = self._s_dense[np.atleast_1d(idx)].copy()
        for _ in range(newton_iters):
            p = self._spline(s)
            dp = self._d1(s)
            ddp = self._d2(s)
            r = x - p
            f = (r * dp).sum(1)
            fp = (dp * dp).sum(1) - (r * ddp).sum(1)
            stepv = np.where(np.abs(fp) > 1e-14, f / np.where(fp == 0, 1, fp), 0.0)
            stepv = np.clip(stepv, -0.1 * self._S, 0.1 * self._S)
            s = s + stepv
            if self.closed:
                s = np.mod(s, self._S)
            else:
                s = np.clip(s, 0.0, self._S)
        p = self._spline(s)
        dp = self._d1(s)
        ddp = self._d2(s)
        speed = np.linalg.norm(dp, axis=1)
        tangent = dp / speed[:, None]
        rel = x - p
        dist = np.linalg.norm(rel, axis=1)
        cross_t = tangent[:, 0] * rel[:, 1] - tangent[:, 1] * rel[:, 0]
        sign = np.where(cross_t >= 0, 1.0, -1.0) * self.positive_side
        k_frenet = (dp[:, 0] * ddp[:, 1] - dp[:, 1] * ddp[:, 0]) / speed**3
        k = -self.positive_side * k_frenet
        return FootData(
            distance=sign * dist,
            foot=p,
            tangent=tangent,
            curvature=k,
            param=s / max(self._S, 1e-300),
            _side=self.positive_side,
        )

    def signed_distance(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 1
        res = self.query(np.atleast_2d(x)).distance
        return float(res[0]) if scalar else res


def segments_intersect(a0, a1, b0, b1, eps=1e-12):
    """Vectorized proper-intersection test between segment batches."""

    def orient(p, q, r):
        return (q[..., 0] - p[..., 0]) * (r[..., 1] - p[..., 1]) - (
            q[..., 1] - p[..., 1]
        ) * (r[..., 0] - p[..., 0])

    d1 = orient(b0, b1, a0)
    d2 = orient(b0, b1, a1)
    d3 = orient(a0, a1, b0)
    d4 = orient(a0, a1, b1)
    proper = ((d1 > eps) & (d2 < -eps) | (d1 < -eps) & (d2 > eps)) & (
        (d3 > eps) & (d4 < -eps) | (d3 < -eps) & (d4 > eps)
    )
    return proper


def polyline_self_intersects(points, closed=False):
    """True when any two non-adjacent segments properly cross."""
    pts = np.asarray(points, dtype=float)
    a = pts[:-1] if not closed else pts
    b = pts[1:] if not closed else np.roll(pts, -1, axis=0)
    n = len(a)
    if n < 3:
        return False
    i, j = np.triu_indices(n, k=2)
    if not closed:
        pass
    else:
        keep = ~((i == 0) & (j == n - 1))
        i, j = i[keep], j[keep]
    hit = segments_intersect(a[i], b[i], a[j], b[j])
    return bool(hit.any())


def polylines_intersect(p, q, skip_shared_endpoint=False):
    """True when two polylines properly cross.

    ``skip_shared_endpoint`` drops the first segment of each (for triod arms
    that legitimately share the junction point).
    """
    a0, a1 = p[:-1], p[1:]
    b0, b1 = q[:-1], q[1:]
    if skip_shared_endpoint:
        a0, a1 = a0[1:], a1[1:]
        b0, b1 = b0[1:], b1[1:]
    ii, jj = np.meshgrid(np.arange(len(a0)), np.arange(len(b0)), indexing="ij")
    hit = segments_intersect(a0[ii], a1[ii], b0[jj], b1[jj])
    return bool(hit.any())
