"""Triple junctions of curves evolving by curve shortening flow.

A triod is three embedded open curves meeting at a single junction point O,
each ending at a fixed point on the domain boundary.  Interior nodes follow
the parabolic law  gamma_t = gamma_ll / |gamma_l|^2; the junction point and
the first interior node of each arm are solved implicitly each step from
the flow stencil plus the angle condition (prescribed opening angles, or
the balanced condition sum of unit tangents = 0, which is the 120-degree
case).  Endpoints are held fixed, which is flow-compatible when the
one-sided second difference vanishes there, so no endpoint stencil is
applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .curves import (
    PolylineCurve,
    menger_curvature,
    polyline_lengths,
    polyline_self_intersects,
    polylines_intersect,
    resample_polyline,
)


class FlowSingularError(RuntimeError):
    """The discrete flow produced a collision or degenerate segment."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


BALANCED = "balanced-120"


@dataclass
class Triod:
    """Three discretized curves sharing a junction, each pinned to the boundary.

    ``curves[i]`` is an (N_i, 2) polyline with ``curves[i][0]`` equal to the
    junction O for every i.  Arms must depart the junction in counter-
    clockwise label order; the sector between arm i and arm i+1 then lies on
    the left of arm i, which fixes all distance signs.
    """

    curves: List[np.ndarray]
    angle_mode: str = BALANCED
    alphas: Optional[np.ndarray] = None
    time: float = 0.0

    def __post_init__(self):
        self.curves = [np.asarray(c, dtype=float) for c in self.curves]
        if len(self.curves) != 3:
            raise ValueError("a triod has exactly three curves")
        O = self.curves[0][0]
        for c in self.curves:
            if np.linalg.norm(c[0] - O) > 1e-12:
                raise ValueError("curves must share the junction point")
        if self.angle_mode != BALANCED:
            if self.angle_mode != "fixed-angles":
                raise ValueError(f"unknown angle mode {self.angle_mode!r}")
            if self.alphas is None:
                raise ValueError("fixed-angles mode needs opening angles")
            self.alphas = np.asarray(self.alphas, dtype=float)
        if not self._is_ccw_ordered():
            raise ValueError("arms must be labeled in counterclockwise order")
        self._polylines = None

    # -- basic geometry ----------------------------------------------------

    @property
    def junction(self) -> np.ndarray:
        return self.curves[0][0]

    @property
    def endpoints(self) -> np.ndarray:
        return np.array([c[-1] for c in self.curves])

    def tangent_angles(self) -> np.ndarray:
        """Departure angle theta^i of each arm at the junction."""
        out = np.empty(3)
        for i, c in enumerate(self.curves):
            v = c[1] - c[0]
            out[i] = np.arctan2(v[1], v[0])
        return out

    def _is_ccw_ordered(self):
        th = self.tangent_angles()
        gaps = np.mod(np.diff(np.concatenate([th, th[:1]])), 2 * np.pi)
        return abs(gaps.sum() - 2 * np.pi) < 1e-9 and (gaps > 0).all()

    def opening_angles(self) -> np.ndarray:
        """alpha_i = theta^i - theta^{i-1} (mod 2pi), measured discretely."""
        th = self.tangent_angles()
        return np.mod(th - np.roll(th, 1), 2 * np.pi)

    def total_length(self) -> float:
        return float(sum(polyline_lengths(c).sum() for c in self.curves))

    def polyline(self, i) -> PolylineCurve:
        """Arm i as an oriented curve; d > 0 on the sector between arms i and i+1."""
        if self._polylines is None:
            self._polylines = [PolylineCurve(c, positive_side=1) for c in self.curves]
        return self._polylines[i]

    def node_curvatures(self, i) -> np.ndarray:
        """Tube-identity signed curvature at the nodes of arm i."""
        return -menger_curvature(self.curves[i])

    def angle_residual(self) -> float:
        if self.angle_mode == BALANCED:
            s = np.zeros(2)
            for c in self.curves:
                v = c[1] - c[0]
                s += v / np.linalg.norm(v)
            return float(np.linalg.norm(s))
        res = self.opening_angles() - self.alphas
        res = np.mod(res + np.pi, 2 * np.pi) - np.pi
        return float(np.abs(res).max())

    def min_segment(self) -> float:
        return float(min(polyline_lengths(c).min() for c in self.curves))

    def validate(self, full=False):
        """Check the discrete triod invariants; raise FlowSingularError on failure."""
        for c in self.curves:
            if not np.isfinite(c).all():
                raise FlowSingularError("non-finite node", time=self.time)
        if self.min_segment() <= 0.0:
            raise FlowSingularError("degenerate segment", time=self.time)
        if full:
            for c in self.curves:
                if polyline_self_intersects(c):
                    raise FlowSingularError("flow singular or under-resolved: "
                                            "self-intersection", time=self.time)
            for i in range(3):
                for j in range(i + 1, 3):
                    if polylines_intersect(self.curves[i], self.curves[j],
                                           skip_shared_endpoint=True):
                        raise FlowSingularError("flow singular or under-resolved: "
                                                "arms collide", time=self.time)

    def copy(self) -> "Triod":
        return Triod(
            curves=[c.copy() for c in self.curves],
            angle_mode=self.angle_mode,
            alphas=None if self.alphas is None else self.alphas.copy(),
            time=self.time,
        )

    def scaled(self, factor) -> "Triod":
        return Triod(
            curves=[c * factor for c in self.curves],
            angle_mode=self.angle_mode,
            alphas=None if self.alphas is None else self.alphas.copy(),
            time=self.time,
        )


def make_straight_triod(angles=(np.pi / 2, np.pi / 2 + 2 * np.pi / 3,
                                np.pi / 2 + 4 * np.pi / 3),
                        radius=1.0, nodes=129, center=(0.0, 0.0),
                        angle_mode=BALANCED, alphas=None) -> Triod:
    """Three straight arms from ``center`` to the circle of given radius."""
    center = np.asarray(center, dtype=float)
    curves = []
    lam = np.linspace(0.0, 1.0, nodes)
    for th in angles:
        tip = center + radius * np.array([np.cos(th), np.sin(th)])
        curves.append(np.outer(1 - lam, center) + np.outer(lam, tip))
    return Triod(curves=curves, angle_mode=angle_mode, alphas=alphas)


def stability_step(triod: Triod, safety=0.4) -> float:
    """Largest explicit step for the current resolution: c * (min segment)^2."""
    return safety * triod.min_segment() ** 2


def _interior_update(c, dt):
    """Explicit gamma_ll/|gamma_l|^2 update on nodes 2..N-2 of one arm."""
    new = c.copy()
    second = c[2:] - 2 * c[1:-1] + c[:-2]
    chord2 = ((c[2:] - c[:-2]) ** 2).sum(1)
    vel = 4.0 * second / chord2[:, None]
    new[2:-2] = c[2:-2] + dt * vel[1:-1]
    return new


def _junction_residual(u, triod, partial, dt):
    """Residual of the 8-unknown implicit junction system.

    u = (O, g1, g2, g3) where g_i is the first interior node of arm i;
    ``partial`` carries the already-updated second nodes.
    """
    O = u[0:2]
    res = np.empty(8)
    tangents = np.empty((3, 2))
    for i in range(3):
        g = u[2 + 2 * i : 4 + 2 * i]
        g2 = partial[i][2]
        old = triod.curves[i][1]
        chord = g2 - O
        chord2 = max(float((chord**2).sum()), 1e-300)
        vel = 4.0 * (g2 - 2.0 * g + O) / chord2
        res[2 * i : 2 * i + 2] = g - old - dt * vel
        t = g - O
        tangents[i] = t / max(np.linalg.norm(t), 1e-300)
    if triod.angle_mode == BALANCED:
        res[6:8] = tangents.sum(0)
    else:
        th = np.arctan2(tangents[:, 1], tangents[:, 0])
        a = triod.alphas
        r2 = np.mod(th[1] - th[0] - a[1] + np.pi, 2 * np.pi) - np.pi
        r3 = np.mod(th[2] - th[1] - a[2] + np.pi, 2 * np.pi) - np.pi
        res[6:8] = (r2, r3)
    return res


def _solve_junction(triod, partial, dt, tol=1e-12, max_iter=40):
    u = np.empty(8)
    u[0:2] = triod.junction
    for i in range(3):
        u[2 + 2 * i : 4 + 2 * i] = triod.curves[i][1]
    F = _junction_residual(u, triod, partial, dt)
    if np.linalg.norm(F) < tol:
        return u
    for _ in range(max_iter):
        # finite-difference Jacobian of the small local system
        J = np.empty((8, 8))
        h = 1e-7 * max(1.0, np.abs(u).max())
        for k in range(8):
            up = u.copy()
            up[k] += h
            J[:, k] = (_junction_residual(up, triod, partial, dt) - F) / h
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            raise FlowSingularError("junction system singular", time=triod.time)
        lam = 1.0
        base = np.linalg.norm(F)
        while lam > 1e-8:
            trial = u + lam * step
            Ft = _junction_residual(trial, triod, partial, dt)
            if np.linalg.norm(Ft) < base:
                u, F = trial, Ft
                break
            lam *= 0.5
        else:
            break
        if np.linalg.norm(F) < tol:
            return u
    if np.linalg.norm(F) < 1e-8:
        return u
    raise FlowSingularError(
        f"junction Newton stalled (|F| = {np.linalg.norm(F):.2e})", time=triod.time
    )


def step(triod: Triod, dt: float, redistribute=True, check=False) -> Triod:
    """Advance the triod by one explicit/implicit step of size dt.

    Interior nodes move explicitly; the junction and the first interior node
    of each arm solve the coupled stencil + angle-condition system by
    Newton; endpoints stay fixed.  Nodes are then redistributed to uniform
    arclength (re-indexing along the polyline, no normal motion).

    Raises FlowSingularError when invariants break (``check=True`` adds the
    full embeddedness test).
    """
    partial = [_interior_update(c, dt) for c in triod.curves]
    u = _solve_junction(triod, partial, dt)
    O = u[0:2]
    curves = []
    for i in range(3):
        c = partial[i]
        c[0] = O
        c[1] = u[2 + 2 * i : 4 + 2 * i]
        if redistribute:
            # keep O and the angle-enforced first node; re-index the rest
            tail = resample_polyline(c[1:], len(c) - 1)
            c = np.vstack([c[:1], tail])
        curves.append(c)
    out = Triod(curves=curves, angle_mode=triod.angle_mode,
                alphas=triod.alphas, time=triod.time + dt)
    out.validate(full=check)
    return out


@dataclass
class TriodTrajectory:
    """Stored flow snapshots with linear interpolation in time."""

    times: np.ndarray
    snapshots: List[Triod]
    angle_mode: str = BALANCED

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)

    def at(self, t: float) -> Triod:
        """Triod at time t by nodewise linear interpolation of snapshots."""
        ts = self.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise ValueError(f"time {t} outside stored range [{ts[0]}, {ts[-1]}]")
        k = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
        t0, t1 = ts[k], ts[k + 1]
        w = 0.0 if t1 == t0 else np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
        a, b = self.snapshots[k], self.snapshots[k + 1]
        curves = [(1 - w) * ca + w * cb for ca, cb in zip(a.curves, b.curves)]
        return Triod(curves=curves, angle_mode=a.angle_mode, alphas=a.alphas, time=t)

    def junction_path(self) -> np.ndarray:
        return np.array([s.junction for s in self.snapshots])

    def junction_velocity(self, t: float, h: Optional[float] = None) -> np.ndarray:
        h = h or max(1e-6, (self.times[-1] - self.times[0]) * 1e-4)
        t0 = max(self.times[0], t - h)
        t1 = min(self.times[-1], t + h)
        return (self.at(t1).junction - self.at(t0).junction) / (t1 - t0)

    def gauge_angle(self, t: float) -> float:
        """theta(t): tangent angle of arm 1 at the junction."""
        return float(self.at(t).tangent_angles()[0])

    def gauge_angle_velocity(self, t: float, h: Optional[float] = None) -> float:
        h = h or max(1e-6, (self.times[-1] - self.times[0]) * 1e-4)
        t0 = max(self.times[0], t - h)
        t1 = min(self.times[-1], t + h)
        a0 = self.at(t0).tangent_angles()[0]
        a1 = self.at(t1).tangent_angles()[0]
        return float((np.mod(a1 - a0 + np.pi, 2 * np.pi) - np.pi) / (t1 - t0))


def evolve(
    triod: Triod,
    t_end: float,
    snapshot_times: Sequence[float],
    dt: Optional[float] = None,
    check_every: int = 200,
) -> TriodTrajectory:
    """Flow to t_end, storing snapshots at the requested times.

    ``dt`` defaults to the explicit stability bound, re-evaluated whenever
    the minimum segment shrinks.
    """
    snapshot_times = np.asarray(sorted(set([triod.time] + list(snapshot_times))))
    if snapshot_times[-1] < t_end - 1e-15:
        snapshot_times = np.append(snapshot_times, t_end)
    out = [triod.copy()]
    times = [triod.time]
    cur = triod
    nstep = 0
    for target in snapshot_times[1:]:
        while cur.time < target - 1e-14:
            h = dt if dt is not None else stability_step(cur)
            h = min(h, target - cur.time)
            cur = step(cur, h, check=(nstep % check_every == 0))
            nstep += 1
        out.append(cur.copy())
        times.append(cur.time)
    return TriodTrajectory(times=np.array(times), snapshots=out,
                           angle_mode=triod.angle_mode)


def self_similar_expander(
    ray_angles: Sequence[float],
    t_end: float,
    resolution: int = 129,
    far_radius: float = 4.0,
    snapshot_times: Optional[Sequence[float]] = None,
    dt: Optional[float] = None,
) -> TriodTrajectory:
    """Flow three rays from the origin under the balanced angle condition.

    The rays are truncated at ``far_radius`` with pinned far endpoints; on
    compact windows with t << far_radius^2 the trajectory approximates the
    self-similar expanding solution emanating from the cone.
    """
    angles = np.asarray(ray_angles, dtype=float)
    if len(angles) != 3 or len(np.unique(np.mod(angles, 2 * np.pi))) != 3:
        raise ValueError("need three distinct ray angles")
    order = np.argsort(np.mod(angles, 2 * np.pi))
    angles = angles[order]
    triod = make_straight_triod(angles=angles, radius=far_radius,
                                nodes=resolution, angle_mode=BALANCED)
    if snapshot_times is None:
        snapshot_times = np.linspace(0.0, t_end, 41)
    return evolve(triod, t_end, snapshot_times, dt=dt)


def rescale_blowup(
    trajectory: TriodTrajectory, beta: float, out_times: Sequence[float]
) -> TriodTrajectory:
    """Parabolic rescaling  t -> (1/beta) gamma(., beta^2 t).

    Requires the stored range to cover beta^2 * max(out_times).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    out_times = np.asarray(out_times, dtype=float)
    needed = beta**2 * out_times.max()
    if needed > trajectory.times[-1] + 1e-12:
        raise ValueError(
            f"rescaling needs source times up to {needed}, stored "
            f"range ends at {trajectory.times[-1]}"
        )
    snaps = []
    for t in out_times:
        src = trajectory.at(beta**2 * t)
        snaps.append(Triod(
            curves=[c / beta for c in src.curves],
            angle_mode=src.angle_mode,
            alphas=src.alphas,
            time=t,
        ))
    return TriodTrajectory(times=out_times, snapshots=snaps,
                           angle_mode=trajectory.angle_mode)


def curvature(triod: Triod, i: int, lam: float) -> float:
    """Signed curvature of arm i at parameter lam in (0, 1).

    Discrete circumcircle curvature interpolated between nodes; the sign
    follows the tube-identity convention of the distance machinery
    (positive where the arm bends away from its positive-distance side).
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must be interior")
    c = triod.curves[i]
    if len(c) < 4:
        raise ValueError("degenerate stencil")
    k = triod.node_curvatures(i)
    pos = lam * (len(c) - 1)
    j = int(np.clip(np.floor(pos), 0, len(c) - 2))
    w = pos - j
    return float((1 - w) * k[j] + w * k[j + 1])


# ---------------------------------------------------------------------------
# closed-curve flow (junction disabled): oracle problems


def flow_closed_curve(points, t_end, dt=None, redistribute=True):
    """Curve shortening flow of a closed polyline (periodic stencil).

    Used for the shrinking-circle oracle; returns (times, list of node
    arrays).
    """
    pts = np.asarray(points, dtype=float)
    times = [0.0]
    snaps = [pts.copy()]
    t = 0.0
    while t < t_end - 1e-15:
        seg = polyline_lengths(pts, closed=True)
        h = dt if dt is not None else 0.4 * float(seg.min() ** 2)
        h = min(h, t_end - t)
        prev = np.roll(pts, 1, axis=0)
        nxt = np.roll(pts, -1, axis=0)
        second = nxt - 2 * pts + prev
        chord2 = ((nxt - prev) ** 2).sum(1)
        pts = pts + h * 4.0 * second / chord2[:, None]
        if redistribute:
            pts = resample_polyline(pts, len(pts), closed=True)
        t += h
        times.append(t)
        snaps.append(pts.copy())
    return np.array(times), snaps
