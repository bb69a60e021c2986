"""Signed distances to triod arms, sector decomposition, and the three
admissibility radii that parametrize the glued field construction.

Sign conventions: arms are labeled counterclockwise, each arm is oriented
from the junction outward, and the sector between arms i and i+1 lies on
the left of arm i.  The signed distance d_i is positive on that sector and
negative on the sector between arms i-1 and i.  The pair distance d_ij is
positive on the sectors swept counterclockwise from arm i to arm j.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .curves import PolylineCurve, SplineCurve
from .triod import Triod, TriodTrajectory


class TubeValidityError(RuntimeError):
    """A distance-identity query fell outside the validity tube."""


class AdmissibilityError(RuntimeError):
    """No positive admissibility radii exist (tangled or ill-posed input)."""


def signed_distance(triod: Triod, i: int, x, exact=False):
    """Signed distance from x to arm i (vectorized over rows of x)."""
    return triod.polyline(i).signed_distance(x, exact=exact)


def classify_sector(triod: Triod, x) -> np.ndarray:
    """Index s such that x lies in the sector between arms s and s+1.

    Classification is by the distance sign pattern: sector s is where
    d_s > 0 and d_{s+1} <= 0.  Points on an arm (d = 0) fall into the
    sector the arm bounds on its positive side.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    d = np.stack([signed_distance(triod, i, x) for i in range(3)], axis=0)
    out = np.full(len(x), -1, dtype=int)
    score = np.full(len(x), -np.inf)
    for s in range(3):
        margin = np.minimum(d[s], -d[(s + 1) % 3])
        better = margin > score
        out[better] = s
        score[better] = margin[better]
    return out


def pair_distance(triod: Triod, i: int, j: int, x, exact=False):
    """Signed distance to the union of arms i and j.

    |d_ij| = min(|d_i|, |d_j|); the sign is positive exactly on the sectors
    swept counterclockwise from arm i to arm j, which makes it consistent
    with d_i near arm i and antisymmetric in (i, j).
    """
    if i == j:
        raise ValueError("pair distance needs distinct arms")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    pts = np.atleast_2d(x)
    di = signed_distance(triod, i, pts, exact=exact)
    dj = signed_distance(triod, j, pts, exact=exact)
    mag = np.minimum(np.abs(di), np.abs(dj))
    sector = classify_sector(triod, pts)
    # sectors strictly ccw-between i and j: for j = i+1 just sector i;
    # for j = i+2 sectors i and i+1
    if (i + 1) % 3 == j:
        positive = sector == i
    else:
        positive = (sector == i) | (sector == (i + 1) % 3)
    out = np.where(positive, mag, -mag)
    return float(out[0]) if scalar else out


@dataclass
class SectorDecomposition:
    """Admissibility radii and sector queries for one triod snapshot.

    delta_tilde : graphicality radius of the junction ball
    delta_int   : angular half-width of the edge windows
    delta       : tube radius of the distance fields outside the ball
    """

    triod: Triod
    delta_tilde: float
    delta_int: float
    delta: float

    def sector_of(self, x):
        return classify_sector(self.triod, x)

    def masks(self, x):
        s = self.sector_of(np.atleast_2d(x))
        return [(s == k) for k in range(3)]


def _arm_ball_excursion(triod, r):
    """(ok, excursion): graphicality + single-exit test inside B_r(O).

    ok is False when an arm re-enters the ball or fails to be a graph over
    its junction tangent; excursion is the largest angular deviation of
    in-ball nodes from the tangent direction.
    """
    O = triod.junction
    thetas = triod.tangent_angles()
    worst = 0.0
    for i, c in enumerate(triod.curves):
        rad = np.linalg.norm(c - O, axis=1)
        inside = rad <= r
        if inside.all():
            return False, np.inf  # arm entirely inside: ball reaches the endpoint
        exit_idx = int(np.argmax(~inside))
        if inside[exit_idx:].any():
            return False, np.inf  # re-entry
        prefix = c[1:exit_idx + 1]
        if len(prefix) == 0:
            continue
        tau = np.array([np.cos(thetas[i]), np.sin(thetas[i])])
        proj = (prefix - O) @ tau
        if len(prefix) > 1 and not (np.diff(proj) > 0).all():
            return False, np.inf  # not a graph over the tangent line
        rel = prefix - O
        dev = np.arctan2(tau[0] * rel[:, 1] - tau[1] * rel[:, 0], rel @ tau)
        worst = max(worst, float(np.abs(dev).max()))
    return True, worst


def admissibility_radii(
    triod: Triod,
    boundary_clearance: Optional[float] = None,
    levels: int = 30,
) -> SectorDecomposition:
    """Compute (delta_tilde, delta_int, delta) for an embedded triod.

    delta_tilde: largest tested radius (bisection, ``levels`` rounds) such
    that inside the junction ball every arm is a graph over its tangent,
    exits the ball exactly once, and stays inside the angular wedge of
    half-width delta_int/2.  delta_int itself is fixed by the opening
    angles (0.45 of the smallest opening), the largest value for which the
    six angular windows form a valid cover.  delta combines curvature
    radii, half the pairwise arm separation outside the ball, and a
    sampled foot-uniqueness check.
    """
    O = triod.junction
    alphas = triod.opening_angles()
    delta_int = 0.45 * float(alphas.min())

    if boundary_clearance is None:
        boundary_clearance = float(min(np.linalg.norm(p - O) for p in triod.endpoints))
    r_hi = 0.95 * boundary_clearance

    def ok(r):
        good, exc = _arm_ball_excursion(triod, r)
        return good and 2.0 * exc <= delta_int

    if not ok(r_hi * 2.0**-levels):
        raise AdmissibilityError("no positive admissible radii: tangled input")
    lo, hi = r_hi * 2.0**-levels, r_hi
    if ok(hi):
        delta_tilde = hi
    else:
        for _ in range(levels):
            mid = 0.5 * (lo + hi)
            if ok(mid):
                lo = mid
            else:
                hi = mid
        delta_tilde = lo

    # tube radius outside the ball
    deltas = []
    for i in range(3):
        c = triod.curves[i]
        rad = np.linalg.norm(c - O, axis=1)
        outside = rad >= 0.9 * delta_tilde
        if not outside.any():
            raise AdmissibilityError("arm never leaves the junction ball")
        k = np.abs(triod.node_curvatures(i))[outside]
        r_curv = np.inf if k.max() == 0 else 0.95 / k.max()
        sep = np.inf
        for j in range(3):
            if j == i:
                continue
            dj = np.abs(triod.polyline(j).signed_distance(c[outside]))
            mask_j = np.linalg.norm(triod.curves[j] - O, axis=1) >= 0.9 * delta_tilde
            # distance restricted to the far parts of arm j
            dj_far = np.abs(
                PolylineCurve(triod.curves[j][mask_j]).signed_distance(c[outside])
            ) if mask_j.sum() >= 2 else dj
            sep = min(sep, float(np.maximum(dj, 0).min()), float(dj_far.min()))
        deltas.append(min(r_curv, 0.5 * sep))
    delta = float(min(deltas))
    if not np.isfinite(delta) or delta <= 0:
        raise AdmissibilityError("no positive tube radius")

    # foot-uniqueness sampling: offsets at +-delta must report |d| ~ delta
    for i in range(3):
        c = triod.curves[i]
        rad = np.linalg.norm(c - O, axis=1)
        sel = rad >= delta_tilde
        if sel.sum() < 3:
            continue
        pts = c[sel][1:-1]
        tang = c[sel][2:] - c[sel][:-2]
        tang = tang / np.linalg.norm(tang, axis=1)[:, None]
        nrm = np.stack([-tang[:, 1], tang[:, 0]], axis=-1)
        for _ in range(8):
            probe = np.vstack([pts + delta * nrm, pts - delta * nrm])
            d = np.abs(triod.polyline(i).signed_distance(probe))
            if (d >= 0.9 * delta).all():
                break
            delta *= 0.5
        else:
            raise AdmissibilityError("foot-uniqueness sampling kept failing")

    return SectorDecomposition(
        triod=triod, delta_tilde=float(delta_tilde),
        delta_int=float(delta_int), delta=float(delta),
    )


# ---------------------------------------------------------------------------
# evolution identity of the signed distance


def distance_evolution_residual_curve(
    curve_at,
    x,
    t: float,
    h: float,
    dt: float,
    param_margin: float = 0.02,
):
    """Residuals of the tube identities for a moving curve.

    Parameters
    ----------
    curve_at : callable t -> PolylineCurve
    x : (2,) or (M, 2) probe points inside the tube
    t : time (interior to the trajectory)
    h, dt : finite-difference steps in space and time

    Returns
    -------
    residual : (d_t - lap d) - k^2 d / (1 + k d)   at each probe
    grad_defect : |grad d| - 1 at each probe

    Raises
    ------
    TubeValidityError
        When a foot point falls onto a curve endpoint (open curves), where
        the identity does not apply.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m = len(x)
    stencil = np.array([[0.0, 0.0], [h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]])
    probes = (x[:, None, :] + stencil[None, :, :]).reshape(-1, 2)

    curve = curve_at(t)
    q = curve.query(probes)
    d_all = q.distance.reshape(m, 5)
    d0 = d_all[:, 0]
    lap = (d_all[:, 1:].sum(1) - 4 * d0) / h**2
    gx = (d_all[:, 1] - d_all[:, 2]) / (2 * h)
    gy = (d_all[:, 3] - d_all[:, 4]) / (2 * h)
    grad_defect = np.hypot(gx, gy) - 1.0

    center = q.distance.reshape(m, 5)[:, 0]
    foot_param = q.param.reshape(m, 5)[:, 0]
    if not curve.closed:
        bad = (foot_param <= param_margin) | (foot_param >= 1 - param_margin)
        if bad.any():
            raise TubeValidityError("outside tube validity: foot at curve end")
    k = q.curvature.reshape(m, 5)[:, 0]

    dm = curve_at(t - dt).query(x).distance
    dp = curve_at(t + dt).query(x).distance
    d_t = (dp - dm) / (2 * dt)

    residual = (d_t - lap) - k**2 * center / (1.0 + k * center)
    return residual, grad_defect


def distance_evolution_residual(
    trajectory: TriodTrajectory,
    i: int,
    x,
    t: float,
    h: float = 1e-3,
    dt: float = 1e-5,
):
    """Tube-identity residual for arm i of a stored triod flow.

    Arms are queried through their C^2 spline fit: the second differences
    in the identity amplify the gradient kinks of a raw polyline distance
    field far above the identity's own scale.
    """

    def curve_at(s):
        return SplineCurve(trajectory.at(s).curves[i], positive_side=1)

    return distance_evolution_residual_curve(curve_at, x, t, h, dt)
