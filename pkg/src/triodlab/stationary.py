"""The entire-plane stationary triple junction: the core of the glued field.

Solves  lap u = grad W(u)  on a square covering the ball of radius R by
parabolic relaxation (gradient flow of the unit-scale energy) from a glued
initial guess: well constants in the sectors, connecting profiles across
the sector edges, blended by the angular partition of unity.  Dirichlet
data on the square boundary comes from the same glue, whose own residual
decays exponentially with radius.

The relaxation is semi-implicit: the Laplacian is treated implicitly and
diagonalized by fast sine transforms, the nonlinearity explicitly, so each
step costs two size-n^2 DSTs per component.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.fft import dstn, idstn
from scipy.interpolate import RectBivariateSpline

from .ansatz import AngularPartition
from .heteroclinic import HeteroclinicProfile
from .potential import ThreeWellPotential


class RelaxationError(RuntimeError):
    """Residual stagnated above tolerance; carries the field & residual dump."""

    def __init__(self, message, values=None, residual=None):
        super().__init__(message)
        self.values = values
        self.residual = residual


class FarFieldGlue:
    """Sector constants blended with edge profiles along straight rays.

    The scale-1 version of the angular construction: distances are to the
    lines through the origin with the edge directions.
    """

    def __init__(self, wells, profiles, thetas, delta_int):
        self.wells = np.asarray(wells, dtype=float)
        self.profiles = list(profiles)
        self.thetas = np.asarray(thetas, dtype=float)
        self.partition = AngularPartition(self.thetas, delta_int)
        self.delta_int = float(delta_int)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 1
        y = np.atleast_2d(y)
        ang = np.arctan2(y[:, 1], y[:, 0])
        out = np.zeros((len(y), 2))
        for i in range(3):
            th = self.thetas[i]
            # signed distance to the edge line, positive on the ccw side
            d = np.cos(th) * y[:, 1] - np.sin(th) * y[:, 0]
            w_edge = self.partition.weight(2 * i, ang)
            w_sect = self.partition.weight(2 * i + 1, ang)
            out += w_edge[:, None] * self.profiles[i](d)
            out += w_sect[:, None] * self.wells[(i + 1) % 3]
        # the angle is undefined at the origin; use the well centroid there
        r = np.linalg.norm(y, axis=1)
        origin = r < 1e-14
        if origin.any():
            out[origin] = self.wells.mean(axis=0)
        return out[0] if scalar else out


class _DirichletHeat:
    """(I - dt lap)^-1 on the interior of a uniform square grid via DST-I."""

    def __init__(self, m, h, dt):
        p = np.arange(1, m + 1)
        lam1 = (2.0 - 2.0 * np.cos(np.pi * p / (m + 1))) / h**2
        self.denom = 1.0 + dt * (lam1[:, None] + lam1[None, :])
        self.m = m

    def solve(self, rhs):
        coef = dstn(rhs, type=1)
        coef /= self.denom
        return idstn(coef, type=1)


def _discrete_residual(potential, u, h):
    """sup norm of  lap_h u - grad W(u)  over interior nodes."""
    lap = (
        u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:]
        - 4.0 * u[1:-1, 1:-1]
    ) / h**2
    gw = potential.gradient(u[1:-1, 1:-1])
    return lap - gw


@dataclass
class StationaryTriple:
    """Relaxed junction field on a square grid with spline evaluation.

    ``radius`` is the junction-ball radius of validity (the grid covers the
    square circumscribing it); queries beyond the grid fall back to the
    far-field glue.
    """

    radius: float
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray  # (nx, ny, 2), [i, j] at (xs[i], ys[j])
    thetas: np.ndarray
    wells: np.ndarray
    residual: float
    glue: FarFieldGlue
    profiles: List[HeteroclinicProfile] = field(default_factory=list)

    def __post_init__(self):
        self._splines = [
            RectBivariateSpline(self.xs, self.ys, self.values[:, :, c], kx=3, ky=3)
            for c in range(2)
        ]

    @property
    def resolution(self):
        return len(self.xs)

    def __call__(self, y):
        """Field value at argument points; far-field glue outside the grid."""
        y = np.asarray(y, dtype=float)
        scalar = y.ndim == 1
        y = np.atleast_2d(y)
        out = np.empty((len(y), 2))
        lim = self.xs[-1]
        inside = (np.abs(y[:, 0]) <= lim) & (np.abs(y[:, 1]) <= lim)
        if inside.any():
            sub = y[inside]
            for c in range(2):
                out[inside, c] = self._splines[c].ev(sub[:, 0], sub[:, 1])
        if (~inside).any():
            out[~inside] = self.glue(y[~inside])
        return out[0] if scalar else out

    def jet(self, y):
        """(U, dU/dy1, dU/dy2, lap U) at argument points inside the grid."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        lim = self.xs[-1]
        if (np.abs(y) > lim).any():
            raise ValueError("jet evaluation outside the stored grid")
        U = np.empty((len(y), 2))
        Ux = np.empty_like(U)
        Uy = np.empty_like(U)
        Ulap = np.empty_like(U)
        for c in range(2):
            s = self._splines[c]
            U[:, c] = s.ev(y[:, 0], y[:, 1])
            Ux[:, c] = s.ev(y[:, 0], y[:, 1], dx=1)
            Uy[:, c] = s.ev(y[:, 0], y[:, 1], dy=1)
            Ulap[:, c] = s.ev(y[:, 0], y[:, 1], dx=2) + s.ev(y[:, 0], y[:, 1], dy=2)
        return U, Ux, Uy, Ulap

    def save(self, path):
        np.savez_compressed(
            path, xs=self.xs, ys=self.ys, values=self.values, thetas=self.thetas,
            wells=self.wells, radius=self.radius, residual=self.residual,
            delta_int=self.glue.delta_int,
        )

    def export_field(self, csv_path, json_path):
        """Flat (x, y, u1, u2) CSV plus a JSON header (radius, resolution, angles)."""
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        flat = np.column_stack(
            [X.ravel(), Y.ravel(), self.values[:, :, 0].ravel(), self.values[:, :, 1].ravel()]
        )
        np.savetxt(csv_path, flat, delimiter=",", header="x,y,u1,u2", comments="")
        with open(json_path, "w") as f:
            json.dump(
                {
                    "radius": self.radius,
                    "resolution": int(self.resolution),
                    "angles": [float(t) for t in self.thetas],
                    "residual": self.residual,
                    "schema": "triodlab-field-v1",
                },
                f,
                indent=2,
                sort_keys=True,
            )


def load_stationary_triple(path, potential, profiles) -> StationaryTriple:
    dat = np.load(path)
    glue = FarFieldGlue(dat["wells"], profiles, dat["thetas"], float(dat["delta_int"]))
    return StationaryTriple(
        radius=float(dat["radius"]), xs=dat["xs"], ys=dat["ys"], values=dat["values"],
        thetas=dat["thetas"], wells=dat["wells"], residual=float(dat["residual"]),
        glue=glue, profiles=list(profiles),
    )


def compute_stationary_triple(
    potential: ThreeWellPotential,
    profiles: List[HeteroclinicProfile],
    thetas,
    radius: float = 12.0,
    resolution: int = 257,
    tol: float = 1e-3,
    delta_int: Optional[float] = None,
    max_steps: int = 20000,
    check_every: int = 25,
) -> StationaryTriple:
    """Relax the glued guess to the stationary junction field.

    ``profiles[i]`` must connect wells i and i+1; ``thetas`` are the sector
    edge directions from the junction angle condition (any global gauge).

    Raises RelaxationError (with the field and residual attached) when the
    residual stagnates above ``tol``.
    """
    thetas = np.asarray(thetas, dtype=float)
    if delta_int is None:
        gaps = np.mod(np.roll(thetas, -1) - thetas, 2 * np.pi)
        delta_int = 0.45 * float(gaps.min())
    glue = FarFieldGlue(potential.wells, profiles, thetas, delta_int)

    n = resolution
    xs = np.linspace(-radius, radius, n)
    ys = xs.copy()
    h = xs[1] - xs[0]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
    u = glue(pts).reshape(n, n, 2)

    lam_max = potential.hessian_spectral_bound(radius=1.6)
    dt = 1.0 / lam_max
    stepper = _DirichletHeat(n - 2, h, dt)

    boundary = u.copy()  # only the rim is read
    best = np.inf
    stall = 0
    for it in range(max_steps):
        gw = potential.gradient(u)
        for c in range(2):
            rhs = u[1:-1, 1:-1, c] - dt * gw[1:-1, 1:-1, c]
            rhs = rhs.copy()
            rhs[0, :] += dt / h**2 * boundary[0, 1:-1, c]
            rhs[-1, :] += dt / h**2 * boundary[-1, 1:-1, c]
            rhs[:, 0] += dt / h**2 * boundary[1:-1, 0, c]
            rhs[:, -1] += dt / h**2 * boundary[1:-1, -1, c]
            u[1:-1, 1:-1, c] = stepper.solve(rhs)
        if (it + 1) % check_every == 0:
            res = _discrete_residual(potential, u, h)
            sup = float(np.linalg.norm(res, axis=-1).max())
            if sup <= tol:
                return StationaryTriple(
                    radius=radius, xs=xs, ys=ys, values=u, thetas=thetas,
                    wells=potential.wells.copy(), residual=sup, glue=glue,
                    profiles=list(profiles),
                )
            if sup >= best * (1.0 - 1e-4):
                stall += 1
                if stall >= 40:
                    raise RelaxationError(
                        f"relaxation stagnated at residual {sup:.3e} > tol {tol:.3e}",
                        values=u, residual=res,
                    )
            else:
                stall = 0
                best = sup
    res = _discrete_residual(potential, u, h)
    sup = float(np.linalg.norm(res, axis=-1).max())
    raise RelaxationError(
        f"relaxation budget exhausted at residual {sup:.3e} > tol {tol:.3e}",
        values=u, residual=res,
    )


def eval_junction_core(ustar: StationaryTriple, x, origin, theta_gauge, eps):
    """The junction core term: u_* at the rotated, shrunk argument.

    The gauge rotation is clockwise by ``theta_gauge``, so that the arm with
    tangent angle theta_gauge maps onto the field's first sector edge.
    Arguments beyond the stored grid use the far-field glue.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 1
    x = np.atleast_2d(x)
    c, s = np.cos(theta_gauge), np.sin(theta_gauge)
    Rcw = np.array([[c, s], [-s, c]])
    y = (x - np.asarray(origin, dtype=float)) @ Rcw.T / eps
    out = ustar(y)
    return out[0] if scalar else out
