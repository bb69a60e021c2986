"""The glued approximate solution: boundary data, angular/tubular partitions
of unity, cutoffs, and their assembly into the full two-scale field.

Regions (for a junction at O with graphicality radius dt = delta_tilde):

* r <= eps^rho/2       : pure junction core, the entire-plane stationary
                         triple junction evaluated at R_cw(theta_t)(x-O)/eps
* eps^rho .. dt - eps  : angular glue of edge profiles and well constants
* r >= dt              : tubular glue of the same ingredients, driven by
                         signed distances instead of angles (boundary data)
* two transition annuli between these, blended by radial cutoffs.

Every field is evaluated either as plain values or as a "jet" carrying
(value, d/dt, gradient, laplacian) computed by exact chain rules through
the ingredients; finite differencing the assembled field at the scales the
residual bounds live on would drown them in truncation noise.

Index conventions (arms labeled counterclockwise): edge i carries the
profile connecting wells i and i+1, evaluated on d_i; the sector between
arms i and i+1 carries the well constant c_{i+1}.  The published boundary-
data formula juxtaposes the two partition terms as a product and pairs the
sector weight with c_i; both are repaired here (sum, and c_{i+1}) so that
the blend is continuous across the near-edge/away overlap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .curves import SplineCurve
from .triod import Triod, TriodTrajectory


class UncoveredPointError(RuntimeError):
    """A tubular-partition query fell outside the covered region."""


# ---------------------------------------------------------------------------
# smoothstep and cutoff profiles


def smoothstep(u):
    """Quintic smoothstep: 0 below 0, 1 above 1, C^2 at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 + u * (-15.0 + 6.0 * u))


def smoothstep_d1(u):
    inside = (u > 0.0) & (u < 1.0)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 30.0 * u**2 * (u - 1.0) ** 2, 0.0)


def smoothstep_d2(u):
    inside = (u > 0.0) & (u < 1.0)
    u = np.clip(u, 0.0, 1.0)
    return np.where(inside, 60.0 * u * (1.0 - 3.0 * u + 2.0 * u**2), 0.0)


class CutoffProfiles:
    """The two plateau cutoffs: radial (plane to [0,1]) and scalar.

    Both equal 1 for arguments <= 1/2 and 0 for arguments >= 1 with a
    quintic C^2 transition whose slope is bounded by 2 * 15/8 < 4.  The
    scalar cutoff is the monotone one-sided ramp: the radial blend feeds it
    an affine function of r that is strongly negative deep inside the
    junction ball, where the blend must sit at its plateau value 1 (an even
    profile would extinguish the entire junction core).
    """

    @staticmethod
    def eta(u):
        """One-sided plateau ramp: 1 for u <= 1/2, 0 for u >= 1."""
        return 1.0 - smoothstep(2.0 * np.asarray(u, dtype=float) - 1.0)

    @staticmethod
    def eta_d1(u):
        return -2.0 * smoothstep_d1(2.0 * np.asarray(u, dtype=float) - 1.0)

    @staticmethod
    def eta_d2(u):
        return -4.0 * smoothstep_d2(2.0 * np.asarray(u, dtype=float) - 1.0)

    @classmethod
    def eta1(cls, x):
        """Radial plane cutoff: 1 on |x| <= 1/2, 0 on |x| >= 1."""
        x = np.asarray(x, dtype=float)
        return cls.eta(np.linalg.norm(np.atleast_2d(x), axis=-1))

    @classmethod
    def eta2(cls, u):
        return cls.eta(u)


# ---------------------------------------------------------------------------
# scalar/vector jets: (value, time derivative, gradient, laplacian)


@dataclass
class SJet:
    """Jet of a scalar field sampled at M points."""

    val: np.ndarray  # (M,)
    dt: np.ndarray  # (M,)
    gx: np.ndarray
    gy: np.ndarray
    lap: np.ndarray

    @classmethod
    def constant(cls, c, m):
        z = np.zeros(m)
        return cls(np.full(m, float(c)), z.copy(), z.copy(), z.copy(), z.copy())

    def __add__(self, other):
        return SJet(self.val + other.val, self.dt + other.dt,
                    self.gx + other.gx, self.gy + other.gy, self.lap + other.lap)

    def __mul__(self, other):
        if isinstance(other, SJet):
            return SJet(
                self.val * other.val,
                self.dt * other.val + self.val * other.dt,
                self.gx * other.val + self.val * other.gx,
                self.gy * other.val + self.val * other.gy,
                self.lap * other.val + 2.0 * (self.gx * other.gx + self.gy * other.gy)
                + self.val * other.lap,
            )
        return SJet(self.val * other, self.dt * other, self.gx * other,
                    self.gy * other, self.lap * other)

    def rsub_const(self, c):
        """c - self."""
        return SJet(c - self.val, -self.dt, -self.gx, -self.gy, -self.lap)

    def compose(self, f, f1, f2):
        """Jet of f(self) given callables for f, f', f''."""
        v = f(self.val)
        d1 = f1(self.val)
        d2 = f2(self.val)
        return SJet(
            v,
            d1 * self.dt,
            d1 * self.gx,
            d1 * self.gy,
            d2 * (self.gx**2 + self.gy**2) + d1 * self.lap,
        )

    def affine(self, a, b):
        """a * self + b."""
        return SJet(a * self.val + b, a * self.dt, a * self.gx, a * self.gy,
                    a * self.lap)


@dataclass
class VJet:
    """Jet of an R^2-valued field sampled at M points."""

    val: np.ndarray  # (M, 2)
    dt: np.ndarray
    gx: np.ndarray
    gy: np.ndarray
    lap: np.ndarray

    @classmethod
    def constant(cls, c, m):
        z = np.zeros((m, 2))
        v = np.broadcast_to(np.asarray(c, dtype=float), (m, 2)).copy()
        return cls(v, z.copy(), z.copy(), z.copy(), z.copy())

    @classmethod
    def zero(cls, m):
        return cls.constant((0.0, 0.0), m)

    def __add__(self, other):
        return VJet(self.val + other.val, self.dt + other.dt,
                    self.gx + other.gx, self.gy + other.gy, self.lap + other.lap)

    def weighted(self, w: SJet):
        """Product w * self with a scalar jet."""
        wv = w.val[:, None]
        return VJet(
            wv * self.val,
            w.dt[:, None] * self.val + wv * self.dt,
            w.gx[:, None] * self.val + wv * self.gx,
            w.gy[:, None] * self.val + wv * self.gy,
            w.lap[:, None] * self.val
            + 2.0 * (w.gx[:, None] * self.gx + w.gy[:, None] * self.gy)
            + wv * self.lap,
        )


def profile_vjet(profile, u: SJet) -> VJet:
    """Jet of zeta(u) for a connecting orbit and a scalar-jet argument.

    The second derivative uses the profile ODE (zeta'' = grad W along the
    orbit) inside the domain and the exponential-tail linearization beyond,
    so no finite differencing of the stored samples is involved.
    """
    z = profile(u.val)
    dz = profile.derivative(u.val)
    ddz = profile.second_derivative(u.val)
    g2 = (u.gx**2 + u.gy**2)[:, None]
    return VJet(
        z,
        dz * u.dt[:, None],
        dz * u.gx[:, None],
        dz * u.gy[:, None],
        ddz * g2 + dz * u.lap[:, None],
    )


# ---------------------------------------------------------------------------
# angular partition of unity (six windows around the junction)


class AngularPartition:
    """Partition of unity on the circle subordinate to the six windows

        A_{2i}   = (theta_i - w, theta_i + w)         edge windows
        A_{2i+1} = (theta_i + w/2, theta_{i+1} - w/2)  sector windows

    built from complementary quintic transitions, so the six weights sum to
    one exactly.  ``w`` is the angular half-width delta_int.
    """

    def __init__(self, thetas, delta_int):
        self.thetas = np.asarray(thetas, dtype=float)
        if len(self.thetas) != 3:
            raise ValueError("three edge directions required")
        gaps = np.mod(np.roll(self.thetas, -1) - self.thetas, 2 * np.pi)
        gaps[gaps == 0] = 2 * np.pi
        if delta_int <= 0 or delta_int >= 0.5 * gaps.min():
            raise ValueError("delta_int must lie in (0, half the smallest opening)")
        self.delta_int = float(delta_int)

    def _rel(self, phi, i):
        return np.mod(phi - self.thetas[i] + np.pi, 2 * np.pi) - np.pi

    def weight(self, j, phi, order=0):
        """Weight of window j at angle phi (0: value, 1: d/dphi, 2: d2/dphi2)."""
        phi = np.asarray(phi, dtype=float)
        w = self.delta_int
        i = j // 2
        if j % 2 == 0:
            # edge window around theta_i: plateau |rel| <= w/2, zero |rel| >= w
            rel = self._rel(phi, i)
            u = (np.abs(rel) - 0.5 * w) / (0.5 * w)
            if order == 0:
                return 1.0 - smoothstep(u)
            du = np.sign(rel) / (0.5 * w)
            if order == 1:
                return -smoothstep_d1(u) * du
            return -smoothstep_d2(u) * du**2
        # sector window between theta_i and theta_{i+1}
        rel = self._rel(phi, i)
        gap = np.mod(self.thetas[(i + 1) % 3] - self.thetas[i], 2 * np.pi)
        # rising transition over rel in (w/2, w), falling over (gap - w, gap - w/2)
        rel = np.mod(rel, 2 * np.pi)
        up = (rel - 0.5 * w) / (0.5 * w)
        down = (rel - (gap - w)) / (0.5 * w)
        if order == 0:
            return smoothstep(up) * (1.0 - smoothstep(down))
        if order == 1:
            return (smoothstep_d1(up) * (1.0 - smoothstep(down))
                    - smoothstep(up) * smoothstep_d1(down)) / (0.5 * w)
        return (smoothstep_d2(up) * (1.0 - smoothstep(down))
                - 2.0 * smoothstep_d1(up) * smoothstep_d1(down)
                - smoothstep(up) * smoothstep_d2(down)) / (0.5 * w) ** 2

    def weights(self, phi):
        """All six weights at the given angles, shape (6, M)."""
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        return np.stack([self.weight(j, phi) for j in range(6)], axis=0)

    def weight_sjet(self, j, phi: SJet) -> SJet:
        return phi.compose(
            lambda v: self.weight(j, v, 0),
            lambda v: self.weight(j, v, 1),
            lambda v: self.weight(j, v, 2),
        )


def xi_int(partition: AngularPartition, j: int, theta):
    """Angular partition weight j at polar angle theta."""
    return partition.weight(j, theta)


# ---------------------------------------------------------------------------
# tubular partition of unity (outside the junction ball)


def _fall(v, lo, hi, order=0):
    """1 below lo, 0 above hi (C^2)."""
    u = (v - lo) / (hi - lo)
    if order == 0:
        return 1.0 - smoothstep(u)
    if order == 1:
        return -smoothstep_d1(u) / (hi - lo)
    return -smoothstep_d2(u) / (hi - lo) ** 2


def _rise(v, lo, hi, order=0):
    u = (v - lo) / (hi - lo)
    if order == 0:
        return smoothstep(u)
    if order == 1:
        return smoothstep_d1(u) / (hi - lo)
    return smoothstep_d2(u) / (hi - lo) ** 2


def _sjet_compose(u: SJet, fn, lo, hi) -> SJet:
    return u.compose(
        lambda v: fn(v, lo, hi, 0),
        lambda v: fn(v, lo, hi, 1),
        lambda v: fn(v, lo, hi, 2),
    )


def _sjet_abs(u: SJet) -> SJet:
    """|u| as a jet; only valid where downstream profiles are flat at u = 0."""
    s = np.where(u.val >= 0, 1.0, -1.0)
    return SJet(np.abs(u.val), s * u.dt, s * u.gx, s * u.gy, s * u.lap)


class TubularPartition:
    """Partition of unity subordinate to the distance-defined cover

        D_ii     = { |d_i| <= delta }
        D_{i,i+1} = { d_i >= delta/2, d_{i+1} <= -delta/2, d_{i,i+1} >= delta/2 }

    Raw weights are products of plateau profiles in the distances,
    normalized to sum to one on the cover.
    """

    def __init__(self, delta):
        self.delta = float(delta)

    def weights_and_jets(self, d_jets: Sequence[SJet], dpair_jets: Sequence[SJet]):
        """Normalized weight jets keyed (i, i) and (i, i+1)."""
        de = self.delta
        raw = {}
        for i in range(3):
            raw[(i, i)] = _sjet_compose(_sjet_abs(d_jets[i]), _fall, 0.5 * de, de)
            ri = _sjet_compose(d_jets[i], _rise, 0.5 * de, de)
            rn = _sjet_compose(d_jets[(i + 1) % 3] * (-1.0), _rise, 0.5 * de, de)
            rp = _sjet_compose(dpair_jets[i], _rise, 0.5 * de, de)
            raw[(i, (i + 1) % 3)] = ri * rn * rp
        total = None
        for v in raw.values():
            total = v if total is None else total + v
        uncovered = total.val <= 1e-12
        norm_val = np.where(uncovered, 1.0, total.val)
        out = {}
        for key, b in raw.items():
            # quotient rule for b / S
            S, bS = norm_val, b
            inv = 1.0 / S
            val = bS.val * inv
            dt = (bS.dt - val * total.dt) * inv
            gx = (bS.gx - val * total.gx) * inv
            gy = (bS.gy - val * total.gy) * inv
            lap = (bS.lap - val * total.lap - 2.0 * (gx * total.gx + gy * total.gy)) * inv
            out[key] = SJet(val, dt, gx, gy, lap)
        return out, uncovered


# ---------------------------------------------------------------------------
# time-localized geometry of the reference triod


class TriodFrame:
    """Arms, junction position/velocity, and gauge angle at one time.

    Distance jets are computed against C^2 spline fits of the arms; the time
    derivative of a distance is the normal velocity of the foot point, read
    from node velocities of the stored trajectory (zero for static triods).
    """

    def __init__(self, triod: Triod, node_velocities=None,
                 junction_velocity=(0.0, 0.0), gauge_velocity=0.0):
        self.triod = triod
        self.arms = [SplineCurve(c, positive_side=1) for c in triod.curves]
        self.node_velocities = node_velocities
        self.junction = triod.junction
        self.junction_velocity = np.asarray(junction_velocity, dtype=float)
        self.gauge_angle = float(triod.tangent_angles()[0])
        self.gauge_velocity = float(gauge_velocity)

    @classmethod
    def from_trajectory(cls, trajectory: TriodTrajectory, t: float, h=None):
        span = trajectory.times[-1] - trajectory.times[0]
        h = h or max(1e-8, 1e-3 * span)
        t0 = max(trajectory.times[0], t - h)
        t1 = min(trajectory.times[-1], t + h)
        snap = trajectory.at(t)
        a, b = trajectory.at(t0), trajectory.at(t1)
        vels = [(cb - ca) / (t1 - t0) for ca, cb in zip(a.curves, b.curves)]
        th0 = a.tangent_angles()[0]
        th1 = b.tangent_angles()[0]
        dth = (np.mod(th1 - th0 + np.pi, 2 * np.pi) - np.pi) / (t1 - t0)
        return cls(
            snap,
            node_velocities=vels,
            junction_velocity=(b.junction - a.junction) / (t1 - t0),
            gauge_velocity=dth,
        )

    def distance_jet(self, i, x) -> SJet:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        q = self.arms[i].query(x)
        d = q.distance
        n = q.normal_pos
        k = q.curvature
        lap = k / (1.0 + k * d)
        if self.node_velocities is None:
            dt = np.zeros(len(x))
        else:
            vel = self.node_velocities[i]
            m = len(vel)
            vfoot = np.empty((len(x), 2))
            pos = q.param * (m - 1)
            j0 = np.clip(np.floor(pos).astype(int), 0, m - 2)
            w = pos - j0
            vfoot = (1 - w)[:, None] * vel[j0] + w[:, None] * vel[j0 + 1]
            dt = -(vfoot * n).sum(1)
        return SJet(d, dt, n[:, 0], n[:, 1], lap)

    def pair_distance_jet(self, i, d_jets, sectors) -> SJet:
        """Jet of d_{i,i+1} from the arm jets and a sector classification.

        |d_{i,i+1}| = min(|d_i|, |d_{i+1}|) and the sign is + exactly on
        sector i; the selection switch sits where both profiles are flat,
        so the piecewise jet is C^2 wherever it is consumed.
        """
        j = (i + 1) % 3
        a, b = d_jets[i], d_jets[j]
        use_a = np.abs(a.val) <= np.abs(b.val)
        sign_target = np.where(sectors == i, 1.0, -1.0)
        fa = sign_target * np.where(a.val >= 0, 1.0, -1.0)
        fb = sign_target * np.where(b.val >= 0, 1.0, -1.0)
        f = np.where(use_a, fa, fb)
        return SJet(
            np.where(use_a, fa * a.val, fb * b.val),
            f * np.where(use_a, a.dt, b.dt),
            f * np.where(use_a, a.gx, b.gx),
            f * np.where(use_a, a.gy, b.gy),
            f * np.where(use_a, a.lap, b.lap),
        )

    def sectors(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.stack([self.arms[i].signed_distance(x) for i in range(3)], axis=0)
        out = np.full(len(x), -1, dtype=int)
        score = np.full(len(x), -np.inf)
        for s in range(3):
            margin = np.minimum(d[s], -d[(s + 1) % 3])
            better = margin > score
            out[better] = s
            score[better] = margin[better]
        return out

    def radius_jet(self, x) -> SJet:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        rel = x - self.junction
        r = np.linalg.norm(rel, axis=1)
        r_safe = np.maximum(r, 1e-300)
        gx = rel[:, 0] / r_safe
        gy = rel[:, 1] / r_safe
        dt = -(self.junction_velocity[0] * gx + self.junction_velocity[1] * gy)
        return SJet(r, dt, gx, gy, 1.0 / r_safe)

    def gauge_relative_angle_jet(self, x) -> SJet:
        """Jet of theta(x) - theta_gauge(t) with theta the polar angle about O."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        rel = x - self.junction
        X, Y = rel[:, 0], rel[:, 1]
        r2 = np.maximum(X**2 + Y**2, 1e-300)
        phi = np.arctan2(Y, X) - self.gauge_angle
        Ox, Oy = self.junction_velocity
        dt = (Y * Ox - X * Oy) / r2 - self.gauge_velocity
        return SJet(phi, dt, -Y / r2, X / r2, np.zeros(len(x)))


# ---------------------------------------------------------------------------
# the assembled field


@dataclass
class AnsatzParams:
    """Scales of the glued construction.

    eps : interface width parameter
    rho : core-blend exponent, strictly inside (1/2, 1)
    delta_tilde, delta_int, delta : admissibility radii of the triod
    """

    eps: float
    delta_tilde: float
    delta_int: float
    delta: float
    rho: float = 0.75

    def __post_init__(self):
        if not 0.5 < self.rho < 1.0:
            raise ValueError("rho must lie strictly inside (1/2, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.eps >= self.delta_tilde / 4.0:
            raise ValueError("eps must be < delta_tilde / 4")


class AnsatzField:
    """Two-scale approximate solution built from a triod, the three
    connecting profiles, and the stationary triple junction.

    ``frame_at(t)`` supplies the time-localized triod geometry; use
    ``AnsatzField.for_static(...)`` or ``AnsatzField.for_trajectory(...)``.
    """

    def __init__(self, potential, profiles, ustar, frame_at, params: AnsatzParams,
                 thetas=None):
        self.potential = potential
        self.profiles = list(profiles)
        self.ustar = ustar
        self.frame_at = frame_at
        self.params = params
        base = thetas if thetas is not None else ustar.thetas
        self.partition = AngularPartition(np.asarray(base) - base[0], params.delta_int)
        self.tubular = TubularPartition(params.delta)
        self.wells = np.asarray(potential.wells, dtype=float)
        self._frame_cache = {}

    # -- construction helpers ------------------------------------------------

    @classmethod
    def for_static(cls, potential, profiles, ustar, triod, params, **kw):
        frame = TriodFrame(triod)
        return cls(potential, profiles, ustar, lambda t: frame, params, **kw)

    @classmethod
    def for_trajectory(cls, potential, profiles, ustar, trajectory, params, **kw):
        def frame_at(t, _cache={}):
            key = round(float(t), 12)
            if key not in _cache:
                _cache[key] = TriodFrame.from_trajectory(trajectory, t)
            return _cache[key]

        return cls(potential, profiles, ustar, frame_at, params, **kw)

    # -- jets of the pieces ----------------------------------------------------

    def _distance_jets(self, frame, x):
        return [frame.distance_jet(i, x) for i in range(3)]

    def _phi_jet(self, frame, x, d_jets=None, allow_uncovered=False):
        """Boundary-data field: tubular blend of edge profiles and wells."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        eps = self.params.eps
        if d_jets is None:
            d_jets = self._distance_jets(frame, x)
        sectors = frame.sectors(x)
        dpair = [frame.pair_distance_jet(i, d_jets, sectors) for i in range(3)]
        weights, uncovered = self.tubular.weights_and_jets(d_jets, dpair)
        if uncovered.any() and not allow_uncovered:
            raise UncoveredPointError(
                f"{int(uncovered.sum())} query points outside the tubular cover"
            )
        out = VJet.zero(len(x))
        for i in range(3):
            prof = profile_vjet(self.profiles[i], d_jets[i].affine(1.0 / eps, 0.0))
            out = out + prof.weighted(weights[(i, i)])
            cnext = VJet.constant(self.wells[(i + 1) % 3], len(x))
            out = out + cnext.weighted(weights[(i, (i + 1) % 3)])
        if uncovered.any():
            for arr in (out.val, out.dt, out.gx, out.gy, out.lap):
                arr[uncovered] = 0.0
        return out, uncovered

    def _tilde_phi_jet(self, frame, x, d_jets=None):
        """Angular blend of edge profiles and wells inside the junction ball."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        eps = self.params.eps
        if d_jets is None:
            d_jets = self._distance_jets(frame, x)
        phi_ang = frame.gauge_relative_angle_jet(x)
        out = VJet.zero(len(x))
        for i in range(3):
            w_edge = self.partition.weight_sjet(2 * i, phi_ang)
            w_sect = self.partition.weight_sjet(2 * i + 1, phi_ang)
            prof = profile_vjet(self.profiles[i], d_jets[i].affine(1.0 / eps, 0.0))
            out = out + prof.weighted(w_edge)
            cnext = VJet.constant(self.wells[(i + 1) % 3], len(x))
            out = out + cnext.weighted(w_sect)
        return out

    def _eta2_jet(self, frame, x):
        """Radial blend eta_2(r/(2 eps) + 1 - delta_tilde/(2 eps)) as a jet."""
        eps, dt_ = self.params.eps, self.params.delta_tilde
        r = frame.radius_jet(x)
        arg = r.affine(1.0 / (2 * eps), 1.0 - dt_ / (2 * eps))
        return arg.compose(CutoffProfiles.eta, CutoffProfiles.eta_d1,
                           CutoffProfiles.eta_d2)

    def _eta1_jet(self, frame, x):
        """Core blend eta_1((x - O)/eps^rho) as a jet (radial profile)."""
        scale = self.params.eps**self.params.rho
        r = frame.radius_jet(x)
        arg = r.affine(1.0 / scale, 0.0)
        # radial profile: lap f(r) = f'' + f'/r; the compose() path handles
        # it because |grad r| = 1 and lap r = 1/r are already in the jet
        return arg.compose(CutoffProfiles.eta, CutoffProfiles.eta_d1,
                           CutoffProfiles.eta_d2)

    def _core_jet(self, frame, x):
        """Junction core u_*(R_cw(theta_t)(x - O)/eps) as a jet."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        eps = self.params.eps
        th = frame.gauge_angle
        c, s = np.cos(th), np.sin(th)
        Rcw = np.array([[c, s], [-s, c]])
        dRcw = np.array([[-s, c], [-c, -s]])
        rel = x - frame.junction
        y = rel @ Rcw.T / eps
        U, Ux, Uy, Ulap = self.ustar.jet(y)
        # gradients back in x coordinates: grad_x = Rcw^T grad_y / eps
        gx = (Rcw[0, 0] * Ux + Rcw[1, 0] * Uy) / eps
        gy = (Rcw[0, 1] * Ux + Rcw[1, 1] * Uy) / eps
        lap = Ulap / eps**2
        ydot = (rel @ dRcw.T) * frame.gauge_velocity - frame.junction_velocity @ Rcw.T
        ydot = ydot / eps
        dt = Ux * ydot[:, 0:1] + Uy * ydot[:, 1:2]
        return VJet(U, dt, gx, gy, lap)

    # -- public fields -------------------------------------------------------

    def phi(self, x, t):
        """Boundary-condition field (defined on the tubular cover)."""
        frame = self.frame_at(t)
        jet, _ = self._phi_jet(frame, x)
        return jet.val

    def phi_eta(self, x, t):
        """phi cut off to vanish inside the junction ball."""
        frame = self.frame_at(t)
        return self._phi_eta_jet(frame, x).val

    def phi_eta_jet(self, x, t) -> VJet:
        """Full jet of the cut-off boundary field (used by the Duhamel map)."""
        return self._phi_eta_jet(self.frame_at(t), x)

    def _phi_eta_jet(self, frame, x):
        eta2 = self._eta2_jet(frame, x)
        # inside the plateau eta2 == 1 the factor (1 - eta2) kills phi; skip
        # evaluating phi there so the junction region never queries the cover
        x = np.atleast_2d(np.asarray(x, dtype=float))
        need = eta2.val < 1.0
        out = VJet.zero(len(x))
        if need.any():
            sub = x[need]
            phi, _ = self._phi_jet(frame, sub, allow_uncovered=False)
            one_minus = SJet(
                1.0 - eta2.val[need], -eta2.dt[need], -eta2.gx[need],
                -eta2.gy[need], -eta2.lap[need],
            )
            res = phi.weighted(one_minus)
            for tgt, src in ((out.val, res.val), (out.dt, res.dt), (out.gx, res.gx),
                             (out.gy, res.gy), (out.lap, res.lap)):
                tgt[need] = src
        return out

    def tilde_phi(self, x, t):
        """Angular glue field (junction ball, away from O)."""
        frame = self.frame_at(t)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x - frame.junction, axis=1)
        if (r < 1e-12).any():
            raise ValueError("angle undefined at the junction point")
        return self._tilde_phi_jet(frame, x).val

    def value(self, x, t):
        """The assembled field v(x, t)."""
        return self.jet(x, t).val

    def psi(self, x):
        """Initial data: the assembled field at t = 0."""
        return self.value(x, 0.0)

    def jet(self, x, t) -> VJet:
        """Full jet (value, d/dt, gradient, laplacian) of the assembled field."""
        frame = self.frame_at(t)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        m = len(x)
        out = self._phi_eta_jet(frame, x)
        eta2 = self._eta2_jet(frame, x)
        inner = eta2.val > 0.0
        if inner.any():
            sub = x[inner]
            eta1 = self._eta1_jet(frame, sub)
            inner_jet = VJet.zero(len(sub))
            need_tilde = eta1.val < 1.0
            if need_tilde.any():
                tsub = sub[need_tilde]
                tilde = self._tilde_phi_jet(frame, tsub)
                one_minus = SJet(
                    1.0 - eta1.val[need_tilde], -eta1.dt[need_tilde],
                    -eta1.gx[need_tilde], -eta1.gy[need_tilde],
                    -eta1.lap[need_tilde],
                )
                contrib = tilde.weighted(one_minus)
                for tgt, src in ((inner_jet.val, contrib.val), (inner_jet.dt, contrib.dt),
                                 (inner_jet.gx, contrib.gx), (inner_jet.gy, contrib.gy),
                                 (inner_jet.lap, contrib.lap)):
                    tgt[need_tilde] += src
            need_core = eta1.val > 0.0
            if need_core.any():
                csub = sub[need_core]
                core = self._core_jet(frame, csub)
                eta1_sub = SJet(eta1.val[need_core], eta1.dt[need_core],
                                eta1.gx[need_core], eta1.gy[need_core],
                                eta1.lap[need_core])
                contrib = core.weighted(eta1_sub)
                for tgt, src in ((inner_jet.val, contrib.val), (inner_jet.dt, contrib.dt),
                                 (inner_jet.gx, contrib.gx), (inner_jet.gy, contrib.gy),
                                 (inner_jet.lap, contrib.lap)):
                    tgt[need_core] += src
            eta2_sub = SJet(eta2.val[inner], eta2.dt[inner], eta2.gx[inner],
                            eta2.gy[inner], eta2.lap[inner])
            blended = inner_jet.weighted(eta2_sub)
            for tgt, src in ((out.val, blended.val), (out.dt, blended.dt),
                             (out.gx, blended.gx), (out.gy, blended.gy),
                             (out.lap, blended.lap)):
                tgt[inner] += src
        return out

    def residual(self, x, t):
        """| d_t v - lap v + grad W(v) / eps^2 |, via the exact jet."""
        jet = self.jet(x, t)
        res = jet.dt - jet.lap + self.potential.gradient(jet.val) / self.params.eps**2
        return np.linalg.norm(res, axis=-1)
