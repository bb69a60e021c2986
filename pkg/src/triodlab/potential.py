"""Three-well potentials, the degenerate geodesic weight between wells, and
the junction angle condition.

A potential is admissible when it vanishes exactly at three nondegenerate
minima, grows polynomially at infinity, and is locally isotropic-quadratic
(``r^2 + O(r^3)``) around each well.  The canonical instance used throughout
the package is the normalized triple product

    W(u) = (1/9) * |u - c1|^2 |u - c2|^2 |u - c3|^2

with the wells at the cube roots of unity on the unit circle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra


class AngleConditionError(ValueError):
    """Raised when the junction angle condition has no admissible root."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative minimizer exhausts its budget.

    Carries the best value found so far in ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class GrowthWitness:
    """Constants (K1, K2, m, p) witnessing K1|u|^p <= W(u) <= K2|u|^p for |u| >= m."""

    K1: float
    K2: float
    m: float
    p: float


@dataclass
class ThreeWellPotential:
    """A planar potential with exactly three nondegenerate zeros.

    Parameters
    ----------
    wells : (3, 2) array
        The minima c1, c2, c3.
    eval : callable
        Vectorized map ``u -> W(u) >= 0``; accepts arrays of shape (..., 2).
    gradient, hessian : callable, optional
        Vectorized derivatives.  When omitted they default to centered
        finite differences of ``eval`` (step 1e-6), which is accurate enough
        for plotting but too slow for solver inner loops.
    growth : GrowthWitness
        Witness constants for the polynomial growth condition.
    name : str
        Identifier used in experiment configs ("symmetric-standard" for the
        canonical instance).
    """

    wells: np.ndarray
    eval: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    growth: GrowthWitness = field(default_factory=lambda: GrowthWitness(0.0, np.inf, 1.0, 2.0))
    name: str = "custom"

    def __post_init__(self):
        self.wells = np.asarray(self.wells, dtype=float)
        if self.wells.shape != (3, 2):
            raise ValueError("wells must have shape (3, 2)")
        if self.gradient is None:
            self.gradient = _fd_gradient(self.eval)
        if self.hessian is None:
            self.hessian = _fd_hessian(self.gradient)

    def __call__(self, u):
        return self.eval(np.asarray(u, dtype=float))

    def hessian_spectral_bound(self, radius: float = 2.0, samples: int = 4096) -> float:
        """Max eigenvalue magnitude of Hess W over the disk of given radius."""
        rng = np.random.default_rng(0)
        pts = rng.uniform(-radius, radius, size=(samples, 2))
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= radius]
        H = self.hessian(pts)
        eigs = np.linalg.eigvalsh(H)
        return float(np.abs(eigs).max())

    def linearized_decay_rate(self, i: int) -> float:
        """sqrt of the smallest Hessian eigenvalue at well i.

        This is the exponential rate (per unit of the profile variable) at
        which connecting orbits approach the well.
        """
        H = self.hessian(self.wells[i])
        mu = np.linalg.eigvalsh(np.asarray(H, dtype=float).reshape(2, 2))[0]
        if mu <= 0:
            raise ValueError("well is degenerate: smallest Hessian eigenvalue <= 0")
        return float(np.sqrt(mu))

    def convexity_radius(self, r_max: float = 8.0, n_r: int = 160, n_theta: int = 96) -> float:
        """Fitted radius K beyond which Hess W is positive definite on all samples.

        Diagnostic for the convexity-outside-a-compact condition; not stored
        as a field because the paper states it only as an existence claim.
        """
        radii = np.linspace(r_max / n_r, r_max, n_r)
        theta = np.linspace(0, 2 * np.pi, n_theta, endpoint=False)
        good = np.zeros(n_r, dtype=bool)
        for k, r in enumerate(radii):
            pts = r * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
            eigs = np.linalg.eigvalsh(self.hessian(pts))
            good[k] = bool((eigs[..., 0] > 0).all())
        # largest radius such that every sampled radius beyond it is convex
        bad = np.nonzero(~good)[0]
        if len(bad) == 0:
            return float(radii[0])
        if bad[-1] == n_r - 1:
            raise ValueError("no convexity radius found below r_max")
        return float(radii[bad[-1] + 1])


def _fd_gradient(f, h=1e-6):
    def grad(u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            out[..., k] = (f(u + e) - f(u - e)) / (2 * h)
        return out

    return grad


def _fd_hessian(grad, h=1e-5):
    def hess(u):
        u = np.asarray(u, dtype=float)
        out = np.empty(u.shape[:-1] + (2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            out[..., k, :] = (grad(u + e) - grad(u - e)) / (2 * h)
        # symmetrize
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    return hess


def make_standard_symmetric() -> ThreeWellPotential:
    """The normalized triple-product potential with wells at the cube roots of unity.

    W(u) = (1/9) prod_i |u - c_i|^2.  Satisfies all admissibility conditions
    with p = 6; the 1/9 normalization makes Hess W = 2*Id at each well, so
    the local expansion around a well is r^2 + O(r^3) in every direction.
    """
    wells = np.array(
        [
            [1.0, 0.0],
            [-0.5, np.sqrt(3.0) / 2.0],
            [-0.5, -np.sqrt(3.0) / 2.0],
        ]
    )
    return make_product_potential(wells, name="symmetric-standard")


def make_product_potential(wells, name="product") -> ThreeWellPotential:
    """Triple-product potential (1/Z) prod_i |u - c_i|^2 for arbitrary wells.

    The normalization Z is chosen so that Hess W at well 0 has its smaller
    eigenvalue equal to 2, matching the canonical local behaviour.
    """
    wells = np.asarray(wells, dtype=float).reshape(3, 2)

    def factors(u):
        diff = u[..., None, :] - wells  # (..., 3, 2)
        return diff, (diff**2).sum(-1)  # (..., 3)

    # At well 0 the Hessian is 2*Id * (d01*d02)/Z with d0j = |c0-cj|^2.
    d01 = ((wells[0] - wells[1]) ** 2).sum()
    d02 = ((wells[0] - wells[2]) ** 2).sum()
    Z = d01 * d02

    def eval_(u):
        _, d2 = factors(u)
        return d2.prod(-1) / Z

    def gradient(u):
        diff, d2 = factors(u)
        out = np.zeros_like(u)
        for i in range(3):
            pr = np.ones(d2.shape[:-1])
            for j in range(3):
                if j != i:
                    pr = pr * d2[..., j]
            out = out + 2.0 * diff[..., i, :] * pr[..., None]
        return out / Z

    def hessian(u):
        diff, d2 = factors(u)
        eye = np.eye(2)
        out = np.zeros(u.shape[:-1] + (2, 2))
        for i in range(3):
            pr = np.ones(d2.shape[:-1])
            for j in range(3):
                if j != i:
                    pr = pr * d2[..., j]
            out = out + 2.0 * pr[..., None, None] * eye
        for i in range(3):
            for j in range(3):
                if j == i:
                    continue
                pr = np.ones(d2.shape[:-1])
                for k in range(3):
                    if k != i and k != j:
                        pr = pr * d2[..., k]
                gi = 2.0 * diff[..., i, :]
                gj = 2.0 * diff[..., j, :]
                out = out + pr[..., None, None] * gi[..., :, None] * gj[..., None, :]
        return out / Z

    # Growth witness: |u - c_i|^2 is within ((|u|-R)^2, (|u|+R)^2) for
    # |u| >= m > R = max |c_i|; m = 10R makes the bounds explicit.
    R = float(np.hypot(wells[:, 0], wells[:, 1]).max())
    m = 10.0 * max(R, 1.0)
    K1 = ((1 - R / m) ** 6) / Z
    K2 = ((1 + R / m) ** 6) / Z
    growth = GrowthWitness(K1=K1, K2=K2, m=m, p=6.0)
    return ThreeWellPotential(
        wells=wells, eval=eval_, gradient=gradient, hessian=hessian, growth=growth, name=name
    )


_REGISTRY = {"symmetric-standard": make_standard_symmetric}


def potential_by_name(name: str, wells=None) -> ThreeWellPotential:
    """Look up a potential for experiment configs.

    ``name`` may be a registered identifier, or "product" together with
    explicit well coordinates.
    """
    if name in _REGISTRY:
        return _REGISTRY[name]()
    if name == "product":
        if wells is None:
            raise ValueError("potential 'product' requires well coordinates")
        return make_product_potential(wells)
    raise KeyError(f"unknown potential {name!r}")


# ---------------------------------------------------------------------------
# degenerate geodesic weight between wells


def _weighted_length(potential, path, floor=0.0):
    mid = 0.5 * (path[:-1] + path[1:])
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    w = np.sqrt(np.maximum(potential(mid), floor))
    return float((w * seg).sum())


def _weighted_length_grad(potential, path):
    """Gradient of the midpoint-rule weighted length w.r.t. interior nodes."""
    mid = 0.5 * (path[:-1] + path[1:])
    d = np.diff(path, axis=0)
    seg = np.linalg.norm(d, axis=1)
    seg_safe = np.maximum(seg, 1e-300)
    w = np.sqrt(np.maximum(potential(mid), 1e-300))
    gw = potential.gradient(mid) / (2.0 * w[:, None])  # grad of sqrt(W) at midpoints
    g = np.zeros_like(path)
    # d/dx_k of w_k * |x_{k+1}-x_k|  and of w_{k-1} * |x_k - x_{k-1}|
    unit = d / seg_safe[:, None]
    g[:-1] += 0.5 * gw * seg[:, None] - w[:, None] * unit
    g[1:] += 0.5 * gw * seg[:, None] + w[:, None] * unit
    return g[1:-1]


def _resample_polyline(path, n):
    """Resample a polyline to n nodes at uniform arclength (endpoints kept)."""
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total == 0.0:
        return np.repeat(path[:1], n, axis=0)
    target = np.linspace(0.0, total, n)
    x = np.interp(target, s, path[:, 0])
    y = np.interp(target, s, path[:, 1])
    out = np.stack([x, y], axis=-1)
    out[0], out[-1] = path[0], path[-1]
    return out


def gamma_distance(
    potential: ThreeWellPotential,
    i: int,
    j: int,
    path_nodes: int = 128,
    tol: float = 1e-9,
    max_iter: int = 20000,
    return_path: bool = False,
):
    """Degenerate geodesic weight between wells i and j.

    Minimizes the discretized weighted length  sum_k sqrt(W(mid_k)) |seg_k|
    over interior node positions, starting from the straight segment.
    Descent uses Barzilai-Borwein step lengths with a backtracking line
    search safeguard; because the objective is parametrization invariant,
    nodes are re-distributed to near-uniform arclength every 50 iterations
    to control tangential drift.  Convergence is declared when a full
    50-iteration block improves the value by less than ``tol`` (relative).

    Returns the minimized value (and the path when ``return_path``);
    i == j returns 0 (empty path).

    Raises
    ------
    ConvergenceError
        When the budget is exhausted before the stagnation criterion is
        met.  The exception carries the best value found.
    """
    if i == j:
        return (0.0, potential.wells[[i, i]]) if return_path else 0.0
    if path_nodes < 16:
        raise ValueError("path_nodes must be >= 16")
    a, b = potential.wells[i], potential.wells[j]
    path = np.outer(np.linspace(0.0, 1.0, path_nodes), b - a) + a

    val = _weighted_length(potential, path)
    g = _weighted_length_grad(potential, path)
    step = 0.05 / max(np.linalg.norm(g), 1e-12)
    prev_block = np.inf
    it = 0
    while it < max_iter:
        for _ in range(50):
            it += 1
            gn2 = float((g * g).sum())
            s = step
            trial, tval = path, val
            while s > 1e-16:
                trial = path.copy()
                trial[1:-1] = path[1:-1] - s * g
                tval = _weighted_length(potential, trial)
                if tval <= val - 1e-4 * s * gn2:
                    break
                s *= 0.5
            gt = _weighted_length_grad(potential, trial)
            dx = (trial[1:-1] - path[1:-1]).ravel()
            dg = (gt - g).ravel()
            path, val, g = trial, tval, gt
            denom = float(dx @ dg)
            step = float(dx @ dx) / denom if denom > 0 else s * 1.5
        path = _resample_polyline(path, path_nodes)
        val = _weighted_length(potential, path)
        g = _weighted_length_grad(potential, path)
        if prev_block - val < tol * max(val, 1.0):
            return (val, path) if return_path else val
        prev_block = val
    raise ConvergenceError("gamma_distance: iteration budget exhausted", best=val)


def gamma_distance_graph(
    potential: ThreeWellPotential,
    i: int,
    j: int,
    n: int = 181,
    margin: float = 0.4,
) -> float:
    """Brute-force estimate of the geodesic weight by Dijkstra on a dense grid.

    Independent of the descent minimizer: builds a 16-neighbor grid graph
    over the bounding box of the wells (plus margin) with edge weight
    sqrt(W(midpoint)) * edge length and returns the shortest path weight.
    Metric anisotropy of the 16-neighborhood overestimates lengths by at
    most ~0.3%.
    """
    wells = potential.wells
    lo = wells.min(axis=0) - margin
    hi = wells.max(axis=0) + margin
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.stack([X.ravel(), Y.ravel()], axis=-1)
    idx = np.arange(n * n).reshape(n, n)
    offsets = [
        (1, 0), (0, 1), (1, 1), (1, -1),
        (2, 1), (1, 2), (2, -1), (1, -2),
        (3, 1), (1, 3), (3, -1), (1, -3),
        (3, 2), (2, 3), (3, -2), (2, -3),
    ]
    rows, cols, vals = [], [], []
    for di, dj in offsets:
        ai0, ai1 = max(0, -di), n - max(0, di)
        aj0, aj1 = max(0, -dj), n - max(0, dj)
        a = idx[ai0:ai1, aj0:aj1].ravel()
        b = idx[ai0 + di : ai1 + di, aj0 + dj : aj1 + dj].ravel()
        mid = 0.5 * (P[a] + P[b])
        length = np.hypot(di * hx, dj * hy)
        rows.append(a)
        cols.append(b)
        vals.append(np.sqrt(potential(mid)) * length)
    G = coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n * n, n * n),
    )
    src = int(np.argmin(((P - wells[i]) ** 2).sum(1)))
    dst = int(np.argmin(((P - wells[j]) ** 2).sum(1)))
    dist = dijkstra(G, directed=False, indices=[src])
    return float(dist[0, dst])


# ---------------------------------------------------------------------------
# junction angle condition


@dataclass(frozen=True)
class AngleTriple:
    """Opening angles alpha_i between consecutive junction tangents and the
    resulting tangent directions theta_i (theta_1 gauged to 0)."""

    alphas: np.ndarray  # (3,)
    thetas: np.ndarray  # (3,)

    def __post_init__(self):
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=float))
        object.__setattr__(self, "thetas", np.asarray(self.thetas, dtype=float))
        if not np.all(self.alphas > 0):
            raise ValueError("opening angles must be positive")
        if abs(self.alphas.sum() - 2 * np.pi) > 1e-9:
            raise ValueError("opening angles must sum to 2*pi")


def _thetas_from_alphas(alphas):
    # theta_{i+1} - theta_i = alpha_{i+1}, gauge theta_1 = 0
    thetas = np.zeros(3)
    thetas[1] = thetas[0] + alphas[1]
    thetas[2] = thetas[1] + alphas[2]
    return thetas


def junction_angles_closed_form(g23: float, g13: float, g12: float) -> AngleTriple:
    """Angle condition solved in closed form.

    The complements beta_i = pi - alpha_i form a Euclidean triangle with
    side lengths proportional to the opposite weights, so the law of
    cosines applies directly.  Used as the independent cross-check for the
    bisection solver.
    """
    g = np.array([g23, g13, g12], dtype=float)
    if np.any(g <= 0):
        raise AngleConditionError("weights must be positive")
    if not (g[0] < g[1] + g[2] and g[1] < g[0] + g[2] and g[2] < g[0] + g[1]):
        raise AngleConditionError("angle condition unsolvable for given Gamma")
    cosb = np.array(
        [
            (g[1] ** 2 + g[2] ** 2 - g[0] ** 2) / (2 * g[1] * g[2]),
            (g[0] ** 2 + g[2] ** 2 - g[1] ** 2) / (2 * g[0] * g[2]),
            (g[0] ** 2 + g[1] ** 2 - g[2] ** 2) / (2 * g[0] * g[1]),
        ]
    )
    beta = np.arccos(np.clip(cosb, -1.0, 1.0))
    alphas = np.pi - beta
    return AngleTriple(alphas=alphas, thetas=_thetas_from_alphas(alphas))


def junction_angles(g23: float, g13: float, g12: float, tol: float = 1e-14) -> AngleTriple:
    """Solve sin(a1)/G23 = sin(a2)/G13 = sin(a3)/G12 with a1+a2+a3 = 2*pi.

    Parametrized by the common ratio rho = sin(alpha_i)/Gamma_opposite and
    solved by bisection on rho for each arcsin branch assignment
    (alpha_i in (0, pi/2] versus [pi/2, pi)).  Exactly one assignment admits
    a root when the weights satisfy the strict triangle inequality.

    Raises
    ------
    AngleConditionError
        When no admissible root exists (degenerate weights).
    """
    g = np.array([g23, g13, g12], dtype=float)
    if np.any(g <= 0):
        raise AngleConditionError("weights must be positive")
    rho_max = 1.0 / g.max()

    def alphas_for(rho, branches):
        s = np.clip(rho * g, 0.0, 1.0)
        a = np.arcsin(s)
        return np.where(branches, np.pi - a, a)

    solutions = []
    # At most one alpha can lie in (0, pi/2] when the three sum to 2*pi.
    for flat in range(4):  # which alpha (if any) takes the principal branch
        branches = np.array([True, True, True])
        if flat < 3:
            branches[flat] = False

        def total(rho, branches=branches):
            return alphas_for(rho, branches).sum() - 2 * np.pi

        # rho -> 0 is a degenerate root of every mixed-branch assignment
        # (angles (0, pi, pi)); demand a strict sign change away from it.
        lo, hi = 1e-12 * rho_max, rho_max
        flo, fhi = total(lo), total(hi)
        if fhi == 0.0:
            lo = hi
            flo = fhi
        elif flo * fhi >= 0:
            continue
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fmid = total(mid)
            if flo * fmid <= 0:
                hi, fhi = mid, fmid
            else:
                lo, flo = mid, fmid
            if hi - lo < tol * rho_max:
                break
        rho = 0.5 * (lo + hi)
        alphas = alphas_for(rho, branches)
        if np.any(alphas <= 0) or np.any(alphas >= np.pi):
            continue
        # residual of the ratio condition
        resid = np.abs(np.sin(alphas) / g - rho).max()
        if resid < 1e-8 and abs(alphas.sum() - 2 * np.pi) < 1e-8:
            solutions.append(alphas)

    if not solutions:
        raise AngleConditionError("angle condition unsolvable for given Gamma")
    # deduplicate branch assignments converging to the same root
    alphas = solutions[0]
    for other in solutions[1:]:
        if np.abs(other - alphas).max() > 1e-6:
            raise AngleConditionError("angle condition admits multiple roots")
    return AngleTriple(alphas=alphas, thetas=_thetas_from_alphas(alphas))
