import numpy as np
import pytest

from triodlab.ansatz import AnsatzField, AnsatzParams
from triodlab.solver import (
    Grid2D,
    SolveConfig,
    SolverInstabilityError,
    VectorField2D,
    duhamel_iterate,
    energy,
    field_from_callable,
    hausdorff_distance,
    interface_extract,
    invariant_radius,
    solve,
    sup_distance,
)


@pytest.fixture(scope="module")
def ansatz_eps01(potential, profiles, ustar, straight_triod, straight_radii, angles):
    params = AnsatzParams(
        eps=0.1, delta_tilde=straight_radii.delta_tilde,
        delta_int=straight_radii.delta_int, delta=straight_radii.delta,
    )
    return AnsatzField.for_static(
        potential, profiles, ustar, straight_triod, params, thetas=angles.thetas
    )


class TestSolve:
    def test_constant_well_equilibrium(self, potential):
        c = potential.wells[1]
        cfg = SolveConfig(domain="disk", resolution=96, eps=0.08, T=0.004,
                          snapshot_times=[0.002, 0.004])
        traj = solve(
            cfg, potential,
            boundary=lambda x, t: np.broadcast_to(c, (len(x), 2)),
            initial=lambda x: np.broadcast_to(c, (len(x), 2)),
        )
        nsteps = round(cfg.T / cfg.stable_dt(potential))
        drift = max(np.abs(s.values[s.grid.inside] - c).max() for s in traj)
        assert drift <= 1e-12 * max(nsteps, 1)

    def test_boundary_trace_exact(self, potential):
        c = potential.wells[0]

        def bc(x, t):
            out = np.broadcast_to(c, (len(x), 2)).copy()
            out[:, 0] += 0.01 * np.sin(3 * np.arctan2(x[:, 1], x[:, 0])) * (1 + t)
            return out

        cfg = SolveConfig(domain="disk", resolution=64, eps=0.1, T=0.002,
                          snapshot_times=[0.002])
        traj = solve(cfg, potential, boundary=bc, initial=lambda x: bc(x, 0.0),
                     check_max_bound=False)
        s = traj[-1]
        ring = s.grid.boundary_ring
        pts = np.stack([s.grid.X[ring], s.grid.Y[ring]], -1)
        assert np.abs(s.values[ring] - bc(pts, s.time)).max() == 0.0

    def test_stripe_near_stationary(self, potential, profiles):
        zeta = profiles[0]
        eps = 0.08

        def stripe(x, t=0.0):
            return zeta(x[:, 0] / eps)

        cfg = SolveConfig(domain="disk", resolution=128, eps=eps, T=0.1,
                          snapshot_times=[0.1])
        traj = solve(cfg, potential, boundary=lambda x, t: stripe(x), initial=stripe)
        g = traj[0].grid
        row = int(np.argmin(np.abs(g.ys)))
        center = zeta(0.0)
        for s in (traj[0], traj[-1]):
            prof = s.values[:, row, :]
            i = int(np.argmin(np.linalg.norm(prof - center, axis=1)))
            assert abs(g.xs[i]) <= g.h

    def test_energy_dissipation(self, potential, ansatz_eps01):
        cfg = SolveConfig(domain="disk", resolution=128, eps=0.1, T=0.004,
                          snapshot_times=np.linspace(0.0005, 0.004, 8))
        traj = solve(cfg, potential, boundary=lambda x, t: ansatz_eps01.value(x, t),
                     initial=ansatz_eps01.psi)
        E = [energy(s, potential, cfg.eps) for s in traj]
        for a, b in zip(E[:-1], E[1:]):
            assert b <= a + 1e-8 * max(abs(a), 1.0)

    def test_max_bound_invariant(self, potential, ansatz_eps01):
        cfg = SolveConfig(domain="disk", resolution=96, eps=0.1, T=0.002,
                          snapshot_times=[0.001, 0.002])
        traj = solve(cfg, potential, boundary=lambda x, t: ansatz_eps01.value(x, t),
                     initial=ansatz_eps01.psi, check_max_bound=True)
        r_w = invariant_radius(potential)
        sup0 = np.linalg.norm(traj[0].values[traj[0].grid.inside], axis=-1).max()
        for s in traj:
            sup = np.linalg.norm(s.values[s.grid.inside], axis=-1).max()
            assert sup <= max(sup0, r_w) + 1e-6

    def test_explicit_matches_semi_implicit_first_order(self, potential):
        c0, c1 = potential.wells[0], potential.wells[1]

        def smooth(x, t=0.0):
            w = 0.5 * (1 + np.tanh(x[:, 0] / 0.3))
            return np.outer(1 - w, c0) + np.outer(w, c1)

        diffs = []
        for dt_fac in (0.25, 0.125):
            base = SolveConfig(domain="disk", resolution=64, eps=0.3, T=0.004,
                               snapshot_times=[0.004])
            dt = base.stable_dt(potential) * dt_fac
            runs = []
            for scheme in ("explicit", "semi-implicit"):
                cfg = SolveConfig(domain="disk", resolution=64, eps=0.3, T=0.004,
                                  dt=dt, scheme=scheme, snapshot_times=[0.004])
                runs.append(solve(cfg, potential,
                                  boundary=lambda x, t: smooth(x),
                                  initial=smooth, check_max_bound=False))
            diffs.append(sup_distance(runs[0], runs[1]))
        assert diffs[1] <= 0.6 * diffs[0]

    def test_instability_detected(self, potential):
        cfg = SolveConfig(domain="disk", resolution=48, eps=0.05, T=0.01,
                          dt=0.01, scheme="explicit", snapshot_times=[0.01])
        far = np.array([3.0, 3.0])
        with pytest.raises(SolverInstabilityError):
            solve(cfg, potential,
                  boundary=lambda x, t: np.broadcast_to(far, (len(x), 2)),
                  initial=lambda x: np.broadcast_to(far, (len(x), 2)),
                  check_max_bound=False)


class TestDuhamel:
    def test_zero_forcing_zero_gap(self, potential, profiles, ustar, straight_triod,
                                   straight_radii, angles, ansatz_eps01):
        # with the initial gap removed and a constant-well field the map
        # returns h = 0 after one sweep
        class ConstField:
            params = ansatz_eps01.params

            def phi_eta_jet(self, x, t):
                from triodlab.ansatz import VJet
                jet = VJet.constant(potential.wells[0], len(x))
                return jet

            def value(self, x, t):
                return np.broadcast_to(potential.wells[0], (len(x), 2))

            def psi(self, x):
                return self.value(x, 0.0)

        cfg = SolveConfig(domain="disk", resolution=48, eps=0.1, T=0.005,
                          snapshot_times=[0.005])
        traj, hist = duhamel_iterate(cfg, potential, ConstField(), sweeps=2,
                                     n_times=9)
        assert hist[-1] <= 1e-14
        for s in traj:
            assert np.abs(s.values[s.grid.inside] - potential.wells[0]).max() <= 1e-12

    def test_contraction_sweeps(self, potential, ansatz_eps01):
        cfg = SolveConfig(domain="disk", resolution=64, eps=0.1, T=0.01,
                          snapshot_times=[0.01])
        _, hist = duhamel_iterate(cfg, potential, ansatz_eps01, sweeps=6, n_times=17)
        ratios = [b / a for a, b in zip(hist[:-2], hist[1:-1]) if a > 0]
        assert max(ratios) < 0.7  # geometric decay of sweep differences

    def test_agreement_with_semi_implicit_under_refinement(self, potential,
                                                           ansatz_eps01):
        diffs = []
        for n, nt in ((32, 9), (48, 17), (64, 33)):
            cfg = SolveConfig(domain="disk", resolution=n, eps=0.1, T=0.01,
                              snapshot_times=[0.01])
            duh, _ = duhamel_iterate(cfg, potential, ansatz_eps01, sweeps=8,
                                     n_times=nt)
            sem = solve(cfg, potential,
                        boundary=lambda x, t: ansatz_eps01.value(x, t),
                        initial=ansatz_eps01.psi, check_max_bound=False)
            sel = duh[-1].grid.inside
            diffs.append(
                np.linalg.norm((duh[-1].values - sem[-1].values)[sel], axis=-1).max()
            )
        assert diffs[1] <= 0.8 * diffs[0]
        assert diffs[2] <= 0.8 * diffs[1]


class TestInterfaceExtract:
    def test_constant_field_empty(self, potential):
        grid = Grid2D("disk", 64)
        vals = np.broadcast_to(potential.wells[2], (64, 64, 2)).copy()
        f = VectorField2D(grid, vals)
        iface = interface_extract(f, potential, threshold=0.3)
        assert len(iface.points) == 0
        assert (iface.mask[grid.inside] == 2).all()

    def test_stripe_band(self, potential, profiles):
        eps = 0.05
        grid = Grid2D("disk", 256)

        def stripe(x, t=0.0):
            return profiles[0](x[:, 0] / eps)

        f = field_from_callable(grid, stripe)
        iface = interface_extract(f, potential, threshold=0.3)
        # interface band near the vertical midline, width O(eps log(1/eps))
        assert len(iface.points) > 0
        assert np.abs(iface.points[:, 0]).max() <= 4 * eps * np.log(1 / eps)
        # the classification crossings pin the midline to grid accuracy
        mid = iface.crossings[np.abs(iface.crossings[:, 1]) < 0.5]
        assert np.abs(mid[:, 0]).max() <= grid.h

    def test_triod_field_recovers_arms(self, potential, ansatz_eps01,
                                       straight_triod):
        eps = ansatz_eps01.params.eps
        grid = Grid2D("disk", 256)
        f = field_from_callable(grid, lambda x, t: ansatz_eps01.value(x, t))
        iface = interface_extract(f, potential, threshold=0.3)
        band = 2.5 * eps * np.log(1 / eps)
        pts = iface.crossings[np.linalg.norm(iface.crossings, axis=1) > band]
        worst = 0.0
        for p in pts:
            d = min(
                abs(straight_triod.polyline(i).signed_distance(p)) for i in range(3)
            )
            worst = max(worst, d)
        assert worst <= 2 * grid.h

    def test_threshold_validation(self, potential):
        grid = Grid2D("disk", 32)
        f = VectorField2D(grid, np.zeros((32, 32, 2)))
        with pytest.raises(ValueError):
            interface_extract(f, potential, threshold=2.0)


class TestSupDistance:
    def test_identical_zero(self, potential):
        grid = Grid2D("disk", 48)
        f = VectorField2D(grid, np.random.default_rng(0).normal(size=(48, 48, 2)))
        assert sup_distance([f], [f.copy()]) == 0.0

    def test_constant_fields(self, potential):
        grid = Grid2D("disk", 48)
        a = VectorField2D(grid, np.broadcast_to(potential.wells[0], (48, 48, 2)).copy())
        b = VectorField2D(grid, np.broadcast_to(potential.wells[1], (48, 48, 2)).copy())
        expect = np.linalg.norm(potential.wells[0] - potential.wells[1])
        assert sup_distance([a], [b]) == pytest.approx(expect, abs=1e-14)

    def test_shape_mismatch(self, potential):
        a = VectorField2D(Grid2D("disk", 48), np.zeros((48, 48, 2)))
        b = VectorField2D(Grid2D("disk", 64), np.zeros((64, 64, 2)))
        with pytest.raises(ValueError):
            sup_distance([a], [b])


def test_hausdorff_basic():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 0.1], [1.0, -0.2]])
    assert hausdorff_distance(a, b) == pytest.approx(0.2)
