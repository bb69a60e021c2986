import numpy as np
import pytest

from triodlab.potential import (
    AngleConditionError,
    gamma_distance,
    gamma_distance_graph,
    junction_angles,
    junction_angles_closed_form,
    make_standard_symmetric,
    make_product_potential,
    potential_by_name,
)


@pytest.fixture(scope="module")
def W():
    return make_standard_symmetric()


class TestAdmissibility:
    def test_wells_are_zeros(self, W):
        for c in W.wells:
            assert abs(W(c)) <= 1e-14
            assert np.linalg.norm(W.gradient(c)) <= 1e-12

    def test_hessian_at_wells_is_twice_identity(self, W):
        # symbolic value: Hess = 2*Id * |c_i-c_j|^2 |c_i-c_k|^2 / 9 = 2*Id
        for c in W.wells:
            H = W.hessian(c)
            assert np.abs(H - 2.0 * np.eye(2)).max() <= 1e-8

    def test_value_at_origin(self, W):
        # each |0 - c_i|^2 = 1, so W(0) = 1/9
        assert W(np.zeros(2)) == pytest.approx(1.0 / 9.0, abs=1e-14)

    def test_nonnegative(self, W):
        rng = np.random.default_rng(1)
        u = rng.uniform(-3, 3, size=(10_000, 2))
        assert (W(u) >= 0).all()

    def test_gradient_matches_finite_differences(self, W):
        rng = np.random.default_rng(2)
        u = rng.uniform(-2, 2, size=(1000, 2))
        h = 1e-5
        fd = np.empty_like(u)
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            fd[:, k] = (W(u + e) - W(u - e)) / (2 * h)
        assert np.abs(W.gradient(u) - fd).max() <= 1e-6

    def test_hessian_matches_gradient_differences(self, W):
        rng = np.random.default_rng(3)
        u = rng.uniform(-2, 2, size=(200, 2))
        h = 1e-5
        fd = np.empty((len(u), 2, 2))
        for k in range(2):
            e = np.zeros(2)
            e[k] = h
            fd[:, k, :] = (W.gradient(u + e) - W.gradient(u - e)) / (2 * h)
        assert np.abs(W.hessian(u) - fd).max() <= 1e-5

    def test_growth_witness(self, W):
        rng = np.random.default_rng(4)
        g = W.growth
        r = rng.uniform(g.m, 3 * g.m, size=2000)
        th = rng.uniform(0, 2 * np.pi, size=2000)
        u = r[:, None] * np.stack([np.cos(th), np.sin(th)], axis=-1)
        vals = W(u)
        assert (vals >= g.K1 * r**g.p).all()
        assert (vals <= g.K2 * r**g.p).all()

    def test_local_quadratic_fan(self, W):
        # W(c + r e_theta) = r^2 + O(r^3): the relative deviation shrinks
        # linearly in r with one fitted constant across both radii.
        theta = np.linspace(0, 2 * np.pi, 720, endpoint=False)
        e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        devs = {}
        for r in (1e-2, 1e-3):
            worst = 0.0
            for c in W.wells:
                vals = W(c + r * e)
                worst = max(worst, np.abs(vals / r**2 - 1.0).max())
            devs[r] = worst
        C = devs[1e-2] / 1e-2
        assert devs[1e-3] <= 1.5 * C * 1e-3
        assert C < 10.0

    def test_convexity_radius_diagnostic(self, W):
        K = W.convexity_radius()
        assert 0 < K < 8.0
        # spot check positive definiteness beyond the fitted radius
        theta = np.linspace(0, 2 * np.pi, 48, endpoint=False)
        for r in (K + 0.1, 2 * K, 5 * K):
            pts = r * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
            assert (np.linalg.eigvalsh(W.hessian(pts))[..., 0] > 0).all()


class TestGammaDistance:
    def test_degenerate_pair_is_zero(self, W):
        assert gamma_distance(W, 1, 1) == 0.0

    def test_symmetry_of_construction(self, W):
        vals = [gamma_distance(W, i, j, path_nodes=96) for i, j in [(0, 1), (1, 2), (0, 2)]]
        assert max(vals) - min(vals) <= 1e-6

    def test_against_graph_oracle(self, W):
        fine = gamma_distance(W, 0, 1, path_nodes=128)
        brute = gamma_distance_graph(W, 0, 1, n=181)
        assert abs(fine - brute) / brute <= 0.02

    def test_monotone_under_node_doubling(self, W):
        vals = [gamma_distance(W, 0, 1, path_nodes=n) for n in (32, 64, 128)]
        assert vals[1] <= vals[0] + 1e-10
        assert vals[2] <= vals[1] + 1e-10


class TestJunctionAngles:
    def test_equal_weights_give_equal_angles(self):
        t = junction_angles(1.0, 1.0, 1.0)
        assert np.abs(t.alphas - 2 * np.pi / 3).max() <= 1e-10

    def test_scale_invariance(self):
        a = junction_angles(1.0, 1.2, 1.4)
        b = junction_angles(5.0, 6.0, 7.0)
        assert np.abs(a.alphas - b.alphas).max() <= 1e-12

    def test_bisection_matches_closed_form(self):
        g = (1.0, 1.2, 1.4)
        a = junction_angles(*g)
        b = junction_angles_closed_form(*g)
        assert np.abs(a.alphas - b.alphas).max() <= 1e-9
        # residual of the ratio condition
        ratios = np.sin(a.alphas) / np.array(g)
        assert ratios.max() - ratios.min() <= 1e-10
        assert abs(a.alphas.sum() - 2 * np.pi) <= 1e-10

    def test_theta_reconstruction(self):
        t = junction_angles(1.0, 1.1, 0.9)
        assert t.thetas[0] == 0.0
        assert t.thetas[1] - t.thetas[0] == pytest.approx(t.alphas[1], abs=1e-12)
        assert t.thetas[2] - t.thetas[1] == pytest.approx(t.alphas[2], abs=1e-12)
        # closure around the circle
        assert (t.thetas[0] + 2 * np.pi) - t.thetas[2] == pytest.approx(t.alphas[0], abs=1e-10)

    def test_degenerate_weights_raise(self):
        with pytest.raises(AngleConditionError):
            junction_angles(1.0, 1.0, 2.5)
        with pytest.raises(AngleConditionError):
            junction_angles(1.0, -1.0, 1.0)


def test_registry_lookup():
    W = potential_by_name("symmetric-standard")
    assert W.name == "symmetric-standard"
    wells = [[0.0, 0.0], [1.0, 0.0], [0.2, 1.1]]
    W2 = potential_by_name("product", wells=wells)
    for c in W2.wells:
        assert abs(W2(c)) <= 1e-14
    with pytest.raises(KeyError):
        potential_by_name("no-such-potential")
