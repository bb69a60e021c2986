"""Session-scoped fixtures: the symmetric potential and its derived objects
are expensive (profiles, junction relaxation), so they are built once."""

import numpy as np
import pytest

from triodlab.ansatz import AnsatzField, AnsatzParams
from triodlab.geometry import admissibility_radii
from triodlab.heteroclinic import solve_heteroclinic
from triodlab.potential import gamma_distance, junction_angles, make_standard_symmetric
from triodlab.stationary import compute_stationary_triple
from triodlab.triod import make_straight_triod


@pytest.fixture(scope="session")
def potential():
    return make_standard_symmetric()


@pytest.fixture(scope="session")
def profiles(potential):
    return [
        solve_heteroclinic(potential, i, (i + 1) % 3, L=10.0, nodes=2001, tol=1e-9)
        for i in range(3)
    ]


@pytest.fixture(scope="session")
def gamma(potential):
    return gamma_distance(potential, 0, 1, path_nodes=128)


@pytest.fixture(scope="session")
def angles(gamma):
    return junction_angles(gamma, gamma, gamma)


@pytest.fixture(scope="session")
def ustar(potential, profiles, angles):
    return compute_stationary_triple(
        potential, profiles, angles.thetas, radius=12.0, resolution=257, tol=1e-3
    )


@pytest.fixture(scope="session")
def straight_triod():
    return make_straight_triod(nodes=257)


@pytest.fixture(scope="session")
def straight_radii(straight_triod):
    return admissibility_radii(straight_triod, boundary_clearance=1.0)


@pytest.fixture(scope="session")
def static_field(potential, profiles, ustar, straight_triod, straight_radii, angles):
    params = AnsatzParams(
        eps=0.06,
        delta_tilde=straight_radii.delta_tilde,
        delta_int=straight_radii.delta_int,
        delta=straight_radii.delta,
    )
    return AnsatzField.for_static(
        potential, profiles, ustar, straight_triod, params, thetas=angles.thetas
    )
