import numpy as np
import pytest

from neumannlab.coeff import Identity, ScalarCheckerboard, make_coefficient
from neumannlab.mesh import build_box_mesh, build_staircase_mesh, build_truncated_graph_mesh
from neumannlab.solve import SolveConfig


@pytest.fixture(scope="session")
def unit_cube_8():
    return build_box_mesh((1, 1, 1), 8)


@pytest.fixture(scope="session")
def unit_cube_12():
    return build_box_mesh((1, 1, 1), 12)


@pytest.fixture(scope="session")
def l_shape():
    # unit cube minus the quarter column (0.5,1) x (0.5,1) x (0,1)
    return build_staircase_mesh(
        [((0, 0, 0), (0.5, 1, 1)), ((0.5, 0, 0), (1, 0.5, 1))], 0.25
    )


@pytest.fixture(scope="session")
def flat_graph_12():
    return build_truncated_graph_mesh(
        lambda x, y: np.zeros_like(x), 0.0, ((0, 0, 0), (1, 1, 1)), 1.0 / 12
    )


@pytest.fixture(scope="session")
def identity_field():
    return make_coefficient(Identity())


@pytest.fixture(scope="session")
def checkerboard_field():
    return make_coefficient(ScalarCheckerboard(10.0))


@pytest.fixture(scope="session")
def solve_config():
    return SolveConfig()
