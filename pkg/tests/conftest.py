"""Shared fixture meshes: analytic shapes with known properties."""

import pytest

from cageforge.shapes import (  # noqa: F401 (re-exported for test modules)
    box_mesh,
    cube,
    grid_square,
    icosphere,
    loop_subdivide,
    octasphere,
    tetrahedron,
    torus,
)


@pytest.fixture
def tetra():
    return tetrahedron()


@pytest.fixture
def unit_cube():
    return cube()


@pytest.fixture
def sphere():
    return icosphere(3)
