"""Shared profiles, domains and solved fields; meshes are kept coarse."""
import pytest

from core.elliptic_solver import make_source, solve_serrin, solve_warped_torsion
from core.meridian_domain import BoundarySpec, build_domain
from core.warp_profiles import make_profile


@pytest.fixture(scope="session")
def schwarzschild():
    return make_profile("schwarzschild", {"n": 2, "kappa": 0.0, "m": 0.5})


@pytest.fixture(scope="session")
def hyperbolic():
    return make_profile("spaceform-hyperbolic", {"n": 2})


@pytest.fixture(scope="session")
def euclidean():
    return make_profile("euclidean", {"n": 2})


@pytest.fixture(scope="session")
def sphere():
    return make_profile("spaceform-sphere", {"n": 2})


@pytest.fixture(scope="session")
def slab(schwarzschild):
    return build_domain(schwarzschild, BoundarySpec(kind="graph", r0=2.0))


@pytest.fixture(scope="session")
def wavy_slab(schwarzschild):
    return build_domain(schwarzschild, BoundarySpec(kind="graph", r0=2.0, coefficients=(0.1,)))


@pytest.fixture(scope="session")
def hyperbolic_ball(hyperbolic):
    return build_domain(hyperbolic, BoundarySpec(kind="ball", radius=1.0))


@pytest.fixture(scope="session")
def euclidean_ball(euclidean):
    return build_domain(euclidean, BoundarySpec(kind="ball", radius=1.0))


@pytest.fixture(scope="session")
def serrin_ball_field(hyperbolic_ball):
    return solve_serrin(hyperbolic_ball, make_source("constant", 1.0), 0.1)


@pytest.fixture(scope="session")
def warped_slab_field(slab):
    return solve_warped_torsion(slab, 0.2)


@pytest.fixture(scope="session")
def warped_wavy_field(wavy_slab):
    return solve_warped_torsion(wavy_slab, 0.2)
