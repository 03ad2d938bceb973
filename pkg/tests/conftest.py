import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=20,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

from hslag import (
    CircleSphereModel,
    TorusModel,
    circle_sphere_lagrangian,
    clifford_torus,
)

RADII = (1.0, 1.3)


@pytest.fixture(scope="session")
def torus_model():
    return TorusModel(radii=RADII, grid_size=32)


@pytest.fixture(scope="session")
def torus(torus_model):
    return clifford_torus(torus_model)


@pytest.fixture(scope="session")
def circle_sphere_model():
    return CircleSphereModel(n=2, grid_size=32)


@pytest.fixture(scope="session")
def circle_sphere(circle_sphere_model):
    return circle_sphere_lagrangian(circle_sphere_model)


@pytest.fixture(scope="session")
def flat_operator(torus_model):
    from hslag.operators import assemble_flat_operator

    return assemble_flat_operator(torus_model)


@pytest.fixture(scope="session")
def flat_spectrum(flat_operator):
    from hslag.operators import eigensolve

    return eigensolve(flat_operator)


@pytest.fixture(scope="session")
def cs_operator(circle_sphere_model):
    from hslag.operators import assemble_flat_operator

    return assemble_flat_operator(circle_sphere_model)


@pytest.fixture(scope="session")
def cs_spectrum(cs_operator):
    from hslag.operators import eigensolve

    return eigensolve(cs_operator)


@pytest.fixture(scope="session")
def reduction_ctx():
    from hslag.reduction import build_context

    return build_context()


@pytest.fixture(scope="session")
def base_reduction_state(reduction_ctx):
    from hslag.reduction import projected_solve, random_frame_state

    frame = random_frame_state(reduction_ctx, seed=7)
    return projected_solve(reduction_ctx, reduction_ctx.t, frame)


@pytest.fixture(scope="session")
def frame_optimum_timed(reduction_ctx):
    import time

    from hslag.reduction import optimize_frame, random_frame_state

    frame = random_frame_state(reduction_ctx, seed=1)
    start = time.perf_counter()
    result = optimize_frame(reduction_ctx, reduction_ctx.t, frame)
    return result, time.perf_counter() - start


@pytest.fixture(scope="session")
def frame_optimum(frame_optimum_timed):
    return frame_optimum_timed[0]


@pytest.fixture()
def rng():
    return np.random.default_rng(20260814)
