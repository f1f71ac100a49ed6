import pytest

from meshcond import bounds, diffusion


@pytest.fixture(scope="session")
def cal1():
    return bounds.calibrate_constant(1, diffusion.identity_field(1), 1024)


@pytest.fixture(scope="session")
def cal2():
    return bounds.calibrate_constant(2, diffusion.identity_field(2), 32)


@pytest.fixture(scope="session")
def cal3():
    return bounds.calibrate_constant(3, diffusion.identity_field(3), 8)
