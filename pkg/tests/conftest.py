import numpy as np
import pytest

from csisense import ArrayGeometry, ChannelSpec, wavelength


@pytest.fixture(scope="session")
def chan80() -> ChannelSpec:
    return ChannelSpec(155, 80)


@pytest.fixture(scope="session")
def chan20() -> ChannelSpec:
    return ChannelSpec(36, 20)


@pytest.fixture(scope="session")
def square_geom(chan80) -> ArrayGeometry:
    # 0.45 lambda: strictly inside the spatial Nyquist limit, so steering
    # vectors are unique over the full circle (a half-wavelength square
    # aliases the cardinal directions pairwise).
    return ArrayGeometry.square(0.45 * wavelength(chan80))


@pytest.fixture(scope="session")
def ula_geom(chan80) -> ArrayGeometry:
    return ArrayGeometry.uniform_linear(4, wavelength(chan80) / 2.0, axis="y")


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(0xC51)
