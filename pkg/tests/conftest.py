import numpy as np
import pytest

from kgorbit import ModelParams, build_spectrum

M, P = 0.5, 1


@pytest.fixture(scope="session")
def params():
    return ModelParams(m=M, p=P, dim=1, cutoff=4)


@pytest.fixture(scope="session")
def table(params):
    return build_spectrum(params)


@pytest.fixture(scope="session")
def params8():
    return ModelParams(m=M, p=P, dim=1, cutoff=8)


@pytest.fixture(scope="session")
def table8(params8):
    return build_spectrum(params8)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
