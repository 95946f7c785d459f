import numpy as np
import pytest

from seirident import _kernels
from seirident.observe import DataType, Frequency, build_case


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile (or load from disk cache) the jitted kernels once up front so
    # individual test timings are meaningful
    _kernels.warm_up()


@pytest.fixture(scope="session")
def s1_prevalence_daily():
    return build_case(1, DataType.PREVALENCE, Frequency.DAILY)


@pytest.fixture(scope="session")
def s2_incidence_daily():
    return build_case(2, DataType.INCIDENCE, Frequency.DAILY)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20210905)
