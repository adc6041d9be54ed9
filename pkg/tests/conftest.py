import numpy as np
import pytest

from mtsched.models import (MarketParams, Models, OpportunisticModel, TraditionalDemandModel,
                            WindModel)


@pytest.fixture
def params():
    return MarketParams(c1=1.0, c2=2.0, c_p=0.5, u_cap=5.0, v_cap=6.0, M=1, K=4)


@pytest.fixture
def elastic_opp():
    return OpportunisticModel(lambda_o=[50.0], T2=1.0, gamma_o=-2.0, v_min=0.8, E_o=1.0)


@pytest.fixture
def inelastic_opp():
    return OpportunisticModel(lambda_o=[50.0], T2=1.0, gamma_o=-0.5, v_min=0.8, E_o=1.0)


def make_models(opp, theta=10.0, sigma=3.0, alpha_t=100.0, gamma_t=-2.0, sigma_t=2.0):
    return Models(WindModel([theta], sigma),
                  TraditionalDemandModel([alpha_t], [gamma_t], sigma_t), opp)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# filled by test_acceptance.py, printed once at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
