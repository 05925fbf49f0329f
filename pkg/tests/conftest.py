import numpy as np
import pytest

from pileuq.beam import PileConfig, run_ensemble
from pileuq.doe import PriorSpec, lhs_design

PILE_PRIOR = PriorSpec.from_bounds(
    ["G0", "K0", "OCR"], [50e3, 0.4, 5.0], [160e3, 1.0, 40.0]
)


@pytest.fixture(scope="session")
def pile_prior():
    return PILE_PRIOR


@pytest.fixture(scope="session")
def pile_config():
    return PileConfig()


@pytest.fixture(scope="session")
def pile_design(pile_config):
    return lhs_design(PILE_PRIOR, 14, seed=7)


@pytest.fixture(scope="session")
def stage1_ensemble(pile_design, pile_config):
    Y, loads = run_ensemble(pile_design, 0.02, pile_config)
    return pile_design, Y, loads


@pytest.fixture(scope="session")
def stage2_ensemble(pile_design, pile_config):
    Y, loads = run_ensemble(pile_design, 0.20, pile_config)
    return pile_design, Y, loads
