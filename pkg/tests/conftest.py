import os

import numpy as np
import pytest

from fwasense.scenario import Scenario

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DESK_CONFIG = os.path.join(REPO_ROOT, "configs", "desk.json")
PAPER_CONFIG = os.path.join(REPO_ROOT, "configs", "paper.json")


@pytest.fixture(scope="session")
def desk_scenario() -> Scenario:
    from fwasense.scenario import load_scenario

    return load_scenario(DESK_CONFIG)


@pytest.fixture(scope="session")
def tiny_scenario() -> Scenario:
    """Minimal scene for fast channel/dataset tests: 1 BS, 2 CPEs, one
    scatterer, small grids."""
    s = Scenario(
        bs_positions=((-20.0, 0.0, 25.0),),
        cpe_positions=((15.0, -10.0, 8.0), (10.0, 18.0, 8.0)),
        uav_altitude=15.0,
        uav_xy_range=25.0,
        rx_array=(2, 2),
        tx_array=(1, 2),
        carrier_hz=2.8e9,
        bandwidth_hz=20e6,
        subcarrier_spacing_hz=1.25e6,
        n_subcarriers=16,
        delay_keep=8,
        scatterer_positions=((5.0, 5.0, 6.0),),
        uav_reflect_amp=50.0,
        scatterer_reflect_amp=80.0,
    )
    s.validate()
    return s


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
