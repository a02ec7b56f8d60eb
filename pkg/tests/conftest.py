import os

import pytest

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "..", "scenarios")


@pytest.fixture(scope="session")
def scenario_dir():
    return os.path.abspath(SCENARIO_DIR)


BASIC_SCENARIO = """
[scenario]
name = basic
seed = 7
tick_rate = 30
duration = 60

[environment]
walkable = 0,0; 30,0; 30,20; 0,20
obstacle = 12,8; 18,8; 18,12; 12,12
spawn = 1,1; 8,1; 8,8; 1,8
goal = east @ 25,14; 29,14; 29,19; 25,19

[population]
count = 25
"""


@pytest.fixture
def basic_text():
    return BASIC_SCENARIO


@pytest.fixture
def basic_scenario():
    from crowdsim.scenario import parse_scenario

    return parse_scenario(BASIC_SCENARIO)
