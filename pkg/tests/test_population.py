import numpy as np
import pytest
from shapely.geometry import Point, Polygon as ShapelyPolygon

from crowdsim.scenario import (
    MIN_SPAWN_SPACING,
    ScenarioError,
    parse_scenario,
    sample_population,
)


def rng(seed=42):
    return np.random.Generator(np.random.PCG64(seed))


def test_same_seed_bitwise_identical(basic_scenario):
    a = sample_population(basic_scenario, rng(42))
    b = sample_population(basic_scenario, rng(42))
    assert a.size == b.size
    assert a.position[:a.size].tobytes() == b.position[:b.size].tobytes()
    assert a.v0[:a.size].tobytes() == b.v0[:b.size].tobytes()
    assert a.goal[:a.size].tobytes() == b.goal[:b.size].tobytes()
    assert a.height[:a.size].tobytes() == b.height[:b.size].tobytes()


def test_different_seed_differs(basic_scenario):
    a = sample_population(basic_scenario, rng(1))
    b = sample_population(basic_scenario, rng(2))
    assert a.position[:a.size].tobytes() != b.position[:b.size].tobytes()


def test_high_preset_yields_150():
    text = """
[scenario]
name = t
[environment]
walkable = 0,0; 60,0; 60,60; 0,60
spawn = 2,2; 40,2; 40,40; 2,40
goal = g @ 50,50; 58,50; 58,58; 50,58
[population]
preset = high
"""
    agents = sample_population(parse_scenario(text), rng())
    assert agents.size == 150


def test_no_anomaly_fraction_no_tags(basic_scenario):
    agents = sample_population(basic_scenario, rng())
    assert (agents.anomaly_kind[:agents.size] == 0).all()


def test_anomaly_fraction_tags_expected_count():
    text = """
[scenario]
name = t
duration = 100
[environment]
walkable = 0,0; 40,0; 40,40; 0,40
spawn = 2,2; 30,2; 30,30; 2,30
goal = g @ 34,34; 38,34; 38,38; 34,38
[population]
count = 40
anomaly_fraction = 0.25
[anomaly]
kind = runner
from_tick = 0
to_tick = 100
speed_multiplier = 2.0
[anomaly]
kind = loiterer
from_tick = 0
to_tick = 100
dwell = 3.0
"""
    agents = sample_population(parse_scenario(text), rng())
    tagged = np.flatnonzero(agents.anomaly_kind[:agents.size])
    assert tagged.size == 10
    # round-robin over the two specs
    kinds = agents.anomaly_kind[tagged]
    assert set(kinds.tolist()) == {1, 3}


def test_positions_inside_spawn_outside_obstacles(basic_scenario):
    agents = sample_population(basic_scenario, rng())
    spawns = [ShapelyPolygon(sp.polygon) for sp in basic_scenario.map.spawn_areas]
    obstacles = [ShapelyPolygon(o) for o in basic_scenario.map.obstacles]
    for i in range(agents.size):
        p = Point(agents.position[i])
        assert any(sp.covers(p) for sp in spawns)
        assert not any(o.covers(p) for o in obstacles)


def test_spacing_respected(basic_scenario):
    agents = sample_population(basic_scenario, rng())
    pos = agents.position[:agents.size]
    d2 = ((pos[:, None, :] - pos[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    assert d2.min() >= MIN_SPAWN_SPACING ** 2 - 1e-12


def test_parameter_draws_within_bounds(basic_scenario):
    agents = sample_population(basic_scenario, rng())
    p = basic_scenario.population
    n = agents.size
    assert ((agents.v0[:n] >= p.preferred_speed.lo)
            & (agents.v0[:n] <= p.preferred_speed.hi)).all()
    assert ((agents.radius[:n] >= p.social_space.lo)
            & (agents.radius[:n] <= p.social_space.hi)).all()
    assert ((agents.height[:n] >= p.body_height.lo)
            & (agents.height[:n] <= p.body_height.hi)).all()


def test_goals_round_robin(basic_scenario):
    agents = sample_population(basic_scenario, rng())
    # single goal area: everyone bound to area 0, goal point inside it
    assert (agents.goal_area[:agents.size] == 0).all()
    gp = ShapelyPolygon(basic_scenario.map.goal_areas[0].polygon)
    for i in range(agents.size):
        assert gp.covers(Point(agents.goal[i]))


def test_round_robin_multiple_goals():
    text = """
[scenario]
name = rr
[environment]
walkable = 0,0; 40,0; 40,40; 0,40
spawn = 2,2; 20,2; 20,20; 2,20
goal = a @ 30,2; 34,2; 34,6; 30,6
goal = b @ 30,16; 34,16; 34,20; 30,20
goal = c @ 30,30; 34,30; 34,34; 30,34
[population]
count = 9
"""
    agents = sample_population(parse_scenario(text), rng())
    assert agents.goal_area[:9].tolist() == [0, 1, 2, 0, 1, 2, 0, 1, 2]


def test_spawn_area_too_small_errors():
    text = """
[scenario]
name = cramped
[environment]
walkable = 0,0; 20,0; 20,20; 0,20
spawn = 1,1; 1.6,1; 1.6,1.6; 1,1.6
goal = g @ 10,10; 12,10; 12,12; 10,12
[population]
count = 50
"""
    with pytest.raises(ScenarioError) as exc:
        sample_population(parse_scenario(text), rng())
    assert "too small" in str(exc.value)


def test_explicit_spawn_counts_override_apportionment():
    text = """
[scenario]
name = split
[environment]
walkable = 0,0; 40,0; 40,40; 0,40
spawn = 2,2; 18,2; 18,18; 2,18 @ count=7
spawn = 22,22; 38,22; 38,38; 22,38
goal = g @ 2,30; 6,30; 6,34; 2,34
[population]
count = 10
"""
    s = parse_scenario(text)
    agents = sample_population(s, rng())
    assert agents.size == 10
    first = ShapelyPolygon(s.map.spawn_areas[0].polygon)
    in_first = sum(first.covers(Point(agents.position[i])) for i in range(10))
    assert in_first == 7
