import numpy as np
import pytest
from shapely.geometry import Polygon as ShapelyPolygon

from crowdsim.scenario import (
    DENSITY_PRESETS,
    ScenarioError,
    parse_scenario,
    serialize_scenario,
    validate_scenario,
)

FULL_SCENARIO = """
# full-feature scenario used by the parser tests
[scenario]
name = full
seed = 1234
tick_rate = 25
duration = 500

[environment]
walkable = 0,0; 50,0; 50,30; 0,30
obstacle = 20,10; 26,10; 26,16; 20,16
spawn = 2,2; 10,2; 10,10; 2,10
spawn = 40,20; 48,20; 48,28; 40,28 @ rate=1.5
spawn = 2,20; 8,20; 8,28; 2,28 @ count=10
goal = exit_a @ 44,2; 48,2; 48,8; 44,8
goal = exit_b @ 30,24; 36,24; 36,28; 30,28

[population]
count = 60
preferred_speed = 1.2, 0.2, 0.6, 2.0
social_space = 0.3, 0.04, 0.2, 0.5
body_height = 1.68, 0.09, 1.45, 1.95
anomaly_fraction = 0.05

[conditions]
time_of_day = 18:30
weather = rain
notes = evening rush

[behavior]
a_ped = 2.0
fov_lambda = 0.2
loop = true

[annotations]
stride = 5
visibility_threshold = 0.2

[camera]
id = 3
position = 25, -6, 5
look_at = 25, 15, 1
focal = 700, 700
resolution = 800, 450
distortion = -0.08, 0.01

[anomaly]
kind = runner
from_tick = 10
to_tick = 200
speed_multiplier = 1.8

[anomaly]
kind = forbidden_zone_entry
from_tick = 50
to_tick = 400
zone = 12,12; 16,12; 16,15; 12,15
"""


def test_parse_full_scenario():
    s = parse_scenario(FULL_SCENARIO)
    assert s.name == "full"
    assert s.seed == 1234
    assert s.tick_rate == 25
    assert s.duration == 500
    assert len(s.map.walkable) == 1
    assert len(s.map.obstacles) == 1
    assert len(s.map.spawn_areas) == 3
    assert s.map.spawn_areas[1].rate == 1.5
    assert s.map.spawn_areas[2].count == 10
    assert [g.name for g in s.map.goal_areas] == ["exit_a", "exit_b"]
    assert s.population.count == 60
    assert s.population.preferred_speed.mean == 1.2
    assert s.conditions.time_of_day == 18 * 60 + 30
    assert s.conditions.weather == "rain"
    assert s.behavior.a_ped == 2.0
    assert s.behavior.loop is True
    assert s.annotations.stride == 5
    assert len(s.cameras) == 1
    assert s.cameras[0].id == 3
    assert s.cameras[0].resolution == (800, 450)
    assert len(s.anomalies) == 2
    assert s.anomalies[0].parameters["speed_multiplier"] == 1.8
    assert s.anomalies[1].zone is not None


def test_presets_match_paper_counts():
    for preset, count in (("low", 40), ("medium", 100), ("high", 150)):
        text = f"""
[scenario]
name = t
[population]
preset = {preset}
"""
        s = parse_scenario(text)
        assert s.population.resolved_count() == count
    assert DENSITY_PRESETS == {"low": 40, "medium": 100, "high": 150}


def test_defaults_applied():
    s = parse_scenario("[scenario]\nname = d\n")
    assert s.tick_rate == 30
    assert s.duration == 300
    assert s.seed == 0
    assert s.population.resolved_count() == 0
    assert s.population.preferred_speed.mean == pytest.approx(1.34)
    assert s.population.preferred_speed.std == pytest.approx(0.26)
    assert s.conditions.weather == "clear"
    assert s.behavior.a_ped == 2.1
    assert s.behavior.cutoff == 4.0
    assert s.cameras == []


def test_empty_cameras_valid_when_not_annotating(basic_scenario):
    assert basic_scenario.cameras == []
    report = validate_scenario(basic_scenario)
    assert report.ok


@pytest.mark.parametrize("snippet,needle", [
    ("[scenario]\nbogus = 1\n", "unknown key"),
    ("[nosuch]\n", "unknown section"),
    ("key = 1\n", "before first"),
    ("[scenario]\nname question\n", "key = value"),
    ("[scenario]\nseed = abc\n", "integer"),
    ("[conditions]\nweather = fog\n", "unknown weather"),
    ("[conditions]\ntime_of_day = 25:00\n", "time_of_day"),
    ("[environment]\nwalkable = 0,0; 1,1\n", "3"),
    ("[population]\npreset = extreme\n", "unknown preset"),
    ("[anomaly]\nkind = dance\n", "unknown anomaly kind"),
    ("[camera]\nid = 1\n", "missing required"),
])
def test_parse_errors(snippet, needle):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(snippet)
    assert needle in str(exc.value)


def test_parse_error_reports_line_number():
    text = "[scenario]\nname = x\nbad_key = 3\n"
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text)
    assert exc.value.line == 3


def test_serialize_roundtrip_identity():
    s1 = parse_scenario(FULL_SCENARIO)
    text1 = serialize_scenario(s1)
    s2 = parse_scenario(text1)
    text2 = serialize_scenario(s2)
    assert text1 == text2
    assert s1.equals(s2)


def test_validate_default_scenario_clean(basic_scenario):
    assert validate_scenario(basic_scenario).violations == []


def test_validate_duration_zero():
    s = parse_scenario("[scenario]\nname = z\n[environment]\nwalkable = 0,0; 1,0; 1,1; 0,1\n")
    s.duration = 0
    report = validate_scenario(s)
    assert any("duration >= 1" in v for v in report.violations)


def test_validate_spawn_outside_walkable():
    text = """
[scenario]
name = bad
[environment]
walkable = 0,0; 10,0; 10,10; 0,10
spawn = 8,8; 14,8; 14,14; 8,14
goal = g @ 1,1; 2,1; 2,2; 1,2
[population]
count = 5
"""
    report = validate_scenario(parse_scenario(text))
    assert any("spawn[0]" in v and "walkable" in v for v in report.violations)


def test_validate_goal_overlapping_obstacle_matches_shapely():
    text = """
[scenario]
name = bad
[environment]
walkable = 0,0; 20,0; 20,20; 0,20
obstacle = 5,5; 9,5; 9,9; 5,9
spawn = 1,1; 3,1; 3,3; 1,3
goal = blocked @ 7,7; 12,7; 12,12; 7,12
[population]
count = 2
"""
    s = parse_scenario(text)
    report = validate_scenario(s)
    assert any("goal 'blocked'" in v and "obstacle[0]" in v for v in report.violations)
    # independent oracle for the same predicate
    assert ShapelyPolygon(s.map.goal_areas[0].polygon).intersects(
        ShapelyPolygon(s.map.obstacles[0]))


def test_validate_unreachable_goal():
    # obstacle wall fully separates spawn from goal
    text = """
[scenario]
name = walled
[environment]
walkable = 0,0; 20,0; 20,10; 0,10
obstacle = 9,-0.5; 11,-0.5; 11,10.5; 9,10.5
spawn = 1,1; 4,1; 4,4; 1,4
goal = far @ 15,1; 18,1; 18,4; 15,4
[population]
count = 3
"""
    report = validate_scenario(parse_scenario(text))
    assert any("unreachable" in v for v in report.violations)


def test_validate_anomaly_window():
    text = """
[scenario]
name = w
duration = 100
[environment]
walkable = 0,0; 10,0; 10,10; 0,10
spawn = 1,1; 3,1; 3,3; 1,3
goal = g @ 7,7; 9,7; 9,9; 7,9
[population]
count = 2
[anomaly]
kind = runner
from_tick = 50
to_tick = 200
speed_multiplier = 2.0
"""
    report = validate_scenario(parse_scenario(text))
    assert any("activation window" in v for v in report.violations)


def test_time_label_roundtrip():
    s = parse_scenario("[scenario]\nname = t\n[conditions]\ntime_of_day = 7:00\n")
    assert s.conditions.time_of_day == 420
    assert s.conditions.time_label() == "07:00"
