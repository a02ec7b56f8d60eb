"""Scenario files: parsing, validation, serialization, population sampling.

The format is a hand-editable sectioned key/value text: ``[section]``
headers, ``key = value`` lines, ``#`` comments, UTF-8. Polygons are
semicolon-separated ``x,y`` pairs in meters. ``[camera]`` and ``[anomaly]``
sections repeat, one instance each. See docs/scenario-format.md for the
full grammar.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .agents import ANOMALY_KIND_CODES, AgentSet
from .camera import CameraModel

DENSITY_PRESETS = {"low": 40, "medium": 100, "high": 150}
WEATHER_TAGS = ("clear", "rain", "snow")
ANOMALY_KINDS = ("runner", "counterflow", "loiterer", "forbidden_zone_entry")

SPEED_MAX_FACTOR = 1.3      # hard cap: |v| <= 1.3 * v0
STRIDE_FACTOR = 0.7         # stride length = 0.7 * body height
GOAL_TOLERANCE = 0.3        # meters; reaching a goal point
MIN_SPAWN_SPACING = 0.3     # meters between sampled agents


class ScenarioError(ValueError):
    """Parse or construction failure; carries the offending line/field."""

    def __init__(self, message: str, line: int = None, field_name: str = None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field_name is not None:
            loc.append(f"field '{field_name}'")
        super().__init__(f"{message}" + (f" ({', '.join(loc)})" if loc else ""))
        self.line = line
        self.field_name = field_name


@dataclass
class Distribution:
    """Truncated normal draw: rejection inside [lo, hi], clamp as last resort."""

    mean: float
    std: float
    lo: float
    hi: float

    def sample(self, rng: np.random.Generator) -> float:
        for _ in range(100):
            x = rng.normal(self.mean, self.std)
            if self.lo <= x <= self.hi:
                return float(x)
        return float(min(self.hi, max(self.lo, self.mean)))


@dataclass
class SpawnArea:
    polygon: np.ndarray
    rate: float = None        # agents/second; None for initial areas
    count: int = None         # explicit initial count; None = share of total
    open: bool = True


@dataclass
class GoalArea:
    name: str
    polygon: np.ndarray


@dataclass
class EnvironmentMap:
    walkable: list = field(default_factory=list)
    obstacles: list = field(default_factory=list)
    spawn_areas: list = field(default_factory=list)
    goal_areas: list = field(default_factory=list)


@dataclass
class PopulationSpec:
    preset: str = None
    count: int = None
    preferred_speed: Distribution = field(
        default_factory=lambda: Distribution(1.34, 0.26, 0.5, 2.2))
    social_space: Distribution = field(
        default_factory=lambda: Distribution(0.35, 0.05, 0.2, 0.6))
    body_height: Distribution = field(
        default_factory=lambda: Distribution(1.70, 0.10, 1.40, 2.00))
    anomaly_fraction: float = 0.0

    def resolved_count(self) -> int:
        if self.preset is not None:
            return DENSITY_PRESETS[self.preset]
        if self.count is not None:
            return self.count
        return 0

    def density_label(self) -> str:
        return self.preset if self.preset is not None else str(self.resolved_count())


@dataclass
class GlobalConditions:
    time_of_day: int = 720          # minutes since midnight
    weather: str = "clear"
    notes: str = ""

    def time_label(self) -> str:
        return f"{self.time_of_day // 60:02d}:{self.time_of_day % 60:02d}"


@dataclass
class AnomalySpec:
    kind: str
    from_tick: int
    to_tick: int
    parameters: dict = field(default_factory=dict)
    zone: np.ndarray = None         # forbidden_zone_entry only

    def kind_code(self) -> int:
        return ANOMALY_KIND_CODES[self.kind]


@dataclass
class BehaviorParams:
    a_ped: float = 2.1              # m/s^2
    b_ped: float = 0.3              # m
    a_obs: float = 10.0             # m/s^2
    b_obs: float = 0.2              # m
    cutoff: float = 4.0             # m, neighbor + obstacle interaction radius
    fov_lambda: float = 0.3         # anisotropy weight, 1 = isotropic
    tau: float = 0.5                # s, relaxation time
    grid_cell: float = 2.0          # m, spatial hash cell size
    loop: bool = False              # re-goal instead of despawning


@dataclass
class AnnotationConfig:
    stride: int = 1                 # annotate every Nth tick
    visibility_threshold: float = 0.1


@dataclass(eq=False)
class Scenario:
    name: str = "unnamed"
    seed: int = 0
    tick_rate: int = 30
    duration: int = 300
    map: EnvironmentMap = field(default_factory=EnvironmentMap)
    population: PopulationSpec = field(default_factory=PopulationSpec)
    cameras: list = field(default_factory=list)
    conditions: GlobalConditions = field(default_factory=GlobalConditions)
    anomalies: list = field(default_factory=list)
    behavior: BehaviorParams = field(default_factory=BehaviorParams)
    annotations: AnnotationConfig = field(default_factory=AnnotationConfig)

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    def equals(self, other: "Scenario") -> bool:
        return serialize_scenario(self) == serialize_scenario(other)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


# ---------------------------------------------------------------------------
# parsing

_SCENARIO_KEYS = {"name", "seed", "tick_rate", "duration"}
_POPULATION_KEYS = {"preset", "count", "preferred_speed", "social_space",
                    "body_height", "anomaly_fraction"}
_CONDITION_KEYS = {"time_of_day", "weather", "notes"}
_BEHAVIOR_KEYS = {"a_ped", "b_ped", "a_obs", "b_obs", "cutoff", "fov_lambda",
                  "tau", "grid_cell", "loop"}
_ANNOTATION_KEYS = {"stride", "visibility_threshold"}
_CAMERA_KEYS = {"id", "position", "look_at", "focal", "principal",
                "resolution", "distortion"}
_ANOMALY_KEYS = {"kind", "from_tick", "to_tick", "speed_multiplier", "dwell",
                 "zone"}
_ENVIRONMENT_KEYS = {"walkable", "obstacle", "spawn", "goal"}


def _parse_floats(text: str, n: int, line: int, key: str) -> list:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != n:
        raise ScenarioError(f"expected {n} comma-separated numbers, got {len(parts)}",
                            line, key)
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ScenarioError(f"bad number in '{text}'", line, key) from exc


def _parse_int(text: str, line: int, key: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ScenarioError(f"expected integer, got '{text}'", line, key) from exc


def _parse_float(text: str, line: int, key: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ScenarioError(f"expected number, got '{text}'", line, key) from exc


def _parse_bool(text: str, line: int, key: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ScenarioError(f"expected boolean, got '{text}'", line, key)


def _parse_polygon(text: str, line: int, key: str) -> np.ndarray:
    pts = []
    for pair in text.split(";"):
        pair = pair.strip()
        if not pair:
            continue
        xy = pair.split(",")
        if len(xy) != 2:
            raise ScenarioError(f"bad vertex '{pair}', expected 'x,y'", line, key)
        try:
            pts.append((float(xy[0]), float(xy[1])))
        except ValueError as exc:
            raise ScenarioError(f"bad vertex '{pair}'", line, key) from exc
    try:
        return geometry.as_polygon(pts)
    except ValueError as exc:
        raise ScenarioError(str(exc), line, key) from exc


def _parse_time(text: str, line: int, key: str) -> int:
    text = text.strip()
    if ":" in text:
        hh, mm = text.split(":", 1)
        try:
            minutes = int(hh) * 60 + int(mm)
        except ValueError as exc:
            raise ScenarioError(f"bad time '{text}'", line, key) from exc
    else:
        minutes = _parse_int(text, line, key)
    if not 0 <= minutes < 1440:
        raise ScenarioError("time_of_day must be in [0, 1440) minutes", line, key)
    return minutes


def _parse_distribution(text: str, line: int, key: str) -> Distribution:
    mean, std, lo, hi = _parse_floats(text, 4, line, key)
    return Distribution(mean, std, lo, hi)


def parse_scenario(text: str) -> Scenario:
    """Parse scenario text into a fully defaulted Scenario.

    Parsing is total: any problem raises ScenarioError naming the line and
    field, and no partially built Scenario escapes.
    """
    s = Scenario()
    env = s.map
    section = None
    current_camera = None
    current_anomaly = None
    cameras_raw = []
    anomalies_raw = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("scenario", "environment", "population",
                               "conditions", "behavior", "annotations",
                               "camera", "anomaly"):
                raise ScenarioError(f"unknown section '[{section}]'", lineno)
            if section == "camera":
                current_camera = {"_line": lineno}
                cameras_raw.append(current_camera)
            elif section == "anomaly":
                current_anomaly = {"_line": lineno}
                anomalies_raw.append(current_anomaly)
            continue
        if section is None:
            raise ScenarioError("content before first [section]", lineno)
        if "=" not in line:
            raise ScenarioError("expected 'key = value'", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ScenarioError("empty key", lineno)

        if section == "scenario":
            if key not in _SCENARIO_KEYS:
                raise ScenarioError(f"unknown key '{key}' in [scenario]", lineno, key)
            if key == "name":
                s.name = value
            elif key == "seed":
                s.seed = _parse_int(value, lineno, key)
                if not 0 <= s.seed < 2 ** 64:
                    raise ScenarioError("seed must fit in 64 unsigned bits", lineno, key)
            elif key == "tick_rate":
                s.tick_rate = _parse_int(value, lineno, key)
            elif key == "duration":
                s.duration = _parse_int(value, lineno, key)
        elif section == "environment":
            if key not in _ENVIRONMENT_KEYS:
                raise ScenarioError(f"unknown key '{key}' in [environment]", lineno, key)
            if key == "walkable":
                env.walkable.append(_parse_polygon(value, lineno, key))
            elif key == "obstacle":
                env.obstacles.append(_parse_polygon(value, lineno, key))
            elif key == "spawn":
                env.spawn_areas.append(_parse_spawn(value, lineno))
            elif key == "goal":
                env.goal_areas.append(_parse_goal(value, lineno))
        elif section == "population":
            if key not in _POPULATION_KEYS:
                raise ScenarioError(f"unknown key '{key}' in [population]", lineno, key)
            if key == "preset":
                if value not in DENSITY_PRESETS:
                    raise ScenarioError(
                        f"unknown preset '{value}' (expected low/medium/high)",
                        lineno, key)
                s.population.preset = value
            elif key == "count":
                s.population.count = _parse_int(value, lineno, key)
            elif key == "anomaly_fraction":
                s.population.anomaly_fraction = _parse_float(value, lineno, key)
            else:
                setattr(s.population, key, _parse_distribution(value, lineno, key))
        elif section == "conditions":
            if key not in _CONDITION_KEYS:
                raise ScenarioError(f"unknown key '{key}' in [conditions]", lineno, key)
            if key == "time_of_day":
                s.conditions.time_of_day = _parse_time(value, lineno, key)
            elif key == "weather":
                if value not in WEATHER_TAGS:
                    raise ScenarioError(
                        f"unknown weather '{value}' (expected {'/'.join(WEATHER_TAGS)})",
                        lineno, key)
                s.conditions.weather = value
            else:
                s.conditions.notes = value
        elif section == "behavior":
            if key not in _BEHAVIOR_KEYS:
                raise ScenarioError(f"unknown key '{key}' in [behavior]", lineno, key)
            if key == "loop":
                s.behavior.loop = _parse_bool(value, lineno, key)
            else:
                setattr(s.behavior, key, _parse_float(value, lineno, key))
        elif section == "annotations":
            if key not in _ANNOTATION_KEYS:
                raise ScenarioError(f"unknown key '{key}' in [annotations]", lineno, key)
            if key == "stride":
                s.annotations.stride = _parse_int(value, lineno, key)
            else:
                s.annotations.visibility_threshold = _parse_float(value, lineno, key)
        elif section == "camera":
            if key not in _CAMERA_KEYS:
                raise ScenarioError(f"unknown key '{key}' in [camera]", lineno, key)
            current_camera[key] = (value, lineno)
        elif section == "anomaly":
            if key not in _ANOMALY_KEYS:
                raise ScenarioError(f"unknown key '{key}' in [anomaly]", lineno, key)
            current_anomaly[key] = (value, lineno)

    s.cameras = [_build_camera(c) for c in cameras_raw]
    s.anomalies = [_build_anomaly(a) for a in anomalies_raw]
    _check_ranges(s)
    return s


def _parse_spawn(value: str, lineno: int) -> SpawnArea:
    poly_text, sep, tail = value.partition("@")
    polygon = _parse_polygon(poly_text, lineno, "spawn")
    rate = None
    count = None
    if sep:
        tail = tail.strip()
        mode, sep2, amount = tail.partition("=")
        mode = mode.strip().lower()
        if not sep2:
            raise ScenarioError("spawn modifier must be 'rate=<n>' or 'count=<n>'",
                                lineno, "spawn")
        if mode == "rate":
            rate = _parse_float(amount.strip(), lineno, "spawn")
            if rate < 0 or not math.isfinite(rate):
                raise ScenarioError("spawn rate must be finite and >= 0", lineno, "spawn")
        elif mode == "count":
            count = _parse_int(amount.strip(), lineno, "spawn")
            if count < 0:
                raise ScenarioError("spawn count must be >= 0", lineno, "spawn")
        else:
            raise ScenarioError(f"unknown spawn modifier '{mode}'", lineno, "spawn")
    return SpawnArea(polygon=polygon, rate=rate, count=count)


def _parse_goal(value: str, lineno: int) -> GoalArea:
    name, sep, poly_text = value.partition("@")
    if not sep:
        raise ScenarioError("goal must be '<name> @ <polygon>'", lineno, "goal")
    name = name.strip()
    if not name:
        raise ScenarioError("goal name is empty", lineno, "goal")
    return GoalArea(name=name, polygon=_parse_polygon(poly_text, lineno, "goal"))


def _build_camera(raw: dict) -> CameraModel:
    line = raw.pop("_line")

    def need(key):
        if key not in raw:
            raise ScenarioError(f"camera missing required key '{key}'", line, key)
        return raw[key]

    cam_id_text, cam_line = need("id")
    cam_id = _parse_int(cam_id_text, cam_line, "id")
    pos = _parse_floats(need("position")[0], 3, need("position")[1], "position")
    look = _parse_floats(need("look_at")[0], 3, need("look_at")[1], "look_at")
    focal = _parse_floats(need("focal")[0], 2, need("focal")[1], "focal")
    res_f = _parse_floats(need("resolution")[0], 2, need("resolution")[1], "resolution")
    resolution = (int(res_f[0]), int(res_f[1]))
    principal = None
    if "principal" in raw:
        principal = tuple(_parse_floats(raw["principal"][0], 2, raw["principal"][1], "principal"))
    distortion = (0.0, 0.0)
    if "distortion" in raw:
        distortion = tuple(_parse_floats(raw["distortion"][0], 2, raw["distortion"][1], "distortion"))
    try:
        return CameraModel(id=cam_id, position=np.array(pos), look_at=np.array(look),
                           focal=tuple(focal), resolution=resolution,
                           principal=principal, distortion=distortion)
    except ValueError as exc:
        raise ScenarioError(str(exc), line, "camera") from exc


def _build_anomaly(raw: dict) -> AnomalySpec:
    line = raw.pop("_line")
    if "kind" not in raw:
        raise ScenarioError("anomaly missing 'kind'", line, "kind")
    kind, kind_line = raw["kind"]
    if kind not in ANOMALY_KINDS:
        raise ScenarioError(f"unknown anomaly kind '{kind}'", kind_line, "kind")
    if "from_tick" not in raw or "to_tick" not in raw:
        raise ScenarioError("anomaly needs from_tick and to_tick", line, "kind")
    from_tick = _parse_int(raw["from_tick"][0], raw["from_tick"][1], "from_tick")
    to_tick = _parse_int(raw["to_tick"][0], raw["to_tick"][1], "to_tick")
    params = {}
    zone = None
    if kind == "runner":
        if "speed_multiplier" not in raw:
            raise ScenarioError("runner anomaly needs speed_multiplier", line,
                                "speed_multiplier")
        params["speed_multiplier"] = _parse_float(
            raw["speed_multiplier"][0], raw["speed_multiplier"][1], "speed_multiplier")
    elif kind == "loiterer":
        if "dwell" not in raw:
            raise ScenarioError("loiterer anomaly needs dwell (seconds)", line, "dwell")
        params["dwell"] = _parse_float(raw["dwell"][0], raw["dwell"][1], "dwell")
    elif kind == "forbidden_zone_entry":
        if "zone" not in raw:
            raise ScenarioError("forbidden_zone_entry needs exactly one zone polygon",
                                line, "zone")
        zone = _parse_polygon(raw["zone"][0], raw["zone"][1], "zone")
    for key in ("speed_multiplier", "dwell", "zone"):
        wanted = {"runner": "speed_multiplier", "loiterer": "dwell",
                  "forbidden_zone_entry": "zone"}.get(kind)
        if key in raw and key != wanted:
            raise ScenarioError(f"key '{key}' does not apply to kind '{kind}'",
                                raw[key][1], key)
    return AnomalySpec(kind=kind, from_tick=from_tick, to_tick=to_tick,
                       parameters=params, zone=zone)


def _check_ranges(s: Scenario) -> None:
    if s.tick_rate < 1:
        raise ScenarioError("tick_rate must be >= 1", field_name="tick_rate")
    if s.duration < 1:
        raise ScenarioError("duration must be >= 1", field_name="duration")
    if not 0.0 <= s.population.anomaly_fraction <= 1.0:
        raise ScenarioError("anomaly_fraction must be in [0, 1]",
                            field_name="anomaly_fraction")
    ids = [c.id for c in s.cameras]
    if len(ids) != len(set(ids)):
        raise ScenarioError("camera ids must be unique", field_name="camera.id")


# ---------------------------------------------------------------------------
# serialization

def _fmt_poly(poly: np.ndarray) -> str:
    return "; ".join(f"{float(x)!r},{float(y)!r}" for x, y in poly)


def serialize_scenario(s: Scenario) -> str:
    """Canonical text form; parse(serialize(s)) reproduces s exactly."""
    out = []
    out.append("[scenario]")
    out.append(f"name = {s.name}")
    out.append(f"seed = {s.seed}")
    out.append(f"tick_rate = {s.tick_rate}")
    out.append(f"duration = {s.duration}")
    out.append("")
    out.append("[environment]")
    for poly in s.map.walkable:
        out.append(f"walkable = {_fmt_poly(poly)}")
    for poly in s.map.obstacles:
        out.append(f"obstacle = {_fmt_poly(poly)}")
    for sp in s.map.spawn_areas:
        suffix = ""
        if sp.rate is not None:
            suffix = f" @ rate={sp.rate!r}"
        elif sp.count is not None:
            suffix = f" @ count={sp.count}"
        out.append(f"spawn = {_fmt_poly(sp.polygon)}{suffix}")
    for g in s.map.goal_areas:
        out.append(f"goal = {g.name} @ {_fmt_poly(g.polygon)}")
    out.append("")
    out.append("[population]")
    if s.population.preset is not None:
        out.append(f"preset = {s.population.preset}")
    elif s.population.count is not None:
        out.append(f"count = {s.population.count}")
    for key in ("preferred_speed", "social_space", "body_height"):
        d = getattr(s.population, key)
        out.append(f"{key} = {d.mean!r}, {d.std!r}, {d.lo!r}, {d.hi!r}")
    out.append(f"anomaly_fraction = {s.population.anomaly_fraction!r}")
    out.append("")
    out.append("[conditions]")
    out.append(f"time_of_day = {s.conditions.time_label()}")
    out.append(f"weather = {s.conditions.weather}")
    if s.conditions.notes:
        out.append(f"notes = {s.conditions.notes}")
    out.append("")
    out.append("[behavior]")
    b = s.behavior
    for key in ("a_ped", "b_ped", "a_obs", "b_obs", "cutoff", "fov_lambda",
                "tau", "grid_cell"):
        out.append(f"{key} = {getattr(b, key)!r}")
    out.append(f"loop = {'true' if b.loop else 'false'}")
    out.append("")
    out.append("[annotations]")
    out.append(f"stride = {s.annotations.stride}")
    out.append(f"visibility_threshold = {s.annotations.visibility_threshold!r}")
    for cam in s.cameras:
        out.append("")
        out.append("[camera]")
        out.append(f"id = {cam.id}")
        out.append(f"position = {float(cam.position[0])!r}, {float(cam.position[1])!r}, "
                   f"{float(cam.position[2])!r}")
        out.append(f"look_at = {float(cam.look_at[0])!r}, {float(cam.look_at[1])!r}, "
                   f"{float(cam.look_at[2])!r}")
        out.append(f"focal = {float(cam.focal[0])!r}, {float(cam.focal[1])!r}")
        out.append(f"principal = {float(cam.principal[0])!r}, {float(cam.principal[1])!r}")
        out.append(f"resolution = {cam.resolution[0]}, {cam.resolution[1]}")
        out.append(f"distortion = {float(cam.distortion[0])!r}, {float(cam.distortion[1])!r}")
    for a in s.anomalies:
        out.append("")
        out.append("[anomaly]")
        out.append(f"kind = {a.kind}")
        out.append(f"from_tick = {a.from_tick}")
        out.append(f"to_tick = {a.to_tick}")
        if a.kind == "runner":
            out.append(f"speed_multiplier = {a.parameters['speed_multiplier']!r}")
        elif a.kind == "loiterer":
            out.append(f"dwell = {a.parameters['dwell']!r}")
        elif a.kind == "forbidden_zone_entry":
            out.append(f"zone = {_fmt_poly(a.zone)}")
    return "\n".join(out) + "\n"


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def save_scenario(s: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_scenario(s))


# ---------------------------------------------------------------------------
# validation

def _dist_violations(name: str, d: Distribution, out: list) -> None:
    vals = (d.mean, d.std, d.lo, d.hi)
    if not all(math.isfinite(v) for v in vals):
        out.append(f"{name}: distribution values must be finite")
        return
    if d.lo <= 0 or d.hi <= 0:
        out.append(f"{name}: bounds must be positive")
    if d.lo > d.hi:
        out.append(f"{name}: lower bound exceeds upper bound")
    if d.std < 0:
        out.append(f"{name}: stddev must be >= 0")


def validate_scenario(s: Scenario, reachability: bool = True) -> ValidationReport:
    """Collect every invariant violation; an empty report means runnable."""
    v = []
    if s.tick_rate < 1:
        v.append("tick_rate >= 1")
    if s.duration < 1:
        v.append("duration >= 1")

    env = s.map
    if not env.walkable:
        v.append("environment: at least one walkable polygon required")
    for i, poly in enumerate(env.walkable):
        if not geometry.is_simple_polygon(poly):
            v.append(f"walkable[{i}] self-intersects")
    for i, poly in enumerate(env.obstacles):
        if not geometry.is_simple_polygon(poly):
            v.append(f"obstacle[{i}] self-intersects")

    def inside_walkable(poly):
        return any(geometry.polygon_contains_polygon(w, poly) for w in env.walkable)

    for i, sp in enumerate(env.spawn_areas):
        label = f"spawn[{i}]"
        if env.walkable and not inside_walkable(sp.polygon):
            v.append(f"{label} not fully inside the walkable region")
        for j, obs in enumerate(env.obstacles):
            if geometry.polygons_overlap(sp.polygon, obs):
                v.append(f"{label} overlaps obstacle[{j}]")
    for g in env.goal_areas:
        label = f"goal '{g.name}'"
        if env.walkable and not inside_walkable(g.polygon):
            v.append(f"{label} not fully inside the walkable region")
        for j, obs in enumerate(env.obstacles):
            if geometry.polygons_overlap(g.polygon, obs):
                v.append(f"{label} overlaps obstacle[{j}]")

    _dist_violations("preferred_speed", s.population.preferred_speed, v)
    _dist_violations("social_space", s.population.social_space, v)
    _dist_violations("body_height", s.population.body_height, v)
    if not 0.0 <= s.population.anomaly_fraction <= 1.0:
        v.append("anomaly_fraction must be in [0, 1]")
    if s.population.anomaly_fraction > 0 and not s.anomalies:
        v.append("anomaly_fraction > 0 but no [anomaly] sections defined")

    total = s.population.resolved_count()
    initial_areas = [sp for sp in env.spawn_areas if sp.rate is None]
    if total > 0 and not initial_areas:
        v.append("population requested but no initial spawn areas defined")
    if (total > 0 or any(sp.rate for sp in env.spawn_areas)) and not env.goal_areas:
        v.append("agents require at least one goal area")

    if not 0 <= s.conditions.time_of_day < 1440:
        v.append("time_of_day must be in [0, 1440)")
    if s.conditions.weather not in WEATHER_TAGS:
        v.append(f"weather must be one of {WEATHER_TAGS}")

    for i, a in enumerate(s.anomalies):
        label = f"anomaly[{i}] ({a.kind})"
        if not (0 <= a.from_tick <= a.to_tick <= s.duration):
            v.append(f"{label}: activation window outside scenario duration")
        if a.kind == "runner" and a.parameters.get("speed_multiplier", 0) <= 0:
            v.append(f"{label}: speed_multiplier must be > 0")
        if a.kind == "loiterer" and a.parameters.get("dwell", -1) < 0:
            v.append(f"{label}: dwell must be >= 0")
        if a.kind == "forbidden_zone_entry" and a.zone is None:
            v.append(f"{label}: requires exactly one zone polygon")

    for cam in s.cameras:
        if cam.focal[0] <= 0 or cam.focal[1] <= 0:
            v.append(f"camera {cam.id}: focal lengths must be positive")
        if cam.resolution[0] < 1 or cam.resolution[1] < 1:
            v.append(f"camera {cam.id}: resolution must be positive")
        if abs(cam.distortion[0]) > 1 or abs(cam.distortion[1]) > 1:
            v.append(f"camera {cam.id}: |k1|, |k2| must be <= 1")

    if s.behavior.cutoff <= 0:
        v.append("behavior.cutoff must be > 0")
    if s.behavior.grid_cell <= 0:
        v.append("behavior.grid_cell must be > 0")
    if s.behavior.tau <= 0:
        v.append("behavior.tau must be > 0")

    if reachability and env.walkable and env.spawn_areas and env.goal_areas:
        v.extend(_reachability_violations(env))

    return ValidationReport(violations=v)


def _reachability_violations(env: EnvironmentMap) -> list:
    """Flood-fill the free-space grid; every goal must be reachable from
    every spawn area."""
    xs = [geometry.polygon_bounds(p) for p in env.walkable]
    x0 = min(b[0] for b in xs)
    y0 = min(b[1] for b in xs)
    x1 = max(b[2] for b in xs)
    y1 = max(b[3] for b in xs)
    span = max(x1 - x0, y1 - y0)
    cell = max(0.25, span / 400.0)
    nx = max(1, int(math.ceil((x1 - x0) / cell)))
    ny = max(1, int(math.ceil((y1 - y0) / cell)))
    free = np.zeros((ny, nx), dtype=bool)
    for iy in range(ny):
        for ix in range(nx):
            cx = x0 + (ix + 0.5) * cell
            cy = y0 + (iy + 0.5) * cell
            p = (cx, cy)
            if not any(geometry.point_in_polygon(p, w) for w in env.walkable):
                continue
            if any(geometry.point_in_polygon(p, o) for o in env.obstacles):
                continue
            free[iy, ix] = True

    def cells_of(poly):
        out = set()
        bx0, by0, bx1, by1 = geometry.polygon_bounds(poly)
        for iy in range(max(0, int((by0 - y0) / cell)), min(ny, int((by1 - y0) / cell) + 1)):
            for ix in range(max(0, int((bx0 - x0) / cell)), min(nx, int((bx1 - x0) / cell) + 1)):
                if free[iy, ix] and geometry.point_in_polygon(
                        (x0 + (ix + 0.5) * cell, y0 + (iy + 0.5) * cell), poly):
                    out.add((iy, ix))
        return out

    violations = []
    goal_cells = [(g.name, cells_of(g.polygon)) for g in env.goal_areas]
    for si, sp in enumerate(env.spawn_areas):
        seeds = cells_of(sp.polygon)
        if not seeds:
            violations.append(f"spawn[{si}] has no free reachability cells")
            continue
        seen = set(seeds)
        queue = deque(seeds)
        while queue:
            iy, ix = queue.popleft()
            for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                jy, jx = iy + dy, ix + dx
                if 0 <= jy < ny and 0 <= jx < nx and free[jy, jx] and (jy, jx) not in seen:
                    seen.add((jy, jx))
                    queue.append((jy, jx))
        for name, gcells in goal_cells:
            if gcells and not (gcells & seen):
                violations.append(f"goal '{name}' unreachable from spawn[{si}]")
    return violations


# ---------------------------------------------------------------------------
# population sampling

def _apportion(total: int, weights: list) -> list:
    """Largest-remainder apportionment, deterministic."""
    wsum = sum(weights)
    if wsum <= 0:
        weights = [1.0] * len(weights)
        wsum = float(len(weights))
    raw = [total * w / wsum for w in weights]
    counts = [int(math.floor(r)) for r in raw]
    short = total - sum(counts)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in range(short):
        counts[order[i]] += 1
    return counts


class _PlacementIndex:
    """Hash grid over already-placed points; O(1) min-spacing checks."""

    def __init__(self, spacing: float):
        self.spacing = spacing
        self.cells = {}

    def _cell(self, p):
        return (int(math.floor(p[0] / self.spacing)),
                int(math.floor(p[1] / self.spacing)))

    def too_close(self, p) -> bool:
        cx, cy = self._cell(p)
        r2 = self.spacing ** 2
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for q in self.cells.get((gx, gy), ()):
                    if (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 < r2:
                        return True
        return False

    def add(self, p) -> None:
        self.cells.setdefault(self._cell(p), []).append((float(p[0]), float(p[1])))


def _place_agent(polygon, obstacles, index: _PlacementIndex, rng, tries=400):
    x0, y0, x1, y1 = geometry.polygon_bounds(polygon)
    for _ in range(tries):
        p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
        if not geometry.point_in_polygon(p, polygon):
            continue
        if any(geometry.point_in_polygon(p, o) for o in obstacles):
            continue
        if not index.too_close(p):
            return p
    return None


def sample_population(s: Scenario, rng: np.random.Generator) -> AgentSet:
    """Draw the initial crowd: placement, per-agent parameters, goals,
    anomaly tags. Equal seeds give bitwise-equal agent sets."""
    env = s.map
    total = s.population.resolved_count()
    initial = [(i, sp) for i, sp in enumerate(env.spawn_areas) if sp.rate is None]
    agents = AgentSet(capacity=max(total, 16))
    if total == 0 or not initial:
        return agents

    explicit = sum(sp.count for _, sp in initial if sp.count is not None)
    flexible = [(i, sp) for i, sp in initial if sp.count is None]
    remaining = max(0, total - explicit)
    flex_counts = _apportion(remaining, [geometry.polygon_area(sp.polygon)
                                         for _, sp in flexible]) if flexible else []
    plan = []
    flex_iter = iter(flex_counts)
    for i, sp in initial:
        n = sp.count if sp.count is not None else next(flex_iter)
        plan.append((i, sp, n))

    goals = env.goal_areas
    index = _PlacementIndex(MIN_SPAWN_SPACING)
    agent_index = 0
    for area_index, sp, n in plan:
        for _ in range(n):
            p = _place_agent(sp.polygon, env.obstacles, index, rng)
            if p is None:
                raise ScenarioError(
                    f"spawn[{area_index}] too small to place {n} agents "
                    f"without overlap")
            index.add(p)
            v0 = s.population.preferred_speed.sample(rng)
            radius = s.population.social_space.sample(rng)
            height = s.population.body_height.sample(rng)
            gi = agent_index % len(goals)
            goal_pt = geometry.random_point_in_polygon(goals[gi].polygon, rng)
            agents.add(position=p, velocity=(0.0, 0.0), v0=v0,
                       tau=s.behavior.tau, radius=radius, goal=goal_pt,
                       goal_area=gi, height=height, spawn_tick=0)
            agent_index += 1

    frac = s.population.anomaly_fraction
    if frac > 0 and s.anomalies:
        k = int(round(frac * len(agents)))
        k = min(k, len(agents))
        if k > 0:
            picked = np.sort(rng.choice(len(agents), size=k, replace=False))
            for slot, row in enumerate(picked):
                spec_index = slot % len(s.anomalies)
                spec = s.anomalies[spec_index]
                param = 0.0
                if spec.kind == "runner":
                    param = spec.parameters["speed_multiplier"]
                elif spec.kind == "loiterer":
                    param = spec.parameters["dwell"]
                agents.set_anomaly(int(row), spec.kind_code(), spec_index,
                                   spec.from_tick, spec.to_tick, param)
    return agents
