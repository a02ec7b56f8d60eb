"""crowdsim: deterministic social-forces crowd simulation with multi-label
ground-truth export, detection metrics, and a renderer-facing TCP protocol."""

from .agents import Agent, AgentSet
from .annotate import (
    AgentRecord,
    FrameAnnotation,
    annotate_frame,
    annotate_run,
    export_coco,
    export_trajectories,
)
from .forces import driving_force, obstacle_repulsion, pedestrian_repulsion
from .camera import (
    BodyModel,
    CameraModel,
    RenderBuffers,
    pose_skeleton,
    project_point,
    rasterize,
    visibility,
)
from .metrics import Detection, EvalReport, confidence_curve, evaluate, f1_at, iou
from .rle import RleMask, decode_rle, encode_rle
from .scenario import (
    AnomalySpec,
    EnvironmentMap,
    GlobalConditions,
    PopulationSpec,
    Scenario,
    ScenarioError,
    ValidationReport,
    load_scenario,
    parse_scenario,
    sample_population,
    serialize_scenario,
    validate_scenario,
)
from .world import SimClock, SpatialGrid, WorldState, create_world

__version__ = "0.1.0"
