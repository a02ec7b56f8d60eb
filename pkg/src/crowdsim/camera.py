"""Virtual cameras and the capsule body model they observe.

World frame: XY ground plane, Z up, meters. Camera frame: x right, y down,
z forward (into the scene). Intrinsics follow the usual pinhole + two-term
radial distortion model; rasterization scan-converts each skeleton bone as a
2D thick segment with perspective-scaled radius and resolves overlap with a
nearest-depth z-buffer.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import kernels

NEAR_PLANE = 0.05

JOINT_NAMES = [
    "head", "neck",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "pelvis",
    "left_hip", "right_hip",
    "left_knee", "right_knee",
    "left_ankle", "right_ankle",
]

HEAD, NECK = 0, 1
L_SHOULDER, R_SHOULDER = 2, 3
L_ELBOW, R_ELBOW = 4, 5
L_WRIST, R_WRIST = 6, 7
PELVIS = 8
L_HIP, R_HIP = 9, 10
L_KNEE, R_KNEE = 11, 12
L_ANKLE, R_ANKLE = 13, 14

# (joint, parent) pairs forming a tree rooted at the pelvis, plus the capsule
# radius of the connecting bone as a fraction of body height
BONES = [
    (NECK, PELVIS, 0.085),
    (HEAD, NECK, 0.075),
    (L_SHOULDER, NECK, 0.040),
    (R_SHOULDER, NECK, 0.040),
    (L_ELBOW, L_SHOULDER, 0.032),
    (R_ELBOW, R_SHOULDER, 0.032),
    (L_WRIST, L_ELBOW, 0.028),
    (R_WRIST, R_ELBOW, 0.028),
    (L_HIP, PELVIS, 0.055),
    (R_HIP, PELVIS, 0.055),
    (L_KNEE, L_HIP, 0.055),
    (R_KNEE, R_HIP, 0.055),
    (L_ANKLE, L_KNEE, 0.042),
    (R_ANKLE, R_KNEE, 0.042),
]

# joint heights as fractions of body height (standing template)
_Z = {
    HEAD: 0.955, NECK: 0.870,
    L_SHOULDER: 0.820, R_SHOULDER: 0.820,
    L_ELBOW: 0.630, R_ELBOW: 0.630,
    L_WRIST: 0.440, R_WRIST: 0.440,
    PELVIS: 0.530,
    L_HIP: 0.500, R_HIP: 0.500,
    L_KNEE: 0.275, R_KNEE: 0.275,
    L_ANKLE: 0.040, R_ANKLE: 0.040,
}
_SHOULDER_HALF = 0.110
_HIP_HALF = 0.065
_LEG_SWING = 0.220   # ankle forward reach fraction at full gait
_ARM_SWING = 0.180   # wrist forward reach fraction at full gait
_STAND_SPEED = 0.1
_FULL_GAIT_SPEED = 1.3


@dataclass
class BodyModel:
    """Posed skeleton: 15 world-space joints plus bone capsules."""

    joints: np.ndarray                       # (15, 3) meters
    bones: list                              # (joint, parent, radius_m)


@dataclass
class RenderBuffers:
    """Per-pixel agent ownership and camera-space depth."""

    instance: np.ndarray                     # (h, w) int64, 0 = background
    depth: np.ndarray                        # (h, w) float64, inf = empty
    size: tuple                              # (width, height)


@dataclass
class CameraModel:
    """Positioned pinhole camera with two-term radial distortion."""

    id: int
    position: np.ndarray
    look_at: np.ndarray
    focal: tuple
    resolution: tuple
    principal: tuple = None
    distortion: tuple = (0.0, 0.0)
    rotation: np.ndarray = field(init=False, repr=False)
    translation: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.look_at = np.asarray(self.look_at, dtype=np.float64)
        if self.principal is None:
            self.principal = (self.resolution[0] / 2.0, self.resolution[1] / 2.0)
        fx, fy = self.focal
        if fx <= 0 or fy <= 0:
            raise ValueError("camera focal lengths must be positive")
        if self.resolution[0] < 1 or self.resolution[1] < 1:
            raise ValueError("camera resolution must be positive")
        forward = self.look_at - self.position
        n = np.linalg.norm(forward)
        if n < 1e-9:
            raise ValueError("camera look_at coincides with camera position")
        forward = forward / n
        up = np.array([0.0, 0.0, 1.0])
        right = np.cross(forward, up)
        rn = np.linalg.norm(right)
        if rn < 1e-9:
            # looking straight up/down: pick world +Y as the fallback up
            right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
            rn = np.linalg.norm(right)
        right = right / rn
        down = np.cross(forward, right)
        self.rotation = np.stack([right, down, forward])
        self.translation = -self.rotation @ self.position

    @property
    def focal_scale(self) -> float:
        return (self.focal[0] + self.focal[1]) / 2.0


def project_point(cam: CameraModel, point) -> tuple:
    """World point -> (u, v, depth, visible); behind-near-plane is flagged,
    never returned as NaN pixels."""
    p = np.asarray(point, dtype=np.float64)
    pc = cam.rotation @ p + cam.translation
    z = float(pc[2])
    if z <= NEAR_PLANE:
        return 0.0, 0.0, z, False
    xn = pc[0] / z
    yn = pc[1] / z
    r2 = xn * xn + yn * yn
    k1, k2 = cam.distortion
    scale = 1.0 + k1 * r2 + k2 * r2 * r2
    u = cam.focal[0] * (xn * scale) + cam.principal[0]
    v = cam.focal[1] * (yn * scale) + cam.principal[1]
    return float(u), float(v), z, True


def project_points(cam: CameraModel, points: np.ndarray):
    """Vectorized projection. Returns (uv (n,2), depth (n,), visible (n,))."""
    p = np.asarray(points, dtype=np.float64)
    pc = p @ cam.rotation.T + cam.translation
    z = pc[:, 2]
    visible = z > NEAR_PLANE
    zsafe = np.where(visible, z, 1.0)
    xn = pc[:, 0] / zsafe
    yn = pc[:, 1] / zsafe
    r2 = xn * xn + yn * yn
    k1, k2 = cam.distortion
    scale = 1.0 + k1 * r2 + k2 * r2 * r2
    uv = np.empty((p.shape[0], 2), dtype=np.float64)
    uv[:, 0] = cam.focal[0] * (xn * scale) + cam.principal[0]
    uv[:, 1] = cam.focal[1] * (yn * scale) + cam.principal[1]
    uv[~visible] = 0.0
    return uv, z, visible


def unproject(cam: CameraModel, u: float, v: float, depth: float) -> np.ndarray:
    """Inverse of project_point for zero distortion; used by round-trip checks."""
    xn = (u - cam.principal[0]) / cam.focal[0]
    yn = (v - cam.principal[1]) / cam.focal[1]
    pc = np.array([xn * depth, yn * depth, depth])
    return cam.rotation.T @ (pc - cam.translation)


def _swing(phase: float) -> float:
    """Piecewise-linear gait oscillator: -1 at phase 0, +1 at phase pi.

    Linear segments make the half-cycle values exact, so antiphase mirror
    checks hold bitwise.
    """
    u = phase / math.pi
    if u <= 1.0:
        return 2.0 * u - 1.0
    return 3.0 - 2.0 * u


def pose_skeleton(position, velocity, height: float, gait_phase: float,
                  goal_direction=None) -> BodyModel:
    """Procedural walking pose.

    Pure function of its inputs: heading comes from velocity with
    goal_direction (then +X) as fallback, limbs swing with gait_phase, and
    every offset scales linearly with height. Below 0.1 m/s the neutral
    standing pose is used.
    """
    px, py = float(position[0]), float(position[1])
    vx, vy = float(velocity[0]), float(velocity[1])
    speed = math.sqrt(vx * vx + vy * vy)
    if speed > 1e-9:
        hx, hy = vx / speed, vy / speed
    elif goal_direction is not None and (goal_direction[0] ** 2 + goal_direction[1] ** 2) > 1e-18:
        gn = math.sqrt(goal_direction[0] ** 2 + goal_direction[1] ** 2)
        hx, hy = goal_direction[0] / gn, goal_direction[1] / gn
    else:
        hx, hy = 1.0, 0.0

    amp = 0.0 if speed < _STAND_SPEED else min(1.0, speed / _FULL_GAIT_SPEED)
    s = _swing(gait_phase) * amp

    # local frame: x forward, y left, z up; fractions of height
    fwd = np.zeros(15)
    lat = np.zeros(15)
    ups = np.array([_Z[j] for j in range(15)])
    lat[L_SHOULDER] = _SHOULDER_HALF
    lat[R_SHOULDER] = -_SHOULDER_HALF
    lat[L_ELBOW] = _SHOULDER_HALF
    lat[R_ELBOW] = -_SHOULDER_HALF
    lat[L_WRIST] = _SHOULDER_HALF
    lat[R_WRIST] = -_SHOULDER_HALF
    lat[L_HIP] = _HIP_HALF
    lat[R_HIP] = -_HIP_HALF
    lat[L_KNEE] = _HIP_HALF
    lat[R_KNEE] = -_HIP_HALF
    lat[L_ANKLE] = _HIP_HALF
    lat[R_ANKLE] = -_HIP_HALF
    # legs antiphase; arms counter-phase to the same-side leg
    fwd[L_KNEE] = 0.5 * _LEG_SWING * s
    fwd[L_ANKLE] = _LEG_SWING * s
    fwd[R_KNEE] = -0.5 * _LEG_SWING * s
    fwd[R_ANKLE] = -_LEG_SWING * s
    fwd[L_ELBOW] = -0.5 * _ARM_SWING * s
    fwd[L_WRIST] = -_ARM_SWING * s
    fwd[R_ELBOW] = 0.5 * _ARM_SWING * s
    fwd[R_WRIST] = _ARM_SWING * s

    joints = np.empty((15, 3), dtype=np.float64)
    for j in range(15):
        lx = fwd[j] * height
        ly = lat[j] * height
        joints[j, 0] = px + hx * lx - hy * ly
        joints[j, 1] = py + hy * lx + hx * ly
        joints[j, 2] = ups[j] * height
    bones = [(a, b, r * height) for a, b, r in BONES]
    return BodyModel(joints=joints, bones=bones)


def capsules_for_bodies(cam: CameraModel, bodies: list, owners: list) -> tuple:
    """Project every bone of every body into raster capsule rows.

    Returns (caps (m,8) float64, owner (m,) int64, agent_start (n+1,) int64)
    with bodies in input order. Bones with an endpoint behind the near plane
    are dropped.
    """
    rows = []
    owner_vals = []
    starts = [0]
    fs = cam.focal_scale
    for body, owner in zip(bodies, owners):
        uv, z, vis = project_points(cam, body.joints)
        for a, b, radius in body.bones:
            if not (vis[a] and vis[b]):
                continue
            rows.append((uv[a, 0], uv[a, 1], z[a], uv[b, 0], uv[b, 1], z[b], radius, fs))
            owner_vals.append(owner)
        starts.append(len(rows))
    if rows:
        caps = np.array(rows, dtype=np.float64)
    else:
        caps = np.zeros((0, 8), dtype=np.float64)
    return caps, np.array(owner_vals, dtype=np.int64), np.array(starts, dtype=np.int64)


def rasterize(cam: CameraModel, bodies: list, owners: list = None) -> RenderBuffers:
    """Render bodies into instance/depth buffers (owner value = index + 1)."""
    if owners is None:
        owners = [i + 1 for i in range(len(bodies))]
    w, h = int(cam.resolution[0]), int(cam.resolution[1])
    inst = np.zeros((h, w), dtype=np.int64)
    depth = np.full((h, w), np.inf, dtype=np.float64)
    caps, owner_vals, _ = capsules_for_bodies(cam, bodies, owners)
    if caps.shape[0]:
        kernels.raster_zbuffer(caps, owner_vals, w, h, inst, depth)
    return RenderBuffers(instance=inst, depth=depth, size=(w, h))


def solo_pixel_counts(cam: CameraModel, bodies: list) -> np.ndarray:
    """Unoccluded silhouette pixel count per body (each rendered alone)."""
    w, h = int(cam.resolution[0]), int(cam.resolution[1])
    caps, _, starts = capsules_for_bodies(cam, bodies, [0] * len(bodies))
    out = np.zeros(len(bodies), dtype=np.int64)
    for i in range(len(bodies)):
        sub = caps[starts[i]:starts[i + 1]]
        if sub.shape[0]:
            out[i] = kernels.solo_pixel_count(sub, w, h)
    return out


def visibility(visible_pixels: int, solo_pixels: int) -> float:
    """Fraction of the unoccluded silhouette still visible; 0 when the solo
    silhouette is empty."""
    if solo_pixels <= 0:
        return 0.0
    return visible_pixels / solo_pixels


def visible_pixel_counts(buffers: RenderBuffers, n_owners: int) -> np.ndarray:
    """Pixels owned by each instance value 1..n_owners in the shared render."""
    counts = np.bincount(buffers.instance.ravel(), minlength=n_owners + 1)
    return counts[1:n_owners + 1]


def write_pgm(path, values: np.ndarray) -> None:
    """Dump a float array as an 8-bit binary PGM (debug aid)."""
    finite = np.isfinite(values)
    img = np.zeros(values.shape, dtype=np.uint8)
    if finite.any():
        lo = float(values[finite].min())
        hi = float(values[finite].max())
        span = (hi - lo) or 1.0
        img[finite] = np.clip((values[finite] - lo) / span * 255.0, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (values.shape[1], values.shape[0]))
        fh.write(img.tobytes())


def write_ppm(path, instance: np.ndarray) -> None:
    """Dump an instance buffer as a color PPM, one stable color per id."""
    h, w = instance.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    for owner in np.unique(instance):
        if owner == 0:
            continue
        seed = zlib.crc32(str(int(owner)).encode())
        color = ((seed >> 16) & 0xFF, (seed >> 8) & 0xFF, seed & 0xFF)
        rgb[instance == owner] = np.array(color, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(rgb.tobytes())
