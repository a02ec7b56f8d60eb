"""Per-frame ground truth assembly and dataset export.

Every annotated tick yields one FrameAnnotation per camera: tight boxes,
15-joint 2D/3D keypoints with occlusion flags, full-frame RLE instance
masks, visibility fractions, anomaly tags, and the people count. Exports
follow the COCO layout (one file per camera plus a merged dataset file)
with deterministic ids and float formatting, so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .agents import ANOMALY_KIND_NAMES
from .camera import (
    BONES,
    JOINT_NAMES,
    CameraModel,
    RenderBuffers,
    pose_skeleton,
    project_points,
    rasterize,
    solo_pixel_counts,
    visibility,
    visible_pixel_counts,
    write_pgm,
    write_ppm,
)
from .rle import RleMask
from .world import WorldState, write_trajectory_csv


@dataclass
class AgentRecord:
    agent_id: int
    bbox: tuple                  # (x, y, w, h) pixels, tight around the mask
    joints2d: np.ndarray         # (15, 3): u, v, flag (0 absent/1 occluded/2 visible)
    joints3d: np.ndarray         # (15, 3) world meters
    mask: RleMask
    visibility: float
    anomalies: list


@dataclass
class FrameAnnotation:
    camera_id: int
    tick: int
    records: list
    count: int
    conditions: dict


def pose_bodies(snapshot: dict) -> list:
    """Camera-independent skeletons for every agent in the snapshot."""
    bodies = []
    n = snapshot["ids"].shape[0]
    for k in range(n):
        goal_dir = snapshot["goal"][k] - snapshot["pos"][k]
        bodies.append(pose_skeleton(
            snapshot["pos"][k], snapshot["vel"][k],
            float(snapshot["height"][k]), float(snapshot["gait"][k]),
            goal_direction=goal_dir))
    return bodies


def masks_from_instance(inst: np.ndarray, n_owners: int) -> list:
    """Split an instance buffer into per-owner full-frame RLE masks.

    Single pass over the column-major run decomposition; owner k gets the
    runs where the buffer holds value k+1.
    """
    h, w = inst.shape
    flat = inst.ravel(order="F")
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [flat.size]))
    vals = flat[starts]
    per_owner = [[] for _ in range(n_owners)]
    for s, e, v in zip(starts.tolist(), ends.tolist(), vals.tolist()):
        if v > 0:
            per_owner[v - 1].append((s, e - s))
    masks = []
    total = h * w
    for runs in per_owner:
        counts = []
        cursor = 0
        for s, ln in runs:
            counts.append(s - cursor)
            counts.append(ln)
            cursor = s + ln
        if cursor < total or not counts:
            counts.append(total - cursor)
        masks.append(RleMask(size=(h, w), counts=counts))
    return masks


def _owner_bboxes(inst: np.ndarray, n_owners: int) -> np.ndarray:
    """Tight (x, y, w, h) per owner; w = h = 0 for owners with no pixels."""
    ys, xs = np.nonzero(inst)
    out = np.zeros((n_owners, 4), dtype=np.int64)
    if ys.size == 0:
        return out
    vals = inst[ys, xs]
    minx = np.full(n_owners + 1, inst.shape[1], dtype=np.int64)
    maxx = np.full(n_owners + 1, -1, dtype=np.int64)
    miny = np.full(n_owners + 1, inst.shape[0], dtype=np.int64)
    maxy = np.full(n_owners + 1, -1, dtype=np.int64)
    np.minimum.at(minx, vals, xs)
    np.maximum.at(maxx, vals, xs)
    np.minimum.at(miny, vals, ys)
    np.maximum.at(maxy, vals, ys)
    for k in range(1, n_owners + 1):
        if maxx[k] >= 0:
            out[k - 1] = (minx[k], miny[k], maxx[k] - minx[k] + 1,
                          maxy[k] - miny[k] + 1)
    return out


def annotate_frame(cam: CameraModel, snapshot: dict, buffers: RenderBuffers,
                   solo_counts: np.ndarray, bodies: list = None,
                   visibility_threshold: float = 0.1,
                   conditions: dict = None) -> FrameAnnotation:
    """Build the ground-truth record for one camera and one tick.

    Agents below the visibility threshold are dropped entirely; the count is
    the number of surviving records.
    """
    if bodies is None:
        bodies = pose_bodies(snapshot)
    n = snapshot["ids"].shape[0]
    w, h = buffers.size
    vis_px = visible_pixel_counts(buffers, n)
    masks = masks_from_instance(buffers.instance, n)
    bboxes = _owner_bboxes(buffers.instance, n)

    records = []
    for k in range(n):
        frac = visibility(int(vis_px[k]), int(solo_counts[k]))
        if frac < visibility_threshold:
            continue
        uv, depth, vis3d = project_points(cam, bodies[k].joints)
        joints2d = np.zeros((15, 3), dtype=np.float64)
        owner = k + 1
        for j in range(15):
            if not vis3d[j]:
                continue
            u, v = uv[j, 0], uv[j, 1]
            col, row = int(np.floor(u)), int(np.floor(v))
            if not (0 <= col < w and 0 <= row < h):
                continue
            joints2d[j, 0] = u
            joints2d[j, 1] = v
            joints2d[j, 2] = 2.0 if buffers.instance[row, col] == owner else 1.0
        anomalies = []
        if snapshot["anomaly_flag"][k]:
            anomalies.append(ANOMALY_KIND_NAMES[int(snapshot["anomaly_kind"][k])])
        records.append(AgentRecord(
            agent_id=int(snapshot["ids"][k]),
            bbox=tuple(int(b) for b in bboxes[k]),
            joints2d=joints2d,
            joints3d=bodies[k].joints.copy(),
            mask=masks[k],
            visibility=frac,
            anomalies=anomalies,
        ))
    return FrameAnnotation(
        camera_id=cam.id,
        tick=int(snapshot["tick"]),
        records=records,
        count=len(records),
        conditions=dict(conditions or {}),
    )


def render_and_annotate(cam: CameraModel, snapshot: dict, bodies: list = None,
                        visibility_threshold: float = 0.1,
                        conditions: dict = None) -> FrameAnnotation:
    """Rasterize the snapshot for one camera and annotate it."""
    if bodies is None:
        bodies = pose_bodies(snapshot)
    buffers = rasterize(cam, bodies)
    solo = solo_pixel_counts(cam, bodies)
    return annotate_frame(cam, snapshot, buffers, solo, bodies=bodies,
                          visibility_threshold=visibility_threshold,
                          conditions=conditions)


def annotate_run(world: WorldState, debug_dir=None) -> list:
    """Run the world to its scenario duration, annotating every
    ``annotations.stride``-th tick on every camera."""
    s = world.scenario
    cams = sorted(s.cameras, key=lambda c: c.id)
    conditions = {
        "time_of_day": s.conditions.time_label(),
        "weather": s.conditions.weather,
        "density": s.population.density_label(),
    }
    frames = []
    while world.clock.tick < s.duration:
        world.step()
        if world.clock.tick % s.annotations.stride != 0:
            continue
        snap = world.snapshot()
        bodies = pose_bodies(snap)
        for cam in cams:
            buffers = rasterize(cam, bodies)
            solo = solo_pixel_counts(cam, bodies)
            frames.append(annotate_frame(
                cam, snap, buffers, solo, bodies=bodies,
                visibility_threshold=s.annotations.visibility_threshold,
                conditions=conditions))
            if debug_dir is not None:
                stem = f"{s.name}_cam{cam.id}_{world.clock.tick:06d}"
                write_ppm(f"{debug_dir}/{stem}_instance.ppm", buffers.instance)
                write_pgm(f"{debug_dir}/{stem}_depth.pgm",
                          np.where(np.isfinite(buffers.depth), buffers.depth, 0.0))
    return frames


# ---------------------------------------------------------------------------
# COCO-layout export

CATEGORY = {
    "id": 1,
    "name": "person",
    "keypoints": JOINT_NAMES,
    "skeleton": [[a + 1, b + 1] for a, b, _ in BONES],
}


def _frame_image(frame: FrameAnnotation, scenario, image_id: int, cam: CameraModel) -> dict:
    return {
        "id": image_id,
        "file_name": f"{scenario.name}_cam{frame.camera_id}_{frame.tick:06d}.png",
        "width": int(cam.resolution[0]),
        "height": int(cam.resolution[1]),
        "camera_id": frame.camera_id,
        "tick": frame.tick,
    }


def _record_annotation(rec: AgentRecord, ann_id: int, image_id: int) -> dict:
    kps = []
    for j in range(15):
        kps.extend((round(float(rec.joints2d[j, 0]), 2),
                    round(float(rec.joints2d[j, 1]), 2),
                    int(rec.joints2d[j, 2])))
    head = rec.joints2d[0]
    return {
        "id": ann_id,
        "image_id": image_id,
        "category_id": 1,
        "bbox": [int(v) for v in rec.bbox],
        "area": rec.mask.area(),
        "iscrowd": 0,
        "segmentation": {"size": [int(rec.mask.size[0]), int(rec.mask.size[1])],
                         "counts": [int(c) for c in rec.mask.counts]},
        "keypoints": kps,
        "num_keypoints": int((rec.joints2d[:, 2] > 0).sum()),
        "keypoints_3d": [round(float(v), 4) for v in rec.joints3d.ravel()],
        "agent_id": rec.agent_id,
        "visibility": round(float(rec.visibility), 4),
        "head_point": [round(float(head[0]), 2), round(float(head[1]), 2)],
        "anomalies": list(rec.anomalies),
    }


def coco_dict(frames: list, scenario) -> dict:
    """Assemble the COCO structure for a list of frames (any camera mix)."""
    cams = {c.id: c for c in scenario.cameras}
    ordered = sorted(frames, key=lambda f: (f.camera_id, f.tick))
    images = []
    annotations = []
    ann_id = 1
    for image_id, frame in enumerate(ordered, start=1):
        images.append(_frame_image(frame, scenario, image_id, cams[frame.camera_id]))
        for rec in frame.records:
            annotations.append(_record_annotation(rec, ann_id, image_id))
            ann_id += 1
    info = {
        "description": f"synthetic crowd ground truth '{scenario.name}'",
        "scenario": scenario.name,
        "seed": scenario.seed,
        "tick_rate": scenario.tick_rate,
        "density": scenario.population.density_label(),
        "time_of_day": scenario.conditions.time_label(),
        "weather": scenario.conditions.weather,
        "annotation_stride": scenario.annotations.stride,
    }
    return {
        "info": info,
        "images": images,
        "annotations": annotations,
        "categories": [CATEGORY],
    }


def export_coco(frames: list, scenario, out_dir) -> dict:
    """Write one COCO file per camera plus the merged dataset file.

    Returns {camera_id or 'dataset': path}.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    cam_ids = sorted({f.camera_id for f in frames})
    for cid in cam_ids:
        path = os.path.join(out_dir, f"cam{cid}.json")
        subset = [f for f in frames if f.camera_id == cid]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(coco_dict(subset, scenario), fh, separators=(",", ":"))
        paths[cid] = path
    merged = os.path.join(out_dir, "dataset.json")
    with open(merged, "w", encoding="utf-8") as fh:
        json.dump(coco_dict(frames, scenario), fh, separators=(",", ":"))
    paths["dataset"] = merged
    return paths


def export_trajectories(world: WorldState, path) -> None:
    """Trajectory CSV, rows sorted by (tick, agent_id)."""
    write_trajectory_csv(world, path)
