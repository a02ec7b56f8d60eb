"""World state and the tick pipeline.

One step advances every active agent under the social-forces sum
(goal-driving + neighbor repulsion + obstacle repulsion, with anomaly
overrides), integrates semi-implicit Euler with the hard speed cap, projects
penetrating agents out of obstacles, advances gait phase, handles goal
arrival and rate-based spawning, and appends the per-tick logs. All
per-agent iteration is in ascending id order, so results are independent of
any parallel schedule and bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry, kernels
from .agents import (
    ANOMALY_COUNTERFLOW,
    ANOMALY_FORBIDDEN,
    ANOMALY_KIND_NAMES,
    ANOMALY_LOITERER,
    ANOMALY_NONE,
    ANOMALY_RUNNER,
)
from .scenario import (
    GOAL_TOLERANCE,
    MIN_SPAWN_SPACING,
    SPEED_MAX_FACTOR,
    STRIDE_FACTOR,
    Scenario,
    sample_population,
)

TWO_PI = 2.0 * math.pi


@dataclass
class SimClock:
    tick: int
    dt: float


class SpatialGrid:
    """Uniform hash over agent positions; rebuilt every tick.

    Cells are floor(position / cell_size) relative to the tick's bounding
    box origin; `cells` exposes the mapping for inspection.
    """

    def __init__(self, positions: np.ndarray, ids: np.ndarray, cell_size: float):
        self.cell_size = cell_size
        self.ids = ids
        self.positions = positions
        m = positions.shape[0]
        if m == 0:
            self.origin = (0.0, 0.0)
            self.nx = self.ny = 1
            self.cell_start = np.zeros(2, dtype=np.int64)
            self.order = np.zeros(0, dtype=np.int64)
            return
        ox = float(positions[:, 0].min()) - 1e-9
        oy = float(positions[:, 1].min()) - 1e-9
        self.origin = (ox, oy)
        self.nx = max(1, int((float(positions[:, 0].max()) - ox) / cell_size) + 1)
        self.ny = max(1, int((float(positions[:, 1].max()) - oy) / cell_size) + 1)
        self.cell_start, self.order = kernels.grid_build(
            positions, ox, oy, cell_size, self.nx, self.ny)

    @property
    def cells(self) -> dict:
        """Cell coordinate -> list of agent ids (ascending)."""
        out = {}
        for c in range(self.nx * self.ny):
            lo, hi = self.cell_start[c], self.cell_start[c + 1]
            if hi > lo:
                coord = (c % self.nx, c // self.nx)
                out[coord] = [int(self.ids[r]) for r in self.order[lo:hi]]
        return out

    def neighbors_within(self, point, radius: float) -> list:
        """Exactly the agent ids with |position - point| <= radius, ascending."""
        if self.order.shape[0] == 0:
            return []
        px, py = float(point[0]), float(point[1])
        # exact cell range of the query disc (query may lie outside the grid)
        gx0 = max(0, int(math.floor((px - radius - self.origin[0]) / self.cell_size)))
        gx1 = min(self.nx - 1, int(math.floor((px + radius - self.origin[0]) / self.cell_size)))
        gy0 = max(0, int(math.floor((py - radius - self.origin[1]) / self.cell_size)))
        gy1 = min(self.ny - 1, int(math.floor((py + radius - self.origin[1]) / self.cell_size)))
        found = []
        r2 = radius * radius
        for gy in range(gy0, gy1 + 1):
            for gx in range(gx0, gx1 + 1):
                c = gy * self.nx + gx
                for k in range(self.cell_start[c], self.cell_start[c + 1]):
                    row = self.order[k]
                    dx = self.positions[row, 0] - px
                    dy = self.positions[row, 1] - py
                    if dx * dx + dy * dy <= r2:
                        found.append(int(self.ids[row]))
        found.sort()
        return found


def _obstacle_arrays(obstacles: list) -> tuple:
    """Flatten polygons into the CSR edge soup the kernels consume."""
    nedges = sum(p.shape[0] for p in obstacles)
    edges = np.zeros((nedges, 4), dtype=np.float64)
    estart = np.zeros(len(obstacles) + 1, dtype=np.int64)
    bbox = np.zeros((len(obstacles), 4), dtype=np.float64)
    k = 0
    for pi, poly in enumerate(obstacles):
        n = poly.shape[0]
        for i in range(n):
            x1, y1 = poly[i]
            x2, y2 = poly[(i + 1) % n]
            edges[k] = (x1, y1, x2, y2)
            k += 1
        estart[pi + 1] = k
        bbox[pi] = (poly[:, 0].min(), poly[:, 1].min(),
                    poly[:, 0].max(), poly[:, 1].max())
    return edges, estart, bbox


class WorldState:
    """Owns the crowd, the map runtime state, and the append-only logs."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.params = scenario.behavior
        self.clock = SimClock(tick=0, dt=scenario.dt)
        ss = np.random.SeedSequence(scenario.seed)
        sample_seed, runtime_seed = ss.spawn(2)
        self.rng = np.random.Generator(np.random.PCG64(runtime_seed))
        self.agents = sample_population(
            scenario, np.random.Generator(np.random.PCG64(sample_seed)))
        # runtime copies of map state (env updates mutate these)
        self.obstacles = [p.copy() for p in scenario.map.obstacles]
        self.spawn_open = [True] * len(scenario.map.spawn_areas)
        self.spawn_emitted = [0] * len(scenario.map.spawn_areas)
        self.spawn_paused_ticks = [0] * len(scenario.map.spawn_areas)
        self.goal_polygons = [g.polygon.copy() for g in scenario.map.goal_areas]
        self._rebuild_obstacles()
        self.trajectory = []     # per tick: dict(tick, ids, pos, vel, flags)
        self.events = []
        self.grid = None
        self._goal_rr = len(self.agents)
        self.flow_axis = self._dominant_flow_axis()
        self._anomaly_was_active = np.zeros(len(self.agents), dtype=bool)
        for row in range(len(self.agents)):
            self._log_event(0, "spawn", int(self.agents.ids[row]))

    # -- setup helpers ----------------------------------------------------

    def _rebuild_obstacles(self) -> None:
        self.obs_edges, self.obs_start, self.obs_bbox = _obstacle_arrays(self.obstacles)

    def _dominant_flow_axis(self) -> np.ndarray:
        a = self.agents
        n = a.size
        if n == 0:
            return np.array([1.0, 0.0])
        d = a.goal[:n] - a.position[:n]
        norms = np.sqrt((d * d).sum(axis=1))
        norms[norms < 1e-12] = 1.0
        mean = (d / norms[:, None]).mean(axis=0)
        m = math.sqrt(mean[0] ** 2 + mean[1] ** 2)
        if m < 1e-9:
            return np.array([1.0, 0.0])
        return mean / m

    def _log_event(self, tick: int, kind: str, agent_id: int, **extra) -> None:
        ev = {"tick": tick, "kind": kind, "agent_id": agent_id}
        ev.update(extra)
        self.events.append(ev)

    # -- anomaly handling --------------------------------------------------

    def _anomaly_active_mask(self, tick: int) -> np.ndarray:
        a = self.agents
        n = a.size
        mask = (a.anomaly_kind[:n] != ANOMALY_NONE)
        mask &= (a.anomaly_from[:n] <= tick) & (tick <= a.anomaly_to[:n])
        mask &= a.active[:n]
        return mask

    def _apply_anomaly_transitions(self, tick: int) -> np.ndarray:
        """Activate/deactivate anomalies for the step producing `tick`.

        Returns the per-row effective v0 array for this step.
        """
        a = self.agents
        n = a.size
        active_now = self._anomaly_active_mask(tick)
        was = self._anomaly_was_active
        if was.shape[0] < n:
            grown = np.zeros(n, dtype=bool)
            grown[:was.shape[0]] = was
            was = grown
        started = np.flatnonzero(active_now & ~was[:n])
        ended = np.flatnonzero(~active_now & was[:n] & a.active[:n])
        for row in started:
            kind = int(a.anomaly_kind[row])
            self._log_event(tick, "anomaly_start", int(a.ids[row]),
                            anomaly=ANOMALY_KIND_NAMES[kind])
            if kind == ANOMALY_COUNTERFLOW:
                a.saved_goal[row] = a.goal[row]
                rel = a.goal[row] - a.position[row]
                d = self.flow_axis
                along = rel[0] * d[0] + rel[1] * d[1]
                a.goal[row] = a.position[row] + rel - 2.0 * along * d
            elif kind == ANOMALY_FORBIDDEN:
                a.saved_goal[row] = a.goal[row]
                spec = self.scenario.anomalies[int(a.anomaly_spec[row])]
                a.goal[row] = geometry.polygon_centroid(spec.zone)
        for row in ended:
            kind = int(a.anomaly_kind[row])
            self._log_event(tick, "anomaly_end", int(a.ids[row]),
                            anomaly=ANOMALY_KIND_NAMES[kind])
            if kind in (ANOMALY_COUNTERFLOW, ANOMALY_FORBIDDEN):
                a.goal[row] = a.saved_goal[row]
        self._anomaly_was_active = np.zeros(n, dtype=bool)
        self._anomaly_was_active[:n] = active_now

        v0_eff = a.v0[:n].copy()
        runner = active_now & (a.anomaly_kind[:n] == ANOMALY_RUNNER)
        v0_eff[runner] = v0_eff[runner] * a.anomaly_param[:n][runner]
        loiter = active_now & (a.anomaly_kind[:n] == ANOMALY_LOITERER)
        if loiter.any():
            dwell_ticks = np.rint(a.anomaly_param[:n] * self.scenario.tick_rate).astype(np.int64)
            still = loiter & (tick <= a.anomaly_from[:n] + dwell_ticks)
            v0_eff[still] = 0.0
        return v0_eff

    # -- spawning ----------------------------------------------------------

    def _emit_rate_spawns(self, tick: int) -> list:
        """Rate-area emissions for this step; returns new row indices."""
        s = self.scenario
        new_rows = []
        for i, sp in enumerate(s.map.spawn_areas):
            if sp.rate is None:
                continue
            if not self.spawn_open[i]:
                self.spawn_paused_ticks[i] += 1
                continue
            # drift-free: emitted count tracks floor(rate * open_time)
            open_ticks = self.clock.tick + 1 - self.spawn_paused_ticks[i]
            target = int(sp.rate * open_ticks * self.clock.dt + 1e-9)
            k = target - self.spawn_emitted[i]
            if k <= 0:
                continue
            self.spawn_emitted[i] += k
            for _ in range(k):
                taken = self.agents.position[: self.agents.size][
                    self.agents.active[: self.agents.size]]
                p = self._place_runtime(sp.polygon, taken)
                if p is None:
                    self._log_event(tick, "spawn_failed", -1, spawn_area=i)
                    continue
                v0 = s.population.preferred_speed.sample(self.rng)
                radius = s.population.social_space.sample(self.rng)
                height = s.population.body_height.sample(self.rng)
                gi = self._goal_rr % len(self.goal_polygons)
                self._goal_rr += 1
                goal_pt = geometry.random_point_in_polygon(
                    self.goal_polygons[gi], self.rng)
                row = self.agents.add(position=p, velocity=(0.0, 0.0), v0=v0,
                                      tau=s.behavior.tau, radius=radius,
                                      goal=goal_pt, goal_area=gi, height=height,
                                      spawn_tick=tick)
                if (s.population.anomaly_fraction > 0 and s.anomalies
                        and self.rng.random() < s.population.anomaly_fraction):
                    spec_index = row % len(s.anomalies)
                    spec = s.anomalies[spec_index]
                    param = spec.parameters.get("speed_multiplier",
                                                spec.parameters.get("dwell", 0.0))
                    self.agents.set_anomaly(row, spec.kind_code(), spec_index,
                                            spec.from_tick, spec.to_tick, param)
                self._log_event(tick, "spawn", int(self.agents.ids[row]))
                new_rows.append(row)
        return new_rows

    def _place_runtime(self, polygon, taken, tries: int = 200):
        x0, y0, x1, y1 = geometry.polygon_bounds(polygon)
        for _ in range(tries):
            p = np.array([self.rng.uniform(x0, x1), self.rng.uniform(y0, y1)])
            if not geometry.point_in_polygon(p, polygon):
                continue
            if any(geometry.point_in_polygon(p, o) for o in self.obstacles):
                continue
            if taken.shape[0]:
                d2 = ((taken - p) ** 2).sum(axis=1)
                if float(d2.min()) < MIN_SPAWN_SPACING ** 2:
                    continue
            return p
        return None

    # -- the tick ----------------------------------------------------------

    def step(self) -> None:
        """Advance the world by exactly one tick."""
        a = self.agents
        tick_next = self.clock.tick + 1

        self._emit_rate_spawns(self.clock.tick)
        v0_eff_full = self._apply_anomaly_transitions(tick_next)

        rows = a.active_rows()
        m = rows.shape[0]
        if m:
            pos = a.position[rows].copy()
            vel = a.velocity[rows].copy()
            v0 = a.v0[rows].copy()
            v0_eff = v0_eff_full[rows].copy()
            tau = a.tau[rows].copy()
            radius = a.radius[rows].copy()
            goal = a.goal[rows].copy()

            grid = SpatialGrid(pos, a.ids[rows], self.params.grid_cell)
            acc = np.empty((m, 2), dtype=np.float64)
            kernels.accel_grid(
                pos, vel, v0_eff, tau, radius, goal,
                grid.cell_start, grid.order, pos[grid.order],
                grid.origin[0], grid.origin[1], grid.cell_size,
                grid.nx, grid.ny,
                self.obs_edges, self.obs_start, self.obs_bbox,
                self.params.a_ped, self.params.b_ped,
                self.params.a_obs, self.params.b_obs,
                self.params.cutoff, self.params.fov_lambda, acc)

            before = pos.copy()
            kernels.integrate(pos, vel, acc, v0_eff, self.clock.dt, SPEED_MAX_FACTOR)
            kernels.project_out(pos, self.obs_edges, self.obs_start, self.obs_bbox)

            disp = np.sqrt(((pos - before) ** 2).sum(axis=1))
            stride = STRIDE_FACTOR * a.height[rows]
            phase = a.gait_phase[rows] + TWO_PI * disp / stride
            phase = np.mod(phase, TWO_PI)

            a.position[rows] = pos
            a.velocity[rows] = vel
            a.gait_phase[rows] = phase
            self.grid = grid

            # goal arrival: despawn or re-goal, ascending id
            d2goal = ((pos - a.goal[rows]) ** 2).sum(axis=1)
            arrived = rows[d2goal <= GOAL_TOLERANCE ** 2]
            for row in arrived:
                self._log_event(tick_next, "goal_reached", int(a.ids[row]))
                if self.params.loop and self.goal_polygons:
                    gi = (int(a.goal_area[row]) + 1) % len(self.goal_polygons)
                    a.goal_area[row] = gi
                    a.goal[row] = geometry.random_point_in_polygon(
                        self.goal_polygons[gi], self.rng)
                    a.saved_goal[row] = a.goal[row]
                else:
                    a.active[row] = False
                    a.velocity[row] = 0.0
                    self._log_event(tick_next, "despawn", int(a.ids[row]),
                                    reason="goal")

        self.clock.tick = tick_next
        flags = self._anomaly_active_mask(tick_next)
        self.trajectory.append({
            "tick": tick_next,
            "ids": a.ids[rows].copy(),
            "pos": a.position[rows].copy(),
            "vel": a.velocity[rows].copy(),
            "flags": flags[rows].copy(),
        })

    def run(self, ticks: int = None) -> None:
        """Step until the scenario duration (or the given tick count)."""
        end = self.scenario.duration if ticks is None else self.clock.tick + ticks
        while self.clock.tick < end:
            self.step()

    # -- environment updates (the protocol applies these between ticks) ----

    def add_obstacle(self, polygon: np.ndarray) -> int:
        poly = geometry.as_polygon(polygon)
        self.obstacles.append(poly)
        self._rebuild_obstacles()
        # agents caught inside are projected to just outside the boundary
        a = self.agents
        rows = a.active_rows()
        if rows.shape[0]:
            pos = a.position[rows].copy()
            kernels.project_out(pos, self.obs_edges, self.obs_start, self.obs_bbox)
            a.position[rows] = pos
        self._log_event(self.clock.tick, "env_update", -1, op="add_obstacle",
                        index=len(self.obstacles) - 1)
        return len(self.obstacles) - 1

    def remove_obstacle(self, index: int) -> None:
        if not 0 <= index < len(self.obstacles):
            raise KeyError(f"unknown obstacle id {index}")
        self.obstacles.pop(index)
        self._rebuild_obstacles()
        self._log_event(self.clock.tick, "env_update", -1, op="remove_obstacle",
                        index=index)

    def set_spawn_open(self, index: int, open_: bool) -> None:
        if not 0 <= index < len(self.spawn_open):
            raise KeyError(f"unknown spawn area id {index}")
        self.spawn_open[index] = open_
        self._log_event(self.clock.tick, "env_update", -1,
                        op="open_spawn" if open_ else "close_spawn", index=index)

    def retarget_goal(self, index: int, polygon: np.ndarray) -> None:
        if not 0 <= index < len(self.goal_polygons):
            raise KeyError(f"unknown goal area id {index}")
        poly = geometry.as_polygon(polygon)
        self.goal_polygons[index] = poly
        a = self.agents
        n = a.size
        for row in np.flatnonzero(a.active[:n] & (a.goal_area[:n] == index)):
            a.goal[row] = geometry.random_point_in_polygon(poly, self.rng)
            a.saved_goal[row] = a.goal[row]
        self._log_event(self.clock.tick, "env_update", -1, op="retarget_goal",
                        index=index)

    # -- exports -----------------------------------------------------------

    def trajectory_rows(self):
        """Yield (tick, agent_id, x, y, vx, vy, flag) sorted by (tick, id)."""
        for rec in self.trajectory:
            ids = rec["ids"]
            pos = rec["pos"]
            vel = rec["vel"]
            flags = rec["flags"]
            for k in range(ids.shape[0]):
                yield (int(rec["tick"]), int(ids[k]), pos[k, 0], pos[k, 1],
                       vel[k, 0], vel[k, 1], int(flags[k]))

    def snapshot(self, rows: np.ndarray = None) -> dict:
        """Immutable copy of the active agents for annotation/protocol use."""
        a = self.agents
        if rows is None:
            rows = a.active_rows()
        flags = self._anomaly_active_mask(self.clock.tick)
        return {
            "tick": self.clock.tick,
            "ids": a.ids[rows].copy(),
            "pos": a.position[rows].copy(),
            "vel": a.velocity[rows].copy(),
            "goal": a.goal[rows].copy(),
            "height": a.height[rows].copy(),
            "gait": a.gait_phase[rows].copy(),
            "anomaly_kind": a.anomaly_kind[rows].copy(),
            "anomaly_flag": flags[rows].copy(),
        }


def create_world(scenario: Scenario) -> WorldState:
    return WorldState(scenario)


def write_trajectory_csv(world: WorldState, path) -> None:
    """CSV export: tick,agent_id,x,y,vx,vy,anomaly_flag with 6-decimal floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("tick,agent_id,x,y,vx,vy,anomaly_flag\n")
        for tick, aid, x, y, vx, vy, flag in world.trajectory_rows():
            fh.write(f"{tick},{aid},{x:.6f},{y:.6f},{vx:.6f},{vy:.6f},{flag}\n")
