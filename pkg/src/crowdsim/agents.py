"""Agent storage: a struct-of-arrays pool the simulation kernels run over.

Rows are never reordered; row index order equals ascending agent id order,
which is what makes the fixed force-summation order cheap to enforce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# anomaly kind codes stored per agent
ANOMALY_NONE = 0
ANOMALY_RUNNER = 1
ANOMALY_COUNTERFLOW = 2
ANOMALY_LOITERER = 3
ANOMALY_FORBIDDEN = 4

ANOMALY_KIND_NAMES = {
    ANOMALY_NONE: "none",
    ANOMALY_RUNNER: "runner",
    ANOMALY_COUNTERFLOW: "counterflow",
    ANOMALY_LOITERER: "loiterer",
    ANOMALY_FORBIDDEN: "forbidden_zone_entry",
}
ANOMALY_KIND_CODES = {v: k for k, v in ANOMALY_KIND_NAMES.items()}


@dataclass
class Agent:
    """Read-only row view, for tests and single-agent APIs."""

    id: int
    position: np.ndarray
    velocity: np.ndarray
    v0: float
    tau: float
    social_radius: float
    goal: np.ndarray
    goal_area: int
    height: float
    gait_phase: float
    anomaly_kind: int
    active: bool


class AgentSet:
    """Growable pool of agents backed by parallel numpy arrays."""

    _GROW = 256

    def __init__(self, capacity: int = 0):
        n = max(capacity, self._GROW)
        self.size = 0
        self.ids = np.zeros(n, dtype=np.int64)
        self.position = np.zeros((n, 2), dtype=np.float64)
        self.velocity = np.zeros((n, 2), dtype=np.float64)
        self.v0 = np.zeros(n, dtype=np.float64)
        self.tau = np.zeros(n, dtype=np.float64)
        self.radius = np.zeros(n, dtype=np.float64)
        self.goal = np.zeros((n, 2), dtype=np.float64)
        self.goal_area = np.full(n, -1, dtype=np.int64)
        self.height = np.zeros(n, dtype=np.float64)
        self.gait_phase = np.zeros(n, dtype=np.float64)
        self.active = np.zeros(n, dtype=np.bool_)
        self.spawn_tick = np.zeros(n, dtype=np.int64)
        # anomaly assignment (static) + saved goal for restoring after window
        self.anomaly_kind = np.zeros(n, dtype=np.int64)
        self.anomaly_spec = np.full(n, -1, dtype=np.int64)
        self.anomaly_from = np.zeros(n, dtype=np.int64)
        self.anomaly_to = np.full(n, -1, dtype=np.int64)
        self.anomaly_param = np.zeros(n, dtype=np.float64)
        self.saved_goal = np.zeros((n, 2), dtype=np.float64)

    def __len__(self) -> int:
        return self.size

    @property
    def active_count(self) -> int:
        return int(self.active[: self.size].sum())

    def active_rows(self) -> np.ndarray:
        """Row indices of active agents, ascending (== ascending id)."""
        return np.flatnonzero(self.active[: self.size])

    def _ensure(self, extra: int) -> None:
        need = self.size + extra
        cap = self.ids.shape[0]
        if need <= cap:
            return
        newcap = cap
        while newcap < need:
            newcap = newcap * 2
        for name in (
            "ids", "position", "velocity", "v0", "tau", "radius", "goal",
            "goal_area", "height", "gait_phase", "active", "spawn_tick",
            "anomaly_kind", "anomaly_spec", "anomaly_from", "anomaly_to",
            "anomaly_param", "saved_goal",
        ):
            old = getattr(self, name)
            grown = np.zeros((newcap,) + old.shape[1:], dtype=old.dtype)
            grown[: self.size] = old[: self.size]
            if name == "goal_area":
                grown[self.size:] = -1
            if name in ("anomaly_spec", "anomaly_to"):
                grown[self.size:] = -1
            setattr(self, name, grown)

    def add(self, position, velocity, v0, tau, radius, goal, goal_area,
            height, gait_phase=0.0, spawn_tick=0) -> int:
        """Append one agent; returns its id (== row index)."""
        self._ensure(1)
        i = self.size
        self.ids[i] = i
        self.position[i] = position
        self.velocity[i] = velocity
        self.v0[i] = v0
        self.tau[i] = tau
        self.radius[i] = radius
        self.goal[i] = goal
        self.goal_area[i] = goal_area
        self.height[i] = height
        self.gait_phase[i] = gait_phase
        self.active[i] = True
        self.spawn_tick[i] = spawn_tick
        self.saved_goal[i] = goal
        self.size += 1
        return i

    def set_anomaly(self, row: int, kind: int, spec_index: int,
                    from_tick: int, to_tick: int, param: float) -> None:
        self.anomaly_kind[row] = kind
        self.anomaly_spec[row] = spec_index
        self.anomaly_from[row] = from_tick
        self.anomaly_to[row] = to_tick
        self.anomaly_param[row] = param

    def agent(self, row: int) -> Agent:
        return Agent(
            id=int(self.ids[row]),
            position=self.position[row].copy(),
            velocity=self.velocity[row].copy(),
            v0=float(self.v0[row]),
            tau=float(self.tau[row]),
            social_radius=float(self.radius[row]),
            goal=self.goal[row].copy(),
            goal_area=int(self.goal_area[row]),
            height=float(self.height[row]),
            gait_phase=float(self.gait_phase[row]),
            anomaly_kind=int(self.anomaly_kind[row]),
            active=bool(self.active[row]),
        )

    def state_fingerprint(self) -> bytes:
        """Byte digestible snapshot of the dynamic state, for equality checks."""
        n = self.size
        parts = [
            self.ids[:n].tobytes(), self.position[:n].tobytes(),
            self.velocity[:n].tobytes(), self.gait_phase[:n].tobytes(),
            self.active[:n].tobytes(), self.goal[:n].tobytes(),
        ]
        return b"".join(parts)
