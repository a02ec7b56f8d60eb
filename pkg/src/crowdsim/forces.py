"""Single-agent force terms, exposed on Agent objects.

Thin wrappers over the simulation kernels for inspection, debugging, and
tests; the tick pipeline calls the kernels directly. Results are bitwise
identical to what the stepper computes.
"""

import math

import numpy as np

from .agents import Agent
from .kernels import GOAL_EPS, _driving_force, _heading, _obstacle_force, _pair_repulsion
from .scenario import BehaviorParams
from .world import _obstacle_arrays


def driving_force(agent: Agent, params: BehaviorParams = None) -> np.ndarray:
    """Goal-seeking acceleration (v0*e - v)/tau; zero within the goal
    tolerance epsilon (the stepper raises the goal-reached event instead)."""
    ax, ay = _driving_force(
        agent.position[0], agent.position[1],
        agent.velocity[0], agent.velocity[1],
        agent.goal[0], agent.goal[1], agent.v0, agent.tau)
    return np.array([ax, ay])


def goal_reached(agent: Agent) -> bool:
    dx = agent.goal[0] - agent.position[0]
    dy = agent.goal[1] - agent.position[1]
    return math.sqrt(dx * dx + dy * dy) < GOAL_EPS


def pedestrian_repulsion(agent: Agent, other: Agent,
                         params: BehaviorParams = None) -> np.ndarray:
    """Anisotropically weighted exponential repulsion of `other` on `agent`."""
    p = params or BehaviorParams()
    hx, hy = _heading(agent.velocity[0], agent.velocity[1],
                      agent.position[0], agent.position[1],
                      agent.goal[0], agent.goal[1])
    fx, fy = _pair_repulsion(
        agent.position[0], agent.position[1], hx, hy,
        other.position[0], other.position[1],
        agent.social_radius, other.social_radius,
        agent.id, other.id, p.a_ped, p.b_ped, p.fov_lambda)
    return np.array([fx, fy])


def obstacle_repulsion(agent: Agent, obstacles: list,
                       params: BehaviorParams = None) -> np.ndarray:
    """Summed repulsion from every obstacle polygon within the cutoff."""
    p = params or BehaviorParams()
    edges, estart, bbox = _obstacle_arrays(list(obstacles))
    fx, fy = _obstacle_force(
        agent.position[0], agent.position[1], agent.social_radius,
        edges, estart, bbox, p.cutoff, p.a_obs, p.b_obs)
    return np.array([fx, fy])
