"""Stepping throughput benchmark: numba backend vs interpreted fallback,
and grid neighbor search vs the all-pairs reference.

Usage:
    python benchmarks/bench_step.py [--agents 10000] [--ticks 60]
                                    [--compare-agents 300] [--compare-ticks 5]

The backend comparison re-executes this script in a subprocess with
CROWDSIM_NUMBA=0, since the backend is chosen at import time. The fallback
run uses the smaller --compare-agents size; interpreted loops at 10k agents
would take minutes per tick.
"""

import argparse
import json
import os
import subprocess
import sys
import time

FIELD_TEMPLATE = """
[scenario]
name = bench
seed = 1
tick_rate = 30
duration = 100000
[environment]
walkable = 0,0; {size},0; {size},{size}; 0,{size}
spawn = 5,5; {s1},5; {s1},{s1}; 5,{s1}
goal = far @ {g0},{g0}; {g1},{g0}; {g1},{g1}; {g0},{g1}
[population]
count = {agents}
[behavior]
grid_cell = 4.0
"""


def build_world(agents):
    from crowdsim.scenario import parse_scenario
    from crowdsim.world import WorldState

    # keep density roughly constant: ~0.25 agents / m^2
    size = max(20, int((agents / 0.25) ** 0.5))
    text = FIELD_TEMPLATE.format(size=size, s1=size - 5, g0=size - 10,
                                 g1=size - 2, agents=agents)
    return WorldState(parse_scenario(text))


def measure_step_rate(agents, ticks):
    world = build_world(agents)
    world.step()  # JIT warmup / first-call cost
    t0 = time.perf_counter()
    for _ in range(ticks):
        world.step()
    dt = time.perf_counter() - t0
    return ticks / dt, world


def measure_kernels(world):
    import numpy as np

    from crowdsim import kernels
    from crowdsim.world import SpatialGrid, _obstacle_arrays

    a = world.agents
    rows = a.active_rows()
    pos = a.position[rows].copy()
    vel = a.velocity[rows].copy()
    v0 = a.v0[rows].copy()
    tau = a.tau[rows].copy()
    radius = a.radius[rows].copy()
    goal = a.goal[rows].copy()
    edges, estart, bbox = _obstacle_arrays(world.obstacles)
    grid = SpatialGrid(pos, a.ids[rows], world.params.grid_cell)
    acc = np.empty((pos.shape[0], 2))
    args = (pos, vel, v0, tau, radius, goal, grid.cell_start, grid.order,
            pos[grid.order], grid.origin[0], grid.origin[1], grid.cell_size,
            grid.nx, grid.ny, edges, estart, bbox,
            2.1, 0.3, 10.0, 0.2, 4.0, 0.3, acc)
    kernels.accel_grid(*args)
    t0 = time.perf_counter()
    kernels.accel_grid(*args)
    t_grid = time.perf_counter() - t0
    t0 = time.perf_counter()
    kernels.accel_brute(pos, vel, v0, tau, radius, goal, edges, estart, bbox,
                        2.1, 0.3, 10.0, 0.2, 4.0, 0.3, acc)
    t_brute = time.perf_counter() - t0
    return t_grid, t_brute


def run_child(agents, ticks):
    env = dict(os.environ, CROWDSIM_NUMBA="0")
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--child",
         "--agents", str(agents), "--ticks", str(ticks)],
        capture_output=True, text=True, env=env, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--agents", type=int, default=10000)
    ap.add_argument("--ticks", type=int, default=60)
    ap.add_argument("--compare-agents", type=int, default=300)
    ap.add_argument("--compare-ticks", type=int, default=5)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.child:
        rate, _ = measure_step_rate(args.agents, args.ticks)
        print(json.dumps({"rate": rate}))
        return

    from crowdsim._accel import NUMBA_ENABLED

    backend = "numba" if NUMBA_ENABLED else "interpreted"
    print(f"backend: {backend}")

    rate, world = measure_step_rate(args.agents, args.ticks)
    print(f"step rate @ {args.agents} agents: {rate:.1f} ticks/s")

    t_grid, t_brute = measure_kernels(world)
    print(f"force kernel @ {args.agents} agents: grid {t_grid * 1e3:.1f} ms, "
          f"all-pairs {t_brute * 1e3:.0f} ms ({t_brute / t_grid:.0f}x)")

    if NUMBA_ENABLED:
        small_rate, _ = measure_step_rate(args.compare_agents, args.compare_ticks)
        child = run_child(args.compare_agents, args.compare_ticks)
        print(f"backend comparison @ {args.compare_agents} agents: "
              f"numba {small_rate:.1f} ticks/s, "
              f"interpreted {child['rate']:.2f} ticks/s "
              f"({small_rate / child['rate']:.0f}x speedup)")


if __name__ == "__main__":
    main()
