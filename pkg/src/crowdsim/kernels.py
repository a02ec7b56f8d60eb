"""Hot inner loops: neighbor grid, force accumulation, integration, raster.

Everything here is written as scalar loops over float64 arrays using
``math.*`` functions only. That keeps results bitwise identical between the
numba-compiled and interpreted backends, and lets the grid-accelerated force
path reproduce the all-pairs reference sum exactly (same pair set, same
ascending-index accumulation order, same scalar operations).

Obstacle geometry arrives as a CSR edge soup: ``edges`` is (E, 4) rows of
``x1, y1, x2, y2``, ``estart`` holds per-polygon offsets, ``bbox`` is (P, 4)
``xmin, ymin, xmax, ymax``. Polygons are CCW so the outward normal of edge
(a, b) is (dy, -dx) normalized.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import maybe_njit

GOAL_EPS = 1e-6
COINCIDENT_EPS = 1e-6
BOUNDARY_EPS = 1e-9
PROJECT_EPS = 1e-6


@maybe_njit
def grid_build(pos, ox, oy, cell, nx, ny):
    """Counting-sort agents into a dense cell grid.

    Returns (cell_start, order): order holds row indices grouped by cell,
    ascending within each cell; cell_start is the (nx*ny+1,) CSR offsets.
    """
    m = pos.shape[0]
    ncell = nx * ny
    cell_id = np.empty(m, np.int64)
    for i in range(m):
        cx = int((pos[i, 0] - ox) / cell)
        cy = int((pos[i, 1] - oy) / cell)
        if cx < 0:
            cx = 0
        elif cx >= nx:
            cx = nx - 1
        if cy < 0:
            cy = 0
        elif cy >= ny:
            cy = ny - 1
        cell_id[i] = cy * nx + cx
    start = np.zeros(ncell + 1, np.int64)
    for i in range(m):
        start[cell_id[i] + 1] += 1
    for c in range(ncell):
        start[c + 1] += start[c]
    order = np.empty(m, np.int64)
    fill = start[:ncell].copy()
    for i in range(m):
        c = cell_id[i]
        order[fill[c]] = i
        fill[c] += 1
    return start, order


@maybe_njit
def _pair_repulsion(px, py, hx, hy, qx, qy, ra, rb, ii, jj, a_ped, b_ped, lam):
    """Exponential social repulsion of agent j on agent i, with field-of-view
    weighting. (hx, hy) is i's heading unit vector."""
    dx = px - qx
    dy = py - qy
    d = math.sqrt(dx * dx + dy * dy)
    rab = ra + rb
    if d < COINCIDENT_EPS:
        # coincident agents: direction from id order, magnitude at contact
        nx_ = 1.0 if ii < jj else -1.0
        ny_ = 0.0
        mag = a_ped * math.exp(rab / b_ped)
    else:
        nx_ = dx / d
        ny_ = dy / d
        mag = a_ped * math.exp((rab - d) / b_ped)
    # cos(phi) between heading and the direction i -> j (= -n)
    c = -(hx * nx_ + hy * ny_)
    w = lam + (1.0 - lam) * 0.5 * (1.0 + c)
    return mag * w * nx_, mag * w * ny_


@maybe_njit
def _driving_force(px, py, vx, vy, gx, gy, v0, tau):
    dx = gx - px
    dy = gy - py
    d = math.sqrt(dx * dx + dy * dy)
    if d < GOAL_EPS:
        return 0.0, 0.0
    ex = dx / d
    ey = dy / d
    return (v0 * ex - vx) / tau, (v0 * ey - vy) / tau


@maybe_njit
def _heading(vx, vy, px, py, gx, gy):
    s = math.sqrt(vx * vx + vy * vy)
    if s > 1e-9:
        return vx / s, vy / s
    dx = gx - px
    dy = gy - py
    d = math.sqrt(dx * dx + dy * dy)
    if d > 1e-9:
        return dx / d, dy / d
    return 1.0, 0.0


@maybe_njit
def _obstacle_force(px, py, radius_a, edges, estart, bbox, cutoff, a_obs, b_obs):
    fx = 0.0
    fy = 0.0
    npoly = estart.shape[0] - 1
    for p in range(npoly):
        if (px < bbox[p, 0] - cutoff or px > bbox[p, 2] + cutoff
                or py < bbox[p, 1] - cutoff or py > bbox[p, 3] + cutoff):
            continue
        inside = False
        best_d2 = 1e300
        bqx = 0.0
        bqy = 0.0
        nearest = -1
        for e in range(estart[p], estart[p + 1]):
            x1 = edges[e, 0]
            y1 = edges[e, 1]
            x2 = edges[e, 2]
            y2 = edges[e, 3]
            if (y1 > py) != (y2 > py):
                xin = (x2 - x1) * (py - y1) / (y2 - y1) + x1
                if px < xin:
                    inside = not inside
            sx = x2 - x1
            sy = y2 - y1
            seg2 = sx * sx + sy * sy
            if seg2 > 0.0:
                t = ((px - x1) * sx + (py - y1) * sy) / seg2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                cx = x1 + t * sx
                cy = y1 + t * sy
            else:
                cx = x1
                cy = y1
            dx = px - cx
            dy = py - cy
            d2 = dx * dx + dy * dy
            if d2 < best_d2:
                best_d2 = d2
                bqx = cx
                bqy = cy
                nearest = e
        d = math.sqrt(best_d2)
        sd = -d if inside else d
        if sd > cutoff:
            continue
        mag = a_obs * math.exp((radius_a - sd) / b_obs)
        if d < BOUNDARY_EPS:
            # on the boundary: use the outward normal of the nearest edge
            ex = edges[nearest, 2] - edges[nearest, 0]
            ey = edges[nearest, 3] - edges[nearest, 1]
            n = math.sqrt(ex * ex + ey * ey)
            ux = ey / n
            uy = -ex / n
        elif inside:
            ux = (bqx - px) / d
            uy = (bqy - py) / d
        else:
            ux = (px - bqx) / d
            uy = (py - bqy) / d
        fx += mag * ux
        fy += mag * uy
    return fx, fy


@maybe_njit
def accel_grid(pos, vel, v0, tau, radius, goal, cell_start, order, posg,
               ox, oy, cell, nx, ny, edges, estart, bbox,
               a_ped, b_ped, a_obs, b_obs, cutoff, lam, acc):
    """Per-agent acceleration using the cell grid for neighbor lookup.

    Arrays are compacted over active agents in ascending id order; posg
    holds positions permuted into grid order for contiguous scanning. The
    neighbor sum runs over ascending compacted index, matching accel_brute.
    """
    m = pos.shape[0]
    cut2 = cutoff * cutoff
    reach = int(math.ceil(cutoff / cell))
    cand = np.empty(m, np.int64)
    for i in range(m):
        px = pos[i, 0]
        py = pos[i, 1]
        ax, ay = _driving_force(px, py, vel[i, 0], vel[i, 1],
                                goal[i, 0], goal[i, 1], v0[i], tau[i])
        hx, hy = _heading(vel[i, 0], vel[i, 1], px, py, goal[i, 0], goal[i, 1])
        cx = int((px - ox) / cell)
        cy = int((py - oy) / cell)
        if cx < 0:
            cx = 0
        elif cx >= nx:
            cx = nx - 1
        if cy < 0:
            cy = 0
        elif cy >= ny:
            cy = ny - 1
        cnt = 0
        gy0 = cy - reach
        if gy0 < 0:
            gy0 = 0
        gy1 = cy + reach
        if gy1 >= ny:
            gy1 = ny - 1
        gx0 = cx - reach
        if gx0 < 0:
            gx0 = 0
        gx1 = cx + reach
        if gx1 >= nx:
            gx1 = nx - 1
        for gy in range(gy0, gy1 + 1):
            base = gy * nx
            for gx in range(gx0, gx1 + 1):
                c = base + gx
                for k in range(cell_start[c], cell_start[c + 1]):
                    dx = px - posg[k, 0]
                    dy = py - posg[k, 1]
                    if dx * dx + dy * dy <= cut2:
                        j = order[k]
                        if j != i:
                            cand[cnt] = j
                            cnt += 1
        # candidates arrive as a few ascending runs; insertion sort is cheap
        for a in range(1, cnt):
            key = cand[a]
            b = a - 1
            while b >= 0 and cand[b] > key:
                cand[b + 1] = cand[b]
                b -= 1
            cand[b + 1] = key
        for k in range(cnt):
            j = cand[k]
            fx, fy = _pair_repulsion(px, py, hx, hy, pos[j, 0], pos[j, 1],
                                     radius[i], radius[j], i, j,
                                     a_ped, b_ped, lam)
            ax += fx
            ay += fy
        fx, fy = _obstacle_force(px, py, radius[i], edges, estart, bbox,
                                 cutoff, a_obs, b_obs)
        acc[i, 0] = ax + fx
        acc[i, 1] = ay + fy


@maybe_njit
def accel_brute(pos, vel, v0, tau, radius, goal, edges, estart, bbox,
                a_ped, b_ped, a_obs, b_obs, cutoff, lam, acc):
    """All-pairs reference: same math, same order, no spatial index."""
    m = pos.shape[0]
    cut2 = cutoff * cutoff
    for i in range(m):
        px = pos[i, 0]
        py = pos[i, 1]
        ax, ay = _driving_force(px, py, vel[i, 0], vel[i, 1],
                                goal[i, 0], goal[i, 1], v0[i], tau[i])
        hx, hy = _heading(vel[i, 0], vel[i, 1], px, py, goal[i, 0], goal[i, 1])
        for j in range(m):
            if j == i:
                continue
            dx = px - pos[j, 0]
            dy = py - pos[j, 1]
            if dx * dx + dy * dy <= cut2:
                fx, fy = _pair_repulsion(px, py, hx, hy, pos[j, 0], pos[j, 1],
                                         radius[i], radius[j], i, j,
                                         a_ped, b_ped, lam)
                ax += fx
                ay += fy
        fx, fy = _obstacle_force(px, py, radius[i], edges, estart, bbox,
                                 cutoff, a_obs, b_obs)
        acc[i, 0] = ax + fx
        acc[i, 1] = ay + fy


@maybe_njit
def integrate(pos, vel, acc, v0_eff, dt, vmax_factor):
    """Semi-implicit Euler with hard speed clamp at vmax_factor * v0."""
    m = pos.shape[0]
    for i in range(m):
        vx = vel[i, 0] + acc[i, 0] * dt
        vy = vel[i, 1] + acc[i, 1] * dt
        vmax = vmax_factor * v0_eff[i]
        s2 = vx * vx + vy * vy
        if s2 > vmax * vmax:
            if vmax <= 0.0:
                vx = 0.0
                vy = 0.0
            else:
                k = vmax / math.sqrt(s2)
                vx *= k
                vy *= k
        vel[i, 0] = vx
        vel[i, 1] = vy
        pos[i, 0] = pos[i, 0] + vx * dt
        pos[i, 1] = pos[i, 1] + vy * dt


@maybe_njit
def project_out(pos, edges, estart, bbox):
    """Push positions that ended up inside an obstacle back outside."""
    m = pos.shape[0]
    npoly = estart.shape[0] - 1
    if npoly == 0:
        return
    for i in range(m):
        for _sweep in range(3):
            moved = False
            for p in range(npoly):
                px = pos[i, 0]
                py = pos[i, 1]
                if (px < bbox[p, 0] or px > bbox[p, 2]
                        or py < bbox[p, 1] or py > bbox[p, 3]):
                    continue
                inside = False
                best_d2 = 1e300
                bqx = 0.0
                bqy = 0.0
                nearest = -1
                for e in range(estart[p], estart[p + 1]):
                    x1 = edges[e, 0]
                    y1 = edges[e, 1]
                    x2 = edges[e, 2]
                    y2 = edges[e, 3]
                    if (y1 > py) != (y2 > py):
                        xin = (x2 - x1) * (py - y1) / (y2 - y1) + x1
                        if px < xin:
                            inside = not inside
                    sx = x2 - x1
                    sy = y2 - y1
                    seg2 = sx * sx + sy * sy
                    if seg2 > 0.0:
                        t = ((px - x1) * sx + (py - y1) * sy) / seg2
                        if t < 0.0:
                            t = 0.0
                        elif t > 1.0:
                            t = 1.0
                        cx = x1 + t * sx
                        cy = y1 + t * sy
                    else:
                        cx = x1
                        cy = y1
                    dx = px - cx
                    dy = py - cy
                    d2 = dx * dx + dy * dy
                    if d2 < best_d2:
                        best_d2 = d2
                        bqx = cx
                        bqy = cy
                        nearest = e
                if not inside:
                    continue
                d = math.sqrt(best_d2)
                if d < BOUNDARY_EPS:
                    ex = edges[nearest, 2] - edges[nearest, 0]
                    ey = edges[nearest, 3] - edges[nearest, 1]
                    n = math.sqrt(ex * ex + ey * ey)
                    pos[i, 0] = bqx + PROJECT_EPS * (ey / n)
                    pos[i, 1] = bqy - PROJECT_EPS * (ex / n)
                else:
                    ux = (bqx - px) / d
                    uy = (bqy - py) / d
                    pos[i, 0] = bqx + PROJECT_EPS * ux
                    pos[i, 1] = bqy + PROJECT_EPS * uy
                moved = True
            if not moved:
                break


@maybe_njit
def raster_zbuffer(caps, owner, width, height, inst, depth):
    """Scan-convert projected capsules with a nearest-depth-wins z-buffer.

    caps rows: u0, v0, d0, u1, v1, d1, world radius, focal scale.
    owner holds the instance value written on a win (0 stays background).
    Pixel (r, c) samples at center (c + 0.5, r + 0.5); ties keep the
    earlier writer, so capsule order fixes the result.
    """
    ncap = caps.shape[0]
    for c in range(ncap):
        u0 = caps[c, 0]
        v0 = caps[c, 1]
        d0 = caps[c, 2]
        u1 = caps[c, 3]
        v1 = caps[c, 4]
        d1 = caps[c, 5]
        rw = caps[c, 6]
        fs = caps[c, 7]
        dmin = d0 if d0 < d1 else d1
        if dmin <= 0.0:
            continue
        rmax = fs * rw / dmin
        lox = int(math.floor((u0 if u0 < u1 else u1) - rmax))
        hix = int(math.ceil((u0 if u0 > u1 else u1) + rmax))
        loy = int(math.floor((v0 if v0 < v1 else v1) - rmax))
        hiy = int(math.ceil((v0 if v0 > v1 else v1) + rmax))
        if lox < 0:
            lox = 0
        if loy < 0:
            loy = 0
        if hix > width - 1:
            hix = width - 1
        if hiy > height - 1:
            hiy = height - 1
        if lox > hix or loy > hiy:
            continue
        sx = u1 - u0
        sy = v1 - v0
        seg2 = sx * sx + sy * sy
        for r in range(loy, hiy + 1):
            cyp = r + 0.5
            for q in range(lox, hix + 1):
                cxp = q + 0.5
                if seg2 > 0.0:
                    t = ((cxp - u0) * sx + (cyp - v0) * sy) / seg2
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                qx = u0 + t * sx
                qy = v0 + t * sy
                dz = d0 + t * (d1 - d0)
                rpx = fs * rw / dz
                ddx = cxp - qx
                ddy = cyp - qy
                if ddx * ddx + ddy * ddy <= rpx * rpx:
                    if dz < depth[r, q]:
                        depth[r, q] = dz
                        inst[r, q] = owner[c]


@maybe_njit
def solo_pixel_count(caps, width, height):
    """Pixels covered by the capsule union of one agent, ignoring occluders."""
    ncap = caps.shape[0]
    glox = width
    ghix = -1
    gloy = height
    ghiy = -1
    for c in range(ncap):
        d0 = caps[c, 2]
        d1 = caps[c, 5]
        dmin = d0 if d0 < d1 else d1
        if dmin <= 0.0:
            continue
        rmax = caps[c, 7] * caps[c, 6] / dmin
        u0 = caps[c, 0]
        u1 = caps[c, 3]
        v0 = caps[c, 1]
        v1 = caps[c, 4]
        lox = int(math.floor((u0 if u0 < u1 else u1) - rmax))
        hix = int(math.ceil((u0 if u0 > u1 else u1) + rmax))
        loy = int(math.floor((v0 if v0 < v1 else v1) - rmax))
        hiy = int(math.ceil((v0 if v0 > v1 else v1) + rmax))
        if lox < glox:
            glox = lox
        if hix > ghix:
            ghix = hix
        if loy < gloy:
            gloy = loy
        if hiy > ghiy:
            ghiy = hiy
    if glox < 0:
        glox = 0
    if gloy < 0:
        gloy = 0
    if ghix > width - 1:
        ghix = width - 1
    if ghiy > height - 1:
        ghiy = height - 1
    if glox > ghix or gloy > ghiy:
        return 0
    bw = ghix - glox + 1
    bh = ghiy - gloy + 1
    mask = np.zeros((bh, bw), np.uint8)
    total = 0
    for c in range(ncap):
        u0 = caps[c, 0]
        v0 = caps[c, 1]
        d0 = caps[c, 2]
        u1 = caps[c, 3]
        v1 = caps[c, 4]
        d1 = caps[c, 5]
        rw = caps[c, 6]
        fs = caps[c, 7]
        dmin = d0 if d0 < d1 else d1
        if dmin <= 0.0:
            continue
        rmax = fs * rw / dmin
        lox = int(math.floor((u0 if u0 < u1 else u1) - rmax))
        hix = int(math.ceil((u0 if u0 > u1 else u1) + rmax))
        loy = int(math.floor((v0 if v0 < v1 else v1) - rmax))
        hiy = int(math.ceil((v0 if v0 > v1 else v1) + rmax))
        if lox < glox:
            lox = glox
        if loy < gloy:
            loy = gloy
        if hix > ghix:
            hix = ghix
        if hiy > ghiy:
            hiy = ghiy
        if lox > hix or loy > hiy:
            continue
        sx = u1 - u0
        sy = v1 - v0
        seg2 = sx * sx + sy * sy
        for r in range(loy, hiy + 1):
            cyp = r + 0.5
            for q in range(lox, hix + 1):
                cxp = q + 0.5
                if seg2 > 0.0:
                    t = ((cxp - u0) * sx + (cyp - v0) * sy) / seg2
                    if t < 0.0:
                        t = 0.0
                    elif t > 1.0:
                        t = 1.0
                else:
                    t = 0.0
                qx = u0 + t * sx
                qy = v0 + t * sy
                dz = d0 + t * (d1 - d0)
                rpx = fs * rw / dz
                ddx = cxp - qx
                ddy = cyp - qy
                if ddx * ddx + ddy * ddy <= rpx * rpx:
                    if mask[r - gloy, q - glox] == 0:
                        mask[r - gloy, q - glox] = 1
                        total += 1
    return total


@maybe_njit
def points_in_polygons(points, edges, estart, bbox, out):
    """Even-odd inside test of each point against each polygon (bbox-culled)."""
    n = points.shape[0]
    npoly = estart.shape[0] - 1
    for i in range(n):
        px = points[i, 0]
        py = points[i, 1]
        hit = False
        for p in range(npoly):
            if (px < bbox[p, 0] or px > bbox[p, 2]
                    or py < bbox[p, 1] or py > bbox[p, 3]):
                continue
            inside = False
            for e in range(estart[p], estart[p + 1]):
                y1 = edges[e, 1]
                y2 = edges[e, 3]
                if (y1 > py) != (y2 > py):
                    xin = (edges[e, 2] - edges[e, 0]) * (py - y1) / (y2 - y1) + edges[e, 0]
                    if px < xin:
                        inside = not inside
            if inside:
                hit = True
                break
        out[i] = hit
