"""numba kernels for the per-step simulation loops.

Every policy is simulated independently with scalar code, so results do not
depend on how a batch is split across workers.
"""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def mlp_forward(theta, sizes, x, buf_a, buf_b):
    """tanh MLP; same parameter layout as ``PolicyNetwork``. Result lands in the returned buffer."""
    h = buf_a
    for i in range(sizes[0]):
        h[i] = x[i]
    out = buf_b
    pos = 0
    for layer in range(sizes.shape[0] - 1):
        n_in = sizes[layer]
        n_out = sizes[layer + 1]
        for o in range(n_out):
            acc = 0.0
            base = pos + o * n_in
            for i in range(n_in):
                acc += theta[base + i] * h[i]
            out[o] = np.tanh(acc + theta[pos + n_out * n_in + o])
        pos += n_out * n_in + n_out
        h, out = out, h
    return h


@njit(cache=True)
def ray_cast(ox, oy, angle, walls, max_range):
    dx = np.cos(angle)
    dy = np.sin(angle)
    best = max_range
    for w in range(walls.shape[0]):
        ax = walls[w, 0]
        ay = walls[w, 1]
        ex = walls[w, 2] - ax
        ey = walls[w, 3] - ay
        den = dx * ey - dy * ex
        if den == 0.0:
            continue
        aox = ax - ox
        aoy = ay - oy
        t = (aox * ey - aoy * ex) / den
        s = (aox * dy - aoy * dx) / den
        if t >= 0.0 and s >= 0.0 and s <= 1.0 and t < best:
            best = t
    return best


@njit(cache=True)
def min_wall_dist2(px, py, walls):
    best = np.inf
    for w in range(walls.shape[0]):
        ax = walls[w, 0]
        ay = walls[w, 1]
        ex = walls[w, 2] - ax
        ey = walls[w, 3] - ay
        len2 = ex * ex + ey * ey
        qx = px - ax
        qy = py - ay
        t = 0.0
        if len2 > 0.0:
            t = (qx * ex + qy * ey) / len2
            t = min(max(t, 0.0), 1.0)
        qx -= t * ex
        qy -= t * ey
        d2 = qx * qx + qy * qy
        if d2 < best:
            best = d2
    return best


@njit(cache=True)
def maze_rollout(params, sizes, walls, start, episode_len, sample_steps, sensor_angles,
                 sensor_range, radius, max_speed, max_turn):
    n = params.shape[0]
    k = sample_steps.shape[0]
    final = np.empty((n, 2))
    snaps = np.empty((n, k, 2))
    width = sizes.max()
    buf_a = np.empty(width)
    buf_b = np.empty(width)
    x = np.empty(sensor_angles.shape[0])
    r2 = radius * radius
    for b in range(n):
        theta = params[b]
        px = start[0]
        py = start[1]
        heading = start[2]
        si = 0
        for t in range(1, episode_len + 1):
            for j in range(sensor_angles.shape[0]):
                x[j] = ray_cast(px, py, heading + sensor_angles[j], walls, sensor_range) / sensor_range
            act = mlp_forward(theta, sizes, x, buf_a, buf_b)
            left = act[0]
            right = act[1]
            speed = max_speed * 0.5 * (left + right)
            heading = heading + max_turn * 0.5 * (right - left)
            nx = px + speed * np.cos(heading)
            if min_wall_dist2(nx, py, walls) >= r2:
                px = nx
            ny = py + speed * np.sin(heading)
            if min_wall_dist2(px, ny, walls) >= r2:
                py = ny
            while si < k and sample_steps[si] == t:
                snaps[b, si, 0] = px
                snaps[b, si, 1] = py
                si += 1
        final[b, 0] = px
        final[b, 1] = py
    return final, snaps


@njit(cache=True)
def curling_rollout(params, sizes, episode_len, sample_steps, base, links, q0, ball0, ball_radius,
                    tip_radius, table, joint_speed, q_low, q_high, friction):
    n = params.shape[0]
    k = sample_steps.shape[0]
    final = np.empty((n, 2))
    snaps = np.empty((n, k, 4))
    width = sizes.max()
    buf_a = np.empty(width)
    buf_b = np.empty(width)
    x = np.empty(6)
    half_w = 0.5 * (table[2] - table[0])
    half_h = 0.5 * (table[3] - table[1])
    cx = table[0] + half_w
    cy = table[1] + half_h
    contact = ball_radius + tip_radius
    for b in range(n):
        theta = params[b]
        q1 = q0[0]
        q2 = q0[1]
        dq1 = 0.0
        dq2 = 0.0
        bx = ball0[0]
        by = ball0[1]
        vx = 0.0
        vy = 0.0
        tx = base[0] + links[0] * np.cos(q1) + links[1] * np.cos(q1 + q2)
        ty = base[1] + links[0] * np.sin(q1) + links[1] * np.sin(q1 + q2)
        si = 0
        for t in range(1, episode_len + 1):
            x[0] = (bx - cx) / half_w
            x[1] = (by - cy) / half_h
            x[2] = q1 / np.pi
            x[3] = q2 / np.pi
            x[4] = dq1
            x[5] = dq2
            act = mlp_forward(theta, sizes, x, buf_a, buf_b)
            dq1 = act[0]
            dq2 = act[1]
            q1 = min(max(q1 + joint_speed * dq1, q_low[0]), q_high[0])
            q2 = min(max(q2 + joint_speed * dq2, q_low[1]), q_high[1])
            nx = base[0] + links[0] * np.cos(q1) + links[1] * np.cos(q1 + q2)
            ny = base[1] + links[0] * np.sin(q1) + links[1] * np.sin(q1 + q2)
            tvx = nx - tx
            tvy = ny - ty
            tx = nx
            ty = ny
            ddx = bx - tx
            ddy = by - ty
            d = np.sqrt(ddx * ddx + ddy * ddy)
            if d < contact:
                # inelastic transfer of the tip velocity, then separate the bodies
                vx = tvx
                vy = tvy
                if d > 0.0:
                    bx = tx + ddx / d * contact
                    by = ty + ddy / d * contact
            bx += vx
            by += vy
            if bx < table[0] + ball_radius:
                bx = 2.0 * (table[0] + ball_radius) - bx
                vx = -vx
            if bx > table[2] - ball_radius:
                bx = 2.0 * (table[2] - ball_radius) - bx
                vx = -vx
            if by < table[1] + ball_radius:
                by = 2.0 * (table[1] + ball_radius) - by
                vy = -vy
            if by > table[3] - ball_radius:
                by = 2.0 * (table[3] - ball_radius) - by
                vy = -vy
            vx *= 1.0 - friction
            vy *= 1.0 - friction
            while si < k and sample_steps[si] == t:
                snaps[b, si, 0] = bx
                snaps[b, si, 1] = by
                snaps[b, si, 2] = q1
                snaps[b, si, 3] = q2
                si += 1
        final[b, 0] = bx
        final[b, 1] = by
    return final, snaps


@njit(cache=True)
def _cross(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


@njit(cache=True)
def seg_intersect(p1x, p1y, p2x, p2y, q1x, q1y, q2x, q2y):
    d1 = _cross(q1x, q1y, q2x, q2y, p1x, p1y)
    d2 = _cross(q1x, q1y, q2x, q2y, p2x, p2y)
    d3 = _cross(p1x, p1y, p2x, p2y, q1x, q1y)
    d4 = _cross(p1x, p1y, p2x, p2y, q2x, q2y)
    if d1 == 0.0 and d2 == 0.0 and d3 == 0.0 and d4 == 0.0:
        return False
    return d1 * d2 <= 0.0 and d3 * d4 <= 0.0


@njit(cache=True)
def arm_joints(q, lengths, out):
    """Joint positions (D+1, 2) of a planar chain rooted at the origin."""
    a = 0.0
    out[0, 0] = 0.0
    out[0, 1] = 0.0
    for i in range(q.shape[0]):
        a += q[i]
        out[i + 1, 0] = out[i, 0] + lengths[i] * np.cos(a)
        out[i + 1, 1] = out[i, 1] + lengths[i] * np.sin(a)


@njit(cache=True)
def arm_collides(joints, walls):
    d = joints.shape[0] - 1
    for i in range(d):
        for j in range(i + 2, d):
            if seg_intersect(joints[i, 0], joints[i, 1], joints[i + 1, 0], joints[i + 1, 1],
                             joints[j, 0], joints[j, 1], joints[j + 1, 0], joints[j + 1, 1]):
                return True
        for w in range(walls.shape[0]):
            if seg_intersect(joints[i, 0], joints[i, 1], joints[i + 1, 0], joints[i + 1, 1],
                             walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3]):
                return True
    return False


@njit(cache=True)
def arm_rollout(params, sizes, episode_len, sample_steps, lengths, walls, joint_speed):
    n = params.shape[0]
    k = sample_steps.shape[0]
    dof = lengths.shape[0]
    final = np.empty((n, 2))
    snaps = np.empty((n, k, dof))
    steps_run = np.empty(n, dtype=np.int64)
    width = sizes.max()
    buf_a = np.empty(width)
    buf_b = np.empty(width)
    x = np.empty(dof)
    q = np.empty(dof)
    trial = np.empty(dof)
    joints = np.empty((dof + 1, 2))
    for b in range(n):
        theta = params[b]
        q[:] = 0.0
        alive = True
        run = 0
        si = 0
        for t in range(1, episode_len + 1):
            if alive:
                for i in range(dof):
                    x[i] = q[i] / np.pi
                act = mlp_forward(theta, sizes, x, buf_a, buf_b)
                for i in range(dof):
                    trial[i] = min(max(q[i] + joint_speed * act[i], -np.pi), np.pi)
                arm_joints(trial, lengths, joints)
                if arm_collides(joints, walls):
                    alive = False
                else:
                    q[:] = trial
                    run = t
            while si < k and sample_steps[si] == t:
                snaps[b, si, :] = q
                si += 1
        arm_joints(q, lengths, joints)
        final[b, 0] = joints[dof, 0]
        final[b, 1] = joints[dof, 1]
        steps_run[b] = run
    return final, snaps, steps_run


@njit(cache=True)
def paint_disks(out, u, v, radius, value):
    """Paint disks centred at pixel coords (u[i], v[i]) into out[i] (pixel centres at +0.5)."""
    g = out.shape[1]
    r2 = radius * radius
    for i in range(out.shape[0]):
        c0 = max(int(np.floor(u[i] - radius - 0.5)), 0)
        c1 = min(int(np.ceil(u[i] + radius)), g - 1)
        r0 = max(int(np.floor(v[i] - radius - 0.5)), 0)
        r1 = min(int(np.ceil(v[i] + radius)), g - 1)
        for row in range(r0, r1 + 1):
            dv = row + 0.5 - v[i]
            for col in range(c0, c1 + 1):
                du = col + 0.5 - u[i]
                if du * du + dv * dv <= r2:
                    out[i, row, col] = value


@njit(cache=True)
def paint_segments(out, au, av, bu, bv, half_width, value):
    """Paint capsules around segments (N, S) given in pixel coords into out[i]."""
    g = out.shape[1]
    hw2 = half_width * half_width
    for i in range(out.shape[0]):
        for s in range(au.shape[1]):
            ax = au[i, s]
            ay = av[i, s]
            dx = bu[i, s] - ax
            dy = bv[i, s] - ay
            den = dx * dx + dy * dy
            if den <= 0.0:
                den = 1.0
            c0 = max(int(np.floor(min(ax, ax + dx) - half_width - 0.5)), 0)
            c1 = min(int(np.ceil(max(ax, ax + dx) + half_width)), g - 1)
            r0 = max(int(np.floor(min(ay, ay + dy) - half_width - 0.5)), 0)
            r1 = min(int(np.ceil(max(ay, ay + dy) + half_width)), g - 1)
            for row in range(r0, r1 + 1):
                py = row + 0.5
                for col in range(c0, c1 + 1):
                    px = col + 0.5
                    t = ((px - ax) * dx + (py - ay) * dy) / den
                    t = min(max(t, 0.0), 1.0)
                    ex = px - (ax + t * dx)
                    ey = py - (ay + t * dy)
                    if ex * ex + ey * ey <= hw2:
                        out[i, row, col] = value
