import numpy as np
import pytest

from stax.core import Genome
from stax.envs import (CurlingLite, PointMaze, RedundantArm, RewardArea, area_rewards, evaluate, make_env,
                       read_pgm, sample_steps, write_pgm)
from stax.envs.base import PolicyNetwork


def test_sample_steps_end_at_horizon():
    assert sample_steps(200, 5) == [40, 80, 120, 160, 200]
    assert sample_steps(10, 1) == [10]
    assert sample_steps(7, 3)[-1] == 7


def test_reward_linear_in_distance():
    area = RewardArea((0.0, 0.0), 2.0, 1.0)
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.5], [2.0, 0.0], [3.0, 3.0]])
    r, a = area_rewards(pts, [area])
    assert np.allclose(r, [1.0, 0.5, 0.25, 0.0, 0.0])
    assert list(a) == [0, 0, 0, -1, -1]


def test_maze_kernel_matches_numpy_step_loop():
    env = PointMaze(episode_len=60)
    rng = np.random.default_rng(0)
    params = rng.normal(0, 1.5, size=(4, env.n_params))
    final = env.rollout(params, 3, render=False).ground_truth_bd
    layers = env.policy.unpack(params)
    pos = np.tile(np.array(env.start[:2]), (4, 1))
    heading = np.full(4, env.start[2])
    for _ in range(env.episode_len):
        act = PolicyNetwork.forward(layers, env.sensors(pos, heading) / env.sensor_range)
        pos, heading = env.step(pos, heading, act)
    assert np.allclose(final, pos, atol=1e-9)


def test_maze_agent_stays_inside_walls():
    env = PointMaze()
    params = np.random.default_rng(1).normal(0, 3, size=(50, env.n_params))
    bd = env.rollout(params, 5, render=False).ground_truth_bd
    xmin, ymin, xmax, ymax = env.bounds
    assert np.all((bd[:, 0] > xmin) & (bd[:, 0] < xmax) & (bd[:, 1] > ymin) & (bd[:, 1] < ymax))


@pytest.mark.parametrize("name", ["pointmaze", "curling", "arm"])
def test_rollout_shapes_and_determinism(name):
    env = make_env(name, {"raster_size": 16})
    params = np.random.default_rng(2).normal(size=(3, env.n_params))
    a = env.rollout(params, 4)
    b = env.rollout(params, 4)
    assert a.observations.shape == (3, 4, 16, 16) and a.observations.dtype == np.uint8
    assert a.ground_truth_bd.shape == (3, 2)
    assert np.array_equal(a.observations, b.observations)
    assert np.array_equal(a.ground_truth_bd, b.ground_truth_bd)


def test_batch_equals_single():
    env = make_env("curling", {})
    params = np.random.default_rng(3).normal(size=(5, env.n_params))
    batch = env.rollout(params, 5)
    for i in range(5):
        one = evaluate(env, Genome(params[i], i), 5)
        assert np.array_equal(one.ground_truth_bd, batch.ground_truth_bd[i])
        assert np.array_equal(one.observations, batch.observations[i])


def test_evaluate_rejects_wrong_dimension():
    env = make_env("pointmaze", {})
    with pytest.raises(ValueError):
        evaluate(env, Genome(np.zeros(env.n_params + 1), 0), 5)


def test_arm_default_sizes_and_tip_position():
    env = RedundantArm()
    assert env.n_params == 10 * 5 + 5 + 5 * 5 + 5 + 5 * 10 + 10
    j = env.joints(np.zeros((1, 10)))
    assert np.allclose(j[0, -1], [1.0, 0.0])
    assert RedundantArm(dof=20).policy.sizes == [20, 5, 5, 20]


def test_arm_collision_freezes_episode():
    # horizontal walls just above and below the straight initial pose: no link may cross them
    env = RedundantArm(walls=[(-1.0, 0.3, 1.0, 0.3), (-1.0, -0.3, 1.0, -0.3)], episode_len=50)
    params = np.random.default_rng(4).normal(0, 2, size=(20, env.n_params))
    out = env.rollout(params, 5, render=False)
    assert np.all(np.abs(out.ground_truth_bd[:, 1]) < 0.3)
    assert np.any(env.last_steps_run < 50)


def test_curling_ball_starts_still():
    env = CurlingLite()
    zero = np.zeros((1, env.n_params))
    out = env.rollout(zero, 5, render=False)
    assert np.allclose(out.ground_truth_bd[0], env.ball0)


def test_paint_kernels_match_masks():
    env = RedundantArm(raster_size=24)
    rng = np.random.default_rng(5)
    c = env.canvas
    centers = rng.uniform(-1, 1, size=(6, 2))
    out = np.zeros((6, 24, 24), dtype=np.uint8)
    c.paint_disks(out, centers, 2.3, 7)
    assert np.array_equal(out == 7, c.disk_mask(centers, 2.3))
    a = rng.uniform(-1, 1, size=(6, 3, 2))
    b = rng.uniform(-1, 1, size=(6, 3, 2))
    out = np.zeros((6, 24, 24), dtype=np.uint8)
    c.paint_segments(out, a, b, 0.8, 9)
    assert np.array_equal(out == 9, c.segment_mask(a, b, 0.8))


def test_pgm_roundtrip(tmp_path):
    img = (np.random.default_rng(6).random((8, 8)) * 255).astype(np.uint8)
    write_pgm(tmp_path / "x.pgm", img)
    assert np.array_equal(read_pgm(tmp_path / "x.pgm"), img)


def test_make_env_unknown():
    with pytest.raises(ValueError):
        make_env("cartpole")


def test_curling_kernel_matches_numpy_steps():
    env = CurlingLite(episode_len=80)
    rng = np.random.default_rng(7)
    params = rng.normal(0, 2, size=(6, env.n_params))
    final = env.rollout(params, 2, render=False).ground_truth_bd
    touched = 0
    for b in range(6):
        layers = env.policy.unpack(params[b])
        state = env.initial_state()
        for _ in range(env.episode_len):
            act = PolicyNetwork.forward(layers, env.observe(state)[None])[0]
            state = env.step(state, act)
        assert np.allclose(state["ball"], final[b], atol=1e-9)
        touched += not np.allclose(state["ball"], env.ball0)
    assert touched > 0


def test_arm_kernel_matches_numpy_steps():
    env = RedundantArm(episode_len=60)
    rng = np.random.default_rng(8)
    params = rng.normal(0, 2, size=(6, env.n_params))
    final = env.rollout(params, 2, render=False).ground_truth_bd
    runs = env.last_steps_run.copy()
    for b in range(6):
        layers = env.policy.unpack(params[b])
        q = np.zeros(env.dof)
        last = 0
        for t in range(1, env.episode_len + 1):
            q, hit = env.step(q, PolicyNetwork.forward(layers, (q / np.pi)[None])[0])
            if hit:
                break
            last = t
        assert np.allclose(env.joints(q)[0, -1], final[b], atol=1e-9)
        assert last == runs[b]


@pytest.mark.parametrize("name,state", [
    ("pointmaze", np.array([5.0, 5.0])),
    ("arm", np.zeros(10)),
])
def test_rasterize_unit_range(name, state):
    env = make_env(name)
    img = env.rasterize(state)
    assert img.shape == (32, 32) and img.min() >= 0.0 and img.max() <= 1.0 and img.max() > 0


def test_curling_rasterize():
    env = CurlingLite()
    img = env.rasterize(env.initial_state())
    assert img.shape == (32, 32) and 0.0 <= img.min() and img.max() <= 1.0
