import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepcq.mobility import (Arena, NodeKinematics, RegionLayout, gauss_markov_step,
                             initial_kinematics, random_waypoint_step, region_multiplier)

ARENA = Arena(1000.0, 500.0, 1.0, 250.0)
LAYOUT = RegionLayout()


def one_node(x=500.0, y=250.0, speed=3.0, heading=0.4):
    return NodeKinematics(np.array([x, y]), np.array(speed), np.array(heading),
                          mean_heading=np.array(heading))


class TestGaussMarkov:
    def test_pure_memory(self):
        k = one_node()
        out = gauss_markov_step(k, 1.0, 10.0, 4.0, 2.0, np.random.default_rng(0), ARENA)
        assert out.speed == k.speed
        assert out.heading == k.heading
        assert np.allclose(out.position, k.position + 3.0 * np.array([np.cos(0.4), np.sin(0.4)]))

    def test_memoryless_noiseless(self):
        out = gauss_markov_step(one_node(speed=9.0), 0.0, 2.5, 0.0, 1.0,
                                np.random.default_rng(0), ARENA)
        assert out.speed == 2.5

    def test_region_variance_ratio(self):
        # stationary variance of the AR(1) speed process is base_variance * multiplier
        rng = np.random.default_rng(7)
        n_nodes, burn, keep = 500, 50, 200
        variances = {}
        for mult in (1.0, 2.0):
            k = NodeKinematics(np.zeros((n_nodes, 2)), np.full(n_nodes, 2.0),
                               np.zeros(n_nodes), mean_heading=np.zeros(n_nodes))
            samples = []
            for t in range(burn + keep):
                k = gauss_markov_step(k, 0.75, 2.0, 1.0, mult, rng)
                if t >= burn:
                    samples.append(k.speed)
            s = np.concatenate(samples)
            assert s.size == 100_000
            variances[mult] = s.var()
            assert variances[mult] == pytest.approx(1.0 * mult, rel=0.05)
        assert variances[2.0] / variances[1.0] == pytest.approx(2.0, rel=0.10)


class TestRegions:
    @pytest.mark.parametrize("x, expected", [(500.0, 2.0), (300.0, 1.0), (700.0, 1.0),
                                             (10.0, 0.5), (990.0, 0.5)])
    def test_bands(self, x, expected):
        assert region_multiplier(LAYOUT, (x, 100.0), ARENA) == expected

    @given(st.floats(0.0, 1000.0))
    def test_mirror_symmetry(self, x):
        assert region_multiplier(LAYOUT, (x, 0.0), ARENA) == \
            region_multiplier(LAYOUT, (1000.0 - x, 0.0), ARENA)

    def test_region_scale_stretches_bands(self):
        arena = Arena(1000.0, 500.0, 2.0, 250.0)
        assert region_multiplier(LAYOUT, (1000.0, 0.0), arena) == 2.0


class TestRandomWaypoint:
    def test_new_waypoint_on_arrival(self):
        k = NodeKinematics(np.array([100.0, 100.0]), np.array(5.0), np.array(0.0),
                           waypoint=np.array([100.0, 100.0]))
        out = random_waypoint_step(k, ARENA, (1.0, 2.0), np.random.default_rng(3))
        assert not np.array_equal(out.waypoint, k.waypoint)
        assert 0 <= out.waypoint[0] <= 1000 and 0 <= out.waypoint[1] <= 500
        assert 1.0 <= out.speed <= 2.0

    def test_constant_speed_legs(self):
        rng = np.random.default_rng(5)
        k = initial_kinematics(rng.uniform((0, 0), (1000, 500), (20, 2)), "random_waypoint",
                               rng, ARENA, 0.0, (7.0, 7.0))
        for _ in range(300):
            out = random_waypoint_step(k, ARENA, (7.0, 7.0), rng)
            step = np.hypot(*(out.position - k.position).T)
            arrived = np.all(out.position == k.waypoint, axis=1)
            assert np.allclose(step[~arrived], 7.0)
            assert np.all(step[arrived] <= 7.0 + 1e-9)
            assert np.all(out.speed == 7.0)
            k = out

    def test_center_bias(self):
        rng = np.random.default_rng(11)
        k = initial_kinematics(rng.uniform((0, 0), (1000, 500), (200, 2)), "random_waypoint",
                               rng, ARENA, 0.0, (5.0, 20.0))
        xs = []
        for t in range(1500):
            k = random_waypoint_step(k, ARENA, (5.0, 20.0), rng)
            if t > 200:
                xs.append(k.position[:, 0].copy())
        hist, _ = np.histogram(np.concatenate(xs), bins=5, range=(0, 1000))
        assert hist[2] > 1.3 * hist[0] and hist[2] > 1.3 * hist[4]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["gauss_markov", "random_waypoint"]),
       st.floats(0.5, 60.0))
def test_positions_stay_in_arena(seed, model, speed):
    rng = np.random.default_rng(seed)
    k = initial_kinematics(rng.uniform((0, 0), (1000, 500), (15, 2)), model, rng, ARENA,
                           speed, (0.0, speed))
    for _ in range(100):
        if model == "gauss_markov":
            k = gauss_markov_step(k, 0.5, speed, speed, region_multiplier(LAYOUT, k.position, ARENA),
                                  rng, ARENA)
        else:
            k = random_waypoint_step(k, ARENA, (0.0, speed), rng)
        assert np.all(k.position >= 0.0)
        assert np.all(k.position[:, 0] <= 1000.0) and np.all(k.position[:, 1] <= 500.0)


def test_seeded_trajectories_identical():
    def run(seed):
        rng = np.random.default_rng(seed)
        k = initial_kinematics(rng.uniform((0, 0), (1000, 500), (10, 2)), "gauss_markov", rng,
                               ARENA, 3.0, (1.0, 3.0))
        for _ in range(200):
            k = gauss_markov_step(k, 0.75, 3.0, 1.0, region_multiplier(LAYOUT, k.position, ARENA),
                                  rng, ARENA)
        return k.position

    assert np.array_equal(run(42), run(42))
    assert not np.array_equal(run(42), run(43))
