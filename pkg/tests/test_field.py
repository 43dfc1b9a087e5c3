import logging
import math

import numpy as np
import pytest

from rssplan import (DelayProfile, LateralConfig, PfParams,
                     obstacle_potential, pf_descent_path, road_potential,
                     rss_gap, scene_field_obstacles, total_field)
from rssplan.core import RoadGeometry, SceneSnapshot, VehicleState
from rssplan.rss import RssGap
from rssplan.harness import oscillation_count

from conftest import make_descriptor, two_lane_road


def single_obstacle(x=0.0, y=0.0, heading=0.0, d_long=50.0, d_lat=3.0):
    desc = make_descriptor("obs")
    state = VehicleState(x=x, y=y, heading=heading)
    gap = RssGap(d_long=d_long, d_lat=d_lat, pre_clamp_long=d_long,
                 pre_clamp_lat=d_lat - 0.5)
    return (state, desc, gap)


def test_value_at_center_is_amplitude():
    params = PfParams(a_ov=100.0, epsilon=0.01)
    got = obstacle_potential((0.0, 0.0), [single_obstacle()], params)
    assert got == pytest.approx(100.0)


def test_value_at_lateral_boundary_is_epsilon():
    params = PfParams(a_ov=100.0, epsilon=0.01)
    got = obstacle_potential((0.0, 3.0), [single_obstacle(d_lat=3.0)],
                             params)
    assert got == pytest.approx(0.01, rel=1e-12)


def test_value_at_longitudinal_boundary():
    params = PfParams(a_ov=100.0, epsilon=0.01)
    got = obstacle_potential((50.0, 0.0), [single_obstacle(d_long=50.0)],
                             params)
    assert got == pytest.approx(10.0, rel=1e-9)   # a_ov * sqrt(epsilon)


def test_linear_mode_differs_at_boundary():
    linear = PfParams(denominator_mode="linear_as_printed")
    got = obstacle_potential((0.0, 3.0), [single_obstacle(d_lat=3.0)],
                             linear)
    assert got != pytest.approx(0.01, rel=1e-6)


def test_sigma_error_names_obstacle():
    bad = (VehicleState(), make_descriptor("broken"),
           RssGap(d_long=0.0, d_lat=2.0, pre_clamp_long=-1.0,
                  pre_clamp_lat=1.0))
    with pytest.raises(ValueError, match="broken"):
        obstacle_potential((0.0, 0.0), [bad], PfParams())


def test_yaw_clamp_warns(caplog):
    tilted = single_obstacle(heading=1.2)
    with caplog.at_level(logging.WARNING):
        obstacle_potential((1.0, 1.0), [tilted], PfParams())
    assert any("clamped" in r.message for r in caplog.records)


def test_sum_order_invariant():
    params = PfParams()
    a = single_obstacle(x=10.0, y=1.0)
    b = single_obstacle(x=40.0, y=-1.0, d_long=30.0, d_lat=2.5)
    p1 = obstacle_potential((20.0, 0.5), [a, b], params)
    p2 = obstacle_potential((20.0, 0.5), [b, a], params)
    assert p1 == pytest.approx(p2, rel=1e-15)


def test_even_in_lateral_offset_at_zero_yaw():
    params = PfParams()
    obs = [single_obstacle()]
    rng = np.random.RandomState(2)
    for _ in range(50):
        dx, dy = rng.uniform(-40, 40), rng.uniform(0.1, 5)
        up = obstacle_potential((dx, dy), obs, params)
        down = obstacle_potential((dx, -dy), obs, params)
        assert up == pytest.approx(down, rel=1e-12)


def test_road_potential_values():
    road = two_lane_road()
    params = PfParams(road_gain=1.0, lane_gain=0.5)
    at_center = road_potential((0.0, 1.75), road, params)
    walls_only = 1.0 / 1.75 ** 2 + 1.0 / 5.25 ** 2
    assert at_center == pytest.approx(walls_only)
    at_mid = road_potential((0.0, 3.5), road, params)
    walls_mid = 1.0 / 3.5 ** 2 + 1.0 / 3.5 ** 2
    assert at_mid == pytest.approx(walls_mid + 0.5)   # sin^2(pi/2) = 1
    assert road_potential((0.0, 0.0), road, params) == math.inf
    assert road_potential((0.0, 7.5), road, params) == math.inf


def test_total_field_road_only_symmetric():
    road = two_lane_road()
    scene = SceneSnapshot(time=0.0, road=road,
                          ego=(make_descriptor("ego"), VehicleState(y=1.75)),
                          obstacles=(), mode="non_cooperative",
                          speed_limit=30.0, ego_target_speed=20.0)
    sample = total_field((0.0, 3.5), scene, PfParams(), DelayProfile())
    assert abs(sample.grad_y) < 1e-6


def test_total_field_pushes_away_from_obstacle():
    road = two_lane_road()
    ego = (make_descriptor("ego"), VehicleState(x=0.0, y=3.0, v_long=15.0))
    obs = (make_descriptor("obs"), VehicleState(x=5.0, y=4.5, v_long=10.0))
    scene = SceneSnapshot(time=0.0, road=road, ego=ego, obstacles=(obs,),
                          mode="non_cooperative", speed_limit=30.0,
                          ego_target_speed=20.0)
    sample = total_field((5.0, 3.8), scene, PfParams(), DelayProfile())
    # obstacle sits above the probe point: the field must push downward
    assert sample.grad_y > 0


def test_gradient_second_order_convergence():
    road = two_lane_road()
    ego = (make_descriptor("ego"), VehicleState(x=0.0, y=2.6, v_long=18.0))
    obs = (make_descriptor("obs"), VehicleState(x=60.0, y=4.4, v_long=12.0))
    scene = SceneSnapshot(time=0.0, road=road, ego=ego, obstacles=(obs,),
                          mode="non_cooperative", speed_limit=30.0,
                          ego_target_speed=20.0)
    delays = DelayProfile()
    cached = scene_field_obstacles(scene, delays)
    point = (40.0, 3.1)

    def grad(step):
        return total_field(point, scene, PfParams(), delays, step=step,
                           obstacles=cached).grad_y

    ref = grad(0.0025)
    e1 = grad(0.02) - ref
    e2 = grad(0.01) - ref
    assert e1 / e2 == pytest.approx(4.0, rel=0.35)


def descent_scene(obstacles):
    road = two_lane_road()
    ego = (make_descriptor("ego"), VehicleState(x=0.0, y=1.75, v_long=20.0))
    return SceneSnapshot(time=0.0, road=road, ego=ego,
                         obstacles=tuple(obstacles),
                         mode="non_cooperative", speed_limit=30.0,
                         ego_target_speed=20.0)


def test_descent_no_obstacles_straight():
    scene = descent_scene([])
    path = pf_descent_path((0.0, 1.75), scene, PfParams(), 0.5, 200.0,
                           DelayProfile())
    assert not path.truncated
    assert np.max(np.abs(path.ys - 1.75)) < 0.05


def test_descent_clears_inlane_obstacle_by_safe_lateral():
    delays = DelayProfile(rho_rt=0.83, rho_cd=0.0)
    obs_desc = make_descriptor("s")
    obs_state = VehicleState(x=150.0, y=1.75, v_long=0.0)
    scene = descent_scene([(obs_desc, obs_state)])
    path = pf_descent_path((0.0, 1.75), scene, PfParams(), 0.5, 300.0,
                           delays)
    gap = rss_gap(scene.ego[0], scene.ego[1], obs_desc, obs_state, delays,
                  LateralConfig(), ego_is_rear=True, ego_is_lower=True)
    at_obstacle = np.argmin(np.abs(path.xs - 150.0))
    assert abs(path.ys[at_obstacle] - 1.75) >= gap.d_lat


def test_descent_oscillates_between_close_pair():
    delays = DelayProfile(rho_rt=0.83, rho_cd=0.0)
    a = (make_descriptor("a"), VehicleState(x=150.0, y=1.75, v_long=0.0))
    b = (make_descriptor("b"), VehicleState(x=178.0, y=5.25, v_long=0.0))
    scene = descent_scene([a, b])
    path = pf_descent_path((0.0, 1.75), scene, PfParams(), 0.5, 400.0,
                           delays)
    final_lane = scene.road.nearest_lane_center(float(path.ys[-1]))
    count = oscillation_count(path.ys - final_lane, amplitude=0.05)
    assert count > 0


def test_descent_requires_positive_step():
    scene = descent_scene([])
    with pytest.raises(ValueError):
        pf_descent_path((0.0, 1.75), scene, PfParams(), 0.0, 10.0,
                        DelayProfile())
