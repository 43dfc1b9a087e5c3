import pathlib

import pytest

from rssplan import DelayProfile, VehicleDescriptor, VehicleState
from rssplan.core import RoadGeometry, SceneSnapshot

SCENARIOS = pathlib.Path(__file__).resolve().parent.parent / "scenarios"


def make_descriptor(vid="veh", length=5.0, width=2.0, a_accel_max=3.0,
                    a_brake_min=4.0, a_brake_max=8.0, a_lat_accel_max=1.0,
                    a_lat_brake_min=2.0, reaction_time=0.83,
                    connected=True):
    return VehicleDescriptor(
        id=vid, length=length, width=width, a_accel_max=a_accel_max,
        a_brake_min=a_brake_min, a_brake_max=a_brake_max,
        a_lat_accel_max=a_lat_accel_max, a_lat_brake_min=a_lat_brake_min,
        reaction_time=reaction_time, connected=connected)


def two_lane_road(side_end=None, merge_zone=None):
    return RoadGeometry(y_lower=0.0, y_upper=7.0,
                        lane_centers=(1.75, 5.25), lane_width=3.5,
                        side_lane_end_x=side_end, merge_zone=merge_zone)


def merge_scene(ego_x=30.0, ego_v=22.0, obs_x=0.0, obs_v=16.0,
                mode="non_cooperative", speed_limit=30.0, side_end=300.0,
                target=22.0):
    road = two_lane_road(side_end=side_end, merge_zone=(50.0, side_end))
    ego = (make_descriptor("ego"),
           VehicleState(x=ego_x, y=1.75, v_long=ego_v))
    obs = (make_descriptor("obs"),
           VehicleState(x=obs_x, y=5.25, v_long=obs_v))
    return SceneSnapshot(time=0.0, road=road, ego=ego, obstacles=(obs,),
                         mode=mode, speed_limit=speed_limit,
                         ego_target_speed=target)


@pytest.fixture
def delays():
    return DelayProfile(rho_rt=0.83, rho_cd=0.0)


@pytest.fixture
def descriptor():
    return make_descriptor()


@pytest.fixture
def scenarios_dir():
    return SCENARIOS
