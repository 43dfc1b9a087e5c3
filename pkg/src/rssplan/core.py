"""Shared domain types: vehicles, road geometry, scenario configuration.

All quantities are SI (meters, seconds, radians). The road frame is X
longitudinal along the centerline, Y lateral with left positive; roads are
straight multilane highway segments.
"""

import json
import math
from dataclasses import dataclass, field, asdict


# Reaction time of an automated vehicle and V2V one-way latency used as
# defaults throughout; both are configurable per DelayProfile.
DEFAULT_REACTION_TIME = 0.83      # [s]
DEFAULT_COMM_DELAY = 0.0005       # [s]
DEFAULT_LANE_CHANGE_TIME = 3.0    # [s] negotiation/maneuver threshold rho_lc
DEFAULT_COMM_THRESHOLD = 1.0      # [s] response deadline rho_ct

MODES = ("non_cooperative", "cooperative")


class ScenarioError(ValueError):
    """Raised for malformed scenario files or violated config invariants."""

    def __init__(self, message, field_name=None):
        super().__init__(message)
        self.field_name = field_name


def _check(cond, message, field_name=None):
    if not cond:
        raise ScenarioError(message, field_name)


def _finite(*values):
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class VehicleDescriptor:
    """Static per-vehicle parameters: geometry, actuation bounds, reaction."""

    id: str
    length: float                    # [m]
    width: float                     # [m]
    a_accel_max: float               # [m/s^2] max longitudinal acceleration
    a_brake_min: float               # [m/s^2] minimum committed braking, > 0
    a_brake_max: float               # [m/s^2] max braking, >= a_brake_min
    a_lat_accel_max: float = 1.0     # [m/s^2] max lateral acceleration
    a_lat_brake_min: float = 2.0     # [m/s^2] min lateral braking
    reaction_time: float = DEFAULT_REACTION_TIME  # [s]
    connected: bool = False

    def __post_init__(self):
        _check(self.length > 0, "length must be > 0", "length")
        _check(self.width > 0, "width must be > 0", "width")
        _check(self.a_accel_max > 0, "a_accel_max must be > 0", "a_accel_max")
        _check(self.a_brake_min > 0, "a_brake_min must be > 0", "a_brake_min")
        _check(self.a_brake_max >= self.a_brake_min,
               "a_brake_max must be >= a_brake_min", "a_brake_max")
        _check(self.a_lat_accel_max > 0, "a_lat_accel_max must be > 0",
               "a_lat_accel_max")
        _check(self.a_lat_brake_min > 0, "a_lat_brake_min must be > 0",
               "a_lat_brake_min")
        _check(self.reaction_time >= 0, "reaction_time must be >= 0",
               "reaction_time")


@dataclass(frozen=True)
class VehicleState:
    """Kinematic/dynamic state of one vehicle at an instant."""

    x: float = 0.0          # [m] longitudinal position
    y: float = 0.0          # [m] lateral position
    heading: float = 0.0    # [rad] psi
    sideslip: float = 0.0   # [rad] beta, |beta| < pi/2
    v_long: float = 0.0     # [m/s] speed along the body axis
    v_lat: float = 0.0      # [m/s] road-frame lateral velocity
    yaw_rate: float = 0.0   # [rad/s]
    steering: float = 0.0   # [rad] front tire angle
    accel_cmd: float = 0.0  # [m/s^2] applied longitudinal command

    def __post_init__(self):
        _check(_finite(self.x, self.y, self.heading, self.sideslip,
                       self.v_long, self.v_lat, self.yaw_rate,
                       self.steering, self.accel_cmd),
               "vehicle state values must be finite", "state")
        _check(abs(self.sideslip) < math.pi / 2,
               "sideslip must satisfy |beta| < pi/2", "sideslip")


@dataclass(frozen=True)
class DelayProfile:
    """Reaction/communication delays used inside safe-distance formulas.

    rho_cd is the one-way V2V latency (0 for non-connected pairings);
    rho_lc is the lane-change threshold time and rho_ct the cooperation
    response deadline.
    """

    rho_rt: float = DEFAULT_REACTION_TIME
    rho_cd: float = DEFAULT_COMM_DELAY
    rho_lc: float = DEFAULT_LANE_CHANGE_TIME
    rho_ct: float = DEFAULT_COMM_THRESHOLD

    def __post_init__(self):
        for name in ("rho_rt", "rho_cd", "rho_lc", "rho_ct"):
            _check(getattr(self, name) >= 0, f"{name} must be >= 0", name)

    @property
    def rho(self):
        """Total response latency entering the safe-distance formulas."""
        return self.rho_rt + self.rho_cd


@dataclass(frozen=True)
class RoadGeometry:
    """Straight highway cross-section: bounds, lane centers, merge lane."""

    y_lower: float
    y_upper: float
    lane_centers: tuple
    lane_width: float = 3.5
    side_lane_end_x: float | None = None   # [m] end of the merge side lane
    merge_zone: tuple | None = None        # (x_start, x_end)

    def __post_init__(self):
        object.__setattr__(self, "lane_centers", tuple(self.lane_centers))
        if self.merge_zone is not None:
            object.__setattr__(self, "merge_zone", tuple(self.merge_zone))
        _check(self.y_lower < self.y_upper, "y_lower must be < y_upper",
               "y_lower")
        _check(len(self.lane_centers) >= 1, "need at least one lane center",
               "lane_centers")
        _check(list(self.lane_centers) == sorted(self.lane_centers),
               "lane_centers must be sorted ascending", "lane_centers")
        for c in self.lane_centers:
            _check(self.y_lower < c < self.y_upper,
                   "lane center outside road bounds", "lane_centers")
        _check(self.lane_width > 0, "lane_width must be > 0", "lane_width")

    def nearest_lane_index(self, y):
        return min(range(len(self.lane_centers)),
                   key=lambda i: abs(self.lane_centers[i] - y))

    def nearest_lane_center(self, y):
        return self.lane_centers[self.nearest_lane_index(y)]


@dataclass(frozen=True)
class BehaviorScript:
    """Scripted motion for an obstacle vehicle during simulation."""

    kind: str                      # constant_speed | accelerate_to |
    #                                emergency_brake_at | steer_avoid_at
    target: float | None = None    # [m/s] for accelerate_to
    x_trigger: float | None = None
    decel: float | None = None     # [m/s^2] magnitude for emergency_brake_at

    KINDS = ("constant_speed", "accelerate_to", "emergency_brake_at",
             "steer_avoid_at")

    def __post_init__(self):
        _check(self.kind in self.KINDS,
               f"unknown behavior kind {self.kind!r}", "behavior.kind")
        if self.kind == "accelerate_to":
            _check(self.target is not None and self.target >= 0,
                   "accelerate_to needs target >= 0", "behavior.target")
        if self.kind == "emergency_brake_at":
            _check(self.x_trigger is not None,
                   "emergency_brake_at needs x_trigger", "behavior.x_trigger")
        if self.kind == "steer_avoid_at":
            _check(self.x_trigger is not None,
                   "steer_avoid_at needs x_trigger", "behavior.x_trigger")


@dataclass(frozen=True)
class ObstacleSpec:
    descriptor: VehicleDescriptor
    state: VehicleState
    behavior: BehaviorScript


@dataclass(frozen=True)
class PlatoonConfig:
    """Platoon roster ordered front to rear (index 0 = head, -1 = tail)."""

    members: tuple            # tuple of (VehicleDescriptor, VehicleState)
    tau: float                # [s] time headway
    d_safe_min: float         # [m] fixed spacing floor

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        _check(len(self.members) >= 1, "platoon needs >= 1 member",
               "platoon.members")
        _check(self.tau > 0, "tau must be > 0", "platoon.tau")
        _check(self.d_safe_min >= 0, "d_safe_min must be >= 0",
               "platoon.d_safe_min")


@dataclass(frozen=True)
class ScenarioConfig:
    road: RoadGeometry
    ego_descriptor: VehicleDescriptor
    ego_state: VehicleState
    ego_target_speed: float
    obstacles: tuple                 # tuple of ObstacleSpec
    platoon: PlatoonConfig | None
    mode: str
    dt: float
    duration: float
    speed_limit: float

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        _check(self.dt > 0, "dt must be > 0", "dt")
        _check(self.duration > self.dt, "duration must be > dt", "duration")
        _check(self.speed_limit > 0, "speed_limit must be > 0", "speed_limit")
        _check(self.mode in MODES, f"mode must be one of {MODES}", "mode")
        _check(self.ego_target_speed >= 0, "target_speed must be >= 0",
               "ego.target_speed")
        if self.platoon is not None:
            xs = [s.x for _, s in self.platoon.members]
            _check(xs == sorted(xs, reverse=True),
                   "platoon members must be ordered front to rear by x",
                   "platoon.members")


@dataclass(frozen=True)
class SceneSnapshot:
    """Planner input: everything known about the world at one instant."""

    time: float
    road: RoadGeometry
    ego: tuple                       # (VehicleDescriptor, VehicleState)
    obstacles: tuple                 # tuple of (descriptor, state)
    mode: str
    speed_limit: float
    ego_target_speed: float
    platoon: PlatoonConfig | None = None
    platoon_states: tuple | None = None   # live states, same order as members

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.platoon_states is not None:
            object.__setattr__(self, "platoon_states",
                               tuple(self.platoon_states))

    def platoon_live(self):
        """(descriptor, state) pairs for the platoon, head first."""
        if self.platoon is None:
            return ()
        states = self.platoon_states
        if states is None:
            states = tuple(s for _, s in self.platoon.members)
        return tuple((d, s) for (d, _), s
                     in zip(self.platoon.members, states))


def validate_scene(scene):
    """Collect invariant violations for a snapshot; empty list means valid."""
    problems = []

    def check_vehicle(tag, desc, state):
        if desc.length <= 0:
            problems.append(f"{tag}: length must be > 0")
        if desc.width <= 0:
            problems.append(f"{tag}: width must be > 0")
        vals = (state.x, state.y, state.heading, state.sideslip,
                state.v_long, state.v_lat, state.yaw_rate)
        if not _finite(*vals):
            problems.append(f"{tag}: non-finite state value")
        if abs(state.sideslip) >= math.pi / 2:
            problems.append(f"{tag}: |sideslip| must be < pi/2")

    check_vehicle("ego", *scene.ego)
    for i, (desc, state) in enumerate(scene.obstacles):
        check_vehicle(f"obstacle[{i}]", desc, state)
    if scene.mode not in MODES:
        problems.append(f"mode must be one of {MODES}")
    if scene.speed_limit <= 0:
        problems.append("speed_limit must be > 0")
    live = scene.platoon_live()
    for i, (desc, state) in enumerate(live):
        check_vehicle(f"platoon[{i}]", desc, state)
    xs = [s.x for _, s in live]
    if xs != sorted(xs, reverse=True):
        problems.append("platoon members out of order by x "
                        "(head must be frontmost)")
    return problems


def scene_from_config(config, time=0.0):
    """Initial snapshot of a scenario (states as configured)."""
    return SceneSnapshot(
        time=time,
        road=config.road,
        ego=(config.ego_descriptor, config.ego_state),
        obstacles=tuple((o.descriptor, o.state) for o in config.obstacles),
        mode=config.mode,
        speed_limit=config.speed_limit,
        ego_target_speed=config.ego_target_speed,
        platoon=config.platoon,
        platoon_states=(tuple(s for _, s in config.platoon.members)
                        if config.platoon else None),
    )


# ---------------------------------------------------------------------------
# Scenario file I/O. Files are UTF-8 JSON; unknown keys are rejected so typos
# fail loudly instead of silently using defaults.
# ---------------------------------------------------------------------------

_DESCRIPTOR_KEYS = {"id", "length", "width", "a_accel_max", "a_brake_min",
                    "a_brake_max", "a_lat_accel_max", "a_lat_brake_min",
                    "reaction_time", "connected"}
_STATE_KEYS = {"x", "y", "heading", "sideslip", "v_long", "v_lat",
               "yaw_rate", "steering", "accel_cmd"}
_ROAD_KEYS = {"y_lower", "y_upper", "lane_centers", "lane_width",
              "side_lane_end_x", "merge_zone"}
_BEHAVIOR_KEYS = {"kind", "target", "x_trigger", "decel"}
_TOP_KEYS = {"road", "ego", "obstacles", "platoon", "mode", "dt",
             "duration", "speed_limit"}


def _reject_unknown(mapping, allowed, context):
    unknown = set(mapping) - allowed
    _check(not unknown,
           f"{context}: unknown key(s) {sorted(unknown)}", context)


def _parse_descriptor(d, context):
    _check(isinstance(d, dict), f"{context}: descriptor must be an object",
           context)
    _reject_unknown(d, _DESCRIPTOR_KEYS, f"{context}.descriptor")
    for req in ("id", "length", "width", "a_accel_max", "a_brake_min",
                "a_brake_max"):
        _check(req in d, f"{context}.descriptor: missing {req!r}",
               f"{context}.{req}")
    try:
        return VehicleDescriptor(**d)
    except ScenarioError as e:
        raise ScenarioError(f"{context}.descriptor: {e}", e.field_name)


def _parse_state(d, context):
    _check(isinstance(d, dict), f"{context}: state must be an object",
           context)
    _reject_unknown(d, _STATE_KEYS, f"{context}.state")
    try:
        return VehicleState(**d)
    except ScenarioError as e:
        raise ScenarioError(f"{context}.state: {e}", e.field_name)


def _parse_road(d):
    _check(isinstance(d, dict), "road must be an object", "road")
    _reject_unknown(d, _ROAD_KEYS, "road")
    for req in ("y_lower", "y_upper", "lane_centers"):
        _check(req in d, f"road: missing {req!r}", f"road.{req}")
    try:
        return RoadGeometry(**d)
    except ScenarioError as e:
        raise ScenarioError(f"road: {e}", e.field_name)


def _parse_behavior(d, context):
    _check(isinstance(d, dict), f"{context}: behavior must be an object",
           context)
    _reject_unknown(d, _BEHAVIOR_KEYS, f"{context}.behavior")
    _check("kind" in d, f"{context}.behavior: missing 'kind'",
           f"{context}.kind")
    try:
        return BehaviorScript(**d)
    except ScenarioError as e:
        raise ScenarioError(f"{context}.behavior: {e}", e.field_name)


def scenario_from_dict(data):
    _check(isinstance(data, dict), "scenario root must be an object", "root")
    _reject_unknown(data, _TOP_KEYS, "scenario")
    for req in ("road", "ego", "obstacles", "mode", "dt", "duration",
                "speed_limit"):
        _check(req in data, f"scenario: missing top-level {req!r}", req)

    road = _parse_road(data["road"])

    ego = data["ego"]
    _check(isinstance(ego, dict), "ego must be an object", "ego")
    _reject_unknown(ego, {"descriptor", "state", "target_speed"}, "ego")
    for req in ("descriptor", "state", "target_speed"):
        _check(req in ego, f"ego: missing {req!r}", f"ego.{req}")
    ego_desc = _parse_descriptor(ego["descriptor"], "ego")
    ego_state = _parse_state(ego["state"], "ego")

    obstacles = []
    _check(isinstance(data["obstacles"], list), "obstacles must be a list",
           "obstacles")
    for i, od in enumerate(data["obstacles"]):
        ctx = f"obstacles[{i}]"
        _check(isinstance(od, dict), f"{ctx} must be an object", ctx)
        _reject_unknown(od, {"descriptor", "state", "behavior"}, ctx)
        for req in ("descriptor", "state", "behavior"):
            _check(req in od, f"{ctx}: missing {req!r}", f"{ctx}.{req}")
        obstacles.append(ObstacleSpec(
            _parse_descriptor(od["descriptor"], ctx),
            _parse_state(od["state"], ctx),
            _parse_behavior(od["behavior"], ctx),
        ))

    platoon = None
    if data.get("platoon") is not None:
        pd = data["platoon"]
        _check(isinstance(pd, dict), "platoon must be an object", "platoon")
        _reject_unknown(pd, {"members", "tau", "d_safe_min"}, "platoon")
        for req in ("members", "tau", "d_safe_min"):
            _check(req in pd, f"platoon: missing {req!r}", f"platoon.{req}")
        members = []
        for i, md in enumerate(pd["members"]):
            ctx = f"platoon.members[{i}]"
            _check(isinstance(md, dict), f"{ctx} must be an object", ctx)
            _reject_unknown(md, {"descriptor", "state"}, ctx)
            members.append((_parse_descriptor(md["descriptor"], ctx),
                            _parse_state(md["state"], ctx)))
        platoon = PlatoonConfig(tuple(members), pd["tau"], pd["d_safe_min"])

    return ScenarioConfig(
        road=road,
        ego_descriptor=ego_desc,
        ego_state=ego_state,
        ego_target_speed=ego["target_speed"],
        obstacles=tuple(obstacles),
        platoon=platoon,
        mode=data["mode"],
        dt=data["dt"],
        duration=data["duration"],
        speed_limit=data["speed_limit"],
    )


def scenario_to_dict(config):
    """Inverse of scenario_from_dict (round-trips exactly through JSON)."""
    def desc_dict(d):
        out = asdict(d)
        return out

    def state_dict(s):
        return asdict(s)

    road = {k: v for k, v in asdict(config.road).items()}
    road["lane_centers"] = list(config.road.lane_centers)
    if road.get("merge_zone") is not None:
        road["merge_zone"] = list(road["merge_zone"])

    data = {
        "road": road,
        "ego": {
            "descriptor": desc_dict(config.ego_descriptor),
            "state": state_dict(config.ego_state),
            "target_speed": config.ego_target_speed,
        },
        "obstacles": [
            {"descriptor": desc_dict(o.descriptor),
             "state": state_dict(o.state),
             "behavior": {k: v for k, v in asdict(o.behavior).items()
                          if v is not None}}
            for o in config.obstacles
        ],
        "platoon": None,
        "mode": config.mode,
        "dt": config.dt,
        "duration": config.duration,
        "speed_limit": config.speed_limit,
    }
    if config.platoon is not None:
        data["platoon"] = {
            "members": [{"descriptor": desc_dict(d), "state": state_dict(s)}
                        for d, s in config.platoon.members],
            "tau": config.platoon.tau,
            "d_safe_min": config.platoon.d_safe_min,
        }
    return data


def load_scenario(path):
    """Load and fully validate a scenario file.

    Raises ScenarioError with line/field context for malformed input.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(
            f"{path}: parse error at line {e.lineno}, column {e.colno}: "
            f"{e.msg}")
    try:
        return scenario_from_dict(data)
    except ScenarioError as e:
        raise ScenarioError(f"{path}: {e}", e.field_name)


def save_scenario(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(config), fh, indent=2)
        fh.write("\n")
