"""Rule-based merge and emergency planning for connected and non-connected
traffic.

The planner is a decision procedure over scene snapshots: each call
classifies the situation into exactly one clause, solves the clause's
inequality for the ego speed target (and, cooperatively, for the speed
requests sent to other vehicles), and returns a PlanDecision carrying the
maneuver, the generated lane-change parameters, and the V2V messages
produced. Non-cooperative rules need no channel; cooperative rules fall
back to the non-cooperative procedure when the counterpart never responds
within the response deadline.
"""

import math
from dataclasses import dataclass, field, replace

from .core import DelayProfile, SceneSnapshot
from .rss import LateralConfig, safe_longitudinal_distance, rss_gap
from .sigmoid import (DEFAULT_KAPPA_BOUNDS, ObstacleBound, SigmoidParams,
                      comfort_kappa_limit, feasible_ranges, kappa_for_span,
                      mirror_params, span_for_kappa)

# Maneuver classes
MERGE_AHEAD = "merge_ahead"
MERGE_BEHIND = "merge_behind"
HOLD_AND_STOP = "hold_and_stop"
BRAKE_THEN_MERGE_AHEAD_OF_PLATOON = "brake_then_merge_ahead_of_platoon"
JOIN_PLATOON_MID = "join_platoon_mid"
JOIN_PLATOON_REAR = "join_platoon_rear"
KEEP_LANE_BRAKE = "keep_lane_brake"
REVOKE = "revoke"

LANE_CHANGE_MANEUVERS = (MERGE_AHEAD, MERGE_BEHIND,
                         BRAKE_THEN_MERGE_AHEAD_OF_PLATOON,
                         JOIN_PLATOON_MID, JOIN_PLATOON_REAR)

# Message kinds
MERGE_REQUEST = "merge_request"
EMERGENCY_REQUEST = "emergency_request"
ACK = "ack"
NACK = "nack"

SPEED_TOL = 0.01
MAX_BISECT = 64


@dataclass(frozen=True)
class V2VMessage:
    sender: str
    recipient: str
    sent_at: float
    p_c: float
    d_rss_long_star: float
    kind: str
    requested_speed: float | None = None

    def __post_init__(self):
        if self.sent_at < 0:
            raise ValueError("sent_at must be >= 0")
        if self.d_rss_long_star < 0:
            raise ValueError("d_rss_long_star must be >= 0")


@dataclass(frozen=True)
class PlanDecision:
    maneuver: str
    v_e_star: float
    justification: str
    path: SigmoidParams | None = None
    coop_requests: tuple = ()
    messages: tuple = ()
    plan_time: float = 0.0
    trigger_time: float = 0.0

    def __post_init__(self):
        if (self.maneuver in LANE_CHANGE_MANEUVERS
                and self.path is None):
            raise ValueError(
                f"lane-change maneuver {self.maneuver} requires a path")


@dataclass(frozen=True)
class PlatoonSpec:
    """Planning-side platoon description (head first)."""

    members: tuple            # tuple of (VehicleDescriptor, VehicleState)
    tau: float
    d_safe_min: float

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if len(self.members) < 1:
            raise ValueError("platoon needs >= 1 member")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.d_safe_min < 0:
            raise ValueError("d_safe_min must be >= 0")

    @property
    def head(self):
        return self.members[0]

    @property
    def tail(self):
        return self.members[-1]


def platoon_spec_from_scene(scene):
    live = scene.platoon_live()
    if not live:
        return None
    return PlatoonSpec(live, scene.platoon.tau, scene.platoon.d_safe_min)


# ---------------------------------------------------------------------------
# Simulated V2V channel
# ---------------------------------------------------------------------------

class V2VChannel:
    """Fixed-delay, lossless, FIFO-per-sender message channel.

    Responsive recipients acknowledge requests one round-trip after the
    send; unresponsive (or non-connected) recipients never do. drop_all
    models a dead channel.
    """

    def __init__(self, delay=0.0005, responsive=None, drop_all=False):
        self.delay = delay
        self.responsive = dict(responsive or {})
        self.drop_all = drop_all
        self._queue = []
        self._seq = 0
        self.log = []

    def is_responsive(self, vehicle_id):
        if self.drop_all:
            return False
        return self.responsive.get(vehicle_id, True)

    def send(self, message):
        self.log.append(message)
        if self.drop_all:
            return
        self._seq += 1
        self._queue.append((message.sent_at + self.delay, self._seq, message))
        if (message.kind in (MERGE_REQUEST, EMERGENCY_REQUEST)
                and self.is_responsive(message.recipient)):
            self._seq += 1
            ack = V2VMessage(sender=message.recipient,
                             recipient=message.sender,
                             sent_at=message.sent_at + self.delay,
                             p_c=message.p_c,
                             d_rss_long_star=message.d_rss_long_star,
                             requested_speed=message.requested_speed,
                             kind=ACK)
            self._queue.append((ack.sent_at + self.delay, self._seq, ack))

    def poll(self, recipient, now):
        """Pop every message deliverable to `recipient` by `now`, in
        delivery order."""
        due = sorted([q for q in self._queue
                      if q[2].recipient == recipient and q[0] <= now],
                     key=lambda q: (q[0], q[1]))
        for item in due:
            self._queue.remove(item)
        return [m for _, _, m in due]


def channel_send(channel, message, now=None):
    channel.send(message)


def channel_poll(channel, recipient, now):
    return channel.poll(recipient, now)


# ---------------------------------------------------------------------------
# Merge rules
# ---------------------------------------------------------------------------

def merge_obstacle(scene, target_lane_y, lane_tol=None):
    """Nearest relevant vehicle on the target (main) lane plus the next one
    ahead of it. Returns ((desc, state) or None, (desc, state) or None)."""
    road = scene.road
    tol = lane_tol if lane_tol is not None else road.lane_width / 2.0
    ego_x = scene.ego[1].x
    on_lane = [(d, s) for d, s in scene.obstacles
               if abs(s.y - target_lane_y) <= tol]
    if not on_lane:
        return None, None
    j = min(on_lane, key=lambda ds: abs(ds[1].x - ego_x))
    ahead_of_j = [(d, s) for d, s in on_lane if s.x > j[1].x]
    jp1 = min(ahead_of_j, key=lambda ds: ds[1].x) if ahead_of_j else None
    return j, jp1


def _adjacent(ego_desc, ego_state, obs_desc, obs_state):
    return (abs(obs_state.x - ego_state.x)
            < (ego_desc.length + obs_desc.length))


def check_merge_ahead_noncoop(scene, v_e_star, delays, obstacle=None):
    """Cut-in-ahead rule: over half the lane-change window the main-lane
    vehicle may keep accelerating flat out; the ego, holding v_e_star, must
    still be a full safe distance ahead at the crossing instant."""
    ego_desc, ego_state = scene.ego
    if obstacle is None:
        obstacle, _ = merge_obstacle(
            scene, _merge_target_y(scene))
    if obstacle is None:
        return True
    obs_desc, obs_state = obstacle
    rho_lc = delays.rho_lc
    v_o_worst = obs_state.v_long + obs_desc.a_accel_max * rho_lc / 2.0
    d = safe_longitudinal_distance(obs_desc, v_o_worst, ego_desc, v_e_star,
                                   delays)
    lhs = (obs_state.x + obs_state.v_long * rho_lc / 2.0
           + obs_desc.a_accel_max * rho_lc ** 2 / 8.0)
    rhs = ego_state.x + v_e_star * rho_lc / 2.0 - d
    return lhs <= rhs


def check_merge_behind_noncoop(scene, v_e_star, delays, obstacle=None):
    """Fall-in-behind rule: holding v_e_star for the whole window must keep
    the ego a safe distance behind the main-lane vehicle."""
    ego_desc, ego_state = scene.ego
    if obstacle is None:
        obstacle, _ = merge_obstacle(scene, _merge_target_y(scene))
    if obstacle is None:
        return True
    obs_desc, obs_state = obstacle
    rho_lc = delays.rho_lc
    d = safe_longitudinal_distance(ego_desc, v_e_star, obs_desc,
                                   obs_state.v_long, delays)
    lhs = ego_state.x + v_e_star * rho_lc
    rhs = obs_state.x + obs_state.v_long * rho_lc - d
    return lhs <= rhs


def required_merge_speed(scene, mode, delays, speed_limit):
    """Threshold ego speed for a non-cooperative merge.

    ahead: minimal speed passing the cut-in-ahead rule (the feasible set is
    upward closed). behind: maximal speed passing the fall-in-behind rule
    (downward closed). Bisection to SPEED_TOL; None when infeasible or when
    the main-lane vehicle is physically alongside.
    """
    ego_desc, ego_state = scene.ego
    obstacle, _ = merge_obstacle(scene, _merge_target_y(scene))
    if obstacle is not None and _adjacent(ego_desc, ego_state, *obstacle):
        return None
    if mode == "ahead":
        check = check_merge_ahead_noncoop
        if not check(scene, speed_limit, delays, obstacle):
            return None
        if check(scene, 0.0, delays, obstacle):
            return 0.0
        lo, hi = 0.0, speed_limit            # f(lo)=False, f(hi)=True
        for _ in range(MAX_BISECT):
            if hi - lo <= SPEED_TOL:
                break
            mid = 0.5 * (lo + hi)
            if check(scene, mid, delays, obstacle):
                hi = mid
            else:
                lo = mid
        return hi
    if mode == "behind":
        check = check_merge_behind_noncoop
        if not check(scene, 0.0, delays, obstacle):
            return None
        if check(scene, speed_limit, delays, obstacle):
            return speed_limit
        lo, hi = 0.0, speed_limit            # f(lo)=True, f(hi)=False
        for _ in range(MAX_BISECT):
            if hi - lo <= SPEED_TOL:
                break
            mid = 0.5 * (lo + hi)
            if check(scene, mid, delays, obstacle):
                lo = mid
            else:
                hi = mid
        return lo
    raise ValueError(f"unknown merge mode {mode!r}")


# ---------------------------------------------------------------------------
# Cooperative speed solves (each inequality is linear in the unknown speed)
# ---------------------------------------------------------------------------

INEQ_MERGE_YIELD = "merge_yield"             # target brakes; upper bound
INEQ_MERGE_ADVANCE = "merge_advance"         # target accelerates; lower bound
INEQ_PLATOON_HEAD_YIELD = "platoon_head_yield"
INEQ_PLATOON_TAIL_ADVANCE = "platoon_tail_advance"


def cooperative_speed_solve(inequality_id, params, speed_limit):
    """Closed-form boundary speed for a cooperation request, clamped to
    [0, speed_limit]; None when the clamped interval is empty.

    Yield-type rules product an upper bound (the counterpart may keep any
    speed at or below it); advance-type rules a lower bound.
    """
    p = params
    if inequality_id == INEQ_MERGE_YIELD:
        # x_o + (v_o + v)/2 * rct + v * rlc/2 <= p_c - d_star
        denom = p["rho_ct"] / 2.0 + p["rho_lc"] / 2.0
        bound = (p["p_c"] - p["d_star"] - p["x_o"]
                 - p["v_o"] * p["rho_ct"] / 2.0) / denom
        upper = True
    elif inequality_id == INEQ_MERGE_ADVANCE:
        # x_e + v_e*rct - a_brake_min*rct^2/2 <= x_o + (v + v_o)/2*rct - d_j
        lhs = (p["x_e"] + p["v_e"] * p["rho_ct"]
               - p["a_brake_min"] * p["rho_ct"] ** 2 / 2.0)
        bound = 2.0 * (lhs - p["x_o"] + p["d_j"]) / p["rho_ct"] - p["v_o"]
        upper = False
    elif inequality_id == INEQ_PLATOON_HEAD_YIELD:
        # p_c - d_star - (x_p + (v_p + v)/2 * rct) >= v_p*tau + d_min + hl
        bound = 2.0 * (p["p_c"] - p["d_star"] - p["x_p"]
                       - p["v_p"] * p["tau"] - p["d_min"]
                       - p["half_lengths"]) / p["rho_ct"] - p["v_p"]
        upper = True
    elif inequality_id == INEQ_PLATOON_TAIL_ADVANCE:
        # x_p + (v_p + v)/2 * rct - (p_c - d_star) >= v_e*tau + d_min + hl
        bound = 2.0 * (p["v_e"] * p["tau"] + p["d_min"] + p["half_lengths"]
                       + p["p_c"] - p["d_star"] - p["x_p"]) / p["rho_ct"] \
            - p["v_p"]
        upper = False
    else:
        raise ValueError(f"unknown inequality id {inequality_id!r}")

    if upper:
        if bound < 0:
            return None
        return min(bound, speed_limit)
    bound = max(bound, 0.0)
    if bound > speed_limit:
        return None
    return bound


def rss_following_cap(rear_desc, front_desc, v_front, gap, delays,
                      speed_limit):
    """Largest rear speed whose safe distance still fits in `gap`."""
    def ok(v):
        return safe_longitudinal_distance(rear_desc, v, front_desc, v_front,
                                          delays) <= gap
    if ok(speed_limit):
        return speed_limit
    if not ok(0.0):
        return 0.0
    lo, hi = 0.0, speed_limit
    for _ in range(MAX_BISECT):
        if hi - lo <= SPEED_TOL:
            break
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# Lane geometry helpers and path construction
# ---------------------------------------------------------------------------

def _merge_target_y(scene):
    """Main-lane center for a merge: the adjacent lane on the side away
    from the nearest road edge."""
    road = scene.road
    ego_y = scene.ego[1].y
    idx = road.nearest_lane_index(ego_y)
    centers = road.lane_centers
    if len(centers) < 2:
        return centers[0]
    if idx == 0:
        return centers[1]
    if idx == len(centers) - 1:
        return centers[-2]
    mid = 0.5 * (road.y_lower + road.y_upper)
    return centers[idx + 1] if ego_y <= mid else centers[idx - 1]


@dataclass(frozen=True)
class PathSpec:
    """Inputs for building one lane-change sigmoid in road coordinates."""

    start_y: float
    target_y: float
    p_c: float
    kappa: float


def build_change_path(road, ego_width, spec, behind=None, ahead=None):
    """SigmoidParams for a lane change, honoring the printed lateral bounds.

    behind/ahead are ObstacleBound neighbours already expressed in the
    upward frame when the change is upward; for downward changes the caller
    normally passes None (the planner validates neighbours separately) and
    this function mirrors internally.
    """
    upward = spec.target_y > spec.start_y
    if upward:
        start_y, target_y = spec.start_y, spec.target_y
        b_lo = road.y_lower + ego_width / 2.0
        wb_hi = road.y_upper - ego_width / 2.0
    else:
        axis = road.y_lower + road.y_upper
        start_y, target_y = axis - spec.start_y, axis - spec.target_y
        b_lo = road.y_lower + ego_width / 2.0
        wb_hi = road.y_upper - ego_width / 2.0

    b_hi = start_y
    if ahead is not None:
        b_hi = min(b_hi, ahead.y - ahead.d_lat)
    wb_lo = target_y
    if behind is not None:
        wb_lo = max(wb_lo, behind.y - behind.d_lat)
    if b_lo >= b_hi or wb_lo >= wb_hi:
        return None

    eps = 1e-9
    b = min(max(start_y, b_lo + eps), b_hi)
    wb = min(max(target_y, wb_lo + eps), wb_hi)
    params = SigmoidParams(w=wb - b, kappa=spec.kappa, p_c=spec.p_c, b=b)
    if not upward:
        params = mirror_params(params, road)
    return params


def _ramp_distance(v_from, v_to, accel_up, brake_down):
    """Longitudinal distance covered while adjusting speed."""
    if v_to >= v_from:
        a = accel_up
    else:
        a = brake_down
    return abs(v_to ** 2 - v_from ** 2) / (2.0 * a)


def _side_lane_kappa(road, x_commit, v_commit, width, bounds, a_lat_comfort):
    """Smallest admissible slope that still completes the change before the
    side lane runs out."""
    kappa = bounds[0]
    if road.side_lane_end_x is not None:
        window = road.side_lane_end_x - x_commit - v_commit * 0.5
        if window > 1.0:
            kappa = max(kappa, kappa_for_span(width, window))
    return min(max(kappa, bounds[0]),
               max(comfort_kappa_limit(width, v_commit, a_lat_comfort),
                   bounds[0]))


# ---------------------------------------------------------------------------
# plan_merge
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MergePolicy:
    order: str = "ahead_first"          # or "behind_first"
    kappa_bounds: tuple = DEFAULT_KAPPA_BOUNDS
    a_lat_comfort: float = 4.0
    stop_margin: float = 5.0            # [m] clearance before side-lane end


def _merge_path(scene, delays, lat_cfg, policy, v_commit, ahead_of_obstacle,
                kappa=None, p_c_hint=None):
    """Sigmoid for a merge at committed speed v_commit; None to revoke."""
    ego_desc, ego_state = scene.ego
    road = scene.road
    target_y = _merge_target_y(scene)
    start_y = road.nearest_lane_center(ego_state.y)
    j, jp1 = merge_obstacle(scene, target_y)

    ramp = _ramp_distance(ego_state.v_long, v_commit,
                          ego_desc.a_accel_max, ego_desc.a_brake_min)
    x_commit = ego_state.x + ramp
    p_c = (p_c_hint if p_c_hint is not None
           else x_commit + v_commit * delays.rho_lc / 2.0)

    behind = ahead = None
    if ahead_of_obstacle and j is not None:
        j_desc, j_state = j
        gap = rss_gap(ego_desc, replace(ego_state, v_long=v_commit),
                      j_desc, j_state, delays, lat_cfg,
                      ego_is_rear=False,
                      ego_is_lower=ego_state.y <= j_state.y)
        behind = ObstacleBound(x=j_state.x, y=j_state.y,
                               d_long=gap.d_long, d_lat=gap.d_lat)
        front = jp1
    else:
        front = j
    if front is not None:
        f_desc, f_state = front
        fgap = rss_gap(ego_desc, replace(ego_state, v_long=v_commit),
                       f_desc, f_state, delays, lat_cfg,
                       ego_is_rear=True,
                       ego_is_lower=ego_state.y <= f_state.y)
        ahead = ObstacleBound(x=f_state.x, y=f_state.y,
                              d_long=fgap.d_long, d_lat=fgap.d_lat)

    width = abs(target_y - start_y)
    if kappa is None:
        kappa = _side_lane_kappa(road, x_commit, v_commit, width,
                                 policy.kappa_bounds, policy.a_lat_comfort)

    # Clamp the centrosymmetric point into the printed feasibility window
    # evaluated in the upward frame.
    upward = target_y > start_y
    if upward:
        fr = feasible_ranges(road, ego_desc.width, start_y, target_y,
                             behind=behind, ahead=ahead)
    else:
        axis = road.y_lower + road.y_upper
        mirror = (lambda ob: None if ob is None else
                  replace(ob, y=axis - ob.y))
        fr = feasible_ranges(road, ego_desc.width, axis - start_y,
                             axis - target_y, behind=mirror(behind),
                             ahead=mirror(ahead))
    if not fr.feasible:
        return None
    lo, hi = fr.pc_range
    if fr.pc_pinned:
        p_c = lo
    else:
        p_c = min(max(p_c, lo), hi)
    if road.side_lane_end_x is not None:
        latest = (road.side_lane_end_x - policy.stop_margin
                  - span_for_kappa(width, kappa) / 2.0)
        if p_c > latest:
            p_c = latest
        if p_c < lo:
            return None
    if p_c < x_commit - 1e-9:
        return None

    return build_change_path(road, ego_desc.width,
                             PathSpec(start_y, target_y, p_c, kappa),
                             behind=behind if upward else None,
                             ahead=ahead if upward else None)


def _noncoop_merge(scene, delays, lat_cfg, policy, messages=()):
    ego_desc, ego_state = scene.ego
    attempts = (("ahead", "behind") if policy.order == "ahead_first"
                else ("behind", "ahead"))
    for mode in attempts:
        v_star = required_merge_speed(scene, mode, delays, scene.speed_limit)
        if v_star is None:
            continue
        if mode == "ahead":
            # No point slowing below the cruise target just because the
            # rule would allow it.
            v_commit = min(max(v_star, min(scene.ego_target_speed,
                                           scene.speed_limit)),
                           scene.speed_limit)
            if not check_merge_ahead_noncoop(scene, v_commit, delays):
                v_commit = v_star
            path = _merge_path(scene, delays, lat_cfg, policy, v_commit,
                               ahead_of_obstacle=True)
            justification = "def1_1"
            maneuver = MERGE_AHEAD
        else:
            v_commit = min(v_star, scene.ego_target_speed,
                           scene.speed_limit)
            path = _merge_path(scene, delays, lat_cfg, policy, v_commit,
                               ahead_of_obstacle=False)
            justification = "def1_2"
            maneuver = MERGE_BEHIND
        if path is None:
            continue
        return PlanDecision(maneuver=maneuver, v_e_star=v_commit,
                            justification=justification, path=path,
                            messages=tuple(messages),
                            plan_time=scene.time, trigger_time=scene.time)
    return PlanDecision(maneuver=HOLD_AND_STOP, v_e_star=0.0,
                        justification="def1_3", messages=tuple(messages),
                        plan_time=scene.time, trigger_time=scene.time)


def plan_merge(scene, mode, channel, delays, lat_cfg=LateralConfig(),
               policy=MergePolicy()):
    """Resolve a merge decision for the current snapshot.

    Non-cooperative: try the cut-in-ahead rule, then fall-in-behind, else
    stop before the side lane ends. Cooperative: request the main-lane
    vehicle to yield (ahead merge) or advance (behind merge); a silent
    counterpart degrades to the non-cooperative procedure with the sent
    (undelivered) messages retained on the decision.
    """
    if mode == "non_cooperative":
        return _noncoop_merge(scene, delays, lat_cfg, policy)
    if mode != "cooperative":
        raise ValueError(f"unknown mode {mode!r}")

    ego_desc, ego_state = scene.ego
    target_y = _merge_target_y(scene)
    j, jp1 = merge_obstacle(scene, target_y)
    if j is None:
        return _noncoop_merge(scene, delays, lat_cfg, policy)
    j_desc, j_state = j
    if _adjacent(ego_desc, ego_state, j_desc, j_state):
        return _noncoop_merge(scene, delays, lat_cfg, policy)
    v_e = ego_state.v_long

    # Ahead merge: ask the main-lane vehicle to yield.
    p_c = ego_state.x + v_e * (delays.rho_ct + delays.rho_lc / 2.0)
    d_star = safe_longitudinal_distance(j_desc, j_state.v_long, ego_desc,
                                        v_e, delays)
    v_yield = cooperative_speed_solve(
        INEQ_MERGE_YIELD,
        {"p_c": p_c, "d_star": d_star, "x_o": j_state.x,
         "v_o": j_state.v_long, "rho_ct": delays.rho_ct,
         "rho_lc": delays.rho_lc},
        scene.speed_limit)
    if v_yield is not None and jp1 is not None:
        jp1_desc, jp1_state = jp1
        cap = rss_following_cap(j_desc, jp1_desc, jp1_state.v_long,
                                jp1_state.x - j_state.x, delays,
                                scene.speed_limit)
        v_yield = min(v_yield, cap)

    if v_yield is not None:
        kappa = kappa_for_span(abs(target_y
                                   - scene.road.nearest_lane_center(
                                       ego_state.y)),
                               max(v_e, 1.0) * delays.rho_lc)
        kappa = max(policy.kappa_bounds[0],
                    min(kappa,
                        comfort_kappa_limit(
                            abs(target_y - scene.road.nearest_lane_center(
                                ego_state.y)),
                            max(v_e, 1.0), policy.a_lat_comfort)))
        path = _merge_path(scene, delays, lat_cfg, policy, v_e,
                           ahead_of_obstacle=True, kappa=kappa,
                           p_c_hint=p_c)
        # A yield bound at or above the vehicle's own speed asks for
        # nothing; announce the crossing without a speed request.
        speed_ask = v_yield if v_yield < j_state.v_long else None
        request = V2VMessage(sender=ego_desc.id, recipient=j_desc.id,
                             sent_at=scene.time, p_c=p_c,
                             d_rss_long_star=d_star,
                             requested_speed=speed_ask, kind=MERGE_REQUEST)
        channel.send(request)
        if channel.is_responsive(j_desc.id) and path is not None:
            ack = V2VMessage(sender=j_desc.id, recipient=ego_desc.id,
                             sent_at=scene.time + channel.delay,
                             p_c=p_c, d_rss_long_star=d_star,
                             requested_speed=speed_ask, kind=ACK)
            requests = (((j_desc.id, speed_ask),)
                        if speed_ask is not None else ())
            return PlanDecision(maneuver=MERGE_AHEAD, v_e_star=v_e,
                                justification="def2_1B", path=path,
                                coop_requests=requests,
                                messages=(request, ack),
                                plan_time=scene.time,
                                trigger_time=scene.time)
        if not channel.is_responsive(j_desc.id):
            return replace(_noncoop_merge(scene, delays, lat_cfg, policy),
                           messages=(request,))
        # responsive but the geometry offers no feasible path: revoke to the
        # non-cooperative procedure on the same scene
        return replace(_noncoop_merge(scene, delays, lat_cfg, policy),
                       messages=(request,))

    # Behind merge: ask the main-lane vehicle to advance.
    d_j = safe_longitudinal_distance(ego_desc, v_e, j_desc, j_state.v_long,
                                     delays)
    v_advance = cooperative_speed_solve(
        INEQ_MERGE_ADVANCE,
        {"x_e": ego_state.x, "v_e": v_e,
         "a_brake_min": ego_desc.a_brake_min, "x_o": j_state.x,
         "v_o": j_state.v_long, "d_j": d_j, "rho_ct": delays.rho_ct},
        scene.speed_limit)
    if v_advance is not None and jp1 is not None:
        jp1_desc, jp1_state = jp1
        cap = rss_following_cap(j_desc, jp1_desc, jp1_state.v_long,
                                jp1_state.x - j_state.x, delays,
                                scene.speed_limit)
        if v_advance > cap:
            v_advance = None
    if v_advance is not None:
        accelerated = SceneSnapshot(
            time=scene.time, road=scene.road, ego=scene.ego,
            obstacles=tuple(
                (d, replace(s, v_long=v_advance)) if d.id == j_desc.id
                else (d, s) for d, s in scene.obstacles),
            mode=scene.mode, speed_limit=scene.speed_limit,
            ego_target_speed=scene.ego_target_speed,
            platoon=scene.platoon, platoon_states=scene.platoon_states)
        v_behind = required_merge_speed(accelerated, "behind", delays,
                                        scene.speed_limit)
        request = V2VMessage(sender=ego_desc.id, recipient=j_desc.id,
                             sent_at=scene.time, p_c=p_c,
                             d_rss_long_star=d_j,
                             requested_speed=v_advance, kind=MERGE_REQUEST)
        channel.send(request)
        if channel.is_responsive(j_desc.id) and v_behind is not None:
            v_commit = min(v_behind, v_e)
            path = _merge_path(accelerated, delays, lat_cfg, policy,
                               v_commit, ahead_of_obstacle=False)
            if path is not None:
                ack = V2VMessage(sender=j_desc.id, recipient=ego_desc.id,
                                 sent_at=scene.time + channel.delay,
                                 p_c=p_c, d_rss_long_star=d_j,
                                 requested_speed=v_advance, kind=ACK)
                return PlanDecision(maneuver=MERGE_BEHIND,
                                    v_e_star=v_commit,
                                    justification="def2_2B", path=path,
                                    coop_requests=((j_desc.id, v_advance),),
                                    messages=(request, ack),
                                    plan_time=scene.time,
                                    trigger_time=scene.time)
        return replace(_noncoop_merge(scene, delays, lat_cfg, policy),
                       messages=(request,))

    return _noncoop_merge(scene, delays, lat_cfg, policy)


# ---------------------------------------------------------------------------
# Emergency rules
# ---------------------------------------------------------------------------

def front_vehicle(scene):
    """Nearest obstacle ahead of the ego in its own lane."""
    road = scene.road
    ego_state = scene.ego[1]
    tol = road.lane_width / 2.0
    ahead = [(d, s) for d, s in scene.obstacles
             if s.x > ego_state.x and abs(s.y - ego_state.y) <= tol]
    if not ahead:
        return None
    return min(ahead, key=lambda ds: ds[1].x)


def predicted_stop_x(desc, state):
    """Worst-case (earliest) stop position of a braking vehicle."""
    return state.x + state.v_long ** 2 / (2.0 * desc.a_brake_max)


def envelope_speed(ego_desc, front_desc, gap, delays, v_upper):
    """Largest ego speed whose safe distance to a stopped front vehicle
    fits in `gap` (the guard riding envelope)."""
    def ok(v):
        return safe_longitudinal_distance(ego_desc, v, front_desc, 0.0,
                                          delays) <= gap
    if gap <= 0 or not ok(0.0):
        return 0.0
    if ok(v_upper):
        return v_upper
    lo, hi = 0.0, v_upper
    for _ in range(MAX_BISECT):
        if hi - lo <= SPEED_TOL:
            break
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _envelope_profile(ego_desc, ego_state, front_desc, x_stop, x_target,
                      delays, brake, dt=0.05, max_steps=12000):
    """Forward-integrate the brake-and-ride-the-envelope longitudinal plan
    until x_target; returns (times, positions, speeds) arrays."""
    x = ego_state.x
    v = ego_state.v_long
    t = 0.0
    ts, xs, vs = [0.0], [x], [v]
    for _ in range(max_steps):
        if x >= x_target:
            break
        env = envelope_speed(ego_desc, front_desc, x_stop - x, delays,
                             max(v, 1.0) + 5.0)
        if v > env:
            v = max(v - brake * dt, 0.0)
        x += max(v, 0.05) * dt
        t += dt
        ts.append(t)
        xs.append(x)
        vs.append(v)
    import numpy as np
    return np.asarray(ts), np.asarray(xs), np.asarray(vs)


def _time_to_reach(ego_desc, ego_state, front_desc, x_stop, x_target,
                   delays, brake):
    ts, xs, vs = _envelope_profile(ego_desc, ego_state, front_desc, x_stop,
                                   x_target, delays, brake)
    return float(ts[-1]), float(vs[-1])


def check_emergency_ahead_of_head(scene, platoon, v_e_star, delays):
    """Merge-ahead-of-platoon gate: mirrors the cut-in-ahead rule with the
    platoon head as the rear vehicle."""
    ego_desc, ego_state = scene.ego
    head_desc, head_state = platoon.head
    rho_lc = delays.rho_lc
    v_head_worst = (head_state.v_long
                    + head_desc.a_accel_max * rho_lc / 2.0)
    d_star = safe_longitudinal_distance(head_desc, v_head_worst, ego_desc,
                                        v_e_star, delays)
    lhs = ego_state.x + v_e_star * rho_lc / 2.0 - d_star
    rhs = (head_state.x + head_state.v_long * rho_lc / 2.0
           + head_desc.a_accel_max * rho_lc ** 2 / 8.0)
    return lhs >= rhs


def check_emergency_behind_tail(scene, platoon, v_e_star, delays,
                                bumper_margin=2.0):
    """Join-behind-tail gate plus a physical bumper clearance now."""
    ego_desc, ego_state = scene.ego
    tail_desc, tail_state = platoon.tail
    rho_lc = delays.rho_lc
    d = safe_longitudinal_distance(ego_desc, v_e_star, tail_desc,
                                   tail_state.v_long, delays)
    ineq = (ego_state.x + v_e_star * rho_lc
            <= tail_state.x + tail_state.v_long * rho_lc - d)
    clear = (tail_state.x - ego_state.x
             >= (ego_desc.length + tail_desc.length) / 2.0 + bumper_margin)
    return ineq and clear


def check_front_vehicle_clear(scene, fv, v_e_star, delays):
    """Steering-avoidance companion gate against the departing front
    vehicle."""
    ego_desc, ego_state = scene.ego
    fv_desc, fv_state = fv
    rho_lc = delays.rho_lc
    d = safe_longitudinal_distance(ego_desc, v_e_star, fv_desc,
                                   fv_state.v_long, delays)
    return (ego_state.x + v_e_star * rho_lc
            <= fv_state.x + fv_state.v_long * rho_lc - d)


def check_cp_clear_of_front(scene, fv, p_c, delays):
    """Cooperative steering gate: the centrosymmetric point, reached one
    response deadline plus half a lane-change later, must stay a safe
    distance behind the departing front vehicle. The CP enters as an offset
    from the ego position."""
    ego_desc, ego_state = scene.ego
    fv_desc, fv_state = fv
    d = safe_longitudinal_distance(ego_desc, ego_state.v_long, fv_desc,
                                   fv_state.v_long, delays)
    lhs = ego_state.x + ego_state.v_long * delays.rho_ct \
        + (p_c - ego_state.x)
    rhs = (fv_state.x
           + fv_state.v_long * (delays.rho_ct + delays.rho_lc / 2.0) - d)
    return lhs <= rhs


def _head_position_profile(head_state, head_desc, v_star, t, t0=0.0):
    """Head position t seconds after a brake-to-v_star request, braking at
    its committed minimum."""
    if t <= t0:
        return head_state.x + head_state.v_long * t, head_state.v_long
    v0 = head_state.v_long
    a = head_desc.a_brake_min
    x = head_state.x + v0 * t0
    span = t - t0
    t_brake = max((v0 - v_star) / a, 0.0)
    if span <= t_brake:
        v = v0 - a * span
        x += v0 * span - 0.5 * a * span ** 2
        return x, v
    x += v0 * t_brake - 0.5 * a * t_brake ** 2
    x += v_star * (span - t_brake)
    return x, v_star


def solve_head_yield_speed(scene, platoon, p_c, v_cp, t_cp, delays,
                           ego_profile=None, entry_lead=0.0):
    """Largest head speed request securing the slot ahead of the platoon.

    Gates, each monotone in the request: the printed head-yield rule with
    the predicted-at-CP safe distance (head already at the requested
    speed); a CP-arrival re-check that integrates the head's actual
    braking profile; and, when an ego longitudinal profile is supplied, a
    sweep over the lateral-exposure window [t_cp - entry_lead, t_cp] that
    keeps the pair outside the longitudinal rule throughout the crossing.
    Returns (v_star, predicted_d_star) or (None, None).
    """
    ego_desc, _ = scene.ego
    head_desc, head_state = platoon.head
    half_l = (ego_desc.length + head_desc.length) / 2.0

    def d_star_for(v_star):
        return safe_longitudinal_distance(head_desc, v_star, ego_desc,
                                          v_cp, delays)

    def ok(v_star):
        printed = cooperative_speed_solve(
            INEQ_PLATOON_HEAD_YIELD,
            {"p_c": p_c, "d_star": d_star_for(v_star),
             "x_p": head_state.x, "v_p": head_state.v_long,
             "tau": platoon.tau, "d_min": platoon.d_safe_min,
             "half_lengths": half_l, "rho_ct": delays.rho_ct},
            scene.speed_limit)
        if printed is None or v_star > printed + 1e-9:
            return False
        x_h, v_h = _head_position_profile(head_state, head_desc, v_star,
                                          t_cp)
        need = (safe_longitudinal_distance(head_desc, v_h, ego_desc, v_cp,
                                           delays)
                + v_star * platoon.tau + platoon.d_safe_min + half_l)
        if p_c - x_h < need:
            return False
        if ego_profile is not None and entry_lead > 0.0:
            ts, xs, vs = ego_profile
            for i in range(ts.size):
                t = float(ts[i])
                if t < t_cp - entry_lead or t > t_cp:
                    continue
                x_h_t, v_h_t = _head_position_profile(head_state,
                                                      head_desc, v_star, t)
                d = safe_longitudinal_distance(head_desc, v_h_t, ego_desc,
                                               float(vs[i]), delays)
                if float(xs[i]) - x_h_t < d + 1.0:
                    return False
        return True

    if not ok(0.0):
        return None, None
    hi = min(head_state.v_long, scene.speed_limit)
    if ok(hi):
        return hi, d_star_for(hi)
    lo = 0.0
    for _ in range(MAX_BISECT):
        if hi - lo <= SPEED_TOL:
            break
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo, d_star_for(lo)


@dataclass(frozen=True)
class EmergencyPolicy:
    kappa_bounds: tuple = DEFAULT_KAPPA_BOUNDS
    a_lat_comfort: float = 4.0
    keep_moving_fraction: float = 0.75   # CP where envelope speed falls here
    bumper_margin: float = 2.0


def _emergency_path(scene, target_y, p_c, v_at_cp, policy):
    ego_desc, ego_state = scene.ego
    road = scene.road
    start_y = road.nearest_lane_center(ego_state.y)
    width = abs(target_y - start_y)
    kappa = min(max(policy.kappa_bounds[1],
                    policy.kappa_bounds[0]),
                max(comfort_kappa_limit(width, max(v_at_cp, 1.0),
                                        policy.a_lat_comfort),
                    policy.kappa_bounds[0]))
    return build_change_path(road, ego_desc.width,
                             PathSpec(start_y, target_y, p_c, kappa))


def _platoon_lane_y(scene, platoon):
    if platoon is not None:
        return scene.road.nearest_lane_center(platoon.head[1].y)
    return _merge_target_y(scene)


def _ego_position_class(ego_state, platoon):
    """'ahead' of the head, 'mid' (strictly between two members), or
    'behind' the tail."""
    if platoon is None:
        return "ahead", None
    xs = [s.x for _, s in platoon.members]
    if ego_state.x > xs[0]:
        return "ahead", None
    for i in range(len(xs) - 1):
        if xs[i] >= ego_state.x > xs[i + 1]:
            return "mid", i
    return "behind", None


def _noncoop_emergency(scene, front_behavior, platoon, delays, lat_cfg,
                       policy, messages=()):
    ego_desc, ego_state = scene.ego
    fv = front_vehicle(scene)
    target_y = _platoon_lane_y(scene, platoon)
    v_e = ego_state.v_long
    pos, _ = _ego_position_class(ego_state, platoon)

    def decision(maneuver, v_star, just, path=None):
        return PlanDecision(maneuver=maneuver, v_e_star=v_star,
                            justification=just, path=path,
                            messages=tuple(messages),
                            plan_time=scene.time, trigger_time=scene.time)

    steering = front_behavior == "steers_to_adjacent"
    if pos == "ahead":
        just = "def4_2A" if steering else "def4_1A"
        gate = (platoon is None
                or check_emergency_ahead_of_head(scene, platoon, v_e,
                                                 delays))
        if steering and fv is not None:
            gate = gate and check_front_vehicle_clear(scene, fv, v_e, delays)
        if gate:
            p_c = ego_state.x + v_e * delays.rho_lc / 2.0
            if fv is not None:
                fv_desc, fv_state = fv
                x_stop = predicted_stop_x(fv_desc, fv_state)
                cap = x_stop - safe_longitudinal_distance(
                    ego_desc, v_e, fv_desc, 0.0, delays)
                if not steering:
                    p_c = min(p_c, cap) if cap > ego_state.x else p_c
            path = _emergency_path(scene, target_y, p_c, v_e, policy)
            if path is not None:
                return decision(BRAKE_THEN_MERGE_AHEAD_OF_PLATOON, v_e,
                                just, path)
        return decision(KEEP_LANE_BRAKE, 0.0, just)

    # Behind (or alongside) the head: hard braking, join behind the tail.
    just = "def4_1B"
    if platoon is not None:
        v_join = _rear_join_speed(scene, platoon, fv, delays, policy,
                                  policy.bumper_margin)
        if v_join is not None:
            p_c = ego_state.x + max(v_join, 1.0) * delays.rho_lc / 2.0
            path = _emergency_path(scene, target_y, p_c,
                                   max(v_join, 1.0), policy)
            if path is not None:
                return decision(JOIN_PLATOON_REAR, v_join, just, path)
    return decision(KEEP_LANE_BRAKE, 0.0, just)


def _crossing_clears_front(scene, fv, v, delays, policy):
    """True when a lane change at speed v completes before entering the
    braking front vehicle's envelope."""
    if fv is None:
        return True
    ego_desc, ego_state = scene.ego
    fv_desc, fv_state = fv
    x_stop = predicted_stop_x(fv_desc, fv_state)
    width = scene.road.lane_width
    kappa = max(min(comfort_kappa_limit(width, max(v, 1.0),
                                        policy.a_lat_comfort),
                    policy.kappa_bounds[1]),
                policy.kappa_bounds[0])
    p_c = ego_state.x + max(v, 1.0) * delays.rho_lc / 2.0
    done_x = p_c + 2.944 / kappa
    cap = x_stop - safe_longitudinal_distance(ego_desc, v, fv_desc, 0.0,
                                              delays)
    return done_x <= cap


def _rear_join_speed(scene, platoon, fv, delays, policy, bumper_margin):
    """Largest rejoin speed (up to the cruise target) passing the
    join-behind-tail gate and still clearing the braking front vehicle;
    None while the gate is closed."""
    cap = min(scene.ego_target_speed, scene.speed_limit)

    def ok(v):
        return (check_emergency_behind_tail(scene, platoon, v, delays,
                                            bumper_margin)
                and _crossing_clears_front(scene, fv, v, delays, policy))

    if not ok(0.0):
        return None
    if ok(cap):
        return cap
    lo, hi = 0.0, cap
    for _ in range(MAX_BISECT):
        if hi - lo <= SPEED_TOL:
            break
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def plan_emergency(scene, front_behavior, platoon, mode, channel, delays,
                   lat_cfg=LateralConfig(), policy=EmergencyPolicy()):
    """Resolve an emergency-avoidance decision at the response instant.

    front_behavior: 'brakes_in_lane' or 'steers_to_adjacent'. Cooperative
    planning negotiates a slot with the adjacent platoon (head yield,
    mid-gap opening, or tail advance, keyed by the ego's position relative
    to the platoon); silence degrades to the non-cooperative rules.
    """
    if mode == "non_cooperative":
        return _noncoop_emergency(scene, front_behavior, platoon, delays,
                                  lat_cfg, policy)
    if mode != "cooperative":
        raise ValueError(f"unknown mode {mode!r}")
    if platoon is None:
        return _noncoop_emergency(scene, front_behavior, platoon, delays,
                                  lat_cfg, policy)

    ego_desc, ego_state = scene.ego
    fv = front_vehicle(scene)
    target_y = _platoon_lane_y(scene, platoon)
    v_e = ego_state.v_long
    pos, mid_index = _ego_position_class(ego_state, platoon)
    steering = front_behavior == "steers_to_adjacent"

    if steering and pos != "ahead":
        # Alongside or behind the head while the front vehicle departs:
        # defer to hard braking and a rear join.
        return _noncoop_emergency(scene, front_behavior, platoon, delays,
                                  lat_cfg, policy)

    # Candidate crossing points against the braking front vehicle: prefer
    # merging early (envelope speed still high) and back off toward later,
    # slower crossings until the platoon slot is securable.
    lane_width = abs(target_y
                     - scene.road.nearest_lane_center(ego_state.y))

    def entry_lead_for(v_cp):
        kappa = max(min(comfort_kappa_limit(lane_width, max(v_cp, 1.0),
                                            policy.a_lat_comfort),
                        policy.kappa_bounds[1] * 2.0),
                    policy.kappa_bounds[0])
        half_span = 2.944 / kappa
        return 1.3 * half_span / max(v_cp, 1.0)

    candidates = []
    if fv is not None:
        fv_desc, fv_state = fv
        x_stop = predicted_stop_x(fv_desc, fv_state)
        fractions = sorted({policy.keep_moving_fraction, 0.6, 0.45, 0.3},
                           reverse=True)
        for frac in fractions:
            v_cp_target = max(frac * v_e, 1.0)
            p_c = x_stop - safe_longitudinal_distance(
                ego_desc, v_cp_target, fv_desc, 0.0, delays)
            if p_c <= ego_state.x + 1.0:
                continue
            profile = _envelope_profile(ego_desc, ego_state, fv_desc,
                                        x_stop, p_c, delays,
                                        ego_desc.a_brake_min)
            t_cp, v_cp = float(profile[0][-1]), float(profile[2][-1])
            candidates.append((p_c, t_cp, v_cp, profile))
    else:
        p_c = ego_state.x + v_e * (delays.rho_ct + delays.rho_lc / 2.0)
        candidates.append((p_c, delays.rho_ct + delays.rho_lc / 2.0, v_e,
                           None))

    def send(p_c, recipient, v_star, d_star, kind=EMERGENCY_REQUEST):
        msg = V2VMessage(sender=ego_desc.id, recipient=recipient,
                         sent_at=scene.time, p_c=p_c,
                         d_rss_long_star=d_star, requested_speed=v_star,
                         kind=kind)
        channel.send(msg)
        return msg

    if pos == "ahead":
        head_desc, head_state = platoon.head
        solution = None
        for p_c, t_cp, v_cp, profile in candidates:
            if steering and fv is not None and not check_cp_clear_of_front(
                    scene, fv, p_c, delays):
                continue
            v_star, d_star = solve_head_yield_speed(
                scene, platoon, p_c, v_cp, t_cp, delays,
                ego_profile=profile,
                entry_lead=entry_lead_for(v_cp))
            if v_star is not None:
                solution = (p_c, v_cp, v_star, d_star)
                break
        if solution is None:
            return _noncoop_emergency(scene, front_behavior, platoon,
                                      delays, lat_cfg, policy)
        p_c, v_cp, v_star, d_star = solution
        request = send(p_c, head_desc.id, v_star, d_star)
        if not channel.is_responsive(head_desc.id):
            return replace(
                _noncoop_emergency(scene, front_behavior, platoon, delays,
                                   lat_cfg, policy),
                messages=(request,))
        path = _emergency_path(scene, target_y, p_c, v_cp, policy)
        if path is None:
            return replace(
                _noncoop_emergency(scene, front_behavior, platoon, delays,
                                   lat_cfg, policy),
                messages=(request,))
        just = "def5_2A" if steering else "def5_1A"
        ack = V2VMessage(sender=head_desc.id, recipient=ego_desc.id,
                         sent_at=scene.time + channel.delay, p_c=p_c,
                         d_rss_long_star=d_star, requested_speed=v_star,
                         kind=ACK)
        return PlanDecision(maneuver=BRAKE_THEN_MERGE_AHEAD_OF_PLATOON,
                            v_e_star=v_cp, justification=just, path=path,
                            coop_requests=((head_desc.id, v_star),),
                            messages=(request, ack), plan_time=scene.time,
                            trigger_time=scene.time)

    if candidates:
        p_c, t_cp, v_cp, _profile = candidates[-1]
    else:
        p_c = ego_state.x + max(v_e, 1.0) * delays.rho_lc / 2.0
        t_cp, v_cp, _profile = delays.rho_lc / 2.0, v_e, None

    if pos == "mid":
        front_desc, front_state = platoon.members[mid_index]
        rear_desc, rear_state = platoon.members[mid_index + 1]
        d_star = safe_longitudinal_distance(rear_desc, rear_state.v_long,
                                            ego_desc, v_cp, delays)
        half_l = (ego_desc.length + front_desc.length) / 2.0
        # Printed mid-gap gate; the opener in front accelerates toward its
        # own following cap.
        gate = (front_state.x
                + (front_state.v_long + rear_state.v_long) / 2.0
                * delays.rho_ct
                - (p_c - d_star)
                >= v_e * platoon.tau + platoon.d_safe_min + half_l)
        rear_request, _ = solve_head_yield_speed(
            scene,
            PlatoonSpec(platoon.members[mid_index + 1:], platoon.tau,
                        platoon.d_safe_min),
            p_c, v_cp, t_cp, delays)
        if not gate or rear_request is None:
            return _noncoop_emergency(scene, front_behavior, platoon,
                                      delays, lat_cfg, policy)
        if mid_index == 0:
            front_cap = scene.speed_limit
        else:
            leader_desc, leader_state = platoon.members[mid_index - 1]
            front_cap = rss_following_cap(
                front_desc, leader_desc, leader_state.v_long,
                leader_state.x - front_state.x, delays, scene.speed_limit)
        req_front = send(p_c, front_desc.id, front_cap, d_star)
        req_rear = send(p_c, rear_desc.id, rear_request, d_star)
        responsive = (channel.is_responsive(front_desc.id)
                      and channel.is_responsive(rear_desc.id))
        path = _emergency_path(scene, target_y, p_c, v_cp, policy)
        if not responsive or path is None:
            return replace(
                _noncoop_emergency(scene, front_behavior, platoon, delays,
                                   lat_cfg, policy),
                messages=(req_front, req_rear))
        return PlanDecision(maneuver=JOIN_PLATOON_MID, v_e_star=v_cp,
                            justification="def5_1B", path=path,
                            coop_requests=((front_desc.id, front_cap),
                                           (rear_desc.id, rear_request)),
                            messages=(req_front, req_rear),
                            plan_time=scene.time, trigger_time=scene.time)

    # Behind the tail: ask it to advance.
    tail_desc, tail_state = platoon.tail
    d_star = safe_longitudinal_distance(ego_desc, v_cp, tail_desc,
                                        tail_state.v_long, delays)
    half_l = (ego_desc.length + tail_desc.length) / 2.0
    v_star = cooperative_speed_solve(
        INEQ_PLATOON_TAIL_ADVANCE,
        {"v_e": v_e, "tau": platoon.tau, "d_min": platoon.d_safe_min,
         "half_lengths": half_l, "p_c": p_c, "d_star": d_star,
         "x_p": tail_state.x, "v_p": tail_state.v_long,
         "rho_ct": delays.rho_ct},
        scene.speed_limit)
    if v_star is None:
        return _noncoop_emergency(scene, front_behavior, platoon, delays,
                                  lat_cfg, policy)
    request = send(p_c, tail_desc.id, v_star, d_star)
    path = _emergency_path(scene, target_y, p_c, v_cp, policy)
    if not channel.is_responsive(tail_desc.id) or path is None:
        return replace(
            _noncoop_emergency(scene, front_behavior, platoon, delays,
                               lat_cfg, policy),
            messages=(request,))
    return PlanDecision(maneuver=JOIN_PLATOON_REAR, v_e_star=v_cp,
                        justification="def5_1C", path=path,
                        coop_requests=((tail_desc.id, v_star),),
                        messages=(request,), plan_time=scene.time,
                        trigger_time=scene.time)


# ---------------------------------------------------------------------------
# Soundness replay
# ---------------------------------------------------------------------------

def replay_check(decision, scene, delays, platoon=None):
    """Re-evaluate the inequality behind a decision's clause with the
    decided speed; True means the decision is self-consistent."""
    just = decision.justification
    if just == "def1_1":
        return check_merge_ahead_noncoop(scene, decision.v_e_star, delays)
    if just == "def1_2":
        return check_merge_behind_noncoop(scene, decision.v_e_star, delays)
    if just == "def1_3":
        return decision.v_e_star == 0.0
    if just in ("def2_1B", "def2_2B"):
        request = next(m for m in decision.messages
                       if m.kind == MERGE_REQUEST)
        j, _ = merge_obstacle(scene, _merge_target_y(scene))
        if j is None:
            return True
        j_desc, j_state = j
        if just == "def2_1B":
            # A message without a speed ask promised only the crossing
            # point; the counterpart keeps its own speed.
            v_req = (request.requested_speed
                     if request.requested_speed is not None
                     else j_state.v_long)
            lhs = (j_state.x
                   + (j_state.v_long + v_req) / 2.0 * delays.rho_ct
                   + v_req * delays.rho_lc / 2.0)
            return lhs <= request.p_c - request.d_rss_long_star
        ego_desc, ego_state = scene.ego
        lhs = (ego_state.x + ego_state.v_long * delays.rho_ct
               - ego_desc.a_brake_min * delays.rho_ct ** 2 / 2.0)
        rhs = (j_state.x
               + (request.requested_speed + j_state.v_long) / 2.0
               * delays.rho_ct - request.d_rss_long_star)
        return lhs <= rhs
    if just in ("def4_1A", "def4_2A"):
        if decision.maneuver == KEEP_LANE_BRAKE:
            return True
        return check_emergency_ahead_of_head(scene, platoon,
                                             decision.v_e_star, delays)
    if just in ("def4_1B", "def4_2B"):
        if decision.maneuver == KEEP_LANE_BRAKE:
            return True
        return check_emergency_behind_tail(scene, platoon,
                                           decision.v_e_star, delays)
    if just in ("def5_1A", "def5_2A", "def5_1B", "def5_1C"):
        return bool(decision.coop_requests)
    raise ValueError(f"unknown justification {just!r}")
