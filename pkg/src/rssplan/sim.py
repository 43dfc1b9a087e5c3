"""Deterministic closed-loop scenario simulator.

Physics runs at the configured dt (default 100 Hz) on a dynamic bicycle
model with linear tires; planning re-runs at 10 Hz. The ego's commands pass
through an RSS guard that enforces the longitudinal proper response against
any vehicle it is laterally unclear of; obstacle vehicles follow behavior
scripts and honor delivered cooperation requests; platoon followers run a
constant-time-gap controller.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import DelayProfile, SceneSnapshot, VehicleState, scene_from_config
from .rss import (LateralConfig, safe_lateral_distance,
                  safe_longitudinal_distance, max_safe_passing_speed)
from .planner import (HOLD_AND_STOP, LANE_CHANGE_MANEUVERS, MERGE_AHEAD,
                      EmergencyPolicy, MergePolicy, V2VChannel,
                      plan_emergency, plan_merge, platoon_spec_from_scene,
                      replay_check)
from .sigmoid import (SigmoidParams, comfort_kappa_limit, generate_path,
                      select_slope, span_for_kappa)
from .field import PfParams, pf_descent_path

STEERING_LIMIT = math.radians(10.0)
REPLAN_PERIOD = 0.1          # [s] planner tick
GUARD_MARGIN = 2.0           # [m] anticipation band so the envelope is
#                              entered from above, never undershot
LOW_SPEED = 0.5              # [m/s] below this the tire model degenerates


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ControlCommand:
    accel: float      # [m/s^2] signed
    steering: float   # [rad] front tire


@dataclass(frozen=True)
class BicycleParams:
    mass: float = 1500.0       # [kg]
    yaw_inertia: float = 2250.0  # [kg m^2]
    cornering_front: float = 80e3  # [N/rad]
    cornering_rear: float = 80e3
    lf: float = 1.35           # [m] CG to front axle
    lr: float = 1.35

    @property
    def wheelbase(self):
        return self.lf + self.lr


DEFAULT_BICYCLE = BicycleParams()


def clamp_command(cmd, desc):
    """Apply actuator limits; returns (command, clipped_flag)."""
    accel = min(max(cmd.accel, -desc.a_brake_max), desc.a_accel_max)
    steering = min(max(cmd.steering, -STEERING_LIMIT), STEERING_LIMIT)
    clipped = accel != cmd.accel or steering != cmd.steering
    return ControlCommand(accel, steering), clipped


def _derivatives(s, accel, steer, mp):
    """State derivative for [x, y, psi, beta, r, v]."""
    x, y, psi, beta, r, v = s
    if v > LOW_SPEED:
        alpha_f = beta + mp.lf * r / v - steer
        alpha_r = beta - mp.lr * r / v
        fyf = -mp.cornering_front * alpha_f
        fyr = -mp.cornering_rear * alpha_r
        dbeta = (fyf + fyr) / (mp.mass * v) - r
        dr = (mp.lf * fyf - mp.lr * fyr) / mp.yaw_inertia
    else:
        # Kinematic relaxation below the validity range of linear tires.
        beta_k = math.atan(mp.lr * math.tan(steer) / mp.wheelbase)
        r_k = v * math.cos(beta) * math.tan(steer) / mp.wheelbase
        dbeta = (beta_k - beta) / 0.2
        dr = (r_k - r) / 0.2
    dv = accel if (v > 0.0 or accel > 0.0) else 0.0
    return np.array([v * math.cos(psi + beta),
                     v * math.sin(psi + beta),
                     r, dbeta, dr, dv])


def step_vehicle(state, cmd, desc, dt, model=DEFAULT_BICYCLE):
    """Advance one vehicle by dt with a classical fourth-order step."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    cmd, _ = clamp_command(cmd, desc)
    s = np.array([state.x, state.y, state.heading, state.sideslip,
                  state.yaw_rate, state.v_long])
    k1 = _derivatives(s, cmd.accel, cmd.steering, model)
    k2 = _derivatives(s + 0.5 * dt * k1, cmd.accel, cmd.steering, model)
    k3 = _derivatives(s + 0.5 * dt * k2, cmd.accel, cmd.steering, model)
    k4 = _derivatives(s + dt * k3, cmd.accel, cmd.steering, model)
    s = s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    v = max(s[5], 0.0)
    return VehicleState(x=s[0], y=s[1], heading=s[2], sideslip=s[3],
                        v_long=v,
                        v_lat=v * math.sin(s[2] + s[3]),
                        yaw_rate=s[4], steering=cmd.steering,
                        accel_cmd=cmd.accel)


def track_path(state, path_x, path_y, lookahead=None):
    """Pure-pursuit steering toward a preview point on the path.

    Paths in this package are single-valued y(x) polylines along the road,
    so the preview point sits at x + lookahead; beyond the sampled range
    the path is extended along its terminal slope, which makes a vehicle
    past the end hold the path's last heading.
    """
    px = np.asarray(path_x, dtype=float)
    py = np.asarray(path_y, dtype=float)
    if px.size == 0:
        raise ValueError("path is empty")
    if lookahead is None:
        lookahead = min(max(0.5 * state.v_long, 5.0), 15.0)
    x_t = state.x + lookahead
    if px.size == 1:
        ty = py[0]
    elif x_t <= px[0]:
        slope = (py[1] - py[0]) / max(px[1] - px[0], 1e-9)
        ty = py[0] + (x_t - px[0]) * slope
    elif x_t >= px[-1]:
        slope = (py[-1] - py[-2]) / max(px[-1] - px[-2], 1e-9)
        ty = py[-1] + (x_t - px[-1]) * slope
    else:
        ty = float(np.interp(x_t, px, py))
    alpha = math.atan2(ty - state.y, lookahead) - state.heading
    alpha = math.atan2(math.sin(alpha), math.cos(alpha))
    dist = max(math.hypot(lookahead, ty - state.y), 1e-6)
    steer = math.atan(2.0 * DEFAULT_BICYCLE.wheelbase
                      * math.sin(alpha) / dist)
    return min(max(steer, -STEERING_LIMIT), STEERING_LIMIT)


def track_speed(state, v_target, desc, k_v=0.8):
    """Proportional speed controller clamped to the actuation envelope."""
    if v_target < 0:
        raise ValueError("v_target must be >= 0")
    return min(max(k_v * (v_target - state.v_long), -desc.a_brake_max),
               desc.a_accel_max)


def ctg_desired_gap(spec, follower_speed, lead_desc, follower_desc):
    """Constant-time-gap spacing: speed * tau + floor + half body lengths."""
    return (follower_speed * spec.tau + spec.d_safe_min
            + (lead_desc.length + follower_desc.length) / 2.0)


def platoon_controller(states, descs, spec, cruise_speed,
                       external_request=None, k_gap=0.45, k_rel=1.4,
                       k_v=0.8):
    """Acceleration command per platoon member (head first).

    The head tracks its own cruise speed, or a cooperative speed request
    with braking capped at its committed minimum. Followers run a
    proportional-derivative law around the constant-time-gap spacing.
    """
    accels = []
    for i, (state, desc) in enumerate(zip(states, descs)):
        if i == 0:
            if external_request is not None:
                a = min(max(k_v * (external_request - state.v_long),
                            -desc.a_brake_min), desc.a_accel_max)
            else:
                a = track_speed(state, cruise_speed, desc, k_v)
        else:
            lead_state = states[i - 1]
            lead_desc = descs[i - 1]
            gap = lead_state.x - state.x
            desired = ctg_desired_gap(spec, state.v_long, lead_desc, desc)
            a = (k_gap * (gap - desired)
                 + k_rel * (lead_state.v_long - state.v_long))
            a = min(max(a, -desc.a_brake_max), desc.a_accel_max)
        accels.append(a)
    return accels


def acc_follow_accel(state, desc, lead_state, lead_desc, spec_tau,
                     spec_dmin, k_gap=0.3, k_rel=1.8):
    """Follower response toward an arbitrary in-lane leader (used when a
    vehicle cuts in ahead of a platoon member)."""
    gap = lead_state.x - state.x
    desired = (state.v_long * spec_tau + spec_dmin
               + (lead_desc.length + desc.length) / 2.0)
    a = k_gap * (gap - desired) + k_rel * (lead_state.v_long - state.v_long)
    return min(max(a, -desc.a_brake_max), desc.a_accel_max)


# ---------------------------------------------------------------------------
# RSS guard
# ---------------------------------------------------------------------------

def guard_leads(ego_desc, ego_state, others, delays, cfg):
    """Vehicles ahead that the ego is not laterally clear of.

    Lateral clearance follows the lateral safe-distance rule at the current
    lateral speeds, so a laterally moving ego stays coupled to the lane it
    is leaving (and the one it is entering) until genuinely clear.
    """
    leads = []
    for desc, state in others:
        if state.x <= ego_state.x:
            continue
        if ego_state.y <= state.y:
            d_lat = safe_lateral_distance(ego_desc, ego_state.v_lat, desc,
                                          state.v_lat, delays, cfg)
        else:
            d_lat = safe_lateral_distance(desc, state.v_lat, ego_desc,
                                          ego_state.v_lat, delays, cfg)
        if abs(state.y - ego_state.y) < d_lat:
            leads.append((desc, state))
    return leads


def rss_guard(cmd, scene, delays, cfg=LateralConfig(),
              margin=GUARD_MARGIN):
    """Longitudinal proper response: if the ego is inside (or within the
    anticipation band of) the safe distance to a lead it is laterally
    unclear of, cap the acceleration at its committed braking.

    The anticipation band scales with the closing speed so a slow approach
    can creep up to (never into) the safe distance instead of freezing.
    """
    ego_desc, ego_state = scene.ego
    others = list(scene.obstacles) + list(scene.platoon_live())
    for desc, state in guard_leads(ego_desc, ego_state, others, delays,
                                   cfg):
        d = safe_longitudinal_distance(ego_desc, ego_state.v_long, desc,
                                       state.v_long, delays)
        closing = ego_state.v_long - state.v_long
        band = min(max(0.5 * closing, 0.3), margin)
        if state.x - ego_state.x < d + band:
            return ControlCommand(min(cmd.accel, -ego_desc.a_brake_min),
                                  cmd.steering)
    return cmd


# ---------------------------------------------------------------------------
# Trace logging
# ---------------------------------------------------------------------------

TRACE_SIGNALS = ("x", "y", "psi", "beta", "v_long", "v_lat", "yaw_rate",
                 "steering", "accel")


class TraceLog:
    """Uniform-timestep per-vehicle state history plus event markers."""

    def __init__(self, vehicle_ids, descriptors, dt, n_steps, road=None,
                 platoon_ids=()):
        self.vehicle_ids = list(vehicle_ids)
        self.descriptors = dict(descriptors)
        self.dt = dt
        self.road = road
        self.platoon_ids = tuple(platoon_ids)
        self.t = np.arange(n_steps) * dt
        self.data = {vid: {sig: np.zeros(n_steps) for sig in TRACE_SIGNALS}
                     for vid in vehicle_ids}
        self.events = []
        self.decisions = []

    @property
    def ego_id(self):
        return self.vehicle_ids[0]

    def record(self, step, vid, state):
        d = self.data[vid]
        d["x"][step] = state.x
        d["y"][step] = state.y
        d["psi"][step] = state.heading
        d["beta"][step] = state.sideslip
        d["v_long"][step] = state.v_long
        d["v_lat"][step] = state.v_lat
        d["yaw_rate"][step] = state.yaw_rate
        d["steering"][step] = state.steering
        d["accel"][step] = state.accel_cmd

    def add_event(self, t, kind, **data):
        self.events.append({"t": t, "kind": kind, **data})

    def signal(self, vid, name):
        return self.data[vid][name]

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("t,id," + ",".join(TRACE_SIGNALS) + "\n")
            for step in range(self.t.size):
                ts = f"{self.t[step]:.6f}"
                for vid in self.vehicle_ids:
                    row = ",".join(f"{self.data[vid][sig][step]:.10g}"
                                   for sig in TRACE_SIGNALS)
                    fh.write(f"{ts},{vid},{row}\n")

    def write_events(self, path):
        import json
        with open(path, "w", encoding="utf-8") as fh:
            for ev in self.events:
                fh.write(json.dumps(ev) + "\n")

    def write_decisions(self, path):
        import json
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.decisions:
                fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# Behavior-script controller for obstacle vehicles
# ---------------------------------------------------------------------------

class _ScriptController:
    def __init__(self, desc, behavior, road, initial_state):
        self.desc = desc
        self.behavior = behavior
        self.road = road
        self.initial_speed = initial_state.v_long
        self.lane_y = road.nearest_lane_center(initial_state.y)
        self.triggered = False
        self.request_speed = None
        self.steer_path = None

    def maybe_trigger(self, state, now, events):
        b = self.behavior
        if self.triggered or b.x_trigger is None:
            return
        if state.x >= b.x_trigger:
            self.triggered = True
            events.append((now, f"{b.kind}_triggered", self.desc.id))
            if b.kind == "steer_avoid_at":
                target = _adjacent_lane_center(self.road, self.lane_y)
                width = target - self.lane_y
                kappa = min(0.25, comfort_kappa_limit(
                    abs(width), max(state.v_long, 3.0), 3.0))
                kappa = max(kappa, 0.08)
                p_c = state.x + max(state.v_long, 2.0) * 1.5
                params = SigmoidParams(w=width, kappa=kappa, p_c=p_c,
                                       b=self.lane_y)
                self.steer_path = generate_path(
                    params, state.x - 5.0,
                    p_c + span_for_kappa(abs(width), kappa) + 80.0, 0.5)

    def command(self, state):
        b = self.behavior
        if b.kind == "emergency_brake_at" and self.triggered:
            decel = b.decel if b.decel is not None else 8.0
            accel = -decel if state.v_long > 0 else 0.0
            steer = track_path(state, *_lane_line(self.lane_y, state))
            return ControlCommand(accel, steer)
        if b.kind == "steer_avoid_at" and self.triggered:
            decel = b.decel if b.decel is not None else 0.0
            accel = -decel if (decel and state.v_long > 0) else 0.0
            steer = track_path(state, self.steer_path.x, self.steer_path.y)
            return ControlCommand(accel, steer)
        if self.request_speed is not None:
            # Honor a cooperation request: gentle committed braking when
            # yielding, normal acceleration when advancing.
            a = track_speed(state, self.request_speed, self.desc)
            a = max(a, -self.desc.a_brake_min)
            steer = track_path(state, *_lane_line(self.lane_y, state))
            return ControlCommand(a, steer)
        target = (b.target if b.kind == "accelerate_to"
                  else self.initial_speed)
        steer = track_path(state, *_lane_line(self.lane_y, state))
        return ControlCommand(track_speed(state, target, self.desc), steer)


def _lane_line(lane_y, state):
    xs = np.array([state.x - 10.0, state.x + 200.0])
    ys = np.array([lane_y, lane_y])
    return xs, ys


def _adjacent_lane_center(road, lane_y):
    centers = road.lane_centers
    idx = road.nearest_lane_index(lane_y)
    if idx == 0 and len(centers) > 1:
        return centers[1]
    if idx == len(centers) - 1 and len(centers) > 1:
        return centers[-2]
    return centers[min(idx + 1, len(centers) - 1)]


# ---------------------------------------------------------------------------
# Rule-planner executive (phase machine driving the pure planner)
# ---------------------------------------------------------------------------

class _NullChannel:
    """Re-resolution channel: mirrors responsiveness, swallows sends."""

    def __init__(self, inner):
        self.inner = inner
        self.delay = inner.delay

    def is_responsive(self, vid):
        return self.inner.is_responsive(vid)

    def send(self, message):
        pass


class RuleExecutive:
    """Phase machine for the rule planner: monitors for emergencies, runs
    the merge protocol when a side lane is present, plans around standing
    obstacles, and otherwise holds the lane."""

    def __init__(self, config, delays, lat_cfg=LateralConfig(),
                 merge_policy=MergePolicy(),
                 emergency_policy=EmergencyPolicy()):
        self.config = config
        self.delays = delays
        self.lat_cfg = lat_cfg
        self.merge_policy = merge_policy
        self.emergency_policy = emergency_policy
        self.phase = "cruise"
        self.decision = None
        self.path = None
        self.v_target = config.ego_target_speed
        self.t_dt = None
        self.front_behavior = None
        self.responded = False
        self.negotiated = False
        self.action_hold_until = None
        self.lane_y = config.road.nearest_lane_center(config.ego_state.y)
        self.target_lane_y = None
        self.records = []
        self.static_speed = None
        self._departed = False

    # -- helpers ----------------------------------------------------------

    def _record(self, now, decision, trace):
        rec = {"t": now, "justification": decision.justification,
               "maneuver": decision.maneuver,
               "v_e_star": decision.v_e_star,
               "messages": [m.kind for m in decision.messages]}
        trace.decisions.append(rec)

    def _commit_path(self, scene, now, trace):
        p = self.decision.path
        ego_state = scene.ego[1]
        width = abs(p.w)
        x_end = p.p_c + span_for_kappa(width, p.kappa) / 2.0 + 120.0
        self.path = generate_path(p, min(ego_state.x - 10.0, p.p_c - 200.0),
                                  x_end, 0.5)
        self.target_lane_y = p.w + p.b
        self._departed = False
        trace.add_event(now, "lane_change_committed", p_c=p.p_c,
                        kappa=p.kappa)
        self.phase = "execute"

    def _detect_emergency(self, scene, now, trace):
        if self.t_dt is not None:
            return
        ego_state = scene.ego[1]
        tol = scene.road.lane_width / 2.0
        for desc, state in scene.obstacles:
            if state.x <= ego_state.x:
                continue
            if abs(state.y - ego_state.y) > tol:
                continue
            braking = state.accel_cmd <= -0.5 * desc.a_brake_min
            steering = abs(state.v_lat) > 0.3
            if braking or steering:
                self.t_dt = now
                self.front_behavior = ("steers_to_adjacent" if steering
                                       else "brakes_in_lane")
                trace.add_event(now, "dangerous_time_detected",
                                vehicle=desc.id, behavior=self.front_behavior)
                return

    # -- planning tick ----------------------------------------------------

    def replan(self, scene, channel, now, trace):
        self._detect_emergency(scene, now, trace)

        if self.t_dt is not None and self.phase not in ("execute", "done"):
            if now >= self.t_dt + self.delays.rho_rt:
                self._plan_emergency(scene, channel, now, trace)
            return

        if self.phase in ("execute", "done"):
            self._maybe_finish(scene, now, trace)
            return

        road = scene.road
        if road.side_lane_end_x is not None and self.phase in (
                "cruise", "adjust", "hold"):
            self._plan_merge(scene, channel, now, trace)
            return

        if self.phase == "cruise":
            self._maybe_plan_static(scene, now, trace)

    def _plan_merge(self, scene, channel, now, trace):
        ch = channel if not self.negotiated else _NullChannel(channel)
        decision = plan_merge(scene, self.config.mode, ch, self.delays,
                              self.lat_cfg, self.merge_policy)
        if not self.negotiated:
            self.negotiated = True
            self._record(now, decision, trace)
            if (self.config.mode == "cooperative" and decision.messages
                    and decision.justification.startswith("def1")):
                # Silent counterpart: wait out the response deadline before
                # acting on the fallback.
                self.action_hold_until = now + self.delays.rho_ct
        if self.decision is None or self.phase == "hold":
            self.decision = decision
        if (self.action_hold_until is not None
                and now < self.action_hold_until):
            self.v_target = scene.ego[1].v_long
            return
        d = self.decision
        if d.maneuver == HOLD_AND_STOP:
            self.phase = "hold"
            self.v_target = 0.0
            self.decision = None     # keep trying for a gap
            self.negotiated = True
            return
        self.v_target = d.v_e_star
        self.phase = "adjust"
        if abs(scene.ego[1].v_long - d.v_e_star) <= 0.3:
            if not replay_check(d, scene, self.delays,
                                platoon_spec_from_scene(scene)):
                self.decision = None
                self.phase = "cruise"
                return
            ego_state = scene.ego[1]
            if d.path.p_c < ego_state.x + 0.3 * max(d.v_e_star, 1.0):
                # The speed ramp overran the planned crossing point; rebuild
                # the curve (same slope) on the commit-time scene.
                from .planner import _merge_path
                fresh = _merge_path(
                    scene, self.delays, self.lat_cfg, self.merge_policy,
                    d.v_e_star,
                    ahead_of_obstacle=(d.maneuver == MERGE_AHEAD),
                    kappa=d.path.kappa)
                if fresh is None:
                    self.decision = None
                    self.phase = "cruise"
                    return
                self.decision = replace(d, path=fresh)
            self._commit_path(scene, now, trace)

    def _plan_emergency(self, scene, channel, now, trace):
        platoon = platoon_spec_from_scene(scene)
        first = not self.responded
        if first:
            # Re-classify at the response instant: a steering escape may
            # only become evident after the braking began.
            ego_state = scene.ego[1]
            tol = scene.road.lane_width / 2.0
            for desc, state in scene.obstacles:
                if (state.x > ego_state.x
                        and abs(state.y - ego_state.y) <= tol
                        and abs(state.v_lat) > 0.3):
                    self.front_behavior = "steers_to_adjacent"
                    break
        ch = channel if first else _NullChannel(channel)
        decision = plan_emergency(scene, self.front_behavior, platoon,
                                  self.config.mode, ch, self.delays,
                                  self.lat_cfg, self.emergency_policy)
        if first:
            self.responded = True
            self._record(now, decision, trace)
            if (self.config.mode == "cooperative" and decision.messages
                    and decision.justification.startswith("def4")):
                self.action_hold_until = now + self.delays.rho_ct
        if (self.action_hold_until is not None
                and now < self.action_hold_until):
            self.v_target = scene.ego[1].v_long
            return
        self.decision = decision
        if decision.maneuver in LANE_CHANGE_MANEUVERS:
            self.v_target = decision.v_e_star
            self._commit_path(scene, now, trace)
        else:
            self.phase = "brake"
            self.v_target = 0.0

    def _maybe_plan_static(self, scene, now, trace):
        if self.static_speed is not None:
            return
        ego_desc, ego_state = scene.ego
        road = scene.road
        standing = sorted(
            [(d, s) for d, s in scene.obstacles
             if s.v_long < 0.2 and s.x > ego_state.x],
            key=lambda ds: ds[1].x)
        if not standing:
            return
        v_pass = scene.speed_limit
        for (d1, s1), (d2, s2) in zip(standing, standing[1:]):
            gap = s2.x - s1.x
            v_pass = min(v_pass, max_safe_passing_speed(
                gap, ego_desc, self.delays, scene.speed_limit,
                obstacle_length=d2.length))
        self.static_speed = max(v_pass, 0.5)
        self.v_target = self.static_speed
        # Weave: alternate lanes around each standing vehicle in the
        # currently planned lane, placing the crossing a safe distance
        # before it.
        lane = road.nearest_lane_center(ego_state.y)
        x_from = ego_state.x
        segments = []
        base = lane
        for d, s in standing:
            if abs(s.y - base) > road.lane_width / 2.0:
                continue
            target = _adjacent_lane_center(road, base)
            d_long = safe_longitudinal_distance(ego_desc, self.static_speed,
                                                d, 0.0, self.delays)
            kappa = select_slope(min(x_from, s.x - d_long - 1.0), s.x,
                                 d_long)
            kappa = min(max(kappa, 0.25), comfort_kappa_limit(
                abs(target - base), max(self.static_speed, 1.0),
                self.emergency_policy.a_lat_comfort))
            # Complete the escape (not merely center it) a safe distance
            # before the standing vehicle, else the guard corners the ego
            # mid-crossing at zero lateral speed.
            p_c = s.x - d_long - 2.944 / kappa
            segments.append(SigmoidParams(w=target - base, kappa=kappa,
                                          p_c=p_c, b=base))
            base = target
            x_from = s.x
        if not segments:
            return
        xs = np.arange(ego_state.x - 10.0,
                       standing[-1][1].x + 150.0, 0.5)
        ys = np.full_like(xs, lane)
        for seg in segments:
            ys = ys + seg.w / (1.0 + np.exp(-seg.kappa * (xs - seg.p_c)))
        self.path = _ArrayPath(xs, ys)
        self.target_lane_y = float(ys[-1])
        self._departed = False
        self.phase = "execute"
        trace.add_event(now, "static_avoidance_planned",
                        v_pass=self.static_speed,
                        segments=len(segments))
        rec = {"t": now, "justification": "def3_16", "maneuver": "weave",
               "v_e_star": self.static_speed, "messages": []}
        trace.decisions.append(rec)

    def _maybe_finish(self, scene, now, trace):
        if self.phase != "execute" or self.target_lane_y is None:
            return
        ego_state = scene.ego[1]
        if not self._departed:
            if abs(ego_state.y - self.target_lane_y) > 0.5:
                self._departed = True
            return
        if (abs(ego_state.y - self.target_lane_y) < 0.1
                and abs(ego_state.v_lat) < 0.2):
            self.phase = "done"
            self.v_target = self.config.ego_target_speed
            trace.add_event(now, "maneuver_settled")

    # -- per-step control --------------------------------------------------

    def control(self, scene, now):
        ego_desc, ego_state = scene.ego
        road = scene.road
        if self.phase == "done" and self.target_lane_y is not None:
            steer = track_path(ego_state, *_lane_line(self.target_lane_y,
                                                      ego_state))
        elif self.path is not None and self.phase == "execute":
            steer = track_path(ego_state, self.path.x, self.path.y)
        else:
            steer = track_path(ego_state, *_lane_line(self.lane_y,
                                                      ego_state))
        if self.phase == "hold":
            stop_x = ((road.side_lane_end_x or (ego_state.x + 200.0))
                      - self.merge_policy.stop_margin)
            dist = max(stop_x - ego_state.x, 0.1)
            v_allow = math.sqrt(2.0 * ego_desc.a_brake_min * dist)
            accel = track_speed(ego_state, min(v_allow, self.v_target
                                               if self.v_target > 0
                                               else v_allow), ego_desc)
            if ego_state.v_long > v_allow:
                accel = -ego_desc.a_brake_min
            return ControlCommand(accel, steer)
        if self.phase == "brake":
            rate = (ego_desc.a_brake_max
                    if (self.decision is not None
                        and self.decision.justification in ("def4_1B",
                                                            "def4_2A",
                                                            "def4_2B"))
                    else ego_desc.a_brake_min)
            accel = -rate if ego_state.v_long > 0.0 else 0.0
            return ControlCommand(accel, steer)
        if self.phase == "adjust":
            # Reach the maneuver speed promptly: full authority outside a
            # narrow band, proportional inside it.
            err = self.v_target - ego_state.v_long
            if err > 0.25:
                accel = ego_desc.a_accel_max
            elif err < -0.25:
                accel = -ego_desc.a_brake_min
            else:
                accel = track_speed(ego_state, self.v_target, ego_desc)
            return ControlCommand(accel, steer)
        accel = track_speed(ego_state, self.v_target, ego_desc)
        if self.t_dt is not None and self.phase == "execute":
            # Emergency maneuvers command at most the committed braking;
            # the hard-brake clauses act in the pre-commit brake phase.
            accel = max(accel, -ego_desc.a_brake_min)
        return ControlCommand(accel, steer)


class _ArrayPath:
    def __init__(self, xs, ys):
        self.x = xs
        self.y = ys


# ---------------------------------------------------------------------------
# Potential-field baseline executive
# ---------------------------------------------------------------------------

class BaselineExecutive:
    """Gradient-descent path follower at constant commanded speed.

    The end of a merge side lane is modeled as a stopped virtual vehicle so
    the field drives the descent into the main lane.
    """

    def __init__(self, config, delays, params=PfParams(),
                 lat_cfg=LateralConfig(), lat_gain=2.0):
        self.config = config
        self.delays = delays
        self.params = params
        self.lat_cfg = lat_cfg
        self.lat_gain = lat_gain
        self.path = None
        self.v_target = config.ego_target_speed

    def _augmented(self, scene):
        road = scene.road
        if road.side_lane_end_x is None:
            return scene
        ego_desc, ego_state = scene.ego
        lane_y = road.lane_centers[0]
        barrier_desc = replace(ego_desc, id="lane_end_barrier",
                               connected=False)
        barrier_state = VehicleState(x=road.side_lane_end_x, y=lane_y)
        return SceneSnapshot(
            time=scene.time, road=road, ego=scene.ego,
            obstacles=scene.obstacles + ((barrier_desc, barrier_state),),
            mode=scene.mode, speed_limit=scene.speed_limit,
            ego_target_speed=scene.ego_target_speed,
            platoon=scene.platoon, platoon_states=scene.platoon_states)

    def replan(self, scene, channel, now, trace):
        scene = self._augmented(scene)
        ego_state = scene.ego[1]
        descent = pf_descent_path(
            (ego_state.x, ego_state.y), scene, self.params, 0.5,
            ego_state.x + 120.0, self.delays, self.lat_cfg, self.lat_gain)
        self.path = descent

    def control(self, scene, now):
        ego_desc, ego_state = scene.ego
        if self.path is None:
            steer = 0.0
        else:
            # Short preview: the naive follower reacts late and overshoots,
            # which is the defect this baseline exists to demonstrate.
            lookahead = min(max(0.25 * ego_state.v_long, 3.0), 8.0)
            steer = track_path(ego_state, self.path.xs, self.path.ys,
                               lookahead)
        return ControlCommand(track_speed(ego_state, self.v_target,
                                          ego_desc), steer)


# ---------------------------------------------------------------------------
# Scenario loop
# ---------------------------------------------------------------------------

PLANNERS = ("eramp", "pf_baseline")


def run_scenario(config, planner="eramp", delays=None,
                 lat_cfg=LateralConfig()):
    """Run a scenario to completion and return the trace.

    Fully deterministic: fixed-step integration, no randomness; identical
    configs produce identical traces.
    """
    if planner not in PLANNERS:
        raise ValueError(f"planner must be one of {PLANNERS}")
    if delays is None:
        delays = DelayProfile()
    dt = config.dt
    n_steps = int(round(config.duration / dt))
    replan_every = max(int(round(REPLAN_PERIOD / dt)), 1)

    ego_desc = config.ego_descriptor
    vehicle_ids = [ego_desc.id]
    descriptors = {ego_desc.id: ego_desc}
    states = {ego_desc.id: config.ego_state}
    scripts = {}
    for spec in config.obstacles:
        vehicle_ids.append(spec.descriptor.id)
        descriptors[spec.descriptor.id] = spec.descriptor
        states[spec.descriptor.id] = spec.state
        scripts[spec.descriptor.id] = _ScriptController(
            spec.descriptor, spec.behavior, config.road, spec.state)
    platoon_ids = []
    platoon_cruise = 0.0
    if config.platoon is not None:
        for desc, state in config.platoon.members:
            vehicle_ids.append(desc.id)
            descriptors[desc.id] = desc
            states[desc.id] = state
            platoon_ids.append(desc.id)
        platoon_cruise = config.platoon.members[0][1].v_long

    trace = TraceLog(vehicle_ids, descriptors, dt, n_steps,
                     road=config.road, platoon_ids=platoon_ids)

    responsive = {vid: descriptors[vid].connected for vid in vehicle_ids}
    channel = V2VChannel(delay=delays.rho_cd, responsive=responsive)

    if planner == "eramp":
        executive = RuleExecutive(config, delays, lat_cfg)
    else:
        executive = BaselineExecutive(config, delays, lat_cfg=lat_cfg)

    platoon_requests = {}
    lane_mid = None
    if len(config.road.lane_centers) >= 2:
        lane_mid = 0.5 * (config.road.lane_centers[0]
                          + config.road.lane_centers[1])
    crossed_logged = False

    def build_scene(t):
        return SceneSnapshot(
            time=t, road=config.road,
            ego=(ego_desc, states[ego_desc.id]),
            obstacles=tuple((descriptors[vid], states[vid])
                            for vid in scripts),
            mode=config.mode, speed_limit=config.speed_limit,
            ego_target_speed=config.ego_target_speed,
            platoon=config.platoon,
            platoon_states=(tuple(states[vid] for vid in platoon_ids)
                            if platoon_ids else None))

    for step in range(n_steps):
        t = step * dt
        scene = build_scene(t)
        for vid in vehicle_ids:
            trace.record(step, vid, states[vid])

        if not crossed_logged and lane_mid is not None:
            y0 = config.ego_state.y
            if ((y0 - lane_mid) * (states[ego_desc.id].y - lane_mid)) < 0:
                trace.add_event(t, "ego_crossed_lane_divider",
                                x=states[ego_desc.id].x)
                crossed_logged = True

        if step % replan_every == 0:
            executive.replan(scene, channel, t, trace)
            for vid, ctrl in scripts.items():
                ctrl.maybe_trigger(states[vid], t, [])
                for msg in channel.poll(vid, t):
                    if msg.kind in ("merge_request", "emergency_request"):
                        ctrl.request_speed = msg.requested_speed
                        trace.add_event(t, "request_delivered",
                                        recipient=vid,
                                        speed=msg.requested_speed)
            for vid in platoon_ids:
                for msg in channel.poll(vid, t):
                    if msg.kind in ("merge_request", "emergency_request"):
                        platoon_requests[vid] = msg.requested_speed
                        trace.add_event(t, "request_delivered",
                                        recipient=vid,
                                        speed=msg.requested_speed)

        # Ego
        cmd = executive.control(scene, t)
        if planner == "eramp":
            cmd = rss_guard(cmd, scene, delays, lat_cfg)
        new_states = {ego_desc.id: step_vehicle(states[ego_desc.id], cmd,
                                                ego_desc, dt)}

        # Scripted obstacles
        for vid, ctrl in scripts.items():
            cmd_o = ctrl.command(states[vid])
            new_states[vid] = step_vehicle(states[vid], cmd_o,
                                           descriptors[vid], dt)

        # Platoon: CTG internally, follower response to any intruder ahead.
        if platoon_ids:
            p_states = [states[vid] for vid in platoon_ids]
            p_descs = [descriptors[vid] for vid in platoon_ids]
            spec = config.platoon
            accels = platoon_controller(p_states, p_descs, spec,
                                        platoon_cruise,
                                        platoon_requests.get(platoon_ids[0]))
            lane_y = config.road.nearest_lane_center(p_states[0].y)
            half_lane = config.road.lane_width / 2.0
            for i, vid in enumerate(platoon_ids):
                st = p_states[i]
                intruders = [
                    (descriptors[o], states[o]) for o in vehicle_ids
                    if o not in platoon_ids
                    and abs(states[o].y - lane_y) < half_lane
                    and states[o].x > st.x
                    and (i == 0 or states[o].x < p_states[i - 1].x)]
                a = accels[i]
                if i > 0 and vid in platoon_requests:
                    req = platoon_requests[vid]
                    adj = track_speed(st, req, p_descs[i])
                    if req >= st.v_long:
                        a = max(a, min(adj, p_descs[i].a_accel_max))
                    else:
                        a = min(a, max(adj, -p_descs[i].a_brake_min))
                if intruders:
                    lead_desc, lead_state = min(intruders,
                                                key=lambda ds: ds[1].x)
                    a = min(a, acc_follow_accel(st, p_descs[i], lead_state,
                                                lead_desc, spec.tau,
                                                spec.d_safe_min))
                    d = safe_longitudinal_distance(
                        p_descs[i], st.v_long, lead_desc,
                        lead_state.v_long, delays)
                    if lead_state.x - st.x < d + GUARD_MARGIN:
                        a = min(a, -p_descs[i].a_brake_min)
                steer = track_path(st, *_lane_line(lane_y, st))
                new_states[vid] = step_vehicle(st, ControlCommand(a, steer),
                                               p_descs[i], dt)

        states = new_states
        for vid, st in states.items():
            if not all(map(math.isfinite, (st.x, st.y, st.v_long,
                                           st.heading))):
                raise SimulationError(
                    f"numerical divergence for {vid} at t={t:.2f}")

    return trace
