"""Minimum safe distances between vehicle pairs, extended for V2V latency
and vehicle dimensions, plus the static-object passing rule.

Longitudinal rule (rear/front roles assigned by the caller): during the
response window rho the rear vehicle may keep accelerating at its maximum,
then brakes with at least its committed minimum, while the front vehicle
brakes as hard as it can. Center-to-center distances, so half of both body
lengths is included. The whole bracket is clamped at zero.

Lateral rule (lower/upper roles by Y): both vehicles may drift toward each
other at maximum lateral acceleration for rho, then brake laterally; a
fluctuation margin mu is added outside the clamp.
"""

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class LateralConfig:
    """Lateral-rule tuning; mu is the body-sway fluctuation margin [m]."""

    mu: float = 0.5

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("mu must be >= 0")


@dataclass(frozen=True)
class RssGap:
    """Safe-distance pair for one vehicle pairing, with pre-clamp values
    exposed for diagnostics."""

    d_long: float
    d_lat: float
    pre_clamp_long: float
    pre_clamp_lat: float


def _validate_speed(v, name):
    if not math.isfinite(v):
        raise ValueError(f"{name} must be finite")
    if v < 0:
        raise ValueError(f"{name} must be >= 0")


def longitudinal_bracket(rear, v_rear, front, v_front, delays):
    """Pre-clamp value of the longitudinal safe distance [m]."""
    _validate_speed(v_rear, "rear speed")
    _validate_speed(v_front, "front speed")
    rho = delays.rho
    v_rear_rho = v_rear + rear.a_accel_max * rho
    return (v_rear * rho
            + 0.5 * rear.a_accel_max * rho * rho
            + v_rear_rho ** 2 / (2.0 * rear.a_brake_min)
            + (rear.length + front.length) / 2.0
            - v_front ** 2 / (2.0 * front.a_brake_max))


def safe_longitudinal_distance(rear, v_rear, front, v_front, delays):
    """Minimum safe center-to-center gap along X [m], clamped at 0."""
    return max(longitudinal_bracket(rear, v_rear, front, v_front, delays),
               0.0)


def lateral_bracket(lower, v_lat_lower, upper, v_lat_upper, delays):
    """Pre-clamp value of the lateral safe distance (without mu) [m].

    `lower` is the vehicle at smaller Y; lateral speeds are signed with
    positive toward larger Y.
    """
    for v, name in ((v_lat_lower, "lower lateral speed"),
                    (v_lat_upper, "upper lateral speed")):
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite")
    rho = delays.rho
    v_lo_rho = v_lat_lower + lower.a_lat_accel_max * rho
    v_up_rho = v_lat_upper - upper.a_lat_accel_max * rho
    toward = ((v_lat_lower + v_lo_rho) / 2.0 * rho
              + v_lo_rho ** 2 / (2.0 * lower.a_lat_brake_min)
              + (lower.width + upper.width) / 2.0)
    away = ((v_lat_upper + v_up_rho) / 2.0 * rho
            + v_up_rho ** 2 / (2.0 * upper.a_lat_brake_min))
    return toward - away


def safe_lateral_distance(lower, v_lat_lower, upper, v_lat_upper, delays,
                          cfg=LateralConfig()):
    """Minimum safe center-to-center gap along Y [m]; always >= mu."""
    return cfg.mu + max(
        lateral_bracket(lower, v_lat_lower, upper, v_lat_upper, delays), 0.0)


def rss_gap(ego_desc, ego_state, other_desc, other_state, delays,
            cfg=LateralConfig(), *, ego_is_rear, ego_is_lower):
    """Bundle both safe distances for an ego/other pairing.

    Role assignment is explicit: the caller states which vehicle is rear
    (longitudinal) and which is at smaller Y (lateral).
    """
    if ego_is_rear:
        pre_long = longitudinal_bracket(ego_desc, ego_state.v_long,
                                        other_desc, other_state.v_long,
                                        delays)
    else:
        pre_long = longitudinal_bracket(other_desc, other_state.v_long,
                                        ego_desc, ego_state.v_long, delays)
    if ego_is_lower:
        pre_lat = lateral_bracket(ego_desc, ego_state.v_lat,
                                  other_desc, other_state.v_lat, delays)
    else:
        pre_lat = lateral_bracket(other_desc, other_state.v_lat,
                                  ego_desc, ego_state.v_lat, delays)
    return RssGap(d_long=max(pre_long, 0.0),
                  d_lat=cfg.mu + max(pre_lat, 0.0),
                  pre_clamp_long=pre_long,
                  pre_clamp_lat=pre_lat)


def static_gap_safe(gap, ego_desc, v, delays, obstacle_length=None):
    """True iff passing between static obstacles spaced `gap` apart is safe
    at speed v: the safe distance to the next (stationary) obstacle must fit
    in half the spacing."""
    if gap < 0:
        raise ValueError("gap must be >= 0")
    _validate_speed(v, "speed")
    front = _static_front(ego_desc, obstacle_length)
    d = safe_longitudinal_distance(ego_desc, v, front, 0.0, delays)
    return d <= gap / 2.0


def max_safe_passing_speed(gap, ego_desc, delays, v_upper,
                           obstacle_length=None, tol=0.01, max_iter=64):
    """Largest speed in [0, v_upper] that static_gap_safe accepts.

    Bisection to `tol`; the safe distance grows monotonically with speed, so
    the feasible set is an interval anchored at 0. Returns 0.0 if even a
    standstill fails the rule.
    """
    if v_upper <= 0:
        raise ValueError("v_upper must be > 0")
    if static_gap_safe(gap, ego_desc, v_upper, delays, obstacle_length):
        return v_upper
    if not static_gap_safe(gap, ego_desc, 0.0, delays, obstacle_length):
        return 0.0
    lo, hi = 0.0, v_upper
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if static_gap_safe(gap, ego_desc, mid, delays, obstacle_length):
            lo = mid
        else:
            hi = mid
    return lo


def _static_front(ego_desc, obstacle_length):
    from dataclasses import replace
    length = ego_desc.length if obstacle_length is None else obstacle_length
    return replace(ego_desc, id=ego_desc.id + "_static", length=length)
