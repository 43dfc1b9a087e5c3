"""Obstacle potential field sized by the RSS safe distances, a substitute
road/lane potential, total-field evaluation with finite-difference gradients,
and a gradient-descent path extractor used as the unsafe baseline planner.

Each obstacle contributes an anisotropic exponential bump whose reach is set
so that (in squared mode) the field decays exactly to epsilon at the lateral
safe distance and to a_ov*sqrt(epsilon) at the longitudinal safe distance.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .rss import LateralConfig, rss_gap

log = logging.getLogger(__name__)

YAW_CLAMP = math.pi / 4  # exponent misbehaves for large yaw; clamp and warn

DENOMINATOR_MODES = ("linear_as_printed", "squared")


@dataclass(frozen=True)
class PfParams:
    """Field shape parameters.

    squared mode divides the quadratic terms by sigma^2, which preserves the
    boundary semantics implied by the sigma definitions; linear_as_printed
    divides by sigma to the first power and is kept for fidelity
    experiments.
    """

    a_ov: float = 100.0
    epsilon: float = 0.01
    denominator_mode: str = "squared"
    road_gain: float = 1.0
    lane_gain: float | None = None   # default 0.5 * a_ov * epsilon

    def __post_init__(self):
        if not self.a_ov > 0:
            raise ValueError("a_ov must be > 0")
        if not (0 < self.epsilon < 1 and self.epsilon < self.a_ov):
            raise ValueError("epsilon must satisfy 0 < epsilon < min(1, a_ov)")
        if self.denominator_mode not in DENOMINATOR_MODES:
            raise ValueError(
                f"denominator_mode must be one of {DENOMINATOR_MODES}")
        if self.lane_gain is None:
            object.__setattr__(self, "lane_gain",
                               0.5 * self.a_ov * self.epsilon)


@dataclass(frozen=True)
class FieldSample:
    value: float
    grad_x: float
    grad_y: float


def sigma_x(d_long, epsilon):
    """Longitudinal spread from the safe distance; requires d_long > 0."""
    return d_long * math.sqrt(-1.0 / math.log(epsilon))

def sigma_y(d_lat, epsilon, a_ov):
    """Lateral spread from the safe distance; requires d_lat > 0."""
    return math.sqrt(-d_lat ** 2 / (2.0 * math.log(epsilon / a_ov)))


def obstacle_potential(point, obstacles, params):
    """Sum of obstacle bumps at (x, y).

    obstacles: iterable of (VehicleState, VehicleDescriptor, RssGap); each
    entry must carry the safe distances already computed for the pairing.
    """
    x, y = point
    total = 0.0
    for i, (state, desc, gap) in enumerate(obstacles):
        if gap.d_long <= 0 or gap.d_lat <= 0:
            raise ValueError(
                f"obstacle {desc.id!r} (index {i}): sigma undefined for "
                f"d_long={gap.d_long}, d_lat={gap.d_lat}")
        sx = sigma_x(gap.d_long, params.epsilon)
        sy = sigma_y(gap.d_lat, params.epsilon, params.a_ov)
        psi = state.heading
        if abs(psi) > YAW_CLAMP:
            log.warning("obstacle %r yaw %.3f rad clamped to +/-%.3f",
                        desc.id, psi, YAW_CLAMP)
            psi = math.copysign(YAW_CLAMP, psi)
        dx = x - state.x
        dy = y - state.y
        c1 = 1.0 - psi * psi
        c2 = 2.0 * psi * dx * dy / (sx * sy)
        if params.denominator_mode == "squared":
            quad = dx * dx / (sx * sx) + dy * dy / (sy * sy)
        else:
            quad = dx * dx / sx + dy * dy / sy
        total += params.a_ov * math.exp(-(c1 / 2.0) * (quad - c2))
    return total


SIDE_LANE_TAPER = 80.0   # [m] length of the merge-lane closure ramp


def _effective_y_lower(road, x):
    """Lower drivable bound, rising across the merge-lane closure taper."""
    if road.side_lane_end_x is None or len(road.lane_centers) < 2:
        return road.y_lower
    boundary = 0.5 * (road.lane_centers[0] + road.lane_centers[1])
    frac = (x - (road.side_lane_end_x - SIDE_LANE_TAPER)) / SIDE_LANE_TAPER
    frac = min(max(frac, 0.0), 1.0)
    return road.y_lower + frac * (boundary - road.y_lower)


def _wall(distance, reach, gain):
    """Repulsive edge term, active only within `reach` of the edge and
    exactly zero beyond it, so lane centers stay true field minima."""
    if distance >= reach:
        return 0.0
    return gain * (1.0 / distance - 1.0 / reach) ** 2


def road_potential(point, road, params):
    """Substitute road potential: short-range inverse-distance walls at the
    road edges plus a sinusoidal lane term with minima at lane centers.
    Infinite outside the drivable band. Where a merge side lane closes, the
    lower wall ramps up across the taper and the closed lane stops
    attracting."""
    x, y = point
    y_lower = _effective_y_lower(road, x)
    if y <= y_lower or y >= road.y_upper:
        return math.inf
    reach = road.lane_width / 2.0
    walls = (_wall(y - y_lower, reach, params.road_gain)
             + _wall(road.y_upper - y, reach, params.road_gain))
    open_centers = [c for c in road.lane_centers
                    if c > y_lower + 0.25 * road.lane_width]
    if not open_centers:
        open_centers = [road.lane_centers[-1]]
    nearest = min(open_centers, key=lambda c: abs(c - y))
    offset = y - nearest
    lane = params.lane_gain * math.sin(math.pi * offset / road.lane_width) ** 2
    return walls + lane


def scene_field_obstacles(scene, delays, cfg=LateralConfig()):
    """Attach RSS gaps to every scene obstacle for field evaluation.

    Roles follow the current geometry: the ego is rear if it is behind the
    obstacle, and lower if it is at smaller Y. Gaps are floored at the body
    extent so the bump stays defined for already-passed vehicles.
    """
    from dataclasses import replace as dc_replace

    ego_desc, ego_state = scene.ego
    out = []
    for desc, state in scene.obstacles:
        gap = rss_gap(ego_desc, ego_state, desc, state, delays, cfg,
                      ego_is_rear=ego_state.x <= state.x,
                      ego_is_lower=ego_state.y <= state.y)
        gap = dc_replace(
            gap,
            d_long=max(gap.d_long, (ego_desc.length + desc.length) / 2.0),
            d_lat=max(gap.d_lat,
                      (ego_desc.width + desc.width) / 2.0 + cfg.mu))
        out.append((state, desc, gap))
    return out


def total_field(point, scene, params, delays, cfg=LateralConfig(),
                step=0.01, obstacles=None):
    """Potential value plus central-difference gradient at a point.

    `obstacles` may carry a pre-assembled (state, descriptor, gap) list to
    avoid recomputing gaps over many points of the same scene.
    """
    if obstacles is None:
        obstacles = scene_field_obstacles(scene, delays, cfg)

    def value_at(p):
        return (obstacle_potential(p, obstacles, params)
                + road_potential(p, scene.road, params))

    x, y = point
    v = value_at((x, y))
    gx = (value_at((x + step, y)) - value_at((x - step, y))) / (2.0 * step)
    gy = (value_at((x, y + step)) - value_at((x, y - step))) / (2.0 * step)
    return FieldSample(value=v, grad_x=gx, grad_y=gy)


@dataclass(frozen=True)
class DescentPath:
    xs: np.ndarray
    ys: np.ndarray
    truncated: bool

    def as_polyline(self):
        return np.column_stack([self.xs, self.ys])


MAX_DESCENT_ITERATIONS = 100_000


def pf_descent_path(start, scene, params, step, x_goal, delays,
                    cfg=LateralConfig(), lat_gain=2.0, obstacles=None,
                    max_slope=0.6):
    """March x forward in `step` increments, sliding y down the lateral
    gradient. This is the oscillation-prone baseline: closely spaced
    obstacle bumps make the lateral gradient alternate along the way.

    The lateral move per step is slope-limited so near-wall gradients do
    not produce untrackable jumps.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    if obstacles is None:
        obstacles = scene_field_obstacles(scene, delays, cfg)
    road = scene.road
    margin = 0.3
    x, y = start
    y = min(max(y, _effective_y_lower(road, x) + margin),
            road.y_upper - margin)
    xs = [x]
    ys = [y]
    truncated = False
    iterations = 0
    while x < x_goal:
        iterations += 1
        if iterations > MAX_DESCENT_ITERATIONS:
            truncated = True
            log.warning("descent truncated after %d iterations",
                        MAX_DESCENT_ITERATIONS)
            break
        sample = total_field((x, y), scene, params, delays, cfg,
                             obstacles=obstacles)
        dy = -lat_gain * sample.grad_y * step
        limit = max_slope * step
        dy = min(max(dy, -limit), limit)
        x = x + step
        y = min(max(y + dy, _effective_y_lower(road, x) + margin),
                road.y_upper - margin)
        xs.append(x)
        ys.append(y)
    return DescentPath(np.asarray(xs), np.asarray(ys), truncated)
