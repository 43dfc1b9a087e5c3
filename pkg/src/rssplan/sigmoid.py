"""Lane-change path generation on a sigmoid curve.

The path is y(x) = W / (1 + exp(-kappa (x - P_c))) + b: it runs from the
asymptote b (start lane) to W + b (target lane), crossing the midline at the
centrosymmetric point x = P_c with slope W*kappa/4. Parameter ranges are
derived from the road cross-section and the safe distances of the
surrounding vehicles; the slope is picked from the safe-distance-to-headway
ratio within configured comfort bounds.
"""

import math
from dataclasses import dataclass

import numpy as np

# Peak of |s(1-s)(1-2s)| over s in (0,1); scales the sigmoid's maximum
# second derivative W*kappa^2.
CURVATURE_SHAPE_CONST = 1.0 / (6.0 * math.sqrt(3.0))

DEFAULT_KAPPA_BOUNDS = (0.05, 0.5)


@dataclass(frozen=True)
class SigmoidParams:
    w: float        # [m] lateral width (signed; positive = toward larger Y)
    kappa: float    # [1/m] slope scale at the centrosymmetric point
    p_c: float      # [m] x of the centrosymmetric point
    b: float        # [m] start-lane asymptote

    def __post_init__(self):
        if not all(map(math.isfinite, (self.w, self.kappa, self.p_c,
                                       self.b))):
            raise ValueError("sigmoid parameters must be finite")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")


@dataclass(frozen=True)
class FeasibleRanges:
    """Feasible intervals for b, W+b and P_c.

    Intervals are (lo, hi) with the half-open convention (lo exclusive,
    hi inclusive) for the lateral pair; None means empty. pc_pinned marks
    the front-obstacle-only case where P_c is fixed rather than ranged.
    """

    b_range: tuple | None
    wb_range: tuple | None
    pc_range: tuple | None
    feasible: bool
    pc_pinned: bool = False
    bound_mismatch: bool = False   # printed-*-bound vs revocation-test gap


def sigmoid_eval(p, x):
    """Evaluate the sigmoid at x (scalar or array)."""
    return p.w / (1.0 + np.exp(-p.kappa * (np.asarray(x, dtype=float)
                                           - p.p_c))) + p.b


def sigmoid_slope(p, x):
    s = 1.0 / (1.0 + np.exp(-p.kappa * (np.asarray(x, dtype=float) - p.p_c)))
    return p.w * p.kappa * s * (1.0 - s)


def sigmoid_curvature(p, x):
    s = 1.0 / (1.0 + np.exp(-p.kappa * (np.asarray(x, dtype=float) - p.p_c)))
    d1 = p.w * p.kappa * s * (1.0 - s)
    d2 = p.w * p.kappa ** 2 * s * (1.0 - s) * (1.0 - 2.0 * s)
    return np.abs(d2) / (1.0 + d1 ** 2) ** 1.5


@dataclass(frozen=True)
class ObstacleBound:
    """One neighbour constraining the lane change: position plus the safe
    distances computed for its pairing with the ego."""

    x: float
    y: float
    d_long: float
    d_lat: float
    d_long_star: float | None = None   # predicted-at-CP value, if distinct

    def star(self):
        return self.d_long if self.d_long_star is None else self.d_long_star


def feasible_ranges(road, ego_width, start_lane_y, target_lane_y,
                    behind=None, ahead=None):
    """Feasible parameter intervals for an upward (increasing-Y) change.

    `behind` is the vehicle the ego ends up ahead of (its safe distance
    pushes P_c forward); `ahead` is the next vehicle further on (its safe
    distance caps P_c). With only an `ahead` vehicle the centrosymmetric
    point is pinned at ahead.x - d_long so the maneuver completes before
    reaching it. An empty P_c interval signals that the lane change must be
    revoked.
    """
    if target_lane_y <= start_lane_y:
        raise ValueError("feasible_ranges expects target lane above start "
                         "lane; mirror the scene for downward changes")

    half_w = ego_width / 2.0

    b_lo = road.y_lower + half_w
    b_hi = start_lane_y
    if ahead is not None:
        b_hi = min(b_hi, ahead.y - ahead.d_lat)
    b_range = (b_lo, b_hi) if b_lo < b_hi else None

    wb_lo = target_lane_y
    if behind is not None:
        wb_lo = max(wb_lo, behind.y - behind.d_lat)
    wb_hi = road.y_upper - half_w
    wb_range = (wb_lo, wb_hi) if wb_lo < wb_hi else None

    pc_pinned = False
    bound_mismatch = False
    if behind is None and ahead is None:
        pc_range = (-math.inf, math.inf)
    elif behind is None:
        pc_range = (ahead.x - ahead.d_long, ahead.x - ahead.d_long)
        pc_pinned = True
    else:
        lo = behind.x + behind.star()
        hi = math.inf if ahead is None else ahead.x - ahead.d_long
        # Revocation uses the plain safe distance even when the predicted
        # value differs; flag when the two disagree about feasibility.
        revoke = (ahead is not None
                  and behind.x + behind.d_long >= ahead.x - ahead.d_long)
        pc_range = None if (revoke or lo > hi) else (lo, hi)
        if ahead is not None and revoke != (lo > hi):
            bound_mismatch = True

    feasible = all(r is not None for r in (b_range, wb_range, pc_range))
    return FeasibleRanges(b_range, wb_range, pc_range, feasible,
                          pc_pinned=pc_pinned, bound_mismatch=bound_mismatch)


def select_slope(ego_x, front_obstacle_x, d_rss_long, bounds=None):
    """Slope from the safe-distance-to-headway ratio, kept inside
    [kappa_min, max(ratio, kappa_max)]."""
    if bounds is None:
        bounds = DEFAULT_KAPPA_BOUNDS
    kappa_min, kappa_max = bounds
    if front_obstacle_x <= ego_x:
        raise ValueError("front obstacle must be ahead of the ego")
    ratio = d_rss_long / (front_obstacle_x - ego_x)
    upper = max(ratio, kappa_max)
    return min(max(ratio, kappa_min), upper)


def kappa_for_span(width, span, tail=0.1):
    """Slope needed for the curve to travel from `tail` to width-`tail`
    within `span` meters of longitudinal distance."""
    w = abs(width)
    if span <= 0:
        raise ValueError("span must be > 0")
    if w <= 2 * tail:
        raise ValueError("width too small for the requested tail band")
    return 2.0 * math.log((w - tail) / tail) / span


def comfort_kappa_limit(width, speed, a_lat_max=4.0):
    """Largest slope whose peak lateral acceleration at `speed` stays under
    a_lat_max (uses the small-slope curvature peak W*kappa^2/(6*sqrt(3)))."""
    w = abs(width)
    if w <= 0 or speed <= 0:
        return math.inf
    return math.sqrt(a_lat_max / (CURVATURE_SHAPE_CONST * w)) / speed


def span_for_kappa(width, kappa, tail=0.1):
    """Longitudinal distance the maneuver occupies (inverse of
    kappa_for_span)."""
    w = abs(width)
    return 2.0 * math.log((w - tail) / tail) / kappa


@dataclass(frozen=True)
class PathSamples:
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray

    def as_polyline(self):
        return np.column_stack([self.x, self.y])

    def to_csv(self, path):
        header = "x,y,heading,curvature"
        data = np.column_stack([self.x, self.y, self.heading,
                                self.curvature])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.10g")


def generate_path(p, x_start, x_end, sample_dx):
    """Sample the sigmoid with analytic heading and curvature."""
    if x_start >= x_end:
        raise ValueError("x_start must be < x_end")
    if sample_dx <= 0:
        raise ValueError("sample_dx must be > 0")
    n = max(int(math.ceil((x_end - x_start) / sample_dx)) + 1, 2)
    xs = np.linspace(x_start, x_end, n)
    if p.w == 0:
        ys = np.full_like(xs, p.b)
        return PathSamples(xs, ys, np.zeros_like(xs), np.zeros_like(xs))
    ys = sigmoid_eval(p, xs)
    slopes = sigmoid_slope(p, xs)
    return PathSamples(xs, ys, np.arctan(slopes), sigmoid_curvature(p, xs))


def mirror_params(p, road):
    """Reflect a sigmoid about the road midline (used to plan downward lane
    changes in the upward frame)."""
    axis = road.y_lower + road.y_upper
    return SigmoidParams(w=-p.w, kappa=p.kappa, p_c=p.p_c, b=axis - p.b)
