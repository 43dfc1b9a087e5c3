"""Trace metrics, planner comparison runs, safety checks, and plot export.

Merge metrics are windowed between the first departure from the origin lane
center (beyond the settle threshold) and the first sustained arrival inside
the settle band around the target lane center. Curvature is the maximum
three-point (circumradius) curvature of the arc-length-resampled ego path.
Oscillation is repeated sign alternation of the lateral error about the
target center after the first crossing.
"""

import csv
import io
import math
from dataclasses import dataclass, asdict

import numpy as np

from .core import DelayProfile
from .rss import LateralConfig


@dataclass(frozen=True)
class Metrics:
    merge_length: float          # [m]
    merge_time: float            # [s]
    avg_merge_speed: float       # [m/s]
    max_curvature: float         # [1/m]
    path_oscillation: bool
    min_rss_margin_long: float   # [m]
    min_rss_margin_lat: float    # [m]
    no_maneuver: bool = False


SETTLE_THRESHOLD = 0.1     # [m]
SUSTAIN_TIME = 0.5         # [s]
PO_AMPLITUDE = 0.05        # [m]
PO_MIN_CHANGES = 3
CURVATURE_SPACING = 2.0    # [m] resample step for curvature estimation


def _resample_by_arclength(x, y, ds):
    s = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(x), np.diff(y)))])
    if s[-1] < 3 * ds:
        return x, y
    grid = np.arange(0.0, s[-1], ds)
    return np.interp(grid, s, x), np.interp(grid, s, y)


def max_path_curvature(x, y, ds=CURVATURE_SPACING):
    """Max circumradius curvature over consecutive point triples of the
    resampled path."""
    xr, yr = _resample_by_arclength(np.asarray(x, float),
                                    np.asarray(y, float), ds)
    if xr.size < 3:
        return 0.0
    ax, ay = xr[:-2], yr[:-2]
    bx, by = xr[1:-1], yr[1:-1]
    cx, cy = xr[2:], yr[2:]
    area2 = np.abs((bx - ax) * (cy - ay) - (by - ay) * (cx - ax))
    la = np.hypot(bx - ax, by - ay)
    lb = np.hypot(cx - bx, cy - by)
    lc = np.hypot(cx - ax, cy - ay)
    denom = la * lb * lc
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(denom > 1e-12, 2.0 * area2 / denom, 0.0)
    return float(np.max(k)) if k.size else 0.0


def oscillation_count(error, amplitude=PO_AMPLITUDE):
    """Number of sign flips after the first zero crossing whose following
    lobe exceeds `amplitude`."""
    e = np.asarray(error, float)
    sign = np.sign(e)
    sign[sign == 0] = 1.0
    flips = np.nonzero(np.diff(sign) != 0)[0]
    if flips.size < 2:
        return 0
    qualifying = 0
    for n, idx in enumerate(flips[1:], start=1):
        seg_end = flips[n + 1] if n + 1 < flips.size else e.size - 1
        lobe = np.abs(e[idx + 1:seg_end + 1])
        if lobe.size and lobe.max() > amplitude:
            qualifying += 1
    return qualifying


def oscillation_detected(t, error, amplitude=PO_AMPLITUDE,
                         min_changes=PO_MIN_CHANGES):
    """True iff the error flips sign at least `min_changes` times after its
    first zero crossing, each flip followed by an excursion beyond
    `amplitude`."""
    return oscillation_count(error, amplitude) >= min_changes


def _sustained_index(flags, window):
    """First index where `flags` stays true for `window` samples."""
    run = 0
    for i, f in enumerate(flags):
        run = run + 1 if f else 0
        if run >= window:
            return i - window + 1
    return None


def _pairwise_margins(trace, ego_id, delays, cfg):
    """Minimum longitudinal/lateral RSS margins of the ego against every
    other vehicle over the whole trace."""
    min_long = math.inf
    min_lat = math.inf
    ego_desc = trace.descriptors[ego_id]
    ex = trace.signal(ego_id, "x")
    ey = trace.signal(ego_id, "y")
    ev = trace.signal(ego_id, "v_long")
    evl = trace.signal(ego_id, "v_lat")
    for vid in trace.vehicle_ids:
        if vid == ego_id:
            continue
        desc = trace.descriptors[vid]
        ox = trace.signal(vid, "x")
        oy = trace.signal(vid, "y")
        ov = trace.signal(vid, "v_long")
        ovl = trace.signal(vid, "v_lat")
        d_long = _d_long_pair(ego_desc, ev, desc, ov, ex, ox, delays)
        d_lat = _d_lat_pair(ego_desc, evl, desc, ovl, ey, oy, delays, cfg)
        min_long = min(min_long, float(np.min(np.abs(ox - ex) - d_long)))
        min_lat = min(min_lat, float(np.min(np.abs(oy - ey) - d_lat)))
    if not math.isfinite(min_long):
        min_long = math.inf
        min_lat = math.inf
    return min_long, min_lat


def _d_long_directed(rear_desc, v_rear, front_desc, v_front, rho):
    v_rho = v_rear + rear_desc.a_accel_max * rho
    pre = (v_rear * rho + 0.5 * rear_desc.a_accel_max * rho ** 2
           + v_rho ** 2 / (2.0 * rear_desc.a_brake_min)
           + (rear_desc.length + front_desc.length) / 2.0
           - v_front ** 2 / (2.0 * front_desc.a_brake_max))
    return np.maximum(pre, 0.0)


def _d_long_pair(desc_a, v_a, desc_b, v_b, x_a, x_b, delays):
    """Role-resolved longitudinal safe distance per timestep (a rear when
    behind b, and vice versa)."""
    rho = delays.rho
    d_ab = _d_long_directed(desc_a, v_a, desc_b, v_b, rho)
    d_ba = _d_long_directed(desc_b, v_b, desc_a, v_a, rho)
    return np.where(x_a <= x_b, d_ab, d_ba)


def _d_lat_directed(lo_desc, v_lo, up_desc, v_up, rho, mu):
    v_lo_rho = v_lo + lo_desc.a_lat_accel_max * rho
    v_up_rho = v_up - up_desc.a_lat_accel_max * rho
    toward = ((v_lo + v_lo_rho) / 2.0 * rho
              + v_lo_rho ** 2 / (2.0 * lo_desc.a_lat_brake_min)
              + (lo_desc.width + up_desc.width) / 2.0)
    away = ((v_up + v_up_rho) / 2.0 * rho
            + v_up_rho ** 2 / (2.0 * up_desc.a_lat_brake_min))
    return mu + np.maximum(toward - away, 0.0)


def _d_lat_pair(desc_a, vl_a, desc_b, vl_b, y_a, y_b, delays, cfg):
    rho = delays.rho
    d_ab = _d_lat_directed(desc_a, vl_a, desc_b, vl_b, rho, cfg.mu)
    d_ba = _d_lat_directed(desc_b, vl_b, desc_a, vl_a, rho, cfg.mu)
    return np.where(y_a <= y_b, d_ab, d_ba)


def compute_metrics(trace, road, settle=SETTLE_THRESHOLD,
                    sustain=SUSTAIN_TIME, po_amplitude=PO_AMPLITUDE,
                    delays=None, cfg=LateralConfig()):
    """Merge metrics for the ego trace; returns a no-maneuver record when
    the ego never leaves its origin lane band."""
    if delays is None:
        delays = DelayProfile()
    ego_id = trace.ego_id
    t = trace.t
    x = trace.signal(ego_id, "x")
    y = trace.signal(ego_id, "y")
    origin = road.nearest_lane_center(y[0])
    target = road.nearest_lane_center(y[-1])

    min_long, min_lat = _pairwise_margins(trace, ego_id, delays, cfg)
    curvature = max_path_curvature(x, y)

    departed = np.abs(y - origin) > settle
    if not departed.any():
        return Metrics(0.0, 0.0, 0.0, curvature, False, min_long, min_lat,
                       no_maneuver=True)
    start = int(np.argmax(departed))
    # Oscillation is a property of the whole post-departure trace, judged
    # even when the vehicle never properly settles.
    po = oscillation_detected(t[start:], y[start:] - target,
                              amplitude=po_amplitude)
    window = max(int(round(sustain / trace.dt)), 1)
    inside = np.abs(y[start:] - target) < settle
    settled_rel = _sustained_index(inside, window)
    if settled_rel is None:
        return Metrics(0.0, 0.0, 0.0, curvature, po, min_long, min_lat,
                       no_maneuver=True)
    end = start + settled_rel
    mt = float(t[end] - t[start])
    ml = float(x[end] - x[start])
    ams = ml / mt if mt > 0 else 0.0
    return Metrics(ml, mt, ams, curvature, po, min_long, min_lat)


# ---------------------------------------------------------------------------
# Safety checks over whole traces
# ---------------------------------------------------------------------------

def rss_overlap_events(trace, delays=None, cfg=LateralConfig(),
                       exclude_platoon_internal=True):
    """Timesteps at which some vehicle pair sits inside both its
    longitudinal and lateral safe distances simultaneously.

    Platoon-internal pairs are excluded by default: their constant-time-gap
    spacing is intentionally below the longitudinal rule.
    """
    if delays is None:
        delays = DelayProfile()
    events = []
    ids = trace.vehicle_ids
    platoon = set(trace.platoon_ids)
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            ida, idb = ids[a], ids[b]
            if (exclude_platoon_internal and ida in platoon
                    and idb in platoon):
                continue
            da, db = trace.descriptors[ida], trace.descriptors[idb]
            xa, xb = trace.signal(ida, "x"), trace.signal(idb, "x")
            ya, yb = trace.signal(ida, "y"), trace.signal(idb, "y")
            va, vb = trace.signal(ida, "v_long"), trace.signal(idb, "v_long")
            vla = trace.signal(ida, "v_lat")
            vlb = trace.signal(idb, "v_lat")
            d_long = _d_long_pair(da, va, db, vb, xa, xb, delays)
            d_lat = _d_lat_pair(da, vla, db, vlb, ya, yb, delays, cfg)
            both = (np.abs(xb - xa) < d_long) & (np.abs(yb - ya) < d_lat)
            for idx in np.nonzero(both)[0]:
                events.append({"t": float(trace.t[idx]), "pair": (ida, idb)})
    return events


def min_center_gap(trace):
    """Smallest longitudinal center distance between any two vehicles while
    their bodies overlap laterally (the physical-collision check)."""
    best = math.inf
    ids = trace.vehicle_ids
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            da, db = trace.descriptors[ids[a]], trace.descriptors[ids[b]]
            xa, xb = trace.signal(ids[a], "x"), trace.signal(ids[b], "x")
            ya, yb = trace.signal(ids[a], "y"), trace.signal(ids[b], "y")
            lateral_overlap = np.abs(yb - ya) < (da.width + db.width) / 2.0
            if lateral_overlap.any():
                gaps = np.abs(xb - xa)[lateral_overlap]
                best = min(best, float(np.min(gaps)))
    return best


# ---------------------------------------------------------------------------
# Planner comparison
# ---------------------------------------------------------------------------

PLANNER_ALIASES = {
    "eramp-c": ("eramp", "cooperative"),
    "eramp_c": ("eramp", "cooperative"),
    "eramp-nc": ("eramp", "non_cooperative"),
    "eramp_nc": ("eramp", "non_cooperative"),
    "pf_baseline": ("pf_baseline", None),
    "pf-baseline": ("pf_baseline", None),
    "eramp": ("eramp", None),
}


def resolve_planner(name):
    key = name.strip().lower()
    if key not in PLANNER_ALIASES:
        raise ValueError(f"unknown planner {name!r}; expected one of "
                         f"{sorted(set(PLANNER_ALIASES))}")
    return PLANNER_ALIASES[key]


@dataclass(frozen=True)
class ComparisonRow:
    planner: str
    metrics: Metrics
    ml_reduction_pct: float | None = None
    mt_reduction_pct: float | None = None


class ComparisonReport:
    def __init__(self, rows, baseline_name=None, metadata=None):
        self.rows = list(rows)
        self.baseline_name = baseline_name
        self.metadata = dict(metadata or {})
        self.traces = {}

    def row(self, planner):
        for r in self.rows:
            if r.planner == planner:
                return r
        raise KeyError(planner)

    def to_csv(self, path=None):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["planner", "merge_length", "merge_time",
                         "avg_merge_speed", "max_curvature",
                         "path_oscillation", "min_rss_margin_long",
                         "min_rss_margin_lat", "no_maneuver",
                         "ml_reduction_pct", "mt_reduction_pct"])
        for r in self.rows:
            m = r.metrics
            writer.writerow([
                r.planner, f"{m.merge_length:.10g}", f"{m.merge_time:.10g}",
                f"{m.avg_merge_speed:.10g}", f"{m.max_curvature:.10g}",
                int(m.path_oscillation),
                f"{m.min_rss_margin_long:.10g}",
                f"{m.min_rss_margin_lat:.10g}", int(m.no_maneuver),
                "" if r.ml_reduction_pct is None
                else f"{r.ml_reduction_pct:.10g}",
                "" if r.mt_reduction_pct is None
                else f"{r.mt_reduction_pct:.10g}"])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source):
        if "\n" not in source:
            with open(source, encoding="utf-8") as fh:
                source = fh.read()
        reader = csv.DictReader(io.StringIO(source))
        rows = []
        for rec in reader:
            metrics = Metrics(
                merge_length=float(rec["merge_length"]),
                merge_time=float(rec["merge_time"]),
                avg_merge_speed=float(rec["avg_merge_speed"]),
                max_curvature=float(rec["max_curvature"]),
                path_oscillation=bool(int(rec["path_oscillation"])),
                min_rss_margin_long=float(rec["min_rss_margin_long"]),
                min_rss_margin_lat=float(rec["min_rss_margin_lat"]),
                no_maneuver=bool(int(rec["no_maneuver"])))
            rows.append(ComparisonRow(
                planner=rec["planner"], metrics=metrics,
                ml_reduction_pct=(float(rec["ml_reduction_pct"])
                                  if rec["ml_reduction_pct"] else None),
                mt_reduction_pct=(float(rec["mt_reduction_pct"])
                                  if rec["mt_reduction_pct"] else None)))
        return cls(rows)

    def to_text(self):
        lines = [f"{'planner':<14} {'ML [m]':>9} {'MT [s]':>8} "
                 f"{'AMS [m/s]':>10} {'C [1/m]':>9} {'PO':>4}"]
        for r in self.rows:
            m = r.metrics
            po = "yes" if m.path_oscillation else "no"
            if m.no_maneuver:
                lines.append(f"{r.planner:<14} {'(no maneuver)':>42}")
                continue
            lines.append(f"{r.planner:<14} {m.merge_length:>9.2f} "
                         f"{m.merge_time:>8.2f} {m.avg_merge_speed:>10.2f} "
                         f"{m.max_curvature:>9.2e} {po:>4}")
            if r.ml_reduction_pct is not None:
                lines.append(f"{'':<14}   vs baseline: ML -"
                             f"{r.ml_reduction_pct:.1f}%  MT -"
                             f"{r.mt_reduction_pct:.1f}%")
        return "\n".join(lines)


def run_comparison(config, planners, delays=None, keep_traces=True):
    """Run each planner on the scenario and tabulate metrics; reduction
    columns are relative to the PF baseline row when present."""
    from .sim import run_scenario
    from dataclasses import replace as dc_replace

    if delays is None:
        delays = DelayProfile()
    results = []
    traces = {}
    for name in planners:
        family, mode = resolve_planner(name)
        cfg = config if mode is None else dc_replace(config, mode=mode)
        trace = run_scenario(cfg, planner=family, delays=delays)
        metrics = compute_metrics(trace, config.road, delays=delays)
        results.append((name, metrics))
        traces[name] = trace

    baseline = next((m for n, m in results
                     if resolve_planner(n)[0] == "pf_baseline"
                     and not m.no_maneuver), None)
    rows = []
    for name, metrics in results:
        ml_red = mt_red = None
        if (baseline is not None and not metrics.no_maneuver
                and resolve_planner(name)[0] != "pf_baseline"
                and baseline.merge_length > 0 and baseline.merge_time > 0):
            ml_red = 100.0 * (1.0 - metrics.merge_length
                              / baseline.merge_length)
            mt_red = 100.0 * (1.0 - metrics.merge_time
                              / baseline.merge_time)
        rows.append(ComparisonRow(name, metrics, ml_red, mt_red))
    report = ComparisonReport(
        rows,
        baseline_name=next((n for n, _ in results
                            if resolve_planner(n)[0] == "pf_baseline"),
                           None),
        metadata={"curvature_definition": "max"})
    if keep_traces:
        report.traces = traces
    return report


# ---------------------------------------------------------------------------
# Plot emission
# ---------------------------------------------------------------------------

def _require_matplotlib():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "rssplan"
    return plt


def emit_plots(source, out_dir):
    """Write the standard figure set for a trace (or planner comparison)
    as SVG files; returns the created paths. Fails before creating any
    file when the source is empty."""
    import os

    from .sim import TraceLog

    if isinstance(source, TraceLog):
        if source.t.size == 0:
            raise ValueError("empty trace: nothing to plot")
        return _emit_trace_plots(source, out_dir)
    if isinstance(source, ComparisonReport):
        if not source.traces:
            raise ValueError("report carries no traces to plot")
        plt = _require_matplotlib()
        os.makedirs(out_dir, exist_ok=True)
        fig, ax = plt.subplots(figsize=(9, 3))
        for name, trace in source.traces.items():
            ax.plot(trace.signal(trace.ego_id, "x"),
                    trace.signal(trace.ego_id, "y"), label=name)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.legend()
        path = os.path.join(out_dir, "path.svg")
        fig.savefig(path)
        plt.close(fig)
        return [path]
    raise TypeError("emit_plots expects a TraceLog or ComparisonReport")


def _emit_trace_plots(trace, out_dir):
    import os

    plt = _require_matplotlib()
    os.makedirs(out_dir, exist_ok=True)
    created = []
    ego = trace.ego_id
    obstacle_ids = [v for v in trace.vehicle_ids
                    if v != ego and v not in trace.platoon_ids]

    def save(fig, name):
        path = os.path.join(out_dir, name)
        fig.savefig(path)
        plt.close(fig)
        created.append(path)

    fig, ax = plt.subplots(figsize=(9, 3))
    for vid in trace.vehicle_ids:
        ax.plot(trace.signal(vid, "x"), trace.signal(vid, "y"), label=vid)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(fontsize=7)
    save(fig, "path.svg")

    for name, signal in (("beta.svg", "beta"), ("psi.svg", "psi"),
                         ("delta.svg", "steering")):
        fig, ax = plt.subplots(figsize=(6, 3))
        ax.plot(trace.t, trace.signal(ego, signal))
        ax.set_xlabel("t [s]")
        ax.set_ylabel(signal)
        save(fig, name)

    fig, ax = plt.subplots(figsize=(6, 3))
    ax.plot(trace.t, trace.signal(ego, "v_long"))
    ax.set_xlabel("t [s]")
    ax.set_ylabel("ego v [m/s]")
    save(fig, "vx_ego.svg")

    fig, ax = plt.subplots(figsize=(6, 3))
    for vid in obstacle_ids:
        ax.plot(trace.t, trace.signal(vid, "v_long"), label=vid)
    if obstacle_ids:
        ax.legend(fontsize=7)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("obstacle v [m/s]")
    save(fig, "vx_obs.svg")

    if trace.platoon_ids:
        fig, ax = plt.subplots(figsize=(6, 3))
        for vid in trace.platoon_ids:
            ax.plot(trace.t, trace.signal(vid, "v_long"), label=vid)
        ax.legend(fontsize=7)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("platoon v [m/s]")
        save(fig, "vx_platoon.svg")

    return created


def field_dump(config, grid_dx, delays=None, x_span=300.0):
    """CSV text of (x, y, value) samples of the total field over the road
    band at the scenario's initial scene."""
    from .core import scene_from_config
    from .field import PfParams, scene_field_obstacles, total_field

    if delays is None:
        delays = DelayProfile()
    scene = scene_from_config(config)
    params = PfParams()
    cfg = LateralConfig()
    obstacles = scene_field_obstacles(scene, delays, cfg)
    road = config.road
    x0 = scene.ego[1].x - 20.0
    xs = np.arange(x0, x0 + x_span, grid_dx)
    ys = np.arange(road.y_lower + 0.2, road.y_upper - 0.2 + 1e-9, grid_dx)
    lines = ["x,y,value"]
    for xv in xs:
        for yv in ys:
            sample = total_field((xv, yv), scene, params, delays, cfg,
                                 obstacles=obstacles)
            lines.append(f"{xv:.10g},{yv:.10g},{sample.value:.10g}")
    return "\n".join(lines) + "\n"
