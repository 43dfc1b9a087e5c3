"""Command-line entry point.

Subcommands: run one scenario with one planner, compare planners, compute
metrics for a stored trace, and dump the potential field on a grid. Exit
codes: 0 success, 2 validation error, 3 simulation abort.
"""

import argparse
import json
import os
import sys

from .core import DelayProfile, ScenarioError, load_scenario
from .harness import (ComparisonReport, compute_metrics, emit_plots,
                      field_dump, resolve_planner, run_comparison)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SIM_ABORT = 3


def _add_common(p):
    p.add_argument("--seed", type=int, default=None,
                   help="reserved; the simulator is deterministic")
    p.add_argument("--dt", type=float, default=None,
                   help="override the scenario timestep")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rssplan",
        description="RSS-constrained merge/emergency planning scenarios")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario")
    run.add_argument("--scenario", required=True)
    run.add_argument("--planner", default="eramp")
    run.add_argument("--out", default=None,
                     help="directory for trace/eventplots output")
    _add_common(run)

    comp = sub.add_parser("compare", help="run several planners")
    comp.add_argument("--scenario", required=True)
    comp.add_argument("--planners", required=True,
                      help="comma-separated planner names")
    comp.add_argument("--out", default=None)
    _add_common(comp)

    met = sub.add_parser("metrics", help="metrics for a stored trace CSV")
    met.add_argument("--trace", required=True)
    met.add_argument("--scenario", default=None,
                     help="scenario file supplying the road geometry")
    _add_common(met)

    dump = sub.add_parser("field-dump", help="grid dump of the field")
    dump.add_argument("--scenario", required=True)
    dump.add_argument("--grid", type=float, required=True, metavar="DX")
    dump.add_argument("--out", default=None)
    _add_common(dump)

    return parser


def _load(args):
    config = load_scenario(args.scenario)
    if args.dt is not None:
        from dataclasses import replace
        if args.dt <= 0:
            raise ScenarioError("dt must be > 0", "dt")
        config = replace(config, dt=args.dt)
    return config


def _metrics_payload(metrics):
    from dataclasses import asdict
    return asdict(metrics)


def _cmd_run(args):
    from .sim import run_scenario
    config = _load(args)
    family, mode = resolve_planner(args.planner)
    if mode is not None:
        from dataclasses import replace
        config = replace(config, mode=mode)
    trace = run_scenario(config, planner=family)
    metrics = compute_metrics(trace, config.road)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        trace.to_csv(os.path.join(args.out, "trace.csv"))
        trace.write_events(os.path.join(args.out, "events.jsonl"))
        trace.write_decisions(os.path.join(args.out, "decisions.jsonl"))
        emit_plots(trace, args.out)
    payload = _metrics_payload(metrics)
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        for k, v in payload.items():
            print(f"{k},{v}")
    return EXIT_OK


def _cmd_compare(args):
    config = _load(args)
    planners = [p for p in args.planners.split(",") if p]
    report = run_comparison(config, planners)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        report.to_csv(os.path.join(args.out, "report.csv"))
        emit_plots(report, args.out)
    if args.format == "json":
        rows = [{"planner": r.planner,
                 **_metrics_payload(r.metrics),
                 "ml_reduction_pct": r.ml_reduction_pct,
                 "mt_reduction_pct": r.mt_reduction_pct}
                for r in report.rows]
        print(json.dumps(rows, indent=2))
    else:
        print(report.to_text())
    return EXIT_OK


def _trace_from_csv(path):
    import numpy as np
    from .sim import TRACE_SIGNALS, TraceLog

    rows = {}
    order = []
    times = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        expected = ["t", "id"] + list(TRACE_SIGNALS)
        if header != expected:
            raise ScenarioError(f"{path}: unexpected trace header")
        for line in fh:
            parts = line.strip().split(",")
            t = float(parts[0])
            vid = parts[1]
            if vid not in rows:
                rows[vid] = []
                order.append(vid)
            rows[vid].append([float(v) for v in parts[2:]])
            if vid == order[0]:
                times.append(t)
    n = len(times)
    dt = times[1] - times[0] if n > 1 else 0.01
    from .core import VehicleDescriptor
    descs = {vid: VehicleDescriptor(id=vid, length=5.0, width=2.0,
                                    a_accel_max=3.0, a_brake_min=4.0,
                                    a_brake_max=8.0)
             for vid in order}
    trace = TraceLog(order, descs, dt, n)
    for vid in order:
        arr = np.asarray(rows[vid])
        for k, sig in enumerate(TRACE_SIGNALS):
            trace.data[vid][sig][:] = arr[:, k]
    return trace


def _cmd_metrics(args):
    trace = _trace_from_csv(args.trace)
    if args.scenario:
        road = load_scenario(args.scenario).road
    else:
        # Infer a plausible road band from the trace extents.
        import numpy as np
        from .core import RoadGeometry
        ys = np.concatenate([trace.signal(v, "y")
                             for v in trace.vehicle_ids])
        lanes = sorted({round(float(trace.signal(v, "y")[0]), 1)
                        for v in trace.vehicle_ids})
        road = RoadGeometry(y_lower=float(ys.min()) - 2.0,
                            y_upper=float(ys.max()) + 2.0,
                            lane_centers=tuple(lanes))
    metrics = compute_metrics(trace, road)
    payload = _metrics_payload(metrics)
    if args.format == "json":
        print(json.dumps(payload, indent=2))
    else:
        for k, v in payload.items():
            print(f"{k},{v}")
    return EXIT_OK


def _cmd_field_dump(args):
    config = _load(args)
    text = field_dump(config, args.grid)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "compare": _cmd_compare,
                "metrics": _cmd_metrics, "field-dump": _cmd_field_dump}
    try:
        return handlers[args.command](args)
    except ScenarioError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:  # simulation aborts and I/O failures
        from .sim import SimulationError
        if isinstance(e, SimulationError):
            print(f"simulation abort: {e}", file=sys.stderr)
            return EXIT_SIM_ABORT
        raise


if __name__ == "__main__":
    sys.exit(main())
