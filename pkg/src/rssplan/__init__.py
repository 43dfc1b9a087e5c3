"""RSS-constrained highway motion planning and scenario simulation."""

from .core import (BehaviorScript, DelayProfile, ObstacleSpec, PlatoonConfig,
                   RoadGeometry, ScenarioConfig, ScenarioError,
                   SceneSnapshot, VehicleDescriptor, VehicleState,
                   load_scenario, save_scenario, scene_from_config,
                   validate_scene)
from .rss import (LateralConfig, RssGap, max_safe_passing_speed, rss_gap,
                  safe_lateral_distance, safe_longitudinal_distance,
                  static_gap_safe)
from .field import (DescentPath, FieldSample, PfParams, obstacle_potential,
                    pf_descent_path, road_potential, scene_field_obstacles,
                    total_field)
from .sigmoid import (FeasibleRanges, ObstacleBound, PathSamples,
                      SigmoidParams, feasible_ranges, generate_path,
                      select_slope, sigmoid_eval)
from .planner import (PlanDecision, PlatoonSpec, V2VChannel, V2VMessage,
                      channel_poll, channel_send,
                      check_merge_ahead_noncoop, check_merge_behind_noncoop,
                      cooperative_speed_solve, plan_emergency, plan_merge,
                      replay_check, required_merge_speed)
from .sim import (ControlCommand, SimulationError, TraceLog,
                  platoon_controller, rss_guard, run_scenario, step_vehicle,
                  track_path, track_speed)
from .harness import (ComparisonReport, Metrics, compute_metrics,
                      emit_plots, min_center_gap, rss_overlap_events,
                      run_comparison)

__version__ = "0.1.0"
