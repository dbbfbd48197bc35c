"""Safety score, perception latency model and safety-aware compute-resource
management for autonomous-vehicle computing systems."""

from .latency import (
    BaselineLatencyRegressor,
    ConversionTable,
    LatencyCoefficients,
    LogQuadraticFeatures,
    ObstacleDensityEncoder,
    RoiSpec,
    build_density_vector,
    feature_transform,
    pearson_heatmap,
)
from .planning import (
    ClusterStore,
    PlanClusterer,
    PriorityPolicy,
    ResourcePlan,
    TimeoutMonitor,
    enumerate_plans,
    match_cluster,
    monitor_step,
    offline_plan,
)
from .response import (
    AccumulationFn,
    AccumulationRegressor,
    DependencyGraph,
    ModuleSpec,
    critical_modules,
    instantaneous_response_time,
    validate_graph,
)
from .rss import (
    AlreadyUnsafeError,
    DrivingState,
    ObstacleState,
    ScenarioMode,
    ScoreWeights,
    min_safe_distance,
    quad_coefficients,
    response_time_window,
    safety_score,
)
from .simulate import (
    MachineSpec,
    Policy,
    TraceConfig,
    compare_metrics,
    generate_trace,
    run_config,
)
from .validation import DataError

__version__ = "0.1.0"
