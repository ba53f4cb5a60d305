"""Hidden and self-excited attractors in nonsmooth electromechanical systems."""

from .core import (
    ConfigError,
    ContractError,
    DomainError,
    LowerFrictionParams,
    State,
    TorqueInterval,
    UpperFrictionParams,
    friction_lower,
    friction_upper,
)
from .analysis import (
    AttractorReport,
    BasinGrid,
    BasinMap,
    Equilibrium,
    GridAxis,
    basin_scan,
    classify_attractor,
    find_equilibria,
    jacobian,
    sommerfeld_ratio,
    steady_state_metrics,
)
from .config import SCENARIOS, ScenarioSpec, get_scenario, parse_config
from .integrator import IntegrationConfig, IntegrationError, Trajectory, integrate
from .io import RunSummary, export_summary, export_trajectory, read_trajectory_csv, run_scenario
from .models import (
    DrillDcParams,
    DrillInductionParams,
    SystemModel,
    ToraParams,
    build_model,
)

__version__ = "0.1.0"
