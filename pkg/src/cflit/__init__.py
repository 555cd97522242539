"""Over-the-air federated learning sharing OFDM resource blocks with uplink data users."""
from .allocation import (
    AllocationBudget,
    AllocationGrid,
    offline_allocate,
    online_allocate,
    partition_fl_rbs,
    rsca_allocate,
    validate_allocation,
)
from .config import ExperimentConfig, load_config
from .errors import (
    CFLITError,
    ConvergenceError,
    DegenerateChannelError,
    DomainError,
    InfeasibleError,
    InvalidConfigError,
    InvalidInputError,
    NumericalError,
    TruncatedStreamError,
)
from .hyperopt import BoundParams, convergence_bound, optimal_T, optimal_tau, zeta
from .rates import (
    analytic_rate_rsca,
    analytic_rate_threshold,
    exp_integral_e1,
    optimal_threshold_qstar,
    rate_improvement,
)
from .simulation import SimulationTranscript, run_cflit
from ._version import __version__

__all__ = [
    "AllocationBudget", "AllocationGrid", "BoundParams", "CFLITError", "ConvergenceError",
    "DegenerateChannelError", "DomainError", "ExperimentConfig", "InfeasibleError",
    "InvalidConfigError", "InvalidInputError", "NumericalError", "SimulationTranscript",
    "TruncatedStreamError", "analytic_rate_rsca", "analytic_rate_threshold",
    "convergence_bound", "exp_integral_e1", "load_config", "offline_allocate",
    "online_allocate", "optimal_T", "optimal_tau", "optimal_threshold_qstar",
    "partition_fl_rbs", "rate_improvement", "rsca_allocate", "run_cflit",
    "validate_allocation", "zeta",
]
