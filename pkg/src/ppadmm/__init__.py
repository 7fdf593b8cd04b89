"""Private consensus ADMM for distributed regularized logistic regression.

Core pieces: communication graphs (:mod:`.graph`), the local objective
(:mod:`.model`), the iteration engine (:mod:`.engine`), noise and the
privacy accountant (:mod:`.privacy`), rate certificates and the
reconstruction attack (:mod:`.analysis`), data preparation (:mod:`.data`)
and the config-driven harness (:mod:`.experiment`).
"""

from .engine import IterateTrace, PenaltySchedule, conventional_admm_run, initial_primal, run
from .errors import PPADMMError
from .experiment import ExperimentConfig, load_config, run_experiment
from .graph import Network, build_network, cycle_graph, path_graph, ring_with_chord
from .model import ErmConfig, LabeledDataset, centralized_solve
from .privacy import NoiseSchedule, PrivacyLedger, privacy_bound

__version__ = "0.1.0"

__all__ = [
    "ErmConfig",
    "ExperimentConfig",
    "IterateTrace",
    "LabeledDataset",
    "Network",
    "NoiseSchedule",
    "PPADMMError",
    "PenaltySchedule",
    "PrivacyLedger",
    "build_network",
    "centralized_solve",
    "conventional_admm_run",
    "cycle_graph",
    "initial_primal",
    "load_config",
    "path_graph",
    "privacy_bound",
    "ring_with_chord",
    "run",
    "run_experiment",
]
