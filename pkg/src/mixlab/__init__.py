"""Spectral transport, mixing norms and commutator diagnostics on the periodic torus."""

from .commutator import *  # noqa: F401,F403
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import EXPERIMENTS, make_config, run_experiment
from .flows import *  # noqa: F401,F403
from .kernels import *  # noqa: F401,F403
from .norms import *  # noqa: F401,F403
from .report import ExperimentReport, FitReport, write_report
from .spectral import *  # noqa: F401,F403
from .transport import *  # noqa: F401,F403

__version__ = "0.1.0"
