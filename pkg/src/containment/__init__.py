"""Containment control of noisy multi-agent networks: graph algebra,
stochastic simulation and empirical convergence verdicts."""

__version__ = "0.1.0"

from .errors import ConfigError, ContainmentError, NetworkError  # noqa: E402
from .graph_model import DirectedNetwork, load_network, parse_network  # noqa: E402
from .gains import GainSpec  # noqa: E402
from .config import ExperimentConfig, load_config, make_config  # noqa: E402

__all__ = [
    "__version__", "ConfigError", "ContainmentError", "NetworkError", "DirectedNetwork",
    "load_network", "parse_network", "GainSpec", "ExperimentConfig", "load_config", "make_config",
]
