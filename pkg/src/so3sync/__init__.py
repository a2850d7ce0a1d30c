"""Distributed hybrid attitude synchronization of rigid bodies on trees."""

from .config import ScenarioConfig, bundled, load_config, parse_config
from .controllers import Gains
from .engine import ClosedLoop, Convergence, RunRecord, SystemState, certify, make_state, run
from .potential import PotentialParams, synthesize
from .topology import build_tree

__version__ = "0.1.0"

__all__ = ["ScenarioConfig", "bundled", "load_config", "parse_config", "Gains", "ClosedLoop",
           "Convergence", "RunRecord", "SystemState", "certify", "make_state", "run", "PotentialParams",
           "synthesize", "build_tree"]
