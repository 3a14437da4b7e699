from .errors import (
    HjbnetError, ConfigError, NumericalError, InformationStructureViolation,
)
from .graph import Graph, build_graph, mixing_factor, validate_kappa
from .dynamics import AgentModel, TimeGrid, unicycle_model, linear_model
from .cost import CostSpec, build_cost
from .rbf import RbfBasis, ValueApprox, sample_centers
from .hjb_central import GlobalSystem, centralized_run, value_iteration
from .netsim import RoundBus, Payload
from .dva import run, extract_controller
from .config import ScenarioConfig, load_config
from .engine import Engine
