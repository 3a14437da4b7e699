from .registry import ModelRegistry, register, new_model
from .template import AgentTemplate
