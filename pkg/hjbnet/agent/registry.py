"""
Agent models are built by name from scenario files. This module provides a
registry `ModelRegistry` of model builders and a decorator `register()` to
add new builders to it.
"""
import inspect
import logging

from hjbnet.errors import UnknownModelName


log = logging.getLogger(__name__)


class ModelRegistry:

    """
    Registry of all functions that build an `AgentModel` from a parameter
    dict. Builders are registered by name; a name can be registered once.
    """

    _registry = dict()

    @classmethod
    def register(cls, builder, model_name):
        if model_name in cls._registry:
            raise ValueError("model name '{}' already registered with "
                             "{}".format(model_name,
                                         cls._registry[model_name]))
        if not callable(builder) or inspect.isclass(builder):
            raise TypeError('{} is not a builder function'.format(builder))
        cls._registry[model_name] = builder
        log.debug('registered model builder: %s', model_name)

    @classmethod
    def get(cls, model_name):
        try:
            return cls._registry[model_name]
        except KeyError as exc:
            raise UnknownModelName(model_name) from exc

    @classmethod
    def all(cls):
        return cls._registry


def register(model_name):
    """
    A decorator to register a function `builder(params) -> AgentModel` under
    the given model name.
    """
    def decorator(builder):
        ModelRegistry.register(builder, model_name)
        return builder
    return decorator


def new_model(model_name, params):
    """
    Builds the agent model registered as `model_name` with its parameters
    (the agent's entry of the scenario file, including `x0`).
    """
    builder = ModelRegistry.get(model_name)
    return builder(params)
