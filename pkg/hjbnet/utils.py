from enum import Enum

import numpy as np

from hjbnet.errors import UnknownRule


class _Lookup(Enum):

    @classmethod
    def get(cls, value=None):
        """
        Returns the member matching `value` (a member or its string value).
        `None` selects the default member.
        """
        if value is None:
            return cls.default()
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError as exc:
            raise UnknownRule(cls.__name__, value) from exc

    @classmethod
    def values(cls):
        return [member.value for member in cls]


class StepRule(_Lookup):

    """
    Diminishing step sizes for the tracking recursions:
        'one_over_s': delta_s = 1/s (delta_1 = 1)
        'one_over_s_plus_one': delta_s = 1/(s+1), strictly inside (0, 1)
    """

    ONE_OVER_S = 'one_over_s'
    ONE_OVER_S_PLUS_ONE = 'one_over_s_plus_one'

    @classmethod
    def default(cls):
        return cls.ONE_OVER_S


class FieldMode(_Lookup):

    """
    How an agent feeds its tracked F and l fields to its local PDE solve:
        'collocation': fields tracked at every (t_n, x_j) collocation pair
        'trajectory': fields tracked along the state estimate only and
                      frozen as functions of t
    """

    COLLOCATION = 'collocation'
    TRAJECTORY = 'trajectory'

    @classmethod
    def default(cls):
        return cls.COLLOCATION


class CenterStrategy(_Lookup):

    HALTON_BOX = 'halton-box'
    TRAJECTORY = 'trajectory'
    GRID = 'grid'

    @classmethod
    def default(cls):
        return cls.TRAJECTORY


def all_finite(*arrays):
    """
    Returns `True` if every entry of every given array is finite.
    """
    return all(np.all(np.isfinite(arr)) for arr in arrays)
