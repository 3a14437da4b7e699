"""
Exceptions raised by hjbnet.

The three roots `ConfigError`, `NumericalError` and
`InformationStructureViolation` are the ones the command line maps to exit
codes. Everything else is raised by library calls and wrapped into a
`ValidationError` when it happens while loading a scenario.
"""


class HjbnetError(Exception):
    pass


class ConfigError(HjbnetError):
    pass


class ParseError(ConfigError):

    def __init__(self, reason, line=None):
        super().__init__()
        self.reason = reason
        self.line = line

    def __str__(self):
        if self.line is None:
            return 'cannot parse scenario: {}'.format(self.reason)
        return 'cannot parse scenario (line {}): {}'.format(
            self.line, self.reason
        )


class ValidationError(ConfigError):

    def __init__(self, field, reason):
        super().__init__()
        self.field = field
        self.reason = reason

    def __str__(self):
        return "invalid value for '{}': {}".format(self.field, self.reason)


class NumericalError(HjbnetError):
    pass


class SingularSystem(NumericalError):

    def __init__(self, cond, t=None):
        super().__init__()
        self.cond = cond
        self.t = t

    def __str__(self):
        where = '' if self.t is None else ' at t={:.6g}'.format(self.t)
        return 'ill-conditioned collocation system{} (cond ~ {:.3e})'.format(
            where, self.cond
        )


class NonFiniteState(NumericalError):

    def __init__(self, t):
        super().__init__()
        self.t = t

    def __str__(self):
        return 'state is not finite at t={:.6g}'.format(self.t)


class NonFiniteField(NumericalError):

    def __init__(self, name, agent=None, round_index=None):
        super().__init__()
        self.name = name
        self.agent = agent
        self.round_index = round_index

    def __str__(self):
        if self.agent is None:
            return "field '{}' is not finite".format(self.name)
        return "field '{}' of agent {} is not finite at round {}".format(
            self.name, self.agent, self.round_index
        )


class InformationStructureViolation(HjbnetError):

    def __init__(self, reader, owner, round_index):
        super().__init__()
        self.reader = reader
        self.owner = owner
        self.round_index = round_index

    def __str__(self):
        return ('agent {} cannot read the payload of agent {} '
                '(round {})'.format(self.reader, self.owner,
                                    self.round_index))


class ModelError(HjbnetError):
    pass


class IndexOutOfRange(ModelError, IndexError):

    def __init__(self, name, value, upper):
        super().__init__()
        self.name = name
        self.value = value
        self.upper = upper

    def __str__(self):
        return '{} {} is out of range (expected at most {})'.format(
            self.name, self.value, self.upper
        )


class DimensionMismatch(ModelError, ValueError):

    def __init__(self, name, expected, found):
        super().__init__()
        self.name = name
        self.expected = expected
        self.found = found

    def __str__(self):
        return '{}: expected shape {}, found {}'.format(
            self.name, self.expected, self.found
        )


class UnknownModelName(ModelError, KeyError):

    def __init__(self, name):
        super().__init__()
        self.name = name

    def __str__(self):
        return "no model registered as '{}'".format(self.name)


class UnknownRule(ModelError, ValueError):

    def __init__(self, kind, value):
        super().__init__()
        self.kind = kind
        self.value = value

    def __str__(self):
        return "unknown {} '{}'".format(self.kind, self.value)


class EmptyBounds(ModelError, ValueError):

    def __init__(self, reason):
        super().__init__()
        self.reason = reason

    def __str__(self):
        return 'invalid sampling box: {}'.format(self.reason)


class DegeneratePoints(ModelError, ValueError):

    def __init__(self, distance):
        super().__init__()
        self.distance = distance

    def __str__(self):
        return 'points are not pairwise distinct (min distance {:.3e})'.format(
            self.distance
        )
