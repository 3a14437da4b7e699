from .registry import new_model


class AgentTemplate:

    """
    The complete description of an agent in a scenario: the registered name
    of its dynamics model and the model parameters (at least `x0`).
    """

    __slots__ = ('uid', 'model', 'params')

    def __init__(self, uid, model, params=None):
        self.uid = uid
        self.model = model
        self.params = params or {}

    def new_model(self):
        """
        Build the `AgentModel` described by this template.
        """
        return new_model(self.model, self.params)

    @classmethod
    def from_dict(cls, uid, agent_dict):
        """
        Create a new agent description from the given dictionary.
        The dictionary takes the form of:
            {
                "model": <registered-model-name>,
                "x0": [...],
                <model-specific keys, e.g. "A" and "B" for "linear">
            }
        """
        if not isinstance(agent_dict, dict):
            raise TypeError('agent entry {} is not an object'.format(uid))
        params = dict(agent_dict)
        model = params.pop('model')
        return cls(uid, model, params=params)

    def as_dict(self):
        agent_dict = {'model': self.model}
        agent_dict.update(self.params)
        return agent_dict

    def __str__(self):
        return '<AgentTemplate uid={}, model={}>'.format(self.uid, self.model)
