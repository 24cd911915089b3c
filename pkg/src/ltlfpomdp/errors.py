"""Exception types shared across the package."""


class LtlfError(Exception):
    pass


class SpecSyntaxError(LtlfError, ValueError):
    """Malformed specification text. ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class SealedAtomError(LtlfError, KeyError):
    def __init__(self, name):
        super().__init__(name)
        self.name = name

    def __str__(self):
        return f"unknown atomic proposition {self.name!r} (atom table is sealed)"


class EmptyTrace(LtlfError, ValueError):
    pass


class StateBlowup(LtlfError, RuntimeError):
    pass


class IncompleteDfa(LtlfError, RuntimeError):
    pass


class ModelError(ValueError):
    pass


class NotStochastic(ModelError):
    def __init__(self, what, row):
        super().__init__(f"{what} row {row} is not a probability distribution")
        self.what = what
        self.row = row


class NegativeConstraintReward(ModelError):
    pass


class NonTermination(RuntimeError):
    pass


class AtomMismatch(ValueError):
    pass


class BlowUp(RuntimeError):
    """An enumeration exceeded its configured cap."""

    def __init__(self, message, size=None, cap=None):
        super().__init__(message)
        self.size = size
        self.cap = cap


class WrongHorizon(ValueError):
    pass


class NonNegativeReward(ValueError):
    def __init__(self, state, action, value):
        super().__init__(
            f"goal transform needs strictly negative reward, got {value} at state {state}, action {action}"
        )
        self.state = state
        self.action = action


class InfeasibleLP(RuntimeError):
    pass


class IterationBudget(RuntimeError):
    pass


class SchemaError(ValueError):
    pass
