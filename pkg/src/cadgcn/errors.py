"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes do not chain."""


class ContractError(ValueError):
    """A precondition of an operation was violated."""


class FormatError(ValueError):
    """An input file or byte stream is malformed."""


class TrainingDiverged(RuntimeError):
    """The training loss became non-finite."""

    def __init__(self, iteration, record=None):
        super().__init__(f"loss is not finite at iteration {iteration}")
        self.iteration = iteration
        self.record = record
