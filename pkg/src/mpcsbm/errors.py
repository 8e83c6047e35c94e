"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Invalid model or algorithm parameters."""


class ModelViolation(RuntimeError):
    """A simulated machine broke an MPC rule (space floor, send/receive/memory cap)."""

    def __init__(self, message, machine=None, round_no=None):
        super().__init__(message)
        self.machine = machine
        self.round_no = round_no


class CapacityError(RuntimeError):
    """Not enough total machine space for a placement."""

    def __init__(self, message, shortfall=0):
        super().__init__(message)
        self.shortfall = shortfall


class ContractError(ValueError):
    """Caller broke an operation precondition (e.g. misaligned slabs)."""


class RecoveryFailure(RuntimeError):
    """An algorithm could not produce k clusters. `stage` names the step that failed."""

    def __init__(self, stage, message, **diagnostics):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.diagnostics = diagnostics
