class SimulatorError(Exception):
    """Base class for every error raised by securevfl."""


class InvalidInputError(SimulatorError, ValueError):
    pass


class WrongKeyError(SimulatorError):
    """A ciphertext was presented to a key that did not encrypt it."""


class OperandMismatchError(SimulatorError, ValueError):
    pass


class BudgetExhaustedError(SimulatorError):
    """A multiplication would push a ciphertext past its key's depth budget."""

    def __init__(self, op: str, required: int, budget: int):
        self.op = op
        self.required = required
        self.budget = budget
        super().__init__(
            f"{op}: result depth {required} exceeds depth budget {budget}; "
            "raise the budget or lower the sigmoid/kernel degree"
        )


class FitError(SimulatorError):
    pass


class InvalidLabelError(SimulatorError, ValueError):
    pass


class ProtocolError(SimulatorError):
    """Party data is misaligned or a protocol step was run out of order."""


class ConfigError(SimulatorError, ValueError):
    pass
