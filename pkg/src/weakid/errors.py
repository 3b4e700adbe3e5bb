class WeakIdError(Exception):
    pass


class GridError(WeakIdError, ValueError):
    pass


class DatasetFormatError(WeakIdError, ValueError):
    pass


class ConfigError(WeakIdError, ValueError):
    pass


class NumericalError(WeakIdError, ArithmeticError):
    """Raised when a numerical routine cannot produce a usable answer."""


class RankDeficientError(NumericalError):
    def __init__(self, msg, cond=float("inf")):
        super().__init__(f"{msg} (condition estimate {cond:.3e})")
        self.cond = cond
