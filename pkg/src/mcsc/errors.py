class ConfigError(ValueError):
    """Invalid scenario or node configuration; the message names the field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class UndefinedMetric(ArithmeticError):
    """A ratio metric whose denominator is zero."""
