class GenRetrainError(Exception):
    """Base class for all package errors."""


class ShapeError(GenRetrainError, ValueError):
    pass


class DomainError(GenRetrainError, ValueError):
    pass


class ConfigError(GenRetrainError, ValueError):
    pass


class TrainingError(GenRetrainError, RuntimeError):
    pass


class CalibrationError(GenRetrainError, RuntimeError):
    pass


class StateError(GenRetrainError, RuntimeError):
    pass


class IngestionError(GenRetrainError, ValueError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class AggregationError(GenRetrainError, ValueError):
    pass
