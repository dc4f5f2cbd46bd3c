from typing import Optional

__all__ = ("AdatokError", "ContractViolation", "ConfigurationError", "ScoreParseError",
           "ScoreRangeError", "ScorerTransportError", "ScoringUnavailable",
           "UndefinedCorrelation", "GradientCheckError", "FormatError", "TrainingError",
           "UsageError",)


class AdatokError(Exception):
    pass


class ContractViolation(AdatokError, ValueError):
    pass


class ConfigurationError(AdatokError, ValueError):
    pass


class ScoreParseError(AdatokError, ValueError):
    pass


class ScoreRangeError(ScoreParseError):
    pass


class ScorerTransportError(AdatokError):
    pass


class ScoringUnavailable(AdatokError):
    pass


class UndefinedCorrelation(AdatokError, ArithmeticError):
    pass


class GradientCheckError(AdatokError):
    pass


class FormatError(AdatokError):
    def __init__(self, message: str, *,
                 offset: Optional[int] = None,
                 record_index: Optional[int] = None) -> None:
        details = []
        if record_index is not None:
            details += ["record {}".format(record_index)]
        if offset is not None:
            details += ["byte offset {}".format(offset)]
        if details:
            message = "{} ({})".format(message, ", ".join(details))
        super().__init__(message)
        self.offset = offset
        self.record_index = record_index


class TrainingError(AdatokError):
    pass


class UsageError(AdatokError):
    pass
