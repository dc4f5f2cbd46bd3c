from typing import Any, Callable, Tuple, Type, Union

__all__ = ("Ratio", "AttemptValue", "DelayValue", "DelayCallable", "AnyCallable",
           "ExceptionType", "LoggerCallable", "SwallowException", "ScorerBackend",)

Ratio = int
AttemptValue = int
DelayValue = Union[float, int]
DelayCallable = Callable[[AttemptValue], DelayValue]
AnyCallable = Callable[..., Any]
ExceptionType = Type[BaseException]
LoggerCallable = Callable[[AttemptValue, Any, AnyCallable], Any]
SwallowException = Union[Tuple[ExceptionType, ...], ExceptionType]
ScorerBackend = Callable[[str], str]
