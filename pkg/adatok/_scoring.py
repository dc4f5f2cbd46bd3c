import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, Optional, Sequence, Union, cast

import requests

from ._complexity import ComplexityScore, ImageDescription, heuristic_mock_score
from ._errors import ScoreParseError, ScorerTransportError, ScoringUnavailable
from ._prompt import build_prompt, parse_score
from ._types import DelayCallable, DelayValue, LoggerCallable, ScorerBackend, SwallowException

__all__ = ("score_description", "HttpScorerBackend", "Scorer", "TOKEN_ENV",)

TOKEN_ENV = "ADATOK_SCORER_TOKEN"

logger = logging.getLogger(__name__)

# OSError covers ConnectionError and TimeoutError from non-HTTP backends
_RETRYABLE = (ScoreParseError, ScorerTransportError, OSError)


def score_description(desc: ImageDescription, backend: ScorerBackend, retries: int = 0, *,
                      delay: Optional[Union[DelayValue, DelayCallable]] = None,
                      swallow: SwallowException = _RETRYABLE,
                      logger: Optional[LoggerCallable] = None) -> ComplexityScore:
    """Prompt ``backend`` and parse its reply, retrying up to ``retries`` more times."""
    assert retries >= 0
    if isinstance(swallow, list):
        swallow = tuple(swallow)

    prompt = build_prompt(desc)
    attempt = 0
    exception: Optional[BaseException] = None
    while attempt <= retries:
        try:
            score = parse_score(backend(prompt))
        except swallow as e:
            exception = e
        else:
            return ComplexityScore(score.value, response=score.response, source="backend",
                                   attempts=attempt + 1)
        attempt += 1
        if logger is not None and hasattr(logger, "__call__"):
            logger(attempt, exception, backend)
        else:
            _log_attempt(attempt, exception, backend)
        if attempt > retries:
            break
        if delay is not None:
            pause = delay(attempt) if hasattr(delay, "__call__") else delay
            time.sleep(cast(float, pause))
    raise ScoringUnavailable("scorer failed after {} attempt(s): {}".format(
        attempt, exception)) from exception


def _log_attempt(attempt: int, result: Any, backend: Any) -> None:
    logger.debug("scoring attempt %d via %r failed: %s", attempt, backend, result)


class HttpScorerBackend:
    """POSTs ``{"prompt": ...}`` and expects ``{"response": ...}`` back.

    The bearer token comes from ``ADATOK_SCORER_TOKEN`` when not passed explicitly. Each
    thread gets its own session from ``session_factory``.
    """

    def __init__(self, endpoint: str, *, token: Optional[str] = None, timeout: float = 30.0,
                 session_factory: Callable[[], requests.Session] = requests.Session) -> None:
        assert timeout > 0
        self._endpoint = endpoint
        self._token = token if token is not None else os.environ.get(TOKEN_ENV)
        self._timeout = timeout
        self._session_factory = session_factory
        self._local = threading.local()

    @property
    def session(self) -> requests.Session:
        session = getattr(self._local, "session", None)
        if session is None:
            session = self._local.session = self._session_factory()
        return session

    def __call__(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self._token:
            headers["Authorization"] = "Bearer {}".format(self._token)
        try:
            resp = self.session.post(self._endpoint, json={"prompt": prompt}, headers=headers,
                                     timeout=self._timeout)
            resp.raise_for_status()
            body = resp.json()
        except requests.RequestException as e:
            raise ScorerTransportError("request to {} failed: {}".format(
                self._endpoint, e)) from e
        except ValueError as e:
            raise ScorerTransportError("{} returned invalid JSON".format(self._endpoint)) from e
        if not isinstance(body, dict) or not isinstance(body.get("response"), str):
            raise ScorerTransportError("{} reply has no 'response' string".format(
                self._endpoint))
        return cast(str, body["response"])

    def __repr__(self) -> str:
        return "HttpScorerBackend({!r}, timeout={})".format(self._endpoint, self._timeout)


class Scorer:
    """Scores descriptions with a backend, or with the offline heuristic when there is none.

    With ``fallback`` a backend that stays unavailable degrades to the heuristic score and
    a warning; without it :class:`ScoringUnavailable` propagates.
    """

    def __init__(self, backend: Optional[ScorerBackend] = None, *,
                 retries: int = 0,
                 delay: Optional[Union[DelayValue, DelayCallable]] = None,
                 fallback: bool = True,
                 logger: Optional[LoggerCallable] = None) -> None:
        assert retries >= 0
        self._backend = backend
        self._retries = retries
        self._delay = delay
        self._fallback = fallback
        self._logger = logger

    def __call__(self, desc: ImageDescription) -> ComplexityScore:
        if self._backend is None:
            return heuristic_mock_score(desc)
        try:
            return score_description(desc, self._backend, self._retries, delay=self._delay,
                                     logger=self._logger)
        except ScoringUnavailable as e:
            if not self._fallback:
                raise
            logger.warning("falling back to heuristic score for %r: %s", desc.caption, e)
            score = heuristic_mock_score(desc)
            return ComplexityScore(score.value, source="fallback",
                                   attempts=self._retries + 1)

    def score_many(self, descs: Sequence[ImageDescription],
                   workers: int = 1) -> List[ComplexityScore]:
        """Scores in input order regardless of worker scheduling."""
        assert workers >= 1
        if workers == 1 or len(descs) <= 1:
            return [self(desc) for desc in descs]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(self, descs))

    def __repr__(self) -> str:
        return "Scorer(backend={!r}, retries={}, fallback={})".format(
            self._backend, self._retries, self._fallback)
