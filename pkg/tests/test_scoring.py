import threading
import unittest
from unittest.mock import MagicMock, call, patch, sentinel

import requests

from adatok import HttpScorerBackend, ImageDescription, Scorer, score_description
from adatok._prompt import build_prompt, format_score
from adatok._scoring import TOKEN_ENV
from adatok.types import ScoreParseError, ScorerTransportError, ScoringUnavailable

DESC = ImageDescription("a dog lying on the grass")


def reply(value):
    return "{}\nThe scene is simple.".format(format_score(value))


class TestScoreDescription(unittest.TestCase):
    def test_negative_retries(self):
        with self.assertRaises(AssertionError):
            score_description(DESC, MagicMock(), retries=-1)

    def test_sends_prompt(self):
        backend = MagicMock(return_value=reply(3))
        score_description(DESC, backend)
        backend.assert_called_once_with(build_prompt(DESC))

    def test_success(self):
        backend = MagicMock(return_value=reply(3))
        score = score_description(DESC, backend)
        self.assertEqual(score.value, 3)
        self.assertEqual(score.source, "backend")
        self.assertEqual(score.attempts, 1)
        self.assertEqual(score.response, reply(3))

    # Retries

    def test_no_retries_with_error(self):
        backend = MagicMock(return_value="no score here")
        with self.assertRaises(ScoringUnavailable) as ctx:
            score_description(DESC, backend)
        self.assertIsInstance(ctx.exception.__cause__, ScoreParseError)
        self.assertEqual(backend.call_count, 1)

    def test_retry_after_parse_error(self):
        backend = MagicMock(side_effect=("garbage", reply(5)))
        score = score_description(DESC, backend, retries=2)
        self.assertEqual(score.value, 5)
        self.assertEqual(score.attempts, 2)
        self.assertEqual(backend.call_count, 2)

    def test_retry_after_out_of_range(self):
        backend = MagicMock(side_effect=("Score: 12 out of 9", reply(9)))
        score = score_description(DESC, backend, retries=1)
        self.assertEqual(score.value, 9)

    def test_retry_after_transport_error(self):
        backend = MagicMock(side_effect=(ScorerTransportError("down"), reply(2)))
        self.assertEqual(score_description(DESC, backend, retries=1).value, 2)

    def test_retries_exhausted(self):
        backend = MagicMock(side_effect=ScorerTransportError("down"))
        with self.assertRaises(ScoringUnavailable):
            score_description(DESC, backend, retries=2)
        self.assertEqual(backend.call_count, 3)

    def test_unexpected_error_not_swallowed(self):
        backend = MagicMock(side_effect=KeyError("boom"))
        with self.assertRaises(KeyError):
            score_description(DESC, backend, retries=3)
        self.assertEqual(backend.call_count, 1)

    def test_retry_after_os_error(self):
        backend = MagicMock(side_effect=(ConnectionError("refused"), TimeoutError("slow"),
                                         reply(5)))
        score = score_description(DESC, backend, retries=2)
        self.assertEqual((score.value, score.attempts), (5, 3))

    def test_os_error_exhausted(self):
        error = ConnectionError("refused")
        backend = MagicMock(side_effect=error)
        with self.assertRaises(ScoringUnavailable) as ctx:
            score_description(DESC, backend, retries=1)
        self.assertIs(ctx.exception.__cause__, error)

    def test_custom_swallow(self):
        backend = MagicMock(side_effect=(KeyError("boom"), reply(4)))
        score = score_description(DESC, backend, retries=1, swallow=KeyError)
        self.assertEqual(score.value, 4)

    # Delay

    def test_no_delay_without_errors(self):
        backend = MagicMock(return_value=reply(1))
        with patch("time.sleep", return_value=None) as patched:
            score_description(DESC, backend, retries=3, delay=1.0)
            patched.assert_not_called()

    def test_delay_between_attempts_only(self):
        backend = MagicMock(side_effect=ScorerTransportError("down"))
        with patch("time.sleep", return_value=None) as patched:
            with self.assertRaises(ScoringUnavailable):
                score_description(DESC, backend, retries=2, delay=0.5)
            self.assertEqual(patched.mock_calls, [call(0.5), call(0.5)])

    def test_delay_callable(self):
        backend = MagicMock(side_effect=("x", "y", reply(6)))
        delay = MagicMock(side_effect=lambda attempt: attempt * 2.0)
        with patch("time.sleep", return_value=None) as patched:
            score_description(DESC, backend, retries=2, delay=delay)
            self.assertEqual(patched.mock_calls, [call(2.0), call(4.0)])
        self.assertEqual(delay.mock_calls, [call(1), call(2)])

    # Logger

    def test_logger_called_per_failure(self):
        error = ScorerTransportError("down")
        backend = MagicMock(side_effect=(error, reply(7)))
        logger = MagicMock()
        score_description(DESC, backend, retries=1, logger=logger)
        logger.assert_called_once_with(1, error, backend)

    def test_logger_not_called_on_success(self):
        logger = MagicMock()
        score_description(DESC, MagicMock(return_value=reply(7)), logger=logger)
        logger.assert_not_called()


class TestHttpScorerBackend(unittest.TestCase):
    def make(self, **kwargs):
        session = MagicMock()
        backend = HttpScorerBackend("http://scorer/score", token="secret",
                                    session_factory=lambda: session, **kwargs)
        return backend, session

    def test_posts_prompt_with_token(self):
        backend, session = self.make(timeout=5.0)
        session.post.return_value.json.return_value = {"response": reply(3)}

        self.assertEqual(backend(sentinel.prompt), reply(3))
        session.post.assert_called_once_with(
            "http://scorer/score", json={"prompt": sentinel.prompt},
            headers={"Content-Type": "application/json", "Authorization": "Bearer secret"},
            timeout=5.0)

    def test_token_from_environment(self):
        session = MagicMock()
        session.post.return_value.json.return_value = {"response": "ok"}
        with patch.dict("os.environ", {TOKEN_ENV: "from-env"}):
            backend = HttpScorerBackend("http://scorer", session_factory=lambda: session)
        backend("prompt")
        headers = session.post.call_args[1]["headers"]
        self.assertEqual(headers["Authorization"], "Bearer from-env")

    def test_request_error(self):
        backend, session = self.make()
        session.post.side_effect = requests.ConnectionError("refused")
        with self.assertRaises(ScorerTransportError):
            backend("prompt")

    def test_http_status_error(self):
        backend, session = self.make()
        session.post.return_value.raise_for_status.side_effect = requests.HTTPError("503")
        with self.assertRaises(ScorerTransportError):
            backend("prompt")

    def test_invalid_json(self):
        backend, session = self.make()
        session.post.return_value.json.side_effect = ValueError("not json")
        with self.assertRaises(ScorerTransportError):
            backend("prompt")

    def test_missing_response_key(self):
        backend, session = self.make()
        session.post.return_value.json.return_value = {"text": "Score: 3 out of 9"}
        with self.assertRaises(ScorerTransportError):
            backend("prompt")

    def test_session_per_thread(self):
        factory = MagicMock(side_effect=lambda: MagicMock())
        backend = HttpScorerBackend("http://scorer", session_factory=factory)
        sessions = []

        def grab():
            sessions.append(backend.session)
            sessions.append(backend.session)

        workers = [threading.Thread(target=grab) for _ in range(3)]
        for worker in workers:
            worker.start()
        for worker in workers:
            worker.join()
        self.assertEqual(factory.call_count, 3)
        self.assertEqual(len({id(s) for s in sessions}), 3)

    def test_non_positive_timeout(self):
        with self.assertRaises(AssertionError):
            HttpScorerBackend("http://scorer", timeout=0)


class TestScorer(unittest.TestCase):
    def test_heuristic_without_backend(self):
        score = Scorer()(DESC)
        self.assertEqual(score.source, "heuristic")
        self.assertEqual(score.attempts, 0)

    def test_backend_score(self):
        scorer = Scorer(MagicMock(return_value=reply(8)))
        score = scorer(DESC)
        self.assertEqual((score.value, score.source), (8, "backend"))

    def test_fallback(self):
        backend = MagicMock(side_effect=ScorerTransportError("down"))
        with patch("time.sleep", return_value=None):
            score = Scorer(backend, retries=2, delay=1.0)(DESC)
        self.assertEqual(score, Scorer()(DESC))
        self.assertEqual(score.source, "fallback")
        self.assertEqual(score.attempts, 3)
        self.assertEqual(backend.call_count, 3)

    def test_fallback_after_os_error(self):
        backend = MagicMock(side_effect=TimeoutError("slow"))
        with self.assertLogs("adatok._scoring", level="WARNING"):
            score = Scorer(backend, retries=1)(DESC)
        self.assertEqual(score.source, "fallback")
        self.assertEqual(backend.call_count, 2)

    def test_no_fallback(self):
        backend = MagicMock(side_effect=ScorerTransportError("down"))
        with self.assertRaises(ScoringUnavailable):
            Scorer(backend, fallback=False)(DESC)

    def test_score_many_keeps_order(self):
        def backend(prompt):
            return reply(9 if "zebra" in prompt else 1)

        descs = [ImageDescription("a zebra crossing the road"), DESC] * 4
        scores = Scorer(backend).score_many(descs, workers=4)
        self.assertEqual([s.value for s in scores], [9, 1] * 4)

    def test_score_many_empty(self):
        self.assertEqual(Scorer().score_many([], workers=3), [])
