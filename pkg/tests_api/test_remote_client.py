"""
Remote scorer against in-process transports: httpx.MockTransport for the
retry policy, ASGITransport over the n-gram service for the wire format.
"""

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
import asyncio
import json
import sys
import threading

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import httpx
import pytest

from app.errors import ScorerTransportError
from app.services.evaluation import catalog_titles, evaluate, lm_relevance
from app.services.ngram import fit_ngram
from app.services.prompt import ENUM
from app.services.remote_client import RemoteScorer
from app.services.scorer import NgramScorer, generate
from models.scoring_models import RemoteScorerConfig
from server import create_app

CORPUS = ["heat , ronin , collateral", "the matrix , inception", "heat , thief"]


def fast_config(**overrides):
    values = {"endpoint": "http://scoring.test", "model_id": "test-lm", "backoff_base": 0.0, "max_retries": 2}
    values.update(overrides)
    return RemoteScorerConfig(**values)


def echo_results(request):
    """One fake score per text: -1 per character, one token per word."""
    texts = json.loads(request.content)["texts"]
    return {"results": [{"total_logprob": -float(len(t)), "token_count": len(t.split())} for t in texts]}


class TestRetries:
    """Retry, backoff and error classification"""

    def test_success_after_server_errors(self):
        calls = []

        def handler(request):
            calls.append(request)
            if len(calls) < 3:
                return httpx.Response(503, json={"error": "busy"})
            return httpx.Response(200, json=echo_results(request))

        scorer = RemoteScorer(fast_config(), transport=httpx.MockTransport(handler))
        score = scorer.score_full("heat ronin")
        assert score.total_logprob == -10.0
        assert score.token_count == 2
        assert len(calls) == 3

    def test_rate_limit_is_retried(self):
        calls = []

        def handler(request):
            calls.append(request)
            if len(calls) == 1:
                return httpx.Response(429, json={"error": "slow down"})
            return httpx.Response(200, json=echo_results(request))

        scorer = RemoteScorer(fast_config(), transport=httpx.MockTransport(handler))
        assert scorer.score_full("heat").token_count == 1
        assert len(calls) == 2

    def test_gives_up_after_max_retries(self):
        calls = []

        def handler(request):
            calls.append(request)
            return httpx.Response(500, json={"error": "boom"})

        scorer = RemoteScorer(fast_config(max_retries=2), transport=httpx.MockTransport(handler))
        with pytest.raises(ScorerTransportError) as excinfo:
            scorer.score_full("heat")
        assert len(calls) == 3
        assert excinfo.value.status_code == 500
        assert excinfo.value.endpoint == "http://scoring.test/v1/score"

    def test_client_errors_are_not_retried(self):
        calls = []

        def handler(request):
            calls.append(request)
            return httpx.Response(404, json={"error": "unknown model 'test-lm'"})

        scorer = RemoteScorer(fast_config(), transport=httpx.MockTransport(handler))
        with pytest.raises(ScorerTransportError) as excinfo:
            scorer.score_full("heat")
        assert len(calls) == 1
        assert excinfo.value.status_code == 404
        assert "unknown model" in str(excinfo.value)

    def test_timeouts_are_reported(self):
        def handler(request):
            raise httpx.ConnectTimeout("timed out", request=request)

        scorer = RemoteScorer(fast_config(max_retries=1), transport=httpx.MockTransport(handler))
        with pytest.raises(ScorerTransportError) as excinfo:
            scorer.score_full("heat")
        assert excinfo.value.status_code is None
        assert "timeout" in excinfo.value.cause

    def test_partial_batch_is_an_error(self):
        def handler(request):
            return httpx.Response(200, json={"results": [{"total_logprob": -1.0, "token_count": 1}]})

        scorer = RemoteScorer(fast_config(), transport=httpx.MockTransport(handler))
        with pytest.raises(ScorerTransportError) as excinfo:
            scorer.score_texts(["heat", "ronin"])
        assert excinfo.value.cause == "partial batch"

    def test_non_json_body(self):
        scorer = RemoteScorer(fast_config(), transport=httpx.MockTransport(lambda r: httpx.Response(200, text="ok")))
        with pytest.raises(ScorerTransportError):
            scorer.score_full("heat")


class TestBatching:
    """Batches, caching and headers"""

    def test_batches_preserve_order(self):
        sizes = []

        def handler(request):
            sizes.append(len(json.loads(request.content)["texts"]))
            return httpx.Response(200, json=echo_results(request))

        scorer = RemoteScorer(fast_config(max_batch_size=2), transport=httpx.MockTransport(handler))
        texts = ["a", "bb", "ccc", "dddd", "eeeee"]
        scores = scorer.score_texts(texts)
        assert [s.total_logprob for s in scores] == [-1.0, -2.0, -3.0, -4.0, -5.0]
        assert sorted(sizes) == [1, 2, 2]

    def test_cached_and_empty_texts_skip_the_network(self):
        calls = []

        def handler(request):
            calls.append(json.loads(request.content)["texts"])
            return httpx.Response(200, json=echo_results(request))

        scorer = RemoteScorer(fast_config(), transport=httpx.MockTransport(handler))
        scorer.score_texts(["heat", "heat", ""])
        scorer.score_texts(["heat"])
        assert calls == [["heat"]]

    def test_api_key_header(self):
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            seen["model"] = json.loads(request.content)["model"]
            return httpx.Response(200, json=echo_results(request))

        scorer = RemoteScorer(fast_config(api_key="s3cret"), transport=httpx.MockTransport(handler))
        scorer.score_full("heat")
        assert seen == {"auth": "Bearer s3cret", "model": "test-lm"}
        assert "s3cret" not in repr(scorer.config)


class TestAgainstService:
    """Remote scorer talking to the n-gram service in-process"""

    @pytest.fixture
    def served(self):
        local = NgramScorer(fit_ngram(CORPUS))
        app = create_app(local, model_id="test-lm")
        remote = RemoteScorer(fast_config(), transport=httpx.ASGITransport(app=app))
        return local, remote

    def test_scores_match_the_local_model(self, served):
        local, remote = served
        for text in ["heat , ronin", "the matrix , heat", "unknown words here"]:
            assert remote.score_full(text) == local.score_full(text)

    def test_continuation_matches(self, served):
        local, remote = served
        assert remote.score_continuation("heat", " , ronin").total_logprob == pytest.approx(
            local.score_continuation("heat", " , ronin").total_logprob
        )

    def test_generate(self, served):
        _, remote = served
        assert generate(remote, "the matrix", 2) == ", inception"
        assert generate(remote, "the matrix", 0) == ""

    def test_wrong_model_id(self, served):
        local, _ = served
        app = create_app(local, model_id="other")
        remote = RemoteScorer(fast_config(), transport=httpx.ASGITransport(app=app))
        with pytest.raises(ScorerTransportError) as excinfo:
            remote.score_full("heat")
        assert excinfo.value.status_code == 404


class TestConcurrency:
    """The request limit holds per scorer, across threads and event loops"""

    @pytest.fixture
    def tracked(self):
        state = {"in_flight": 0, "peak": 0, "requests": 0, "batch_sizes": []}
        lock = threading.Lock()

        async def handler(request):
            with lock:
                state["in_flight"] += 1
                state["requests"] += 1
                state["peak"] = max(state["peak"], state["in_flight"])
                state["batch_sizes"].append(len(json.loads(request.content)["texts"]))
            await asyncio.sleep(0.05)
            with lock:
                state["in_flight"] -= 1
            return httpx.Response(200, json=echo_results(request))

        return state, httpx.MockTransport(handler)

    def test_batches_of_one_call_respect_the_limit(self, tracked):
        state, transport = tracked
        scorer = RemoteScorer(fast_config(max_batch_size=2, max_concurrent_requests=1), transport=transport)
        texts = [f"text {i}" for i in range(10)]
        scores = scorer.score_texts(texts)
        assert [s.total_logprob for s in scores] == [-float(len(t)) for t in texts]
        assert state["requests"] == 5
        assert state["peak"] == 1

    def test_threads_share_the_limit(self, tracked):
        state, transport = tracked
        scorer = RemoteScorer(fast_config(max_batch_size=1, max_concurrent_requests=2), transport=transport)
        chunks = [[f"thread {t} text {i}" for i in range(3)] for t in range(6)]
        with ThreadPoolExecutor(max_workers=6) as pool:
            list(pool.map(scorer.score_texts, chunks))
        assert state["requests"] == 18
        assert state["peak"] <= 2

    def test_evaluation_scores_in_one_batched_pass(self, tracked, planted_dataset):
        state, transport = tracked
        scorer = RemoteScorer(fast_config(max_batch_size=16, max_concurrent_requests=1), transport=transport)
        relevance = lm_relevance(scorer, ENUM, catalog_titles(planted_dataset), seed=0)
        report = evaluate(relevance, planted_dataset.instances, max_workers=8, bootstrap_samples=0)
        assert report.n_users == len(planted_dataset.instances)
        assert state["peak"] == 1
        assert max(state["batch_sizes"]) <= 16
        n_texts = sum(state["batch_sizes"])
        assert state["requests"] == -(-n_texts // 16)

        evaluate(relevance, planted_dataset.instances, max_workers=8, bootstrap_samples=0)
        assert sum(state["batch_sizes"]) == n_texts
