"""
Remote language-model client
============================
Scores texts against an HTTP endpoint speaking the scoring protocol:

    POST /v1/score     {"model": id, "texts": [...]}            -> {"results": [{"total_logprob", "token_count"}]}
    POST /v1/generate  {"model": id, "prompt", "max_tokens", "greedy"} -> {"text": "..."}

Texts are sent in batches of `max_batch_size`; at most `max_concurrent_requests`
requests are in flight per scorer, whichever thread or event loop sends them.
Results are matched to texts by index. Transport errors, timeouts, HTTP 429
and 5xx are retried with exponential backoff; other 4xx fail at once.
"""

import asyncio
import logging
import threading
from contextlib import asynccontextmanager
from typing import Any, Dict, Iterable, List, Optional, Sequence

import httpx
from pydantic import ValidationError

from app.errors import ScorerTransportError
from app.services.scorer import LanguageModelScorer, ScoreCache
from models.scoring_models import (
    GenerateRequest,
    GenerateResponse,
    RemoteScorerConfig,
    ScoreRequest,
    ScoreResponse,
    SequenceScore,
)

logger = logging.getLogger(__name__)

SCORE_PATH = "/v1/score"
GENERATE_PATH = "/v1/generate"
# how often a request waiting for a free slot re-checks the limiter
SLOT_POLL_SECONDS = 0.005


def _is_retryable(status_code: int) -> bool:
    return status_code == 429 or status_code >= 500


def _error_text(resp: httpx.Response) -> str:
    try:
        body = resp.json()
        if isinstance(body, dict) and "error" in body:
            return str(body["error"])
    except ValueError:
        pass
    return resp.text[:300]


class RemoteScorer(LanguageModelScorer):
    """LanguageModelScorer over HTTP; the endpoint does its own tokenization."""

    def __init__(
        self,
        config: RemoteScorerConfig,
        transport: Optional[httpx.AsyncBaseTransport] = None,
        cache: Optional[ScoreCache] = None,
    ):
        super().__init__(f"remote:{config.model_id}@{config.endpoint}", cache)
        self.config = config
        self._transport = transport
        self._slots = threading.BoundedSemaphore(config.max_concurrent_requests)

    # ── HTTP plumbing ────────────────────────────────────────────────────

    def _url(self, path: str) -> str:
        return self.config.endpoint.rstrip("/") + path

    def _headers(self) -> Dict[str, str]:
        headers = {"Accept": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        return headers

    def _client(self) -> httpx.AsyncClient:
        return httpx.AsyncClient(
            timeout=self.config.timeout,
            transport=self._transport,
            headers=self._headers(),
        )

    @asynccontextmanager
    async def _slot(self):
        # evaluation threads each run their own event loop; the limiter is shared by all of them
        while not self._slots.acquire(blocking=False):
            await asyncio.sleep(SLOT_POLL_SECONDS)
        try:
            yield
        finally:
            self._slots.release()

    async def _post(self, client: httpx.AsyncClient, path: str, payload: Dict[str, Any]) -> Any:
        url = self._url(path)
        attempts = self.config.max_retries + 1
        last_status: Optional[int] = None
        last_cause: Optional[str] = None

        for attempt in range(attempts):
            if attempt:
                delay = self.config.backoff_base * self.config.backoff_factor ** (attempt - 1)
                logger.warning(
                    f"[remote] retry {attempt}/{self.config.max_retries} for {url} in {delay:.2f}s "
                    f"(status={last_status}, cause={last_cause})"
                )
                await asyncio.sleep(delay)
            try:
                resp = await client.post(url, json=payload)
            except httpx.TimeoutException as exc:
                last_status, last_cause = None, f"timeout: {exc.__class__.__name__}"
                continue
            except httpx.TransportError as exc:
                last_status, last_cause = None, f"{exc.__class__.__name__}: {exc}"
                continue

            if _is_retryable(resp.status_code):
                last_status, last_cause = resp.status_code, _error_text(resp)
                continue
            if resp.status_code >= 400:
                message = _error_text(resp)
                logger.error(f"[remote] {url} rejected the request: HTTP {resp.status_code} {message}")
                raise ScorerTransportError(f"request rejected: {message}", url, status_code=resp.status_code)
            try:
                return resp.json()
            except ValueError:
                raise ScorerTransportError("response is not JSON", url, status_code=resp.status_code)

        logger.error(f"[remote] giving up on {url} after {attempts} attempts (status={last_status}, cause={last_cause})")
        raise ScorerTransportError(
            f"gave up after {attempts} attempts", url, status_code=last_status, cause=last_cause
        )

    # ── Scoring ──────────────────────────────────────────────────────────

    async def _score_batch(self, client: httpx.AsyncClient, texts: List[str]) -> List[SequenceScore]:
        request = ScoreRequest(model=self.config.model_id, texts=texts)
        async with self._slot():
            data = await self._post(client, SCORE_PATH, request.model_dump())
        url = self._url(SCORE_PATH)
        try:
            response = ScoreResponse.model_validate(data)
        except ValidationError as exc:
            raise ScorerTransportError("malformed score response", url, cause=str(exc.errors()[:1]))
        if len(response.results) != len(texts):
            raise ScorerTransportError(
                f"expected {len(texts)} results, got {len(response.results)}", url, cause="partial batch"
            )
        try:
            return [SequenceScore(total_logprob=r.total_logprob, token_count=r.token_count) for r in response.results]
        except ValidationError as exc:
            raise ScorerTransportError("inconsistent score in response", url, cause=str(exc.errors()[:1]))

    async def ascore_texts(self, texts: Sequence[str]) -> List[SequenceScore]:
        """Score many texts; cached and empty texts never reach the endpoint."""
        results: Dict[str, SequenceScore] = {"": SequenceScore()}
        pending: List[str] = []
        for text in texts:
            if text in results or text in pending:
                continue
            cached = self.cache.get(self.backend_id, text)
            if cached is not None:
                results[text] = cached
            else:
                pending.append(text)

        if pending:
            size = self.config.max_batch_size
            batches = [pending[i:i + size] for i in range(0, len(pending), size)]
            async with self._client() as client:
                scored = await asyncio.gather(*(self._score_batch(client, b) for b in batches))
            for batch, scores in zip(batches, scored):
                for text, score in zip(batch, scores):
                    self.cache.put(self.backend_id, text, score)
                    results[text] = score
            logger.debug(f"[remote] scored {len(pending)} texts in {len(batches)} batches")

        return [results[text] for text in texts]

    def score_texts(self, texts: Sequence[str]) -> List[SequenceScore]:
        return asyncio.run(self.ascore_texts(texts))

    def prefetch(self, texts: Iterable[str]) -> None:
        """One batched pass; later relevance calls are answered from the cache."""
        self.score_texts(list(texts))

    def _score_text(self, text: str) -> SequenceScore:
        return self.score_texts([text])[0]

    def score_continuation(self, prefix: str, continuation: str) -> SequenceScore:
        if continuation:
            # one round trip for both texts; the shared prefix is usually cached already
            self.score_texts([prefix, prefix + continuation])
        return super().score_continuation(prefix, continuation)

    # ── Generation ───────────────────────────────────────────────────────

    async def agenerate(self, prompt: str, max_tokens: int, greedy: bool = True) -> str:
        if max_tokens == 0:
            return ""
        request = GenerateRequest(model=self.config.model_id, prompt=prompt, max_tokens=max_tokens, greedy=greedy)
        async with self._client() as client, self._slot():
            data = await self._post(client, GENERATE_PATH, request.model_dump())
        try:
            return GenerateResponse.model_validate(data).text
        except ValidationError as exc:
            raise ScorerTransportError("malformed generate response", self._url(GENERATE_PATH), cause=str(exc.errors()[:1]))

    def generate(self, prompt: str, max_tokens: int, greedy: bool = True) -> str:
        return asyncio.run(self.agenerate(prompt, max_tokens, greedy))
