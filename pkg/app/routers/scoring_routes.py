"""
Scoring protocol routes
Serves an in-process n-gram model over the same wire format the remote
client speaks, so the client can be exercised against a local service.
"""

import logging

from fastapi import APIRouter, HTTPException, Request

from app.services.scorer import NgramScorer
from app.services.tokenizer import detokenize, is_punctuation, tokenize
from models.scoring_models import (
    GenerateRequest,
    GenerateResponse,
    ScoreRequest,
    ScoreResponse,
    ScoreResult,
)

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/v1")


def get_scorer(request: Request, model: str) -> NgramScorer:
    scorer = getattr(request.app.state, "scorer", None)
    if scorer is None:
        raise HTTPException(status_code=503, detail="no model loaded (set LMREC_SERVER_CORPUS)")
    if model != request.app.state.model_id:
        raise HTTPException(status_code=404, detail=f"unknown model {model!r}")
    return scorer


# ==========================================
# ROUTES
# ==========================================

@router.post("/score", response_model=ScoreResponse)
async def score(body: ScoreRequest, request: Request):
    scorer = get_scorer(request, body.model)
    results = []
    for text in body.texts:
        s = scorer.score_full(text)
        results.append(ScoreResult(total_logprob=s.total_logprob, token_count=s.token_count))
    logger.debug(f"[server] scored {len(body.texts)} texts")
    return ScoreResponse(results=results)


@router.post("/generate", response_model=GenerateResponse)
async def generate(body: GenerateRequest, request: Request):
    scorer = get_scorer(request, body.model)
    if not body.greedy:
        raise HTTPException(status_code=400, detail="only greedy decoding is supported")
    tokens = scorer.model.greedy_generate(tokenize(body.prompt), body.max_tokens)
    text = detokenize(tokens)
    if tokens and not is_punctuation(tokens[0]):
        text = " " + text
    return GenerateResponse(text=text)
