# lmrec scoring service - FastAPI
"""
n-gram scoring service
======================
Serves an n-gram language model over the scoring protocol
(POST /v1/score, POST /v1/generate, GET /health).

    LMREC_SERVER_CORPUS=corpus.txt uvicorn server:app --port 8000

Environment:
    LMREC_SERVER_CORPUS    text corpus (one sentence per line) or a saved n-gram model (.json)
    LMREC_SERVER_ORDER     n-gram order when fitting from a corpus (default 3)
    LMREC_SERVER_MODEL_ID  model id clients must send (default "ngram")
    CORS_ORIGINS           comma-separated allowed origins (default "*")
"""

import logging
import os
import traceback
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException
from starlette.middleware.cors import CORSMiddleware

from app.errors import LmrecError
from app.routers.scoring_routes import router as scoring_router
from app.services.ngram import fit_ngram, load_ngram
from app.services.scorer import NgramScorer

ROOT_DIR = Path(__file__).parent
load_dotenv(ROOT_DIR / ".env")

logger = logging.getLogger(__name__)

DEFAULT_MODEL_ID = "ngram"


def scorer_from_env() -> Optional[NgramScorer]:
    corpus = os.environ.get("LMREC_SERVER_CORPUS")
    if not corpus:
        logger.warning("[server] LMREC_SERVER_CORPUS not set; scoring routes answer 503")
        return None
    path = Path(corpus)
    if path.suffix == ".json":
        model = load_ngram(path)
    else:
        order = int(os.environ.get("LMREC_SERVER_ORDER", "3"))
        with path.open("r", encoding="utf-8", errors="replace") as fh:
            model = fit_ngram((line for line in fh), order=order)
    logger.info(f"[server] loaded order-{model.order} model from {path} ({model.total_tokens} tokens)")
    return NgramScorer(model)


def create_app(scorer: Optional[NgramScorer] = None, model_id: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="lmrec scoring service")
    app.state.scorer = scorer
    app.state.model_id = model_id or os.environ.get("LMREC_SERVER_MODEL_ID", DEFAULT_MODEL_ID)

    origins = [o.strip() for o in os.environ.get("CORS_ORIGINS", "*").split(",") if o.strip()]
    app.add_middleware(
        CORSMiddleware,
        allow_origins=origins,
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    @app.exception_handler(HTTPException)
    async def http_exception_handler(request: Request, exc: HTTPException):
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc.detail)})

    @app.exception_handler(RequestValidationError)
    async def validation_exception_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={"error": f"invalid request: {exc.errors()[:3]}"})

    @app.exception_handler(LmrecError)
    async def lmrec_exception_handler(request: Request, exc: LmrecError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(Exception)
    async def general_exception_handler(request: Request, exc: Exception):
        """Catch-all: log with a reference id, return it to the caller"""
        error_id = f"err_{datetime.now(timezone.utc).strftime('%Y%m%d_%H%M%S')}_{uuid.uuid4().hex[:6]}"
        logger.error(f"[{error_id}] Unhandled {type(exc).__name__}: {exc}")
        logger.error(f"[{error_id}] Traceback:\n{traceback.format_exc()}")
        return JSONResponse(status_code=500, content={"error": f"internal error ({error_id})"})

    @app.get("/health")
    async def health():
        return {
            "status": "ok",
            "model": app.state.model_id,
            "loaded": app.state.scorer is not None,
        }

    app.include_router(scoring_router)
    return app


app = create_app(scorer_from_env())
