"""HTTP server implementing the token-probability wire protocol.

Endpoints (JSON over HTTP, UTF-8):
  POST /v1/token_probs        one masked image -> per-target probabilities
  POST /v1/token_probs_batch  several images, shared text context
  POST /v1/generate           greedy decoding
  POST /v1/tokenize           ids plus character offsets
  GET  /v1/health

Errors use {"error": string} bodies: 400 for malformed input, 500 for model
failures. The model loads once per process and is read-only at inference;
requests are serialized per process, and the batch endpoint slices work into
chunks of at most --max-batch images per forward pass.
"""

from __future__ import annotations

import base64
import io
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image as PILImage
from pydantic import BaseModel

from .model import TinyVlm, tokenize_text


class BadRequest(Exception):
    pass


class TargetSpec(BaseModel):
    position: int
    vocab_id: int


class TokenProbsRequest(BaseModel):
    image_b64: str
    prompt: str
    generated_ids: list[int]
    targets: list[TargetSpec]


class TokenProbsBatchRequest(BaseModel):
    images_b64: list[str]
    prompt: str
    generated_ids: list[int]
    targets: list[TargetSpec]


class GenerateRequest(BaseModel):
    image_b64: str
    prompt: str
    max_tokens: int


class TokenizeRequest(BaseModel):
    text: str


def decode_image(data_b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(data_b64, validate=True)
        with PILImage.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("RGB"))
    except Exception as exc:  # noqa: BLE001 - mapped to a 400
        raise BadRequest(f"cannot decode image: {exc}") from exc


def create_app(model: TinyVlm, max_batch: int = 8) -> FastAPI:
    app = FastAPI(title="tokensight-shim", docs_url=None, redoc_url=None)
    # The tiny model is cheap; a lock keeps forwards serialized and the
    # outputs independent of client concurrency.
    inference_lock = threading.Lock()

    @app.exception_handler(BadRequest)
    async def bad_request_handler(request: Request, exc: BadRequest):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(Exception)
    async def failure_handler(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"error": str(exc)})

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "model_id": model.model_id}

    @app.post("/v1/token_probs")
    def token_probs(request: TokenProbsRequest):
        pixels = decode_image(request.image_b64)
        targets = [(t.position, t.vocab_id) for t in request.targets]
        try:
            with inference_lock:
                rows = model.token_probs(
                    [pixels], request.prompt, request.generated_ids, targets
                )
        except ValueError as exc:
            raise BadRequest(str(exc)) from exc
        return {"probs": rows[0], "model_id": model.model_id}

    @app.post("/v1/token_probs_batch")
    def token_probs_batch(request: TokenProbsBatchRequest):
        if not request.images_b64:
            raise BadRequest("images_b64 must be non-empty")
        images = [decode_image(b64) for b64 in request.images_b64]
        targets = [(t.position, t.vocab_id) for t in request.targets]
        rows: list[list[float]] = []
        try:
            with inference_lock:
                for start in range(0, len(images), max_batch):
                    chunk = images[start : start + max_batch]
                    rows.extend(
                        model.token_probs(
                            chunk, request.prompt, request.generated_ids, targets
                        )
                    )
        except ValueError as exc:
            raise BadRequest(str(exc)) from exc
        return {"probs": rows, "model_id": model.model_id}

    @app.post("/v1/generate")
    def generate(request: GenerateRequest):
        pixels = decode_image(request.image_b64)
        try:
            with inference_lock:
                text, ids = model.generate(pixels, request.prompt, request.max_tokens)
        except ValueError as exc:
            raise BadRequest(str(exc)) from exc
        return {"text": text, "token_ids": ids}

    @app.post("/v1/tokenize")
    def tokenize(request: TokenizeRequest):
        ids, offsets = tokenize_text(request.text)
        return {"token_ids": ids, "offsets": [list(o) for o in offsets]}

    return app
