"""Local HTTP service exposing attribution to the explorer UI.

Sessions pair an image with a prompt and its generated tokens; attribution
jobs run on a small worker pool and are polled by bundle id; what-if queries
(region removals) bypass the job queue since they cost a single oracle query
plus one generation.
"""

from __future__ import annotations

import hashlib
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .config import RunConfig
from .imgio import ImageLoadError, encode_gray_png, encode_png, image_from_b64
from .oracle import (
    OracleError,
    OracleGateway,
    Scene,
    TokenTargets,
    TransportError,
)
from .partition import KeepSet
from .runner import make_gateway, run_attribution
from .slico import slico_partition

PLACEHOLDER_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>tokensight</title></head>
<body style="font-family: system-ui; margin: 3rem">
<h2>tokensight API</h2>
<p>The attribution API is running. Build the explorer UI and pass its
dist directory via <code>--static-dir</code> to serve the full interface.</p>
<p>Health: <a href="/api/health">/api/health</a></p>
</body></html>
"""


class SessionRequest(BaseModel):
    image_b64: str
    prompt: str
    generated_ids: list[int] | None = None
    text: str | None = None
    max_tokens: int = 64


class AttributeRequest(BaseModel):
    session_id: str
    positions: list[int]


class WhatIfRequest(BaseModel):
    session_id: str
    removed_region_ids: list[int]
    positions: list[int] | None = None


@dataclass
class _Session:
    session_id: str
    scene: Scene
    gateway: OracleGateway
    prompt: str
    text: str | None
    token_ids: list[int]
    offsets: list[tuple[int, int]]


@dataclass
class _State:
    config: RunConfig
    sessions: dict[str, _Session] = field(default_factory=dict)
    bundles: dict[str, dict] = field(default_factory=dict)
    saliency_png: dict[str, bytes] = field(default_factory=dict)
    jobs: dict[str, dict] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)
    pool: ThreadPoolExecutor = field(
        default_factory=lambda: ThreadPoolExecutor(max_workers=2)
    )


def _targets_for(session: _Session, positions: list[int] | None) -> TokenTargets:
    ids = tuple(session.token_ids)
    if positions is None:
        positions = list(range(len(ids)))
    pairs = []
    for p in sorted(set(positions)):
        if not 0 <= p < len(ids):
            raise HTTPException(400, f"token position {p} out of range")
        pairs.append((p, ids[p]))
    if not pairs:
        raise HTTPException(400, "no target positions selected")
    return TokenTargets(prompt=session.prompt, generated_ids=ids, targets=tuple(pairs))


def create_app(config: RunConfig, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="tokensight", docs_url=None, redoc_url=None)
    state = _State(config=config)

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    @app.post("/api/session")
    def create_session(request: SessionRequest):
        try:
            image = image_from_b64(request.image_b64)
        except ImageLoadError as exc:
            raise HTTPException(400, str(exc)) from exc
        region_count = min(config.region_count, image.width * image.height)
        partition = slico_partition(image, region_count, config.slico_iterations)
        scene = Scene(image=image, partition=partition, fill=config.fill)
        try:
            gateway = make_gateway(config, partition)
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from exc

        text = request.text
        token_ids = request.generated_ids
        try:
            if token_ids is None:
                text, token_ids = gateway.generate(
                    image, request.prompt, request.max_tokens
                )
            if text is not None:
                tok_ids, offsets = gateway.tokenize(text)
                if tok_ids != list(token_ids):
                    offsets = [(i, i) for i in range(len(token_ids))]
            else:
                offsets = [(i, i) for i in range(len(token_ids))]
        except TransportError as exc:
            raise HTTPException(502, f"oracle unreachable: {exc}") from exc
        except OracleError as exc:
            raise HTTPException(400, str(exc)) from exc

        digest = hashlib.sha256()
        digest.update(image.tobytes())
        digest.update(request.prompt.encode("utf-8"))
        session_id = digest.hexdigest()[:16]
        session = _Session(
            session_id=session_id,
            scene=scene,
            gateway=gateway,
            prompt=request.prompt,
            text=text,
            token_ids=list(token_ids),
            offsets=list(offsets),
        )
        with state.lock:
            state.sessions[session_id] = session
        return {
            "session_id": session_id,
            "text": text,
            "token_ids": session.token_ids,
            "offsets": [list(o) for o in session.offsets],
            "region_count": partition.region_count,
            "model_id": gateway.model_id,
        }

    def _session(session_id: str) -> _Session:
        with state.lock:
            session = state.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id}")
        return session

    def _run_job(bundle_id: str, session: _Session, targets: TokenTargets):
        try:
            run = run_attribution(
                session.gateway, session.scene, targets, state.config,
                image_ref=session.session_id, partition_ref="",
            )
            png = encode_gray_png(run.saliency.scores)
            with state.lock:
                state.bundles[bundle_id] = run.bundle
                state.saliency_png[bundle_id] = png
                state.jobs[bundle_id] = {"status": "done"}
        except Exception as exc:  # noqa: BLE001 - reported through the job record
            with state.lock:
                state.jobs[bundle_id] = {"status": "error", "error": str(exc)}

    @app.post("/api/attribute")
    def attribute(request: AttributeRequest):
        session = _session(request.session_id)
        targets = _targets_for(session, request.positions)
        digest = hashlib.sha256()
        digest.update(session.session_id.encode())
        digest.update(repr(targets.targets).encode())
        bundle_id = digest.hexdigest()[:16]
        with state.lock:
            existing = state.jobs.get(bundle_id)
            if existing is None or existing["status"] == "error":
                state.jobs[bundle_id] = {"status": "pending"}
                submit = True
            else:
                submit = False
        if submit:
            state.pool.submit(_run_job, bundle_id, session, targets)
        return {"bundle_id": bundle_id}

    @app.get("/api/bundle/{bundle_id}")
    def bundle(bundle_id: str):
        with state.lock:
            job = state.jobs.get(bundle_id)
            result = state.bundles.get(bundle_id)
        if job is None:
            raise HTTPException(404, f"unknown bundle {bundle_id}")
        if job["status"] == "error":
            return {"status": "error", "error": job.get("error", "unknown")}
        if job["status"] != "done":
            return {"status": job["status"]}
        return {"status": "done", "bundle": result}

    @app.get("/api/saliency/{bundle_id}.png")
    def saliency(bundle_id: str):
        with state.lock:
            png = state.saliency_png.get(bundle_id)
        if png is None:
            raise HTTPException(404, f"no saliency for bundle {bundle_id}")
        return Response(content=png, media_type="image/png")

    @app.post("/api/whatif")
    def whatif(request: WhatIfRequest):
        session = _session(request.session_id)
        targets = _targets_for(session, request.positions)
        n = session.scene.region_count
        keep = KeepSet.full(n)
        for region in set(request.removed_region_ids):
            if not 0 <= region < n:
                raise HTTPException(400, f"region {region} out of range")
            keep = keep.without_region(region)
        try:
            probs = session.gateway.score_targets(
                session.scene.query(keep, targets)
            ).probs
            masked = session.scene.masked(keep)
            try:
                text, _ = session.gateway.generate(masked, session.prompt, 32)
            except OracleError:
                text = None
        except TransportError as exc:
            raise HTTPException(502, f"oracle unreachable: {exc}") from exc
        except OracleError as exc:
            raise HTTPException(400, str(exc)) from exc
        return {
            "positions": list(targets.positions()),
            "probs": list(probs),
            "text": text,
            "removed_region_ids": sorted(set(request.removed_region_ids)),
        }

    @app.get("/api/session/{session_id}")
    def session_info(session_id: str):
        session = _session(session_id)
        return {
            "session_id": session.session_id,
            "text": session.text,
            "token_ids": session.token_ids,
            "offsets": [list(o) for o in session.offsets],
            "region_count": session.scene.region_count,
            "model_id": session.gateway.model_id,
        }

    @app.get("/api/session/{session_id}/image.png")
    def session_image(session_id: str):
        session = _session(session_id)
        return Response(content=encode_png(session.scene.image), media_type="image/png")

    @app.get("/api/session/{session_id}/regions")
    def session_regions(session_id: str):
        session = _session(session_id)
        part = session.scene.partition
        return {
            "width": part.width,
            "height": part.height,
            "region_count": part.region_count,
            "labels": part.labels.ravel().tolist(),
        }

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index():
            return PLACEHOLDER_PAGE

    return app
