"""Probability-oracle abstraction: query types, caching gateway, HTTP client.

Every attribution step in the engine reduces to "given this masked image and
these (position, vocab_id) targets, what probability does the model assign to
each target token". The gateway caches those answers by content hash and
bounds concurrent upstream calls; the oracle behind it is either an HTTP shim
wrapping a real model or an in-process synthetic with known ground truth.
"""

from __future__ import annotations

import hashlib
import math
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import httpx

from .imgio import Image, image_to_b64
from .partition import DEFAULT_FILL, KeepSet, RegionPartition, compose_masked_image


class OracleError(Exception):
    """Base for all oracle-path failures."""


class TransportError(OracleError):
    """Network failure or timeout talking to an oracle endpoint."""


class ShimError(OracleError):
    """The oracle endpoint reported an error response."""


class MalformedResponseError(OracleError):
    """The oracle answered, but the payload violates the protocol contract."""


class OracleBatchError(OracleError):
    """One or more queries in a batch failed; successes are preserved.

    ``errors`` maps batch position to the exception, ``results`` maps the
    remaining positions to their responses.
    """

    def __init__(self, errors: dict[int, Exception], results: dict[int, "ProbResponse"]):
        self.errors = errors
        self.results = results
        detail = "; ".join(f"[{i}] {e}" for i, e in sorted(errors.items()))
        super().__init__(f"{len(errors)} of {len(errors) + len(results)} queries failed: {detail}")


@dataclass(frozen=True)
class TokenTargets:
    """What is being explained: prompt, generated sequence, and target tokens.

    ``targets`` holds (position, vocab_id) pairs. For factual attribution the
    vocab_id equals generated_ids[position]; counterfactual targets may point
    at a different vocabulary entry on purpose.
    """

    prompt: str
    generated_ids: tuple[int, ...]
    targets: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "generated_ids", tuple(int(t) for t in self.generated_ids))
        object.__setattr__(
            self, "targets", tuple((int(p), int(v)) for p, v in self.targets)
        )
        positions = [p for p, _ in self.targets]
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("target positions must be strictly increasing")
        if positions and (positions[0] < 0 or positions[-1] >= len(self.generated_ids)):
            raise ValueError("target position out of range of generated_ids")

    def __len__(self) -> int:
        return len(self.targets)

    def positions(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.targets)

    def restricted_to(self, positions: Sequence[int]) -> "TokenTargets":
        wanted = set(positions)
        return TokenTargets(
            prompt=self.prompt,
            generated_ids=self.generated_ids,
            targets=tuple(t for t in self.targets if t[0] in wanted),
        )


@dataclass(frozen=True)
class ProbQuery:
    """A single oracle question: an (already masked) image plus targets.

    ``keep`` is an optional hint carrying the keep-set the image was composed
    under; synthetic oracles read it to answer exactly without re-inferring
    the mask from pixels. It never enters the cache key.
    """

    image: Image
    targets: TokenTargets
    keep: KeepSet | None = None

    def cache_key(self) -> bytes:
        digest = hashlib.sha256()
        digest.update(f"{self.image.width}x{self.image.height}".encode())
        digest.update(self.image.tobytes())
        digest.update(self.targets.prompt.encode("utf-8"))
        digest.update(repr(self.targets.generated_ids).encode())
        digest.update(repr(self.targets.targets).encode())
        return digest.digest()


@dataclass(frozen=True)
class ProbResponse:
    probs: tuple[float, ...]
    model_id: str


@dataclass(frozen=True)
class OracleConfig:
    """Connection settings for the gateway; endpoint may be a synthetic descriptor."""

    endpoint: str | None = None
    synthetic: dict | None = None
    max_in_flight: int = 8
    cache_capacity: int = 200_000
    timeout: float = 60.0
    bearer_token: str | None = None

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


@runtime_checkable
class ProbOracle(Protocol):
    model_id: str

    def token_probs(self, query: ProbQuery) -> list[float]: ...

    def generate(self, image: Image, prompt: str, max_tokens: int) -> tuple[str, list[int]]: ...


def _validate_probs(probs: Sequence[float], expected: int) -> tuple[float, ...]:
    if len(probs) != expected:
        raise MalformedResponseError(
            f"oracle returned {len(probs)} probabilities for {expected} targets"
        )
    out = []
    for p in probs:
        p = float(p)
        if math.isnan(p) or not 0.0 <= p <= 1.0:
            raise MalformedResponseError(f"probability out of range: {p}")
        out.append(p)
    return tuple(out)


class OracleGateway:
    """Caching, concurrency-bounding front end over a ProbOracle.

    Responses are cached by a content hash of the masked image bytes plus the
    textual context, so semantically identical keep-sets hit the cache no
    matter how the masked image was produced. Batch dispatch deduplicates
    identical queries before going upstream and reports per-position errors
    without aborting the rest of the batch.
    """

    def __init__(
        self,
        oracle: ProbOracle,
        max_in_flight: int = 8,
        cache_capacity: int = 200_000,
        enable_cache: bool = True,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self._oracle = oracle
        self._max_in_flight = max_in_flight
        self._capacity = cache_capacity
        self._enable_cache = enable_cache and cache_capacity > 0
        self._cache: OrderedDict[bytes, ProbResponse] = OrderedDict()
        self._gen_cache: OrderedDict[bytes, tuple[str, list[int]]] = OrderedDict()
        self._lock = threading.Lock()
        self.query_count = 0
        self.upstream_count = 0
        self.generate_count = 0

    @property
    def model_id(self) -> str:
        return self._oracle.model_id

    @classmethod
    def from_config(cls, oracle: ProbOracle, config: OracleConfig) -> "OracleGateway":
        return cls(
            oracle,
            max_in_flight=config.max_in_flight,
            cache_capacity=config.cache_capacity,
        )

    def _cache_get(self, key: bytes) -> ProbResponse | None:
        if not self._enable_cache:
            return None
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
            return hit

    def _cache_put(self, key: bytes, value: ProbResponse) -> None:
        if not self._enable_cache:
            return
        with self._lock:
            self._cache[key] = value
            if len(self._cache) > self._capacity:
                self._cache.popitem(last=False)

    def _call_upstream(self, query: ProbQuery) -> ProbResponse:
        with self._lock:
            self.upstream_count += 1
        probs = self._oracle.token_probs(query)
        return ProbResponse(
            probs=_validate_probs(probs, len(query.targets)),
            model_id=self._oracle.model_id,
        )

    def score_targets(self, query: ProbQuery) -> ProbResponse:
        """Score one query; identical repeat queries are served from cache."""
        if len(query.targets) == 0:
            raise ValueError("query must carry at least one target")
        with self._lock:
            self.query_count += 1
        key = query.cache_key()
        hit = self._cache_get(key)
        if hit is not None:
            return hit
        response = self._call_upstream(query)
        self._cache_put(key, response)
        return response

    def score_batch(self, queries: Sequence[ProbQuery]) -> list[ProbResponse]:
        """Score a batch; positionally equivalent to mapping score_targets.

        Duplicate queries inside the batch cost at most one upstream call.
        Raises OracleBatchError carrying every per-position outcome when any
        query fails.
        """
        if not queries:
            raise ValueError("empty query batch")
        with self._lock:
            self.query_count += len(queries)

        keys = [q.cache_key() for q in queries]
        outcomes: dict[int, ProbResponse | Exception] = {}
        misses: dict[bytes, list[int]] = {}
        for i, (q, key) in enumerate(zip(queries, keys)):
            if len(q.targets) == 0:
                outcomes[i] = ValueError("query must carry at least one target")
                continue
            hit = self._cache_get(key)
            if hit is not None:
                outcomes[i] = hit
            else:
                misses.setdefault(key, []).append(i)

        if misses:
            unique = [(key, queries[positions[0]]) for key, positions in misses.items()]
            if self._max_in_flight == 1 or len(unique) == 1:
                fetched = [self._fetch_one(q) for _, q in unique]
            else:
                with ThreadPoolExecutor(max_workers=self._max_in_flight) as pool:
                    fetched = list(pool.map(lambda kq: self._fetch_one(kq[1]), unique))
            for (key, _), result in zip(unique, fetched):
                if isinstance(result, ProbResponse):
                    self._cache_put(key, result)
                for i in misses[key]:
                    outcomes[i] = result

        errors = {i: v for i, v in outcomes.items() if isinstance(v, Exception)}
        results = {i: v for i, v in outcomes.items() if isinstance(v, ProbResponse)}
        if errors:
            raise OracleBatchError(errors, results)
        return [results[i] for i in range(len(queries))]

    def _fetch_one(self, query: ProbQuery) -> ProbResponse | Exception:
        try:
            return self._call_upstream(query)
        except Exception as exc:  # noqa: BLE001 - captured per position
            return exc

    def generate(self, image: Image, prompt: str, max_tokens: int) -> tuple[str, list[int]]:
        """Greedy decoding through the oracle; deterministic, lightly cached."""
        if max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        digest = hashlib.sha256()
        digest.update(f"{image.width}x{image.height}".encode())
        digest.update(image.tobytes())
        digest.update(prompt.encode("utf-8"))
        digest.update(str(max_tokens).encode())
        key = digest.digest()
        with self._lock:
            self.generate_count += 1
            hit = self._gen_cache.get(key)
        if hit is not None:
            return hit[0], list(hit[1])
        text, ids = self._oracle.generate(image, prompt, max_tokens)
        with self._lock:
            self._gen_cache[key] = (text, list(ids))
            if len(self._gen_cache) > max(16, self._capacity // 64):
                self._gen_cache.popitem(last=False)
        return text, list(ids)

    def tokenize(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        tokenize = getattr(self._oracle, "tokenize", None)
        if tokenize is None:
            raise OracleError("oracle does not support tokenization")
        return tokenize(text)


@dataclass(frozen=True)
class Scene:
    """An image, its region partition, and the masking fill bound together."""

    image: Image
    partition: RegionPartition
    fill: tuple[int, int, int] = DEFAULT_FILL

    def __post_init__(self):
        if (self.partition.height, self.partition.width) != (
            self.image.height,
            self.image.width,
        ):
            raise ValueError("partition dimensions do not match image")

    @property
    def region_count(self) -> int:
        return self.partition.region_count

    def masked(self, keep: KeepSet) -> Image:
        return compose_masked_image(self.image, self.partition, keep, fill=self.fill)

    def query(self, keep: KeepSet, targets: TokenTargets) -> ProbQuery:
        return ProbQuery(image=self.masked(keep), targets=targets, keep=keep)


class HttpOracle:
    """Client for the token-probability wire protocol (JSON over HTTP)."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 60.0,
        bearer_token: str | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        headers = {}
        if bearer_token:
            headers["Authorization"] = f"Bearer {bearer_token}"
        self._client = httpx.Client(
            base_url=base_url.rstrip("/"),
            timeout=timeout,
            headers=headers,
            transport=transport,
        )
        self._model_id = f"http:{base_url}"

    @property
    def model_id(self) -> str:
        return self._model_id

    def _post(self, path: str, payload: dict) -> dict:
        try:
            response = self._client.post(path, json=payload)
        except httpx.TimeoutException as exc:
            raise TransportError(f"timeout calling {path}") from exc
        except httpx.HTTPError as exc:
            raise TransportError(f"transport failure calling {path}: {exc}") from exc
        if response.status_code != 200:
            try:
                detail = response.json().get("error", response.text)
            except ValueError:
                detail = response.text
            raise ShimError(f"{path} returned {response.status_code}: {detail}")
        try:
            body = response.json()
        except ValueError as exc:
            raise MalformedResponseError(f"{path} returned non-JSON body") from exc
        if not isinstance(body, dict):
            raise MalformedResponseError(f"{path} returned non-object JSON")
        return body

    def token_probs(self, query: ProbQuery) -> list[float]:
        body = self._post(
            "/v1/token_probs",
            {
                "image_b64": image_to_b64(query.image),
                "prompt": query.targets.prompt,
                "generated_ids": list(query.targets.generated_ids),
                "targets": [
                    {"position": p, "vocab_id": v} for p, v in query.targets.targets
                ],
            },
        )
        if "probs" not in body:
            raise MalformedResponseError("token_probs response missing 'probs'")
        if isinstance(body.get("model_id"), str):
            self._model_id = body["model_id"]
        return body["probs"]

    def generate(self, image: Image, prompt: str, max_tokens: int) -> tuple[str, list[int]]:
        body = self._post(
            "/v1/generate",
            {"image_b64": image_to_b64(image), "prompt": prompt, "max_tokens": max_tokens},
        )
        if "text" not in body or "token_ids" not in body:
            raise MalformedResponseError("generate response missing fields")
        return str(body["text"]), [int(t) for t in body["token_ids"]]

    def tokenize(self, text: str) -> tuple[list[int], list[tuple[int, int]]]:
        body = self._post("/v1/tokenize", {"text": text})
        if "token_ids" not in body or "offsets" not in body:
            raise MalformedResponseError("tokenize response missing fields")
        ids = [int(t) for t in body["token_ids"]]
        offsets = [(int(a), int(b)) for a, b in body["offsets"]]
        if len(ids) != len(offsets):
            raise MalformedResponseError("tokenize ids/offsets length mismatch")
        return ids, offsets

    def close(self) -> None:
        self._client.close()
