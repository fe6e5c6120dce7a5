"""Transports for the external services: live HTTP, fixture replay, recording.

Two services are used:

* the literature search API (E-utilities ``esearch``/``efetch`` over GET), and
* the language-model backend (JSON request/response over POST) that proposes
  hypotheses and extracts claims.

Every request has a stable key, ``sha256`` of its canonical JSON form. A
fixture directory stores the raw response body of each request under that
key, so fixture mode replays byte-for-byte what the live service returned::

    <fixtures>/eutils/<key>.json   esearch responses (JSON)
    <fixtures>/eutils/<key>.xml    efetch responses (PubMed XML)
    <fixtures>/llm/<key>.json      language-model responses
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from pathlib import Path
from typing import Any, Protocol

from .errors import BackendUnavailable, NetworkError

logger = logging.getLogger(__name__)

EUTILS_BASE = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils"


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def round_floats(obj: Any, ndigits: int = 6) -> Any:
    """Round every float in a JSON-like structure.

    Request payloads carry model outputs; rounding keeps fixture keys stable
    across platforms whose last-bit arithmetic differs.
    """
    if isinstance(obj, float):
        return round(obj, ndigits)
    if isinstance(obj, dict):
        return {k: round_floats(v, ndigits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, ndigits) for v in obj]
    return obj


def request_key(service: str, endpoint: str, payload: Any) -> str:
    return hashlib.sha256(canonical_json({"service": service, "endpoint": endpoint, "payload": payload})).hexdigest()


def _suffix(service: str, endpoint: str) -> str:
    return ".xml" if (service, endpoint) == ("eutils", "efetch") else ".json"


class Transport(Protocol):
    def call(self, service: str, endpoint: str, payload: dict) -> bytes: ...


class HttpTransport:
    """Live transport with retries, exponential backoff and an on-disk cache.

    ``eutils`` calls are GET requests against ``eutils_base``; ``llm`` calls
    are POSTs of the JSON payload to ``llm_endpoint``/``<endpoint>``.
    """

    def __init__(
        self,
        eutils_base: str = EUTILS_BASE,
        llm_endpoint: str | None = None,
        cache_dir: str | Path | None = None,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 30.0,
        min_interval: float = 0.34,
    ) -> None:
        self.eutils_base = eutils_base.rstrip("/")
        self.llm_endpoint = llm_endpoint.rstrip("/") if llm_endpoint else None
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        # E-utilities allows ~3 requests/s without an API key
        self.min_interval = min_interval
        self._last = 0.0
        self._lock = threading.Lock()

    def _request(self, service: str, endpoint: str, payload: dict) -> urllib.request.Request:
        if service == "eutils":
            query = urllib.parse.urlencode(sorted(payload.items()))
            return urllib.request.Request(f"{self.eutils_base}/{endpoint}.fcgi?{query}")
        if self.llm_endpoint is None:
            raise BackendUnavailable("no language-model endpoint configured")
        return urllib.request.Request(
            f"{self.llm_endpoint}/{endpoint}",
            data=canonical_json(payload),
            headers={"Content-Type": "application/json"},
            method="POST",
        )

    def call(self, service: str, endpoint: str, payload: dict) -> bytes:
        key = request_key(service, endpoint, payload)
        cached = self.cache_dir / service / f"{key}{_suffix(service, endpoint)}" if self.cache_dir else None
        if cached is not None and cached.exists():
            return cached.read_bytes()
        req = self._request(service, endpoint, payload)
        last_err: Exception | None = None
        for attempt in range(self.retries):
            with self._lock:
                wait = self._last + self.min_interval - time.monotonic()
                if wait > 0:
                    time.sleep(wait)
                self._last = time.monotonic()
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    body = resp.read()
                break
            except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
                last_err = exc
                logger.warning("%s/%s attempt %d failed: %s", service, endpoint, attempt + 1, exc)
                time.sleep(self.backoff * 2**attempt)
        else:
            raise NetworkError(f"{service}/{endpoint} failed after {self.retries} attempts: {last_err}")
        if cached is not None:
            cached.parent.mkdir(parents=True, exist_ok=True)
            cached.write_bytes(body)
        return body


class FixtureTransport:
    """Replays stored responses; a missing fixture means the backend is unavailable."""

    def __init__(self, directory: str | Path) -> None:
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise BackendUnavailable(f"fixture directory {self.directory} does not exist")

    def path_for(self, service: str, endpoint: str, payload: dict) -> Path:
        return self.directory / service / f"{request_key(service, endpoint, payload)}{_suffix(service, endpoint)}"

    def call(self, service: str, endpoint: str, payload: dict) -> bytes:
        path = self.path_for(service, endpoint, payload)
        if not path.exists():
            raise BackendUnavailable(f"no fixture for {service}/{endpoint} ({path.name})")
        return path.read_bytes()


class RecordingTransport:
    """Forwards to ``inner`` and writes each response into a fixture directory."""

    def __init__(self, inner: Transport, directory: str | Path) -> None:
        self.inner = inner
        self.directory = Path(directory)

    def call(self, service: str, endpoint: str, payload: dict) -> bytes:
        body = self.inner.call(service, endpoint, payload)
        path = self.directory / service / f"{request_key(service, endpoint, payload)}{_suffix(service, endpoint)}"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(body)
        return body


class LLMBackend:
    """JSON request/response client for the hypothesis and claim endpoints.

    Request bodies are documented in ``docs/wire_formats.md``. A response is
    a JSON object; ``hypotheses`` returns ``{"hypotheses": [...]}`` and
    ``claims`` returns ``{"claims": [...]}``.
    """

    def __init__(self, transport: Transport) -> None:
        self.transport = transport

    def post(self, endpoint: str, payload: dict) -> dict:
        body = self.transport.call("llm", endpoint, payload)
        try:
            out = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BackendUnavailable(f"llm/{endpoint}: unreadable response ({exc})") from exc
        if not isinstance(out, dict):
            raise BackendUnavailable(f"llm/{endpoint}: response is not a JSON object")
        return out
