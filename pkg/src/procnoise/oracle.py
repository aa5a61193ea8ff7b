"""Uniform query interface to black-box classifiers.

Three transports share one contract: a built-in deterministic toy
classifier, JSON-over-HTTP remote oracles, and line-delimited JSON
subprocess oracles.  All of them charge exactly one ledger unit per
classification; the median-filter defence wraps any of them without
changing the accounting.
"""
from __future__ import annotations

import base64
import json
import math
import os
import shlex
import subprocess
import threading
import time
import urllib.parse
from dataclasses import dataclass, field

import httpx
import numpy as np
from scipy import ndimage

from .errors import TransportError
from .image import Image, encode_png, median_filter
from .ledger import QueryLedger

TOKEN_ENV = "PROCNOISE_ORACLE_TOKEN"


@dataclass
class OracleVerdict:
    """Classifier response: top class plus the ranked (class, probability)
    pairs that were requested."""

    top: int
    probs: list[tuple[int, float]] | None = None
    latency: float | None = None


def _validate_labels(labels: list[tuple[int, float]]) -> None:
    total = 0.0
    prev = 1.0 + 1e-6
    for _, prob in labels:
        if not (0.0 <= prob <= 1.0):
            raise TransportError(f"probability {prob} outside [0, 1]")
        if prob > prev + 1e-9:
            raise TransportError("probabilities not non-increasing in rank")
        prev = prob
        total += prob
    if total > 1.0 + 1e-6:
        raise TransportError(f"probabilities sum to {total} > 1")


class Oracle:
    """Base transport: `classify` charges the ledger, then delegates."""

    name = "oracle"
    classes: int | None = None
    side: int | None = None

    def classify(self, image: Image, top_k: int, ledger: QueryLedger) -> OracleVerdict:
        ledger.charge()
        t0 = time.perf_counter()
        verdict = self._classify(image, top_k)
        verdict.latency = time.perf_counter() - t0
        return verdict

    def _classify(self, image: Image, top_k: int) -> OracleVerdict:
        raise NotImplementedError

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# Toy oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToyOracleSpec:
    seed: int = 0
    side: int = 32
    classes: int = 7
    temperature: float = 1.0


TOY_ORIENTATIONS = 4
TOY_FREQUENCIES = 4
TOY_KERNEL = 9
# Scales unit-energy filter responses into a usable logit range.
TOY_GAIN = 400.0


class ToyOracle(Oracle):
    """Deterministic desk-scale classifier.

    Logits are class-weighted, average-pooled absolute responses of 16
    seeded Gabor filters spanning 4 orientations x 4 frequencies, so the
    decision surface is genuinely frequency- and orientation-sensitive.
    Ties at argmax break toward the lowest class index.
    """

    name = "toy"

    def __init__(self, spec: ToyOracleSpec):
        if spec.classes < 2:
            raise ValueError(f"toy oracle needs >= 2 classes, got {spec.classes}")
        self.spec = spec
        self.classes = spec.classes
        self.side = spec.side
        rng = np.random.default_rng(spec.seed)
        self.filters = self._build_bank(rng, spec.side)
        n_filters = len(self.filters)
        weights = 0.12 * rng.uniform(0.0, 1.0, size=(spec.classes, n_filters))
        for f in range(n_filters):
            weights[f % spec.classes, f] += 1.0
        self.weights = weights

    @staticmethod
    def _build_bank(rng: np.random.Generator, side: int) -> list[np.ndarray]:
        k = min(TOY_KERNEL, (side // 2) * 2 + 1)
        half = k // 2
        ys, xs = np.mgrid[-half:half + 1, -half:half + 1].astype(np.float64)
        bank = []
        for o in range(TOY_ORIENTATIONS):
            for f in range(TOY_FREQUENCIES):
                angle = (o + rng.uniform(-0.05, 0.05)) * np.pi / TOY_ORIENTATIONS
                lam = side / (2.0 ** (f + 1)) * rng.uniform(0.95, 1.05)
                sigma = 1.0 / lam
                env = np.exp(-np.pi * sigma * sigma * (xs * xs + ys * ys))
                kern = env * np.cos((2.0 * np.pi / lam) * (xs * np.cos(angle) + ys * np.sin(angle)))
                kern -= kern.mean()
                kern /= math.sqrt(float(np.sum(kern * kern)))
                bank.append(kern)
        return bank

    def features(self, image: Image) -> np.ndarray:
        gray = (np.mean(image.pixels, axis=2) - 128.0) / 255.0
        feats = np.empty(len(self.filters))
        for i, kern in enumerate(self.filters):
            resp = ndimage.correlate(gray, kern, mode="constant", cval=0.0)
            feats[i] = float(np.mean(np.abs(resp)))
        return feats

    def logits(self, image: Image) -> np.ndarray:
        return self.spec.temperature * TOY_GAIN * (self.weights @ self.features(image))

    def probabilities(self, image: Image) -> np.ndarray:
        z = self.logits(image)
        z = z - np.max(z)
        e = np.exp(z)
        return e / np.sum(e)

    def render_filter(self, index: int) -> Image:
        """The bank filter scaled onto the 0-255 pixel grid, tiled into a
        full-size grayscale image."""
        kern = self.filters[index]
        scaled = 128.0 + 127.0 * kern / np.max(np.abs(kern))
        reps = -(-self.side // kern.shape[0])
        tiled = np.tile(scaled, (reps, reps))[: self.side, : self.side]
        return Image(np.repeat(tiled[:, :, None], 3, axis=2))

    def _classify(self, image: Image, top_k: int) -> OracleVerdict:
        probs = self.probabilities(image)
        order = np.argsort(-probs, kind="stable")
        k = min(top_k, len(probs))
        labels = [(int(c), float(probs[c])) for c in order[:k]]
        return OracleVerdict(top=int(order[0]), probs=labels)


# ---------------------------------------------------------------------------
# Median-filter defence wrapper
# ---------------------------------------------------------------------------

class MedianDefenceOracle(Oracle):
    """Classifies the median-filtered image; one wrapped call is one query."""

    name = "median-defence"

    def __init__(self, inner: Oracle, k: int):
        self.inner = inner
        self.k = k
        self.classes = inner.classes
        self.side = inner.side

    def _classify(self, image: Image, top_k: int) -> OracleVerdict:
        return self.inner._classify(median_filter(image, self.k), top_k)

    def close(self) -> None:
        self.inner.close()


def with_median_defence(oracle: Oracle, k: int) -> Oracle:
    return MedianDefenceOracle(oracle, k)


# ---------------------------------------------------------------------------
# Remote transports
# ---------------------------------------------------------------------------

def _parse_labels(payload: dict) -> OracleVerdict:
    try:
        raw = payload["labels"]
        labels = [(int(e["class"]), float(e["prob"])) for e in raw]
    except (KeyError, TypeError, ValueError) as e:
        raise TransportError(f"malformed oracle reply: {e}") from e
    if not labels:
        raise TransportError("oracle reply carries no labels")
    _validate_labels(labels)
    return OracleVerdict(top=labels[0][0], probs=labels)


class HttpOracle(Oracle):
    """JSON-over-HTTP oracle client (POST /classify).

    Connection-level failures are retried a bounded number of times with
    backoff; any non-200 status or malformed body surfaces TransportError.
    """

    name = "http"

    def __init__(self, base_url: str, token: str | None = None, retries: int = 2,
                 timeout: float = 30.0, transport=None):
        self.base_url = base_url.rstrip("/")
        headers = {}
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(base_url=self.base_url, timeout=timeout,
                                    headers=headers, transport=transport)
        self.retries = retries
        self._lock = threading.Lock()
        self._counter = 0

    def _next_id(self) -> str:
        with self._lock:
            self._counter += 1
            return f"q{self._counter}"

    def _post(self, path: str, body: dict) -> httpx.Response:
        attempt = 0
        while True:
            try:
                return self._client.post(path, json=body)
            except httpx.HTTPError as e:
                if attempt >= self.retries:
                    raise TransportError(f"oracle unreachable: {e}") from e
                time.sleep(0.1 * (2 ** attempt))
                attempt += 1

    def _classify(self, image: Image, top_k: int) -> OracleVerdict:
        body = {
            "id": self._next_id(),
            "image_png_b64": base64.b64encode(encode_png(image)).decode("ascii"),
            "top_k": int(top_k),
        }
        resp = self._post("/classify", body)
        if resp.status_code != 200:
            raise TransportError(f"oracle returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            payload = resp.json()
        except ValueError as e:
            raise TransportError(f"oracle reply is not JSON: {e}") from e
        return _parse_labels(payload)

    def health(self) -> dict:
        try:
            resp = self._client.get("/health")
        except httpx.HTTPError as e:
            raise TransportError(f"oracle unreachable: {e}") from e
        if resp.status_code != 200:
            raise TransportError(f"health check returned HTTP {resp.status_code}")
        meta = resp.json()
        self.classes = int(meta.get("classes")) if meta.get("classes") is not None else None
        self.side = int(meta.get("side")) if meta.get("side") is not None else None
        return meta

    def close(self) -> None:
        self._client.close()


class SubprocessOracle(Oracle):
    """Line-protocol oracle: one JSON request per stdin line, one JSON
    response per stdout line."""

    name = "subprocess"

    def __init__(self, argv: list[str]):
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, bufsize=1,
            )
        except OSError as e:
            raise TransportError(f"cannot spawn oracle subprocess: {e}") from e
        self._lock = threading.Lock()
        self._counter = 0

    def _classify(self, image: Image, top_k: int) -> OracleVerdict:
        with self._lock:
            self._counter += 1
            body = {
                "id": f"q{self._counter}",
                "image_png_b64": base64.b64encode(encode_png(image)).decode("ascii"),
                "top_k": int(top_k),
            }
            try:
                self._proc.stdin.write(json.dumps(body) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (OSError, ValueError) as e:
                raise TransportError(f"oracle subprocess pipe failed: {e}") from e
        if not line:
            raise TransportError("oracle subprocess closed its output")
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as e:
            raise TransportError(f"oracle subprocess reply is not JSON: {e}") from e
        return _parse_labels(payload)

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()


# ---------------------------------------------------------------------------
# URI dispatch
# ---------------------------------------------------------------------------

def oracle_from_uri(uri: str, defence_k: int | None = None) -> Oracle:
    """Build an oracle from a URI:

    - ``toy://?seed=S&side=D&classes=C[&temperature=T]``
    - ``http://host:port`` / ``https://host:port``
    - ``subprocess:<command line>``
    """
    if uri.startswith("toy://"):
        qs = urllib.parse.parse_qs(urllib.parse.urlparse(uri).query)

        def q(key, cast, default):
            return cast(qs[key][0]) if key in qs else default

        spec = ToyOracleSpec(
            seed=q("seed", int, 0), side=q("side", int, 32),
            classes=q("classes", int, 7), temperature=q("temperature", float, 1.0),
        )
        oracle: Oracle = ToyOracle(spec)
    elif uri.startswith(("http://", "https://")):
        oracle = HttpOracle(uri)
    elif uri.startswith("subprocess:"):
        oracle = SubprocessOracle(shlex.split(uri[len("subprocess:"):]))
    else:
        raise ValueError(f"unsupported oracle URI {uri!r}")
    if defence_k is not None:
        oracle = with_median_defence(oracle, defence_k)
    return oracle
