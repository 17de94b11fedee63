"""Zero-shot LLM predictions of postprandial glucose targets.

A prompt is a fixed template with the meal's feature vector rendered into
its Input block. Providers are plain objects with a ``provider_id`` and a
``complete(prompt) -> str`` method; the bundled mock providers make every
experiment deterministic and offline, while :class:`HttpProvider` talks to a
chat-completion endpoint and is only built when live access is requested.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import os
import re
import string
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (
    AuthFailure,
    ImplausibleValue,
    InputError,
    NoNumberFound,
    RefusedPrediction,
    Timeout,
)
from .features import FeatureVector
from .files import atomic_write_text

log = logging.getLogger(__name__)

MAX_PLAUSIBLE = 200_000.0
MARKERS = ("prediction", "auc", "answer")
MAX_RETRIES = 3

# Provider ids in the order their columns are appended for the six-model hybrid.
HYBRID_PROVIDERS = ("gpt35_turbo", "gpt4", "claude_opus4", "deepseek_v3", "gemini_flash2", "grok3")
BEST_PROVIDER = "claude_opus4"


class PredictionTarget(enum.Enum):
    AUC = "auc"
    MaxBGL = "max_bgl"

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower().replace("-", "_")
        for m in cls:
            if key in (m.value, m.name.lower()):
                return m
        raise InputError(f"unknown LLM target {text!r}; choose from {[m.value for m in cls]}")

    @property
    def description(self):
        if self is PredictionTarget.AUC:
            return "area under the glucose curve"
        return "maximum blood glucose level"

    @property
    def unit(self):
        return "mg/dL·min" if self is PredictionTarget.AUC else "mg/dL"


# ---------------------------------------------------------------------------
# prompts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PromptTemplate:
    text: str

    def __post_init__(self):
        if "$input" not in self.text:
            raise InputError("prompt template has no $input slot")

    @classmethod
    def default(cls):
        return cls(resources.files("glucolens").joinpath("assets/prompt_template.txt").read_text("utf-8"))

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                return cls(fh.read())
        except OSError as exc:
            raise InputError(f"cannot read prompt template {path}: {exc}") from None


def render_input(features: FeatureVector) -> str:
    return "\n".join(f"{name}: {value:.2f}" for name, value in zip(features.names, features.values))


def build_prompt(template: PromptTemplate | None, features: FeatureVector, target="auc", window_min=180) -> str:
    """Fill the template's Input block with ``name: value`` lines (2 decimals)."""
    template = template or PromptTemplate.default()
    tgt = PredictionTarget.parse(target)
    return string.Template(template.text).substitute(
        input=render_input(features), target_description=tgt.description,
        target_unit=tgt.unit, window_min=window_min,
    )


def parse_input_block(prompt: str) -> dict[str, float]:
    """Inverse of :func:`render_input` on a rendered prompt (used by mock providers)."""
    _, _, block = prompt.rpartition("Input:\n")
    out = {}
    for line in block.splitlines():
        name, sep, value = line.partition(": ")
        if sep:
            try:
                out[name.strip()] = float(value)
            except ValueError:
                continue
    return out


# ---------------------------------------------------------------------------
# response parsing
# ---------------------------------------------------------------------------

_NUMBER = re.compile(
    r"(?<![\w.])-?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?:[eE][-+]?\d+)?"
    r"|(?<![\w.])-?\.\d+(?:[eE][-+]?\d+)?"
)


def _first_number(text):
    m = _NUMBER.search(text)
    return None if m is None else float(m.group(0).replace(",", ""))


def parse_prediction(raw: str) -> float:
    """Extract the predicted value from a provider reply.

    Takes the first number after the last case-insensitive marker
    (``prediction``, ``auc`` or ``answer``), else the first number anywhere.
    Numbers may use comma thousands separators.
    """
    if not raw or not raw.strip():
        raise NoNumberFound("empty response")
    low = raw.lower()
    value = None
    cut = max((low.rfind(m) + len(m) if low.rfind(m) >= 0 else -1) for m in MARKERS)
    if cut >= 0:
        value = _first_number(raw[cut:])
    if value is None:
        value = _first_number(raw)
    if value is None:
        raise NoNumberFound(f"no number in response {raw[:80]!r}")
    if not (math.isfinite(value) and 0.0 <= value <= MAX_PLAUSIBLE):
        raise ImplausibleValue(f"predicted value {value} outside [0, {MAX_PLAUSIBLE:g}]")
    return value


def format_prediction(value: float) -> str:
    return f"Prediction: {float(value)!r}"


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LlmPrediction:
    provider_id: str
    value: float
    raw_response: str
    cached: bool = False


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class LlmCache:
    """Responses keyed by (provider id, prompt hash), optionally persisted as JSON.

    Writes are serialized by a lock; :meth:`save` replaces the file atomically.
    """

    FORMAT = "glucolens-llm-cache"

    def __init__(self, path=None):
        self.path = path
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if path is not None and os.path.exists(path):
            self._load()

    def _load(self):
        try:
            with open(self.path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"unreadable LLM cache {self.path}: {exc}") from None
        if doc.get("format") != self.FORMAT:
            raise InputError(f"{self.path} is not an LLM cache file")
        self._entries = dict(doc["entries"])

    @staticmethod
    def key(provider_id, prompt):
        return f"{provider_id}:{prompt_hash(prompt)}"

    def __len__(self):
        return len(self._entries)

    def get(self, provider_id, prompt) -> LlmPrediction | None:
        e = self._entries.get(self.key(provider_id, prompt))
        if e is None:
            return None
        return LlmPrediction(provider_id, float(e["value"]), e["raw_response"], cached=True)

    def put(self, prediction: LlmPrediction, prompt):
        with self._lock:
            self._entries[self.key(prediction.provider_id, prompt)] = {
                "value": prediction.value, "raw_response": prediction.raw_response,
            }

    def save(self, path=None):
        path = path or self.path
        if path is None:
            raise InputError("cache has no file path")
        with self._lock:
            text = json.dumps({"format": self.FORMAT, "version": 1, "entries": self._entries},
                              sort_keys=True, indent=1, ensure_ascii=False)
        atomic_write_text(path, text)


# ---------------------------------------------------------------------------
# providers
# ---------------------------------------------------------------------------


class RateLimiter:
    """Minimum spacing between consecutive calls of one provider."""

    def __init__(self, min_interval=0.0, clock=time.monotonic, sleep=time.sleep):
        self.min_interval = float(min_interval)
        self._clock = clock
        self._sleep = sleep
        self._next = None
        self._lock = threading.Lock()

    def wait(self):
        with self._lock:
            now = self._clock()
            if self._next is not None and now < self._next:
                self._sleep(self._next - now)
                now = self._next
            self._next = now + self.min_interval


class MockProvider:
    """Replies with fixed text or with ``respond(prompt)``; no network."""

    def __init__(self, provider_id, respond: str | Callable[[str], str]):
        self.provider_id = provider_id
        self._respond = respond
        self.calls = 0

    def complete(self, prompt):
        self.calls += 1
        return self._respond(prompt) if callable(self._respond) else self._respond


class HeuristicMockProvider:
    """Offline stand-in for a real model: a rough physiological guess plus noise.

    The guess reads fasting glucose and carbohydrate lines from the prompt's
    Input block. ``bias`` scales it and ``noise_sd`` adds multiplicative
    log-normal noise drawn from a stream keyed by the prompt hash, so the
    same prompt always gets the same reply.
    """

    def __init__(self, provider_id, bias=1.0, noise_sd=0.1, seed=0):
        self.provider_id = provider_id
        self.bias = bias
        self.noise_sd = noise_sd
        self.seed = seed
        self.calls = 0

    def guess(self, prompt):
        f = parse_input_block(prompt)
        base = f.get("fasting_glucose", f.get("recent_cgm", 95.0))
        carbs = f.get("net_carbs", f.get("total_carbs", 50.0) - f.get("fiber", 0.0))
        height = 0.6 * max(carbs, 0.0)
        if "Estimate the maximum" in prompt:
            return base + height
        return 180.0 * base + 45.0 * height

    def complete(self, prompt):
        self.calls += 1
        digest = int(prompt_hash(f"{self.provider_id}:{self.seed}:{prompt}")[:16], 16)
        noise = np.random.default_rng(digest).normal(0.0, self.noise_sd)
        value = self.bias * self.guess(prompt) * math.exp(noise)
        return f"Based on the meal and activity profile, my estimate follows.\nPrediction: {value:.1f}"


def default_mock_providers(seed=0):
    """Six deterministic mock providers with different bias and noise levels."""
    settings = (
        (1.10, 0.20), (1.05, 0.15), (1.00, 0.08), (0.95, 0.15), (0.90, 0.20), (1.02, 0.12),
    )
    return [HeuristicMockProvider(pid, b, s, seed) for pid, (b, s) in zip(HYBRID_PROVIDERS, settings)]


@dataclass(frozen=True)
class ProviderConfig:
    """Declarative provider entry: ``kind`` is ``mock`` or ``http``."""

    id: str
    kind: str = "mock"
    endpoint: str | None = None
    model: str | None = None
    key_env: str | None = None
    timeout_s: float = 30.0
    min_interval_s: float = 0.0
    bias: float = 1.0
    noise_sd: float = 0.1

    def __post_init__(self):
        if not re.fullmatch(r"[A-Za-z0-9_]+", self.id or ""):
            raise InputError(f"provider id {self.id!r} must be alphanumeric/underscore")
        if self.kind not in ("mock", "http"):
            raise InputError(f"provider kind must be 'mock' or 'http', got {self.kind!r}")
        if self.kind == "http" and not (self.endpoint and self.model):
            raise InputError(f"http provider {self.id} needs endpoint and model")

    @property
    def credential_env(self):
        return self.key_env or f"GLUCOLENS_LLM_{self.id.upper()}_KEY"

    @classmethod
    def from_dict(cls, d: Mapping):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown provider keys {sorted(unknown)}")
        return cls(**d)


class HttpProvider:
    """Chat-completion style JSON endpoint reached with urllib."""

    def __init__(self, config: ProviderConfig, opener=urllib.request.urlopen, limiter=None):
        self.config = config
        self.provider_id = config.id
        self._open = opener
        self.limiter = limiter or RateLimiter(config.min_interval_s)

    def complete(self, prompt):
        key = os.environ.get(self.config.credential_env)
        if not key:
            raise AuthFailure(f"credential variable {self.config.credential_env} is not set")
        body = json.dumps({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }).encode("utf-8")
        req = urllib.request.Request(
            self.config.endpoint, data=body, method="POST",
            headers={"Content-Type": "application/json", "Authorization": f"Bearer {key}"},
        )
        self.limiter.wait()
        try:
            with self._open(req, timeout=self.config.timeout_s) as resp:
                doc = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code in (401, 403):
                raise AuthFailure(f"{self.provider_id}: HTTP {exc.code}") from None
            raise ConnectionError(f"{self.provider_id}: HTTP {exc.code}") from None
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise ConnectionError(f"{self.provider_id}: {exc}") from None
        return _response_text(doc)


def _response_text(doc):
    try:
        if "choices" in doc:
            return doc["choices"][0]["message"]["content"]
        if "content" in doc:
            return "".join(part.get("text", "") for part in doc["content"])
        return doc["text"]
    except (KeyError, IndexError, TypeError):
        raise RefusedPrediction(f"unrecognized response shape: {str(doc)[:80]}") from None


def make_provider(config: ProviderConfig, live=False, seed=0):
    if config.kind == "mock":
        return HeuristicMockProvider(config.id, config.bias, config.noise_sd, seed)
    if not live:
        raise InputError(f"provider {config.id} is live; enable live providers explicitly")
    return HttpProvider(config)


# ---------------------------------------------------------------------------
# querying
# ---------------------------------------------------------------------------


def query(provider, prompt: str, cache: LlmCache | None = None, retries=MAX_RETRIES,
          backoff_s=0.5, sleep=time.sleep) -> LlmPrediction:
    """Cached prediction from ``provider``.

    Connection failures and timeouts are retried up to ``retries`` times
    with exponentially growing pauses; authentication failures are not.
    """
    if cache is not None:
        hit = cache.get(provider.provider_id, prompt)
        if hit is not None:
            return hit
    for attempt in range(retries + 1):
        try:
            raw = provider.complete(prompt)
            break
        except (ConnectionError, TimeoutError, Timeout) as exc:
            if attempt == retries:
                raise Timeout(f"{provider.provider_id}: gave up after {retries + 1} attempts ({exc})") from None
            sleep(backoff_s * 2 ** attempt)
    try:
        value = parse_prediction(raw)
    except NoNumberFound:
        raise RefusedPrediction(f"{provider.provider_id} declined: {raw[:120]!r}") from None
    pred = LlmPrediction(provider.provider_id, value, raw, cached=False)
    if cache is not None:
        cache.put(pred, prompt)
    return pred


def predict_rows(providers: Sequence, vectors: Sequence[FeatureVector], target="auc",
                 template: PromptTemplate | None = None, cache: LlmCache | None = None,
                 window_min=180, sleep=time.sleep):
    """Per-provider prediction columns for a list of feature vectors.

    Returns ``(columns, refused)``: ``columns`` maps provider id to an array
    aligned with ``vectors``; a provider that declines any row is dropped
    from ``columns`` and listed in ``refused``.
    """
    template = template or PromptTemplate.default()
    prompts = [build_prompt(template, v, target, window_min) for v in vectors]
    columns, refused = {}, []
    for prov in providers:
        try:
            columns[prov.provider_id] = np.array(
                [query(prov, p, cache, sleep=sleep).value for p in prompts], dtype=float)
        except RefusedPrediction as exc:
            log.warning("excluding provider %s: %s", prov.provider_id, exc)
            refused.append(prov.provider_id)
    if cache is not None and cache.path is not None:
        cache.save()
    return columns, refused
