"""Few-shot LLM annotation: nearest-neighbour demonstration retrieval, prompt
construction, label parsing, cost accounting, and the offline mock endpoint.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass

import numpy as np

from .corpus import NewsRecord, latent_label, synth_domain
from .errors import AnnotationError, VeriloopError

API_KEY_ENV = "COALFAKE_LLM_KEY"
DEFAULT_K = 5

_HEADER_KNN = (
    "I need your assistance in evaluating the authenticity of a news article. \n"
    "I will provide you the news article. You have to answer only with Fake or Real. \n"
    "I will give you some examples of news. Your answer after [output] should be "
    "consistent with the following examples:\n"
)
_HEADER_PLAIN = (
    "I need your assistance in evaluating the authenticity of a news article. \n"
    "I will provide you the news article. You have to answer only with Fake or Real. \n"
)
_EXAMPLE_BLOCK = "[example {n}]: \n[input news]: [news text: {text}] \n[output]: [This is {label} news]"
_TARGET_BLOCK = "[target news]: \n[input news]: [news text: {text}]\n[output]"

_LABEL_WORDS = {0: "Real", 1: "Fake"}
_LABEL_RE = re.compile(r"\b(fake|real)\b", re.IGNORECASE)


@dataclass(frozen=True)
class Demonstration:
    text: str
    label: int


@dataclass
class Annotation:
    record_id: str
    label: int | None
    provenance: str  # llm | human | gold
    raw_response: str = ""
    prompt_tokens: int = 0
    completion_tokens: int = 0
    abstained: bool = False


@dataclass
class CompletionResult:
    text: str
    prompt_tokens: int
    completion_tokens: int


def token_estimate(text: str) -> int:
    """Cheap deterministic token count used by the mock backend and human billing."""
    return len(text) // 4 + 4


class CostLedger:
    """Accumulates token usage and converts it to USD at the configured rates.

    Updates are serialized; totals only grow. Human work is billed per item in
    ceil(tokens / unit_tokens) units.
    """

    def __init__(self, rates: dict | None = None):
        self.rates = {
            "in_per_1m": 3.00,
            "out_per_1m": 6.00,
            "human_per_unit": 0.11,
            "unit_tokens": 50,
        }
        if rates:
            self.rates.update(rates)
        self.llm_prompt_tokens = 0
        self.llm_completion_tokens = 0
        self.human_tokens = 0
        self.items: list[dict] = []
        self._lock = threading.Lock()

    def add_llm_usage(self, prompt_tokens: int, completion_tokens: int) -> None:
        with self._lock:
            self.llm_prompt_tokens += int(prompt_tokens)
            self.llm_completion_tokens += int(completion_tokens)

    def add_human_item(self, record_id: str, tokens: int) -> float:
        units = -(-int(tokens) // int(self.rates["unit_tokens"]))
        usd = round(self.rates["human_per_unit"] * 100) * units / 100
        with self._lock:
            self.human_tokens += int(tokens)
            self.items.append({"record_id": record_id, "tokens": int(tokens), "units": units, "usd": usd})
        return usd

    def cost(self) -> dict[str, float]:
        with self._lock:
            llm_usd = (
                self.rates["in_per_1m"] * self.llm_prompt_tokens
                + self.rates["out_per_1m"] * self.llm_completion_tokens
            ) / 1_000_000
            human_usd = sum(item["usd"] for item in self.items)
            return {"llm_usd": llm_usd, "human_usd": human_usd, "total_usd": llm_usd + human_usd}

    def round_export(self, round_no: int) -> dict:
        cost = self.cost()
        with self._lock:
            return {
                "round": round_no,
                "llm_usd": cost["llm_usd"],
                "human_usd": cost["human_usd"],
                "items": list(self.items),
            }

    def to_json(self) -> dict:
        with self._lock:
            return {
                "rates": dict(self.rates),
                "llm_prompt_tokens": self.llm_prompt_tokens,
                "llm_completion_tokens": self.llm_completion_tokens,
                "human_tokens": self.human_tokens,
                "items": list(self.items),
            }

    @classmethod
    def from_json(cls, payload: dict) -> "CostLedger":
        ledger = cls(rates=payload.get("rates"))
        ledger.llm_prompt_tokens = int(payload["llm_prompt_tokens"])
        ledger.llm_completion_tokens = int(payload["llm_completion_tokens"])
        ledger.human_tokens = int(payload["human_tokens"])
        ledger.items = list(payload["items"])
        return ledger


class DemoSet:
    """Demonstration pool with cached embeddings for nearest-neighbour retrieval."""

    def __init__(self, encoder, demos: list[Demonstration] | None = None):
        self.encoder = encoder
        self.demos: list[Demonstration] = []
        self._vectors: list[np.ndarray] = []
        for demo in demos or []:
            self.add(demo.text, demo.label)
        self.initial_size = len(self.demos)

    def __len__(self) -> int:
        return len(self.demos)

    def add(self, text: str, label: int) -> None:
        self.demos.append(Demonstration(text=text, label=int(label)))
        self._vectors.append(self.encoder.embed(text))

    def matrix(self) -> np.ndarray:
        return np.vstack(self._vectors)


def retrieve_demos(query_text: str, demo_set: DemoSet, k: int = DEFAULT_K) -> list[Demonstration]:
    """The min(k, |demos|) demonstrations most cosine-similar to the query, best first."""
    if len(demo_set) == 0:
        raise VeriloopError("demonstration set is empty")
    query = demo_set.encoder.embed(query_text)
    sims = demo_set.matrix() @ query
    order = np.lexsort((np.arange(len(sims)), -sims))
    return [demo_set.demos[i] for i in order[: min(k, len(sims))]]


def build_prompt(demos: list[Demonstration], query_text: str, mode: str = "knn") -> str:
    """Instantiate the annotation prompt; plain mode omits the examples block."""
    if mode == "plain":
        return _HEADER_PLAIN + "\n" + _TARGET_BLOCK.format(text=query_text)
    if mode != "knn":
        raise VeriloopError(f"unknown prompt mode {mode!r}")
    if not demos:
        raise VeriloopError("knn mode requires at least one demonstration")
    blocks = [
        _EXAMPLE_BLOCK.format(n=i + 1, text=d.text, label=_LABEL_WORDS[d.label])
        for i, d in enumerate(demos)
    ]
    return _HEADER_KNN + "\n" + "\n\n".join(blocks) + "\n\n" + _TARGET_BLOCK.format(text=query_text)


def parse_label(completion: str) -> int | None:
    """First standalone 'fake'/'real' (any case) decides the label."""
    match = _LABEL_RE.search(completion)
    if match is None:
        return None
    return 1 if match.group(1).lower() == "fake" else 0


class ChatCompletionsClient:
    """Minimal chat-completions HTTP client: temperature 0, one user message,
    two retries with backoff on transport errors."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 2,
        backoff_s: float = 1.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_s = backoff_s

    def complete(self, prompt: str) -> CompletionResult:
        import requests

        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                body = resp.json()
                text = body["choices"][0]["message"]["content"] or ""
                usage = body.get("usage") or {}
                return CompletionResult(
                    text=text,
                    prompt_tokens=int(usage.get("prompt_tokens", token_estimate(prompt))),
                    completion_tokens=int(usage.get("completion_tokens", token_estimate(text))),
                )
            except Exception as exc:  # transport or schema failure
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (attempt + 1))
        raise AnnotationError(f"LLM request failed after {self.max_retries + 1} attempts: {last_error}")


class MockLLM:
    """Offline stand-in for the annotation endpoint.

    Answers with the target's latent class, flipped with per-record seeded
    probability 1 - accuracy. When `boost_accuracy` is set and the prompt
    contains a demonstration from the target's own topic, that higher accuracy
    applies instead (the flip draw is keyed to the target text alone, so the
    two prompt modes are compared on paired draws). Token usage is synthetic:
    len(text) // 4 + 4.
    """

    def __init__(self, accuracy: float = 0.85, boost_accuracy: float | None = None, seed: int = 0):
        self.accuracy = accuracy
        self.boost_accuracy = boost_accuracy
        self.seed = seed

    def complete(self, prompt: str) -> CompletionResult:
        target = self._target_text(prompt)
        record = NewsRecord(id="q", text=target, source="q")
        truth = latent_label(record)
        accuracy = self.accuracy
        if self.boost_accuracy is not None and self._has_same_topic_demo(prompt, target):
            accuracy = self.boost_accuracy
        draw = self._uniform(target)
        if truth is None:
            label = int(draw < 0.5)
        else:
            label = truth if draw < accuracy else 1 - truth
        text = f"This is {_LABEL_WORDS[label]} news"
        return CompletionResult(
            text=text,
            prompt_tokens=token_estimate(prompt),
            completion_tokens=token_estimate(text),
        )

    def _uniform(self, target_text: str) -> float:
        digest = hashlib.blake2b(f"{self.seed}|{target_text}".encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") / 2**64

    @staticmethod
    def _target_text(prompt: str) -> str:
        start = prompt.rfind("[news text: ")
        if start < 0 or not prompt.endswith("]\n[output]"):
            raise AnnotationError("mock endpoint could not locate the target news text")
        return prompt[start + len("[news text: ") : -len("]\n[output]")]

    @staticmethod
    def _has_same_topic_demo(prompt: str, target: str) -> bool:
        topic = synth_domain(NewsRecord(id="q", text=target, source="q"))
        if topic is None:
            return False
        demos_part = prompt[: prompt.rfind("[target news]: ")]
        return f"topic{topic} " in demos_part


@dataclass
class Annotator:
    """Labeling front-end shared by the pipeline (annotate) and the detector
    baseline (detect): retrieval, prompting, parsing, and ledger updates."""

    encoder: object
    client: object
    ledger: CostLedger
    mode: str = "knn"
    k: int = DEFAULT_K
    reprompts: int = 1
    demo_cap_factor: int = 5

    def annotate(self, record: NewsRecord, demo_set: DemoSet) -> Annotation:
        demos = retrieve_demos(record.text, demo_set, self.k) if self.mode == "knn" else []
        prompt = build_prompt(demos, record.text, self.mode)
        total_prompt = 0
        total_completion = 0
        raw = ""
        label: int | None = None
        for _ in range(self.reprompts + 1):
            result = self.client.complete(prompt)
            self.ledger.add_llm_usage(result.prompt_tokens, result.completion_tokens)
            total_prompt += result.prompt_tokens
            total_completion += result.completion_tokens
            raw = result.text
            label = parse_label(raw)
            if label is not None:
                break
        return Annotation(
            record_id=record.id,
            label=label,
            provenance="llm",
            raw_response=raw,
            prompt_tokens=total_prompt,
            completion_tokens=total_completion,
            abstained=label is None,
        )

    def detect(self, record: NewsRecord, demo_set: DemoSet) -> Annotation:
        # Same code path as annotate; detector outputs never join the training set.
        return self.annotate(record, demo_set)


def make_client(config: dict | None = None):
    """Pick the endpoint from config: {"backend": "mock"|"openai", ...}."""
    config = config or {}
    backend = config.get("backend", "mock")
    if backend == "mock":
        mock_cfg = config.get("mock", {})
        return MockLLM(
            accuracy=float(mock_cfg.get("accuracy", 0.85)),
            boost_accuracy=mock_cfg.get("boost_accuracy"),
            seed=int(mock_cfg.get("seed", 0)),
        )
    if backend == "openai":
        llm_cfg = config.get("llm", {})
        if "base_url" not in llm_cfg or "model" not in llm_cfg:
            raise AnnotationError("openai backend needs llm.base_url and llm.model in config")
        return ChatCompletionsClient(base_url=llm_cfg["base_url"], model=llm_cfg["model"])
    raise AnnotationError(f"unknown annotator backend {backend!r}")
