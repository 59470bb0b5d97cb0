"""Dataset loading, demonstration/pool/test splitting, and synthetic corpora.

The synthetic generator produces records whose token structure drives every
offline component: repeated topic tokens dominate the mock-encoder embedding
(one Gaussian-ish blob per domain), class-vocabulary tokens carry the label
signal, and a unique token supplies per-record jitter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorpusError

_LABEL_ALIASES = {"real": 0, "fake": 1, "0": 0, "1": 1}

# Synthetic text shape. Topic tokens must outweigh the class/jitter tokens so
# that clustering recovers domains rather than finer sub-structure. Each domain
# carries several latent sub-topics with their own class vocabularies: learning
# a domain means covering its sub-topics, which is what makes acquisition
# strategy matter. The repeated anchor keeps the per-(domain, sub-topic, class)
# prototype rule exact at noise 0.
_TOPIC_REPEATS = 8
_SUBTOPICS = 10
_ANCHOR_REPEATS = 4
_CLASS_VOCAB = 8
_CLASS_WORDS = 4
_COMMON_VOCAB = 12
_COMMON_WORDS = 0


@dataclass(frozen=True)
class NewsRecord:
    """One article: unique id, nonempty text, source tag, optional binary label."""

    id: str
    text: str
    source: str
    gold_label: int | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise CorpusError(f"record {self.id!r} has empty text")


@dataclass(frozen=True)
class SplitSpec:
    demo_per_source: int = 100
    pool_frac: float = 0.75
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.pool_frac < 1:
            raise CorpusError(f"pool_frac must be in (0,1), got {self.pool_frac}")
        if self.demo_per_source < 0:
            raise CorpusError("demo_per_source must be >= 0")


@dataclass
class CorpusSplit:
    demo: list[NewsRecord] = field(default_factory=list)
    pool: list[NewsRecord] = field(default_factory=list)
    test: list[NewsRecord] = field(default_factory=list)


def normalize_label(value) -> int:
    key = str(value).strip().lower()
    if key not in _LABEL_ALIASES:
        raise CorpusError(f"unrecognized label {value!r}; expected one of real/fake/0/1")
    return _LABEL_ALIASES[key]


def load_jsonl(path: str | Path, source: str) -> list[NewsRecord]:
    """Read one record per line from a JSON Lines file, tagging each with `source`."""
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"dataset file not found: {path}")
    records: list[NewsRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict) or "id" not in obj or "text" not in obj:
                raise CorpusError(f"{path}:{lineno}: each line needs 'id' and 'text' fields")
            rid = str(obj["id"])
            if rid in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate id {rid!r}")
            seen.add(rid)
            gold = normalize_label(obj["label"]) if "label" in obj and obj["label"] is not None else None
            records.append(NewsRecord(id=rid, text=str(obj["text"]), source=source, gold_label=gold))
    return records


def split(records: list[NewsRecord], spec: SplitSpec) -> CorpusSplit:
    """Partition per source: demo drawn first, then pool_frac/rest of the remainder.

    Pool size is floor(pool_frac * remainder); the leftover goes to test.
    Deterministic for a fixed spec.seed.
    """
    by_source: dict[str, list[NewsRecord]] = {}
    for rec in records:
        by_source.setdefault(rec.source, []).append(rec)

    out = CorpusSplit()
    for source in sorted(by_source):
        group = sorted(by_source[source], key=lambda r: r.id)
        if len(group) < spec.demo_per_source:
            raise CorpusError(
                f"source {source!r} has {len(group)} records, fewer than "
                f"demo_per_source={spec.demo_per_source}"
            )
        rng = np.random.default_rng([spec.seed, _stable_int(source)])
        order = rng.permutation(len(group))
        shuffled = [group[i] for i in order]
        demo = shuffled[: spec.demo_per_source]
        remainder = shuffled[spec.demo_per_source :]
        n_pool = int(np.floor(spec.pool_frac * len(remainder)))
        out.demo.extend(demo)
        out.pool.extend(remainder[:n_pool])
        out.test.extend(remainder[n_pool:])
    return out


def synth_corpus(
    n_domains: int,
    per_domain: int | list[int],
    noise: float,
    seed: int,
) -> list[NewsRecord]:
    """Generate a multi-domain corpus with deterministic latent labels.

    `per_domain` may be a single count or one count per domain (to make some
    domains rare). `noise` flips each stored gold label independently.
    """
    if n_domains < 2:
        raise CorpusError("synth_corpus needs n_domains >= 2")
    if not 0 <= noise <= 0.5:
        raise CorpusError("noise must be in [0, 0.5]")
    if isinstance(per_domain, int):
        sizes = [per_domain] * n_domains
    else:
        sizes = list(per_domain)
        if len(sizes) != n_domains:
            raise CorpusError("per_domain list length must equal n_domains")

    records: list[NewsRecord] = []
    for d, size in enumerate(sizes):
        for i in range(size):
            rng = np.random.default_rng([seed, 11, d, i])
            latent = int(rng.integers(0, 2))
            text = _synth_text(d, i, latent, rng)
            gold = latent
            flip_rng = np.random.default_rng([seed, 7919, d, i])
            if noise > 0 and flip_rng.random() < noise:
                gold = 1 - gold
            records.append(
                NewsRecord(
                    id=f"synth{d}-{i:05d}",
                    text=text,
                    source=f"synth{d}",
                    gold_label=gold,
                )
            )
    return records


def latent_label(record: NewsRecord) -> int | None:
    """Recover the noiseless class of a synthetic record from its vocabulary tokens."""
    votes = [int(tok.split("y")[1][0]) for tok in record.text.split() if _is_class_token(tok)]
    if not votes:
        return None
    return int(round(sum(votes) / len(votes)))


def synth_domain(record: NewsRecord) -> int | None:
    """Extract the topic index of a synthetic record, if present."""
    for tok in record.text.split():
        if tok.startswith("topic") and tok[5:].isdigit():
            return int(tok[5:])
    return None


def synth_group(record: NewsRecord) -> tuple[int, int, int] | None:
    """Latent (domain, sub-topic, class) triple of a synthetic record."""
    for tok in record.text.split():
        if tok.startswith("v") and "s" in tok and "y" in tok and not tok.split("y")[1].startswith("x"):
            head, rest = tok[1:].split("s", 1)
            sub, tail = rest.split("y", 1)
            return int(head), int(sub), int(tail.split("w")[0])
    return None


def _is_class_token(tok: str) -> bool:
    return tok.startswith("v") and "y" in tok and "w" in tok and not tok.split("y")[1].startswith("x")


def _synth_text(d: int, i: int, latent: int, rng: np.random.Generator) -> str:
    sub = int(rng.integers(0, _SUBTOPICS))
    topic = [f"topic{d}"] * _TOPIC_REPEATS
    anchor = [f"v{d}s{sub}y{latent}w0"] * _ANCHOR_REPEATS
    class_idx = rng.choice(np.arange(1, _CLASS_VOCAB + 1), size=_CLASS_WORDS, replace=False)
    common_idx = rng.choice(_COMMON_VOCAB, size=_COMMON_WORDS, replace=False)
    class_words = [f"v{d}s{sub}y{latent}w{j}" for j in sorted(class_idx)]
    common_words = [f"v{d}yxw{j}" for j in sorted(common_idx)]
    return " ".join(topic + anchor + class_words + common_words + [f"u{d}x{i}"])


def _stable_int(text: str) -> int:
    import hashlib

    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big")
