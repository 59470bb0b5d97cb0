"""Round orchestration: sample, annotate, verify, route to humans, merge,
refit the domain space, retrain, and grow the demonstration set — with
persistent, checksummed, resumable run state.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np
import torch

from . import annotator as annotator_mod
from . import domainspace, sampler, verifier
from .annotator import Annotation, Annotator, CostLedger, DemoSet, Demonstration, token_estimate
from .corpus import CorpusSplit, NewsRecord, SplitSpec, load_jsonl, split, synth_corpus
from .encoder import make_encoder
from .errors import ConflictError, MissingInputError, StateError, VeriloopError
from .model import FitResult, ModelConfig, Trainer, evaluate, fit

STATE_VERSION = 1

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "corpus": {"kind": "synth", "n_domains": 3, "per_domain": 300, "noise": 0.0, "paths": {}},
    "split": {"demo_per_source": 20, "pool_frac": 0.75},
    "encoder": {"backend": "mock", "dim": 16, "seed": 0},
    "sampling": {
        "strategy": "domain_aware",
        "M_per_round": 120,
        "epsilon": 1e-6,
        "k_min": 2,
        "k_max": 10,
    },
    "annotator": {
        "mode": "knn",
        "k": 5,
        "backend": "mock",
        "mock": {"accuracy": 0.85, "boost_accuracy": None, "seed": 0},
        "llm": {},
        "rho": 0.2,
        "human": "oracle",
        "demo_confidence": 0.95,
        "demo_cap_factor": 5,
    },
    "verifier": {"folds": 5, "lr": 0.1, "dim": 100, "ngram": 3, "epochs": 5},
    "model": ModelConfig().to_json(),
    "stop": {"max_rounds": 10, "patience": 2, "min_delta": 1e-3},
}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"config file not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        return validate_config(deep_merge(DEFAULT_CONFIG, json.load(fh)))


def apply_overrides(config: dict, overrides: list[str]) -> dict:
    """Apply repeatable `--set dotted.key=value` pairs; values parse as JSON
    when possible and fall back to strings."""
    config = copy.deepcopy(config)
    for item in overrides:
        if "=" not in item:
            raise VeriloopError(f"override {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            if isinstance(node, list):
                node = node[int(part)]
            else:
                node = node.setdefault(part, {})
        last = parts[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    return config


def validate_config(config: dict) -> dict:
    rho = config["annotator"]["rho"]
    if not 0 <= rho <= 1:
        raise VeriloopError(f"annotator.rho must be in [0,1], got {rho}")
    if config["corpus"]["kind"] == "jsonl":
        for source, path in config["corpus"]["paths"].items():
            if not Path(path).exists():
                raise MissingInputError(f"corpus file for source {source!r} not found: {path}")
    ModelConfig.from_json(config["model"])
    return config


def derive_seed(base: int, *parts) -> int:
    key = ":".join([str(base)] + [str(p) for p in parts])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big")


@dataclass
class LabeledExample:
    record_id: str
    text: str
    source: str
    label: int
    provenance: str  # llm | human | gold
    probe_prob: float | None = None
    classifier_prob: float | None = None


def load_corpus(config: dict) -> list[NewsRecord]:
    spec = config["corpus"]
    if spec["kind"] == "synth":
        return synth_corpus(
            n_domains=spec["n_domains"],
            per_domain=spec["per_domain"],
            noise=spec.get("noise", 0.0),
            seed=spec.get("seed", config["seed"]),
        )
    if spec["kind"] == "jsonl":
        records: list[NewsRecord] = []
        for source in sorted(spec["paths"]):
            records.extend(load_jsonl(spec["paths"][source], source))
        return records
    raise VeriloopError(f"unknown corpus kind {spec['kind']!r}")


class Pipeline:
    """Owns all mutable run state. One writer; service submissions go through
    `apply_human_label`, which the HTTP layer serializes with a lock."""

    def __init__(self, config: dict, out_dir: str | Path | None = None):
        self.config = validate_config(deep_merge(DEFAULT_CONFIG, config))
        self.seed = int(self.config["seed"])
        self.out_dir = Path(out_dir) if out_dir else None
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)

        self.encoder = make_encoder(self.config["encoder"])
        self.ledger = CostLedger()
        client = annotator_mod.make_client(self.config["annotator"])
        self.annotator = Annotator(
            encoder=self.encoder,
            client=client,
            ledger=self.ledger,
            mode=self.config["annotator"]["mode"],
            k=self.config["annotator"]["k"],
        )

        records = load_corpus(self.config)
        self.records: dict[str, NewsRecord] = {r.id: r for r in records}
        corpus_split = split(
            records,
            SplitSpec(
                demo_per_source=self.config["split"]["demo_per_source"],
                pool_frac=self.config["split"]["pool_frac"],
                seed=self.seed,
            ),
        )
        self.split: CorpusSplit = corpus_split
        self.pool_remaining: list[str] = sorted(r.id for r in corpus_split.pool)
        self.test_ids: list[str] = sorted(r.id for r in corpus_split.test)

        demo_records = [r for r in corpus_split.demo if r.gold_label is not None]
        self.demo_set = DemoSet(
            self.encoder,
            [Demonstration(text=r.text, label=r.gold_label) for r in demo_records],
        )
        self.demo_texts: set[str] = {d.text for d in self.demo_set.demos}

        self._embedding_cache: dict[str, np.ndarray] = {}
        self.labelled: dict[str, LabeledExample] = {}
        self.round = 0
        self.status = "sampling"
        self.space: domainspace.DomainSpace | None = None
        self.pool_probs: dict[str, float] = {}
        self.metrics: list[dict] = []
        self.val_f1_history: list[float] = []
        self.ledger_history: list[dict] = []
        self.noise_report: verifier.NoiseReport | None = None
        self.human_queue: list[dict] = []
        self.submitted: dict[str, dict] = {}
        self.human_shortfall = 0
        self.trainer: Trainer | None = None
        self.stop_reason: str | None = None
        self._pending: dict | None = None

    # ---------- embeddings ----------

    def embedding(self, record_id: str) -> np.ndarray:
        vec = self._embedding_cache.get(record_id)
        if vec is None:
            vec = self.encoder.embed(self.records[record_id].text)
            self._embedding_cache[record_id] = vec
        return vec

    def _embedding_map(self, ids: list[str]) -> dict[str, np.ndarray]:
        return {rid: self.embedding(rid) for rid in ids}

    # ---------- round loop ----------

    def run_round(self) -> str:
        """One loop iteration. Returns the resulting status: in oracle mode the
        round completes; in interactive mode it may stop at awaiting_human."""
        if self.status == "done":
            raise VeriloopError("run already finished")
        if self.status == "awaiting_human":
            raise VeriloopError("round is waiting on human labels")
        if not self.pool_remaining:
            raise VeriloopError("pool exhausted")
        round_no = self.round + 1

        self.status = "sampling"
        self._refit_space()
        selection = self._select(round_no)

        self.status = "annotating"
        annotations = []
        for rid in selection.selected_ids:
            annotations.append(self.annotator.annotate(self.records[rid], self.demo_set))

        report = self._verify(annotations)
        queue_ids = list(report.human_queue)
        for ann in annotations:
            if ann.abstained and ann.record_id not in queue_ids:
                queue_ids.append(ann.record_id)

        pending = {
            "round": round_no,
            "strategy": selection.strategy,
            "annotations": {a.record_id: a for a in annotations},
            "selected_ids": list(selection.selected_ids),
            "queue_ids": queue_ids,
            "human_labels": {},
        }
        self.noise_report = report
        self._pending = pending

        human_mode = self.config["annotator"].get("human", "oracle")
        if queue_ids and human_mode == "interactive":
            self._build_queue_tasks(queue_ids, report)
            self.status = "awaiting_human"
            return self.status
        if queue_ids:
            self._resolve_queue_with_oracle(queue_ids)
        return self._finish_round()

    def _refit_space(self, force: bool = False) -> None:
        fit_ids = sorted(set(self.pool_remaining) | set(self.labelled))
        if not force and self.space is not None and set(self.space.assignments) == set(fit_ids):
            return
        points = np.vstack([self.embedding(rid) for rid in fit_ids])
        warm_k = self.space.k if self.space is not None else None
        warm_sil = self.space.silhouette if self.space is not None else None
        self.space = domainspace.fit(
            points,
            k_min=self.config["sampling"]["k_min"],
            k_max=self.config["sampling"]["k_max"],
            seed=derive_seed(self.seed, "space"),
            ids=fit_ids,
            warm_k=warm_k,
            warm_silhouette=warm_sil,
        )

    def _select(self, round_no: int) -> sampler.AcquisitionResult:
        cfg = self.config["sampling"]
        m_total = min(int(cfg["M_per_round"]), len(self.pool_remaining))
        strategy = cfg["strategy"]
        assert self.space is not None
        if strategy == "domain_aware":
            weights = sampler.cluster_weights(self.space, self.pool_remaining, cfg["epsilon"])
            capacities = [0] * self.space.k
            for rid in self.pool_remaining:
                capacities[self.space.assignments[rid]] += 1
            allocation = sampler.allocate(m_total, weights, capacities)
            if round_no == 1 or not self.pool_probs:
                return sampler.cold_start_select(
                    self.space, self.pool_remaining, self._embedding_map(self.pool_remaining), allocation
                )
            return sampler.entropy_select(self.space, self.pool_remaining, allocation, self.pool_probs)
        probs = self.pool_probs if self.pool_probs else None
        if strategy in ("max_entropy", "least_confidence") and not probs:
            # no classifier yet: fall back to a seeded random cold start
            return sampler.baseline_select(
                "random", self.pool_remaining, m_total, seed=derive_seed(self.seed, "acquire", round_no)
            )
        return sampler.baseline_select(
            strategy,
            self.pool_remaining,
            m_total,
            probs=probs,
            embeddings=self._embedding_map(self.pool_remaining),
            seed=derive_seed(self.seed, "acquire", round_no),
        )

    def _verify(self, annotations: list) -> verifier.NoiseReport:
        """Confident learning over the LLM-labelled portion of the labelled set
        (human-corrected labels are trusted and skipped)."""
        items: list[tuple[str, str, int]] = []
        for ex in self.labelled.values():
            if ex.provenance == "llm":
                items.append((ex.record_id, ex.text, ex.label))
        for ann in annotations:
            if ann.label is not None:
                items.append((ann.record_id, self.records[ann.record_id].text, ann.label))
        empty = verifier.NoiseReport(
            thresholds=[], confident_joint=[], q_hat=[], flagged=[], human_queue=[]
        )
        if not items:
            return empty
        items.sort(key=lambda t: t[0])
        ids = [t[0] for t in items]
        texts = [t[1] for t in items]
        labels = np.asarray([t[2] for t in items], dtype=np.int64)
        vcfg = self.config["verifier"]
        try:
            report = verifier.verify(
                texts,
                labels,
                ids,
                rho=self.config["annotator"]["rho"],
                folds=vcfg["folds"],
                seed=derive_seed(self.seed, "verify"),
                probe_kwargs={
                    "dim": vcfg["dim"],
                    "lr": vcfg["lr"],
                    "ngram": vcfg["ngram"],
                    "epochs": vcfg.get("epochs", 5),
                },
            )
        except VeriloopError:
            # not enough samples per class yet for cross-validation
            return empty
        return report

    def _build_queue_tasks(self, queue_ids: list[str], report: verifier.NoiseReport) -> None:
        assert self._pending is not None
        tasks = []
        for rank, rid in enumerate(queue_ids):
            record = self.records[rid]
            ann = self._pending["annotations"].get(rid)
            llm_label = ann.label if ann is not None else self.labelled[rid].label
            neighbors = [
                {"text": d.text, "label": d.label}
                for d in annotator_mod.retrieve_demos(record.text, self.demo_set, k=3)
            ]
            tasks.append(
                {
                    "record_id": rid,
                    "text": record.text,
                    "llm_label": llm_label,
                    "probe_self_probability": report.self_probs.get(rid),
                    "neighbors": neighbors,
                    "flagged_rank": rank,
                }
            )
        self.human_queue = tasks

    def _resolve_queue_with_oracle(self, queue_ids: list[str]) -> None:
        assert self._pending is not None
        for rid in queue_ids:
            gold = self.records[rid].gold_label
            if gold is None:
                self.human_shortfall += 1
                continue
            self.ledger.add_human_item(rid, token_estimate(self.records[rid].text))
            self._pending["human_labels"][rid] = {"label": gold, "annotator": "oracle"}

    def apply_human_label(self, record_id: str, label, annotator_id: str = "human") -> dict:
        """Submit one human correction. Idempotent on identical resubmission;
        a different label for an already-submitted record is a conflict. When
        the queue drains, the round resumes automatically."""
        if self.status != "awaiting_human" or self._pending is None:
            raise VeriloopError("no human annotation is pending")
        label_int = _parse_human_label(label)
        previous = self.submitted.get(record_id)
        if previous is not None:
            if previous["label"] == label_int:
                return {"queue_size": len(self.human_queue), "status": self.status}
            raise ConflictError(
                f"record {record_id!r} already labelled {previous['label']} by {previous['annotator']}"
            )
        task = next((t for t in self.human_queue if t["record_id"] == record_id), None)
        if task is None:
            raise VeriloopError(f"record {record_id!r} is not in the human queue")
        self.ledger.add_human_item(record_id, token_estimate(self.records[record_id].text))
        self.submitted[record_id] = {"label": label_int, "annotator": annotator_id}
        self._pending["human_labels"][record_id] = {"label": label_int, "annotator": annotator_id}
        self.human_queue = [t for t in self.human_queue if t["record_id"] != record_id]
        if not self.human_queue:
            self.submitted = {}
            self._finish_round()
        return {"queue_size": len(self.human_queue), "status": self.status}

    def _finish_round(self) -> str:
        assert self._pending is not None
        pending = self._pending
        round_no = pending["round"]
        self.status = "training"

        human_labels = pending["human_labels"]
        new_count = 0
        human_count = 0
        for rid in pending["selected_ids"]:
            ann = pending["annotations"][rid]
            record = self.records[rid]
            override = human_labels.get(rid)
            if override is not None:
                label, provenance = override["label"], "human"
            elif ann.label is not None:
                label, provenance = ann.label, "llm"
            else:
                self.human_shortfall += 1
                continue
            human_count += 1 if provenance == "human" else 0
            self.labelled[rid] = LabeledExample(
                record_id=rid,
                text=record.text,
                source=record.source,
                label=int(label),
                provenance=provenance,
            )
            new_count += 1
        # corrections for previously-labelled records flagged again
        for rid, override in human_labels.items():
            if rid in self.labelled and rid not in pending["annotations"]:
                ex = self.labelled[rid]
                if ex.provenance != "human":
                    ex.label = int(override["label"])
                    ex.provenance = "human"
                    human_count += 1
        pool_set = set(self.pool_remaining) - set(pending["selected_ids"])
        self.pool_remaining = sorted(pool_set)

        self._refit_space(force=True)
        assert self.space is not None

        fit_result = self._train(round_no)
        self.trainer = fit_result.trainer
        self.val_f1_history.append(fit_result.val_macro_f1)

        self.pool_probs = self._predict_map(self.pool_remaining)
        test_metrics = self._evaluate_test()
        self._grow_demo_set()

        cost = self.ledger.cost()
        entry = {
            "round": round_no,
            "per_source": test_metrics["per_source"],
            "macro_f1": test_metrics["macro_f1"],
            "cost": cost,
            "flagged": len(self.noise_report.flagged) if self.noise_report else 0,
            "human_labeled": human_count,
            "val_macro_f1": fit_result.val_macro_f1,
            "strategy": pending["strategy"],
            "new_labeled": new_count,
        }
        self.metrics.append(entry)
        self.ledger_history.append(self.ledger.round_export(round_no))
        self.round = round_no
        self._pending = None
        self.human_queue = []

        stop, reason = self.should_stop()
        if stop:
            self.status = "done"
            self.stop_reason = reason
        else:
            self.status = "sampling"
        if self.out_dir:
            self.save_state(self.out_dir / "state.json")
            self._write_artifacts()
        return self.status

    def _train(self, round_no: int) -> FitResult:
        assert self.space is not None
        examples = [self.labelled[rid] for rid in sorted(self.labelled)]
        feats = np.vstack([self.embedding(ex.record_id) for ex in examples])
        targets = np.vstack(
            [domainspace.membership(self.embedding(ex.record_id), self.space) for ex in examples]
        )
        labels = np.asarray([ex.label for ex in examples], dtype=np.int64)
        sources = [ex.source for ex in examples]
        config = ModelConfig.from_json(self.config["model"])
        return fit(feats, labels, targets, sources, config, seed=derive_seed(self.seed, "model", round_no))

    def _predict_map(self, ids: list[str]) -> dict[str, float]:
        if not ids or self.trainer is None:
            return {}
        feats = np.vstack([self.embedding(rid) for rid in ids])
        probs = self.trainer.predict_probs(feats)
        return {rid: float(p) for rid, p in zip(ids, probs)}

    def _evaluate_test(self) -> dict:
        test = [self.records[rid] for rid in self.test_ids]
        if not test or any(r.gold_label is None for r in test):
            return {"per_source": {}, "macro_f1": None}
        probs = self._predict_map(self.test_ids)
        y_true = np.asarray([r.gold_label for r in test], dtype=np.int64)
        y_prob = np.asarray([probs[r.id] for r in test])
        return evaluate(y_true, y_prob, [r.source for r in test])

    def _grow_demo_set(self) -> None:
        """Promote confidently-labelled examples into the demonstration pool:
        classifier confident and agreeing with both the stored label and the
        probe, capped at a multiple of the initial demo size."""
        cap = self.config["annotator"]["demo_cap_factor"] * max(self.demo_set.initial_size, 1)
        threshold = self.config["annotator"]["demo_confidence"]
        if len(self.demo_set) >= cap or self.trainer is None or self.noise_report is None:
            return
        flagged = set(self.noise_report.flagged)
        candidates = []
        labelled_probs = self._predict_map(sorted(self.labelled))
        for rid, ex in self.labelled.items():
            p = labelled_probs.get(rid)
            if p is None:
                continue
            ex.classifier_prob = p
            ex.probe_prob = self.noise_report.self_probs.get(rid)
            if ex.text in self.demo_texts:
                continue
            classifier_label = int(p >= 0.5)
            confidence = max(p, 1 - p)
            probe_agrees = rid not in flagged and (ex.probe_prob is None or ex.probe_prob >= 0.5)
            if confidence >= threshold and classifier_label == ex.label and probe_agrees:
                candidates.append((-confidence, rid))
        for _, rid in sorted(candidates):
            if len(self.demo_set) >= cap:
                break
            ex = self.labelled[rid]
            self.demo_set.add(ex.text, ex.label)
            self.demo_texts.add(ex.text)

    # ---------- stopping ----------

    def should_stop(self) -> tuple[bool, str]:
        stop_cfg = self.config["stop"]
        if self.round >= int(stop_cfg["max_rounds"]):
            return True, "max_rounds"
        if not self.pool_remaining:
            return True, "pool_exhausted"
        patience = int(stop_cfg["patience"])
        min_delta = float(stop_cfg["min_delta"])
        history = self.val_f1_history
        if len(history) >= patience + 1:
            # a round "improves" when it beats the best F1 seen before it by
            # more than min_delta (boundary tolerance absorbs float error)
            stalled = all(
                history[i] - max(history[:i]) <= min_delta + 1e-12
                for i in range(len(history) - patience, len(history))
            )
            if stalled:
                return True, "plateau"
        return False, ""

    def run(self, max_rounds: int | None = None) -> list[dict]:
        """Drive rounds until should_stop (oracle mode) or awaiting_human."""
        while self.status not in ("done", "awaiting_human"):
            stop, reason = self.should_stop()
            if stop:
                self.status = "done"
                self.stop_reason = reason
                if self.out_dir:
                    self.save_state(self.out_dir / "state.json")
                break
            self.run_round()
            if max_rounds is not None and self.round >= max_rounds:
                break
        return self.metrics

    # ---------- persistence ----------

    def status_summary(self) -> dict:
        return {
            "round": self.round,
            "status": self.status,
            "metrics": self.metrics,
            "cost": self.ledger.cost(),
            "stop_reason": self.stop_reason,
            "labelled": len(self.labelled),
            "pool_remaining": len(self.pool_remaining),
            "queue_size": len(self.human_queue),
        }

    def _state_payload(self) -> dict:
        pending = None
        if self._pending is not None:
            pending = {
                "round": self._pending["round"],
                "strategy": self._pending["strategy"],
                "selected_ids": self._pending["selected_ids"],
                "queue_ids": self._pending["queue_ids"],
                "human_labels": self._pending["human_labels"],
                "annotations": {
                    rid: asdict(ann) for rid, ann in self._pending["annotations"].items()
                },
            }
        return {
            "version": STATE_VERSION,
            "config_fingerprint": _fingerprint(self.config),
            "round": self.round,
            "status": self.status,
            "stop_reason": self.stop_reason,
            "labelled": [asdict(ex) for ex in (self.labelled[rid] for rid in sorted(self.labelled))],
            "pool_remaining": self.pool_remaining,
            "demo": [{"text": d.text, "label": d.label} for d in self.demo_set.demos],
            "demo_initial_size": self.demo_set.initial_size,
            "metrics": self.metrics,
            "val_f1_history": self.val_f1_history,
            "ledger": self.ledger.to_json(),
            "ledger_history": self.ledger_history,
            "noise_report": self.noise_report.to_json() if self.noise_report else None,
            "human_queue": self.human_queue,
            "submitted": self.submitted,
            "human_shortfall": self.human_shortfall,
            "pool_probs": self.pool_probs,
            "space": self.space.to_json() if self.space else None,
            "pending": pending,
        }

    def save_state(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = self._state_payload()
        if self.trainer is not None:
            ckpt = path.with_name(f"checkpoint_round{self.round}.pt")
            torch.save(
                {
                    "round": self.round,
                    "input_dim": self.trainer.model.input_dim,
                    "domain_dim": self.trainer.model.domain_dim,
                    "model_config": self.trainer.config.to_json(),
                    "state": self.trainer.state_dict(),
                },
                ckpt,
            )
            payload["checkpoint"] = ckpt.name
        else:
            payload["checkpoint"] = None
        body = json.dumps(payload, sort_keys=True)
        envelope = {"checksum": hashlib.sha256(body.encode("utf-8")).hexdigest(), "state": payload}
        with path.open("w", encoding="utf-8") as fh:
            json.dump(envelope, fh, sort_keys=True)

    @classmethod
    def load_state(cls, path: str | Path, config: dict, out_dir: str | Path | None = None) -> "Pipeline":
        path = Path(path)
        if not path.exists():
            raise StateError(f"state file not found: {path}")
        with path.open("r", encoding="utf-8") as fh:
            envelope = json.load(fh)
        if "checksum" not in envelope or "state" not in envelope:
            raise StateError("state file missing checksum envelope")
        payload = envelope["state"]
        body = json.dumps(payload, sort_keys=True)
        if hashlib.sha256(body.encode("utf-8")).hexdigest() != envelope["checksum"]:
            raise StateError("state checksum mismatch: file is corrupt or was edited")
        if payload.get("version") != STATE_VERSION:
            raise StateError(f"unsupported state version {payload.get('version')}")

        pipe = cls(config, out_dir=out_dir)
        if payload["config_fingerprint"] != _fingerprint(pipe.config):
            raise StateError("state was produced by a different configuration")
        pipe.round = payload["round"]
        pipe.status = payload["status"]
        pipe.stop_reason = payload["stop_reason"]
        pipe.labelled = {
            ex["record_id"]: LabeledExample(**ex) for ex in payload["labelled"]
        }
        pipe.pool_remaining = list(payload["pool_remaining"])
        pipe.demo_set = DemoSet(
            pipe.encoder, [Demonstration(text=d["text"], label=d["label"]) for d in payload["demo"]]
        )
        pipe.demo_set.initial_size = payload["demo_initial_size"]
        pipe.demo_texts = {d.text for d in pipe.demo_set.demos}
        pipe.metrics = payload["metrics"]
        pipe.val_f1_history = payload["val_f1_history"]
        pipe.ledger = CostLedger.from_json(payload["ledger"])
        pipe.annotator.ledger = pipe.ledger
        pipe.ledger_history = payload["ledger_history"]
        pipe.noise_report = (
            verifier.NoiseReport.from_json(payload["noise_report"]) if payload["noise_report"] else None
        )
        pipe.human_queue = payload["human_queue"]
        pipe.submitted = payload["submitted"]
        pipe.human_shortfall = payload["human_shortfall"]
        pipe.pool_probs = {k: float(v) for k, v in payload["pool_probs"].items()}
        pipe.space = domainspace.DomainSpace.from_json(payload["space"]) if payload["space"] else None
        if payload.get("pending"):
            pend = payload["pending"]
            pipe._pending = {
                "round": pend["round"],
                "strategy": pend["strategy"],
                "selected_ids": pend["selected_ids"],
                "queue_ids": pend["queue_ids"],
                "human_labels": pend["human_labels"],
                "annotations": {rid: Annotation(**ann) for rid, ann in pend["annotations"].items()},
            }
        if payload.get("checkpoint"):
            ckpt_path = path.with_name(payload["checkpoint"])
            if ckpt_path.exists():
                blob = torch.load(ckpt_path, weights_only=False)
                trainer = Trainer(
                    blob["input_dim"],
                    blob["domain_dim"],
                    ModelConfig.from_json(blob["model_config"]),
                    seed=derive_seed(pipe.seed, "model", blob["round"]),
                )
                trainer.load_state_dict(blob["state"])
                pipe.trainer = trainer
        return pipe

    def _write_artifacts(self) -> None:
        assert self.out_dir is not None
        with (self.out_dir / "metrics.jsonl").open("w", encoding="utf-8") as fh:
            for entry in self.metrics:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
        with (self.out_dir / "ledger.jsonl").open("w", encoding="utf-8") as fh:
            for entry in self.ledger_history:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


def _parse_human_label(label) -> int:
    if isinstance(label, bool):
        raise VeriloopError("label must be 'fake', 'real', 0, or 1")
    if isinstance(label, int) and label in (0, 1):
        return label
    if isinstance(label, str):
        lowered = label.strip().lower()
        if lowered in ("fake", "1"):
            return 1
        if lowered in ("real", "0"):
            return 0
    raise VeriloopError(f"label must be 'fake', 'real', 0, or 1; got {label!r}")


def _fingerprint(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()[:16]
