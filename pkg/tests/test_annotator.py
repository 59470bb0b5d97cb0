import numpy as np
import pytest

from veriloop import annotator as ann
from veriloop.annotator import (
    Annotator,
    CostLedger,
    DemoSet,
    Demonstration,
    MockLLM,
    build_prompt,
    parse_label,
    retrieve_demos,
    token_estimate,
)
from veriloop.corpus import synth_corpus, synth_domain
from veriloop.encoder import MockEncoder
from veriloop.errors import AnnotationError, VeriloopError

GOLDEN_PROMPT = (
    "I need your assistance in evaluating the authenticity of a news article. \n"
    "I will provide you the news article. You have to answer only with Fake or Real. \n"
    "I will give you some examples of news. Your answer after [output] should be "
    "consistent with the following examples:\n"
    "\n"
    "[example 1]: \n"
    "[input news]: [news text: moon landing was staged] \n"
    "[output]: [This is Fake news]\n"
    "\n"
    "[example 2]: \n"
    "[input news]: [news text: court approves budget] \n"
    "[output]: [This is Real news]\n"
    "\n"
    "[target news]: \n"
    "[input news]: [news text: aliens endorse candidate]\n"
    "[output]"
)


@pytest.fixture()
def demo_set(encoder):
    return DemoSet(
        encoder,
        [
            Demonstration("moon landing was staged", 1),
            Demonstration("court approves budget", 0),
        ],
    )


class TestRetrieval:
    def test_clamps_to_demo_count(self, demo_set):
        demos = retrieve_demos("any text at all", demo_set, k=5)
        assert len(demos) == 2

    def test_identical_text_ranks_first(self, demo_set):
        demos = retrieve_demos("court approves budget", demo_set, k=1)
        assert demos[0].text == "court approves budget"

    def test_matches_bruteforce_sort(self, encoder):
        rng = np.random.default_rng(0)
        words = [f"w{i}" for i in range(30)]
        texts = [" ".join(rng.choice(words, size=5)) for _ in range(50)]
        store = DemoSet(encoder, [Demonstration(t, i % 2) for i, t in enumerate(texts)])
        query = "w1 w2 w3"
        got = [d.text for d in retrieve_demos(query, store, k=10)]
        qv = encoder.embed(query)
        sims = [float(encoder.embed(t) @ qv) for t in texts]
        expected = [texts[i] for i in np.lexsort((np.arange(50), -np.asarray(sims)))[:10]]
        assert got == expected

    def test_empty_demo_set_rejected(self, encoder):
        with pytest.raises(VeriloopError, match="empty"):
            retrieve_demos("x", DemoSet(encoder, []), k=5)


class TestPrompt:
    def test_golden_knn_prompt(self, demo_set):
        demos = [demo_set.demos[0], demo_set.demos[1]]
        prompt = build_prompt(demos, "aliens endorse candidate", mode="knn")
        assert prompt == GOLDEN_PROMPT

    def test_plain_mode_has_no_examples(self):
        prompt = build_prompt([], "aliens endorse candidate", mode="plain")
        assert "[example" not in prompt
        assert prompt.endswith("[input news]: [news text: aliens endorse candidate]\n[output]")

    def test_deterministic_bytes(self, demo_set):
        a = build_prompt(demo_set.demos, "query text", mode="knn")
        b = build_prompt(demo_set.demos, "query text", mode="knn")
        assert a == b

    def test_knn_requires_demos(self):
        with pytest.raises(VeriloopError):
            build_prompt([], "query", mode="knn")


class TestParse:
    def test_fake_sentence(self):
        assert parse_label("This is Fake news") == 1

    def test_bare_real(self):
        assert parse_label("real") == 0

    def test_first_occurrence_wins(self):
        assert parse_label("not real, definitely FAKE") == 0

    def test_word_boundary(self):
        assert parse_label("realistically unclear") is None

    def test_unparseable(self):
        assert parse_label("no verdict here") is None


class TestLedger:
    def test_one_million_prompt_tokens(self):
        ledger = CostLedger()
        ledger.add_llm_usage(1_000_000, 0)
        assert ledger.cost()["llm_usd"] == 3.00

    def test_prompt_plus_completion(self):
        ledger = CostLedger()
        ledger.add_llm_usage(1_000_000, 1_000_000)
        assert ledger.cost()["llm_usd"] == 9.00

    def test_human_item_120_tokens(self):
        ledger = CostLedger()
        usd = ledger.add_human_item("r1", 120)
        assert usd == 0.33
        assert ledger.cost()["human_usd"] == 0.33

    def test_totals_equal_sum_of_usages(self):
        ledger = CostLedger()
        rng = np.random.default_rng(0)
        usages = [(int(rng.integers(1, 999)), int(rng.integers(1, 99))) for _ in range(50)]
        for p, c in usages:
            ledger.add_llm_usage(p, c)
        assert ledger.llm_prompt_tokens == sum(p for p, _ in usages)
        assert ledger.llm_completion_tokens == sum(c for _, c in usages)

    def test_round_export_schema(self):
        ledger = CostLedger()
        ledger.add_llm_usage(100, 10)
        ledger.add_human_item("r1", 30)
        export = ledger.round_export(3)
        assert set(export) == {"round", "llm_usd", "human_usd", "items"}
        assert export["items"][0]["units"] == 1

    def test_json_roundtrip(self):
        ledger = CostLedger()
        ledger.add_llm_usage(55, 7)
        ledger.add_human_item("a", 120)
        clone = CostLedger.from_json(ledger.to_json())
        assert clone.cost() == ledger.cost()


@pytest.fixture(scope="module")
def synth_pool_and_demos():
    records = synth_corpus(3, 120, 0.0, 5)
    encoder = MockEncoder(dim=16, seed=0)
    by_domain = {d: [r for r in records if synth_domain(r) == d] for d in range(3)}
    demo_records = [r for d in range(3) for r in by_domain[d][:20]]
    pool = [r for d in range(3) for r in by_domain[d][20:87]]
    demos = DemoSet(encoder, [Demonstration(r.text, r.gold_label) for r in demo_records])
    return encoder, demos, pool


class TestMockAnnotation:
    def test_mock_agreement_rate(self, synth_pool_and_demos):
        encoder, demos, pool = synth_pool_and_demos
        ledger = CostLedger()
        worker = Annotator(encoder=encoder, client=MockLLM(accuracy=0.85, seed=1), ledger=ledger, mode="knn")
        hits = 0
        for record in pool:
            result = worker.annotate(record, demos)
            assert result.label in (0, 1)
            assert result.prompt_tokens > 0
            hits += result.label == record.gold_label
        agreement = hits / len(pool)
        assert 0.80 <= agreement <= 0.90

    def test_ledger_tracks_every_call(self, synth_pool_and_demos):
        encoder, demos, pool = synth_pool_and_demos
        ledger = CostLedger()
        worker = Annotator(encoder=encoder, client=MockLLM(accuracy=1.0, seed=1), ledger=ledger)
        results = [worker.annotate(r, demos) for r in pool[:10]]
        assert ledger.llm_prompt_tokens == sum(r.prompt_tokens for r in results)
        assert ledger.llm_completion_tokens == sum(r.completion_tokens for r in results)

    def test_mock_token_rule(self):
        client = MockLLM(accuracy=1.0, seed=0)
        prompt = build_prompt([], "topic0 v0s1y0w0 u0x1", mode="plain")
        result = client.complete(prompt)
        assert result.prompt_tokens == token_estimate(prompt)
        assert result.completion_tokens == token_estimate(result.text)

    def test_detect_equals_annotate(self, synth_pool_and_demos):
        encoder, demos, pool = synth_pool_and_demos
        worker = Annotator(encoder=encoder, client=MockLLM(accuracy=0.7, seed=3), ledger=CostLedger())
        for record in pool[:20]:
            assert worker.detect(record, demos).label == worker.annotate(record, demos).label

    def test_detect_deterministic(self, synth_pool_and_demos):
        encoder, demos, pool = synth_pool_and_demos
        worker = Annotator(encoder=encoder, client=MockLLM(accuracy=0.6, seed=9), ledger=CostLedger())
        a = [worker.detect(r, demos).label for r in pool[:30]]
        b = [worker.detect(r, demos).label for r in pool[:30]]
        assert a == b

    def test_boost_requires_same_topic_demo(self, synth_pool_and_demos):
        encoder, demos, pool = synth_pool_and_demos
        client = MockLLM(accuracy=0.5, boost_accuracy=1.0, seed=2)
        knn = Annotator(encoder=encoder, client=client, ledger=CostLedger(), mode="knn")
        plain = Annotator(encoder=encoder, client=client, ledger=CostLedger(), mode="plain")
        knn_hits = sum(knn.annotate(r, demos).label == r.gold_label for r in pool)
        plain_hits = sum(plain.annotate(r, demos).label == r.gold_label for r in pool)
        assert knn_hits > plain_hits
        assert knn_hits == len(pool)  # retrieval always finds a same-topic demo here


class TestAbstain:
    def test_unparseable_marks_abstain(self, synth_pool_and_demos):
        encoder, demos, pool = synth_pool_and_demos

        class Mumbler:
            def complete(self, prompt):
                return ann.CompletionResult(text="no idea", prompt_tokens=10, completion_tokens=2)

        worker = Annotator(encoder=encoder, client=Mumbler(), ledger=CostLedger())
        result = worker.annotate(pool[0], demos)
        assert result.abstained and result.label is None
        # one reprompt happened
        assert result.prompt_tokens == 20


class TestHttpClient:
    def test_retries_then_raises(self, monkeypatch):
        calls = {"n": 0}

        def fake_post(*args, **kwargs):
            calls["n"] += 1
            raise OSError("connection refused")

        import requests

        monkeypatch.setattr(requests, "post", fake_post)
        client = ann.ChatCompletionsClient("http://localhost:1", "test-model", api_key="k", backoff_s=0.0)
        with pytest.raises(AnnotationError, match="3 attempts"):
            client.complete("prompt")
        assert calls["n"] == 3

    def test_parses_usage(self, monkeypatch):
        class FakeResponse:
            def raise_for_status(self):
                pass

            def json(self):
                return {
                    "choices": [{"message": {"content": "This is Real news"}}],
                    "usage": {"prompt_tokens": 42, "completion_tokens": 5},
                }

        import requests

        monkeypatch.setattr(requests, "post", lambda *a, **k: FakeResponse())
        client = ann.ChatCompletionsClient("http://localhost:1", "m", api_key="k")
        result = client.complete("prompt")
        assert (result.prompt_tokens, result.completion_tokens) == (42, 5)
        assert parse_label(result.text) == 0
