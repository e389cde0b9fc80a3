"""Acceptance criteria, one test each; results are listed in the terminal summary."""

import json
import os
import random
import time

import pytest

import test_annotate as ta
import test_attributes as tattr
import test_evaluate as tev
import test_llm_gateway as tgw
import test_personality as tp
from duplexpersona.annotate import annotate_document, build_responses, integrate_laughs
from duplexpersona.attributes import bucketize
from duplexpersona.classify import (
    LexiconMock,
    build_backchannel_prompt,
    finalize,
    parse_verdict,
)
from duplexpersona.core import TRAITS, LLMSettings, PipelineConfig, TraitLabel, label_to_score
from duplexpersona.evaluate import (
    label_similarity,
    pearson,
)
from duplexpersona.ingest import parse_transcript, serialize_transcript
from duplexpersona.llm_gateway import (
    ChatRequest,
    HttpChatClient,
    MockChatClient,
    extract_trailing_json,
)
from duplexpersona.personality import build_personality_prompt, predict_personality
from duplexpersona.synth import (
    Profile,
    brute_force_labels,
    brute_force_overlaps,
    candidate_view,
    generate_conversation,
)

from conftest import boundary_fixture_counts, run_pipeline, tree_bytes

CFG = PipelineConfig()


@pytest.mark.criterion("segmentation/overlap oracle: 1000 conversations, 100% label agreement, boundary fixtures, < 30 s")
def test_segmentation_overlap_oracle():
    t0 = time.monotonic()
    mismatches = []
    n_responses = 0
    fixtures = dict.fromkeys(boundary_fixture_counts(generate_conversation(0)[1]), 0)
    emotion, sentiment = LexiconMock("emotion"), LexiconMock("sentiment")
    for seed in range(1000):
        doc, truth = generate_conversation(seed, Profile(duration_s=60))
        conv = annotate_document(parse_transcript(serialize_transcript(doc)), CFG)
        a = [r for r in conv.responses if r.speaker == "A"]
        b = [r for r in conv.responses if r.speaker == "B"]
        ok = (
            list(conv.overlaps) == brute_force_overlaps(a, b, CFG.min_overlap_s)
            and {r.id: r.label for r in conv.responses} == brute_force_labels(conv.responses, CFG.min_overlap_s)
            and conv.responses == candidate_view(truth).responses
            and finalize(conv, MockChatClient(0), emotion, sentiment, CFG).responses == truth.responses
        )
        if not ok:
            mismatches.append(seed)
        n_responses += len(conv.responses)
        for k, v in boundary_fixture_counts(truth).items():
            fixtures[k] += v
    elapsed = time.monotonic() - t0
    print(f"{n_responses} responses, {len(mismatches)} mismatching conversations, fixtures {fixtures}, {elapsed:.1f} s")
    assert mismatches == []
    assert all(v > 0 for v in fixtures.values()), fixtures
    assert elapsed < 30


@pytest.mark.criterion("laugh integration: wrap/standalone cases exact, pairing invariant on 1000 fuzzed inputs")
def test_laugh_integration():
    ta.test_laugh_over_words_wraps_them()
    ta.test_laugh_without_words_is_standalone()
    rng = random.Random(20241)
    for _ in range(1000):
        words, laughs = ta._random_channel(rng)
        out = integrate_laughs(words, laughs)
        ta._check_pairs(out)
        for r in build_responses(out, CFG.gap_threshold_s):
            ta._check_pairs(r.tokens)


@pytest.mark.criterion("bucketizer: equals independent implementation on 500 cohorts, 200 invariance checks")
def test_bucketizer():
    rng = random.Random(31337)
    for _ in range(500):
        cohort = tattr._random_cohort(rng)
        for i in range(len(cohort)):
            assert bucketize(cohort, i) is tattr._oracle(cohort, i), (cohort, i)
    for _ in range(200):
        cohort = [rng.randint(0, 1000) for _ in range(rng.randint(4, 20))]
        shift, scale = rng.randint(-10**6, 10**6), rng.randint(1, 100)
        for i in range(len(cohort)):
            base = bucketize(cohort, i)
            assert bucketize([v + shift for v in cohort], i) is base
            assert bucketize([v * scale for v in cohort], i) is base


@pytest.mark.criterion("score mapping 100/50/0/-50/-100 exact; five-query fixture [100,50,50,0,100] averages to 60")
def test_score_mapping():
    got = [label_to_score(lbl) for lbl in TraitLabel]
    assert got == [100, 50, 0, -50, -100]
    labels = ("highly aligned", "aligned", "aligned", "neutral", "highly aligned")
    pred = predict_personality(tp.Sequenced([tp._labels(x) for x in labels]), "p", 5)
    assert pred.scores["extraversion"] == 60


@pytest.mark.criterion("metric fixtures: single-cell +/-1 exact, 3-speaker fixture to 1e-9, pearson oracle 1e-12, cosine 1/-1")
def test_metric_fixtures():
    for value, expected in ((66.0, 1.0), (-66.0, -1.0)):
        tev.test_single_cell_fixture(value, expected)
    tev.test_three_speaker_hand_fixture()
    rng = random.Random(5150)
    for _ in range(100):
        x = [rng.gauss(0, 50) for _ in range(100)]
        y = [0.3 * a + rng.gauss(0, 40) for a in x]
        assert abs(pearson(x, y) - tev._textbook_r(x, y)) < 1e-12
    vec = {"s1": dict(zip(TRAITS, (100, -50, 50, 0, 10)))}
    assert label_similarity(vec, vec)["cosine"] == 1.0
    assert label_similarity({"s1": {t: -v for t, v in vec["s1"].items()}}, vec)["cosine"] == -1.0


@pytest.mark.criterion("prompt goldens: target marker and template sections, trait prompt sections, toggles remove exactly their section")
def test_prompt_goldens(appendix_conversation, appendix_speaker):
    target = appendix_conversation.response("A-0001")
    prompt = build_backchannel_prompt(appendix_conversation, target, CFG)
    assert "{{{(TARGET) Speaker A: yeah}}}" in prompt
    assert "Your task is to classify the type of backchannel." in prompt
    import test_classify

    test_classify.test_appendix_prompt_golden(appendix_conversation)
    tp.test_prompt_sections_and_formatting(appendix_speaker)
    tp.test_prompt_golden(appendix_speaker)
    for dropped in ("samples", "basics", "emotion", "sentiment"):
        tp.test_toggle_removes_exactly_its_section(appendix_speaker, dropped)
    assert "(average: " in build_personality_prompt(*appendix_speaker)


@pytest.mark.criterion("end-to-end determinism: synth, annotate, attributes, predict, eval byte-identical twice, 10 conversations < 60 s")
def test_end_to_end_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    t0 = time.monotonic()
    assert run_pipeline(tmp_path / "r1", seed=7, count=10) == [0] * 5
    elapsed = time.monotonic() - t0
    assert run_pipeline(tmp_path / "r2", seed=7, count=10) == [0] * 5
    a, b = tree_bytes(tmp_path / "r1"), tree_bytes(tmp_path / "r2")
    assert a == b
    assert len(json.loads(a[os.path.join("e", "metrics.json")])["trend"]["per_trait"]) == 5
    print(f"{len(a)} files, first run {elapsed:.2f} s")
    assert elapsed < 60


@pytest.mark.criterion("gateway robustness: 429 retry, deadline enforcement, trailing JSON on 500 fuzzed prefixes")
def test_gateway_robustness():
    tgw.test_retry_after_429_then_success()
    tgw.test_deadline_enforced_on_slow_server()
    tgw.test_deadline_bounds_retry_loop()
    rng = random.Random(424242)
    recovered = 0
    for _ in range(500):
        text, obj = tgw.fuzz_case(rng)
        recovered += extract_trailing_json(text) == obj
    assert recovered == 500


_LIVE = os.environ.get("DUPLEXPERSONA_ENDPOINT") and os.environ.get("DUPLEXPERSONA_API_KEY")


@pytest.mark.live
@pytest.mark.criterion("live smoke: one backchannel verdict and one trait prediction from a configured endpoint")
@pytest.mark.skipif(not _LIVE, reason="set DUPLEXPERSONA_ENDPOINT and DUPLEXPERSONA_API_KEY to run")
def test_live_smoke(appendix_conversation, appendix_speaker):
    settings = LLMSettings(endpoint=os.environ["DUPLEXPERSONA_ENDPOINT"], model=os.environ.get("DUPLEXPERSONA_MODEL") or CFG.llm.model)
    client = HttpChatClient(settings)
    target = appendix_conversation.response("A-0001")
    prompt = build_backchannel_prompt(appendix_conversation, target, CFG)
    reply = client.complete(ChatRequest.user(prompt, model=settings.model, temperature=0.0, max_tokens=2048, tag="smoke"))
    parse_verdict(reply)
    pred = predict_personality(client, build_personality_prompt(*appendix_speaker), 1, CFG)
    assert set(pred.scores) == set(TRAITS)
