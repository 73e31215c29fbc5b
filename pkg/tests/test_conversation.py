import json

import numpy as np
import pytest

from graspkit.codec import BinVector, TokenVocabulary, compute_bounds, detokenize, extract_stream
from graspkit.contact import ContactSummary, render_summary
from graspkit.conversation import (GraspItem, TemplateError, TemplateSet,
                                   build_sample, fill_template, polish_hook, question_set,
                                   sample_to_json)
from graspkit.kinematics import BUNDLED_HANDS, GraspPose, load_bundled_hand

TEMPLATES = TemplateSet.load()
VOCAB = TokenVocabulary(BUNDLED_HANDS)
GLASS = ContactSummary("detailed", "glass", ("thumb", "index"), (("thumb", "rim"), ("index", "body")))
HAMMER = ContactSummary("general", "hammer", ("index", "middle", "ring", "thumb"),
                        (("thumb", "grip"), ("index", "grip"), ("middle", "grip"), ("ring", "grip")))


def spec(hand, N=384):
    h = load_bundled_hand(hand)
    rng = np.random.default_rng(0)
    poses = [GraspPose(hand, rng.uniform(-0.2, 0.2, 3), rng.uniform(-2, 2, 3),
                       rng.uniform(h.lower, h.upper)) for _ in range(20)]
    return compute_bounds(poses, N)


def item(hand="shadow", gid="g0", summary=GLASS, obj="glass", fill=3):
    s = spec(hand)
    return GraspItem(gid, hand, load_bundled_hand(hand).label, obj, summary,
                     BinVector(hand, np.full(s.ndim, fill)), 0.2, 384, s.corpus_hash)


def test_template_examples():
    assert fill_template("low", "glass", "Shadow Hand", None, TEMPLATES, 0, 0) == \
        "How do you grasp the glass using the Shadow Hand?"
    assert fill_template("mid", "glass", "Shadow Hand", GLASS, TEMPLATES, 0, 0) == \
        "How do you grasp the rim of the glass using the Shadow Hand?"
    high = fill_template("high", "glass", "Shadow Hand", GLASS, TEMPLATES, 0, 0)
    assert high == ("Demonstrate the ideal pose of the Shadow Hand to grasp the glass: "
                    "The thumb contacts the glass's rim; the index finger contacts the glass's body.")
    assert HAMMER.text == "Four fingers grasp the grip of the hammer."


@pytest.mark.parametrize("seed", range(20))
def test_levels_carry_the_right_information(seed):
    low = fill_template("low", "glass", "Shadow Hand", GLASS, TEMPLATES, seed)
    mid = fill_template("mid", "glass", "Shadow Hand", GLASS, TEMPLATES, seed)
    high = fill_template("high", "glass", "Shadow Hand", GLASS, TEMPLATES, seed)
    assert "rim" not in low and "contacts" not in low
    assert "rim" in mid and "contacts" not in mid
    assert GLASS.clause in high


def test_fill_template_errors():
    with pytest.raises(ValueError):
        fill_template("extreme", "glass", "Shadow Hand", GLASS, TEMPLATES, 0)
    with pytest.raises(TemplateError):
        fill_template("mid", "glass", "Shadow Hand", None, TEMPLATES, 0)


def test_template_set_validation():
    doc = json.loads(json.dumps({"questions": {lv: list(v) for lv, v in TEMPLATES.questions.items()},
                                 "answers": list(TEMPLATES.answers),
                                 "caption_questions": list(TEMPLATES.caption_questions)}))
    TemplateSet.from_dict(doc)
    bad = json.loads(json.dumps(doc))
    bad["questions"]["low"] = ["Grasp the {part} of the {object}."]
    with pytest.raises(TemplateError):
        TemplateSet.from_dict(bad)
    bad = json.loads(json.dumps(doc))
    bad["answers"] = ["no stream here"]
    with pytest.raises(TemplateError):
        TemplateSet.from_dict(bad)
    bad = json.loads(json.dumps(doc))
    bad["questions"]["high"] = []
    with pytest.raises(TemplateError):
        TemplateSet.from_dict(bad)


@pytest.mark.parametrize("seed", range(30))
def test_question_set_size_and_distinct(seed):
    qs = question_set("glass", "Shadow Hand", GLASS, TEMPLATES, seed)
    assert 5 <= len(qs) <= 10
    assert len({q for _, q in qs}) == len(qs)
    assert {lv for lv, _ in qs} == {"low", "mid", "high"}


def test_question_set_level_filter():
    qs = question_set("glass", "Panda Gripper", GLASS, TEMPLATES, 1, levels=("low", "mid"))
    assert {lv for lv, _ in qs} <= {"low", "mid"}
    assert question_set("glass", "Panda Gripper", GLASS, TEMPLATES, 1, levels=("low", "mid")) == qs


def test_single_grasp_roundtrip():
    s = spec("shadow")
    sample = build_sample("single_grasp", [item()], TEMPLATES, VOCAB, seed=4, level="high")
    assert [t.role for t in sample.turns] == ["user", "assistant"]
    assert sample.stage == "alignment"
    decoded = detokenize(extract_stream(sample.turns[1].text), VOCAB, {"shadow": s})
    assert decoded.bins == item().bins and decoded.pose.hand == "shadow"
    assert GLASS.clause in sample.turns[0].text


def test_multi_grasp_different_hands():
    specs = {"shadow": spec("shadow"), "allegro": spec("allegro")}
    bundle = [item("shadow", "a"), item("allegro", "b", fill=9)]
    sample = build_sample("multi_grasp", bundle, TEMPLATES, VOCAB, seed=2, level="mid")
    assert len(sample.turns) == 4
    streams = [t.stream for t in sample.turns if t.role == "assistant"]
    assert streams[0].startswith("<hand:shadow>") and streams[1].startswith("<hand:allegro>")
    for t, g in zip([t for t in sample.turns if t.role == "assistant"], bundle):
        assert detokenize(extract_stream(t.text), VOCAB, specs).bins == g.bins
    meta = sample.to_dict()["meta"]
    assert [g["hand"] for g in meta["grasps"]] == ["shadow", "allegro"]


def test_multi_mix_caption_first():
    sample = build_sample("multi_mix", [item()], TEMPLATES, VOCAB, seed=0,
                          caption="A clear drinking glass.")
    assert sample.turns[0].role == "user" and sample.turns[0].text in TEMPLATES.caption_questions
    assert sample.turns[1].text == "A clear drinking glass." and sample.turns[1].stream is None
    assert "<hand:" not in sample.turns[0].text + sample.turns[1].text
    assert sample.turns[3].stream is not None


def test_build_sample_errors():
    with pytest.raises(ValueError):
        build_sample("single_grasp", [item(), item()], TEMPLATES, VOCAB, 0)
    with pytest.raises(ValueError):
        build_sample("multi_grasp", [item()], TEMPLATES, VOCAB, 0)
    with pytest.raises(ValueError):
        build_sample("multi_mix", [item()], TEMPLATES, VOCAB, 0)
    with pytest.raises(ValueError):
        build_sample("story", [item()], TEMPLATES, VOCAB, 0)
    with pytest.raises(ValueError):
        build_sample("single_grasp", [item()], TEMPLATES, VOCAB, 0, questions=["a", "b"])


def test_question_override_keeps_answer():
    a = build_sample("single_grasp", [item()], TEMPLATES, VOCAB, seed=5)
    b = build_sample("single_grasp", [item()], TEMPLATES, VOCAB, seed=5, questions=["Grasp it."])
    assert b.turns[0].text == "Grasp it." and b.turns[1] == a.turns[1]


def test_polish_hook_rejects_mutated_stream(caplog):
    sample = build_sample("single_grasp", [item()], TEMPLATES, VOCAB, seed=1)
    text = sample.turns[1].text
    mutated = polish_hook(text, lambda t: t.replace("<bin:3>", "<bin:4>", 1))
    assert mutated == text
    assert "rewrite rejected" in caplog.text
    q = sample.turns[0].text
    reworded = polish_hook(q, lambda t: "Please: " + t, ["Shadow Hand", "glass"])
    assert reworded == "Please: " + q
    dropped = polish_hook(q, lambda t: t.replace("Shadow Hand", "hand"), ["Shadow Hand"])
    assert dropped == q
    assert polish_hook(q) == q


def test_rewriter_applied_in_build():
    sample = build_sample("single_grasp", [item()], TEMPLATES, VOCAB, seed=1,
                          rewriter=lambda t: t.upper())
    # uppercasing breaks the stream and the names, so both turns are kept verbatim
    plain = build_sample("single_grasp", [item()], TEMPLATES, VOCAB, seed=1)
    assert sample.turns == plain.turns


def test_deterministic_json():
    a = sample_to_json(build_sample("multi_grasp", [item("shadow", "a"), item("jaco", "b")],
                                    TEMPLATES, VOCAB, seed=8, level="low"))
    b = sample_to_json(build_sample("multi_grasp", [item("shadow", "a"), item("jaco", "b")],
                                    TEMPLATES, VOCAB, seed=8, level="low"))
    assert a == b
    doc = json.loads(a)
    assert doc["kind"] == "multi_grasp" and doc["meta"]["level"] == "low"
    assert doc["meta"]["bins"] == [3] * spec("shadow").ndim


def test_summary_text_feeds_high_level():
    s = ContactSummary("general", "mug", ("index", "thumb"), (("index", "handle"), ("thumb", "handle")))
    assert s.text == render_summary("general", "mug", s.parts) == "Two fingers grasp the handle of the mug."
    q = fill_template("high", "mug", "Allegro Hand", s, TEMPLATES, 0, 1)
    assert q == "Generate a grasp of the mug with the Allegro Hand where: Two fingers grasp the handle of the mug."
