"""Instruction questions and conversation samples with embedded grasp streams."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .codec import BinVector, TokenVocabulary, encode_tokens, extract_stream, quantize_scale, render_stream
from .contact import ContactSummary

logger = logging.getLogger(__name__)

LEVELS = ("low", "mid", "high")
KINDS = ("single_grasp", "multi_mix", "multi_grasp")
LEVEL_FIELDS = {
    "low": {"object", "hand type"},
    "mid": {"object", "hand type", "part"},
    "high": {"object", "hand type", "part", "contact info"},
}
ANSWER_FIELDS = {"grasp", "object", "hand type"}
VARIANT_RANGE = (5, 10)

_PLACEHOLDER = re.compile(r"\{([a-z ]+)\}")


class TemplateError(ValueError):
    pass


def placeholders(template: str) -> set[str]:
    return set(_PLACEHOLDER.findall(template))


def substitute(template: str, values: dict[str, str]) -> str:
    def repl(m):
        key = m.group(1)
        if key not in values:
            raise TemplateError(f"no value for placeholder {{{key}}}")
        return values[key]

    return _PLACEHOLDER.sub(repl, template)


@dataclass(frozen=True)
class TemplateSet:
    questions: dict[str, tuple[str, ...]]
    answers: tuple[str, ...]
    caption_questions: tuple[str, ...]
    version: int = 1

    def __post_init__(self):
        for level in LEVELS:
            if not self.questions.get(level):
                raise TemplateError(f"no {level}-level templates")
            for t in self.questions[level]:
                extra = placeholders(t) - LEVEL_FIELDS[level]
                if extra:
                    raise TemplateError(f"{level}-level template uses {sorted(extra)}: {t!r}")
        for t in self.answers:
            if "grasp" not in placeholders(t) or placeholders(t) - ANSWER_FIELDS:
                raise TemplateError(f"bad answer template {t!r}")
        if not self.answers or not self.caption_questions:
            raise TemplateError("answer and caption templates are required")

    @classmethod
    def from_dict(cls, doc: dict) -> "TemplateSet":
        return cls({k: tuple(v) for k, v in doc["questions"].items()}, tuple(doc["answers"]),
                   tuple(doc["caption_questions"]), int(doc.get("version", 1)))

    @classmethod
    def load(cls, path=None) -> "TemplateSet":
        if path is None:
            text = resources.files("graspkit").joinpath("data", "templates.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))


def _values(level, object_name, hand_name, summary: ContactSummary | None) -> dict[str, str]:
    values = {"object": object_name, "hand type": hand_name}
    if level in ("mid", "high"):
        if summary is None:
            raise TemplateError(f"{level}-level questions need a contact summary")
        values["part"] = summary.primary_part
    if level == "high":
        values["contact info"] = summary.clause
    return values


def fill_template(level: str, object_name: str, hand_name: str, summary: ContactSummary | None,
                  templates: TemplateSet, seed: int, index: int | None = None) -> str:
    """Pick a question template for ``level`` (by seed, or ``index``) and fill it."""
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}")
    values = _values(level, object_name, hand_name, summary)
    options = templates.questions[level]
    if index is None:
        index = int(np.random.default_rng(seed).integers(len(options)))
    return substitute(options[index], values)


def question_set(object_name: str, hand_name: str, summary: ContactSummary | None,
                 templates: TemplateSet, seed: int, size_range=VARIANT_RANGE,
                 levels: Sequence[str] = LEVELS) -> list[tuple[str, str]]:
    """Between ``size_range`` distinct ``(level, question)`` pairs, levels interleaved."""
    rng = np.random.default_rng(seed)
    levels = tuple(lv for lv in LEVELS if lv in levels and (summary is not None or lv == "low"))
    pools = {lv: list(rng.permutation(len(templates.questions[lv]))) for lv in levels}
    available = sum(len(p) for p in pools.values())
    lo, hi = size_range
    want = min(int(rng.integers(lo, hi + 1)), available)
    out: list[tuple[str, str]] = []
    seen = set()
    while len(out) < want:
        progressed = False
        for lv in levels:
            if len(out) >= want:
                break
            while pools[lv]:
                q = fill_template(lv, object_name, hand_name, summary, templates, 0, int(pools[lv].pop(0)))
                if q not in seen:
                    seen.add(q)
                    out.append((lv, q))
                    progressed = True
                    break
        if not progressed:
            break
    return out


@dataclass(frozen=True)
class Turn:
    role: str
    text: str
    stream: str | None = None


@dataclass(frozen=True, eq=False)
class GraspItem:
    """One annotated, discretized grasp ready to embed in a conversation."""

    grasp_id: str
    hand: str
    hand_label: str
    object_name: str
    summary: ContactSummary | None
    bins: BinVector
    scale: float
    n_bins: int
    spec_hash: str = ""

    def tokens(self, vocab: TokenVocabulary) -> list[str]:
        return encode_tokens(self.hand, quantize_scale(self.scale, self.n_bins),
                             self.bins.bins.tolist(), vocab)


@dataclass(frozen=True)
class ConversationSample:
    id: str
    kind: str
    turns: tuple[Turn, ...]
    grasps: tuple[GraspItem, ...]
    levels: tuple[str, ...]
    object_name: str
    stage: str = "instruction"
    meta_extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        per_grasp = [
            {"hand": g.hand, "grasp_id": g.grasp_id, "level": lv, "bins": g.bins.bins.tolist(),
             "spec_hash": g.spec_hash}
            for g, lv in zip(self.grasps, self.levels)
        ]
        first = per_grasp[0]
        meta = {"hand": first["hand"], "object": self.object_name, "level": first["level"],
                "grasp_id": first["grasp_id"], "bins": first["bins"], "grasps": per_grasp}
        meta.update(self.meta_extra)
        return {"schema_version": 1, "id": self.id, "kind": self.kind, "stage": self.stage,
                "turns": [{"role": t.role, "text": t.text} for t in self.turns], "meta": meta}


Rewriter = Callable[[str], str]


def polish_hook(text: str, rewriter: Rewriter | None = None, protected: Sequence[str] = ()) -> str:
    """Optionally rewrite ``text``; reject rewrites that touch protected content.

    The embedded token stream (if any) and every string in ``protected`` must
    survive verbatim, otherwise the original text is kept.
    """
    if rewriter is None:
        return text
    candidate = rewriter(text)
    keep = list(protected)
    try:
        keep.append(_stream_span(text))
    except ValueError:
        pass
    lost = [s for s in keep if s and s not in candidate]
    if lost:
        logger.warning("rewrite rejected: altered protected text %r", lost[0][:60])
        return text
    return candidate


def _stream_span(text: str) -> str:
    s = extract_stream(text)
    end = s.find("</grasp>")
    if end < 0:
        raise ValueError("no grasp stream")
    return s[: end + len("</grasp>")]


def _answer(item: GraspItem, templates: TemplateSet, vocab: TokenVocabulary, rng) -> Turn:
    stream = render_stream(item.tokens(vocab))
    t = templates.answers[int(rng.integers(len(templates.answers)))]
    text = substitute(t, {"grasp": stream, "object": item.object_name, "hand type": item.hand_label})
    return Turn("assistant", text, stream)


def build_sample(kind: str, bundle: Sequence[GraspItem], templates: TemplateSet,
                 vocab: TokenVocabulary, seed: int, level: str = "low", caption: str | None = None,
                 sample_id: str | None = None, rewriter: Rewriter | None = None,
                 stage: str | None = None, questions: Sequence[str] | None = None) -> ConversationSample:
    """Assemble one dialogue; ``questions`` overrides the template pick per grasp."""
    if kind not in KINDS:
        raise ValueError(f"unknown dialogue kind {kind!r}")
    bundle = list(bundle)
    if kind == "single_grasp" and len(bundle) != 1:
        raise ValueError("single_grasp takes exactly one grasp")
    if kind == "multi_grasp" and len(bundle) < 2:
        raise ValueError("multi_grasp takes at least two grasps")
    if kind == "multi_mix" and (not bundle or not caption):
        raise ValueError("multi_mix takes a caption and at least one grasp")
    rng = np.random.default_rng(seed)
    turns: list[Turn] = []
    if kind == "multi_mix":
        q = templates.caption_questions[int(rng.integers(len(templates.caption_questions)))]
        turns += [Turn("user", q), Turn("assistant", caption)]
    if questions is not None and len(questions) != len(bundle):
        raise ValueError("one question per grasp is required")
    for k, item in enumerate(bundle):
        q = fill_template(level, item.object_name, item.hand_label, item.summary, templates,
                          int(rng.integers(2**31)))
        if questions is not None:
            q = questions[k]
        q = polish_hook(q, rewriter, [item.hand_label, item.object_name])
        ans = _answer(item, templates, vocab, rng)
        text = polish_hook(ans.text, rewriter, [item.hand_label])
        turns += [Turn("user", q), Turn("assistant", text, ans.stream)]
    sid = sample_id or f"{bundle[0].grasp_id}/{kind}/{level}"
    return ConversationSample(sid, kind, tuple(turns), tuple(bundle), (level,) * len(bundle),
                              bundle[0].object_name,
                              stage or ("alignment" if kind == "single_grasp" else "instruction"))


def sample_to_json(sample: ConversationSample) -> str:
    return json.dumps(sample.to_dict(), sort_keys=False, ensure_ascii=False)
