"""Structured four-sentence attention captions: parse, validate, render.

A caption covers, in order: scene description, current gaze focus, a
future-tense prediction of the next gaze target, and the rationale for the
shift. Parsing is positional over the sentence split.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, replace

from .errors import FutureTenseWarning, IncompleteCaptionError, SentenceCountError

PROVENANCE_ORDER = ("draft", "refined", "approved")

# Clean model output is assumed by the protocol; real output is messier, so the
# splitter carries a small abbreviation stop-list.
ABBREVIATIONS = frozenset({"e.g.", "i.e.", "etc.", "mr.", "st."})

DEFAULT_FUTURE_MARKERS = ("will", "going to", "is about to", "shall", "next")

_WS_RE = re.compile(r"\s+")


def split_sentences(text: str) -> list[str]:
    """Split on '.', '!', '?' followed by whitespace or end-of-string.

    Deterministic, insensitive to leading/trailing whitespace; terminal
    punctuation stays attached to its sentence.
    """
    text = text.strip()
    sentences = []
    start = 0
    n = len(text)
    for i, ch in enumerate(text):
        if ch not in ".!?":
            continue
        if i + 1 < n and not text[i + 1].isspace():
            continue
        wstart = i
        while wstart > 0 and not text[wstart - 1].isspace():
            wstart -= 1
        if text[wstart : i + 1].lower() in ABBREVIATIONS:
            continue
        sent = _WS_RE.sub(" ", text[start : i + 1]).strip()
        if sent:
            sentences.append(sent)
        start = i + 1
    tail = _WS_RE.sub(" ", text[start:]).strip()
    if tail:
        sentences.append(tail)
    return sentences


def has_future_marker(sentence: str, markers=DEFAULT_FUTURE_MARKERS) -> bool:
    low = sentence.lower()
    return any(re.search(r"\b" + re.escape(m) + r"\b", low) for m in markers)


@dataclass(frozen=True)
class AttentionCaption:
    scene_description: str
    current_gaze: str
    future_gaze: str
    rationale: str
    raw_text: str
    provenance: str = "draft"
    sample_id: str = ""

    def __post_init__(self):
        if self.provenance not in PROVENANCE_ORDER:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def sentences(self) -> tuple[str, str, str, str]:
        return (self.scene_description, self.current_gaze, self.future_gaze, self.rationale)

    def with_provenance(self, provenance: str) -> "AttentionCaption":
        if PROVENANCE_ORDER.index(provenance) < PROVENANCE_ORDER.index(self.provenance):
            raise ValueError(
                f"provenance moves forward only: {self.provenance} -> {provenance}"
            )
        return replace(self, provenance=provenance)


def parse_caption(raw_text: str, sample_id: str = "", provenance: str = "draft",
                  future_markers=DEFAULT_FUTURE_MARKERS) -> AttentionCaption:
    """Sentence-split raw_text and assign the four roles positionally.

    Raises SentenceCountError unless exactly 4 sentences are found. A missing
    future marker in sentence 3 emits FutureTenseWarning but still constructs
    the caption (human reviewers arbitrate borderline phrasing).
    """
    sentences = split_sentences(raw_text or "")
    if len(sentences) != 4:
        raise SentenceCountError(len(sentences))
    if not has_future_marker(sentences[2], future_markers):
        warnings.warn(
            FutureTenseWarning(
                f"sentence 3 of {sample_id or 'caption'} lacks a future-reference marker: "
                f"{sentences[2]!r}"
            )
        )
    return AttentionCaption(
        scene_description=sentences[0],
        current_gaze=sentences[1],
        future_gaze=sentences[2],
        rationale=sentences[3],
        raw_text=raw_text,
        provenance=provenance,
        sample_id=sample_id,
    )


def render_caption(caption: AttentionCaption) -> str:
    """Join the four sentences into one paragraph with single spacing.

    parse_caption(render_caption(c)) reproduces c's sentence decomposition.
    """
    parts = []
    for name, sent in zip(
        ("scene_description", "current_gaze", "future_gaze", "rationale"),
        caption.sentences,
    ):
        sent = _WS_RE.sub(" ", (sent or "")).strip()
        if not sent:
            raise IncompleteCaptionError(f"caption is missing {name}")
        if sent[-1] not in ".!?":
            sent += "."
        parts.append(sent)
    return " ".join(parts)


def caption_warnings(caption: AttentionCaption,
                     future_markers=DEFAULT_FUTURE_MARKERS) -> list[str]:
    """Recompute advisory warnings for review display."""
    notes = []
    if not has_future_marker(caption.future_gaze, future_markers):
        notes.append("future_gaze lacks a future-reference marker")
    return notes
