"""Driving-domain entity extraction: gazetteer longest-match plus residual
open-noun tokens.

The gazetteer ships as a plain-text vocabulary (one canonical label per line
with synonyms); extraction is deterministic for a fixed gazetteer. Open-noun
extraction is conservative: residual tokens survive only if they are not in
the function-word/qualifier stop list and are not pure digits.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .captions import AttentionCaption
from .text import tokenize

EntitySet = frozenset

# Function words, qualifiers, and verbs common in gaze captions: never
# entities on their own. Colors and weather adjectives included because model
# output leans on them heavily ("the blue car", "a bright day").
STOPWORDS = frozenset("""
a an the it its this that these those there here any some all both each every
he she they we you i me him her them us my your his their our
is are was were be been being am do does did done has have had having
will would shall should can could may might must wont cant
of in on at by for with from to into onto over under near beside behind
ahead front back left right next then now soon later after before during
while when where which who whom whose what why how and or but nor so yet as
if because since until again not no none nothing anything something
between through across along around toward towards up down out off above
below about just also very too quite rather still even only more most other
another such few many much several
one two three four five six seven eight nine ten
red blue green yellow orange white black silver gray grey brown dark bright
light large small big little wide narrow busy quiet heavy wet dry clear
warm cold hot cool
cloudy sunny rainy foggy residential urban suburban oncoming nearby distant
visible current future previous slow fast quick quickly slowly suddenly
gradually partially fully stopped parked moving
look looks looking looked focus focuses focused focusing gaze gazes gazing
gazed glance glances glancing glanced shift shifts shifting shifted move
moves moving moved turn turns turning turned drive drives driving drove
driven stop stops stopping wait waits waiting waited watch watches watching
watched scan scans scanning scanned check checks checking checked approach
approaches approaching approached slow slows slowing slowed stay stays
staying stayed remain remains remaining remained change changes changing
changed go goes going gone went come comes coming came see sees seeing saw
seen appear appears appearing appeared begin begins beginning began continue
continues continuing continued cross crosses crossing crossed pass passes
passing passed keep keeps keeping kept need needs needed govern governs
governed brake brakes braking braked
driver attention view scene image frame picture moment time area direction
side distance maneuver movement position situation environment surroundings
background foreground day night morning evening afternoon weather condition
conditions way things thing part
""".split())


def singularize(token: str) -> str:
    """Trailing-s singularization; deliberately simple for this vocabulary size."""
    if len(token) > 4 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) > 3 and token.endswith(("ses", "xes", "zes", "ches", "shes")):
        return token[:-2]
    if len(token) > 3 and token.endswith("s") and not token.endswith(("ss", "us", "is")):
        return token[:-1]
    return token


def canonicalize(token: str) -> str:
    return singularize(token.lower())


class Gazetteer:
    """Phrase vocabulary with longest-match lookup over canonicalized tokens."""

    def __init__(self, entries: dict[tuple[str, ...], str]):
        # entries: canonicalized surface token tuple -> canonical label
        self._entries = dict(entries)
        self._max_len = max((len(k) for k in entries), default=1)
        self.canonical_labels = frozenset(entries.values())

    @classmethod
    def from_lines(cls, lines) -> "Gazetteer":
        entries: dict[tuple[str, ...], str] = {}
        for line in lines:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            forms = [f.strip() for f in line.split("|") if f.strip()]
            if not forms:
                continue
            canonical = " ".join(canonicalize(t) for t in tokenize(forms[0]))
            for form in forms:
                key = tuple(canonicalize(t) for t in tokenize(form))
                if key:
                    entries[key] = canonical
        return cls(entries)

    @classmethod
    def from_file(cls, path) -> "Gazetteer":
        return cls.from_lines(Path(path).read_text(encoding="utf-8").splitlines())

    @classmethod
    def default(cls) -> "Gazetteer":
        text = resources.files("vista.data").joinpath("gazetteer.txt").read_text("utf-8")
        return cls.from_lines(text.splitlines())

    def with_term(self, line: str) -> "Gazetteer":
        """New gazetteer with one extra 'canonical|syn' line (curation workflows)."""
        merged = dict(self._entries)
        extra = Gazetteer.from_lines([line])
        merged.update(extra._entries)
        return Gazetteer(merged)

    def match_spans(self, tokens: list[str]) -> list[tuple[int, int, str]]:
        """Longest-match scan; returns (start, end, canonical) spans, left to right."""
        canon = [canonicalize(t) for t in tokens]
        spans = []
        i = 0
        n = len(canon)
        while i < n:
            matched = False
            for length in range(min(self._max_len, n - i), 0, -1):
                label = self._entries.get(tuple(canon[i : i + length]))
                if label is not None:
                    spans.append((i, i + length, label))
                    i += length
                    matched = True
                    break
            if not matched:
                i += 1
        return spans


_DEFAULT: Gazetteer | None = None


def default_gazetteer() -> Gazetteer:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = Gazetteer.default()
    return _DEFAULT


def extract_entities(caption, gazetteer: Gazetteer | None = None) -> EntitySet:
    """Entities mentioned in a caption (or raw text).

    Union of gazetteer longest matches and residual open-noun tokens not
    subsumed by a match; labels are canonical lowercase.
    """
    gaz = gazetteer or default_gazetteer()
    text = caption.raw_text if isinstance(caption, AttentionCaption) else str(caption)
    tokens = tokenize(text)
    spans = gaz.match_spans(tokens)
    entities = {label for _, _, label in spans}
    consumed = set()
    for start, end, _ in spans:
        consumed.update(range(start, end))
    for idx, token in enumerate(tokens):
        if idx in consumed:
            continue
        word = canonicalize(token)
        if word in STOPWORDS or token in STOPWORDS or word.isdigit():
            continue
        entities.add(word)
    return frozenset(entities)
