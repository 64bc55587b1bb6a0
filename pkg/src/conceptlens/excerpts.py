"""Excerpt extraction at four granularities: full text, sentences, clauses, words.

The same extraction functions set both the concept-building granularity
(which texts get embedded and factorized) and the occlusion granularity
(which elements get masked out one at a time). Splitting is rule-based
and deterministic:

* sentences end at ``.``, ``!`` or ``?`` followed by whitespace or
  end-of-text (no abbreviation handling; review corpora are informal);
  sentence mode keeps only sentences with at least ``min_words``
  whitespace-delimited words;
* clauses subdivide sentences before coordinating markers ("but",
  "and", "because", "although", "while", "yet") appearing as standalone
  words, and after semicolons or colons. A comma alone does not open a
  new clause, so "A pale, hazy pour, but the aroma is rich" yields two
  clauses, not three;
* words are ``\\w+`` runs, apostrophes allowed inside.

Every excerpt records its character span into the source document and
its text always equals the document slice at that span.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .errors import ConfigurationError, PreconditionError

MODES = ("full", "sentence", "clause", "word")

DEFAULT_MASK_TOKEN = "[MASK]"

_SENTENCE_END = re.compile(r"[.!?]+(?=\s|$)")
_WORD = re.compile(r"\w+(?:'\w+)*")
_TOKEN = re.compile(r"\S+")

CLAUSE_MARKERS = frozenset({"but", "and", "because", "although", "while", "yet"})
_CLAUSE_SEPARATORS = ",;:"


@dataclass(frozen=True)
class GranularitySpec:
    """Extraction mode plus the minimum word count enforced in sentence mode."""

    mode: str
    min_words: int = 6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown granularity mode {self.mode!r}; expected one of {MODES}")
        if self.min_words < 1:
            raise ConfigurationError("min_words must be >= 1")


@dataclass(frozen=True)
class Excerpt:
    text: str
    doc_id: str
    span: tuple[int, int]
    granularity: str

    @property
    def excerpt_id(self) -> str:
        return f"{self.doc_id}:{self.span[0]}-{self.span[1]}"


def compatible(tau1: GranularitySpec, tau2: GranularitySpec) -> bool:
    """Word-level occlusion works under any concept granularity; clause-level
    occlusion needs full or sentence concept excerpts to subdivide."""
    if tau2.mode == "word":
        return True
    if tau2.mode == "clause":
        return tau1.mode in ("full", "sentence")
    return False


def _trimmed_span(doc: str, start: int, end: int) -> tuple[int, int]:
    while start < end and doc[start].isspace():
        start += 1
    while end > start and doc[end - 1].isspace():
        end -= 1
    return start, end


def _sentence_spans(doc: str) -> list[tuple[int, int]]:
    spans = []
    start = 0
    for m in _SENTENCE_END.finditer(doc):
        s, e = _trimmed_span(doc, start, m.end())
        if e > s:
            spans.append((s, e))
        start = m.end()
    s, e = _trimmed_span(doc, start, len(doc))
    if e > s:
        spans.append((s, e))
    return spans


def _word_count(text: str) -> int:
    return len(text.split())


def _clause_spans(doc: str, start: int, end: int) -> list[tuple[int, int]]:
    """Split one sentence span into clause spans."""
    tokens = [(m.start() + start, m.end() + start) for m in _TOKEN.finditer(doc[start:end])]
    if not tokens:
        return []
    boundaries = [0]
    for idx in range(1, len(tokens)):
        ts, te = tokens[idx]
        word = doc[ts:te].strip(_CLAUSE_SEPARATORS + ".!?").lower()
        prev_end_char = doc[tokens[idx - 1][1] - 1]
        if word in CLAUSE_MARKERS or prev_end_char in ";:":
            boundaries.append(idx)
    spans = []
    for b, nxt in zip(boundaries, boundaries[1:] + [len(tokens)]):
        s = tokens[b][0]
        e = tokens[nxt - 1][1]
        while e > s and doc[e - 1] in _CLAUSE_SEPARATORS:
            e -= 1
        s, e = _trimmed_span(doc, s, e)
        if e > s:
            spans.append((s, e))
    return spans


def extract(doc: str, spec: GranularitySpec, doc_id: str = "") -> list[Excerpt]:
    """Extract ordered, non-overlapping excerpts from a document."""
    spans: list[tuple[int, int]]
    if spec.mode == "full":
        s, e = _trimmed_span(doc, 0, len(doc))
        spans = [(s, e)] if e > s else []
    elif spec.mode == "sentence":
        spans = [
            (s, e) for s, e in _sentence_spans(doc) if _word_count(doc[s:e]) >= spec.min_words
        ]
    elif spec.mode == "clause":
        spans = []
        for s, e in _sentence_spans(doc):
            spans.extend(_clause_spans(doc, s, e))
    else:
        spans = [(m.start(), m.end()) for m in _WORD.finditer(doc)]
    return [Excerpt(doc[s:e], doc_id, (s, e), spec.mode) for s, e in spans]


def elements(excerpt: Excerpt, spec: GranularitySpec) -> list[Excerpt]:
    """Extract the occludable elements of an excerpt; spans stay document-absolute."""
    offset = excerpt.span[0]
    return [
        Excerpt(e.text, excerpt.doc_id, (e.span[0] + offset, e.span[1] + offset), e.granularity)
        for e in extract(excerpt.text, spec, doc_id=excerpt.doc_id)
    ]


def occlude(
    excerpt: Excerpt,
    element_index: int,
    spec: GranularitySpec,
    mask_token: str = DEFAULT_MASK_TOKEN,
) -> str:
    """Return the excerpt text with one element replaced by the mask token.

    Everything between elements (separators, punctuation) is preserved,
    so occluding clause 1 of "slow, but the acting shines" gives
    "slow, [MASK]".
    """
    elems = elements(excerpt, spec)
    if element_index < 0 or element_index >= len(elems):
        raise PreconditionError(
            f"element_index {element_index} out of range for {len(elems)} elements"
        )
    target = elems[element_index]
    offset = excerpt.span[0]
    s, e = target.span[0] - offset, target.span[1] - offset
    return excerpt.text[:s] + mask_token + excerpt.text[e:]


def to_jsonl(excerpts) -> str:
    """Serialize excerpts as newline-delimited JSON records."""
    lines = [
        json.dumps(
            {
                "doc_id": ex.doc_id,
                "start": ex.span[0],
                "end": ex.span[1],
                "text": ex.text,
                "granularity": ex.granularity,
            },
            sort_keys=True,
        )
        for ex in excerpts
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def from_jsonl(payload: str) -> list[Excerpt]:
    out = []
    for line in payload.splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        out.append(Excerpt(rec["text"], rec["doc_id"], (rec["start"], rec["end"]), rec["granularity"]))
    return out
