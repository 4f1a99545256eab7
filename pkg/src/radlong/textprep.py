"""Report text cleaning and sentence segmentation.

The cleaning pipeline reproduces the ten normalization steps commonly
applied to chest X-ray reports before language-metric scoring: newline
removal, underscore/space/period collapsing, list-number removal,
lowercasing, ``". "`` segmentation, punctuation stripping, per-sentence
trimming, and rejoining with ``" . "`` plus a terminal ``" ."``.

Each step is exposed as its own function so golden tests can exercise the
rows individually; :func:`clean_report` chains them in order.
"""
from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

# Words whose trailing period does not end a sentence.  Single-letter
# initials ("J. Smith") and single digits ("2. Heart size ...") are
# guarded separately.
ABBREVIATIONS = frozenset(
    {"dr", "mr", "mrs", "st", "vs", "no", "e.g", "i.e", "a.m", "p.m"}
)

_NEWLINES = re.compile(r"[\r\n\t\v\f]")
_UNDERSCORE_RUN = re.compile(r"_{2,}")
_SPACE_RUN = re.compile(r" {2,}")
_PERIOD_RUN = re.compile(r"\.{2,}")
# A lone "<digit>." token: preceded by whitespace/start, swallowed with its
# trailing whitespace so surrounding spacing stays single.
_LIST_NUMBER = re.compile(r"(?<!\S)\d\.(?:\s+|$)")
# Characters kept inside a cleaned sentence; everything else is stripped.
_DISALLOWED = re.compile(r"[^a-z0-9 _.]")

_SENTENCE_BOUNDARY = re.compile(r"([.?!])\s")

CLEANING_STEPS = (
    "remove_line_breaks",
    "normalize_underscores",
    "collapse_spaces",
    "normalize_periods",
    "remove_numbering",
    "lowercase",
    "segment",
    "remove_punctuation",
    "trim",
    "rejoin",
)


@dataclass(frozen=True)
class CleanText:
    """Cleaned report text plus the ordered step names that produced it."""

    text: str
    provenance: tuple[str, ...] = CLEANING_STEPS


@dataclass(frozen=True)
class SentenceList:
    """Ordered sentences extracted from one report section."""

    sentences: tuple[str, ...]
    source_report_id: str = ""


def remove_line_breaks(text: str) -> str:
    """Replace newline (and other non-space whitespace) characters with spaces."""
    return _NEWLINES.sub(" ", text)


def normalize_underscores(text: str) -> str:
    """Replace consecutive underscores with a single underscore."""
    return _UNDERSCORE_RUN.sub("_", text)


def collapse_spaces(text: str) -> str:
    """Replace consecutive spaces with a single space."""
    return _SPACE_RUN.sub(" ", text)


def normalize_periods(text: str) -> str:
    """Replace consecutive periods with a single period."""
    return _PERIOD_RUN.sub(".", text)


def remove_numbering(text: str) -> str:
    """Remove standalone list-number tokens such as "1." or "2."."""
    return _LIST_NUMBER.sub("", text)


def lowercase(text: str) -> str:
    """Convert all characters to lowercase."""
    return text.lower()


def split_clean_sentences(text: str) -> list[str]:
    """Split on ``". "``, dropping the sentence-final period and empty pieces."""
    pieces = [piece.rstrip(".") for piece in text.split(". ")]
    return [piece for piece in pieces if piece.strip()]


def remove_punctuation(sentence: str) -> str:
    """Strip punctuation/special characters, keeping ``[a-z0-9 _.]``.

    Removal can leave previously separated spaces or periods adjacent, so
    runs are re-collapsed to keep the output a fixpoint of the pipeline.
    """
    sentence = _DISALLOWED.sub("", sentence)
    return normalize_periods(collapse_spaces(sentence))


def trim(sentence: str) -> str:
    """Remove leading and trailing whitespace from one sentence."""
    return sentence.strip()


def rejoin(sentences: list[str]) -> str:
    """Rejoin cleaned sentences with ``" . "`` and a terminal ``" ."``."""
    if not sentences:
        return ""
    return " . ".join(sentences) + " ."


def clean_report(raw: str) -> CleanText:
    """Run the full ten-step cleaning pipeline over raw report text.

    Idempotent: cleaning an already-clean string returns it unchanged.
    Empty input yields empty output.
    """
    text = unicodedata.normalize("NFC", raw)
    text = remove_line_breaks(text)
    text = normalize_underscores(text)
    text = collapse_spaces(text)
    text = normalize_periods(text)
    text = remove_numbering(text)
    text = lowercase(text)
    sentences = [trim(remove_punctuation(s)) for s in split_clean_sentences(text)]
    sentences = [s for s in sentences if s]
    return CleanText(text=rejoin(sentences))


def clean(raw: str) -> str:
    """Shorthand for ``clean_report(raw).text``."""
    return clean_report(raw).text


def _boundary_guarded(text: str, dot_index: int) -> bool:
    """True when the period at ``dot_index`` ends a guarded token, not a sentence."""
    start = dot_index
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    token = text[start:dot_index].strip("\"'()[]{},;:")
    lowered = token.lower()
    if lowered in ABBREVIATIONS:
        return True
    if len(lowered) == 1 and (lowered.isalpha() or lowered.isdigit()):
        return True
    return False


def segment_sentences(text: str, source_report_id: str = "") -> SentenceList:
    """Split raw section text into sentences.

    Boundaries are ``.``, ``?``, or ``!`` followed by whitespace; a period is
    not a boundary when it terminates a known abbreviation, a single-letter
    initial, or a single digit.  Sentences keep their terminal punctuation
    and are whitespace-trimmed.
    """
    text = unicodedata.normalize("NFC", text)
    sentences: list[str] = []
    start = 0
    for match in _SENTENCE_BOUNDARY.finditer(text):
        mark = match.group(1)
        if mark == "." and _boundary_guarded(text, match.start(1)):
            continue
        piece = text[start : match.end(1)].strip()
        if piece:
            sentences.append(piece)
        start = match.end()
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return SentenceList(sentences=tuple(sentences), source_report_id=source_report_id)


def tokenize(sentence: str) -> list[str]:
    """Split a cleaned sentence on spaces, never producing empty tokens."""
    return sentence.split()
