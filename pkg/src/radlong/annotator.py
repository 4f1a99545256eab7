"""Sentence-level longitudinal annotation of report findings.

Each findings sentence is classified as longitudinal or cross-sectional;
longitudinal sentences get a vocabulary keyword, and keyworded sentences
(except support devices) get a progression label.  Every answer travels
through the gateway cache, so a corpus run is resumable and deterministic
for a fixed backend.
"""
from __future__ import annotations

import json
import logging
import re
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .corpus import Report
from .gateway import GatewayError, MemoryStore, TransportError, cached_complete
from .prompts import (
    build_keyword_prompt,
    build_longitudinal_prompt,
    build_progression_prompt,
)
from .textprep import segment_sentences
from .vocabulary import DISEASE_TERMS, SUPPORT_DEVICES

logger = logging.getLogger(__name__)

_ANGLE_SPAN = re.compile(r"<([^<>]*)>")

STAGE_LONGITUDINAL = "longitudinal"
STAGE_KEYWORD = "keyword"
STAGE_PROGRESSION = "progression"


class ProgressionLabel(str, Enum):
    NO_CHANGE = "no change"
    IMPROVED = "improved"
    WORSENED = "worsened"
    UNMENTIONED = "unmentioned"


PROGRESSION_ANSWERS = frozenset(label.value for label in ProgressionLabel)
BINARY_ANSWERS = frozenset({"0", "1"})


class NoAnswer(Exception):
    """No angle-bracketed span in the reply matched the allowed answers."""

    def __init__(self, reply: str, allowed: Iterable[str]):
        super().__init__(f"no allowed answer in reply {reply!r}")
        self.reply = reply
        self.allowed = frozenset(allowed)


class OffListTerm(Exception):
    """The keyword reply parsed to a term outside the vocabulary."""

    def __init__(self, term: str, reply: str):
        super().__init__(f"off-list term {term!r} in reply {reply!r}")
        self.term = term
        self.reply = reply


@dataclass
class SentenceAnnotation:
    """Annotation record for one findings sentence."""

    report_id: str
    sentence_index: int
    sentence: str
    is_longitudinal: bool = False
    keyword: str | None = None
    progression: ProgressionLabel | None = None
    model_id: str = ""
    exchange_keys: list[str] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)

    def to_record(self) -> dict:
        record: dict = {
            "report_id": self.report_id,
            "sentence_index": self.sentence_index,
            "sentence": self.sentence,
            "is_longitudinal": self.is_longitudinal,
        }
        if self.keyword is not None:
            record["keyword"] = self.keyword
        if self.progression is not None:
            record["progression"] = self.progression.value
        if self.errors:
            record["errors"] = [list(err) for err in self.errors]
        record["model_id"] = self.model_id
        return record

    @classmethod
    def from_record(cls, record: dict) -> "SentenceAnnotation":
        progression = record.get("progression")
        return cls(
            report_id=record["report_id"],
            sentence_index=record["sentence_index"],
            sentence=record["sentence"],
            is_longitudinal=record["is_longitudinal"],
            keyword=record.get("keyword"),
            progression=ProgressionLabel(progression) if progression else None,
            model_id=record.get("model_id", ""),
            errors=[tuple(err) for err in record.get("errors", [])],
        )


def parse_angle_answer(reply: str, allowed: Iterable[str]) -> str:
    """Return the last angle-bracketed span whose content is allowed.

    Models often restate the in-prompt examples before answering, so the
    final matching span is taken as the answer.  Spans are trimmed and
    lowercased before comparison.
    """
    allowed = frozenset(allowed)
    if not allowed:
        raise ValueError("allowed set must be non-empty")
    spans = [span.strip().lower() for span in _ANGLE_SPAN.findall(reply)]
    for span in reversed(spans):
        if span in allowed:
            return span
    raise NoAnswer(reply, allowed)


def _ask(backend, store, prompt: str, allowed: frozenset[str],
         keys: list[str]) -> str:
    """Complete and parse a prompt, re-asking once on a parse failure.

    The re-ask bypasses the cache (a cached reply cannot change) and its
    reply replaces the cached one, so the outcome is stable on later runs.
    """
    exchange = cached_complete(store, backend, prompt)
    keys.append(exchange.cache_key)
    try:
        return parse_angle_answer(exchange.raw_reply, allowed)
    except NoAnswer:
        logger.debug("re-asking %s after unparseable reply", exchange.cache_key[:12])
    retry = backend.complete(prompt)
    store.put(retry.cache_key, retry.raw_reply, model_id=backend.model_id)
    keys.append(retry.cache_key)
    return parse_angle_answer(retry.raw_reply, allowed)


def classify_longitudinal(backend, sentence: str, store=None) -> bool:
    """Does the sentence compare the current study with prior imaging?"""
    store = store if store is not None else MemoryStore()
    prompt = build_longitudinal_prompt(
        sentence, suffix=getattr(backend, "prompt_suffix", "")
    )
    answer = _ask(backend, store, prompt, BINARY_ANSWERS, [])
    return answer == "1"


def extract_keyword(backend, sentence: str, vocab: Sequence[str] = DISEASE_TERMS,
                    store=None) -> str:
    """Which vocabulary term does a longitudinal sentence concern?

    Raises :class:`OffListTerm` when the model names something outside the
    vocabulary; such sentences are excluded from progression scoring rather
    than being fuzzily coerced onto the list.
    """
    store = store if store is not None else MemoryStore()
    prompt = build_keyword_prompt(sentence, vocab)
    try:
        return _ask(backend, store, prompt, frozenset(vocab), [])
    except NoAnswer as exc:
        spans = [s.strip().lower() for s in _ANGLE_SPAN.findall(exc.reply)]
        if spans:
            raise OffListTerm(spans[-1], exc.reply) from exc
        raise


def label_progression(backend, sentence: str, disease: str,
                      vocab: Sequence[str] = DISEASE_TERMS,
                      store=None) -> ProgressionLabel:
    """How did the named condition change relative to prior imaging?"""
    if disease not in vocab:
        raise ValueError(f"disease {disease!r} is not in the vocabulary")
    if disease == SUPPORT_DEVICES:
        raise ValueError("support devices are never progression-labeled")
    store = store if store is not None else MemoryStore()
    prompt = build_progression_prompt(sentence, disease, vocab)
    answer = _ask(backend, store, prompt, PROGRESSION_ANSWERS, [])
    return ProgressionLabel(answer)


def annotate_report(backend, report: Report, store=None,
                    vocab: Sequence[str] = DISEASE_TERMS) -> list[SentenceAnnotation]:
    """Annotate every findings sentence of one report.

    Per-sentence failures are recorded on the annotation (stage plus message)
    and never abort the report.
    """
    findings = report.findings()
    if not findings.strip():
        raise ValueError(f"report {report.report_id!r} has no Findings section")
    store = store if store is not None else MemoryStore()
    annotations = []
    for index, sentence in enumerate(segment_sentences(findings).sentences):
        annotation = SentenceAnnotation(
            report_id=report.report_id,
            sentence_index=index,
            sentence=sentence,
            model_id=backend.model_id,
        )
        annotations.append(annotation)

        suffix = getattr(backend, "prompt_suffix", "")
        try:
            answer = _ask(
                backend,
                store,
                build_longitudinal_prompt(sentence, suffix=suffix),
                BINARY_ANSWERS,
                annotation.exchange_keys,
            )
            annotation.is_longitudinal = answer == "1"
        except (GatewayError, NoAnswer) as exc:
            annotation.errors.append((STAGE_LONGITUDINAL, _describe(exc)))
            continue
        if not annotation.is_longitudinal:
            continue

        try:
            keyword = _ask(
                backend,
                store,
                build_keyword_prompt(sentence, vocab),
                frozenset(vocab),
                annotation.exchange_keys,
            )
        except NoAnswer as exc:
            spans = [s.strip().lower() for s in _ANGLE_SPAN.findall(exc.reply)]
            if spans:
                exc = OffListTerm(spans[-1], exc.reply)
            annotation.errors.append((STAGE_KEYWORD, _describe(exc)))
            continue
        except GatewayError as exc:
            annotation.errors.append((STAGE_KEYWORD, _describe(exc)))
            continue
        annotation.keyword = keyword
        if keyword == SUPPORT_DEVICES:
            continue

        try:
            answer = _ask(
                backend,
                store,
                build_progression_prompt(sentence, keyword, vocab),
                PROGRESSION_ANSWERS,
                annotation.exchange_keys,
            )
            annotation.progression = ProgressionLabel(answer)
        except (GatewayError, NoAnswer) as exc:
            annotation.errors.append((STAGE_PROGRESSION, _describe(exc)))
    return annotations


def _describe(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


def annotate_reports(backend, reports: Sequence[Report], store=None,
                     concurrency: int = 4,
                     vocab: Sequence[str] = DISEASE_TERMS) -> list[SentenceAnnotation]:
    """Annotate many reports concurrently, returning records in stable order.

    Output order is (report_id, sentence_index) regardless of completion
    order, so results are byte-stable across concurrency levels.
    """
    store = store if store is not None else MemoryStore()
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")
    annotations: list[SentenceAnnotation] = []
    if concurrency == 1 or len(reports) <= 1:
        for report in reports:
            annotations.extend(annotate_report(backend, report, store, vocab))
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            futures = [
                pool.submit(annotate_report, backend, report, store, vocab)
                for report in reports
            ]
            for future in futures:
                annotations.extend(future.result())
    annotations.sort(key=lambda a: (a.report_id, a.sentence_index))
    return annotations


def summarize(annotations: Sequence[SentenceAnnotation],
              n_reports: int) -> dict:
    """Aggregate run counts: reports, sentences, longitudinal, errors by stage."""
    errors_by_stage: dict[str, int] = {}
    for annotation in annotations:
        for stage, _ in annotation.errors:
            errors_by_stage[stage] = errors_by_stage.get(stage, 0) + 1
    return {
        "reports": n_reports,
        "sentences": len(annotations),
        "longitudinal": sum(1 for a in annotations if a.is_longitudinal),
        "errors_by_stage": dict(sorted(errors_by_stage.items())),
    }


def _transport_collapse(annotations: Sequence[SentenceAnnotation]) -> bool:
    """True when every sentence failed its first stage with a transport error."""
    if not annotations:
        return False
    return all(
        any(
            stage == STAGE_LONGITUDINAL and message.startswith("TransportError")
            for stage, message in annotation.errors
        )
        for annotation in annotations
    )


def annotate_corpus(backend, corpus: Sequence[Report], store, out_path: str | Path,
                    concurrency: int = 4,
                    vocab: Sequence[str] = DISEASE_TERMS) -> dict:
    """Annotate a follow-up corpus and write the JSONL annotation file.

    The file is sorted by (report_id, sentence_index) and rewritten in full
    on every run; resuming after an interruption is handled by the reply
    cache, not by partial output files.  Raises :class:`TransportError` when
    the backend never produced a single answer (collapse); per-sentence
    errors otherwise land in the returned summary.
    """
    annotations = annotate_reports(backend, corpus, store, concurrency, vocab)
    if _transport_collapse(annotations):
        raise TransportError("backend unreachable for every sentence in the run")
    write_annotations(annotations, out_path)
    return summarize(annotations, n_reports=len(corpus))


def write_annotations(annotations: Sequence[SentenceAnnotation],
                      path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for annotation in annotations:
            handle.write(json.dumps(annotation.to_record(), ensure_ascii=False) + "\n")


class AnnotationFormatError(ValueError):
    """An annotation file violated its schema; message names the line."""


def load_annotations(path: str | Path) -> list[SentenceAnnotation]:
    path = Path(path)
    annotations = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnnotationFormatError(
                    f"{path}:{lineno}: invalid JSON ({exc})"
                ) from exc
            try:
                annotations.append(SentenceAnnotation.from_record(record))
            except (KeyError, TypeError, ValueError) as exc:
                raise AnnotationFormatError(
                    f"{path}:{lineno}: bad annotation record ({exc})"
                ) from exc
    return annotations
