"""Parsing of raw studies into sectioned reports and follow-up selection.

Input corpora arrive as JSONL, one ``{report_id, patient_id, seq_key, text}``
object per line.  ``seq_key`` is any totally orderable value (timestamp
string or visit number) supplied by the data owner; chronology is never
inferred from report text.
"""
from __future__ import annotations

import json
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

SECTION_NAMES = (
    "Indication",
    "Comparison",
    "Findings",
    "Impression",
    "Technique",
    "History",
    "Examination",
)

_HEADER = re.compile(
    r"^(indication|comparison|findings|impression|technique|history|examination)[ \t]*:",
    re.IGNORECASE | re.MULTILINE,
)


class CorpusError(ValueError):
    """Malformed corpus input."""


class DuplicateStudyError(CorpusError):
    """The same (patient_id, report_id) appeared twice."""


@dataclass(frozen=True)
class Report:
    """One sectioned study. ``study_order`` is the 1-based visit rank."""

    report_id: str
    patient_id: str
    study_order: int
    sections: Mapping[str, str] = field(default_factory=dict)
    raw_text: str = ""

    def findings(self) -> str:
        return self.sections.get("Findings", "")


@dataclass(frozen=True)
class CorpusSplit:
    name: str
    report_ids: tuple[str, ...]


def _section_spans(raw: str) -> tuple[str, list[tuple[str, str, str]]]:
    """Return (preamble, [(canonical name, header text, body text)]) in order."""
    matches = list(_HEADER.finditer(raw))
    if not matches:
        return raw, []
    preamble = raw[: matches[0].start()]
    spans = []
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
        name = match.group(1).capitalize()
        spans.append((name, raw[match.start() : match.end()], raw[match.end() : end]))
    return preamble, spans


def split_sections(raw: str) -> dict[str, str]:
    """Map recognized section headers to their stripped bodies.

    A header is a section-name token at line start terminated by a colon,
    case-insensitive.  Text before the first header is discarded; a report
    with no recognized headers yields an empty map.  If a header repeats,
    the later occurrence wins.
    """
    _, spans = _section_spans(raw)
    return {name: body.strip() for name, _, body in spans}


def order_studies(
    patient_id: str, studies: Sequence[tuple[str, object]]
) -> list[Report]:
    """Assign 1-based chronological ``study_order`` to one patient's studies.

    Ordering key is the supplied ``seq_key``; ties break lexicographically on
    ``report_id``.  Duplicate report ids are rejected.
    """
    seen: set[str] = set()
    for report_id, _ in studies:
        if report_id in seen:
            raise DuplicateStudyError(
                f"duplicate study ({patient_id!r}, {report_id!r})"
            )
        seen.add(report_id)

    def sort_key(item: tuple[str, object]):
        report_id, seq_key = item
        if isinstance(seq_key, bool) or not isinstance(seq_key, (int, float)):
            return (1, 0.0, str(seq_key), report_id)
        return (0, float(seq_key), "", report_id)

    ordered = sorted(studies, key=sort_key)
    return [
        Report(report_id=report_id, patient_id=patient_id, study_order=rank)
        for rank, (report_id, _) in enumerate(ordered, start=1)
    ]


def select_followups(corpus: Iterable[Report]) -> list[Report]:
    """Keep reports from second-or-later visits that have a Findings section."""
    return [
        report
        for report in corpus
        if report.study_order >= 2 and report.findings().strip()
    ]


def load_corpus(path: str | Path) -> list[Report]:
    """Read a JSONL corpus file into sectioned, visit-ordered reports."""
    path = Path(path)
    rows: list[dict] = []
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            if not isinstance(row, dict):
                raise CorpusError(f"{path}:{lineno}: expected an object")
            for key in ("report_id", "patient_id", "seq_key", "text"):
                if key not in row:
                    raise CorpusError(f"{path}:{lineno}: missing field {key!r}")
            if not isinstance(row["report_id"], str) or not row["report_id"]:
                raise CorpusError(f"{path}:{lineno}: report_id must be a non-empty string")
            if not isinstance(row["patient_id"], str) or not row["patient_id"]:
                raise CorpusError(f"{path}:{lineno}: patient_id must be a non-empty string")
            if not isinstance(row["text"], str):
                raise CorpusError(f"{path}:{lineno}: text must be a string")
            rows.append(row)

    by_patient: dict[str, list[dict]] = {}
    for row in rows:
        by_patient.setdefault(row["patient_id"], []).append(row)

    orders: dict[tuple[str, str], int] = {}
    for patient_id, patient_rows in by_patient.items():
        stubs = order_studies(
            patient_id, [(r["report_id"], r["seq_key"]) for r in patient_rows]
        )
        for stub in stubs:
            orders[(patient_id, stub.report_id)] = stub.study_order

    return [
        Report(
            report_id=row["report_id"],
            patient_id=row["patient_id"],
            study_order=orders[(row["patient_id"], row["report_id"])],
            sections=split_sections(row["text"]),
            raw_text=row["text"],
        )
        for row in rows
    ]


def load_split(path: str | Path) -> list[CorpusSplit]:
    """Read a ``{train: [...], validation: [...], test: [...]}`` split file."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise CorpusError(f"{path}: split file must be a JSON object")
    splits = []
    seen: dict[str, str] = {}
    for name in ("train", "validation", "test"):
        ids = data.get(name, [])
        if not isinstance(ids, list) or any(not isinstance(i, str) for i in ids):
            raise CorpusError(f"{path}: split {name!r} must be a list of strings")
        if len(set(ids)) != len(ids):
            raise CorpusError(f"{path}: split {name!r} contains duplicates")
        for report_id in ids:
            if report_id in seen:
                raise CorpusError(
                    f"{path}: report {report_id!r} in both {seen[report_id]!r} and {name!r}"
                )
            seen[report_id] = name
        splits.append(CorpusSplit(name=name, report_ids=tuple(ids)))
    return splits
