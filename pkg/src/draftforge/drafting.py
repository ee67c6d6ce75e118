"""Draft assembly under the metadata-isolation constraint.

The prompt builder takes a transcript and nothing else: incident metadata is
structurally unreadable here, which is what makes the isolation guarantee
testable. Drafts carry INSERT placeholders for facts the transcript does not
support, per-sentence provenance links for facts it does, and a guard that
flags conclusory terms with no verbatim transcript support.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from . import assets, backends, corpus
from .transcripts import (
    DraftforgeError,
    EmptyTranscript,
    EventRecord,
    SpeakerRole,
    Transcript,
    serialize_transcript,
)

SECTION_IDS = ("header", "narrative", "persons", "evidence_actions")

PLACEHOLDER_OPEN = "[[INSERT:"
PLACEHOLDER_CLOSE = "]]"


class MalformedPlaceholder(DraftforgeError):
    pass


@dataclass(frozen=True)
class Placeholder:
    placeholder_id: int
    hint: str
    span: tuple[str, int]  # (section_id, char offset of the opener)
    resolved_text: Optional[str] = None

    def __post_init__(self):
        if not self.hint or "[[" in self.hint:
            raise ValueError("hint must be non-empty and free of '[['")
        if self.resolved_text is not None:
            if not self.resolved_text.strip():
                raise ValueError("resolved_text must be non-empty")
            if "[[" in self.resolved_text or "]]" in self.resolved_text:
                raise ValueError("resolved_text may not contain placeholder delimiters")


@dataclass(frozen=True)
class ProvenanceLink:
    sentence_index: int  # within the narrative section
    utterance_indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "utterance_indices", tuple(self.utterance_indices))
        if not self.utterance_indices:
            raise ValueError("a provenance link needs at least one utterance")


@dataclass(frozen=True)
class Violation:
    term: str
    section_id: str
    char_offset: int


@dataclass(frozen=True)
class DraftDocument:
    draft_id: str
    sections: tuple[tuple[str, str], ...]  # (section_id, text) in fixed order
    placeholders: tuple[Placeholder, ...]
    provenance: tuple[ProvenanceLink, ...]
    highlights: tuple[tuple[str, tuple[int, int]], ...]
    backend_used: str

    def __post_init__(self):
        object.__setattr__(self, "sections", tuple(tuple(s) for s in self.sections))
        object.__setattr__(self, "placeholders", tuple(self.placeholders))
        object.__setattr__(self, "provenance", tuple(self.provenance))
        object.__setattr__(
            self, "highlights", tuple((sid, tuple(rng)) for sid, rng in self.highlights)
        )
        if tuple(sid for sid, _ in self.sections) != SECTION_IDS:
            raise ValueError(f"sections must be exactly {SECTION_IDS} in order")
        for pos, ph in enumerate(self.placeholders):
            if ph.placeholder_id != pos:
                raise ValueError("placeholder ids must be dense 0..k-1")

    def section_text(self, section_id: str) -> str:
        for sid, text in self.sections:
            if sid == section_id:
                return text
        raise KeyError(section_id)

    def unresolved(self) -> list[Placeholder]:
        return [p for p in self.placeholders if p.resolved_text is None]


def scan_placeholders(text: str) -> list[tuple[str, tuple[int, int]]]:
    """Scan `[[INSERT: <hint>]]` markers, left to right, non-overlapping.
    Raises MalformedPlaceholder for an unmatched or nested opener or an
    empty hint."""
    found = []
    i = 0
    while True:
        start = text.find(PLACEHOLDER_OPEN, i)
        if start == -1:
            return found
        end = text.find(PLACEHOLDER_CLOSE, start + len(PLACEHOLDER_OPEN))
        if end == -1:
            raise MalformedPlaceholder(f"unmatched opener at offset {start}")
        inner = text[start + len(PLACEHOLDER_OPEN) : end]
        if "[[" in inner:
            raise MalformedPlaceholder(f"nested opener inside marker at offset {start}")
        hint = inner.strip()
        if not hint:
            raise MalformedPlaceholder(f"empty hint at offset {start}")
        found.append((hint, (start, end + len(PLACEHOLDER_CLOSE))))
        i = end + len(PLACEHOLDER_CLOSE)


def placeholder_marker(hint: str) -> str:
    return f"{PLACEHOLDER_OPEN} {hint}{PLACEHOLDER_CLOSE}"


def assemble_prompt(transcript: Transcript) -> str:
    """Instruction preamble plus the utterances verbatim, in order. The
    signature admits no case metadata; isolation is structural."""
    if not transcript.utterances:
        raise EmptyTranscript("cannot prompt from an empty transcript")
    preamble = assets.read_asset("draft_prompt.txt")
    return preamble + "\n" + serialize_transcript(transcript, "plain")


# --- baseline drafter ----------------------------------------------------------

_OFFICER_NAME_RE = re.compile(r"\bOfficer ([A-Z][a-zA-Z]+)")
_BADGE_RE = re.compile(r"\bbadge\s+(?:number\s+)?#?\d+", re.IGNORECASE)
_TIME_RE = re.compile(r" around ([^.]+)\.")


def _sentences(text: str) -> list[tuple[int, int, str]]:
    out = []
    for m in re.finditer(r"[^.!?\n]+[.!?]?", text):
        chunk = m.group().strip()
        if chunk:
            start = m.start() + (len(m.group()) - len(m.group().lstrip()))
            out.append((start, start + len(chunk), chunk))
    return out


def _find_support(transcript: Transcript, *needles: str) -> tuple[int, ...]:
    hits = []
    for utt in transcript.utterances:
        if all(n in utt.text for n in needles if n):
            hits.append(utt.index)
    return tuple(hits)


def generate_draft(
    transcript: Transcript,
    events: Sequence[EventRecord],
    backend: backends.BackendDescriptor,
) -> DraftDocument:
    """Produce a sectioned draft. The baseline builds the narrative from the
    events in action order and emits a placeholder for each required field
    (officer name, badge, location, date/time) the transcript cannot supply;
    the remote route parses the model payload and highlights every narrative
    sentence it cannot tie back to an utterance."""
    if backend.role != "draft":
        raise ValueError("backend role must be 'draft'")
    if not transcript.utterances:
        raise EmptyTranscript("cannot draft from an empty transcript")
    if backend.kind == "baseline":
        return _baseline_draft(transcript, events)
    result = backends.call_remote(backend, assemble_prompt(transcript))
    return _parse_remote_draft(transcript, result.payload, backend.model_name or "remote")


def _baseline_draft(transcript: Transcript, events: Sequence[EventRecord]) -> DraftDocument:
    all_text = " ".join(u.text for u in transcript.utterances)

    name_match = _OFFICER_NAME_RE.search(all_text)
    officer = f"Officer {name_match.group(1)}" if name_match else None
    badge = _BADGE_RE.search(all_text)
    location = next((e.location for e in events if e.location), None)
    time_hint = next(
        (a.time_hint for e in events for a in e.actions if a.time_hint), None
    )
    if time_hint is None:
        time_match = _TIME_RE.search(all_text)
        time_hint = time_match.group(1) if time_match else None

    header_lines = ["INCIDENT REPORT"]
    header_lines.append(
        "Reporting officer: "
        + (officer if officer else placeholder_marker("reporting officer name"))
        + " | badge "
        + (badge.group() if badge else placeholder_marker("badge number"))
    )
    header_lines.append(
        "Incident location: "
        + (location if location else placeholder_marker("incident location"))
    )
    header_lines.append(
        "Date and time: "
        + (f"around {time_hint}" if time_hint else placeholder_marker("date and time of incident"))
    )
    header = "\n".join(header_lines)

    narrative_sentences: list[str] = []
    provenance: list[ProvenanceLink] = []
    for event in events:
        for action in event.actions:
            support = _find_support(transcript, action.verb_phrase, action.object)
            if not support:
                continue  # narrative asserts only transcript-evidenced actions
            role, descriptor = event.actors[action.actor_ref]
            sentence = (
                f"The {corpus.ROLE_TO_WORD[role]} {descriptor} "
                f"{corpus.render_action_clause(action)}."
            )
            provenance.append(
                ProvenanceLink(
                    sentence_index=len(narrative_sentences), utterance_indices=support
                )
            )
            narrative_sentences.append(sentence)
    narrative = (
        " ".join(narrative_sentences)
        if narrative_sentences
        else placeholder_marker("narrative summary of the incident")
    )

    seen: list[tuple[SpeakerRole, str]] = []
    for event in events:
        for actor in event.actors:
            if actor not in seen:
                seen.append(actor)
    persons = (
        "\n".join(f"- {corpus.ROLE_TO_WORD[role]}: {desc}" for role, desc in seen)
        if seen
        else placeholder_marker("persons involved")
    )

    evidence_lines = [
        f"Interview transcript of {len(transcript.utterances)} utterances reviewed.",
        f"Statements were taken from "
        f"{len({u.speaker_id for u in transcript.utterances})} speakers on scene.",
    ]
    for event in events:
        evidence_lines.extend(event.outcome_fields)
    evidence = "\n".join(evidence_lines)

    sections = (
        ("header", header),
        ("narrative", narrative),
        ("persons", persons),
        ("evidence_actions", evidence),
    )
    return DraftDocument(
        draft_id=f"draft-{transcript.transcript_id}",
        sections=sections,
        placeholders=_collect_placeholders(sections),
        provenance=tuple(provenance),
        highlights=(),
        backend_used="baseline",
    )


def _collect_placeholders(sections: Sequence[tuple[str, str]]) -> tuple[Placeholder, ...]:
    out = []
    for section_id, text in sections:
        for hint, (start, _end) in scan_placeholders(text):
            out.append(
                Placeholder(placeholder_id=len(out), hint=hint, span=(section_id, start))
            )
    return tuple(out)


def _parse_remote_draft(transcript: Transcript, payload: str, backend_name: str) -> DraftDocument:
    chunks: dict[str, list[str]] = {}
    current: Optional[str] = None
    for line in payload.splitlines():
        header = re.fullmatch(r"##\s+(\w+)\s*", line)
        if header:
            current = header.group(1)
            if current not in SECTION_IDS:
                raise backends.MalformedBackendOutput(f"unknown section {current!r}")
            chunks[current] = []
        elif current is not None:
            chunks[current].append(line)
    if not chunks:
        raise backends.MalformedBackendOutput("no section headers in draft payload")
    sections = tuple(
        (sid, "\n".join(chunks.get(sid, ())).strip()) for sid in SECTION_IDS
    )
    try:
        placeholders = _collect_placeholders(sections)
    except MalformedPlaceholder as exc:
        raise backends.MalformedBackendOutput(str(exc)) from exc

    highlights = []
    narrative = sections[1][1]
    for start, end, chunk in _sentences(narrative):
        if PLACEHOLDER_OPEN not in chunk:
            highlights.append(("narrative", (start, end)))
    return DraftDocument(
        draft_id=f"draft-{transcript.transcript_id}",
        sections=sections,
        placeholders=placeholders,
        provenance=(),
        highlights=tuple(highlights),
        backend_used=backend_name,
    )


# --- placeholder resolution + rendering -----------------------------------------


def with_resolution(draft: DraftDocument, placeholder_id: int, text: str) -> DraftDocument:
    """Return a draft with one placeholder resolved. Section text keeps the
    marker (spans stay valid); the final render substitutes resolutions."""
    for pos, ph in enumerate(draft.placeholders):
        if ph.placeholder_id == placeholder_id:
            if ph.resolved_text is not None:
                raise KeyError(f"placeholder {placeholder_id} already resolved")
            updated = replace(ph, resolved_text=text)
            return replace(
                draft,
                placeholders=draft.placeholders[:pos] + (updated,) + draft.placeholders[pos + 1 :],
            )
    raise KeyError(f"no placeholder {placeholder_id}")


def render_draft(draft: DraftDocument) -> str:
    """Plain-text render with `## <section_id>` headers; markers verbatim."""
    parts = []
    for section_id, text in draft.sections:
        parts.append(f"## {section_id}\n{text}")
    return "\n\n".join(parts) + "\n"


def render_final(draft: DraftDocument) -> str:
    """Render with every placeholder replaced by its resolved text. Raises
    ValueError while any placeholder is unresolved."""
    unresolved = draft.unresolved()
    if unresolved:
        raise ValueError(f"{len(unresolved)} placeholders unresolved")
    by_section: dict[str, list[Placeholder]] = {}
    for ph in draft.placeholders:
        by_section.setdefault(ph.span[0], []).append(ph)
    parts = []
    for section_id, text in draft.sections:
        for ph in sorted(by_section.get(section_id, ()), key=lambda p: -p.span[1]):
            start = ph.span[1]
            end = text.index(PLACEHOLDER_CLOSE, start) + len(PLACEHOLDER_CLOSE)
            text = text[:start] + ph.resolved_text + text[end:]
        parts.append(f"## {section_id}\n{text}")
    return "\n\n".join(parts) + "\n"


def validate_draft(draft: DraftDocument, transcript: Transcript) -> None:
    """Check the structural invariants; raises ValueError on any breach."""
    scanned = []
    for section_id, text in draft.sections:
        for hint, (start, _end) in scan_placeholders(text):
            scanned.append((hint, (section_id, start)))
    declared = [(p.hint, p.span) for p in draft.placeholders]
    if scanned != declared:
        raise ValueError("placeholder table does not match section text")
    n = len(transcript.utterances)
    for link in draft.provenance:
        for idx in link.utterance_indices:
            if not 0 <= idx < n:
                raise ValueError(f"provenance references missing utterance {idx}")
    if draft.backend_used == "baseline":
        covered = {link.sentence_index for link in draft.provenance}
        narrative = draft.section_text("narrative")
        for pos, (_s, _e, chunk) in enumerate(_sentences(narrative)):
            if PLACEHOLDER_OPEN not in chunk and pos not in covered:
                raise ValueError(f"narrative sentence {pos} has no provenance")


# --- conclusory guard ------------------------------------------------------------

_conclusory_terms: Optional[list[str]] = None


def conclusory_lexicon() -> list[str]:
    global _conclusory_terms
    if _conclusory_terms is None:
        _conclusory_terms = assets.load_lexicon("conclusory_terms.txt")
    return _conclusory_terms


def conclusory_guard(
    draft: DraftDocument,
    transcript: Transcript,
    terms: Sequence[str] | None = None,
) -> list[Violation]:
    """Flag every occurrence of a conclusory term that the transcript does
    not contain verbatim. Quoting a word a speaker actually used is exempt."""
    lexicon = conclusory_lexicon() if terms is None else list(terms)
    violations = []
    for term in lexicon:
        pattern = re.compile(rf"\b{re.escape(term)}\b", re.IGNORECASE)
        if any(pattern.search(u.text) for u in transcript.utterances):
            continue
        for section_id, text in draft.sections:
            for m in pattern.finditer(text):
                violations.append(Violation(term=term, section_id=section_id, char_offset=m.start()))
    violations.sort(key=lambda v: (SECTION_IDS.index(v.section_id), v.char_offset))
    return violations


# --- wire format -------------------------------------------------------------------


def draft_to_doc(draft: DraftDocument) -> dict:
    return {
        "draft_id": draft.draft_id,
        "sections": [[sid, text] for sid, text in draft.sections],
        "placeholders": [
            {
                "placeholder_id": p.placeholder_id,
                "hint": p.hint,
                "section_id": p.span[0],
                "char_offset": p.span[1],
                "resolved_text": p.resolved_text,
            }
            for p in draft.placeholders
        ],
        "provenance": [
            {"sentence_index": l.sentence_index, "utterance_indices": list(l.utterance_indices)}
            for l in draft.provenance
        ],
        "highlights": [[sid, list(rng)] for sid, rng in draft.highlights],
        "backend_used": draft.backend_used,
    }


def draft_from_doc(doc: dict) -> DraftDocument:
    return DraftDocument(
        draft_id=doc["draft_id"],
        sections=tuple((sid, text) for sid, text in doc["sections"]),
        placeholders=tuple(
            Placeholder(
                placeholder_id=p["placeholder_id"],
                hint=p["hint"],
                span=(p["section_id"], p["char_offset"]),
                resolved_text=p.get("resolved_text"),
            )
            for p in doc["placeholders"]
        ),
        provenance=tuple(
            ProvenanceLink(
                sentence_index=l["sentence_index"],
                utterance_indices=tuple(l["utterance_indices"]),
            )
            for l in doc["provenance"]
        ),
        highlights=tuple((sid, (rng[0], rng[1])) for sid, rng in doc["highlights"]),
        backend_used=doc["backend_used"],
    )


def draft_json(draft: DraftDocument) -> str:
    return json.dumps(draft_to_doc(draft), sort_keys=True)
