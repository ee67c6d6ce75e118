"""Dialogue domain model: transcripts, case metadata, event records, error metrics.

Transcripts are immutable values; every operation here is a pure function, so
the types are safe to share across threads without coordination.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence


class DraftforgeError(Exception):
    """Base class for all domain errors raised by this package."""


class MalformedLine(DraftforgeError):
    def __init__(self, line_no: int, reason: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed line {line_no}" + (f": {reason}" if reason else ""))


class EmptyTranscript(DraftforgeError):
    pass


class DuplicateIndex(DraftforgeError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"duplicate utterance index {index}")


class EmptyReference(DraftforgeError):
    pass


class LengthMismatch(DraftforgeError):
    pass


class SpeakerRole(Enum):
    """Who an utterance is attributed to.

    UNKNOWN is only legal in noisy transcripts (background interjections);
    clean corpus output never carries it.
    """

    OFFICER = "OFFICER"
    SUSPECT = "SUSPECT"
    WITNESS = "WITNESS"
    VICTIM = "VICTIM"
    PERSON_OF_INTEREST = "POI"
    DISPATCH = "DISPATCH"
    UNKNOWN = "UNKNOWN"

    @classmethod
    def from_token(cls, token: str) -> "SpeakerRole":
        for role in cls:
            if role.value == token:
                return role
        raise ValueError(f"unknown role token {token!r}")


class TranscriptSource(Enum):
    ASR = "asr"
    SIMULATED = "simulated"


@dataclass(frozen=True)
class Utterance:
    index: int
    speaker_id: str
    role: SpeakerRole
    text: str
    start_ms: Optional[int] = None
    end_ms: Optional[int] = None

    def __post_init__(self):
        if not self.text or self.text != self.text.strip():
            raise ValueError("utterance text must be non-empty with no surrounding whitespace")
        if self.start_ms is not None and self.end_ms is not None and self.start_ms > self.end_ms:
            raise ValueError("start_ms must be <= end_ms")


@dataclass(frozen=True)
class Transcript:
    transcript_id: str
    utterances: tuple[Utterance, ...]
    source: TranscriptSource

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        for pos, utt in enumerate(self.utterances):
            if utt.index != pos:
                raise ValueError(f"utterance indices must be dense 0..n-1, got {utt.index} at {pos}")

    def __len__(self) -> int:
        return len(self.utterances)


@dataclass(frozen=True)
class CaseMetadata:
    """Officer-entered incident details.

    incident_type and charge_severity are stored and exported but are never
    readable by prompt assembly: the draft engine's prompt builder does not
    accept this type at all.
    """

    incident_type: str
    charge_severity: str  # "misdemeanor" | "felony" | "unspecified"
    officer_name: str
    case_number: str

    SEVERITIES = ("misdemeanor", "felony", "unspecified")

    def __post_init__(self):
        if self.charge_severity not in self.SEVERITIES:
            raise ValueError(f"charge_severity must be one of {self.SEVERITIES}")


@dataclass(frozen=True)
class EventAction:
    actor_ref: int  # index into EventRecord.actors
    verb_phrase: str
    object: str
    time_hint: str = ""
    location_hint: str = ""


@dataclass(frozen=True)
class EventRecord:
    """Structured incident facts; the ground truth for round-trip tests."""

    record_id: str
    offense_label: str
    actors: tuple[tuple[SpeakerRole, str], ...]  # (role, descriptor)
    actions: tuple[EventAction, ...]
    location: str
    outcome_fields: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "actors", tuple(tuple(a) for a in self.actors))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "outcome_fields", tuple(self.outcome_fields))
        if not self.actors:
            raise ValueError("event needs at least one actor")
        if not self.actions:
            raise ValueError("event needs at least one action")
        for act in self.actions:
            if not 0 <= act.actor_ref < len(self.actors):
                raise ValueError(f"actor_ref {act.actor_ref} does not resolve to an actor")

    def verb_phrases(self) -> list[str]:
        return [a.verb_phrase for a in self.actions]

    def to_json(self) -> str:
        return json.dumps(
            {
                "record_id": self.record_id,
                "offense_label": self.offense_label,
                "actors": [[role.value, desc] for role, desc in self.actors],
                "actions": [
                    {
                        "actor_ref": a.actor_ref,
                        "verb_phrase": a.verb_phrase,
                        "object": a.object,
                        "time_hint": a.time_hint,
                        "location_hint": a.location_hint,
                    }
                    for a in self.actions
                ],
                "location": self.location,
                "outcome_fields": list(self.outcome_fields),
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, raw: str) -> "EventRecord":
        doc = json.loads(raw)
        return cls(
            record_id=doc["record_id"],
            offense_label=doc["offense_label"],
            actors=tuple((SpeakerRole.from_token(r), d) for r, d in doc["actors"]),
            actions=tuple(EventAction(**a) for a in doc["actions"]),
            location=doc["location"],
            outcome_fields=tuple(doc.get("outcome_fields", ())),
        )


# --- parsing / serialization ------------------------------------------------

PLAIN_FORMAT = "plain"
JSONL_FORMAT = "jsonl"


def parse_transcript(
    raw: bytes | str,
    format: str,
    *,
    transcript_id: str = "t0",
    source: TranscriptSource = TranscriptSource.ASR,
) -> Transcript:
    """Parse a serialized transcript.

    jsonl: one object per line with keys index, speaker, role, text and
    optional start_ms/end_ms. plain: ``ROLE speaker_id: text`` per line.
    Raises MalformedLine, EmptyTranscript or DuplicateIndex.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    lines = [ln for ln in raw.split("\n") if ln.strip()]
    if not lines:
        raise EmptyTranscript("no utterances in input")
    if format == JSONL_FORMAT:
        utterances = _parse_jsonl(lines)
    elif format == PLAIN_FORMAT:
        utterances = _parse_plain(lines)
    else:
        raise ValueError(f"unknown transcript format {format!r}")
    return Transcript(transcript_id=transcript_id, utterances=tuple(utterances), source=source)


def _parse_jsonl(lines: Sequence[str]) -> list[Utterance]:
    utterances = []
    seen: set[int] = set()
    for line_no, line in enumerate(lines, start=1):
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedLine(line_no, "invalid json") from exc
        if not isinstance(doc, dict):
            raise MalformedLine(line_no, "expected an object")
        try:
            index = int(doc["index"])
            utt = Utterance(
                index=index,
                speaker_id=str(doc["speaker"]),
                role=SpeakerRole.from_token(str(doc["role"])),
                text=str(doc["text"]),
                start_ms=doc.get("start_ms"),
                end_ms=doc.get("end_ms"),
            )
        except DraftforgeError:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedLine(line_no, str(exc)) from exc
        if index in seen:
            raise DuplicateIndex(index)
        seen.add(index)
        if index != line_no - 1:
            raise MalformedLine(line_no, f"index {index} out of order")
        utterances.append(utt)
    return utterances


def _parse_plain(lines: Sequence[str]) -> list[Utterance]:
    utterances = []
    for line_no, line in enumerate(lines, start=1):
        head, sep, text = line.partition(": ")
        if not sep or not text.strip():
            raise MalformedLine(line_no, "expected 'ROLE speaker_id: text'")
        role_token, _, speaker_id = head.partition(" ")
        if not speaker_id:
            raise MalformedLine(line_no, "missing speaker id")
        try:
            role = SpeakerRole.from_token(role_token)
        except ValueError as exc:
            raise MalformedLine(line_no, str(exc)) from exc
        utterances.append(
            Utterance(index=line_no - 1, speaker_id=speaker_id, role=role, text=text.strip())
        )
    return utterances


def serialize_transcript(transcript: Transcript, format: str) -> str:
    """Inverse of parse_transcript. Plain format has no timestamp slot, so
    timestamps survive a round trip only through jsonl."""
    if format == JSONL_FORMAT:
        lines = []
        for utt in transcript.utterances:
            doc = {
                "index": utt.index,
                "speaker": utt.speaker_id,
                "role": utt.role.value,
                "text": utt.text,
            }
            if utt.start_ms is not None:
                doc["start_ms"] = utt.start_ms
            if utt.end_ms is not None:
                doc["end_ms"] = utt.end_ms
            lines.append(json.dumps(doc, sort_keys=True))
        return "\n".join(lines) + "\n"
    if format == PLAIN_FORMAT:
        return "\n".join(
            f"{u.role.value} {u.speaker_id}: {u.text}" for u in transcript.utterances
        ) + "\n"
    raise ValueError(f"unknown transcript format {format!r}")


# --- error metrics -----------------------------------------------------------

_TERMINAL_PUNCT = ".,?!"


def wer_tokens(text: str) -> list[str]:
    """WER tokenization: split on whitespace, casefold, strip terminal
    punctuation; tokens that collapse to nothing are dropped."""
    out = []
    for chunk in text.split():
        tok = chunk.casefold().rstrip(_TERMINAL_PUNCT)
        if tok:
            out.append(tok)
    return out


def _edit_distance(hyp: Sequence[str], ref: Sequence[str]) -> int:
    # Levenshtein over token sequences, two-row DP.
    prev = list(range(len(ref) + 1))
    for i, h in enumerate(hyp, start=1):
        cur = [i] + [0] * len(ref)
        for j, r in enumerate(ref, start=1):
            cur[j] = min(
                prev[j] + 1,
                cur[j - 1] + 1,
                prev[j - 1] + (h != r),
            )
        prev = cur
    return prev[-1]


def word_error_rate(hypothesis: str, reference: str) -> float:
    """(substitutions + insertions + deletions) / reference token count under
    minimal-edit alignment. Raises EmptyReference if the reference has no
    tokens after normalization."""
    ref = wer_tokens(reference)
    if not ref:
        raise EmptyReference("reference has no tokens")
    hyp = wer_tokens(hypothesis)
    return _edit_distance(hyp, ref) / len(ref)


def speaker_attribution_error_rate(hypothesis: Transcript, reference: Transcript) -> float:
    """Fraction of positions whose speaker_id differs from the reference.
    Alignment is positional; raises LengthMismatch on unequal counts."""
    if len(hypothesis) != len(reference):
        raise LengthMismatch(
            f"hypothesis has {len(hypothesis)} utterances, reference {len(reference)}"
        )
    if not reference.utterances:
        return 0.0
    wrong = sum(
        1
        for h, r in zip(hypothesis.utterances, reference.utterances)
        if h.speaker_id != r.speaker_id
    )
    return wrong / len(reference)


def transcript_wer(hypothesis: Transcript, reference: Transcript) -> float:
    """WER over the whole transcript: both sides concatenated in order."""
    hyp_text = " ".join(u.text for u in hypothesis.utterances)
    ref_text = " ".join(u.text for u in reference.utterances)
    return word_error_rate(hyp_text, ref_text)
