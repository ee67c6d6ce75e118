"""Human-in-the-loop review state machine with a tamper-evident audit trail.

Hard gates: every INSERT placeholder must be resolved before the case can be
signed, the signature needs a full (two-token) name, and only a signed case
can be submitted. Free-text amendments are audit-logged but never gate.

All operations are functional: they take a CaseRecord and return a new one
with an audit entry appended. The service layer serializes writers per case;
records themselves are immutable snapshots.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum
from typing import Optional

from . import drafting
from .drafting import DraftDocument
from .transcripts import CaseMetadata, DraftforgeError

GENESIS_DIGEST = "0" * 64
DIGEST_ALGORITHM = "sha256"


class InvalidTransition(DraftforgeError):
    def __init__(self, state: "CaseState", action: str):
        self.state = state
        self.action = action
        super().__init__(f"action {action!r} is not valid in state {state.value}")


class PlaceholdersUnresolved(DraftforgeError):
    def __init__(self, count: int):
        self.count = count
        super().__init__(f"{count} placeholders still unresolved")


class SignatureMissing(DraftforgeError):
    pass


class UnknownPlaceholder(DraftforgeError):
    pass


class EmptyResolution(DraftforgeError):
    pass


class InvalidResolution(DraftforgeError):
    pass


class InvalidName(DraftforgeError):
    pass


class CaseState(Enum):
    CREATED = "Created"
    EVIDENCE_ATTACHED = "EvidenceAttached"
    METADATA_ENTERED = "MetadataEntered"
    DRAFT_GENERATED = "DraftGenerated"
    EDITING = "Editing"
    READY_TO_SIGN = "ReadyToSign"
    SIGNED = "Signed"
    SUBMITTED = "Submitted"


_STATE_ORDER = {state: i for i, state in enumerate(CaseState)}


def state_at_least(state: CaseState, floor: CaseState) -> bool:
    return _STATE_ORDER[state] >= _STATE_ORDER[floor]


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    actor: str
    action: str
    timestamp: str
    payload_digest: str
    prev_digest: str

    def chain_digest(self) -> str:
        doc = json.dumps(
            {
                "seq": self.seq,
                "actor": self.actor,
                "action": self.action,
                "timestamp": self.timestamp,
                "payload_digest": self.payload_digest,
                "prev_digest": self.prev_digest,
            },
            sort_keys=True,
        )
        return hashlib.sha256(doc.encode("utf-8")).hexdigest()


def _payload_digest(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()


@dataclass(frozen=True)
class CaseRecord:
    case_id: str
    state: CaseState
    metadata: Optional[CaseMetadata] = None
    transcript_ref: Optional[str] = None
    draft: Optional[DraftDocument] = None
    signature: Optional[tuple[str, str]] = None  # (full_name, timestamp)
    evidence_refs: tuple[str, ...] = ()
    audit: tuple[AuditEntry, ...] = ()
    audit_head: str = GENESIS_DIGEST
    digest_algorithm: str = DIGEST_ALGORITHM

    def unresolved_count(self) -> int:
        return len(self.draft.unresolved()) if self.draft else 0

    def check_invariants(self) -> None:
        if (self.draft is not None) != state_at_least(self.state, CaseState.DRAFT_GENERATED):
            raise ValueError("draft present iff state >= DraftGenerated")
        if (self.signature is not None) != state_at_least(self.state, CaseState.SIGNED):
            raise ValueError("signature present iff state >= Signed")
        if (self.metadata is not None) != state_at_least(self.state, CaseState.METADATA_ENTERED):
            raise ValueError("metadata present iff state >= MetadataEntered")


@dataclass(frozen=True)
class Action:
    kind: str
    ref: Optional[str] = None
    metadata: Optional[CaseMetadata] = None
    draft: Optional[DraftDocument] = None
    transcript_ref: Optional[str] = None
    section_id: Optional[str] = None
    text: Optional[str] = None
    placeholder_id: Optional[int] = None
    full_name: Optional[str] = None

    @staticmethod
    def attach(ref: str) -> "Action":
        return Action(kind="attach", ref=ref)

    @staticmethod
    def enter_metadata(metadata: CaseMetadata) -> "Action":
        return Action(kind="enter_metadata", metadata=metadata)

    @staticmethod
    def generate(draft: DraftDocument, transcript_ref: str = "") -> "Action":
        return Action(kind="generate", draft=draft, transcript_ref=transcript_ref)

    @staticmethod
    def regenerate(draft: DraftDocument, transcript_ref: str = "") -> "Action":
        return Action(kind="regenerate", draft=draft, transcript_ref=transcript_ref)

    @staticmethod
    def amend(section_id: str, text: str) -> "Action":
        return Action(kind="amend", section_id=section_id, text=text)

    @staticmethod
    def resolve(placeholder_id: int, text: str) -> "Action":
        return Action(kind="resolve", placeholder_id=placeholder_id, text=text)

    @staticmethod
    def sign(full_name: str) -> "Action":
        return Action(kind="sign", full_name=full_name)

    @staticmethod
    def submit() -> "Action":
        return Action(kind="submit")

    def payload(self) -> dict:
        doc: dict = {}
        if self.ref is not None:
            doc["ref"] = self.ref
        if self.metadata is not None:
            doc["metadata"] = {
                "incident_type": self.metadata.incident_type,
                "charge_severity": self.metadata.charge_severity,
                "officer_name": self.metadata.officer_name,
                "case_number": self.metadata.case_number,
            }
        if self.draft is not None:
            doc["draft"] = drafting.draft_to_doc(self.draft)
        if self.transcript_ref is not None:
            doc["transcript_ref"] = self.transcript_ref
        if self.section_id is not None:
            doc["section_id"] = self.section_id
        if self.text is not None:
            doc["text"] = self.text
        if self.placeholder_id is not None:
            doc["placeholder_id"] = self.placeholder_id
        if self.full_name is not None:
            doc["full_name"] = self.full_name
        return doc

    @classmethod
    def from_payload(cls, kind: str, doc: dict) -> "Action":
        metadata = None
        if "metadata" in doc:
            metadata = CaseMetadata(**doc["metadata"])
        draft = drafting.draft_from_doc(doc["draft"]) if "draft" in doc else None
        return cls(
            kind=kind,
            ref=doc.get("ref"),
            metadata=metadata,
            draft=draft,
            transcript_ref=doc.get("transcript_ref"),
            section_id=doc.get("section_id"),
            text=doc.get("text"),
            placeholder_id=doc.get("placeholder_id"),
            full_name=doc.get("full_name"),
        )


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _append_audit(
    record: CaseRecord, action: str, payload: dict, actor: str, now: Optional[str]
) -> CaseRecord:
    entry = AuditEntry(
        seq=len(record.audit),
        actor=actor,
        action=action,
        timestamp=now if now is not None else _now(),
        payload_digest=_payload_digest(payload),
        prev_digest=record.audit_head,
    )
    return replace(record, audit=record.audit + (entry,), audit_head=entry.chain_digest())


def new_case(case_id: str, actor: str = "officer", now: Optional[str] = None) -> CaseRecord:
    record = CaseRecord(case_id=case_id, state=CaseState.CREATED)
    return _append_audit(record, "create", {"case_id": case_id}, actor, now)


def _auto_ready(record: CaseRecord) -> CaseRecord:
    # Editing -> ReadyToSign is automatic once no placeholder is unresolved;
    # a draft generated with zero placeholders skips Editing the same way.
    if record.state in (CaseState.DRAFT_GENERATED, CaseState.EDITING):
        if record.unresolved_count() == 0:
            return replace(record, state=CaseState.READY_TO_SIGN)
    return record


def transition(
    case: CaseRecord, action: Action, actor: str = "officer", now: Optional[str] = None
) -> CaseRecord:
    """Apply one action per the edge table; returns the advanced record with
    an audit entry appended. Raises InvalidTransition, PlaceholdersUnresolved,
    InvalidName, UnknownPlaceholder, EmptyResolution or SignatureMissing."""
    kind = action.kind
    state = case.state
    # one clock read per transition: the signature stamp and the audit entry
    # must agree or log replay cannot reproduce the record
    now = now if now is not None else _now()

    if kind == "attach":
        # re-attaching more evidence while already attached is a self-loop
        if state not in (CaseState.CREATED, CaseState.EVIDENCE_ATTACHED):
            raise InvalidTransition(state, kind)
        record = replace(
            case,
            state=CaseState.EVIDENCE_ATTACHED,
            evidence_refs=case.evidence_refs + (action.ref or "",),
        )
    elif kind == "enter_metadata":
        if state is not CaseState.EVIDENCE_ATTACHED:
            raise InvalidTransition(state, kind)
        if action.metadata is None:
            raise ValueError("enter_metadata requires metadata")
        record = replace(case, state=CaseState.METADATA_ENTERED, metadata=action.metadata)
    elif kind == "generate":
        if state is not CaseState.METADATA_ENTERED:
            raise InvalidTransition(state, kind)
        if action.draft is None:
            raise ValueError("generate requires a draft")
        record = _auto_ready(
            replace(
                case,
                state=CaseState.DRAFT_GENERATED,
                draft=action.draft,
                transcript_ref=action.transcript_ref or case.transcript_ref,
            )
        )
    elif kind == "regenerate":
        if state is not CaseState.EDITING:
            raise InvalidTransition(state, kind)
        if action.draft is None:
            raise ValueError("regenerate requires a draft")
        record = _auto_ready(replace(case, state=CaseState.DRAFT_GENERATED, draft=action.draft))
    elif kind == "amend":
        if state not in (CaseState.DRAFT_GENERATED, CaseState.EDITING):
            raise InvalidTransition(state, kind)
        record = replace(
            case,
            state=CaseState.EDITING,
            draft=_amended(case.draft, action.section_id, action.text),
        )
    elif kind == "resolve":
        record = _resolve(case, action.placeholder_id, action.text)
    elif kind == "sign":
        if state in (CaseState.DRAFT_GENERATED, CaseState.EDITING) and case.unresolved_count():
            raise PlaceholdersUnresolved(case.unresolved_count())
        record = _signed(case, action.full_name, now)
    elif kind == "submit":
        if state is not CaseState.SIGNED:
            raise InvalidTransition(state, kind)
        if case.signature is None:
            raise SignatureMissing("signed case lacks a signature")
        record = replace(case, state=CaseState.SUBMITTED)
    else:
        raise ValueError(f"unknown action kind {kind!r}")

    return _append_audit(record, kind, action.payload(), actor, now)


def _amended(draft: Optional[DraftDocument], section_id: Optional[str], text: Optional[str]) -> DraftDocument:
    if draft is None:
        raise ValueError("no draft to amend")
    if section_id not in drafting.SECTION_IDS:
        raise ValueError(f"unknown section {section_id!r}")
    if not text or not text.strip():
        raise ValueError("amendment text must be non-empty")
    if "[[" in text or "]]" in text:
        raise InvalidResolution("amendment may not contain placeholder delimiters")
    # amendments append below the section so placeholder offsets stay valid
    sections = tuple(
        (sid, body + "\n" + text.strip() if sid == section_id else body)
        for sid, body in draft.sections
    )
    return replace(draft, sections=sections)


def _resolve(case: CaseRecord, placeholder_id: Optional[int], text: Optional[str]) -> CaseRecord:
    if case.state not in (CaseState.DRAFT_GENERATED, CaseState.EDITING):
        raise InvalidTransition(case.state, "resolve")
    assert case.draft is not None
    if placeholder_id is None or not any(
        p.placeholder_id == placeholder_id and p.resolved_text is None
        for p in case.draft.placeholders
    ):
        raise UnknownPlaceholder(f"no unresolved placeholder {placeholder_id}")
    if text is None or not text.strip():
        raise EmptyResolution("resolution text must be non-empty")
    if "[[" in text or "]]" in text:
        raise InvalidResolution("resolution may not contain placeholder delimiters")
    draft = drafting.with_resolution(case.draft, placeholder_id, text.strip())
    return _auto_ready(replace(case, state=CaseState.EDITING, draft=draft))


def _signed(case: CaseRecord, full_name: Optional[str], now: Optional[str]) -> CaseRecord:
    if case.state is not CaseState.READY_TO_SIGN:
        raise InvalidTransition(case.state, "sign")
    if full_name is None or len(full_name.split()) < 2:
        raise InvalidName("signature requires a full name (at least two words)")
    stamp = now if now is not None else _now()
    return replace(case, state=CaseState.SIGNED, signature=(full_name, stamp))


def resolve_placeholder(
    case: CaseRecord,
    placeholder_id: int,
    text: str,
    actor: str = "officer",
    now: Optional[str] = None,
) -> CaseRecord:
    return transition(case, Action.resolve(placeholder_id, text), actor=actor, now=now)


def sign(
    case: CaseRecord, full_name: str, actor: str = "officer", now: Optional[str] = None
) -> CaseRecord:
    """Strict signing: valid only in ReadyToSign. The `transition` dispatcher
    additionally reports PlaceholdersUnresolved for premature sign attempts;
    this direct form raises InvalidTransition for any wrong state."""
    now = now if now is not None else _now()
    record = _signed(case, full_name, now)
    return _append_audit(record, "sign", Action.sign(full_name).payload(), actor, now)


def verify_audit(case: CaseRecord) -> bool:
    """True iff the digest chain validates end to end, including the head."""
    head = GENESIS_DIGEST
    for seq, entry in enumerate(case.audit):
        if entry.seq != seq or entry.prev_digest != head:
            return False
        head = entry.chain_digest()
    return head == case.audit_head


# --- append-only event log -----------------------------------------------------


def log_line(entry: AuditEntry, action: Action) -> str:
    return json.dumps(
        {
            "entry": {
                "seq": entry.seq,
                "actor": entry.actor,
                "action": entry.action,
                "timestamp": entry.timestamp,
                "payload_digest": entry.payload_digest,
                "prev_digest": entry.prev_digest,
            },
            "payload": action.payload(),
        },
        sort_keys=True,
    )


def create_log_line(case: CaseRecord) -> str:
    entry = case.audit[0]
    return json.dumps(
        {"entry": entry.__dict__, "payload": {"case_id": case.case_id}}, sort_keys=True
    )


def replay_log(lines: list[str]) -> CaseRecord:
    """Fold an event log back into the CaseRecord it produced. Deterministic:
    timestamps and payloads are taken from the log, so the rebuilt record is
    identical to the live one."""
    if not lines:
        raise ValueError("empty event log")
    first = json.loads(lines[0])
    if first["entry"]["action"] != "create":
        raise ValueError("event log must start with a create entry")
    record = new_case(
        first["payload"]["case_id"],
        actor=first["entry"]["actor"],
        now=first["entry"]["timestamp"],
    )
    for line in lines[1:]:
        doc = json.loads(line)
        action = Action.from_payload(doc["entry"]["action"], doc["payload"])
        record = transition(
            record, action, actor=doc["entry"]["actor"], now=doc["entry"]["timestamp"]
        )
    return record
