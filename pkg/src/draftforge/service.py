"""HTTP service wiring the pipeline end to end.

Evidence bytes land in a content-addressed store, a (mock or remote) ASR
client turns audio evidence into a transcript via its sidecar, the model
backends denoise/extract/draft, and the review workflow gates every step
until a signed case is exported to the records-management drop directory.

Per-case mutations are serialized with an exclusive lock; every successful
mutation appends to the case's event log, and the registry is rebuilt by
replaying those logs at startup.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml
from fastapi import Body, FastAPI, Query
from fastapi.responses import JSONResponse

from . import backends, drafting, workflow
from .backends import BackendDescriptor
from .transcripts import CaseMetadata, DraftforgeError, Transcript, parse_transcript
from .workflow import Action, CaseRecord, CaseState

MEDIA_KINDS = ("audio", "transcript_sidecar")


class NoSidecar(DraftforgeError):
    pass


class InvalidState(DraftforgeError):
    pass


class UnknownCase(DraftforgeError):
    pass


@dataclass(frozen=True)
class EvidenceRef:
    digest: str
    media_kind: str
    byte_length: int
    stored_at: str

    def token(self) -> str:
        return f"{self.media_kind}:{self.digest}"


class EvidenceStore:
    """Content-addressed blob store; writes are atomic (temp then rename)."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _blob_path(self, digest: str) -> Path:
        return self.root / f"sha256-{digest}"

    def put(self, data: bytes, media_kind: str) -> EvidenceRef:
        if media_kind not in MEDIA_KINDS:
            raise ValueError(f"media_kind must be one of {MEDIA_KINDS}")
        digest = hashlib.sha256(data).hexdigest()
        path = self._blob_path(digest)
        if not path.exists():
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            os.replace(tmp, path)
        return EvidenceRef(
            digest=digest, media_kind=media_kind, byte_length=len(data), stored_at=str(path)
        )

    def get(self, digest: str) -> bytes:
        path = self._blob_path(digest)
        if not path.exists():
            raise FileNotFoundError(digest)
        return path.read_bytes()

    def link_sidecar(self, audio_digest: str, sidecar_digest: str) -> None:
        link = self._blob_path(audio_digest).with_suffix(".sidecar")
        tmp = link.with_suffix(".sidecar.tmp")
        tmp.write_text(sidecar_digest, encoding="utf-8")
        os.replace(tmp, link)

    def sidecar_digest(self, audio_digest: str) -> Optional[str]:
        link = self._blob_path(audio_digest).with_suffix(".sidecar")
        if not link.exists():
            return None
        return link.read_text(encoding="utf-8").strip()


class MockAsrClient:
    """Stand-in for the hosted speech service: reads the transcript sidecar
    stored alongside the audio blob instead of decoding audio."""

    def __init__(self, store: EvidenceStore):
        self.store = store

    def transcribe(self, evidence: EvidenceRef) -> Transcript:
        sidecar = self.store.sidecar_digest(evidence.digest)
        if sidecar is None:
            raise NoSidecar(f"audio {evidence.digest} has no transcript sidecar")
        raw = self.store.get(sidecar)
        return parse_transcript(
            raw, "jsonl", transcript_id=f"asr-{evidence.digest[:12]}"
        )


class RemoteAsrClient:
    """Posts audio bytes to a hosted recognizer and parses its jsonl reply."""

    def __init__(self, endpoint: str, timeout_ms: int = 30_000):
        self.endpoint = endpoint
        self.timeout_ms = timeout_ms

    def transcribe(self, evidence: EvidenceRef) -> Transcript:
        import httpx

        data = Path(evidence.stored_at).read_bytes()
        try:
            response = httpx.post(
                self.endpoint,
                content=data,
                headers={"content-type": "application/octet-stream"},
                timeout=self.timeout_ms / 1000.0,
            )
        except httpx.HTTPError as exc:
            raise backends.BackendUnavailable(f"asr endpoint failed: {exc}") from exc
        if response.status_code != 200:
            raise backends.BackendUnavailable(f"asr endpoint answered {response.status_code}")
        return parse_transcript(
            response.text, "jsonl", transcript_id=f"asr-{evidence.digest[:12]}"
        )


@dataclass
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8327
    storage_root: str = "./storage"
    export_dir: str = "./exports"
    backend_specs: dict = field(default_factory=dict)
    asr_endpoint: Optional[str] = None
    asset_overrides: dict = field(default_factory=dict)

    def backend(self, role: str) -> BackendDescriptor:
        spec = dict(self.backend_specs.get(role, {}))
        spec.setdefault("kind", "baseline")
        return BackendDescriptor(role=role, **spec)

    @classmethod
    def load(cls, path: str | Path) -> "ServiceConfig":
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        listen = doc.get("listen", "127.0.0.1:8327")
        host, _, port = listen.rpartition(":")
        config = cls(
            listen_host=host or "127.0.0.1",
            listen_port=int(port),
            storage_root=doc.get("storage_root", "./storage"),
            export_dir=doc.get("export_dir", "./exports"),
            backend_specs=doc.get("backends", {}),
            asr_endpoint=doc.get("asr_endpoint"),
            asset_overrides=doc.get("assets", {}) or {},
        )
        for name, override in config.asset_overrides.items():
            if override and not Path(override).exists():
                raise FileNotFoundError(f"asset override {name} -> {override} does not exist")
        return config


def rms_export(
    record: CaseRecord, evidence: list[EvidenceRef], export_dir: str | Path
) -> Path:
    """Write the records-management export for a submitted case: the final
    rendered draft (all placeholders resolved), the stored metadata and
    signature, the audit head, and the evidence manifest. Deterministic, so
    a re-run is byte-identical."""
    if record.state is not CaseState.SUBMITTED:
        raise InvalidState(f"cannot export a case in state {record.state.value}")
    assert record.draft is not None and record.signature is not None
    doc = {
        "case_id": record.case_id,
        "report_text": drafting.render_final(record.draft),
        "metadata": {
            "incident_type": record.metadata.incident_type,
            "charge_severity": record.metadata.charge_severity,
            "officer_name": record.metadata.officer_name,
            "case_number": record.metadata.case_number,
        }
        if record.metadata
        else None,
        "signature": {"full_name": record.signature[0], "signed_at": record.signature[1]},
        "audit_head": record.audit_head,
        "digest_algorithm": record.digest_algorithm,
        "evidence": [
            {"digest": e.digest, "media_kind": e.media_kind, "byte_length": e.byte_length}
            for e in evidence
        ],
    }
    out_dir = Path(export_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{record.case_id}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


class CaseService:
    """Registry of cases with per-case write serialization and append-only
    event logs under <storage_root>/cases/."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        root = Path(config.storage_root)
        self.store = EvidenceStore(root / "blobs")
        self.case_dir = root / "cases"
        self.case_dir.mkdir(parents=True, exist_ok=True)
        self.asr = (
            RemoteAsrClient(config.asr_endpoint)
            if config.asr_endpoint
            else MockAsrClient(self.store)
        )
        self._registry_lock = threading.Lock()
        self._case_locks: dict[str, threading.Lock] = {}
        self._cases: dict[str, CaseRecord] = {}
        self._evidence: dict[str, list[EvidenceRef]] = {}
        self._recover()

    # -- persistence --

    def _log_path(self, case_id: str) -> Path:
        return self.case_dir / f"{case_id}.log"

    def _append_log(self, case_id: str, line: str) -> None:
        with open(self._log_path(case_id), "a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())

    def _recover(self) -> None:
        for log in sorted(self.case_dir.glob("*.log")):
            lines = log.read_text(encoding="utf-8").splitlines()
            record = workflow.replay_log(lines)
            self._cases[record.case_id] = record
            self._case_locks[record.case_id] = threading.Lock()
            self._evidence[record.case_id] = [
                self._ref_from_token(token) for token in record.evidence_refs
            ]

    def _ref_from_token(self, token: str) -> EvidenceRef:
        media_kind, _, digest = token.partition(":")
        data = self.store.get(digest)
        return EvidenceRef(
            digest=digest,
            media_kind=media_kind,
            byte_length=len(data),
            stored_at=str(self.store._blob_path(digest)),
        )

    # -- case operations --

    def _lock_for(self, case_id: str) -> threading.Lock:
        with self._registry_lock:
            if case_id not in self._cases:
                raise UnknownCase(case_id)
            return self._case_locks[case_id]

    def create_case(self, case_id: str) -> CaseRecord:
        with self._registry_lock:
            if case_id in self._cases:
                raise ValueError(f"case {case_id} already exists")
            record = workflow.new_case(case_id)
            self._cases[case_id] = record
            self._case_locks[case_id] = threading.Lock()
            self._evidence[case_id] = []
        self._append_log(case_id, workflow.create_log_line(record))
        return record

    def get_case(self, case_id: str) -> CaseRecord:
        with self._registry_lock:
            if case_id not in self._cases:
                raise UnknownCase(case_id)
            return self._cases[case_id]

    def evidence_for(self, case_id: str) -> list[EvidenceRef]:
        with self._registry_lock:
            return list(self._evidence.get(case_id, ()))

    def _apply(self, case_id: str, action: Action) -> CaseRecord:
        record = workflow.transition(self._cases[case_id], action)
        self._append_log(case_id, workflow.log_line(record.audit[-1], action))
        self._cases[case_id] = record
        return record

    def attach_evidence(
        self, case_id: str, data: bytes, media_kind: str, audio_digest: Optional[str] = None
    ) -> tuple[CaseRecord, EvidenceRef]:
        lock = self._lock_for(case_id)
        with lock:
            ref = self.store.put(data, media_kind)
            if media_kind == "transcript_sidecar":
                target = audio_digest or self._latest_audio_digest(case_id)
                if target is None:
                    raise NoSidecar("no audio evidence to attach the sidecar to")
                self.store.link_sidecar(target, ref.digest)
            record = self._apply(case_id, Action.attach(ref.token()))
            self._evidence[case_id].append(ref)
            return record, ref

    def _latest_audio_digest(self, case_id: str) -> Optional[str]:
        for ref in reversed(self._evidence.get(case_id, ())):
            if ref.media_kind == "audio":
                return ref.digest
        return None

    def enter_metadata(self, case_id: str, metadata: CaseMetadata) -> CaseRecord:
        with self._lock_for(case_id):
            return self._apply(case_id, Action.enter_metadata(metadata))

    def generate_draft(self, case_id: str) -> CaseRecord:
        with self._lock_for(case_id):
            record = self._cases[case_id]
            audio = self._latest_audio_digest(case_id)
            if audio is None:
                raise NoSidecar("case has no audio evidence")
            audio_ref = self._ref_from_token(f"audio:{audio}")
            noisy = self.asr.transcribe(audio_ref)
            clean = backends.denoise(noisy, self.config.backend("denoise"))
            events = backends.extract_events(clean, self.config.backend("extract"))
            draft = drafting.generate_draft(clean, events, self.config.backend("draft"))
            action = (
                Action.regenerate(draft, f"audio:{audio}")
                if record.state is CaseState.EDITING
                else Action.generate(draft, f"audio:{audio}")
            )
            return self._apply(case_id, action)

    def resolve_placeholder(self, case_id: str, placeholder_id: int, text: str) -> CaseRecord:
        with self._lock_for(case_id):
            return self._apply(case_id, Action.resolve(placeholder_id, text))

    def amend(self, case_id: str, section_id: str, text: str) -> CaseRecord:
        with self._lock_for(case_id):
            return self._apply(case_id, Action.amend(section_id, text))

    def sign(self, case_id: str, full_name: str) -> CaseRecord:
        with self._lock_for(case_id):
            return self._apply(case_id, Action.sign(full_name))

    def submit(self, case_id: str) -> tuple[CaseRecord, Path]:
        with self._lock_for(case_id):
            record = self._apply(case_id, Action.submit())
            path = rms_export(record, self._evidence[case_id], self.config.export_dir)
            return record, path


# --- HTTP layer -----------------------------------------------------------------


def _case_view(record: CaseRecord) -> dict:
    return {
        "case_id": record.case_id,
        "state": record.state.value,
        "metadata": {
            "incident_type": record.metadata.incident_type,
            "charge_severity": record.metadata.charge_severity,
            "officer_name": record.metadata.officer_name,
            "case_number": record.metadata.case_number,
        }
        if record.metadata
        else None,
        "transcript_ref": record.transcript_ref,
        "draft": drafting.draft_to_doc(record.draft) if record.draft else None,
        "unresolved_placeholders": record.unresolved_count(),
        "signature": {"full_name": record.signature[0], "signed_at": record.signature[1]}
        if record.signature
        else None,
        "evidence": list(record.evidence_refs),
        "audit_head": record.audit_head,
    }


_CONFLICTS = (workflow.InvalidTransition, InvalidState)
_NOT_FOUND = (UnknownCase, workflow.UnknownPlaceholder, FileNotFoundError)
_UNPROCESSABLE = (
    workflow.EmptyResolution,
    workflow.InvalidResolution,
    workflow.InvalidName,
    NoSidecar,
    ValueError,
)


def _error_response(exc: Exception) -> JSONResponse:
    if isinstance(exc, workflow.PlaceholdersUnresolved):
        return JSONResponse(
            status_code=409, content={"error": "PlaceholdersUnresolved", "count": exc.count}
        )
    if isinstance(exc, _CONFLICTS):
        return JSONResponse(status_code=409, content={"error": type(exc).__name__, "detail": str(exc)})
    if isinstance(exc, _NOT_FOUND):
        return JSONResponse(status_code=404, content={"error": type(exc).__name__, "detail": str(exc)})
    if isinstance(exc, _UNPROCESSABLE):
        return JSONResponse(status_code=422, content={"error": type(exc).__name__, "detail": str(exc)})
    raise exc


def create_app(config: ServiceConfig) -> FastAPI:
    service = CaseService(config)
    app = FastAPI(title="draftforge", version="0.1.0")
    app.state.service = service
    counter = {"n": 0}
    counter_lock = threading.Lock()

    @app.exception_handler(DraftforgeError)
    def on_domain_error(_request, exc: DraftforgeError):
        return _error_response(exc)

    @app.exception_handler(ValueError)
    def on_value_error(_request, exc: ValueError):
        return _error_response(exc)

    @app.exception_handler(FileNotFoundError)
    def on_missing(_request, exc: FileNotFoundError):
        return _error_response(exc)

    @app.post("/cases", status_code=201)
    def create_case():
        with counter_lock:
            counter["n"] += 1
            case_id = f"case-{counter['n']:06d}"
            while case_id in service._cases:
                counter["n"] += 1
                case_id = f"case-{counter['n']:06d}"
        record = service.create_case(case_id)
        return _case_view(record)

    @app.post("/cases/{case_id}/evidence")
    def upload_evidence(
        case_id: str,
        kind: str = Query("audio"),
        audio: Optional[str] = Query(None),
        data: bytes = Body(..., media_type="application/octet-stream"),
    ):
        record, ref = service.attach_evidence(case_id, data, kind, audio_digest=audio)
        return {
            "digest": ref.digest,
            "media_kind": ref.media_kind,
            "byte_length": ref.byte_length,
            "state": record.state.value,
        }

    @app.post("/cases/{case_id}/metadata")
    def enter_metadata(case_id: str, body: dict = Body(...)):
        metadata = CaseMetadata(
            incident_type=body.get("incident_type", ""),
            charge_severity=body.get("charge_severity", "unspecified"),
            officer_name=body.get("officer_name", ""),
            case_number=body.get("case_number", ""),
        )
        return _case_view(service.enter_metadata(case_id, metadata))

    @app.post("/cases/{case_id}/draft")
    def generate(case_id: str):
        record = service.generate_draft(case_id)
        return drafting.draft_to_doc(record.draft)

    @app.patch("/cases/{case_id}/placeholders/{placeholder_id}")
    def resolve(case_id: str, placeholder_id: int, body: dict = Body(...)):
        record = service.resolve_placeholder(case_id, placeholder_id, body.get("text", ""))
        return _case_view(record)

    @app.post("/cases/{case_id}/amend")
    def amend(case_id: str, body: dict = Body(...)):
        record = service.amend(case_id, body.get("section_id", ""), body.get("text", ""))
        return _case_view(record)

    @app.post("/cases/{case_id}/sign")
    def sign(case_id: str, body: dict = Body(...)):
        return _case_view(service.sign(case_id, body.get("full_name", "")))

    @app.post("/cases/{case_id}/submit")
    def submit(case_id: str):
        record, path = service.submit(case_id)
        view = _case_view(record)
        view["export_path"] = str(path)
        return view

    @app.get("/cases/{case_id}")
    def get_case(case_id: str):
        return _case_view(service.get_case(case_id))

    @app.get("/cases/{case_id}/audit")
    def get_audit(case_id: str):
        record = service.get_case(case_id)
        return {
            "entries": [
                {
                    "seq": e.seq,
                    "actor": e.actor,
                    "action": e.action,
                    "timestamp": e.timestamp,
                    "payload_digest": e.payload_digest,
                    "prev_digest": e.prev_digest,
                }
                for e in record.audit
            ],
            "audit_head": record.audit_head,
            "verified": workflow.verify_audit(record),
        }

    return app
