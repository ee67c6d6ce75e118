"""Pluggable model backends for the three model roles.

Each role (denoise, extract, draft) has a deterministic rule-based baseline
and a remote chat-completion client behind the same contract, so the whole
system runs offline for tests and swaps in fine-tuned models in deployment.
Baselines are pure functions; remote calls keep retry state per call.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass
from typing import Optional

import httpx

from . import assets, corpus
from .noise import interjection_lexicon
from .transcripts import (
    DraftforgeError,
    EventRecord,
    SpeakerRole,
    Transcript,
    Utterance,
    parse_transcript,
    serialize_transcript,
)

ROLES = ("denoise", "extract", "draft")
KINDS = ("baseline", "remote")

TOKEN_ENV_VAR = "DRAFTFORGE_MODEL_TOKEN"

# base of the exponential backoff between retries; patched down in tests
RETRY_BASE_SECONDS = 0.05


class BackendUnavailable(DraftforgeError):
    pass


class TimeoutExceeded(DraftforgeError):
    pass


class MalformedBackendOutput(DraftforgeError):
    pass


@dataclass(frozen=True)
class BackendDescriptor:
    role: str
    kind: str
    endpoint: Optional[str] = None
    model_name: Optional[str] = None
    timeout_ms: int = 10_000
    max_retries: int = 2

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote backends require an endpoint")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class BackendResult:
    payload: str
    latency_ms: float
    backend: BackendDescriptor
    attempt_count: int

    def __post_init__(self):
        if self.attempt_count > self.backend.max_retries + 1:
            raise ValueError("attempt_count exceeds max_retries + 1")


def baseline(role: str) -> BackendDescriptor:
    return BackendDescriptor(role=role, kind="baseline")


def call_remote(backend: BackendDescriptor, prompt: str) -> BackendResult:
    """Chat-completion request with exponential backoff.

    Retries transport failures, timeouts and 5xx responses up to
    max_retries; 4xx responses fail immediately. Raises TimeoutExceeded when
    the final failure was a timeout, BackendUnavailable otherwise.
    """
    if backend.kind != "remote":
        raise ValueError("call_remote requires a remote backend")
    body = {
        "model": backend.model_name or "default",
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
    }
    headers = {}
    token = os.environ.get(TOKEN_ENV_VAR)
    if token:
        headers["Authorization"] = f"Bearer {token}"

    started = time.monotonic()
    last_was_timeout = False
    attempts = backend.max_retries + 1
    for attempt in range(attempts):
        if attempt:
            time.sleep(RETRY_BASE_SECONDS * 2 ** (attempt - 1))
        try:
            response = httpx.post(
                backend.endpoint,
                json=body,
                headers=headers,
                timeout=backend.timeout_ms / 1000.0,
            )
        except httpx.TimeoutException:
            last_was_timeout = True
            continue
        except httpx.TransportError:
            last_was_timeout = False
            continue
        if response.status_code >= 500:
            last_was_timeout = False
            continue
        if response.status_code >= 400:
            raise BackendUnavailable(f"{backend.endpoint} answered {response.status_code}")
        try:
            payload = response.json()["choices"][0]["message"]["content"]
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise MalformedBackendOutput(f"no completion content in response: {exc}") from exc
        if not isinstance(payload, str):
            raise MalformedBackendOutput("completion content is not a string")
        return BackendResult(
            payload=payload,
            latency_ms=(time.monotonic() - started) * 1000.0,
            backend=backend,
            attempt_count=attempt + 1,
        )
    if last_was_timeout:
        raise TimeoutExceeded(f"{backend.endpoint} timed out after {attempts} attempts")
    raise BackendUnavailable(f"{backend.endpoint} unreachable after {attempts} attempts")


# --- denoise ------------------------------------------------------------------

_command_phrases: Optional[list[str]] = None


def command_lexicon() -> list[str]:
    global _command_phrases
    if _command_phrases is None:
        _command_phrases = [p.casefold() for p in assets.load_lexicon("command_phrases.txt")]
    return _command_phrases


def baseline_denoise(noisy: Transcript) -> Transcript:
    """Conservative denoiser: drop role-UNKNOWN utterances whose text is an
    interjection-lexicon entry, and reassign SUSPECT/WITNESS utterances that
    contain command phrasing back to OFFICER. Token content is never edited,
    so the pass is idempotent and can only lower transcript-level WER."""
    interjections = set(interjection_lexicon())
    commands = command_lexicon()
    kept = []
    for utt in noisy.utterances:
        if utt.role is SpeakerRole.UNKNOWN and utt.text in interjections:
            continue
        role = utt.role
        if role in (SpeakerRole.SUSPECT, SpeakerRole.WITNESS):
            lowered = utt.text.casefold()
            if any(phrase in lowered for phrase in commands):
                role = SpeakerRole.OFFICER
        kept.append((utt.speaker_id, role, utt.text, utt.start_ms, utt.end_ms))
    return Transcript(
        transcript_id=noisy.transcript_id,
        source=noisy.source,
        utterances=tuple(
            Utterance(index=i, speaker_id=s, role=r, text=t, start_ms=a, end_ms=b)
            for i, (s, r, t, a, b) in enumerate(kept)
        ),
    )


def denoise(noisy: Transcript, backend: BackendDescriptor) -> Transcript:
    if backend.role != "denoise":
        raise ValueError("backend role must be 'denoise'")
    if backend.kind == "baseline":
        return baseline_denoise(noisy)
    result = call_remote(backend, serialize_transcript(noisy, "plain"))
    try:
        return parse_transcript(
            result.payload, "plain", transcript_id=noisy.transcript_id, source=noisy.source
        )
    except DraftforgeError as exc:
        raise MalformedBackendOutput(f"remote denoiser output unparseable: {exc}") from exc


# --- event extraction ----------------------------------------------------------


def extract_events(clean: Transcript, backend: BackendDescriptor) -> list[EventRecord]:
    if backend.role != "extract":
        raise ValueError("backend role must be 'extract'")
    if backend.kind == "baseline":
        return corpus.parse_dialogue_events(clean)
    prompt = assets.read_asset("extract_prompt.txt") + "\n" + serialize_transcript(clean, "plain")
    result = call_remote(backend, prompt)
    try:
        docs = json.loads(result.payload)
        if not isinstance(docs, list):
            raise ValueError("expected a JSON array")
        return [EventRecord.from_json(json.dumps(doc)) for doc in docs]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedBackendOutput(f"remote extractor output unparseable: {exc}") from exc
