"""Three-channel transcript corruption with an exact, replayable edit trace.

Channels, always applied in this order:
  1. word corruption  - per token: substitute (confusion lexicon), delete,
     or insert, each token hit independently with probability p_w
  2. speaker swap     - utterances selected with probability p_s are paired
     with the nearest following selected utterance; speaker identity
     (id + role) is exchanged
  3. interjection     - after each original utterance, with probability p_i,
     one role-UNKNOWN background utterance from the interjection lexicon

The annotation records every edit in application order; `replay` applies an
annotation to the clean transcript and `corrupt` builds its noisy output by
replaying its own plan, so replay soundness is structural.

PRNG: `random.Random(seed)` (CPython's Mersenne Twister). The algorithm name
is recorded in corpus manifests; corpora are reproducible across runs of the
same build, bit-equality across implementations is not promised.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, asdict
from typing import Optional, Union

from . import assets
from .transcripts import (
    DraftforgeError,
    EmptyTranscript,
    SpeakerRole,
    Transcript,
    TranscriptSource,
    Utterance,
    word_error_rate,
)

PRNG_ALGORITHM = "python-random-mt19937"
INTERJECTION_SPEAKER = "bg"

SUBSTITUTE = "substitute"
DELETE = "delete"
INSERT = "insert"


class IndexOutOfRange(DraftforgeError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    word_corruption_rate: float
    speaker_swap_rate: float
    interjection_rate: float
    seed: int

    def __post_init__(self):
        for name in ("word_corruption_rate", "speaker_swap_rate", "interjection_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0,1], got {rate}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class WordEdit:
    utterance_index: int
    token_index: int
    kind: str  # substitute | delete | insert
    original: str
    replacement: str


@dataclass(frozen=True)
class SpeakerSwap:
    index_a: int
    index_b: int


@dataclass(frozen=True)
class InterjectionInsert:
    position: int
    text: str


Edit = Union[WordEdit, SpeakerSwap, InterjectionInsert]


@dataclass(frozen=True)
class NoiseAnnotation:
    edits: tuple[Edit, ...]

    def __post_init__(self):
        object.__setattr__(self, "edits", tuple(self.edits))

    def inserted_count(self) -> int:
        return sum(1 for e in self.edits if isinstance(e, InterjectionInsert))


@dataclass(frozen=True)
class NoisyCleanPair:
    pair_id: str
    clean: Transcript
    noisy: Transcript
    annotation: NoiseAnnotation
    spec: NoiseSpec

    def __post_init__(self):
        if self.clean.source is not TranscriptSource.SIMULATED:
            raise ValueError("clean side of a pair must have source=simulated")


@dataclass(frozen=True)
class NoiseReport:
    wer: float
    attribution_error: float
    inserted_count: int


class _ConfusionLexicon:
    def __init__(self, pairs: list[tuple[str, str]]):
        self.partner: dict[str, str] = {}
        for left, right in pairs:
            self.partner[left] = right
            self.partner[right] = left
        self.words = sorted(self.partner)

    def substitute(self, token: str, rng: random.Random) -> str:
        hit = self.partner.get(token.casefold())
        if hit is not None:
            return hit
        repl = rng.choice(self.words)
        while repl == token.casefold():
            repl = rng.choice(self.words)
        return repl


_confusions: Optional[_ConfusionLexicon] = None
_interjections: Optional[list[str]] = None


def confusion_lexicon() -> _ConfusionLexicon:
    global _confusions
    if _confusions is None:
        _confusions = _ConfusionLexicon(assets.load_pair_lexicon("confusion_pairs.txt"))
    return _confusions


def interjection_lexicon() -> list[str]:
    global _interjections
    if _interjections is None:
        _interjections = assets.load_lexicon("interjections.txt")
    return _interjections


def corrupt(clean: Transcript, spec: NoiseSpec, pair_id: str | None = None) -> NoisyCleanPair:
    """Corrupt a clean transcript. Deterministic for fixed (clean, spec)."""
    if not clean.utterances:
        raise EmptyTranscript("cannot corrupt an empty transcript")
    if any(u.role is SpeakerRole.UNKNOWN for u in clean.utterances):
        raise ValueError("clean transcript may not contain UNKNOWN roles")

    rng = random.Random(spec.seed)
    lex = confusion_lexicon()
    interjections = interjection_lexicon()
    edits: list[Edit] = []

    # word channel: plan per-utterance token edits with a cursor into the
    # evolving token list, so recorded indices match application order
    for ui, utt in enumerate(clean.utterances):
        tokens = utt.text.split()
        work = list(tokens)
        cursor = 0
        for original in tokens:
            if rng.random() >= spec.word_corruption_rate:
                cursor += 1
                continue
            kind = rng.choice((SUBSTITUTE, DELETE, INSERT))
            if kind == DELETE and len(work) == 1:
                kind = SUBSTITUTE  # an utterance must keep at least one token
            if kind == SUBSTITUTE:
                repl = lex.substitute(original, rng)
                work[cursor] = repl
                edits.append(WordEdit(ui, cursor, SUBSTITUTE, original, repl))
                cursor += 1
            elif kind == DELETE:
                edits.append(WordEdit(ui, cursor, DELETE, original, ""))
                del work[cursor]
            else:
                extra = rng.choice(lex.words)
                work.insert(cursor + 1, extra)
                edits.append(WordEdit(ui, cursor + 1, INSERT, "", extra))
                cursor += 2

    # swap channel: consecutive pairing of the selected utterances
    selected = [i for i in range(len(clean.utterances)) if rng.random() < spec.speaker_swap_rate]
    for a, b in zip(selected[0::2], selected[1::2]):
        edits.append(SpeakerSwap(a, b))

    # interjection channel: positions are final indices in the noisy
    # transcript because insertion proceeds left to right
    position = 0
    for _ in clean.utterances:
        position += 1
        if rng.random() < spec.interjection_rate:
            edits.append(InterjectionInsert(position, rng.choice(interjections)))
            position += 1

    annotation = NoiseAnnotation(tuple(edits))
    noisy = replay(clean, annotation)
    return NoisyCleanPair(
        pair_id=pair_id if pair_id is not None else f"{clean.transcript_id}:{spec.seed}",
        clean=clean,
        noisy=noisy,
        annotation=annotation,
        spec=spec,
    )


def replay(clean: Transcript, annotation: NoiseAnnotation) -> Transcript:
    """Apply an edit trace to the clean transcript, reproducing the noisy
    transcript byte-for-byte. Raises IndexOutOfRange on invalid indices."""
    n = len(clean.utterances)
    token_lists = [u.text.split() for u in clean.utterances]
    touched = set()
    speakers = [(u.speaker_id, u.role) for u in clean.utterances]

    word_edits = [e for e in annotation.edits if isinstance(e, WordEdit)]
    swaps = [e for e in annotation.edits if isinstance(e, SpeakerSwap)]
    inserts = [e for e in annotation.edits if isinstance(e, InterjectionInsert)]

    for e in word_edits:
        if not 0 <= e.utterance_index < n:
            raise IndexOutOfRange(f"utterance {e.utterance_index} of {n}")
        tokens = token_lists[e.utterance_index]
        touched.add(e.utterance_index)
        if e.kind == SUBSTITUTE:
            if not 0 <= e.token_index < len(tokens):
                raise IndexOutOfRange(f"token {e.token_index}")
            tokens[e.token_index] = e.replacement
        elif e.kind == DELETE:
            if not 0 <= e.token_index < len(tokens):
                raise IndexOutOfRange(f"token {e.token_index}")
            del tokens[e.token_index]
        elif e.kind == INSERT:
            if not 0 <= e.token_index <= len(tokens):
                raise IndexOutOfRange(f"token {e.token_index}")
            tokens.insert(e.token_index, e.replacement)
        else:
            raise ValueError(f"unknown word edit kind {e.kind!r}")

    for e in swaps:
        for idx in (e.index_a, e.index_b):
            if not 0 <= idx < n:
                raise IndexOutOfRange(f"utterance {idx} of {n}")
        speakers[e.index_a], speakers[e.index_b] = speakers[e.index_b], speakers[e.index_a]

    result: list[Utterance] = []
    for i, utt in enumerate(clean.utterances):
        speaker_id, role = speakers[i]
        text = " ".join(token_lists[i]) if i in touched else utt.text
        result.append(
            Utterance(
                index=i,
                speaker_id=speaker_id,
                role=role,
                text=text,
                start_ms=utt.start_ms,
                end_ms=utt.end_ms,
            )
        )
    for e in inserts:
        if not 0 <= e.position <= len(result):
            raise IndexOutOfRange(f"insert position {e.position} of {len(result)}")
        result.insert(
            e.position,
            Utterance(
                index=-1,  # reindexed below
                speaker_id=INTERJECTION_SPEAKER,
                role=SpeakerRole.UNKNOWN,
                text=e.text,
            ),
        )

    reindexed = tuple(
        Utterance(
            index=i,
            speaker_id=u.speaker_id,
            role=u.role,
            text=u.text,
            start_ms=u.start_ms,
            end_ms=u.end_ms,
        )
        for i, u in enumerate(result)
    )
    return Transcript(
        transcript_id=clean.transcript_id,
        utterances=reindexed,
        source=TranscriptSource.ASR,
    )


def original_positions(pair: NoisyCleanPair) -> list[int]:
    """Indices in the noisy transcript that hold original (non-interjection)
    utterances, in order."""
    inserted = {
        e.position for e in pair.annotation.edits if isinstance(e, InterjectionInsert)
    }
    return [i for i in range(len(pair.noisy.utterances)) if i not in inserted]


def measure(pair: NoisyCleanPair) -> NoiseReport:
    """Quantify a pair: WER over the aligned original utterances,
    positional speaker-attribution error, and interjection count."""
    originals = [pair.noisy.utterances[i] for i in original_positions(pair)]
    clean = pair.clean.utterances
    hyp_text = " ".join(u.text for u in originals)
    ref_text = " ".join(u.text for u in clean)
    wrong = sum(1 for h, r in zip(originals, clean) if h.speaker_id != r.speaker_id)
    return NoiseReport(
        wer=word_error_rate(hyp_text, ref_text),
        attribution_error=wrong / len(clean),
        inserted_count=pair.annotation.inserted_count(),
    )


# --- jsonl wire format -------------------------------------------------------


def _utterance_doc(u: Utterance) -> dict:
    doc = {"index": u.index, "speaker": u.speaker_id, "role": u.role.value, "text": u.text}
    if u.start_ms is not None:
        doc["start_ms"] = u.start_ms
    if u.end_ms is not None:
        doc["end_ms"] = u.end_ms
    return doc


def _transcript_doc(t: Transcript) -> dict:
    return {
        "transcript_id": t.transcript_id,
        "source": t.source.value,
        "utterances": [_utterance_doc(u) for u in t.utterances],
    }


def _transcript_from_doc(doc: dict) -> Transcript:
    return Transcript(
        transcript_id=doc["transcript_id"],
        source=TranscriptSource(doc["source"]),
        utterances=tuple(
            Utterance(
                index=u["index"],
                speaker_id=u["speaker"],
                role=SpeakerRole.from_token(u["role"]),
                text=u["text"],
                start_ms=u.get("start_ms"),
                end_ms=u.get("end_ms"),
            )
            for u in doc["utterances"]
        ),
    )


def _edit_doc(e: Edit) -> dict:
    if isinstance(e, WordEdit):
        return {"edit": "word", **asdict(e)}
    if isinstance(e, SpeakerSwap):
        return {"edit": "swap", **asdict(e)}
    return {"edit": "interjection", **asdict(e)}


def _edit_from_doc(doc: dict) -> Edit:
    kind = doc.pop("edit")
    if kind == "word":
        return WordEdit(**doc)
    if kind == "swap":
        return SpeakerSwap(**doc)
    if kind == "interjection":
        return InterjectionInsert(**doc)
    raise ValueError(f"unknown edit tag {kind!r}")


def pair_to_json(pair: NoisyCleanPair) -> str:
    return json.dumps(
        {
            "pair_id": pair.pair_id,
            "spec": asdict(pair.spec),
            "clean": _transcript_doc(pair.clean),
            "noisy": _transcript_doc(pair.noisy),
            "annotation": [_edit_doc(e) for e in pair.annotation.edits],
        },
        sort_keys=True,
    )


def pair_from_json(raw: str) -> NoisyCleanPair:
    doc = json.loads(raw)
    return NoisyCleanPair(
        pair_id=doc["pair_id"],
        spec=NoiseSpec(**doc["spec"]),
        clean=_transcript_from_doc(doc["clean"]),
        noisy=_transcript_from_doc(doc["noisy"]),
        annotation=NoiseAnnotation(tuple(_edit_from_doc(e) for e in doc["annotation"])),
    )
