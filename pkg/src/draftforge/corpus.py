"""Desk-scale training-corpus pipeline.

Stages mirror a production flow: parse case-law records, filter criminal
cases and sample them, derive structured events with a verb-phrase pattern
table, realize each event as a multi-role dialogue from a template grammar,
corrupt dialogues into noisy/clean pairs, and export fine-tune datasets.

The template generator is the normative oracle: `parse_dialogue_events`
inverts it exactly, and the extractor baseline in `backends` is that
inverse. An LLM-backed generator can replace the templates behind the same
interface; the rule-based route stays as the test oracle.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import assets, noise
from .transcripts import (
    DraftforgeError,
    EventAction,
    EventRecord,
    SpeakerRole,
    Transcript,
    TranscriptSource,
    Utterance,
    serialize_transcript,
)


class NoEventFound(DraftforgeError):
    pass


class IoFailure(DraftforgeError):
    pass


@dataclass(frozen=True)
class CaseLawRecord:
    case_id: str
    jurisdiction: str
    year: int
    category_tags: frozenset[str]
    body_text: str

    def __post_init__(self):
        object.__setattr__(self, "category_tags", frozenset(self.category_tags))
        if not self.body_text:
            raise ValueError("body_text must be non-empty")


@dataclass(frozen=True)
class SamplingPlan:
    criminal_filter: Callable[[frozenset[str]], bool]
    target_total: int
    police_related_predicate: Callable[[frozenset[str]], bool]
    seed: int

    def __post_init__(self):
        if self.target_total < 1:
            raise ValueError("target_total must be >= 1")


def default_plan(target_total: int = 10_000, seed: int = 0) -> SamplingPlan:
    return SamplingPlan(
        criminal_filter=lambda tags: "criminal" in tags,
        target_total=target_total,
        police_related_predicate=lambda tags: "police" in tags,
        seed=seed,
    )


@dataclass(frozen=True)
class CorpusManifest:
    crawled: int = 0
    criminal: int = 0
    sampled: int = 0
    police_related: int = 0
    cases_without_events: int = 0
    events: int = 0
    dialogues: int = 0
    pairs: int = 0
    seeds: dict = field(default_factory=dict)
    prng_algorithm_name: str = noise.PRNG_ALGORITHM
    generator_backend_name: str = "template"
    event_sampling: str = "uniform-with-replacement"

    def validate(self) -> None:
        if not (self.crawled >= self.criminal >= self.sampled >= self.police_related):
            raise ValueError("stage counts must be non-increasing along filters")
        if self.dialogues > self.events:
            raise ValueError("dialogues may not exceed sampled events")
        if self.pairs > self.dialogues:
            raise ValueError("pairs may not exceed dialogues")

    def to_json(self) -> str:
        doc = {
            "counts": {
                "crawled": self.crawled,
                "criminal": self.criminal,
                "sampled": self.sampled,
                "police_related": self.police_related,
                "cases_without_events": self.cases_without_events,
                "events": self.events,
                "dialogues": self.dialogues,
                "pairs": self.pairs,
            },
            "seeds": self.seeds,
            "prng_algorithm_name": self.prng_algorithm_name,
            "generator_backend_name": self.generator_backend_name,
            "event_sampling": self.event_sampling,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, raw: str) -> "CorpusManifest":
        doc = json.loads(raw)
        return cls(
            seeds=doc["seeds"],
            prng_algorithm_name=doc["prng_algorithm_name"],
            generator_backend_name=doc["generator_backend_name"],
            event_sampling=doc["event_sampling"],
            **doc["counts"],
        )


def load_case_records(path: str | Path | None = None) -> list[CaseLawRecord]:
    """Load case-law fixture records from a jsonl file or directory of jsonl
    files; defaults to the bundled sample corpus."""
    if path is None:
        from importlib import resources

        raw = (
            resources.files("draftforge")
            .joinpath("fixtures", "cases.jsonl")
            .read_text(encoding="utf-8")
        )
        sources = [raw]
    else:
        p = Path(path)
        files = sorted(p.glob("*.jsonl")) if p.is_dir() else [p]
        if not files:
            raise IoFailure(f"no case fixture files under {p}")
        sources = [f.read_text(encoding="utf-8") for f in files]
    records = []
    seen = set()
    for raw in sources:
        for line in raw.splitlines():
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            rec = CaseLawRecord(
                case_id=doc["case_id"],
                jurisdiction=doc["jurisdiction"],
                year=doc["year"],
                category_tags=frozenset(doc["category_tags"]),
                body_text=doc["body_text"],
            )
            if rec.case_id in seen:
                raise ValueError(f"duplicate case_id {rec.case_id}")
            seen.add(rec.case_id)
            records.append(rec)
    return records


def filter_and_sample(
    records: Iterable[CaseLawRecord], plan: SamplingPlan
) -> tuple[list[CaseLawRecord], CorpusManifest]:
    """Uniform sample without replacement of min(target, eligible) criminal
    records; deterministic for a fixed plan seed. Output ordered by case_id."""
    records = list(records)
    eligible = [r for r in records if plan.criminal_filter(r.category_tags)]
    k = min(plan.target_total, len(eligible))
    rng = random.Random(plan.seed)
    sample = sorted(rng.sample(eligible, k), key=lambda r: r.case_id)
    manifest = CorpusManifest(
        crawled=len(records),
        criminal=len(eligible),
        sampled=k,
        police_related=sum(1 for r in sample if plan.police_related_predicate(r.category_tags)),
        seeds={"sampling": plan.seed},
    )
    return sample, manifest


# --- event derivation from case fixtures --------------------------------------

ROLE_WORDS = {
    "officer": SpeakerRole.OFFICER,
    "suspect": SpeakerRole.SUSPECT,
    "witness": SpeakerRole.WITNESS,
    "victim": SpeakerRole.VICTIM,
    "person of interest": SpeakerRole.PERSON_OF_INTEREST,
    "dispatcher": SpeakerRole.DISPATCH,
}
ROLE_TO_WORD = {role: word for word, role in ROLE_WORDS.items()}

_verb_table: dict[str, str] | None = None


def verb_offense_table() -> dict[str, str]:
    """verb_phrase -> offense_label, from the bundled pattern table."""
    global _verb_table
    if _verb_table is None:
        _verb_table = dict(assets.load_pair_lexicon("verb_offenses.txt"))
    return _verb_table


def _action_tail_pattern(verbs: Sequence[str]) -> re.Pattern:
    alts = "|".join(re.escape(v) for v in sorted(verbs, key=len, reverse=True))
    return re.compile(
        rf"(?P<verb>{alts}) the (?P<obj>.+?)"
        rf"(?: near (?P<loc>.+?))?(?: around (?P<time>.+?))?\.$"
    )


def _parse_parties(section: str) -> list[tuple[SpeakerRole, str]]:
    parties = []
    for chunk in section.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        lowered = chunk.lower()
        for word in sorted(ROLE_WORDS, key=len, reverse=True):
            if lowered.startswith(word + " "):
                parties.append((ROLE_WORDS[word], chunk[len(word) + 1 :].strip()))
                break
        else:
            raise ValueError(f"party {chunk!r} does not start with a role word")
    return parties


def derive_events(case: CaseLawRecord) -> list[EventRecord]:
    """Rule-based extraction from the fixture body's structured sections.

    One EventRecord per charged count that has at least one narrative action
    whose verb maps to that offense in the pattern table. Raises NoEventFound
    when the case yields nothing.
    """
    sections: dict[str, str] = {}
    for line in case.body_text.splitlines():
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        if sep and key.isupper():
            sections[key] = value.strip()
    parties = _parse_parties(sections.get("PARTIES", ""))
    charges = [c.strip() for c in sections.get("CHARGES", "").split(";") if c.strip()]
    location = sections.get("LOCATION", "").strip()
    narrative = sections.get("NARRATIVE", "")

    table = verb_offense_table()
    tail = _action_tail_pattern(list(table))
    by_name = {desc: i for i, (_, desc) in enumerate(parties)}

    actions: list[tuple[str, EventAction]] = []  # (offense, action)
    for sentence in re.split(r"(?<=\.)\s+", narrative):
        sentence = sentence.strip()
        if not sentence:
            continue
        m = tail.search(sentence)
        if not m or m.start() == 0:
            continue
        actor_name = sentence[: m.start()].strip()
        if actor_name not in by_name:
            continue
        actions.append(
            (
                table[m.group("verb")],
                EventAction(
                    actor_ref=by_name[actor_name],
                    verb_phrase=m.group("verb"),
                    object=m.group("obj"),
                    time_hint=m.group("time") or "",
                    location_hint=m.group("loc") or "",
                ),
            )
        )

    events = []
    for k, charge in enumerate(charges):
        matched = tuple(act for offense, act in actions if offense == charge)
        if not matched or not parties:
            continue
        events.append(
            EventRecord(
                record_id=f"{case.case_id}-e{k}",
                offense_label=charge,
                actors=tuple(parties),
                actions=matched,
                location=location,
            )
        )
    if not events:
        raise NoEventFound(case.case_id)
    return events


# --- dialogue template grammar -------------------------------------------------

_OFFICER_ID = "ofc-1"
_SURNAMES = ("Reyes", "Walsh", "Okafor", "Lindqvist", "Boone", "Alvarez", "Ngo", "Petrov")
_OPENING_LEADS = (
    "This is Officer {s},",
    "Officer {s} here,",
    "Officer {s} on scene,",
)
_ROLE_QUESTIONS = (
    "Can you tell me your role in this incident?",
    "And you are?",
    "State your role in this incident, please.",
)
_ACTION_QUESTIONS = (
    "What happened next?",
    "Walk me through what happened next.",
    "And then what happened?",
    "Tell me what happened next.",
)
_INTRO_FORMS = (
    "I am the {role} here.",
    "I was the {role} in this incident.",
    "Me? I am the {role} here.",
)
_ANSWER_LEADS = ("", "Well, ", "Honestly, ", "Look, ")
_CLOSINGS = (
    "Thank you, I have what I need for the report.",
    "Thank you. That completes my questions.",
    "Understood. I have everything I need for the report.",
)


def render_action_clause(action: EventAction) -> str:
    clause = f"{action.verb_phrase} the {action.object}"
    if action.location_hint:
        clause += f" near {action.location_hint}"
    if action.time_hint:
        clause += f" around {action.time_hint}"
    return clause


def simulate_dialogue(event: EventRecord, style_seed: int) -> Transcript:
    """Realize an event as a clean interview transcript. Deterministic for a
    fixed (event, style_seed); every action field appears verbatim."""
    rng = random.Random(style_seed)
    surname = rng.choice(_SURNAMES)
    lines: list[tuple[str, SpeakerRole, str]] = []

    lead = rng.choice(_OPENING_LEADS).format(s=surname)
    lines.append(
        (
            _OFFICER_ID,
            SpeakerRole.OFFICER,
            f"{lead} responding to a report of {event.offense_label} at {event.location}.",
        )
    )
    speaker_ids = [f"spk-{j + 1}" for j in range(len(event.actors))]
    for j, (role, descriptor) in enumerate(event.actors):
        lines.append((_OFFICER_ID, SpeakerRole.OFFICER, rng.choice(_ROLE_QUESTIONS)))
        intro = rng.choice(_INTRO_FORMS).format(role=ROLE_TO_WORD[role])
        lines.append((speaker_ids[j], role, f"{intro} My name is {descriptor}."))
    for action in event.actions:
        lines.append((_OFFICER_ID, SpeakerRole.OFFICER, rng.choice(_ACTION_QUESTIONS)))
        role, _ = event.actors[action.actor_ref]
        answer = f"{rng.choice(_ANSWER_LEADS)}I {render_action_clause(action)}."
        lines.append((speaker_ids[action.actor_ref], role, answer))
    lines.append((_OFFICER_ID, SpeakerRole.OFFICER, rng.choice(_CLOSINGS)))

    return Transcript(
        transcript_id=f"dlg-{event.record_id}-{style_seed}",
        source=TranscriptSource.SIMULATED,
        utterances=tuple(
            Utterance(index=i, speaker_id=sid, role=role, text=text)
            for i, (sid, role, text) in enumerate(lines)
        ),
    )


_OPENING_RE = re.compile(r"responding to a report of (?P<off>.+?) at (?P<loc>.+?)\.$")
_INTRO_RE = re.compile(
    r"I (?:am|was) the (?P<role>officer|suspect|witness|victim|person of interest|dispatcher)"
    r"\b.*? My name is (?P<name>.+?)\.$"
)
_ANSWER_LEAD_RE = re.compile(r"^(?:Well, |Honestly, |Look, )")


def parse_dialogue_events(transcript: Transcript) -> list[EventRecord]:
    """Invert the template grammar: recover the EventRecords realized in a
    clean transcript, in order. Transcripts without the template structure
    yield an empty list."""
    table = verb_offense_table()
    tail = _action_tail_pattern(list(table))
    events: list[EventRecord] = []
    current: dict | None = None

    def flush():
        nonlocal current
        if current and current["actors"] and current["actions"]:
            events.append(
                EventRecord(
                    record_id=f"x{len(events)}",
                    offense_label=current["offense"],
                    actors=tuple(current["actors"]),
                    actions=tuple(current["actions"]),
                    location=current["location"],
                )
            )
        current = None

    for utt in transcript.utterances:
        opening = _OPENING_RE.search(utt.text)
        if opening and utt.role is SpeakerRole.OFFICER:
            flush()
            current = {
                "offense": opening.group("off"),
                "location": opening.group("loc"),
                "actors": [],
                "actions": [],
                "speakers": {},
            }
            continue
        if current is None:
            continue
        intro = _INTRO_RE.search(utt.text)
        if intro and utt.speaker_id not in current["speakers"]:
            current["speakers"][utt.speaker_id] = len(current["actors"])
            current["actors"].append((ROLE_WORDS[intro.group("role")], intro.group("name")))
            continue
        if utt.speaker_id in current["speakers"]:
            body = _ANSWER_LEAD_RE.sub("", utt.text)
            if not body.startswith("I "):
                continue
            m = tail.match(body[2:])
            if m:
                current["actions"].append(
                    EventAction(
                        actor_ref=current["speakers"][utt.speaker_id],
                        verb_phrase=m.group("verb"),
                        object=m.group("obj"),
                        time_hint=m.group("time") or "",
                        location_hint=m.group("loc") or "",
                    )
                )
    flush()
    return events


# --- event sampling + corpus generation ---------------------------------------


def sample_events(base_events: Sequence[EventRecord], count: int, seed: int) -> list[EventRecord]:
    """Uniform sample with replacement, re-identified evt-0000.. so sampled
    duplicates stay distinct records."""
    if not base_events:
        raise ValueError("no base events to sample from")
    rng = random.Random(seed)
    return [
        replace(rng.choice(list(base_events)), record_id=f"evt-{i:04d}") for i in range(count)
    ]


@dataclass(frozen=True)
class GeneratedCorpus:
    base_events: list[EventRecord]
    events: list[EventRecord]
    dialogues: list[Transcript]
    pairs: list[noise.NoisyCleanPair]
    manifest: CorpusManifest


def generate_corpus(
    fixtures: str | Path | None,
    n_pairs: int,
    n_events: int,
    seed: int,
    noise_spec_rates: tuple[float, float, float] = (0.1, 0.1, 0.3),
    plan: SamplingPlan | None = None,
) -> GeneratedCorpus:
    """Run the full desk-scale pipeline in memory.

    One dialogue is generated per sampled event; the sampled-event count is
    max(n_events, n_pairs) so the manifest's stage monotonicity (events >=
    dialogues >= pairs) holds by construction.
    """
    records = load_case_records(fixtures)
    sample, manifest = filter_and_sample(records, plan or default_plan(seed=seed))

    base_events: list[EventRecord] = []
    skipped = 0
    for case in sample:
        try:
            base_events.extend(derive_events(case))
        except NoEventFound:
            skipped += 1
    if not base_events:
        raise NoEventFound("no events derivable from the fixture corpus")

    n_sampled = max(n_events, n_pairs)
    events = sample_events(base_events, n_sampled, seed)
    style_rng = random.Random(seed ^ 0x5EED)
    dialogues = [simulate_dialogue(e, style_rng.getrandbits(63)) for e in events]

    p_w, p_s, p_i = noise_spec_rates
    noise_rng = random.Random(seed + 1)
    pairs = [
        noise.corrupt(
            dlg,
            noise.NoiseSpec(
                word_corruption_rate=p_w,
                speaker_swap_rate=p_s,
                interjection_rate=p_i,
                seed=noise_rng.getrandbits(63),
            ),
        )
        for dlg in dialogues[:n_pairs]
    ]

    manifest = replace(
        manifest,
        cases_without_events=skipped,
        events=n_sampled,
        dialogues=len(dialogues),
        pairs=len(pairs),
        seeds={**manifest.seeds, "corpus": seed},
    )
    manifest.validate()
    return GeneratedCorpus(
        base_events=base_events,
        events=events,
        dialogues=dialogues,
        pairs=pairs,
        manifest=manifest,
    )


def export_datasets(
    pairs: Sequence[noise.NoisyCleanPair],
    events: Sequence[tuple[Transcript, EventRecord]],
    out_dir: str | Path,
    manifest: CorpusManifest | None = None,
) -> CorpusManifest:
    """Write the fine-tune exchange files (denoise.jsonl, extract.jsonl), the
    raw pairs, and manifest.json. Deterministic: re-export is byte-identical."""
    if not pairs or not events:
        raise ValueError("pairs and events must both be non-empty")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        denoise_lines = [
            json.dumps(
                {
                    "id": pair.pair_id,
                    "task": "denoise",
                    "input": serialize_transcript(pair.noisy, "plain"),
                    "target": serialize_transcript(pair.clean, "plain"),
                },
                sort_keys=True,
            )
            for pair in pairs
        ]
        extract_lines = [
            json.dumps(
                {
                    "id": event.record_id,
                    "task": "extract",
                    "input": serialize_transcript(dialogue, "plain"),
                    "target": event.to_json(),
                },
                sort_keys=True,
            )
            for dialogue, event in events
        ]
        (out / "denoise.jsonl").write_text("\n".join(denoise_lines) + "\n", encoding="utf-8")
        (out / "extract.jsonl").write_text("\n".join(extract_lines) + "\n", encoding="utf-8")
        (out / "pairs.jsonl").write_text(
            "\n".join(noise.pair_to_json(p) for p in pairs) + "\n", encoding="utf-8"
        )
        manifest = replace(
            manifest or CorpusManifest(events=len(events), dialogues=len(events)),
            pairs=len(pairs),
        )
        manifest.validate()
        (out / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return manifest
