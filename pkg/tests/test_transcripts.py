from __future__ import annotations

import json
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from draftforge.transcripts import (
    DuplicateIndex,
    EmptyReference,
    EmptyTranscript,
    LengthMismatch,
    MalformedLine,
    SpeakerRole,
    Transcript,
    TranscriptSource,
    Utterance,
    parse_transcript,
    serialize_transcript,
    speaker_attribution_error_rate,
    wer_tokens,
    word_error_rate,
)


def make_transcript(texts, speakers=None, roles=None, source=TranscriptSource.SIMULATED):
    n = len(texts)
    speakers = speakers or [f"s{i}" for i in range(n)]
    roles = roles or [SpeakerRole.OFFICER] * n
    return Transcript(
        transcript_id="t0",
        source=source,
        utterances=tuple(
            Utterance(index=i, speaker_id=speakers[i], role=roles[i], text=texts[i])
            for i in range(n)
        ),
    )


# --- parsing -------------------------------------------------------------------


def test_parse_jsonl_single_line():
    raw = json.dumps({"index": 0, "speaker": "S1", "role": "OFFICER", "text": "Stop right there."})
    t = parse_transcript(raw, "jsonl")
    assert len(t) == 1
    utt = t.utterances[0]
    assert (utt.speaker_id, utt.role, utt.text) == ("S1", SpeakerRole.OFFICER, "Stop right there.")


def test_parse_empty_input_raises():
    with pytest.raises(EmptyTranscript):
        parse_transcript("", "jsonl")
    with pytest.raises(EmptyTranscript):
        parse_transcript("\n  \n", "plain")


def test_parse_plain_missing_separator():
    with pytest.raises(MalformedLine) as err:
        parse_transcript("OFFICER S1 Stop right there.", "plain")
    assert err.value.line_no == 1


def test_parse_plain_bad_role():
    with pytest.raises(MalformedLine):
        parse_transcript("CAPTAIN S1: hello there.", "plain")


def test_parse_jsonl_duplicate_index():
    lines = "\n".join(
        json.dumps({"index": 0, "speaker": "a", "role": "OFFICER", "text": "x"})
        for _ in range(2)
    )
    with pytest.raises(DuplicateIndex):
        parse_transcript(lines, "jsonl")


def test_parse_jsonl_bad_json():
    with pytest.raises(MalformedLine):
        parse_transcript("{not json", "jsonl")


def test_plain_round_trip(sample_dialogue):
    raw = serialize_transcript(sample_dialogue, "plain")
    back = parse_transcript(
        raw, "plain", transcript_id=sample_dialogue.transcript_id, source=sample_dialogue.source
    )
    assert back == sample_dialogue


def test_jsonl_round_trip_with_timestamps():
    t = Transcript(
        transcript_id="t1",
        source=TranscriptSource.ASR,
        utterances=(
            Utterance(0, "a", SpeakerRole.OFFICER, "hello there", start_ms=10, end_ms=900),
            Utterance(1, "b", SpeakerRole.SUSPECT, "hi"),
        ),
    )
    raw = serialize_transcript(t, "jsonl")
    assert parse_transcript(raw, "jsonl", transcript_id="t1", source=TranscriptSource.ASR) == t


@given(
    st.lists(
        st.tuples(
            st.sampled_from(list(SpeakerRole)),
            st.text(alphabet="abcdefgh", min_size=1, max_size=6),
            st.text(alphabet="abcdefgh xyz", min_size=1, max_size=20).filter(
                lambda s: s.strip() == s and s
            ),
        ),
        min_size=1,
        max_size=8,
    )
)
def test_round_trip_property(rows):
    t = Transcript(
        transcript_id="t",
        source=TranscriptSource.ASR,
        utterances=tuple(
            Utterance(index=i, speaker_id=sid, role=role, text=text)
            for i, (role, sid, text) in enumerate(rows)
        ),
    )
    for fmt in ("jsonl", "plain"):
        raw = serialize_transcript(t, fmt)
        assert parse_transcript(raw, fmt, transcript_id="t", source=TranscriptSource.ASR) == t


# --- domain invariants ------------------------------------------------------------


def test_utterance_rejects_blank_text():
    with pytest.raises(ValueError):
        Utterance(0, "s", SpeakerRole.OFFICER, "  padded  ")
    with pytest.raises(ValueError):
        Utterance(0, "s", SpeakerRole.OFFICER, "")


def test_utterance_rejects_reversed_timestamps():
    with pytest.raises(ValueError):
        Utterance(0, "s", SpeakerRole.OFFICER, "x", start_ms=100, end_ms=50)


def test_transcript_requires_dense_indices():
    with pytest.raises(ValueError):
        Transcript(
            transcript_id="t",
            source=TranscriptSource.ASR,
            utterances=(Utterance(1, "s", SpeakerRole.OFFICER, "x"),),
        )


# --- word error rate ---------------------------------------------------------------


def test_wer_identity():
    assert word_error_rate("the cat sat", "the cat sat") == 0.0


def test_wer_sub_plus_insert():
    assert word_error_rate("the hat sat on", "the cat sat") == pytest.approx(2 / 3, abs=1e-9)


def test_wer_all_deletions():
    assert word_error_rate("", "a b") == 1.0


def test_wer_empty_reference():
    with pytest.raises(EmptyReference):
        word_error_rate("something", "   ")


def test_wer_case_and_whitespace_invariance():
    assert word_error_rate("The  CAT   sat", "the cat sat") == 0.0
    assert word_error_rate("the cat sat.", "The cat sat") == 0.0


def test_wer_tokens_drop_pure_punctuation():
    assert wer_tokens("stop ... there!") == ["stop", "there"]


@lru_cache(maxsize=None)
def _oracle_distance(hyp: tuple, ref: tuple) -> int:
    # independent recursive edit distance, memoized
    if not hyp:
        return len(ref)
    if not ref:
        return len(hyp)
    return min(
        _oracle_distance(hyp[1:], ref) + 1,
        _oracle_distance(hyp, ref[1:]) + 1,
        _oracle_distance(hyp[1:], ref[1:]) + (hyp[0] != ref[0]),
    )


@settings(max_examples=400, deadline=None)
@given(
    st.lists(st.sampled_from("abc"), max_size=12),
    st.lists(st.sampled_from("abc"), min_size=1, max_size=12),
)
def test_wer_matches_bruteforce_oracle(hyp, ref):
    got = word_error_rate(" ".join(hyp), " ".join(ref))
    assert got == pytest.approx(_oracle_distance(tuple(hyp), tuple(ref)) / len(ref), abs=1e-12)


@given(st.lists(st.sampled_from(["aa", "bb", "cc", "dd"]), min_size=1, max_size=10))
def test_wer_self_is_zero(tokens):
    text = " ".join(tokens)
    assert word_error_rate(text, text) == 0.0


# --- speaker attribution error ------------------------------------------------------


def test_attribution_identity(sample_dialogue):
    assert speaker_attribution_error_rate(sample_dialogue, sample_dialogue) == 0.0


def test_attribution_swap_both_wrong():
    a = make_transcript(["x", "y"], speakers=["s1", "s2"])
    b = make_transcript(["x", "y"], speakers=["s2", "s1"])
    assert speaker_attribution_error_rate(a, b) == 1.0


def test_attribution_one_of_four():
    ref = make_transcript(["a", "b", "c", "d"], speakers=["s1", "s2", "s3", "s4"])
    hyp = make_transcript(["a", "b", "c", "d"], speakers=["s1", "s2", "s9", "s4"])
    assert speaker_attribution_error_rate(hyp, ref) == 0.25


def test_attribution_length_mismatch():
    with pytest.raises(LengthMismatch):
        speaker_attribution_error_rate(make_transcript(["a"]), make_transcript(["a", "b"]))


def test_attribution_symmetry():
    a = make_transcript(["a", "b", "c"], speakers=["s1", "s2", "s3"])
    b = make_transcript(["a", "b", "c"], speakers=["s1", "s9", "s3"])
    assert speaker_attribution_error_rate(a, b) == speaker_attribution_error_rate(b, a)
