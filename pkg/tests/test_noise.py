from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from draftforge import corpus, noise
from draftforge.noise import (
    IndexOutOfRange,
    InterjectionInsert,
    NoiseAnnotation,
    NoiseSpec,
    SpeakerSwap,
    WordEdit,
    corrupt,
    interjection_lexicon,
    measure,
    replay,
)
from draftforge.transcripts import (
    EmptyTranscript,
    SpeakerRole,
    Transcript,
    TranscriptSource,
    Utterance,
    wer_tokens,
)


def clean_transcript(texts, roles=None):
    roles = roles or [SpeakerRole.OFFICER, SpeakerRole.SUSPECT] * len(texts)
    return Transcript(
        transcript_id="c0",
        source=TranscriptSource.SIMULATED,
        utterances=tuple(
            Utterance(index=i, speaker_id=f"s{i}", role=roles[i], text=t)
            for i, t in enumerate(texts)
        ),
    )


def test_spec_validates_rates():
    with pytest.raises(ValueError):
        NoiseSpec(1.5, 0, 0, seed=1)
    with pytest.raises(ValueError):
        NoiseSpec(0, -0.1, 0, seed=1)


def test_zero_rates_identity():
    clean = clean_transcript(["hello there", "general greeting"])
    pair = corrupt(clean, NoiseSpec(0, 0, 0, seed=9))
    assert pair.annotation.edits == ()
    assert [u.text for u in pair.noisy.utterances] == [u.text for u in clean.utterances]
    assert [u.speaker_id for u in pair.noisy.utterances] == ["s0", "s1"]


def test_corrupt_rejects_empty():
    empty = Transcript("c", (), TranscriptSource.SIMULATED)
    with pytest.raises(EmptyTranscript):
        corrupt(empty, NoiseSpec(0, 0, 0, seed=1))


def test_corrupt_rejects_unknown_roles():
    clean = clean_transcript(["hi there"], roles=[SpeakerRole.UNKNOWN])
    with pytest.raises(ValueError):
        corrupt(clean, NoiseSpec(0, 0, 0, seed=1))


def test_interjection_rate_one_inserts_after_every_utterance():
    clean = clean_transcript(["first line", "second line"])
    pair = corrupt(clean, NoiseSpec(0, 0, 1.0, seed=3))
    inserts = [e for e in pair.annotation.edits if isinstance(e, InterjectionInsert)]
    assert len(inserts) == 2
    assert len(pair.noisy.utterances) == 4
    assert [u.role for u in pair.noisy.utterances] == [
        SpeakerRole.OFFICER,
        SpeakerRole.UNKNOWN,
        SpeakerRole.SUSPECT,
        SpeakerRole.UNKNOWN,
    ]
    lexicon = set(interjection_lexicon())
    assert all(pair.noisy.utterances[e.position].text in lexicon for e in inserts)


def test_swap_rate_one_exchanges_speakers():
    clean = clean_transcript(["first line", "second line"])
    pair = corrupt(clean, NoiseSpec(0, 1.0, 0, seed=3))
    assert pair.annotation.edits == (SpeakerSwap(0, 1),)
    assert [u.speaker_id for u in pair.noisy.utterances] == ["s1", "s0"]
    # the speaker identity travels with its role
    assert [u.role for u in pair.noisy.utterances] == [SpeakerRole.SUSPECT, SpeakerRole.OFFICER]
    assert [u.text for u in pair.noisy.utterances] == ["first line", "second line"]


def test_word_rate_one_single_token_substitutes():
    clean = clean_transcript(["officer"])
    pair = corrupt(clean, NoiseSpec(1.0, 0, 0, seed=11))
    (edit,) = pair.annotation.edits
    assert isinstance(edit, WordEdit)
    # deleting the only token is never allowed, so a single token substitutes
    # or gains an inserted neighbour
    assert edit.kind in ("substitute", "insert")
    if edit.kind == "substitute":
        assert measure(pair).wer == 1.0


def test_determinism():
    clean = clean_transcript(["alpha beta gamma", "delta epsilon"])
    spec = NoiseSpec(0.5, 0.5, 0.5, seed=123)
    assert noise.pair_to_json(corrupt(clean, spec)) == noise.pair_to_json(corrupt(clean, spec))


def test_replay_empty_annotation_is_identity():
    clean = clean_transcript(["alpha beta", "gamma delta"])
    replayed = replay(clean, NoiseAnnotation(()))
    assert [u.text for u in replayed.utterances] == ["alpha beta", "gamma delta"]
    assert replayed.source is TranscriptSource.ASR


def test_replay_out_of_range():
    clean = clean_transcript(["alpha beta", "gamma delta"])
    with pytest.raises(IndexOutOfRange):
        replay(clean, NoiseAnnotation((WordEdit(99, 0, "delete", "x", ""),)))
    with pytest.raises(IndexOutOfRange):
        replay(clean, NoiseAnnotation((SpeakerSwap(0, 99),)))
    with pytest.raises(IndexOutOfRange):
        replay(clean, NoiseAnnotation((InterjectionInsert(99, "static crackle over radio channel"),)))


@settings(max_examples=200, deadline=None)
@given(
    p_w=st.floats(0, 1),
    p_s=st.floats(0, 1),
    p_i=st.floats(0, 1),
    seed=st.integers(0, 2**32),
    n=st.integers(1, 6),
)
def test_replay_soundness_property(p_w, p_s, p_i, seed, n):
    clean = clean_transcript([f"token{i} alpha beta gamma" for i in range(n)])
    pair = corrupt(clean, NoiseSpec(p_w, p_s, p_i, seed=seed))
    assert replay(pair.clean, pair.annotation) == pair.noisy


def test_order_preservation_and_role_stability(base_events):
    # dropping interjections and undoing swaps leaves texts differing only at
    # word-edit positions; roles change only via swaps
    dlg = corpus.simulate_dialogue(base_events[0], 3)
    pair = corrupt(dlg, NoiseSpec(0.3, 0.4, 0.5, seed=77))
    originals = [pair.noisy.utterances[i] for i in noise.original_positions(pair)]
    assert len(originals) == len(dlg.utterances)

    speakers = [(u.speaker_id, u.role) for u in originals]
    for e in reversed([e for e in pair.annotation.edits if isinstance(e, SpeakerSwap)]):
        speakers[e.index_a], speakers[e.index_b] = speakers[e.index_b], speakers[e.index_a]
    assert speakers == [(u.speaker_id, u.role) for u in dlg.utterances]

    edited = {e.utterance_index for e in pair.annotation.edits if isinstance(e, WordEdit)}
    for i, (got, want) in enumerate(zip(originals, dlg.utterances)):
        if i not in edited:
            assert got.text == want.text


def test_measure_zero_noise():
    clean = clean_transcript(["alpha beta", "gamma delta"])
    report = measure(corrupt(clean, NoiseSpec(0, 0, 0, seed=5)))
    assert (report.wer, report.attribution_error, report.inserted_count) == (0.0, 0.0, 0)


def test_measure_interjections_only():
    clean = clean_transcript(["alpha beta", "gamma delta"])
    report = measure(corrupt(clean, NoiseSpec(0, 0, 1.0, seed=5)))
    assert report.inserted_count == 2
    assert report.wer == 0.0
    assert report.attribution_error == 0.0


def test_pair_serialization_round_trip():
    clean = clean_transcript(["alpha beta gamma", "delta epsilon zeta"])
    pair = corrupt(clean, NoiseSpec(0.4, 0.5, 0.6, seed=2024))
    assert noise.pair_from_json(noise.pair_to_json(pair)) == pair


def test_interjection_vocabulary_disjoint_from_clean_dialogues(base_events):
    """The denoiser's WER guarantee needs interjection tokens never to occur
    in clean dialogue text; guard the lexicons and templates against drift."""
    clean_vocab = set()
    for event in base_events:
        for seed in range(3):
            for utt in corpus.simulate_dialogue(event, seed).utterances:
                clean_vocab.update(wer_tokens(utt.text))
    interjection_vocab = set()
    for line in interjection_lexicon():
        interjection_vocab.update(wer_tokens(line))
    assert not (clean_vocab & interjection_vocab)


def test_clean_side_must_be_simulated():
    clean = clean_transcript(["alpha beta"])
    pair = corrupt(clean, NoiseSpec(0, 0, 0, seed=1))
    with pytest.raises(ValueError):
        dataclasses.replace(pair, clean=pair.noisy)
