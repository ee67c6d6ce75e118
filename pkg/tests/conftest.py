from __future__ import annotations

import pytest

from draftforge import corpus


@pytest.fixture(scope="session")
def case_records():
    return corpus.load_case_records()


@pytest.fixture(scope="session")
def base_events(case_records):
    events = []
    for record in case_records:
        try:
            events.extend(corpus.derive_events(record))
        except corpus.NoEventFound:
            pass
    assert events
    return events


@pytest.fixture(scope="session")
def sample_event(base_events):
    return base_events[0]


@pytest.fixture(scope="session")
def sample_dialogue(sample_event):
    return corpus.simulate_dialogue(sample_event, style_seed=7)
