import struct

import numpy as np
import pytest

from streambl.corpus import BugReport
from streambl.engine import Engine, EngineConfig
from streambl.evaluation import build_events, replay
from streambl.state import (
    FORMAT_VERSION,
    MAGIC,
    CorruptSnapshot,
    VersionMismatch,
    dumps,
    load_state,
    loads,
    save_state,
)
from streambl.synthetic import SynthConfig, generate_history
from streambl.topicmodel import LdaConfig
from streambl.translation import ReadinessPolicy

CONFIG = EngineConfig(changeset_lda=LdaConfig(k=4), bug_lda=LdaConfig(k=3, kappa=1.0),
                      readiness=ReadinessPolicy(1.0), pair_window=50)


@pytest.fixture(scope="module")
def engine():
    h = generate_history(1, SynthConfig(n_changesets=100, n_bugs=12, n_nl_bugs=4, n_modules=2))
    eng = Engine(CONFIG)
    replay(build_events(h.changesets, h.bugs, h.links), CONFIG, "jingo", engine=eng)
    assert eng.translation is not None
    return eng


def test_round_trip_is_byte_identical(engine, tmp_path):
    first, second = tmp_path / "a.bin", tmp_path / "b.bin"
    save_state(engine, first)
    save_state(load_state(first), second)
    assert first.read_bytes() == second.read_bytes()


def test_round_trip_preserves_behaviour(engine):
    clone = loads(dumps(engine))
    np.testing.assert_array_equal(clone.cs_model.lam, engine.cs_model.lam)
    np.testing.assert_array_equal(clone.translation.T, engine.translation.T)
    assert clone.summary() == engine.summary()
    report = BugReport("q", 1, "crash while flushing the journal")
    ranking_a, _ = engine.locate(report)
    ranking_b, _ = clone.locate(report)
    assert ranking_a == ranking_b


def test_empty_engine_round_trip():
    blob = dumps(Engine())
    assert dumps(loads(blob)) == blob


@pytest.mark.parametrize("cut", [0, 10, 44, 100, -1])
def test_truncated_snapshot(engine, cut):
    blob = dumps(engine)
    with pytest.raises(CorruptSnapshot):
        loads(blob[:cut])


def test_flipped_byte(engine):
    blob = bytearray(dumps(engine))
    blob[-5] ^= 0xFF
    with pytest.raises(CorruptSnapshot):
        loads(bytes(blob))


def test_older_version_header(engine):
    blob = dumps(engine)
    old = blob[:len(MAGIC)] + struct.pack("<I", FORMAT_VERSION - 1) + blob[len(MAGIC) + 4:]
    with pytest.raises(VersionMismatch, match=f"version {FORMAT_VERSION - 1}.*reads {FORMAT_VERSION}"):
        loads(old)
