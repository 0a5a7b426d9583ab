import dataclasses
import logging

import numpy as np
import pytest

from metric_fixtures import CASES, TOP_K
from streambl.corpus import BugReport, Changeset, Document, FileChange, Hunk, render_diff
from streambl.engine import EngineConfig
from streambl.evaluation import (
    CausalityViolation,
    FixLink,
    HistoryEvent,
    TimingLog,
    TooFewClasses,
    average_precision,
    build_events,
    cochange_analysis,
    cochange_rate,
    first_hit,
    reciprocal_rank,
    replay,
    timing_report,
    top_at_k,
)
from streambl.synthetic import SynthConfig, generate_history
from streambl.topicmodel import LdaConfig, TopicModel

SMALL = SynthConfig(n_changesets=150, n_bugs=15, n_nl_bugs=5, n_modules=3)
CONFIG = EngineConfig(changeset_lda=LdaConfig(k=6, kappa=0.75), bug_lda=LdaConfig(k=6, kappa=1.0))


@pytest.mark.parametrize("ranking, gold, rr, ap, first", CASES)
def test_metric_fixtures(ranking, gold, rr, ap, first):
    assert reciprocal_rank(ranking, gold) == float(rr)
    assert average_precision(ranking, gold) == float(ap)
    assert first_hit(ranking, gold) == first


@pytest.mark.parametrize("k", sorted(TOP_K))
def test_top_at_k_fixture(k):
    hits = [first for *_, first in CASES]
    assert top_at_k(hits, k) == float(TOP_K[k])


def test_metrics_accept_scored_rankings():
    assert reciprocal_rank([("A", 0.1), ("B", 0.2)], {"B"}) == 0.5


def test_top_at_k_examples(caplog):
    assert top_at_k([4], 3) == 0.0
    assert top_at_k([4], 5) == 1.0
    assert top_at_k([1, 1, 1], 1) == 1.0
    with caplog.at_level(logging.WARNING):
        assert top_at_k([], 1) == 0.0
    assert "zero bugs" in caplog.text


def test_empty_goldset_rejected():
    with pytest.raises(ValueError):
        reciprocal_rank(["A"], set())
    with pytest.raises(ValueError):
        FixLink("1", "abc", ())


def test_timing_report_examples(caplog):
    rep = timing_report(TimingLog([1.0, 1.0, 1.0], build_time=100.0))
    assert rep.speedup == 100.0 and rep.mean_update_time == 1.0
    with caplog.at_level(logging.WARNING):
        empty = timing_report(TimingLog())
    assert (empty.build_time, empty.mean_update_time, empty.speedup) == (0.0, 0.0, 0.0)
    assert "no update times" in caplog.text


def test_timing_defaults_to_streamed_total():
    rep = timing_report(TimingLog([0.5, 1.5]))
    assert rep.build_time == 2.0 and rep.speedup == 2.0


@pytest.mark.parametrize("a, b, rate", [
    ({1, 2, 3, 4}, {1, 2}, 1.0),
    ({1, 2, 3, 4}, {4, 5, 6, 7, 8}, 0.25),
    ({1}, {2}, 0.0),
    (set(), {1}, 0.0),
])
def test_cochange_rate(a, b, rate):
    assert cochange_rate(a, b) == rate
    assert cochange_rate(b, a) == rate


def _commit(sha, ts, *paths):
    return Changeset(sha, ts, files=[FileChange(p, [Hunk(added=["x"])]) for p in paths])


def test_identical_classes_always_changed_together():
    model = TopicModel(LdaConfig(k=2, seed=0))
    model.learn([Document("d", {"alpha": 3, "beta": 1})])
    text = "class Alpha { void alpha() {} }"
    snap = {"A.java": text, "B.java": text}
    res = cochange_analysis([_commit("c1", 1, "A.java", "B.java"), _commit("c2", 2, "A.java", "B.java")],
                            model, snap)
    assert res.counts[">=20%"] == 1
    assert res.means[">=20%"] == pytest.approx(1.0)


def test_disjoint_classes_never_cochanged():
    model = TopicModel(LdaConfig(k=2, alpha=0.1, seed=0))
    model.expand_vocabulary({"alpha", "beta"})
    for i in range(100):
        model.update([Document(str(i), {"alpha" if i % 2 == 0 else "beta": 3})])
    snap = {"A.java": "alpha alpha alpha", "B.java": "beta beta beta"}
    changes = [_commit(f"a{i}", i + 1, "A.java") for i in range(30)] + [_commit(f"b{i}", 100 + i, "B.java")
                                                                     for i in range(30)]
    res = cochange_analysis(changes, model, snap)
    assert res.counts["<5%"] == 1
    assert res.means["<5%"] == pytest.approx(0.0, abs=0.1)


def test_cochange_needs_two_classes():
    model = TopicModel(LdaConfig(k=2))
    with pytest.raises(TooFewClasses):
        cochange_analysis([_commit("c", 1, "A.java")], model, {"A.java": "a"})


def test_cochange_top_n_limits_classes():
    model = TopicModel(LdaConfig(k=2))
    model.learn([Document("d", {"alpha": 1})])
    snap = {f"C{i}.java": "alpha" for i in range(5)}
    changes = [_commit(f"s{i}{j}", i * 10 + j + 1, f"C{i}.java") for i in range(5) for j in range(i + 1)]
    res = cochange_analysis(changes, model, snap, top_n=3)
    assert res.classes == ["C4.java", "C3.java", "C2.java"]


# -- replay -----------------------------------------------------------------

@pytest.fixture(scope="module")
def history():
    return generate_history(3, SMALL)


def test_replay_without_links(history):
    events = build_events(history.changesets, history.bugs, [])
    result = replay(events, CONFIG)
    assert result.rows == []
    assert len(result.timing.update_times) == len(history.changesets)
    assert result.mrr == 0.0


def test_replay_scores_linked_bugs(history):
    events = build_events(history.changesets, history.bugs, history.links)
    result = replay(events, CONFIG, "jingo")
    assert len(result.rows) + len(result.skipped) == len(history.links)
    assert all(0.0 <= r.rr <= 1.0 and 0.0 <= r.ap <= 1.0 for r in result.rows)
    assert set(result.aggregates()) == {"mrr", "map", "top1", "top3", "top5"}


def test_out_of_order_stream_raises():
    a = _commit("a" * 8, 10, "A.java")
    b = _commit("b" * 8, 5, "A.java")
    with pytest.raises(CausalityViolation):
        replay([HistoryEvent(10, a), HistoryEvent(5, b)], CONFIG)


def test_fix_link_sorts_before_its_commit():
    cs = _commit("f" * 8, 50, "A.java")
    br = BugReport("7", 50, "crash")
    events = build_events([cs], [br], [FixLink("7", cs.sha, ("A.java",))])
    assert [type(e.payload).__name__ for e in events] == ["BugReport", "FixLink", "Changeset"]


def test_link_to_unknown_commit_dropped(caplog):
    with caplog.at_level(logging.WARNING):
        events = build_events([], [BugReport("1", 1, "x")], [FixLink("1", "nope", ("A.java",))])
    assert len(events) == 1 and "not in stream" in caplog.text


def test_single_bug_ranked_first():
    old = ["class Alpha {", "    void alpha() {", "        alpha();", "    }", "}"]
    other = ["class Beta {", "    void beta() {", "        beta();", "    }", "}"]
    changes = [
        Changeset("1" * 8, 1, message="add alpha", files=[FileChange("src/Alpha.java", [Hunk(
            added=old, old_start=0, new_start=1, lines=[("+", t) for t in old])])]),
        Changeset("2" * 8, 2, message="add beta", files=[FileChange("src/Beta.java", [Hunk(
            added=other, old_start=0, new_start=1, lines=[("+", t) for t in other])])]),
        Changeset("3" * 8, 10, message="fix alpha", files=[FileChange("src/Alpha.java", [Hunk(
            added=["// ok"], context=old[-1:], old_start=5, new_start=5,
            lines=[(" ", old[-1]), ("+", "// ok")])])]),
    ]
    bug = BugReport("9", 5, "Alpha alpha broken")
    events = build_events(changes, [bug], [FixLink("9", "3" * 8, ("src/Alpha.java",))])
    cfg = dataclasses.replace(CONFIG, changeset_lda=LdaConfig(k=2, alpha=0.1))
    result = replay(events, cfg, "baseline")
    assert result.mrr == result.map == result.top(1) == 1.0


def _with_marker(cs: Changeset, marker: str) -> Changeset:
    files = [dataclasses.replace(fc, hunks=[dataclasses.replace(h, added=h.added + [marker],
                                                                lines=h.lines + [("+", marker)])
                                            for h in fc.hunks]) for fc in cs.files]
    return dataclasses.replace(cs, files=files, message=cs.message + " " + marker)


@pytest.mark.parametrize("mode", ["jingo", "baseline"])
def test_future_events_do_not_leak(history, mode):
    links = sorted(history.links, key=lambda link: next(c.timestamp for c in history.changesets
                                                        if c.sha == link.fixing_sha))
    target = links[len(links) // 2]
    fix_ts = next(c.timestamp for c in history.changesets if c.sha == target.fixing_sha)
    marker = "zqxmarkerterm"
    future = [(_with_marker(c, marker) if c.timestamp >= fix_ts else c) for c in history.changesets]

    def capture(changesets, bugs, fixes):
        seen = {}

        def hook(bug_id, query, ranking):
            if bug_id == target.bug_id:
                seen["query"] = query
                seen["ranking"] = ranking
        replay(build_events(changesets, bugs, fixes), CONFIG, mode, on_evaluate=hook)
        return seen

    truncated = capture([c for c in history.changesets if c.timestamp <= fix_ts],
                        [b for b in history.bugs if b.timestamp_reported <= fix_ts],
                        [link for link in history.links if link in links[: len(links) // 2 + 1]])
    full = capture(future, history.bugs, history.links)
    assert truncated and full
    assert truncated["query"].vector.tobytes() == full["query"].vector.tobytes()
    assert truncated["ranking"] == full["ranking"]
    # the marker really was in the future changesets
    assert any(marker in render_diff(c) for c in future)


def test_replay_is_deterministic(history):
    events = build_events(history.changesets, history.bugs, history.links)
    a = replay(events, CONFIG, "jingo").metrics_table()
    b = replay(events, CONFIG, "jingo").metrics_table()
    assert a == b


def test_baseline_never_fits_translation(history):
    from streambl.engine import Engine

    events = build_events(history.changesets, history.bugs, history.links)
    cfg = CONFIG.with_mode("baseline")
    engine = Engine(cfg)
    replay(events, cfg, "baseline", engine=engine)
    assert engine.translation is None
    assert engine.br_model.t == 0
    assert len(engine.pairs) == 0


def test_jingo_eventually_uses_translation(history):
    from streambl.engine import Engine

    events = build_events(history.changesets, history.bugs, history.links)
    engine = Engine(CONFIG)
    used = []
    replay(events, CONFIG, "jingo", engine=engine,
           on_evaluate=lambda bug_id, q, r: used.append(q.dist_co is not None))
    assert engine.br_model.t > 0
    assert any(used)
    assert np.isfinite(engine.translation.T).all()
