"""Timestamp-ordered replay, ranking metrics, co-change analysis and timing."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

from .corpus import BugReport, Changeset, Document, EmptyDocument, PreprocessConfig, preprocess_code
from .engine import Engine, EngineConfig, is_source
from .locator import EmptyIndex, Query, Ranking, ZeroVector
from .topicmodel import TopicModel

log = logging.getLogger(__name__)

TOP_KS = (1, 3, 5)


class CausalityViolation(RuntimeError):
    pass


class TooFewClasses(ValueError):
    pass


@dataclass(frozen=True)
class FixLink:
    bug_id: str
    fixing_sha: str
    fixed_files: tuple[str, ...]

    def __post_init__(self):
        if not self.fixed_files:
            raise ValueError(f"fix link for bug {self.bug_id} has an empty goldset")


Payload = Union[Changeset, BugReport, FixLink]
_KIND_ORDER = {BugReport: 0, FixLink: 1, Changeset: 2}


@dataclass(frozen=True)
class HistoryEvent:
    timestamp: int
    payload: Payload

    @property
    def ident(self) -> str:
        p = self.payload
        if isinstance(p, Changeset):
            return p.sha
        if isinstance(p, BugReport):
            return p.id
        return f"{p.bug_id}@{p.fixing_sha}"

    def sort_key(self) -> tuple:
        # a fix is scored against its parent, so it sorts ahead of its own commit
        return (self.timestamp, _KIND_ORDER[type(self.payload)], self.ident)


def build_events(changesets: Iterable[Changeset], bugs: Iterable[BugReport],
                 links: Iterable[FixLink]) -> list[HistoryEvent]:
    changesets = list(changesets)
    by_sha = {cs.sha: cs for cs in changesets}
    events = [HistoryEvent(cs.timestamp, cs) for cs in changesets]
    events += [HistoryEvent(br.timestamp_reported, br) for br in bugs]
    for link in links:
        cs = by_sha.get(link.fixing_sha)
        if cs is None:
            log.warning("bug %s: fixing commit %s not in stream, link dropped", link.bug_id, link.fixing_sha)
            continue
        events.append(HistoryEvent(cs.timestamp, link))
    events.sort(key=HistoryEvent.sort_key)
    return events


# ---------------------------------------------------------------------------
# metrics

def _paths(ranking) -> list[str]:
    return [r[0] if isinstance(r, tuple) else r for r in ranking]


def first_hit(ranking, goldset) -> int | None:
    gold = set(goldset)
    for i, path in enumerate(_paths(ranking), 1):
        if path in gold:
            return i
    return None


def reciprocal_rank(ranking, goldset) -> float:
    if not goldset:
        raise ValueError("goldset must be non-empty")
    r = first_hit(ranking, goldset)
    return 0.0 if r is None else 1.0 / r


def average_precision(ranking, goldset) -> float:
    gold = set(goldset)
    if not gold:
        raise ValueError("goldset must be non-empty")
    # exact rational sum, so the result is the correctly rounded float
    found = 0
    total = Fraction(0)
    for i, path in enumerate(_paths(ranking), 1):
        if path in gold:
            found += 1
            total += Fraction(found, i)
    return float(total / len(gold))


def top_at_k(per_bug_hits: Sequence[int | None], k: int) -> float:
    """Fraction of bugs whose first relevant rank is <= k (None = never found)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not per_bug_hits:
        log.warning("top_at_k over zero bugs")
        return 0.0
    return sum(1 for r in per_bug_hits if r is not None and r <= k) / len(per_bug_hits)


@dataclass
class BugResult:
    bug_id: str
    rr: float
    ap: float
    first_rank: int | None

    def hit(self, k: int) -> bool:
        return self.first_rank is not None and self.first_rank <= k


@dataclass
class TimingLog:
    update_times: list[float] = field(default_factory=list)
    build_time: float | None = None


@dataclass
class TimingReport:
    build_time: float
    mean_update_time: float
    speedup: float


def timing_report(logs: TimingLog) -> TimingReport:
    """Build time over mean single-update time.

    When no separate rebuild was measured, the build time is the total
    streamed time, i.e. the cost of reaching the current state from scratch.
    """
    if not logs.update_times:
        log.warning("timing_report: no update times recorded")
        return TimingReport(logs.build_time or 0.0, 0.0, 0.0)
    mean = float(np.mean(logs.update_times))
    build = logs.build_time if logs.build_time is not None else float(np.sum(logs.update_times))
    return TimingReport(build, mean, build / mean if mean > 0 else float("inf"))


@dataclass
class EvalResult:
    rows: list[BugResult] = field(default_factory=list)
    timing: TimingLog = field(default_factory=TimingLog)
    skipped: list[str] = field(default_factory=list)

    @property
    def mrr(self) -> float:
        return float(np.mean([r.rr for r in self.rows])) if self.rows else 0.0

    @property
    def map(self) -> float:
        return float(np.mean([r.ap for r in self.rows])) if self.rows else 0.0

    def top(self, k: int) -> float:
        return top_at_k([r.first_rank for r in self.rows], k)

    def aggregates(self) -> dict[str, float]:
        out = {"mrr": self.mrr, "map": self.map}
        out.update({f"top{k}": self.top(k) for k in TOP_KS})
        return out

    def metrics_table(self) -> str:
        """Per-bug rows plus an aggregate footer, comma-separated."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bug_id", "rr", "ap", "hit1", "hit3", "hit5"])
        for r in self.rows:
            w.writerow([r.bug_id, repr(r.rr), repr(r.ap)] + [int(r.hit(k)) for k in TOP_KS])
        agg = self.aggregates()
        w.writerow(["ALL", repr(agg["mrr"]), repr(agg["map"])] + [repr(agg[f"top{k}"]) for k in TOP_KS])
        return buf.getvalue()

    def timing_table(self) -> str:
        rep = timing_report(self.timing)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "seconds"])
        w.writerow(["build_time", f"{rep.build_time:.6f}"])
        w.writerow(["mean_update_time", f"{rep.mean_update_time:.6f}"])
        w.writerow(["speedup", f"{rep.speedup:.3f}"])
        return buf.getvalue()


EvalHook = Callable[[str, Query, Ranking], None]


def replay(events: Sequence[HistoryEvent], config: EngineConfig | None = None,
           mode: str = "jingo", on_evaluate: EvalHook | None = None,
           engine: Engine | None = None) -> EvalResult:
    """Re-run history in timestamp order and score every linked bug at its fix."""
    config = (config or EngineConfig()).with_mode(mode)
    engine = engine or Engine(config)
    result = EvalResult()
    bug_reports: dict[str, BugReport] = {}
    pending: dict[str, list[str]] = defaultdict(list)
    last = None
    for ev in events:
        if last is not None and ev.timestamp < last:
            raise CausalityViolation(f"event {ev.ident} at {ev.timestamp} precedes {last}")
        last = ev.timestamp
        p = ev.payload
        if isinstance(p, Changeset):
            t0 = time.perf_counter()
            doc = engine.add_changeset(p)
            result.timing.update_times.append(time.perf_counter() - t0)
            for bug_id in pending.pop(p.sha, []):
                engine.record_fix(bug_id, doc)
        elif isinstance(p, BugReport):
            bug_reports[p.id] = p
            engine.add_bug(p)
        else:
            br = bug_reports.get(p.bug_id)
            if br is None:
                log.warning("bug %s: not reported before its fix, skipped", p.bug_id)
                result.skipped.append(p.bug_id)
                continue
            row = _evaluate(engine, br, p, on_evaluate)
            if row is None:
                result.skipped.append(p.bug_id)
            else:
                result.rows.append(row)
            pending[p.fixing_sha].append(p.bug_id)
    return result


def _evaluate(engine: Engine, br: BugReport, link: FixLink, hook: EvalHook | None) -> BugResult | None:
    if engine.cs_model.t == 0:
        log.warning("bug %s: changeset model still empty, skipped", br.id)
        return None
    try:
        ranking, query = engine.locate(br)
    except (EmptyDocument, EmptyIndex, ZeroVector) as exc:
        log.warning("bug %s: not evaluated (%s)", br.id, exc)
        return None
    if hook is not None:
        hook(br.id, query, ranking)
    gold = [f for f in link.fixed_files if is_source(f, engine.config.source_suffixes)] or list(link.fixed_files)
    return BugResult(br.id, reciprocal_rank(ranking, gold), average_precision(ranking, gold),
                     first_hit(ranking, gold))


# ---------------------------------------------------------------------------
# co-change vs topic similarity

COCHANGE_BUCKETS = (">=20%", "5-20%", "<5%")


def cochange_rate(commits_i: set, commits_j: set) -> float:
    denom = min(len(commits_i), len(commits_j))
    return len(commits_i & commits_j) / denom if denom else 0.0


@dataclass
class CochangeResult:
    means: dict[str, float]
    counts: dict[str, int]
    classes: list[str]


def cochange_analysis(changesets: Iterable[Changeset], model: TopicModel, snapshot: Mapping[str, str],
                      thresholds: tuple[float, float] = (0.20, 0.05), top_n: int = 100,
                      preprocess: PreprocessConfig | None = None) -> CochangeResult:
    """Mean topic cosine similarity of class pairs, bucketed by co-change rate."""
    history: dict[str, set[str]] = defaultdict(set)
    for cs in changesets:
        for path in cs.paths:
            if path in snapshot:
                history[path].add(cs.sha)
    ranked = sorted(history, key=lambda p: (-len(history[p]), p))[:top_n]
    if len(ranked) < 2:
        raise TooFewClasses(f"need at least 2 changed classes, found {len(ranked)}")
    dists = {}
    for path in ranked:
        try:
            dists[path] = model.infer(preprocess_code(path, snapshot[path], preprocess))
        except EmptyDocument:
            log.info("%s: no terms, excluded from co-change analysis", path)
    hi, lo = thresholds
    sims: dict[str, list[float]] = {b: [] for b in COCHANGE_BUCKETS}
    for a, b in itertools.combinations([p for p in ranked if p in dists], 2):
        rate = cochange_rate(history[a], history[b])
        bucket = COCHANGE_BUCKETS[0] if rate >= hi else COCHANGE_BUCKETS[1] if rate >= lo else COCHANGE_BUCKETS[2]
        va, vb = dists[a], dists[b]
        sims[bucket].append(float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb))))
    means = {b: float(np.mean(v)) if v else float("nan") for b, v in sims.items()}
    return CochangeResult(means, {b: len(v) for b, v in sims.items()}, ranked)


def measure_rebuild(config, docs: Sequence[Document]) -> float:
    """Wall-clock seconds to stream ``docs`` into a fresh model."""
    from .topicmodel import rebuild

    t0 = time.perf_counter()
    rebuild(config, docs)
    return time.perf_counter() - t0
