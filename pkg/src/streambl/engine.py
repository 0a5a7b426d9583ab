"""Mutable localization state: two topic models, the pair store and the tree."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable

from .corpus import (
    BugReport,
    Changeset,
    Document,
    EmptyDocument,
    PreprocessConfig,
    preprocess_bug_report,
    preprocess_changeset,
    preprocess_text,
)
from .locator import IndexBuilder, LocatorConfig, Query, Ranking, build_query, rank_classes
from .topicmodel import BUG_REPORT_DEFAULTS, CHANGESET_DEFAULTS, LdaConfig, TopicModel
from .translation import (
    DEFAULT_RIDGE,
    PairKind,
    PairStore,
    ReadinessPolicy,
    TranslationMatrix,
    fit_store,
    is_ready,
)

log = logging.getLogger(__name__)

MODES = ("jingo", "baseline")


@dataclass(frozen=True)
class EngineConfig:
    changeset_lda: LdaConfig = CHANGESET_DEFAULTS
    bug_lda: LdaConfig = BUG_REPORT_DEFAULTS
    readiness: ReadinessPolicy = field(default_factory=ReadinessPolicy)
    locator: LocatorConfig = field(default_factory=LocatorConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    ridge: float = DEFAULT_RIDGE
    pair_window: int | None = None
    commit_log_pairs: bool = True
    source_suffixes: tuple[str, ...] = (".java",)

    def with_mode(self, mode: str) -> "EngineConfig":
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        return replace(self, locator=replace(self.locator, baseline_mode=(mode == "baseline")))

    @property
    def mode(self) -> str:
        return "baseline" if self.locator.baseline_mode else "jingo"


def is_source(path: str, suffixes: Iterable[str]) -> bool:
    return any(path.endswith(s) for s in suffixes)


class SnapshotTree:
    """Source files of the current head, kept current by applying each diff."""

    def __init__(self, suffixes: Iterable[str] = (".java",), files: dict[str, list[str]] | None = None):
        self.suffixes = tuple(suffixes)
        self.files: dict[str, list[str]] = files if files is not None else {}

    def apply(self, cs: Changeset) -> None:
        for fc in cs.files:
            if fc.binary:
                continue
            old = fc.old_path
            lines = self.files.pop(old, None) if old and old != fc.path else None
            if lines is None:
                lines = self.files.get(fc.path, [])
            if fc.deleted:
                self.files.pop(fc.path, None)
                continue
            if not is_source(fc.path, self.suffixes):
                continue
            self.files[fc.path] = _patch(lines, fc.hunks, cs.sha, fc.path)

    def contents(self) -> dict[str, str]:
        return {p: "\n".join(lines) + "\n" for p, lines in self.files.items()}


def _patch(old: list[str], hunks, sha: str, path: str) -> list[str]:
    out: list[str] = []
    pos = 0
    for h in sorted(hunks, key=lambda h: h.old_start):
        n_old = sum(1 for op, _ in h.lines if op != "+")
        start = h.old_start if n_old == 0 else h.old_start - 1
        if start < pos:
            log.debug("%s %s: overlapping hunk at line %d", sha, path, h.old_start)
            start = pos
        out.extend(old[pos:start])
        pos = start
        for op, text in h.lines:
            if op == "+":
                out.append(text)
                continue
            if pos < len(old) and old[pos] != text:
                log.debug("%s %s: context mismatch at line %d", sha, path, pos + 1)
            if op == " ":
                out.append(old[pos] if pos < len(old) else text)
            pos += 1
    out.extend(old[pos:])
    return out


class Engine:
    """Everything needed to answer a localization query at one point in history."""

    def __init__(self, config: EngineConfig | None = None):
        self.config = config or EngineConfig()
        cfg = self.config
        self.cs_model = TopicModel(cfg.changeset_lda)
        self.br_model = TopicModel(cfg.bug_lda)
        self.pairs = PairStore(cfg.bug_lda.k, cfg.changeset_lda.k, window=cfg.pair_window)
        self.tree = SnapshotTree(cfg.source_suffixes)
        self.bugs: dict[str, Document] = {}
        self.cursor: tuple[int, str] = (0, "")
        self._T: TranslationMatrix | None = None
        self._T_dirty = True
        self._index = IndexBuilder(cfg.preprocess)

    @property
    def baseline(self) -> bool:
        return self.config.locator.baseline_mode

    def _advance(self, timestamp: int, ident: str) -> None:
        self.cursor = (max(self.cursor[0], timestamp), ident)

    # -- events ---------------------------------------------------------------

    def add_changeset(self, cs: Changeset) -> Document | None:
        """Update the changeset model and the tree. Returns the document (None if empty)."""
        self.tree.apply(cs)
        self._advance(cs.timestamp, cs.sha)
        try:
            doc = preprocess_changeset(cs, self.config.preprocess)
        except EmptyDocument:
            log.info("%s: empty changeset document, model not updated", cs.sha)
            return None
        self.cs_model.learn([doc])
        if not self.baseline and self.config.commit_log_pairs:
            self._commit_log_pair(cs, doc)
        return doc

    def _commit_log_pair(self, cs: Changeset, doc: Document) -> None:
        policy = self.config.readiness
        if self.pairs.count(PairKind.BUG_FIX) >= policy.threshold(self.pairs.k_br, self.pairs.k_cs):
            return
        if self.br_model.t == 0 or not cs.message.strip():
            return
        try:
            msg = preprocess_text(cs.sha, cs.message, self.config.preprocess)
        except EmptyDocument:
            return
        if not any(term in self.br_model.vocab for term in msg.term_counts):
            # the posterior would just be the prior
            return
        self.record_pair(self.br_model.infer(msg), self.cs_model.infer(doc), PairKind.COMMIT_LOG)

    def add_bug(self, br: BugReport) -> Document | None:
        self._advance(br.timestamp_reported, br.id)
        try:
            doc = preprocess_bug_report(br, self.config.preprocess)
        except EmptyDocument:
            log.warning("bug %s: empty document after preprocessing", br.id)
            return None
        self.bugs[br.id] = doc
        if not self.baseline:
            self.br_model.learn([doc])
        return doc

    def record_fix(self, bug_id: str, fix_doc: Document | None) -> None:
        """Add a real bug-fix pair using the current models."""
        if self.baseline:
            return
        bug_doc = self.bugs.get(bug_id)
        if bug_doc is None or fix_doc is None:
            log.warning("bug %s: cannot record fix pair (missing document)", bug_id)
            return
        self.record_pair(self.br_model.infer(bug_doc), self.cs_model.infer(fix_doc), PairKind.BUG_FIX)

    def record_pair(self, b, a, kind: PairKind) -> None:
        self.pairs.record(b, a, kind)
        self._T_dirty = True

    # -- queries --------------------------------------------------------------

    @property
    def translation(self) -> TranslationMatrix | None:
        """Current translation matrix, refit lazily after new pairs; None until ready."""
        if self.baseline:
            return None
        cfg = self.config
        if not is_ready(self.pairs, cfg.readiness, cfg.bug_lda.k, cfg.changeset_lda.k):
            return None
        if self._T_dirty or self._T is None:
            self._T = fit_store(self.pairs, cfg.readiness, cfg.ridge)
            self._T_dirty = False
        return self._T

    def set_translation(self, T: TranslationMatrix | None) -> None:
        self._T = T
        self._T_dirty = T is None

    def snapshot_files(self) -> dict[str, str]:
        return self.tree.contents()

    def query(self, br: BugReport, class_names) -> Query:
        return build_query(br, self.cs_model, None if self.baseline else self.br_model,
                           self.translation, class_names, self.config.locator, self.config.preprocess)

    def locate(self, br: BugReport, files: dict[str, str] | None = None) -> tuple[Ranking, Query]:
        files = self.snapshot_files() if files is None else files
        index = self._index.build(files, self.cs_model)
        q = self.query(br, index.class_names)
        return rank_classes(q.vector, index), q

    def summary(self) -> dict:
        return {
            "changeset_topics": self.cs_model.k,
            "changeset_vocabulary": self.cs_model.num_terms,
            "changeset_updates": self.cs_model.t,
            "bug_topics": self.br_model.k,
            "bug_vocabulary": self.br_model.num_terms,
            "bug_updates": self.br_model.t,
            "pairs_bug_fix": self.pairs.count(PairKind.BUG_FIX),
            "pairs_commit_log": self.pairs.count(PairKind.COMMIT_LOG),
            "translation_ready": self.translation is not None,
            "snapshot_files": len(self.tree.files),
            "cursor": list(self.cursor),
        }

