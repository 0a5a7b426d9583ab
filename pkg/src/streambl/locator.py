"""Rank snapshot classes against a bug report."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .corpus import (
    BugReport,
    EmptyDocument,
    PreprocessConfig,
    code_token_ratio,
    file_base_name,
    preprocess_bug_report,
    preprocess_code,
    segment_methods,
)
from .topicmodel import TopicModel
from .translation import TranslationMatrix, translate

log = logging.getLogger(__name__)


class ZeroVector(ValueError):
    pass


class EmptyIndex(ValueError):
    pass


@dataclass(frozen=True)
class LocatorConfig:
    gamma: float = 5.0
    baseline_mode: bool = False

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")


def combine(dist_cs, dist_co, lambda_ratio: float, gamma: float) -> np.ndarray:
    """norm(dist_cs * lambda * gamma + dist_co * (1 - lambda))."""
    if not 0.0 <= lambda_ratio <= 1.0:
        raise ValueError("lambda_ratio must lie in [0, 1]")
    dist_cs = np.asarray(dist_cs, dtype=np.float64)
    dist_co = np.asarray(dist_co, dtype=np.float64)
    # Divide through by lambda * gamma before normalizing: same result, but
    # lambda = 1 then yields norm(dist_cs) bit for bit whatever gamma is.
    if lambda_ratio == 0.0:
        mixed = dist_co
    else:
        mixed = dist_cs + dist_co * ((1.0 - lambda_ratio) / (lambda_ratio * gamma))
    total = mixed.sum()
    if total <= 0:
        raise ZeroVector("combined distribution is all zero")
    return mixed / total


def cosine_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine distance of a zero vector")
    return float(np.clip(1.0 - (a @ b) / (na * nb), 0.0, 1.0))


@dataclass
class SnapshotIndex:
    """Method-level topic distributions for every class in a snapshot."""

    paths: list[str]
    methods: list[np.ndarray]  # one (n_methods, k) array per class
    class_names: frozenset[str] = frozenset()

    def __post_init__(self):
        if len(self.paths) != len(self.methods):
            raise ValueError("paths and methods must align")
        if len(set(self.paths)) != len(self.paths):
            raise ValueError("class paths must be unique")
        if any(len(m) == 0 for m in self.methods):
            raise ValueError("every class needs at least one method distribution")

    def __len__(self) -> int:
        return len(self.paths)


Ranking = list[tuple[str, float]]


def rank_classes(query, index: SnapshotIndex) -> Ranking:
    """Score each class by its closest method; ascending distance, ties by path."""
    if len(index) == 0:
        raise EmptyIndex("snapshot index has no classes")
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    if qn == 0:
        raise ZeroVector("query is all zero")
    scored = []
    for path, m in zip(index.paths, index.methods):
        sims = (m @ q) / (np.linalg.norm(m, axis=1) * qn)
        scored.append((float(np.clip(np.min(1.0 - sims), 0.0, 1.0)), path))
    scored.sort()
    return [(path, dist) for dist, path in scored]


@dataclass
class IndexBuilder:
    """Build :class:`SnapshotIndex` objects, caching per-method inference.

    Cache entries are keyed by method-text hash and are dropped whenever
    the changeset model is updated.
    """

    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    _model_key: tuple | None = None
    _cache: dict[str, np.ndarray | None] = field(default_factory=dict)

    def build(self, files: Mapping[str, str], model: TopicModel) -> SnapshotIndex:
        key = (id(model), model.t, model.num_terms)
        if key != self._model_key:
            self._cache.clear()
            self._model_key = key
        paths, methods = [], []
        pending: list[tuple[str, object]] = []
        per_class: list[tuple[str, list[str]]] = []
        for path in sorted(files):
            units = segment_methods(files[path]) or [files[path]]
            hashes = []
            for unit in units:
                h = hashlib.sha1(unit.encode("utf-8", "surrogatepass")).hexdigest()
                hashes.append(h)
                if h not in self._cache:
                    try:
                        pending.append((h, preprocess_code(path, unit, self.preprocess)))
                    except EmptyDocument:
                        self._cache[h] = None
            per_class.append((path, hashes))
        if pending:
            dists = model.infer_many([doc for _, doc in pending])
            for (h, _), dist in zip(pending, dists):
                self._cache[h] = dist
        for path, hashes in per_class:
            rows = [self._cache[h] for h in hashes if self._cache.get(h) is not None]
            if not rows:
                continue
            paths.append(path)
            methods.append(np.vstack(rows))
        names = frozenset(file_base_name(p) for p in files)
        return SnapshotIndex(paths, methods, names)


def build_index(files: Mapping[str, str], model: TopicModel,
                cfg: PreprocessConfig | None = None) -> SnapshotIndex:
    return IndexBuilder(cfg or PreprocessConfig()).build(files, model)


@dataclass
class Query:
    """Intermediate values of one locate call, kept for inspection."""

    dist_cs: np.ndarray
    dist_br: np.ndarray | None = None
    dist_co: np.ndarray | None = None
    code_ratio: float | None = None
    combined: np.ndarray | None = None

    @property
    def vector(self) -> np.ndarray:
        return self.dist_cs if self.combined is None else self.combined


def build_query(br: BugReport, cs_model: TopicModel, br_model: TopicModel | None,
                T: TranslationMatrix | None, class_names, cfg: LocatorConfig,
                preprocess: PreprocessConfig | None = None) -> Query:
    doc = preprocess_bug_report(br, preprocess)
    q = Query(dist_cs=cs_model.infer(doc))
    if cfg.baseline_mode or T is None or br_model is None:
        return q
    q.dist_br = br_model.infer(doc)
    q.dist_co, _ = translate(T, q.dist_br)
    q.code_ratio = code_token_ratio(br, class_names)
    q.combined = combine(q.dist_cs, q.dist_co, q.code_ratio, cfg.gamma)
    return q


def locate(br: BugReport, cs_model: TopicModel, br_model: TopicModel | None,
           T: TranslationMatrix | None, index: SnapshotIndex,
           cfg: LocatorConfig | None = None, preprocess: PreprocessConfig | None = None) -> Ranking:
    cfg = cfg or LocatorConfig()
    if len(index) == 0:
        raise EmptyIndex("snapshot index has no classes")
    q = build_query(br, cs_model, br_model, T, index.class_names, cfg, preprocess)
    return rank_classes(q.vector, index)
