"""Binary snapshot container for engine state.

Layout::

    magic   8 bytes  b"STRMBL\\x00\\x01"
    version u32 little-endian
    sha256  32 bytes over the payload
    payload sequence of sections: name-len u16, name, data-len u64, data

The ``meta`` section is canonical JSON (configs, vocabularies, pair kinds,
cursor, shapes). Numeric sections are little-endian float64, row-major.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .corpus import PreprocessConfig
from .engine import Engine, EngineConfig
from .locator import LocatorConfig
from .topicmodel import LdaConfig, TopicModel, Vocabulary
from .translation import PairKind, PairStore, ReadinessPolicy, TranslationMatrix

MAGIC = b"STRMBL\x00\x01"
FORMAT_VERSION = 1


class SnapshotError(ValueError):
    pass


class VersionMismatch(SnapshotError):
    pass


class CorruptSnapshot(SnapshotError):
    pass


def _f64(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _from_f64(data: bytes, shape) -> np.ndarray:
    expected = int(np.prod(shape)) * 8
    if len(data) != expected:
        raise CorruptSnapshot(f"section holds {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(shape)


def config_to_dict(cfg: EngineConfig) -> dict:
    pre = cfg.preprocess
    return {
        "changeset_lda": dataclasses.asdict(cfg.changeset_lda),
        "bug_lda": dataclasses.asdict(cfg.bug_lda),
        "omega": cfg.readiness.omega,
        "gamma": cfg.locator.gamma,
        "baseline_mode": cfg.locator.baseline_mode,
        "ridge": cfg.ridge,
        "pair_window": cfg.pair_window,
        "commit_log_pairs": cfg.commit_log_pairs,
        "source_suffixes": list(cfg.source_suffixes),
        "preprocess": {
            "filename_repeat": pre.filename_repeat,
            "keep_unsplit": pre.keep_unsplit,
            "context_lines": pre.context_lines,
            "include_message": pre.include_message,
            "code_keywords": sorted(pre.code_keywords),
            "stopwords": sorted(pre.stopwords),
        },
    }


def config_from_dict(d: dict) -> EngineConfig:
    pre = dict(d["preprocess"])
    pre["code_keywords"] = frozenset(pre["code_keywords"])
    pre["stopwords"] = frozenset(pre["stopwords"])
    return EngineConfig(
        changeset_lda=LdaConfig(**d["changeset_lda"]),
        bug_lda=LdaConfig(**d["bug_lda"]),
        readiness=ReadinessPolicy(d["omega"]),
        locator=LocatorConfig(gamma=d["gamma"], baseline_mode=d["baseline_mode"]),
        preprocess=PreprocessConfig(**pre),
        ridge=d["ridge"],
        pair_window=d["pair_window"],
        commit_log_pairs=d["commit_log_pairs"],
        source_suffixes=tuple(d["source_suffixes"]),
    )


def dumps(engine: Engine) -> bytes:
    T = engine._T if not engine._T_dirty else None
    meta = {
        "config": config_to_dict(engine.config),
        "cs_vocab": engine.cs_model.vocab.terms,
        "cs_t": engine.cs_model.t,
        "br_vocab": engine.br_model.vocab.terms,
        "br_t": engine.br_model.t,
        "pair_kinds": [k.value for k in engine.pairs.kinds],
        "T_fitted_on": None if T is None else T.fitted_on,
        "cursor": list(engine.cursor),
        "bugs": {bid: doc.term_counts for bid, doc in sorted(engine.bugs.items())},
        "tree": {p: lines for p, lines in sorted(engine.tree.files.items())},
    }
    B, A = engine.pairs.matrices()
    sections = [
        ("meta", json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")),
        ("cs_lambda", _f64(engine.cs_model.lam)),
        ("br_lambda", _f64(engine.br_model.lam)),
        ("pairs_B", _f64(B)),
        ("pairs_A", _f64(A)),
        ("T", b"" if T is None else _f64(T.T)),
    ]
    payload = bytearray()
    for name, data in sections:
        raw = name.encode("ascii")
        payload += struct.pack("<H", len(raw)) + raw + struct.pack("<Q", len(data)) + data
    payload = bytes(payload)
    return MAGIC + struct.pack("<I", FORMAT_VERSION) + hashlib.sha256(payload).digest() + payload


def loads(blob: bytes) -> Engine:
    from .corpus import Document

    head = len(MAGIC) + 4 + 32
    if len(blob) < head or blob[:len(MAGIC)] != MAGIC:
        raise CorruptSnapshot("missing snapshot header")
    (version,) = struct.unpack_from("<I", blob, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"snapshot format version {version}, this build reads {FORMAT_VERSION}")
    digest = blob[len(MAGIC) + 4:head]
    payload = blob[head:]
    if hashlib.sha256(payload).digest() != digest:
        raise CorruptSnapshot("checksum mismatch")
    sections: dict[str, bytes] = {}
    pos = 0
    try:
        while pos < len(payload):
            (n,) = struct.unpack_from("<H", payload, pos)
            name = payload[pos + 2:pos + 2 + n].decode("ascii")
            pos += 2 + n
            (size,) = struct.unpack_from("<Q", payload, pos)
            pos += 8
            sections[name] = payload[pos:pos + size]
            pos += size
    except struct.error as exc:
        raise CorruptSnapshot(f"truncated section table: {exc}") from exc
    try:
        meta = json.loads(sections["meta"])
        config = config_from_dict(meta["config"])
        engine = Engine(config)
        kcs, kbr = config.changeset_lda.k, config.bug_lda.k
        engine.cs_model = TopicModel(
            config.changeset_lda, Vocabulary.from_terms(meta["cs_vocab"]),
            _from_f64(sections["cs_lambda"], (kcs, len(meta["cs_vocab"]))), meta["cs_t"])
        engine.br_model = TopicModel(
            config.bug_lda, Vocabulary.from_terms(meta["br_vocab"]),
            _from_f64(sections["br_lambda"], (kbr, len(meta["br_vocab"]))), meta["br_t"])
        n = len(meta["pair_kinds"])
        B = _from_f64(sections["pairs_B"], (n, kbr))
        A = _from_f64(sections["pairs_A"], (n, kcs))
        engine.pairs = PairStore(kbr, kcs, [r.copy() for r in B], [r.copy() for r in A],
                                 [PairKind(k) for k in meta["pair_kinds"]], window=config.pair_window)
        if meta["T_fitted_on"] is not None:
            engine.set_translation(TranslationMatrix(_from_f64(sections["T"], (kbr, kcs)), meta["T_fitted_on"]))
        engine.cursor = (int(meta["cursor"][0]), str(meta["cursor"][1]))
        engine.bugs = {bid: Document(bid, counts) for bid, counts in meta["bugs"].items()}
        engine.tree.files = {p: list(lines) for p, lines in meta["tree"].items()}
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise CorruptSnapshot(f"incomplete snapshot: {exc!r}") from exc
    return engine


def save_state(engine: Engine, path: str | Path) -> None:
    Path(path).write_bytes(dumps(engine))


def load_state(path: str | Path) -> Engine:
    return loads(Path(path).read_bytes())
