"""Turn raw diffs, bug reports and source files into bag-of-terms documents.

Two pipelines share the same identifier splitter and Porter stemmer:

* code text (changesets, class/method bodies): identifier splitting, stemming,
  programming-language keyword removal, file base names boosted;
* bug-report text: identifier splitting, stemming, English stop-word removal.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import PurePosixPath
from typing import Iterable

from nltk.stem.porter import PorterStemmer

log = logging.getLogger(__name__)


class MalformedDiff(ValueError):
    pass


class EmptyDocument(ValueError):
    pass


@dataclass
class Hunk:
    added: list[str] = field(default_factory=list)
    removed: list[str] = field(default_factory=list)
    context: list[str] = field(default_factory=list)
    old_start: int = 0
    new_start: int = 0
    # ordered (op, text) pairs with op in {" ", "+", "-"}; needed to re-apply the hunk
    lines: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class FileChange:
    path: str
    hunks: list[Hunk] = field(default_factory=list)
    old_path: str | None = None
    deleted: bool = False
    binary: bool = False


@dataclass
class Changeset:
    sha: str
    timestamp: int
    author: str = ""
    message: str = ""
    files: list[FileChange] = field(default_factory=list)

    def __post_init__(self):
        if not self.sha:
            raise ValueError("changeset sha must be non-empty")
        if self.timestamp <= 0:
            raise ValueError(f"changeset {self.sha}: timestamp must be positive")

    @property
    def paths(self) -> list[str]:
        return [f.path for f in self.files]


@dataclass
class BugReport:
    id: str
    timestamp_reported: int
    summary: str
    description: str = ""

    def __post_init__(self):
        if not self.summary or not self.summary.strip():
            raise ValueError(f"bug {self.id}: summary must be non-empty")

    @property
    def text(self) -> str:
        return f"{self.summary}\n{self.description}" if self.description else self.summary


@dataclass
class Document:
    """Bag of terms. Terms are strings; topic models map them to ids."""

    source_id: str
    term_counts: dict[str, int]

    def __post_init__(self):
        if any(c < 1 for c in self.term_counts.values()):
            raise ValueError("document term counts must be >= 1")

    @property
    def total_tokens(self) -> int:
        return sum(self.term_counts.values())

    def __len__(self) -> int:
        return len(self.term_counts)


def load_wordlist(source: str | PurePosixPath) -> frozenset[str]:
    """Read a one-token-per-line list; ``#`` starts a comment."""
    with open(source, encoding="utf-8") as fh:
        return _parse_wordlist(fh.read())


def _parse_wordlist(text: str) -> frozenset[str]:
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line:
            words.add(line)
    return frozenset(words)


@lru_cache(maxsize=None)
def _packaged_wordlist(name: str) -> frozenset[str]:
    return _parse_wordlist(resources.files("streambl.data").joinpath(name).read_text("utf-8"))


def default_stopwords() -> frozenset[str]:
    return _packaged_wordlist("stopwords.txt")


def default_code_keywords() -> frozenset[str]:
    return _packaged_wordlist("java_keywords.txt")


@dataclass(frozen=True)
class PreprocessConfig:
    filename_repeat: int = 10
    keep_unsplit: bool = True
    context_lines: int = 3
    code_keywords: frozenset[str] = field(default_factory=default_code_keywords)
    stopwords: frozenset[str] = field(default_factory=default_stopwords)
    include_message: bool = True

    def __post_init__(self):
        if self.filename_repeat < 1:
            raise ValueError("filename_repeat must be >= 1")


# ---------------------------------------------------------------------------
# unified diff parsing

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@")
_DIFF_GIT_RE = re.compile(r'^diff --git "?a/(.*?)"? "?b/(.*?)"?$')


def _strip_prefix(path: str) -> str | None:
    path = path.split("\t", 1)[0].strip().strip('"')
    if path == "/dev/null":
        return None
    if path.startswith(("a/", "b/")):
        return path[2:]
    return path


def parse_diff(raw: str, sha: str, timestamp: int, author: str = "", message: str = "") -> Changeset:
    """Parse ``git diff`` output into a :class:`Changeset`.

    File paths come from the new-file side of each header (the old side for
    deletions). Hunk bodies are consumed using the line counts from the
    ``@@`` header; a body that runs out early or contains an unknown line
    prefix raises :class:`MalformedDiff`.
    """
    cs = Changeset(sha=sha, timestamp=timestamp, author=author, message=message)
    lines = raw.splitlines()
    current: FileChange | None = None
    i = 0
    n = len(lines)

    def start_file(path: str) -> FileChange:
        fc = FileChange(path=path)
        cs.files.append(fc)
        return fc

    while i < n:
        line = lines[i]
        if line.startswith("diff --git "):
            m = _DIFF_GIT_RE.match(line)
            if m is None:
                raise MalformedDiff(f"{sha}: unreadable header {line!r}")
            current = start_file(m.group(2))
            current.old_path = m.group(1)
            i += 1
            continue
        if line.startswith("--- ") and i + 1 < n and lines[i + 1].startswith("+++ "):
            old = _strip_prefix(line[4:])
            new = _strip_prefix(lines[i + 1][4:])
            path = new if new is not None else old
            if path is None:
                raise MalformedDiff(f"{sha}: both sides of file header are /dev/null")
            if current is None or current.hunks:
                current = start_file(path)
            else:
                current.path = path
            current.old_path = old
            current.deleted = new is None
            i += 2
            continue
        if line.startswith("rename to ") and current is not None:
            current.path = line[len("rename to "):].strip()
            i += 1
            continue
        if line.startswith("Binary files ") or line.startswith("GIT binary patch"):
            if current is not None:
                current.binary = True
                log.info("%s: skipping binary change to %s", sha, current.path)
            i += 1
            continue
        if line.startswith("@@"):
            m = _HUNK_RE.match(line)
            if m is None or current is None:
                raise MalformedDiff(f"{sha}: bad hunk header {line!r}")
            old_count = int(m.group(2)) if m.group(2) is not None else 1
            new_count = int(m.group(4)) if m.group(4) is not None else 1
            hunk = Hunk(old_start=int(m.group(1)), new_start=int(m.group(3)))
            i += 1
            while old_count > 0 or new_count > 0:
                if i >= n:
                    raise MalformedDiff(f"{sha}: hunk in {current.path} ends early")
                body = lines[i]
                op, text = (body[:1] or " "), body[1:]
                if op == " ":
                    hunk.context.append(text)
                    old_count -= 1
                    new_count -= 1
                elif op == "+":
                    hunk.added.append(text)
                    new_count -= 1
                elif op == "-":
                    hunk.removed.append(text)
                    old_count -= 1
                elif op == "\\":
                    i += 1
                    continue
                else:
                    raise MalformedDiff(f"{sha}: unexpected line {body!r} in {current.path}")
                if old_count < 0 or new_count < 0:
                    raise MalformedDiff(f"{sha}: hunk in {current.path} overruns its header")
                hunk.lines.append((op, text))
                i += 1
            while i < n and lines[i].startswith("\\"):
                i += 1
            if hunk.lines:
                current.hunks.append(hunk)
            continue
        # index lines, mode lines, similarity lines and other boilerplate
        i += 1
    return cs


def render_diff(cs: Changeset) -> str:
    """Render a changeset back to git-style unified diff text."""
    out = []
    for fc in cs.files:
        old = fc.old_path or fc.path
        out.append(f"diff --git a/{old} b/{fc.path}")
        if old != fc.path and not fc.hunks:
            out.append(f"rename from {old}")
            out.append(f"rename to {fc.path}")
            continue
        if not fc.hunks:
            continue
        out.append(f"--- a/{old}" if old else "--- /dev/null")
        out.append("+++ /dev/null" if fc.deleted else f"+++ b/{fc.path}")
        for h in fc.hunks:
            old_n = sum(1 for op, _ in h.lines if op != "+")
            new_n = sum(1 for op, _ in h.lines if op != "-")
            out.append(f"@@ -{h.old_start},{old_n} +{h.new_start},{new_n} @@")
            out.extend(op + text for op, text in h.lines)
    return "\n".join(out) + ("\n" if out else "")


# ---------------------------------------------------------------------------
# tokenization

_WORD_RE = re.compile(r"[A-Za-z0-9_]+")
_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+")
_stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


def tokenize_identifier(token: str, keep_unsplit: bool = True) -> list[str]:
    """Split on underscores and camel-case boundaries, lowercased.

    >>> tokenize_identifier("GarbageCollectorThread")
    ['garbage', 'collector', 'thread', 'garbagecollectorthread']
    """
    parts = []
    for chunk in token.split("_"):
        parts.extend(p.lower() for p in _CAMEL_RE.findall(chunk))
    if keep_unsplit and len(parts) > 1:
        parts.append(token.lower())
    return parts


@lru_cache(maxsize=200_000)
def stem(word: str) -> str:
    return _stemmer.stem(word)


def _keep(term: str) -> bool:
    return len(term) > 1 and not term.isdigit()


def code_terms(text: str, cfg: PreprocessConfig) -> list[str]:
    """Code pipeline: split identifiers, drop keywords, stem."""
    terms = []
    for raw in _WORD_RE.findall(text):
        for sub in tokenize_identifier(raw, cfg.keep_unsplit):
            if sub in cfg.code_keywords or not _keep(sub):
                continue
            terms.append(stem(sub))
    return terms


def text_terms(text: str, cfg: PreprocessConfig) -> list[str]:
    """Natural-language pipeline: split identifiers, drop stop words, stem."""
    terms = []
    for raw in _WORD_RE.findall(text):
        for sub in tokenize_identifier(raw, cfg.keep_unsplit):
            if sub in cfg.stopwords or not _keep(sub):
                continue
            terms.append(stem(sub))
    return terms


def _document(source_id: str, terms: Iterable[str]) -> Document:
    counts = Counter(terms)
    if not counts:
        raise EmptyDocument(f"{source_id}: no terms survived preprocessing")
    return Document(source_id, dict(counts))


def file_base_name(path: str) -> str:
    name = PurePosixPath(path).name
    return name.split(".", 1)[0] if "." in name[1:] else name


def preprocess_changeset(cs: Changeset, cfg: PreprocessConfig | None = None) -> Document:
    cfg = cfg or PreprocessConfig()
    terms: list[str] = []
    for fc in cs.files:
        terms.extend(code_terms(file_base_name(fc.path), cfg) * cfg.filename_repeat)
        for h in fc.hunks:
            for line in h.added:
                terms.extend(code_terms(line, cfg))
            for line in h.removed:
                terms.extend(code_terms(line, cfg))
            for line in h.context:
                terms.extend(code_terms(line, cfg))
    if cfg.include_message and cs.message:
        terms.extend(code_terms(cs.message, cfg))
    return _document(cs.sha, terms)


def preprocess_bug_report(br: BugReport, cfg: PreprocessConfig | None = None) -> Document:
    cfg = cfg or PreprocessConfig()
    return _document(br.id, text_terms(br.text, cfg))


def preprocess_text(source_id: str, text: str, cfg: PreprocessConfig | None = None) -> Document:
    """Bug-report pipeline on free text (commit messages used as cold-start queries)."""
    cfg = cfg or PreprocessConfig()
    return _document(source_id, text_terms(text, cfg))


def preprocess_code(source_id: str, source: str, cfg: PreprocessConfig | None = None) -> Document:
    """Code pipeline on a source fragment (class or method body), no filename boost."""
    cfg = cfg or PreprocessConfig()
    return _document(source_id, code_terms(source, cfg))


# ---------------------------------------------------------------------------
# code tokens in bug reports

_EDGE_PUNCT = "\"'`.,;:!?()[]{}<>*"
_CAMEL_CASE_RE = re.compile(r"[a-z0-9][A-Z]")


def is_camel_case(token: str) -> bool:
    return bool(_CAMEL_CASE_RE.search(token))


def code_token_ratio(br: BugReport | str, class_names: set[str] | frozenset[str]) -> float:
    """Fraction of whitespace tokens that look like code.

    A token counts when it is camel case or equals a known class name.
    Punctuation is trimmed from token edges first.
    """
    text = br.text if isinstance(br, BugReport) else br
    tokens = [t.strip(_EDGE_PUNCT) for t in text.split()]
    tokens = [t for t in tokens if t]
    if not tokens:
        log.warning("code_token_ratio: report has no tokens")
        return 0.0
    hits = sum(1 for t in tokens if is_camel_case(t) or t in class_names)
    return hits / len(tokens)


# ---------------------------------------------------------------------------
# method segmentation

_SIGNATURE_RE = re.compile(r"\(.*\)")


def _brace_delta(line: str) -> tuple[int, int]:
    """Return (opens, closes) ignoring string/char literals and // comments."""
    line = re.sub(r'"(?:\\.|[^"\\])*"', '""', line)
    line = re.sub(r"'(?:\\.|[^'\\])*'", "''", line)
    line = line.split("//", 1)[0]
    return line.count("{"), line.count("}")


def segment_methods(class_source: str) -> list[str]:
    """Cut a class file into method-like units using brace depth.

    A unit begins on a line at class-member depth (1) that holds a
    parenthesised parameter list and opens a body on the same or the next
    line; it runs to the matching close brace. Nested braces (blocks,
    anonymous classes) stay inside the enclosing unit. Files without such
    units, or with unbalanced braces, come back whole.
    """
    lines = class_source.splitlines(keepends=True)
    units: list[str] = []
    depth = 0
    start: int | None = None
    pending: int | None = None
    for idx, line in enumerate(lines):
        opens, closes = _brace_delta(line)
        if start is None and depth == 1:
            if pending is not None and line.strip() and not line.strip().startswith("{"):
                pending = None
            if _SIGNATURE_RE.search(line) and ";" not in line.split(")")[-1]:
                pending = idx
            if pending is not None and opens > 0:
                start = pending
                pending = None
        depth += opens - closes
        if depth < 0:
            return [class_source] if class_source else []
        if start is not None and depth <= 1:
            units.append("".join(lines[start:idx + 1]))
            start = None
    if depth != 0 or start is not None or not units:
        return [class_source] if class_source else []
    return units
