"""Git ingestion, bug/commit linking and the stream file formats."""

from __future__ import annotations

import csv
import json
import logging
import re
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .corpus import BugReport, Changeset, MalformedDiff, parse_diff
from .evaluation import FixLink

log = logging.getLogger(__name__)

EMPTY_TREE = "4b825dc642cb6eb9a060e54bf8d69288fbee4904"


class NotARepository(RuntimeError):
    pass


class ToolUnavailable(RuntimeError):
    pass


class UnknownCommit(LookupError):
    pass


def _git(repo: str | Path, *args: str, check: bool = True) -> str:
    if shutil.which("git") is None:
        raise ToolUnavailable("git executable not found on PATH")
    proc = subprocess.run(["git", "-C", str(repo), *args], capture_output=True)
    if check and proc.returncode != 0:
        raise subprocess.CalledProcessError(proc.returncode, proc.args, proc.stdout, proc.stderr)
    return proc.stdout.decode("utf-8", errors="replace")


def _check_repo(repo: str | Path) -> None:
    try:
        _git(repo, "rev-parse", "--git-dir")
    except subprocess.CalledProcessError as exc:
        raise NotARepository(f"{repo} is not a git repository") from exc


def iter_commits(repo: str | Path, since: int | None = None) -> Iterator[dict]:
    """First-parent history, oldest first, as stream records."""
    _check_repo(repo)
    out = _git(repo, "log", "--first-parent", "--reverse", "-z",
               "--format=%H%x1f%P%x1f%ct%x1f%an%x1f%B")
    for entry in out.split("\0"):
        entry = entry.strip("\n")
        if not entry:
            continue
        sha, parents, ts, author, message = entry.split("\x1f", 4)
        ts = int(ts)
        if since is not None and ts <= since:
            continue
        parent = parents.split()[0] if parents.split() else EMPTY_TREE
        diff = _git(repo, "diff", "--no-color", "--no-ext-diff", "-U3", "-M", parent, sha)
        yield {"sha": sha, "timestamp": ts, "author": author, "message": message.strip(), "diff": diff}


def extract_changesets(repo: str | Path, out_path: str | Path, since: int | None = None) -> int:
    """Append new commits to a changeset stream file. Returns records written.

    When ``since`` is None the stream's newest timestamp is used, so running
    twice appends nothing the second time.
    """
    out_path = Path(out_path)
    if since is None and out_path.exists():
        stamps = [r["timestamp"] for r in read_jsonl(out_path)]
        since = max(stamps) if stamps else None
    n = 0
    with out_path.open("a", encoding="utf-8") as fh:
        for rec in iter_commits(repo, since):
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def snapshot_at(repo: str | Path, sha: str, suffixes: Iterable[str] = (".java",)) -> dict[str, str]:
    _check_repo(repo)
    try:
        _git(repo, "rev-parse", "--verify", "--quiet", f"{sha}^{{commit}}")
    except subprocess.CalledProcessError as exc:
        raise UnknownCommit(sha) from exc
    suffixes = tuple(suffixes)
    files = {}
    for path in _git(repo, "ls-tree", "-r", "--name-only", "-z", sha).split("\0"):
        if path and path.endswith(suffixes):
            files[path] = _git(repo, "show", f"{sha}:{path}")
    return files


# ---------------------------------------------------------------------------
# stream files

def read_jsonl(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def changeset_from_record(rec: dict) -> Changeset:
    return parse_diff(rec.get("diff", ""), rec["sha"], int(rec["timestamp"]),
                      rec.get("author", ""), rec.get("message", ""))


def load_changesets(path: str | Path) -> list[Changeset]:
    out = []
    for rec in read_jsonl(path):
        try:
            out.append(changeset_from_record(rec))
        except MalformedDiff as exc:
            log.warning("skipping commit: %s", exc)
    return out


def load_bugs(path: str | Path) -> list[BugReport]:
    return [BugReport(str(r["id"]), int(r["timestamp_reported"]), r["summary"], r.get("description") or "")
            for r in read_jsonl(path)]


def bug_record(br: BugReport) -> dict:
    return {"id": br.id, "timestamp_reported": br.timestamp_reported,
            "summary": br.summary, "description": br.description}


def write_links(path: str | Path, links: Iterable[FixLink]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bug_id", "fixing_sha", "fixed_files"])
        for link in links:
            w.writerow([link.bug_id, link.fixing_sha, ";".join(link.fixed_files)])


def load_links(path: str | Path) -> list[FixLink]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [FixLink(row["bug_id"], row["fixing_sha"], tuple(f for f in row["fixed_files"].split(";") if f))
                for row in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# linking

@dataclass(frozen=True)
class LinkConventions:
    project: str = ""
    keywords: tuple[str, ...] = ("fix", "fixes", "fixed", "close", "closes", "closed", "resolve", "resolves", "resolved")
    source_suffixes: tuple[str, ...] = (".java",)

    def patterns(self) -> list[re.Pattern]:
        pats = []
        if self.keywords:
            kw = "|".join(re.escape(k) for k in sorted(self.keywords, key=len, reverse=True))
            pats.append(re.compile(rf"\b(?:{kw})\s*:?\s*#(\d+)\b", re.IGNORECASE))
        if self.project:
            pats.append(re.compile(rf"\b{re.escape(self.project)}-#?(\d+)\b", re.IGNORECASE))
        return pats


def _issue_number(bug_id: str) -> str:
    m = re.search(r"(\d+)$", bug_id)
    return m.group(1).lstrip("0") or "0" if m else bug_id


def mentioned_issues(message: str, conventions: LinkConventions) -> set[str]:
    found = set()
    for pat in conventions.patterns():
        for m in pat.finditer(message):
            found.add(m.group(1).lstrip("0") or "0")
    return found


def link_bugs(bugs: Iterable[BugReport], changesets: Iterable[Changeset],
              conventions: LinkConventions) -> tuple[list[FixLink], list[str]]:
    """Link bugs to their latest mentioning commit.

    Returns the links and the ids of bugs left unlinked.
    """
    by_number: dict[str, list[str]] = {}
    bug_ids = []
    for br in bugs:
        bug_ids.append(br.id)
        by_number.setdefault(_issue_number(br.id), []).append(br.id)
    latest: dict[str, Changeset] = {}
    for cs in changesets:
        for num in mentioned_issues(cs.message, conventions):
            for bug_id in by_number.get(num, []):
                prev = latest.get(bug_id)
                if prev is None or (cs.timestamp, cs.sha) >= (prev.timestamp, prev.sha):
                    latest[bug_id] = cs
    links, unlinked = [], []
    for bug_id in bug_ids:
        cs = latest.get(bug_id)
        files = tuple(p for p in cs.paths if p.endswith(conventions.source_suffixes)) if cs else ()
        if not files:
            unlinked.append(bug_id)
            continue
        links.append(FixLink(bug_id, cs.sha, files))
    return links, unlinked
