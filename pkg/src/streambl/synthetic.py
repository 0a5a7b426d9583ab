"""Generated project histories with planted structure.

Classes live in modules; inside a module classes come in co-change groups
that are usually edited together. Every module owns code identifiers and a
separate set of natural-language words that only ever appear in bug
reports, so a report written purely in that language can be traced to its
module only through earlier fixes.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field

import numpy as np

from .corpus import BugReport, Changeset, parse_diff
from .evaluation import FixLink

_ONSETS = ["b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "gr", "st", "pl", "tr"]
_VOWELS = ["a", "e", "o", "u", "ai", "oo"]
_CODAS = ["", "n", "r", "x", "m", "l", "sk", "nt"]

GENERIC_REPORT_WORDS = ["problem", "happens", "users", "sometimes", "error", "fails", "broken",
                        "unexpected", "wrong", "behaviour", "seen", "production", "after", "upgrade"]
GENERIC_MESSAGE_WORDS = ["update", "tweak", "cleanup", "adjust", "refactor", "change", "minor", "code"]


class _Words:
    """Unique pronounceable pseudo-words."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.seen: set[str] = set(GENERIC_REPORT_WORDS) | set(GENERIC_MESSAGE_WORDS)

    def draw(self) -> str:
        while True:
            n = int(self.rng.integers(2, 4))
            w = "".join(self.rng.choice(_ONSETS) + self.rng.choice(_VOWELS) for _ in range(n))
            w += self.rng.choice(_CODAS)
            if w not in self.seen:
                self.seen.add(w)
                return w

    def many(self, n: int) -> list[str]:
        return [self.draw() for _ in range(n)]


def _camel(*words: str) -> str:
    return "".join(w.capitalize() for w in words)


@dataclass
class SynthClass:
    path: str
    name: str
    module: int
    group: int
    words: list[str]
    lines: list[str] = field(default_factory=list)


@dataclass
class SynthConfig:
    n_changesets: int = 500
    n_bugs: int = 60
    n_nl_bugs: int = 20
    n_modules: int = 8
    groups_per_module: int = 3
    classes_per_group: int = 2
    module_words: int = 10
    group_words: int = 6
    class_words: int = 4
    nl_words: int = 8
    p_whole_group: float = 0.8
    p_same_module_extra: float = 0.25
    p_cross_module_extra: float = 0.02
    start_time: int = 1_500_000_000
    step: int = 3600
    project: str = "DEMO"


@dataclass
class SynthHistory:
    changesets: list[Changeset]
    raw: list[dict]
    bugs: list[BugReport]
    links: list[FixLink]
    classes: list[SynthClass]
    nl_bug_ids: set[str]
    bug_modules: dict[str, int]


def generate_history(seed: int, cfg: SynthConfig | None = None) -> SynthHistory:
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(seed)
    words = _Words(rng)

    module_vocab = [words.many(cfg.module_words) for _ in range(cfg.n_modules)]
    module_nl = [words.many(cfg.nl_words) for _ in range(cfg.n_modules)]
    classes: list[SynthClass] = []
    groups: list[list[int]] = []
    for m in range(cfg.n_modules):
        pkg = f"mod{m}"
        for g in range(cfg.groups_per_module):
            gvocab = words.many(cfg.group_words)
            members = []
            for _ in range(cfg.classes_per_group):
                own = words.many(cfg.class_words)
                name = _camel(rng.choice(module_vocab[m]), own[0], rng.choice(["Manager", "Handler", "Store", "Reader"]))
                path = f"src/main/java/org/demo/{pkg}/{name}.java"
                members.append(len(classes))
                classes.append(SynthClass(path, name, m, len(groups), module_vocab[m] + gvocab + own))
            groups.append(members)

    def statement(c: SynthClass) -> str:
        a, b, d = rng.choice(c.words, 3)
        return f"        {a}{b.capitalize()}.{d}({rng.choice(c.words)});"

    def method(c: SynthClass) -> list[str]:
        a, b = rng.choice(c.words, 2)
        body = [statement(c) for _ in range(int(rng.integers(2, 5)))]
        return [f"    public void {a}{b.capitalize()}(int {rng.choice(c.words)}) {{"] + body + ["    }", ""]

    def initial_source(c: SynthClass) -> list[str]:
        lines = [f"package org.demo.mod{c.module};", "", f"public class {c.name} {{", ""]
        for _ in range(3):
            lines += method(c)
        return lines + ["}"]

    def edit(c: SynthClass) -> list[str]:
        lines = list(c.lines)
        starts = [i for i, ln in enumerate(lines) if ln.startswith("    public void")]
        if rng.random() < 0.2:
            closing = len(lines) - 1
            return lines[:closing] + method(c) + lines[closing:]
        s = int(rng.choice(starts))
        end = lines.index("    }", s)
        if end - s > 3 and rng.random() < 0.4:
            del lines[s + 1 + int(rng.integers(0, end - s - 1))]
            end -= 1
        new = [statement(c) for _ in range(int(rng.integers(1, 4)))]
        return lines[:end] + new + lines[end:]

    def render(path: str, old: list[str], new: list[str]) -> str:
        if not old:
            head = [f"diff --git a/{path} b/{path}", "new file mode 100644", "--- /dev/null", f"+++ b/{path}"]
            body = [f"@@ -0,0 +1,{len(new)} @@"] + ["+" + ln for ln in new]
            return "\n".join(head + body) + "\n"
        diff = list(difflib.unified_diff(old, new, f"a/{path}", f"b/{path}", n=3, lineterm=""))
        if not diff:
            return ""
        return "\n".join([f"diff --git a/{path} b/{path}", "index 0000000..1111111 100644"] + diff) + "\n"

    # commit plan: initial creation commits, then edits; bug fixes are edits of a group
    n_init = len(classes)
    n_edits = cfg.n_changesets - n_init
    if n_edits < cfg.n_bugs:
        raise ValueError("not enough changesets for the requested bugs")
    warmup = n_edits // 5
    fix_slots = np.sort(rng.choice(np.arange(warmup, n_edits), cfg.n_bugs, replace=False))
    nl_positions = set(rng.choice(np.arange(cfg.n_bugs // 3, cfg.n_bugs), cfg.n_nl_bugs, replace=False).tolist())

    changesets: list[Changeset] = []
    raw: list[dict] = []
    bugs: list[BugReport] = []
    links: list[FixLink] = []
    nl_ids: set[str] = set()
    bug_modules: dict[str, int] = {}
    clock = cfg.start_time

    def commit(touched: list[int], message: str) -> Changeset:
        nonlocal clock
        clock += cfg.step
        parts = []
        for ci in touched:
            c = classes[ci]
            new = initial_source(c) if not c.lines else edit(c)
            parts.append(render(c.path, c.lines, new))
            c.lines = new
        diff = "".join(parts)
        sha = f"{len(changesets):04d}" + format(int(rng.integers(0, 2**48)), "012x")
        cs = parse_diff(diff, sha, clock, "dev", message)
        changesets.append(cs)
        raw.append({"sha": sha, "timestamp": clock, "author": "dev", "message": message, "diff": diff})
        return cs

    def generic_message() -> str:
        return " ".join(rng.choice(GENERIC_MESSAGE_WORDS, int(rng.integers(2, 4))))

    for ci in range(n_init):
        commit([ci], "add " + classes[ci].name)

    fix_at = {int(slot): b for b, slot in enumerate(fix_slots)}
    for e in range(n_edits):
        b = fix_at.get(e)
        g = int(rng.integers(len(groups)))
        members = list(groups[g])
        touched = members if rng.random() < cfg.p_whole_group else [int(rng.choice(members))]
        m = classes[members[0]].module
        if b is None:
            if rng.random() < cfg.p_same_module_extra:
                others = [i for gi in range(m * cfg.groups_per_module, (m + 1) * cfg.groups_per_module)
                          if gi != g for i in groups[gi]]
                touched.append(int(rng.choice(others)))
            if rng.random() < cfg.p_cross_module_extra:
                touched.append(int(rng.integers(len(classes))))
            commit(sorted(set(touched)), generic_message())
            continue
        bug_id = str(100 + b)
        nl = b in nl_positions
        # report shortly before the fix
        reported = clock + 1
        text_words = list(rng.choice(module_nl[m], 4)) + list(rng.choice(GENERIC_REPORT_WORDS, 3))
        if not nl:
            target = classes[int(rng.choice(touched))]
            if rng.random() < 0.5:
                text_words += [target.name, target.name]
            else:
                # identifiers as they would appear in a stack trace
                for _ in range(2):
                    a, b = rng.choice(target.words, 2)
                    text_words.append(f"{a}{b.capitalize()}()")
        rng.shuffle(text_words)
        summary = " ".join(text_words[:6])
        description = " ".join(text_words[6:] + list(rng.choice(module_nl[m], 4)))
        bugs.append(BugReport(bug_id, reported, summary, description))
        clock = reported
        cs = commit(sorted(set(touched)), f"{cfg.project}-{bug_id} {generic_message()}")
        links.append(FixLink(bug_id, cs.sha, tuple(cs.paths)))
        bug_modules[bug_id] = m
        if nl:
            nl_ids.add(bug_id)

    return SynthHistory(changesets, raw, bugs, links, classes, nl_ids, bug_modules)


def separable_corpus(n_docs: int = 100, length: int = 3):
    """Alternating single-term documents over two terms, for topic-recovery checks."""
    from .corpus import Document

    return [Document(f"d{i}", {"a" if i % 2 == 0 else "b": length}) for i in range(n_docs)]
