"""Command line entry point: ``streambl {ingest,replay,locate,cochange,stats,synth}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import BugReport
from .engine import MODES, Engine, EngineConfig
from .evaluation import build_events, cochange_analysis, replay, timing_report
from .locator import LocatorConfig
from .repo import (
    LinkConventions,
    bug_record,
    extract_changesets,
    load_bugs,
    load_changesets,
    load_links,
    snapshot_at,
    write_jsonl,
    write_links,
)
from .state import load_state, save_state
from .topicmodel import BUG_REPORT_DEFAULTS, CHANGESET_DEFAULTS, LdaConfig
from .translation import ReadinessPolicy

log = logging.getLogger("streambl")

LOG_ENV = "STREAMBL_LOG"


class ConfigError(ValueError):
    pass


@dataclass
class ProjectConfig:
    output_dir: str = "out"
    repo_path: str | None = None
    changesets_path: str | None = None
    bugs_path: str | None = None
    links_path: str | None = None
    link_conventions: dict = field(default_factory=dict)
    changeset_lda: dict = field(default_factory=dict)
    bug_lda: dict = field(default_factory=dict)
    omega: float = 1.5
    gamma: float = 5.0
    ridge: float = 1e-6
    pair_window: int | None = None
    seed: int = 0
    source_suffixes: list[str] = field(default_factory=lambda: [".java"])

    @classmethod
    def load(cls, path: str | Path) -> "ProjectConfig":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**data)
        # relative paths are relative to the config file
        for name in ("output_dir", "repo_path", "changesets_path", "bugs_path", "links_path"):
            value = getattr(cfg, name)
            if value is not None and not Path(value).is_absolute():
                setattr(cfg, name, str(path.parent / value))
        cfg.engine_config()
        return cfg

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    @property
    def changesets_file(self) -> Path:
        return Path(self.changesets_path) if self.changesets_path else self.out / "changesets.jsonl"

    @property
    def links_file(self) -> Path:
        return Path(self.links_path) if self.links_path else self.out / "links.csv"

    def conventions(self) -> LinkConventions:
        allowed = {"project", "keywords"}
        extra = set(self.link_conventions) - allowed
        if extra:
            raise ConfigError(f"unknown link_conventions keys: {', '.join(sorted(extra))}")
        kw = self.link_conventions.get("keywords")
        return LinkConventions(project=self.link_conventions.get("project", ""),
                               keywords=tuple(kw) if kw is not None else LinkConventions.keywords,
                               source_suffixes=tuple(self.source_suffixes))

    def engine_config(self) -> EngineConfig:
        def lda(base: LdaConfig, overrides: dict) -> LdaConfig:
            names = {f.name for f in dataclasses.fields(LdaConfig)}
            extra = set(overrides) - names
            if extra:
                raise ConfigError(f"unknown topic model keys: {', '.join(sorted(extra))}")
            return dataclasses.replace(base, **{"seed": self.seed, **overrides})

        try:
            return EngineConfig(
                changeset_lda=lda(CHANGESET_DEFAULTS, self.changeset_lda),
                bug_lda=lda(BUG_REPORT_DEFAULTS, self.bug_lda),
                readiness=ReadinessPolicy(self.omega),
                locator=LocatorConfig(gamma=self.gamma),
                ridge=self.ridge,
                pair_window=self.pair_window,
                source_suffixes=tuple(self.source_suffixes),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def read_report(path: str | Path, bug_id: str = "query") -> BugReport:
    """First non-empty line is the summary, the rest the description."""
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty bug report")
    return BugReport(bug_id, 1, lines[0].strip(), "\n".join(lines[1:]).strip())


# ---------------------------------------------------------------------------
# commands

def cmd_ingest(args) -> int:
    cfg = ProjectConfig.load(args.config)
    cfg.out.mkdir(parents=True, exist_ok=True)
    if cfg.repo_path is None:
        raise ConfigError("ingest needs repo_path")
    n = extract_changesets(cfg.repo_path, cfg.changesets_file, since=args.since)
    print(f"changesets: {n} new records -> {cfg.changesets_file}")
    if cfg.bugs_path and not cfg.links_path:
        links, unlinked = link_bugs_from_files(cfg)
        write_links(cfg.links_file, links)
        print(f"links: {len(links)} bugs linked, {len(unlinked)} unlinked -> {cfg.links_file}")
    return 0


def link_bugs_from_files(cfg: ProjectConfig):
    from .repo import link_bugs

    return link_bugs(load_bugs(cfg.bugs_path), load_changesets(cfg.changesets_file), cfg.conventions())


def cmd_replay(args) -> int:
    cfg = ProjectConfig.load(args.config)
    if cfg.bugs_path is None:
        raise ConfigError("replay needs bugs_path")
    engine_cfg = cfg.engine_config().with_mode(args.mode)
    events = build_events(load_changesets(cfg.changesets_file), load_bugs(cfg.bugs_path),
                          load_links(cfg.links_file))
    engine = Engine(engine_cfg)
    result = replay(events, engine_cfg, args.mode, engine=engine)
    out = cfg.out / args.mode
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(result.metrics_table(), encoding="utf-8")
    (out / "timing.csv").write_text(result.timing_table(), encoding="utf-8")
    save_state(engine, out / "state.bin")
    agg = result.aggregates()
    print(f"{args.mode}: {len(result.rows)} bugs evaluated, {len(result.skipped)} skipped")
    print("  " + "  ".join(f"{k}={v:.4f}" for k, v in agg.items()))
    print(f"  tables and state written to {out}")
    return 0


def cmd_locate(args) -> int:
    engine = load_state(args.state)
    report = read_report(args.report)
    files = snapshot_at(args.repo, args.sha, engine.config.source_suffixes) if args.repo else None
    ranking, query = engine.locate(report, files)
    if query.code_ratio is not None:
        print(f"# code-token ratio {query.code_ratio:.3f}")
    for i, (path, dist) in enumerate(ranking[:args.top], 1):
        print(f"{i:3d}  {dist:.6f}  {path}")
    return 0


def cmd_cochange(args) -> int:
    engine = load_state(args.state)
    changesets = load_changesets(args.changesets)
    res = cochange_analysis(changesets, engine.cs_model, engine.snapshot_files(), top_n=args.top_n,
                            preprocess=engine.config.preprocess)
    print("bucket,pairs,mean_cosine_similarity")
    for bucket, mean in res.means.items():
        print(f"{bucket},{res.counts[bucket]},{mean:.4f}")
    return 0


def cmd_stats(args) -> int:
    engine = load_state(args.state)
    print(json.dumps(engine.summary(), indent=2))
    timing = Path(args.state).with_name("timing.csv")
    if timing.exists():
        print(timing.read_text(encoding="utf-8"), end="")
    return 0


def cmd_synth(args) -> int:
    """Write a generated project (streams + config) for trying the tool out."""
    from .synthetic import generate_history

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    h = generate_history(args.seed)
    write_jsonl(out / "changesets.jsonl", h.raw)
    write_jsonl(out / "bugs.jsonl", [bug_record(b) for b in h.bugs])
    write_links(out / "links.csv", h.links)
    config = {
        "output_dir": "results",
        "changesets_path": "changesets.jsonl",
        "bugs_path": "bugs.jsonl",
        "links_path": "links.csv",
        "link_conventions": {"project": "DEMO"},
        "changeset_lda": {"k": 16},
        "bug_lda": {"k": 10},
        "seed": args.seed,
    }
    (out / "project.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(h.raw)} changesets, {len(h.bugs)} bugs, {len(h.links)} links to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="streambl", description="Online changeset-based bug localization.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="export changesets from git and link bugs to fixing commits")
    s.add_argument("--config", required=True)
    s.add_argument("--since", type=int, default=None, help="only commits newer than this epoch second")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("replay", help="replay history and score every linked bug")
    s.add_argument("--config", required=True)
    s.add_argument("--mode", choices=MODES, default="jingo")
    s.set_defaults(func=cmd_replay)

    s = sub.add_parser("locate", help="rank classes for a bug report text file")
    s.add_argument("--state", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--top", type=int, default=10)
    s.add_argument("--repo", help="rank the snapshot of this repository instead of the saved tree")
    s.add_argument("--sha", default="HEAD")
    s.set_defaults(func=cmd_locate)

    s = sub.add_parser("cochange", help="topic similarity of co-changed classes")
    s.add_argument("--state", required=True)
    s.add_argument("--changesets", required=True)
    s.add_argument("--top-n", type=int, default=100)
    s.set_defaults(func=cmd_cochange)

    s = sub.add_parser("stats", help="model, vocabulary and pair-store sizes")
    s.add_argument("--state", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("synth", help="write a generated example project")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure maps to a nonzero exit
        log.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
