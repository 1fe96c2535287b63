"""End-to-end corpus processing: scan, extract, locate, inject, summarize.

Apps are processed in a thread pool; each one is scanned, DL apps are
extracted to a working directory, analyzed, and (when a perturbation spec
is given) patched in place. The report carries only app names and
tree-relative paths, so a rerun over the same corpus produces identical
bytes.
"""

from __future__ import annotations

import dataclasses
import logging
import shutil
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

from . import inject, locate, scan
from .perturbation import PerturbationSpec

log = logging.getLogger(__name__)


@dataclass
class AppOutcome:
    app: str
    source: str
    verdict: scan.DlVerdict
    anchors: int = 0
    creation_sites: int = 0
    slice_gaps: int = 0
    strategies: List[str] = field(default_factory=list)
    injected: bool = False
    patches: int = 0
    warnings: List[str] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def matched(self) -> bool:
        return bool(self.strategies)

    def to_dict(self) -> dict:
        return {
            "app": self.app,
            "source": self.source,
            "verdict": self.verdict.to_dict(),
            "anchors": self.anchors,
            "creation_sites": self.creation_sites,
            "slice_gaps": self.slice_gaps,
            "strategies": sorted(self.strategies),
            "injected": self.injected,
            "patches": self.patches,
            "warnings": list(self.warnings),
            "error": self.error,
        }


@dataclass
class PipelineReport:
    spec: Optional[PerturbationSpec]
    outcomes: List[AppOutcome]
    stats: scan.CorpusStats

    @property
    def matched_apps(self) -> int:
        return sum(1 for o in self.outcomes if o.matched)

    @property
    def injected_apps(self) -> int:
        return sum(1 for o in self.outcomes if o.injected)

    @property
    def percent_matched_of_dl(self) -> float:
        return scan.percent(self.matched_apps, self.stats.dl)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict() if self.spec else None,
            "stats": self.stats.to_dict(),
            "matched_apps": self.matched_apps,
            "injected_apps": self.injected_apps,
            "percent_matched_of_dl": self.percent_matched_of_dl,
            "outcomes": [o.to_dict() for o in
                         sorted(self.outcomes, key=lambda o: o.app)],
        }


def _safe_extract(archive: Path, target: Path) -> None:
    with zipfile.ZipFile(archive) as zf:
        for info in zf.infolist():
            name = info.filename
            if name.startswith(("/", "\\")) or ".." in Path(name).parts:
                raise scan.UnscannableApkError(archive, f"unsafe entry {name!r}")
        zf.extractall(target)


def materialize(source: Path, workdir: Path) -> Path:
    """Extract an archive (or copy a tree) into the working directory."""
    tree = workdir / (source.stem if source.is_file() else source.name)
    if tree.exists():
        shutil.rmtree(tree)
    if source.is_dir():
        shutil.copytree(source, tree)
    else:
        tree.mkdir(parents=True)
        try:
            _safe_extract(source, tree)
        except (zipfile.BadZipFile, OSError) as exc:
            shutil.rmtree(tree, ignore_errors=True)
            raise scan.UnscannableApkError(source, str(exc)) from exc
    return tree


def process_app(source: Path, workdir: Path,
                spec: Optional[PerturbationSpec] = None,
                depth: int = 1) -> AppOutcome:
    """Scan one app and, if it is a DL app, analyze and optionally inject."""
    verdict = scan.scan_path(source)
    # Reports must not depend on how the corpus path was spelled.
    verdict = dataclasses.replace(verdict, path=source.name)
    name = verdict.app
    outcome = AppOutcome(app=name, source=source.name, verdict=verdict)
    if verdict.error is not None or not verdict.is_dl:
        return outcome

    try:
        tree = materialize(source, workdir)
    except scan.UnscannableApkError as exc:
        outcome.error = exc.reason
        return outcome

    analysis = locate.analyze_tree(tree, depth=depth)
    outcome.anchors = len(analysis.anchors)
    outcome.creation_sites = sum(len(s.creation_sites) for s in analysis.slices)
    outcome.slice_gaps = sum(len(s.gaps) for s in analysis.slices)
    outcome.strategies = sorted({m.strategy for m in analysis.matches})

    if spec is not None and analysis.matches:
        try:
            plan = inject.plan_injection(tree, spec, analysis.matches)
            if plan.patches:
                result = inject.apply_plan(tree, plan)
                outcome.injected = True
                outcome.patches = result.applied
            outcome.warnings = plan.warnings
        except inject.InjectError as exc:
            outcome.error = str(exc)
    return outcome


def run_pipeline(sources: Sequence[Path], workdir: Path,
                 spec: Optional[PerturbationSpec] = None,
                 depth: int = 1, workers: int = 4) -> PipelineReport:
    workdir.mkdir(parents=True, exist_ok=True)
    ordered = sorted(sources, key=lambda p: p.name)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        outcomes = list(pool.map(
            lambda src: process_app(src, workdir, spec, depth), ordered))
    for outcome in outcomes:
        log.debug("processed %s: dl=%s strategies=%s injected=%s",
                  outcome.app, outcome.verdict.is_dl, outcome.strategies,
                  outcome.injected)
    stats = scan.aggregate(o.verdict for o in outcomes)
    return PipelineReport(spec=spec, outcomes=outcomes, stats=stats)


def collect_sources(corpus: Path) -> List[Path]:
    """Apps inside a corpus directory: archives plus extracted trees."""
    sources = []
    for child in sorted(corpus.iterdir()):
        if child.is_file() and child.suffix.lower() in (".apk", ".zip"):
            sources.append(child)
        elif child.is_dir():
            sources.append(child)
    return sources
