"""Plan and apply perturbation patches to disassembled app trees.

Planning turns constructor matches plus a perturbation spec into a list of
line-span patches: each patch names the file, the lines it replaces, and
their replacement, so a plan can be inspected, diffed, and checked against
the tree before anything is written. Application is all-or-nothing: edits
land in a copy of the tree which then replaces the original, and a marker
field left in every touched class makes a second injection fail fast.
"""

from __future__ import annotations

import difflib
import shlex
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import locate, smali
from .locate import ConstructorMatch
from .perturbation import PerturbationSpec

MARKER_FIELD = ".field private static __preproc_patch_marker__:Z"


class InjectError(Exception):
    """Base class for injection failures."""


class AlreadyInjectedError(InjectError):
    """A target file already carries the patch marker."""


class StalePlanError(InjectError):
    """Tree content changed between planning and applying."""


class LockHeldError(InjectError):
    """Another injection holds the tree lock."""


class RepackError(InjectError):
    """The repack hook returned a nonzero status."""


@dataclass(frozen=True)
class Patch:
    """Replace ``original_lines`` at ``line_index`` with ``replacement_lines``."""
    unit_path: str
    line_index: int
    original_lines: Tuple[str, ...]
    replacement_lines: Tuple[str, ...]
    description: str

    def to_dict(self) -> dict:
        return {
            "unit": self.unit_path,
            "line": self.line_index,
            "original": list(self.original_lines),
            "replacement": list(self.replacement_lines),
            "description": self.description,
        }


@dataclass
class InjectionPlan:
    root: str
    spec: PerturbationSpec
    patches: List[Patch] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    matches: List[ConstructorMatch] = field(default_factory=list)

    @property
    def touched_files(self) -> List[str]:
        return sorted({p.unit_path for p in self.patches})

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "spec": self.spec.to_dict(),
            "patches": [p.to_dict() for p in self.patches],
            "warnings": list(self.warnings),
            "matches": [m.to_dict() for m in self.matches],
            "touched_files": self.touched_files,
        }


@dataclass
class InjectionResult:
    root: str
    applied: int
    files_changed: List[str]
    diff: str
    repacked_to: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "applied": self.applied,
            "files_changed": list(self.files_changed),
            "repacked_to": self.repacked_to,
        }


def _indent_of(line: str) -> str:
    return line[:len(line) - len(line.lstrip())]


def _read_lines(root: Path, rel: str) -> List[str]:
    return (root / rel).read_text(encoding="utf-8").split("\n")


def has_marker(text: str) -> bool:
    return MARKER_FIELD in text


# ---------------------------------------------------------------------------
# planning


def _patch_const_line(lines: List[str], rel: str, line_index: int,
                      register: smali.Register, new_value: int,
                      radix: str, description: str) -> Patch:
    original = lines[line_index]
    replacement = smali.render_const(register.name, new_value, radix,
                                     _indent_of(original))
    return Patch(rel, line_index, (original,), (replacement,), description)


def _plan_match(root: Path, match: ConstructorMatch, spec: PerturbationSpec,
                plan: InjectionPlan) -> None:
    rel = match.unit_path
    lines = _read_lines(root, rel)

    if spec.rotation_override is not None or spec.rotation_delta is not None:
        for site in match.rotation_sites:
            new_value = spec.effective_rotation(site.value)
            plan.warnings.extend(
                f"{rel}: {note}" for note in spec.rotation_warnings(site.value))
            if site.const_line is not None:
                if new_value is None:
                    continue
                plan.patches.append(_patch_const_line(
                    lines, rel, site.const_line, site.register, new_value,
                    site.radix or "hex",
                    f"rotation {site.value} -> {new_value} ({site.field_name})"))
            elif spec.rotation_override is not None:
                # Parameter-fed store: pin the register right before the iput.
                iput_line = lines[site.iput_line]
                const = smali.render_const(site.register.name, new_value,
                                           "hex", _indent_of(iput_line))
                plan.patches.append(Patch(
                    rel, site.iput_line, (iput_line,),
                    (const, "", iput_line),
                    f"rotation pinned to {new_value} before store to "
                    f"{site.field_name}"))
            else:
                plan.warnings.append(
                    f"{rel}: rotation delta skipped for parameter-fed store "
                    f"to {site.field_name} (runtime value unknown)")

    for role, value in (("width", spec.width_override),
                        ("height", spec.height_override)):
        if value is None:
            continue
        for site in match.dimension_sites:
            if site.role != role or site.kind != "getter":
                continue
            span_start = site.invoke_line
            span_end = site.move_result_line
            original = tuple(lines[span_start:span_end + 1])
            replacement = smali.render_const(
                site.register.name, value, "hex", _indent_of(lines[span_end]))
            plan.patches.append(Patch(
                rel, span_start, original, (replacement,),
                f"{role} getter replaced with constant {value} "
                f"({site.field_name})"))

    if spec.format_override is not None and match.format_site is not None:
        site = match.format_site
        if site.const_line is not None:
            unit = smali.parse_unit("\n".join(lines))
            method = next(m for m in unit.methods
                          if m.signature == match.method_signature)
            const = next(i for i in method.instructions
                         if i.line_index == site.const_line)
            plan.patches.append(_patch_const_line(
                lines, rel, site.const_line, const.dest, spec.format_override,
                const.literal.radix,
                f"format {site.value} -> {spec.format_override} "
                f"({site.field_name})"))


def plan_injection(root: Path, spec: PerturbationSpec,
                   matches: Optional[Sequence[ConstructorMatch]] = None
                   ) -> InjectionPlan:
    """Build a patch plan for one tree. Raises AlreadyInjectedError if any
    smali file carries the marker from a previous run; a patched wrapper no
    longer matches its strategy, so the marker is the only reliable guard."""
    if spec.is_noop:
        raise ValueError("perturbation spec is a no-op; nothing to plan")
    for file in sorted(root.rglob("*.smali")):
        if has_marker(file.read_text(encoding="utf-8")):
            raise AlreadyInjectedError(
                f"{file.relative_to(root).as_posix()} already carries "
                f"{MARKER_FIELD!r}")
    if matches is None:
        index = locate.ClassIndex.from_tree(root)
        matches = []
        for rel in sorted(index.by_path):
            matches.extend(locate.match_constructors(index.by_path[rel], rel))

    plan = InjectionPlan(root=root.name, spec=spec, matches=list(matches))
    for match in matches:
        _plan_match(root, match, spec, plan)

    # Apply patches bottom-up within each file so indexes stay valid.
    plan.patches.sort(key=lambda p: (p.unit_path, -p.line_index))
    return plan


# ---------------------------------------------------------------------------
# applying


def _marker_patch(lines: List[str], rel: str) -> Patch:
    anchor = None
    for index, line in enumerate(lines):
        if line.startswith((".super", ".source")):
            anchor = index
        elif line.startswith(".method"):
            break
    if anchor is None:
        raise StalePlanError(f"{rel}: no .super line to anchor the marker")
    return Patch(rel, anchor + 1, (), ("", MARKER_FIELD), "injection marker")


def _verify_and_edit(lines: List[str], patches: Sequence[Patch]) -> List[str]:
    out = list(lines)
    for patch in patches:  # already sorted bottom-up
        start = patch.line_index
        end = start + len(patch.original_lines)
        if tuple(out[start:end]) != patch.original_lines:
            raise StalePlanError(
                f"{patch.unit_path}:{start}: tree content changed since "
                f"planning ({patch.description})")
        out[start:end] = list(patch.replacement_lines)
    return out


def render_diff(root: Path, plan: InjectionPlan) -> str:
    """Unified diff of the plan against the current tree, without writing."""
    chunks = []
    for rel, patches in _by_file(plan).items():
        old = _read_lines(root, rel)
        new = _verify_and_edit(old, patches)
        new = _verify_and_edit(new, [_marker_patch(new, rel)])
        chunks.append("\n".join(difflib.unified_diff(
            old, new, fromfile=f"a/{rel}", tofile=f"b/{rel}", lineterm="")))
    return "\n".join(chunk for chunk in chunks if chunk)


def _by_file(plan: InjectionPlan) -> Dict[str, List[Patch]]:
    grouped: Dict[str, List[Patch]] = {}
    for patch in plan.patches:
        grouped.setdefault(patch.unit_path, []).append(patch)
    return grouped


def apply_plan(root: Path, plan: InjectionPlan) -> InjectionResult:
    """Apply a plan to the tree, swapping in an edited copy on success."""
    if not plan.patches:
        return InjectionResult(root=root.name, applied=0, files_changed=[],
                               diff="")
    for rel in plan.touched_files:
        if has_marker((root / rel).read_text(encoding="utf-8")):
            raise AlreadyInjectedError(f"{rel} already carries the marker")

    lock = root.parent / (root.name + ".lock")
    try:
        lock_fd = lock.open("x")
    except FileExistsError:
        raise LockHeldError(f"lock file {lock} exists; concurrent injection?")
    staging = root.parent / (root.name + ".injecting")
    backup = root.parent / (root.name + ".pre-inject")
    try:
        diff = render_diff(root, plan)  # verifies spans before any copying
        if staging.exists():
            shutil.rmtree(staging)
        shutil.copytree(root, staging)
        for rel, patches in _by_file(plan).items():
            lines = _verify_and_edit(_read_lines(staging, rel), patches)
            lines = _verify_and_edit(lines, [_marker_patch(lines, rel)])
            (staging / rel).write_text("\n".join(lines), encoding="utf-8")
        if backup.exists():
            shutil.rmtree(backup)
        root.rename(backup)
        try:
            staging.rename(root)
        except OSError:
            backup.rename(root)
            raise
        shutil.rmtree(backup)
    except Exception:
        if staging.exists():
            shutil.rmtree(staging, ignore_errors=True)
        raise
    finally:
        lock_fd.close()
        lock.unlink(missing_ok=True)

    return InjectionResult(root=root.name, applied=len(plan.patches),
                           files_changed=plan.touched_files, diff=diff)


def repack(root: Path, command_template: str,
           out_path: Optional[Path] = None) -> Path:
    """Run an external repack command over the tree.

    ``command_template`` may use ``{in}`` for the tree and ``{out}`` for the
    archive to produce.
    """
    target = out_path or root.parent / (root.name + ".repacked.apk")
    command = command_template.replace("{in}", shlex.quote(str(root)))
    command = command.replace("{out}", shlex.quote(str(target)))
    proc = subprocess.run(command, shell=True, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RepackError(
            f"repack command failed with status {proc.returncode}: "
            f"{proc.stderr.strip() or proc.stdout.strip()}")
    return target
