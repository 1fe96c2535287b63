"""Locate image pre-processing code inside disassembled app trees.

Three passes over the smali of one app:

* find anchors: calls into on-device inference APIs (MLKit detectors,
  TFLite interpreters) whose image argument is worth tracing;
* backward-slice the image argument to the framework calls that created
  the image buffer, following one level of app-defined factory methods;
* match wrapper-class constructors against three signatures built purely
  from constant literals and framework names, so renaming app identifiers
  does not disturb them.

Strategy constants, in precedence order:

* buffer wrappers store an image-format tag of 842094169 or 17 into an
  own field and carry a diagnostic string constant;
* bitmap wrappers read getWidth()/getHeight() off a bitmap parameter and
  store a format tag of -1;
* media-image wrappers store a format tag of 35 and touch
  android.graphics.Matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from . import smali
from .smali import Instruction, MethodRef, OpKind, Register, SmaliMethod, SmaliUnit

STRATEGY_BUFFER = "S1_buffer"
STRATEGY_BITMAP = "S2_bitmap"
STRATEGY_MEDIA_IMAGE = "S3_media_image"

BUFFER_FORMAT_CONSTANTS = (842094169, 17)
BITMAP_FORMAT_CONSTANT = -1
MEDIA_IMAGE_FORMAT_CONSTANT = 35
MATRIX_TYPE = "Landroid/graphics/Matrix;"

INFERENCE_OWNER_PREFIXES = ("Lcom/google/mlkit/", "Lorg/tensorflow/lite/")
INFERENCE_METHOD_NAMES = frozenset(
    {"process", "run", "runForMultipleInputsOutputs", "detectInImage", "processImage"})

CREATION_METHOD_NAMES = frozenset(
    {"createBitmap", "createScaledBitmap", "decodeResource", "decodeFile",
     "decodeStream", "decodeByteArray"})

FRAMEWORK_PREFIXES = (
    "Landroid/", "Landroidx/", "Ldalvik/", "Ljava/", "Ljavax/", "Lkotlin/",
    "Lcom/google/android/gms/", "Lcom/google/mlkit/", "Lcom/google/firebase/",
    "Lorg/tensorflow/")

WIDTH_GETTER = "getWidth"
HEIGHT_GETTER = "getHeight"


def is_framework_class(descriptor: str) -> bool:
    return descriptor.startswith(FRAMEWORK_PREFIXES)


def is_inference_call(ref: MethodRef) -> bool:
    return (ref.owner_class.startswith(INFERENCE_OWNER_PREFIXES)
            and ref.method_name in INFERENCE_METHOD_NAMES)


def is_creation_call(ref: MethodRef) -> bool:
    return (ref.owner_class.startswith("Landroid/")
            and ref.method_name in CREATION_METHOD_NAMES)


# ---------------------------------------------------------------------------
# result types


@dataclass(frozen=True)
class SliceAnchor:
    """An inference call plus the argument register to trace."""
    unit_path: str
    class_name: str
    method_signature: str
    line_index: int
    target: MethodRef
    argument: Optional[Register]

    def to_dict(self) -> dict:
        return {
            "unit": self.unit_path,
            "class": self.class_name,
            "method": self.method_signature,
            "line": self.line_index,
            "target": str(self.target),
            "argument": str(self.argument) if self.argument else None,
        }


@dataclass(frozen=True)
class CreationSite:
    """A framework call that produced the traced image value."""
    unit_path: str
    method_signature: str
    line_index: int
    api: MethodRef

    def to_dict(self) -> dict:
        return {
            "unit": self.unit_path,
            "method": self.method_signature,
            "line": self.line_index,
            "api": str(self.api),
        }


@dataclass(frozen=True)
class SliceResult:
    anchor: SliceAnchor
    creation_sites: Tuple[CreationSite, ...]
    gaps: Tuple[str, ...]
    trace: Tuple[Tuple[str, int, str], ...]

    def to_dict(self) -> dict:
        return {
            "anchor": self.anchor.to_dict(),
            "creation_sites": [site.to_dict() for site in self.creation_sites],
            "gaps": list(self.gaps),
            "trace": [{"unit": u, "line": i, "text": t} for u, i, t in self.trace],
        }


@dataclass(frozen=True)
class RotationSite:
    """An own-field store holding the rotation value of a wrapper."""
    field_name: str
    iput_line: int
    const_line: Optional[int]        # None when the value arrives via a parameter
    register: Register
    value: Optional[int]
    radix: Optional[str]

    def to_dict(self) -> dict:
        return {
            "field": self.field_name,
            "iput_line": self.iput_line,
            "const_line": self.const_line,
            "register": str(self.register),
            "value": self.value,
        }


@dataclass(frozen=True)
class DimensionSite:
    """Where a wrapper records the image width or height.

    kind 'getter' sites read the value off a bitmap getter pair and can be
    replaced by a constant; 'param' and 'const' sites are informational.
    """
    role: str                         # 'width' | 'height'
    kind: str                         # 'getter' | 'param' | 'const'
    field_name: str
    iput_line: int
    invoke_line: Optional[int]
    move_result_line: Optional[int]
    register: Register
    value: Optional[int]

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "kind": self.kind,
            "field": self.field_name,
            "iput_line": self.iput_line,
            "invoke_line": self.invoke_line,
            "value": self.value,
        }


@dataclass(frozen=True)
class FormatSite:
    field_name: str
    iput_line: int
    const_line: Optional[int]
    value: int

    def to_dict(self) -> dict:
        return {
            "field": self.field_name,
            "iput_line": self.iput_line,
            "const_line": self.const_line,
            "value": self.value,
        }


@dataclass(frozen=True)
class ConstructorMatch:
    unit_path: str
    class_name: str
    method_signature: str
    strategy: str
    format_site: Optional[FormatSite]
    rotation_sites: Tuple[RotationSite, ...]
    dimension_sites: Tuple[DimensionSite, ...]
    matched_constants: Tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "unit": self.unit_path,
            "class": self.class_name,
            "method": self.method_signature,
            "strategy": self.strategy,
            "format_site": self.format_site.to_dict() if self.format_site else None,
            "rotation_sites": [s.to_dict() for s in self.rotation_sites],
            "dimension_sites": [s.to_dict() for s in self.dimension_sites],
            "matched_constants": list(self.matched_constants),
        }


# ---------------------------------------------------------------------------
# class index


class ClassIndex:
    """Descriptor -> parsed unit lookup over one app tree."""

    def __init__(self) -> None:
        self.by_class: Dict[str, Tuple[str, SmaliUnit]] = {}
        self.by_path: Dict[str, SmaliUnit] = {}
        self.issues: List[Tuple[str, str]] = []

    def add(self, rel_path: str, unit: SmaliUnit) -> None:
        self.by_path[rel_path] = unit
        self.by_class.setdefault(unit.class_name, (rel_path, unit))

    def resolve(self, descriptor: str) -> Optional[Tuple[str, SmaliUnit]]:
        return self.by_class.get(descriptor)

    @classmethod
    def from_tree(cls, root: Path) -> "ClassIndex":
        index = cls()
        for file in sorted(root.rglob("*.smali")):
            rel = file.relative_to(root).as_posix()
            try:
                text = file.read_text(encoding="utf-8")
                unit = smali.parse_unit(text)
            except (smali.SmaliSyntaxError, UnicodeDecodeError) as exc:
                index.issues.append((rel, str(exc)))
                continue
            index.add(rel, unit)
        return index

    @classmethod
    def from_files(cls, files: Dict[str, object]) -> "ClassIndex":
        """Index an in-memory path->text mapping (non-smali entries skipped)."""
        index = cls()
        for rel in sorted(files):
            text = files[rel]
            if not rel.endswith(".smali") or not isinstance(text, str):
                continue
            try:
                index.add(rel, smali.parse_unit(text))
            except smali.SmaliSyntaxError as exc:
                index.issues.append((rel, str(exc)))
        return index


# ---------------------------------------------------------------------------
# anchors


def find_anchors(index: ClassIndex) -> List[SliceAnchor]:
    anchors: List[SliceAnchor] = []
    for rel_path in sorted(index.by_path):
        unit = index.by_path[rel_path]
        for method in unit.methods:
            for instr in method.instructions:
                if instr.kind is not OpKind.INVOKE:
                    continue
                ref = instr.method_ref
                if ref is None or not is_inference_call(ref):
                    continue
                regs = list(instr.invoke_registers)
                is_static = instr.opcode.startswith("invoke-static")
                args = regs if is_static else regs[1:]
                anchors.append(SliceAnchor(
                    unit_path=rel_path,
                    class_name=unit.class_name,
                    method_signature=method.signature,
                    line_index=instr.line_index,
                    target=ref,
                    argument=args[0] if args else None,
                ))
    return anchors


# ---------------------------------------------------------------------------
# backward slicing

_DEF_KINDS = (OpKind.CONST_INT, OpKind.CONST_STRING, OpKind.CONST_CLASS,
              OpKind.MOVE, OpKind.MOVE_RESULT, OpKind.NEW_INSTANCE,
              OpKind.CHECK_CAST, OpKind.IGET)


def _defines(instr: Instruction, reg: Register) -> bool:
    if instr.kind not in _DEF_KINDS:
        return False
    dest = instr.dest
    return dest is not None and dest == reg


def _find_def(method: SmaliMethod, before_index: int, reg: Register
              ) -> Optional[Instruction]:
    """Last definition of ``reg`` strictly above ``before_index``."""
    best = None
    for instr in method.instructions:
        if instr.line_index >= before_index:
            break
        if _defines(instr, reg):
            best = instr
    return best


def _invoke_above(method: SmaliMethod, move_result: Instruction
                  ) -> Optional[Instruction]:
    """The invoke an adjacent move-result consumes (blank lines allowed)."""
    prev = None
    for instr in method.instructions:
        if instr.line_index >= move_result.line_index:
            break
        if instr.kind in (OpKind.LABEL, OpKind.DIRECTIVE):
            continue
        prev = instr
    if prev is not None and prev.kind is OpKind.INVOKE:
        return prev
    return None


def _return_register(method: SmaliMethod) -> Optional[Tuple[Register, int]]:
    for instr in reversed(method.instructions):
        if instr.kind is OpKind.RETURN and instr.operands:
            reg = instr.operands[0]
            if isinstance(reg, Register):
                return reg, instr.line_index
    return None


class _Slicer:
    def __init__(self, index: ClassIndex):
        self.index = index
        self.creation_sites: List[CreationSite] = []
        self.gaps: List[str] = []
        self.trace: List[Tuple[str, int, str]] = []
        self._seen: Set[Tuple[str, str, int, str]] = set()

    def run(self, unit_path: str, method: SmaliMethod, before_index: int,
            reg: Register, depth: int) -> None:
        key = (unit_path, method.signature, before_index, str(reg))
        if key in self._seen:
            return
        self._seen.add(key)

        definition = _find_def(method, before_index, reg)
        if definition is None:
            if reg.kind == "p":
                self.gaps.append(
                    f"{unit_path}:{method.signature}: {reg} reaches method entry")
            else:
                self.gaps.append(
                    f"{unit_path}:{method.signature}: no definition for {reg}")
            return
        self.trace.append((unit_path, definition.line_index, definition.raw_text.strip()))

        kind = definition.kind
        if kind in (OpKind.CONST_INT, OpKind.CONST_STRING, OpKind.CONST_CLASS,
                    OpKind.NEW_INSTANCE):
            return
        if kind is OpKind.IGET:
            ref = definition.field_ref
            self.gaps.append(
                f"{unit_path}:{method.signature}: value loaded from field {ref}")
            return
        if kind is OpKind.MOVE:
            source = definition.operands[1]
            self.run(unit_path, method, definition.line_index, source, depth)
            return
        if kind is OpKind.CHECK_CAST:
            self.run(unit_path, method, definition.line_index, reg, depth)
            return
        if kind is OpKind.MOVE_RESULT:
            invoke = _invoke_above(method, definition)
            if invoke is None:
                self.gaps.append(
                    f"{unit_path}:{method.signature}: dangling move-result "
                    f"at line {definition.line_index}")
                return
            self._handle_invoke(unit_path, method, invoke, depth)
            return

    def _handle_invoke(self, unit_path: str, method: SmaliMethod,
                       invoke: Instruction, depth: int) -> None:
        ref = invoke.method_ref
        regs = list(invoke.invoke_registers)
        if ref is None:
            return
        self.trace.append((unit_path, invoke.line_index, invoke.raw_text.strip()))
        if is_creation_call(ref):
            self.creation_sites.append(CreationSite(
                unit_path=unit_path,
                method_signature=method.signature,
                line_index=invoke.line_index,
                api=ref,
            ))
            return
        if is_framework_class(ref.owner_class):
            # Pass-through framework helpers: the value came in via an argument.
            for reg in regs:
                self.run(unit_path, method, invoke.line_index, reg, depth)
            return
        # App-defined call. Trace caller-side arguments, and descend into the
        # body when depth allows so factory-internal creation calls surface.
        for reg in regs:
            self.run(unit_path, method, invoke.line_index, reg, depth)
        if depth <= 0:
            self.gaps.append(
                f"{unit_path}:{method.signature}: call depth exhausted at {ref}")
            return
        resolved = self.index.resolve(ref.owner_class)
        if resolved is None:
            self.gaps.append(
                f"{unit_path}:{method.signature}: cannot resolve {ref.owner_class}")
            return
        callee_path, callee_unit = resolved
        callee = _lookup_method(callee_unit, ref)
        if callee is None:
            self.gaps.append(
                f"{unit_path}:{method.signature}: no body for {ref}")
            return
        returned = _return_register(callee)
        if returned is None:
            return
        ret_reg, ret_line = returned
        self.run(callee_path, callee, ret_line, ret_reg, depth - 1)


def _lookup_method(unit: SmaliUnit, ref: MethodRef) -> Optional[SmaliMethod]:
    for method in unit.methods:
        if (method.name == ref.method_name
                and f"({ref.param_descriptor})" in method.signature):
            return method
    for method in unit.methods:
        if method.name == ref.method_name:
            return method
    return None


def backward_slice(index: ClassIndex, anchor: SliceAnchor,
                   depth: int = 1) -> SliceResult:
    """Trace an anchor argument back to the calls that built the image."""
    unit = index.by_path[anchor.unit_path]
    method = next(m for m in unit.methods
                  if m.signature == anchor.method_signature)
    slicer = _Slicer(index)
    if anchor.argument is None:
        slicer.gaps.append(f"{anchor.unit_path}: anchor has no argument to trace")
    else:
        slicer.run(anchor.unit_path, method, anchor.line_index,
                   anchor.argument, depth)
    # De-duplicate sites while keeping discovery order.
    seen: Set[Tuple[str, int]] = set()
    sites = []
    for site in slicer.creation_sites:
        key = (site.unit_path, site.line_index)
        if key not in seen:
            seen.add(key)
            sites.append(site)
    return SliceResult(anchor=anchor, creation_sites=tuple(sites),
                       gaps=tuple(slicer.gaps), trace=tuple(slicer.trace))


# ---------------------------------------------------------------------------
# constructor matching


@dataclass
class _IputInfo:
    instr: Instruction
    source: Register
    const_instr: Optional[Instruction]
    value: Optional[int]
    getter: Optional[Tuple[Instruction, Instruction]]  # (invoke, move-result)


def _const_feed(method: SmaliMethod, iput: Instruction) -> _IputInfo:
    """Resolve what flows into an iput: a constant, a getter result, or opaque."""
    source = iput.operands[0]
    reg = source
    line = iput.line_index
    for _ in range(16):
        definition = _find_def(method, line, reg)
        if definition is None:
            break
        if definition.kind is OpKind.CONST_INT:
            return _IputInfo(iput, source, definition, definition.literal.value, None)
        if definition.kind is OpKind.MOVE:
            reg = definition.operands[1]
            line = definition.line_index
            continue
        if definition.kind is OpKind.MOVE_RESULT:
            invoke = _invoke_above(method, definition)
            if invoke is not None and invoke.kind is OpKind.INVOKE:
                return _IputInfo(iput, source, None, None, (invoke, definition))
            break
        break
    return _IputInfo(iput, source, None, None, None)


def _own_int_iputs(unit: SmaliUnit, method: SmaliMethod) -> List[_IputInfo]:
    infos = []
    for instr in method.instructions:
        if instr.kind is not OpKind.IPUT or instr.opcode != "iput":
            continue
        ref = instr.field_ref
        if ref is None or ref.owner_class != unit.class_name:
            continue
        infos.append(_const_feed(method, instr))
    return infos


def _has_const_string(method: SmaliMethod) -> bool:
    return any(i.kind is OpKind.CONST_STRING for i in method.instructions)


def _mentions_matrix(method: SmaliMethod) -> bool:
    return any(MATRIX_TYPE in instr.raw_text for instr in method.instructions)


def _getter_pairs(method: SmaliMethod) -> Dict[str, List[Tuple[Instruction, Instruction]]]:
    """Framework width/height getters invoked on a parameter register."""
    pairs: Dict[str, List[Tuple[Instruction, Instruction]]] = {
        WIDTH_GETTER: [], HEIGHT_GETTER: []}
    instructions = method.instructions
    for pos, instr in enumerate(instructions):
        if instr.kind is not OpKind.INVOKE:
            continue
        ref = instr.method_ref
        if ref is None or not is_framework_class(ref.owner_class):
            continue
        if ref.method_name not in pairs or ref.param_descriptor != "":
            continue
        regs = instr.invoke_registers
        if not regs or regs[0].kind != "p":
            continue
        for follow in instructions[pos + 1:pos + 4]:
            if follow.kind is OpKind.MOVE_RESULT:
                pairs[ref.method_name].append((instr, follow))
                break
            if follow.kind not in (OpKind.DIRECTIVE, OpKind.LABEL):
                break
    return pairs


def _rotation_sites(infos: Sequence[_IputInfo],
                    format_info: Optional[_IputInfo]) -> List[RotationSite]:
    sites = []
    for info in infos:
        if format_info is not None and info.instr is format_info.instr:
            continue
        if info.value is None or info.const_instr is None:
            continue
        if not 0 <= info.value < 360:
            continue
        if info.value in BUFFER_FORMAT_CONSTANTS or info.value == MEDIA_IMAGE_FORMAT_CONSTANT:
            continue
        sites.append(RotationSite(
            field_name=info.instr.field_ref.field_name,
            iput_line=info.instr.line_index,
            const_line=info.const_instr.line_index,
            register=info.source,
            value=info.value,
            radix=info.const_instr.literal.radix,
        ))
    return sites


def _param_rotation_sites(infos: Sequence[_IputInfo],
                          rotation_fields: Set[str]) -> List[RotationSite]:
    """Parameter-fed stores into fields already known to hold rotation."""
    sites = []
    for info in infos:
        if info.const_instr is not None or info.getter is not None:
            continue
        name = info.instr.field_ref.field_name
        if name in rotation_fields and info.source.kind == "p":
            sites.append(RotationSite(
                field_name=name,
                iput_line=info.instr.line_index,
                const_line=None,
                register=info.source,
                value=None,
                radix=None,
            ))
    return sites


def _dimension_sites(infos: Sequence[_IputInfo]) -> List[DimensionSite]:
    sites = []
    roles = {WIDTH_GETTER: "width", HEIGHT_GETTER: "height"}
    for info in infos:
        ref = info.instr.field_ref
        if info.getter is not None:
            invoke, move_result = info.getter
            name = invoke.method_ref.method_name
            if name in roles:
                sites.append(DimensionSite(
                    role=roles[name], kind="getter", field_name=ref.field_name,
                    iput_line=info.instr.line_index,
                    invoke_line=invoke.line_index,
                    move_result_line=move_result.line_index,
                    register=info.source, value=None))
    return sites


def match_constructor(unit: SmaliUnit, unit_path: str,
                      method: SmaliMethod) -> Optional[ConstructorMatch]:
    """Test one constructor against the three wrapper signatures."""
    if not method.is_constructor or method.is_static:
        return None
    infos = _own_int_iputs(unit, method)
    if not infos:
        return None

    def build(strategy: str, format_info: _IputInfo,
              constants: Tuple[int, ...],
              dims: Sequence[DimensionSite]) -> ConstructorMatch:
        rot = _rotation_sites(infos, format_info)
        site = FormatSite(
            field_name=format_info.instr.field_ref.field_name,
            iput_line=format_info.instr.line_index,
            const_line=(format_info.const_instr.line_index
                        if format_info.const_instr else None),
            value=format_info.value,
        )
        return ConstructorMatch(
            unit_path=unit_path, class_name=unit.class_name,
            method_signature=method.signature, strategy=strategy,
            format_site=site, rotation_sites=tuple(rot),
            dimension_sites=tuple(dims), matched_constants=constants)

    # Buffer wrapper: format constant plus a string literal in the body.
    if _has_const_string(method):
        for info in infos:
            if info.value in BUFFER_FORMAT_CONSTANTS:
                return build(STRATEGY_BUFFER, info, (info.value,), ())

    # Bitmap wrapper: getter pair on a parameter plus a -1 format store.
    pairs = _getter_pairs(method)
    if pairs[WIDTH_GETTER] and pairs[HEIGHT_GETTER]:
        for info in infos:
            if info.value == BITMAP_FORMAT_CONSTANT:
                return build(STRATEGY_BITMAP, info,
                             (BITMAP_FORMAT_CONSTANT,), _dimension_sites(infos))

    # Media-image wrapper: format store of 35 plus a Matrix mention.
    if _mentions_matrix(method):
        for info in infos:
            if info.value == MEDIA_IMAGE_FORMAT_CONSTANT:
                return build(STRATEGY_MEDIA_IMAGE, info,
                             (MEDIA_IMAGE_FORMAT_CONSTANT,), ())

    return None


def match_constructors(unit: SmaliUnit, unit_path: str) -> List[ConstructorMatch]:
    """All strategy matches in a unit, one at most per constructor.

    When a constant-fed rotation store identifies the rotation field in one
    constructor, parameter-fed stores to that field in sibling constructors
    are promoted to rotation sites too (value unknown until runtime).
    """
    matches = [m for m in (match_constructor(unit, unit_path, method)
                           for method in unit.methods) if m is not None]
    rotation_fields = {site.field_name
                       for match in matches for site in match.rotation_sites}
    if not rotation_fields:
        return matches
    promoted = []
    for match in matches:
        method = next(m for m in unit.methods
                      if m.signature == match.method_signature)
        extra = _param_rotation_sites(_own_int_iputs(unit, method), rotation_fields)
        known = {s.iput_line for s in match.rotation_sites}
        extra = [s for s in extra if s.iput_line not in known]
        if extra:
            match = ConstructorMatch(
                unit_path=match.unit_path, class_name=match.class_name,
                method_signature=match.method_signature, strategy=match.strategy,
                format_site=match.format_site,
                rotation_sites=match.rotation_sites + tuple(extra),
                dimension_sites=match.dimension_sites,
                matched_constants=match.matched_constants)
        promoted.append(match)
    return promoted


# ---------------------------------------------------------------------------
# whole-tree analysis


@dataclass
class AnalysisResult:
    root: str
    units: int
    anchors: List[SliceAnchor] = field(default_factory=list)
    slices: List[SliceResult] = field(default_factory=list)
    matches: List[ConstructorMatch] = field(default_factory=list)
    issues: List[Tuple[str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "root": self.root,
            "units": self.units,
            "anchors": [a.to_dict() for a in self.anchors],
            "slices": [s.to_dict() for s in self.slices],
            "matches": [m.to_dict() for m in self.matches],
            "issues": [{"unit": u, "error": e} for u, e in self.issues],
        }


def analyze_index(index: ClassIndex, name: str, depth: int = 1) -> AnalysisResult:
    anchors = find_anchors(index)
    result = AnalysisResult(root=name, units=len(index.by_path),
                            anchors=anchors, issues=list(index.issues))
    for anchor in anchors:
        result.slices.append(backward_slice(index, anchor, depth=depth))
    for rel_path in sorted(index.by_path):
        result.matches.extend(match_constructors(index.by_path[rel_path], rel_path))
    return result


def analyze_tree(root: Path, depth: int = 1) -> AnalysisResult:
    """Run anchor finding, slicing and constructor matching over one tree."""
    return analyze_index(ClassIndex.from_tree(root), root.name, depth)


def analyze_files(files: Dict[str, object], name: str = "",
                  depth: int = 1) -> AnalysisResult:
    """Same as analyze_tree but over an in-memory path->text mapping."""
    return analyze_index(ClassIndex.from_files(files), name, depth)
