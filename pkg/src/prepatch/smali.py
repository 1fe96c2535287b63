"""Parser and emitter for disassembler-style smali class files.

The parser covers the instruction subset needed for constructor signature
matching and patch injection: const loads, instance field put/get, invokes,
moves, move-results, returns, new-instance and check-cast.  Every other line
(directives, labels, switch payloads, annotations, comments) is kept as an
opaque raw line, so ``emit_unit(parse_unit(text)) == text`` byte-for-byte.

Lines are the unit of fidelity: a unit stores the full line array of the
source file and every structured instruction points back into it, which is
what makes minimal-diff patching possible.  Supported opcodes with malformed
operands are rejected with a syntax error rather than guessed at; unknown
opcodes pass through untouched.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union


class SmaliSyntaxError(ValueError):
    """Raised for malformed headers, descriptors or operands.

    ``line`` is 1-based; ``column`` is 1-based when known, else None.
    """

    def __init__(self, message: str, line: int, column: Optional[int] = None):
        self.line = line
        self.column = column
        loc = f"line {line}" if column is None else f"line {line}, col {column}"
        super().__init__(f"{loc}: {message}")


class OpKind(Enum):
    CONST_INT = "const_int"
    CONST_STRING = "const_string"
    CONST_CLASS = "const_class"
    IPUT = "iput"
    IGET = "iget"
    INVOKE = "invoke"
    MOVE = "move"
    MOVE_RESULT = "move_result"
    RETURN = "return"
    NEW_INSTANCE = "new_instance"
    CHECK_CAST = "check_cast"
    LABEL = "label"
    DIRECTIVE = "directive"
    RAW = "raw"


CONST_INT_OPS = {
    "const/4", "const/16", "const", "const/high16",
    "const-wide/16", "const-wide/32", "const-wide", "const-wide/high16",
}
CONST_STRING_OPS = {"const-string", "const-string/jumbo"}
CONST_CLASS_OPS = {"const-class"}
_FIELD_WIDTHS = ("", "-wide", "-object", "-boolean", "-byte", "-char", "-short")
IPUT_OPS = {"iput" + s for s in _FIELD_WIDTHS}
IGET_OPS = {"iget" + s for s in _FIELD_WIDTHS}
INVOKE_OPS = {
    "invoke-virtual", "invoke-super", "invoke-direct", "invoke-static",
    "invoke-interface",
}
INVOKE_RANGE_OPS = {op + "/range" for op in INVOKE_OPS}
MOVE_OPS = {
    "move", "move/from16", "move/16",
    "move-object", "move-object/from16", "move-object/16",
    "move-wide", "move-wide/from16", "move-wide/16",
}
MOVE_RESULT_OPS = {"move-result", "move-result-object", "move-result-wide"}
RETURN_OPS = {"return-void", "return", "return-object", "return-wide"}

_REG_RE = re.compile(r"^[vp]\d+$")
_INT_RE = re.compile(r"^-?(?:0[xX][0-9a-fA-F]+|\d+)$")
_TYPE_RE = re.compile(r"^\[*(?:[ZBCSIJFD]|L[^;\s]+;)$")
_FIELD_REF_RE = re.compile(r"^(\[*L[^;\s]+;)->([^:\s]+):(\S+)$")
_METHOD_REF_RE = re.compile(r"^(\[*(?:L[^;\s]+;|[ZBCSIJFD]))->([^(\s]+)\(([^)]*)\)(\S+)$")
_STRING_RE = re.compile(r'^"((?:[^"\\]|\\.)*)"$')
_METHOD_SIG_RE = re.compile(r"^([^(\s]+)\(([^)]*)\)(\S+)$")

KNOWN_ACCESS_FLAGS = {
    "public", "private", "protected", "static", "final", "synchronized",
    "bridge", "varargs", "native", "abstract", "strictfp", "synthetic",
    "constructor", "declared-synchronized", "interface", "enum", "annotation",
    "volatile", "transient",
}


@dataclass(frozen=True)
class Register:
    name: str

    @property
    def kind(self) -> str:
        return self.name[0]

    @property
    def index(self) -> int:
        return int(self.name[1:])

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class IntLiteral:
    value: int
    text: str

    @property
    def radix(self) -> str:
        return "hex" if "0x" in self.text.lower() else "dec"


@dataclass(frozen=True)
class StringLiteral:
    # Escaped source form, without the surrounding quotes.
    text: str


@dataclass(frozen=True)
class TypeRef:
    descriptor: str


@dataclass(frozen=True)
class FieldRef:
    owner_class: str
    field_name: str
    field_type: str

    def __str__(self) -> str:
        return f"{self.owner_class}->{self.field_name}:{self.field_type}"


@dataclass(frozen=True)
class MethodRef:
    owner_class: str
    method_name: str
    param_descriptor: str
    return_type: str

    def __str__(self) -> str:
        return (f"{self.owner_class}->{self.method_name}"
                f"({self.param_descriptor}){self.return_type}")


@dataclass(frozen=True)
class RegisterList:
    registers: tuple[Register, ...]
    is_range: bool = False


Operand = Union[Register, IntLiteral, StringLiteral, TypeRef, FieldRef, MethodRef, RegisterList]


@dataclass(frozen=True)
class Instruction:
    opcode: str
    kind: OpKind
    operands: tuple[Operand, ...]
    raw_text: str
    line_index: int

    @property
    def dest(self) -> Optional[Register]:
        if self.operands and isinstance(self.operands[0], Register):
            return self.operands[0]
        return None

    @property
    def literal(self) -> Optional[IntLiteral]:
        for op in self.operands:
            if isinstance(op, IntLiteral):
                return op
        return None

    @property
    def string_value(self) -> Optional[str]:
        for op in self.operands:
            if isinstance(op, StringLiteral):
                return op.text
        return None

    @property
    def field_ref(self) -> Optional[FieldRef]:
        for op in self.operands:
            if isinstance(op, FieldRef):
                return op
        return None

    @property
    def method_ref(self) -> Optional[MethodRef]:
        for op in self.operands:
            if isinstance(op, MethodRef):
                return op
        return None

    @property
    def invoke_registers(self) -> tuple[Register, ...]:
        for op in self.operands:
            if isinstance(op, RegisterList):
                return op.registers
        return ()


@dataclass(frozen=True)
class FieldDecl:
    name: str
    type_descriptor: str
    access_flags: frozenset[str]
    line_index: int
    raw_text: str


@dataclass(frozen=True)
class SmaliMethod:
    name: str
    param_types: tuple[str, ...]
    return_type: str
    access_flags: frozenset[str]
    instructions: tuple[Instruction, ...]
    registers: Optional[int]      # .registers value, or None
    locals_count: Optional[int]   # .locals value, or None
    header_line_index: int
    end_line_index: int

    @property
    def is_constructor(self) -> bool:
        return self.name == "<init>"

    @property
    def is_static(self) -> bool:
        return "static" in self.access_flags

    @property
    def signature(self) -> str:
        return f"{self.name}({''.join(self.param_types)}){self.return_type}"

    @property
    def param_slots(self) -> int:
        slots = 0 if self.is_static else 1
        for t in self.param_types:
            slots += 2 if t in ("J", "D") else 1
        return slots

    def param_slot_to_position(self, slot: int) -> Optional[int]:
        """Map a p-register slot to a declared-parameter position (static only
        counts declared params; slot 0 of an instance method is ``this``)."""
        cursor = 0 if self.is_static else 1
        if not self.is_static and slot == 0:
            return None
        for pos, t in enumerate(self.param_types):
            width = 2 if t in ("J", "D") else 1
            if cursor <= slot < cursor + width:
                return pos
            cursor += width
        return None


@dataclass(frozen=True)
class SmaliUnit:
    class_name: str
    super_name: Optional[str]
    class_flags: frozenset[str]
    fields: tuple[FieldDecl, ...]
    methods: tuple[SmaliMethod, ...]
    lines: tuple[str, ...]

    @property
    def raw_preamble(self) -> str:
        if not self.methods:
            return "\n".join(self.lines)
        first = min(m.header_line_index for m in self.methods)
        return "\n".join(self.lines[:first])

    @property
    def raw_trailing(self) -> str:
        if not self.methods:
            return ""
        last = max(m.end_line_index for m in self.methods)
        return "\n".join(self.lines[last + 1:])


def check_type_descriptor(desc: str, *, void_ok: bool = False) -> bool:
    if void_ok and desc == "V":
        return True
    return bool(_TYPE_RE.match(desc))


def split_param_descriptors(params: str, line: int) -> tuple[str, ...]:
    out = []
    i = 0
    while i < len(params):
        start = i
        while i < len(params) and params[i] == "[":
            i += 1
        if i >= len(params):
            raise SmaliSyntaxError(f"dangling array marker in parameter list '{params}'", line)
        c = params[i]
        if c == "L":
            end = params.find(";", i)
            if end < 0:
                raise SmaliSyntaxError(f"unterminated object descriptor in '{params}'", line)
            i = end + 1
        elif c in "ZBCSIJFD":
            i += 1
        else:
            raise SmaliSyntaxError(f"bad type character '{c}' in parameter list '{params}'", line)
        out.append(params[start:i])
    return tuple(out)


def parse_int_literal(text: str, line: int) -> IntLiteral:
    if not _INT_RE.match(text):
        raise SmaliSyntaxError(f"bad integer literal '{text}'", line)
    return IntLiteral(value=int(text, 0), text=text)


def format_int_literal(value: int, radix: str = "hex") -> str:
    if radix == "dec":
        return str(value)
    return f"-0x{-value:x}" if value < 0 else f"0x{value:x}"


def const_opcode_for(value: int) -> str:
    """Smallest non-wide const opcode that can carry ``value``."""
    if -8 <= value <= 7:
        return "const/4"
    if -0x8000 <= value <= 0x7FFF:
        return "const/16"
    return "const"


def render_const(register: str, value: int, radix: str = "hex", indent: str = "    ") -> str:
    return f"{indent}{const_opcode_for(value)} {register}, {format_int_literal(value, radix)}"


def _parse_register(tok: str, line: int) -> Register:
    if not _REG_RE.match(tok):
        raise SmaliSyntaxError(f"bad register '{tok}'", line)
    return Register(tok)


def _strip_comment(rest: str) -> str:
    # For non-string operands '#' can only start a trailing comment.
    pos = rest.find("#")
    return rest if pos < 0 else rest[:pos]


def _parse_field_ref(tok: str, line: int) -> FieldRef:
    m = _FIELD_REF_RE.match(tok)
    if not m:
        raise SmaliSyntaxError(f"bad field reference '{tok}'", line)
    owner, name, ftype = m.groups()
    if not check_type_descriptor(ftype):
        raise SmaliSyntaxError(f"bad field type descriptor '{ftype}'", line)
    return FieldRef(owner_class=owner, field_name=name, field_type=ftype)


def _parse_method_ref(tok: str, line: int) -> MethodRef:
    m = _METHOD_REF_RE.match(tok)
    if not m:
        raise SmaliSyntaxError(f"bad method reference '{tok}'", line)
    owner, name, params, ret = m.groups()
    split_param_descriptors(params, line)
    if not check_type_descriptor(ret, void_ok=True):
        raise SmaliSyntaxError(f"bad return type descriptor '{ret}'", line)
    return MethodRef(owner_class=owner, method_name=name, param_descriptor=params, return_type=ret)


def _parse_register_list(tok: str, line: int, is_range: bool) -> RegisterList:
    tok = tok.strip()
    if not (tok.startswith("{") and tok.endswith("}")):
        raise SmaliSyntaxError(f"bad register list '{tok}'", line)
    inner = tok[1:-1].strip()
    if not inner:
        return RegisterList(registers=(), is_range=is_range)
    if is_range:
        parts = [p.strip() for p in inner.split("..")]
        if len(parts) != 2:
            raise SmaliSyntaxError(f"bad register range '{tok}'", line)
        first = _parse_register(parts[0], line)
        last = _parse_register(parts[1], line)
        if first.kind != last.kind or last.index < first.index:
            raise SmaliSyntaxError(f"bad register range '{tok}'", line)
        regs = tuple(Register(f"{first.kind}{i}") for i in range(first.index, last.index + 1))
        return RegisterList(registers=regs, is_range=True)
    regs = tuple(_parse_register(p.strip(), line) for p in inner.split(","))
    return RegisterList(registers=regs, is_range=False)


def _parse_instruction(raw: str, stripped: str, line_index: int) -> Instruction:
    lineno = line_index + 1
    if stripped.startswith(":"):
        return Instruction(":", OpKind.LABEL, (), raw, line_index)
    if stripped.startswith("."):
        op = stripped.split(None, 1)[0]
        return Instruction(op, OpKind.DIRECTIVE, (), raw, line_index)

    parts = stripped.split(None, 1)
    opcode = parts[0]
    rest = parts[1] if len(parts) > 1 else ""

    if opcode in CONST_INT_OPS:
        ops = [t.strip() for t in _strip_comment(rest).split(",")]
        if len(ops) != 2:
            raise SmaliSyntaxError(f"{opcode} expects 'reg, literal'", lineno)
        reg = _parse_register(ops[0], lineno)
        lit = parse_int_literal(ops[1], lineno)
        return Instruction(opcode, OpKind.CONST_INT, (reg, lit), raw, line_index)

    if opcode in CONST_STRING_OPS:
        head, sep, tail = rest.partition(",")
        if not sep:
            raise SmaliSyntaxError(f"{opcode} expects 'reg, \"string\"'", lineno)
        reg = _parse_register(head.strip(), lineno)
        m = _STRING_RE.match(tail.strip())
        if not m:
            raise SmaliSyntaxError(f"bad string operand in {opcode}", lineno)
        return Instruction(opcode, OpKind.CONST_STRING, (reg, StringLiteral(m.group(1))), raw, line_index)

    if opcode in CONST_CLASS_OPS or opcode == "new-instance" or opcode == "check-cast":
        ops = [t.strip() for t in _strip_comment(rest).split(",")]
        if len(ops) != 2:
            raise SmaliSyntaxError(f"{opcode} expects 'reg, type'", lineno)
        reg = _parse_register(ops[0], lineno)
        if not check_type_descriptor(ops[1]):
            raise SmaliSyntaxError(f"bad type descriptor '{ops[1]}'", lineno)
        kind = {"const-class": OpKind.CONST_CLASS,
                "new-instance": OpKind.NEW_INSTANCE,
                "check-cast": OpKind.CHECK_CAST}[opcode]
        return Instruction(opcode, kind, (reg, TypeRef(ops[1])), raw, line_index)

    if opcode in IPUT_OPS or opcode in IGET_OPS:
        ops = [t.strip() for t in _strip_comment(rest).split(",")]
        if len(ops) != 3:
            raise SmaliSyntaxError(f"{opcode} expects 'reg, reg, field-ref'", lineno)
        src = _parse_register(ops[0], lineno)
        obj = _parse_register(ops[1], lineno)
        ref = _parse_field_ref(ops[2], lineno)
        kind = OpKind.IPUT if opcode in IPUT_OPS else OpKind.IGET
        return Instruction(opcode, kind, (src, obj, ref), raw, line_index)

    if opcode in INVOKE_OPS or opcode in INVOKE_RANGE_OPS:
        body = _strip_comment(rest).strip()
        close = body.find("}")
        if not body.startswith("{") or close < 0:
            raise SmaliSyntaxError(f"{opcode} expects '{{regs}}, method-ref'", lineno)
        reglist_tok = body[: close + 1]
        after = body[close + 1:].strip()
        if not after.startswith(","):
            raise SmaliSyntaxError(f"{opcode} expects '{{regs}}, method-ref'", lineno)
        ref_tok = after[1:].strip()
        regs = _parse_register_list(reglist_tok, lineno, opcode in INVOKE_RANGE_OPS)
        ref = _parse_method_ref(ref_tok, lineno)
        return Instruction(opcode, OpKind.INVOKE, (regs, ref), raw, line_index)

    if opcode in MOVE_OPS:
        ops = [t.strip() for t in _strip_comment(rest).split(",")]
        if len(ops) != 2:
            raise SmaliSyntaxError(f"{opcode} expects 'reg, reg'", lineno)
        return Instruction(opcode, OpKind.MOVE,
                           (_parse_register(ops[0], lineno), _parse_register(ops[1], lineno)),
                           raw, line_index)

    if opcode in MOVE_RESULT_OPS:
        tok = _strip_comment(rest).strip()
        return Instruction(opcode, OpKind.MOVE_RESULT, (_parse_register(tok, lineno),), raw, line_index)

    if opcode in RETURN_OPS:
        tok = _strip_comment(rest).strip()
        if opcode == "return-void":
            if tok:
                raise SmaliSyntaxError("return-void takes no operand", lineno)
            return Instruction(opcode, OpKind.RETURN, (), raw, line_index)
        return Instruction(opcode, OpKind.RETURN, (_parse_register(tok, lineno),), raw, line_index)

    return Instruction(opcode, OpKind.RAW, (), raw, line_index)


def _parse_method_header(raw: str, line_index: int) -> tuple[frozenset[str], str, tuple[str, ...], str]:
    lineno = line_index + 1
    tokens = raw.split()
    if tokens[0] != ".method" or len(tokens) < 2:
        raise SmaliSyntaxError("malformed .method header", lineno)
    sig_tok = tokens[-1]
    flags = tokens[1:-1]
    for f in flags:
        if f not in KNOWN_ACCESS_FLAGS:
            raise SmaliSyntaxError(f"unknown method access flag '{f}'", lineno)
    m = _METHOD_SIG_RE.match(sig_tok)
    if not m:
        raise SmaliSyntaxError(f"malformed method signature '{sig_tok}'", lineno)
    name, params, ret = m.groups()
    param_types = split_param_descriptors(params, lineno)
    if not check_type_descriptor(ret, void_ok=True):
        raise SmaliSyntaxError(f"bad return type descriptor '{ret}'", lineno)
    return frozenset(flags), name, param_types, ret


def _validate_registers(method: SmaliMethod, lineno_of: dict[int, int]) -> None:
    slots = method.param_slots
    if method.registers is not None:
        total = method.registers
    elif method.locals_count is not None:
        total = method.locals_count + slots
    else:
        return
    for ins in method.instructions:
        regs: list[Register] = []
        for op in ins.operands:
            if isinstance(op, Register):
                regs.append(op)
            elif isinstance(op, RegisterList):
                regs.extend(op.registers)
        for r in regs:
            bad = (r.kind == "p" and r.index >= slots) or (r.kind == "v" and r.index >= total)
            if bad:
                raise SmaliSyntaxError(
                    f"register {r.name} out of range (frame {total}, params {slots})",
                    ins.line_index + 1)


def _parse_method(lines: Sequence[str], start: int) -> tuple[SmaliMethod, int]:
    flags, name, params, ret = _parse_method_header(lines[start].strip(), start)
    instructions: list[Instruction] = []
    registers = locals_count = None
    i = start + 1
    while i < len(lines):
        raw = lines[i]
        s = raw.strip()
        if s == ".end method":
            method = SmaliMethod(
                name=name, param_types=params, return_type=ret, access_flags=flags,
                instructions=tuple(instructions), registers=registers,
                locals_count=locals_count, header_line_index=start, end_line_index=i)
            _validate_registers(method, {})
            return method, i + 1
        if s.startswith(".method"):
            raise SmaliSyntaxError("nested .method (missing .end method?)", i + 1)
        if s.startswith(".registers") or s.startswith(".locals"):
            toks = s.split()
            if len(toks) != 2 or not toks[1].isdigit():
                raise SmaliSyntaxError(f"malformed {toks[0]} directive", i + 1)
            if toks[0] == ".registers":
                registers = int(toks[1])
            else:
                locals_count = int(toks[1])
            instructions.append(Instruction(toks[0], OpKind.DIRECTIVE, (), raw, i))
        elif s and not s.startswith("#"):
            instructions.append(_parse_instruction(raw, s, i))
        i += 1
    raise SmaliSyntaxError(f"unterminated .method '{name}' (no .end method)", start + 1)


def parse_unit(text: str) -> SmaliUnit:
    """Parse one smali class file.  The input must contain exactly one
    ``.class`` declaration; the returned unit re-emits the text unchanged."""
    lines = text.split("\n")
    class_name: Optional[str] = None
    class_flags: frozenset[str] = frozenset()
    super_name: Optional[str] = None
    fields: list[FieldDecl] = []
    methods: list[SmaliMethod] = []

    i = 0
    while i < len(lines):
        raw = lines[i]
        s = raw.strip()
        if not s or s.startswith("#"):
            i += 1
            continue
        if s.startswith(".class"):
            if class_name is not None:
                raise SmaliSyntaxError("duplicate .class declaration", i + 1)
            toks = s.split()
            if len(toks) < 2 or not check_type_descriptor(toks[-1]) or not toks[-1].startswith("L"):
                raise SmaliSyntaxError("malformed .class declaration", i + 1)
            class_name = toks[-1]
            class_flags = frozenset(toks[1:-1])
            i += 1
        elif s.startswith(".super"):
            toks = s.split()
            if len(toks) != 2 or not check_type_descriptor(toks[1]):
                raise SmaliSyntaxError("malformed .super declaration", i + 1)
            super_name = toks[1]
            i += 1
        elif s.startswith(".field"):
            fields.append(_parse_field_decl(raw, i))
            i += 1
        elif s.startswith(".method"):
            if class_name is None:
                raise SmaliSyntaxError(".method before .class declaration", i + 1)
            method, i = _parse_method(lines, i)
            methods.append(method)
        elif s == ".end method":
            raise SmaliSyntaxError(".end method without matching .method", i + 1)
        else:
            # .source/.implements/annotations/comments: opaque, preserved.
            i += 1

    if class_name is None:
        raise SmaliSyntaxError("missing .class declaration", 1)
    return SmaliUnit(
        class_name=class_name, super_name=super_name, class_flags=class_flags,
        fields=tuple(fields), methods=tuple(methods), lines=tuple(lines))


_FIELD_DECL_RE = re.compile(r"^\.field\s+((?:[\w-]+\s+)*)([^:\s]+):(\S+)(?:\s*=\s*(.+))?$")


def _parse_field_decl(raw: str, line_index: int) -> FieldDecl:
    m = _FIELD_DECL_RE.match(raw.strip())
    if not m:
        raise SmaliSyntaxError("malformed .field declaration", line_index + 1)
    flags_s, name, ftype, _init = m.groups()
    if not check_type_descriptor(ftype):
        raise SmaliSyntaxError(f"bad field type descriptor '{ftype}'", line_index + 1)
    return FieldDecl(name=name, type_descriptor=ftype,
                     access_flags=frozenset(flags_s.split()),
                     line_index=line_index, raw_text=raw)


def emit_unit(unit: SmaliUnit) -> str:
    """Render a unit back to source.  Total for valid units; untouched lines
    are reproduced verbatim."""
    return "\n".join(unit.lines)


def splice_lines(unit: SmaliUnit, start: int, count: int, new_lines: Sequence[str]) -> SmaliUnit:
    """Return a new unit with ``count`` lines at ``start`` replaced by
    ``new_lines`` (``count`` 0 inserts).  The result is re-parsed, so invalid
    replacements fail loudly instead of corrupting the unit."""
    if start < 0 or start + count > len(unit.lines):
        raise IndexError(f"splice [{start}, {start + count}) outside unit of {len(unit.lines)} lines")
    lines = list(unit.lines)
    lines[start:start + count] = list(new_lines)
    return parse_unit("\n".join(lines))
