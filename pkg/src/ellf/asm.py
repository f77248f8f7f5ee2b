"""Two-pass assembler for the emitted dialect, and the round-trip oracle.

The dialect (one statement per line, ``#`` comments):

    .section NAME base=0xADDR      sections; flags follow the name (.text*
                                   executable, .bss* zero-fill, .rodata*
                                   read-only, anything else writable data)
    .func NAME / .endfunc          function extent; .func also defines NAME
    .slot FUNC, NAME, OFFSET       stack-slot constant, usable in brackets
    .set NAME, LABEL [+|- N]       define NAME at another label plus offset
    NAME:                          label (also allowed before a statement)
    mnemonic ops                   one instruction, e.g. mov rax, [rcx + rbp*4]
    .byte/.long/.quad/.zero/.asciz data; .quad accepts LABEL, LABEL+N and
                                   LABEL - LABEL difference expressions

Assembling lays sections out at their declared bases, encodes through the
canonical instruction encoder, resolves labels, and produces both an ELF
image (with the encoded metadata injected as `.ellf`) and the ground-truth
metadata record derived from the same layout: instruction regions from
consecutive instruction runs, text records from functions and labels, pointer
records from every label-valued operand and data cell, data records from
labeled data objects, stack records from slot definitions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import elfio
from .errors import (
    AsmSyntaxError,
    DuplicateLabel,
    RangeOverflow,
    SectionOverlap,
    UndefinedLabel,
    UnknownDirective,
    EllfError,
)
from .isa import (
    Immediate,
    MemRef,
    PcRel,
    Register,
    JCC_MNEMONICS,
    SUBSET_MNEMONICS,
    _REG_INFO,
    encode_one,
)
from .meta import (
    BASIC_BLOCK,
    DataDiff,
    DataPointer,
    DataRecord,
    EllfMetadata,
    FUNCTION_END,
    FUNCTION_START,
    InstructionRegion,
    OperandPointer,
    StackRecord,
    TextRecord,
    check_invariants,
    encode_metadata,
    _pointer_sort_key,
    _text_sort_key,
)

U64 = (1 << 64) - 1

_BRANCH_MNEMONICS = frozenset(("jmp", "call") + JCC_MNEMONICS)
_IDENT = r"[A-Za-z_.$][A-Za-z0-9_.$]*"
_LABEL_RE = re.compile(rf"^({_IDENT})\s*:\s*(.*)$")
_SECTION_RE = re.compile(rf"^\.section\s+({_IDENT})(?:\s+base\s*=\s*(\S+))?$")


# --- program representation ---

@dataclass
class Label:
    name: str
    line: int


@dataclass
class FuncBegin:
    name: str
    line: int


@dataclass
class FuncEnd:
    line: int


@dataclass
class SlotDef:
    function: str
    name: str
    offset: int
    line: int


@dataclass
class SetLabel:
    name: str
    base: str
    offset: int
    line: int


@dataclass
class Data:
    directive: str  # "byte" | "long" | "quad" | "zero" | "asciz"
    payload: object
    line: int


@dataclass
class Instr:
    mnemonic: str
    operands: tuple
    line: int


@dataclass
class AsmSection:
    name: str
    base: int | None
    items: list = field(default_factory=list)

    @property
    def execable(self):
        return self.name.startswith(".text")

    @property
    def nobits(self):
        return self.name.startswith(".bss")

    @property
    def writable(self):
        return not (self.execable or self.name.startswith(".rodata"))


@dataclass
class AsmProgram:
    sections: list[AsmSection]


# operand ASTs that need label resolution
@dataclass(frozen=True)
class LabelRef:
    name: str
    offset: int = 0


@dataclass(frozen=True)
class LabelMem:
    name: str
    offset: int = 0


@dataclass(frozen=True)
class QuadInt:
    value: int


@dataclass(frozen=True)
class QuadRef:
    name: str
    offset: int


@dataclass(frozen=True)
class QuadDiff:
    minuend: str
    minuend_offset: int
    subtrahend: str
    subtrahend_offset: int


# --- parsing ---

def parse_assembly(text: str) -> AsmProgram:
    sections: list[AsmSection] = []
    defined: set[str] = set()
    in_func = False

    def current_section(line):
        if not sections:
            raise AsmSyntaxError("statement before any .section", line)
        return sections[-1]

    def define(name, line):
        if name in defined:
            raise DuplicateLabel(f"label {name!r} already defined", line)
        defined.add(name)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        while line:
            m = _LABEL_RE.match(line)
            if m and not _is_directive_word(m.group(1)):
                define(m.group(1), lineno)
                current_section(lineno).items.append(Label(m.group(1), lineno))
                line = m.group(2).strip()
                continue
            break
        if not line:
            continue

        if line.startswith("."):
            word = line.split(None, 1)[0]
            rest = line[len(word):].strip()
            if word == ".section":
                m = _SECTION_RE.match(line)
                if not m:
                    raise AsmSyntaxError(f"malformed .section line: {line!r}", lineno)
                base = _parse_int(m.group(2), lineno) if m.group(2) else None
                sections.append(AsmSection(m.group(1), base))
            elif word == ".func":
                if in_func:
                    raise AsmSyntaxError("nested .func", lineno)
                if not re.fullmatch(_IDENT, rest):
                    raise AsmSyntaxError(f"malformed .func name: {rest!r}", lineno)
                define(rest, lineno)
                current_section(lineno).items.append(FuncBegin(rest, lineno))
                in_func = True
            elif word == ".endfunc":
                if rest:
                    raise AsmSyntaxError(".endfunc takes no arguments", lineno)
                if not in_func:
                    raise AsmSyntaxError(".endfunc without .func", lineno)
                current_section(lineno).items.append(FuncEnd(lineno))
                in_func = False
            elif word == ".slot":
                parts = _split_args(rest)
                if len(parts) != 3:
                    raise AsmSyntaxError(".slot takes FUNC, NAME, OFFSET", lineno)
                offset = _parse_int(parts[2], lineno)
                if offset <= 0:
                    raise AsmSyntaxError(f"slot offset must be positive: {offset}", lineno)
                current_section(lineno).items.append(
                    SlotDef(parts[0], parts[1], offset, lineno))
            elif word == ".set":
                parts = _split_args(rest)
                if len(parts) != 2:
                    raise AsmSyntaxError(".set takes NAME, LABEL[+N]", lineno)
                base, offset = _parse_label_expr(parts[1], lineno)
                define(parts[0], lineno)
                current_section(lineno).items.append(
                    SetLabel(parts[0], base, offset, lineno))
            elif word in (".byte", ".long", ".quad", ".zero", ".asciz"):
                current_section(lineno).items.append(
                    _parse_data(word[1:], rest, lineno))
            else:
                raise UnknownDirective(f"unknown directive {word!r}", lineno)
            continue

        mnemonic, _, operand_text = line.partition(" ")
        mnemonic = mnemonic.lower()
        if mnemonic not in SUBSET_MNEMONICS:
            raise AsmSyntaxError(f"unknown mnemonic {mnemonic!r}", lineno)
        operands = tuple(_parse_operand(tok, lineno)
                         for tok in _split_args(operand_text))
        current_section(lineno).items.append(Instr(mnemonic, operands, lineno))

    if in_func:
        raise AsmSyntaxError(".func without closing .endfunc", 0)
    return AsmProgram(sections)


def _strip_comment(line: str) -> str:
    out = []
    in_str = False
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == '"' and (i == 0 or line[i - 1] != "\\"):
            in_str = not in_str
        if ch == "#" and not in_str:
            break
        out.append(ch)
        i += 1
    return "".join(out)


_DIRECTIVES = {".section", ".func", ".endfunc", ".slot", ".set",
               ".byte", ".long", ".quad", ".zero", ".asciz"}


def _is_directive_word(word):
    return word in _DIRECTIVES


def _split_args(text: str) -> list[str]:
    if not text.strip():
        return []
    parts = []
    depth = 0
    in_str = False
    cur = []
    for ch in text:
        if ch == '"':
            in_str = not in_str
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0 and not in_str:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur).strip())
    return parts


def _parse_int(text: str, line: int) -> int:
    try:
        return int(text.strip(), 0)
    except (ValueError, TypeError):
        raise AsmSyntaxError(f"expected a number, got {text!r}", line) from None


def _parse_label_expr(text: str, line: int) -> tuple[str, int]:
    m = re.fullmatch(rf"({_IDENT})\s*(?:([+-])\s*(\w+))?", text.strip())
    if not m:
        raise AsmSyntaxError(f"expected LABEL or LABEL+N, got {text!r}", line)
    offset = 0
    if m.group(2):
        offset = _parse_int(m.group(3), line)
        if m.group(2) == "-":
            offset = -offset
    return m.group(1), offset


def _parse_data(directive, rest, line):
    if directive == "zero":
        n = _parse_int(rest, line)
        if n <= 0:
            raise AsmSyntaxError(f".zero needs a positive size, got {n}", line)
        return Data("zero", n, line)
    if directive == "asciz":
        return Data("asciz", _parse_string(rest, line) + b"\0", line)
    args = _split_args(rest)
    if not args:
        raise AsmSyntaxError(f".{directive} needs at least one value", line)
    if directive == "byte":
        values = [_parse_int(a, line) for a in args]
        for v in values:
            if not 0 <= v <= 0xFF:
                raise AsmSyntaxError(f"byte value {v} out of range", line)
        return Data("byte", values, line)
    if directive == "long":
        values = [_parse_int(a, line) for a in args]
        for v in values:
            if not -(1 << 31) <= v < (1 << 32):
                raise AsmSyntaxError(f"long value {v} out of range", line)
        return Data("long", [v & 0xFFFFFFFF for v in values], line)
    # .quad: integers, label references, or label differences
    exprs = [_parse_quad_expr(a, line) for a in args]
    return Data("quad", exprs, line)


def _parse_string(text, line):
    text = text.strip()
    if len(text) < 2 or text[0] != '"' or text[-1] != '"':
        raise AsmSyntaxError(f".asciz needs a quoted string, got {text!r}", line)
    body = text[1:-1]
    out = bytearray()
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            i += 1
            if i >= len(body):
                raise AsmSyntaxError("dangling escape in string", line)
            esc = body[i]
            if esc == "x":
                out.append(int(body[i + 1:i + 3], 16))
                i += 2
            elif esc in _ESCAPES:
                out.append(_ESCAPES[esc])
            else:
                raise AsmSyntaxError(f"unknown escape \\{esc}", line)
        else:
            out.append(ord(ch))
        i += 1
    return bytes(out)


_ESCAPES = {"n": 10, "t": 9, "r": 13, "0": 0, "\\": 92, '"': 34}


def _parse_quad_expr(text, line):
    text = text.strip()
    try:
        return QuadInt(_parse_int(text, line))
    except AsmSyntaxError:
        pass
    # LABEL [+|- N] [- LABEL [+|- N]]
    m = re.fullmatch(
        rf"({_IDENT})\s*(?:\+\s*(\w+))?\s*(?:-\s*({_IDENT})\s*(?:\+\s*(\w+))?)?",
        text)
    if not m:
        raise AsmSyntaxError(f"malformed .quad expression {text!r}", line)
    a, aoff, b, boff = m.groups()
    aoff = _parse_int(aoff, line) if aoff else 0
    if b is None:
        return QuadRef(a, aoff)
    boff = _parse_int(boff, line) if boff else 0
    return QuadDiff(a, aoff, b, boff)


def _parse_operand(text, line):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise AsmSyntaxError(f"unterminated memory operand {text!r}", line)
        return _parse_mem(text[1:-1].strip(), line)
    if text.lower() in _REG_INFO:
        return Register(text.lower())
    try:
        return Immediate(_parse_int(text, line))
    except AsmSyntaxError:
        pass
    base, offset = _parse_label_expr(text, line)
    return LabelRef(base, offset)


@dataclass(frozen=True)
class _MemAst:
    base: str | None
    index: str | None
    scale: int
    const_terms: tuple[tuple[int, object], ...]  # (sign, int | slot-name)


def _parse_mem(body, line):
    terms = _split_terms(body, line)
    base = index = None
    scale = 1
    consts: list[tuple[int, object]] = []
    symbol_terms = [t for _, t in terms if isinstance(t, str) and t not in _REG_INFO
                    and "*" not in t]
    reg_terms = [t for _, t in terms
                 if isinstance(t, str) and (t in _REG_INFO or "*" in t)]

    # A lone non-register identifier means a RIP-relative label reference.
    if symbol_terms and not reg_terms:
        if len(symbol_terms) != 1:
            raise AsmSyntaxError(f"memory operand has several labels: {body!r}", line)
        sign = next(s for s, t in terms if t == symbol_terms[0])
        if sign < 0:
            raise AsmSyntaxError("label reference cannot be negated", line)
        offset = sum(s * t for s, t in terms if isinstance(t, int))
        return LabelMem(symbol_terms[0], offset)

    for sign, term in terms:
        if isinstance(term, int):
            consts.append((sign, term))
            continue
        if "*" in term:
            reg, _, factor = term.partition("*")
            reg = reg.strip().lower()
            if reg not in _REG_INFO:
                raise AsmSyntaxError(f"bad index register {reg!r}", line)
            if sign < 0:
                raise AsmSyntaxError("index term cannot be negated", line)
            if index is not None:
                raise AsmSyntaxError("two index terms in one operand", line)
            index = reg
            scale = _parse_int(factor, line)
            continue
        if term in _REG_INFO:
            if sign < 0:
                raise AsmSyntaxError("register term cannot be negated", line)
            if base is None:
                base = term
            elif index is None:
                index, scale = term, 1
            else:
                raise AsmSyntaxError("too many registers in memory operand", line)
            continue
        consts.append((sign, term))  # slot constant, resolved during assembly
    return _MemAst(base, index, scale, tuple(consts))


def _split_terms(body, line):
    """Split 'rbp + rcx*4 - 8 + s32' into signed terms."""
    terms = []
    sign = 1
    token = []

    def flush():
        if not token:
            return
        text = "".join(token).strip()
        if not text:
            raise AsmSyntaxError(f"empty term in memory operand", line)
        try:
            terms.append((sign, int(text, 0)))
        except ValueError:
            if text.lower() in _REG_INFO or "*" in text:
                terms.append((sign, text.lower()))
            else:
                terms.append((sign, text))  # slot constant or label
        token.clear()

    for ch in body:
        if ch in "+-":
            if token and "".join(token).strip():
                flush()
            else:
                token.clear()
            sign = 1 if ch == "+" else -1
        else:
            token.append(ch)
    flush()
    if not terms:
        raise AsmSyntaxError("empty memory operand", line)
    return terms


# --- assembly ---

@dataclass
class _FunctionInfo:
    name: str
    entry: int
    last_instr: int | None = None


def assemble(prog: AsmProgram, bases: dict[str, int] | None = None
             ) -> tuple[bytes, EllfMetadata]:
    """Assemble to an ELF with the `.ellf` metadata section injected."""
    raw, meta = assemble_image(prog, bases)
    return elfio.inject_section(elfio.read_elf(raw), ".ellf",
                                encode_metadata(meta)), meta


def assemble_image(prog: AsmProgram, bases: dict[str, int] | None = None
                   ) -> tuple[bytes, EllfMetadata]:
    """Assemble to a plain ELF plus the layout-derived metadata."""
    bases = bases or {}
    labels: dict[int | str, int] = {}
    slots: dict[str, dict[str, int]] = {}
    slot_offsets: dict[str, set[int]] = {}

    for section in prog.sections:
        if section.base is None:
            if section.name not in bases:
                raise AsmSyntaxError(f"section {section.name} has no base address")
            section.base = bases[section.name]
        for item in section.items:
            if isinstance(item, SlotDef):
                table = slots.setdefault(item.function, {})
                if item.name in table and table[item.name] != item.offset:
                    raise AsmSyntaxError(
                        f"slot {item.name!r} redefined with a different offset",
                        item.line)
                table[item.name] = item.offset
                slot_offsets.setdefault(item.function, set()).add(item.offset)

    # Pass 1: layout.
    sizes: dict[str, int] = {}
    functions: list[_FunctionInfo] = []
    set_labels: list[SetLabel] = []
    for section in prog.sections:
        addr = section.base
        current_func = None
        for item in section.items:
            if isinstance(item, (Label, FuncBegin)):
                labels[item.name] = addr
                if isinstance(item, FuncBegin):
                    current_func = _FunctionInfo(item.name, addr)
                    functions.append(current_func)
            elif isinstance(item, FuncEnd):
                if current_func is not None and current_func.last_instr is None:
                    raise AsmSyntaxError(
                        f"function {current_func.name} has no instructions", item.line)
                current_func = None
            elif isinstance(item, SetLabel):
                set_labels.append(item)
            elif isinstance(item, SlotDef):
                pass
            elif isinstance(item, Data):
                if section.nobits and item.directive != "zero":
                    raise AsmSyntaxError(
                        f".{item.directive} not allowed in the zero-fill section "
                        f"{section.name}", item.line)
                addr += _data_size(item)
            elif isinstance(item, Instr):
                if section.nobits:
                    raise AsmSyntaxError(
                        f"instructions not allowed in the zero-fill section "
                        f"{section.name}", item.line)
                length = _instr_length(item, slots, current_func)
                if current_func is not None:
                    current_func.last_instr = addr
                addr += length
        sizes[section.name] = addr - section.base

    for item in sorted(set_labels, key=lambda s: s.line):
        if item.base not in labels:
            raise UndefinedLabel(f"label {item.base!r} is not defined", item.line)
        labels[item.name] = labels[item.base] + item.offset

    spans = [(s.base, s.base + max(sizes[s.name], 1), s.name) for s in prog.sections]
    for i, (start_a, end_a, name_a) in enumerate(spans):
        for start_b, end_b, name_b in spans[i + 1:]:
            if start_a < end_b and start_b < end_a:
                raise SectionOverlap(f"sections {name_a} and {name_b} overlap")

    # Pass 2: encode and collect metadata.
    regions: list[InstructionRegion] = []
    pointers: list = []
    text_records: set[TextRecord] = set()
    instr_starts: set[int] = set()
    section_blobs: list[tuple[AsmSection, bytes]] = []
    label_sites: dict[str, list[int]] = {}

    for section in prog.sections:
        blob = bytearray()
        addr = section.base
        run_start = None
        run_count = 0

        def close_run():
            nonlocal run_start, run_count
            if run_start is not None:
                regions.append(InstructionRegion(run_start, run_count))
                run_start = None
                run_count = 0

        for item in section.items:
            if isinstance(item, (Label, FuncBegin)):
                label_sites.setdefault(section.name, []).append(addr)
            if isinstance(item, Instr):
                encoded, recs = _encode_instr(item, addr, labels, slots, prog,
                                              section)
                if run_start is None:
                    run_start = addr
                run_count += 1
                instr_starts.add(addr)
                pointers.extend(recs)
                blob += encoded
                addr += len(encoded)
            elif isinstance(item, Data):
                close_run()
                encoded, recs = _encode_data(item, addr, labels, section)
                pointers.extend(recs)
                blob += encoded
                addr += _data_size(item)
        close_run()
        section_blobs.append((section, bytes(blob)))

    # Text records: function starts/ends plus labels on instruction starts.
    for fn in functions:
        text_records.add(TextRecord(fn.entry, FUNCTION_START))
        text_records.add(TextRecord(fn.last_instr, FUNCTION_END))
    func_entries = {fn.entry for fn in functions}
    for section in prog.sections:
        if not section.execable:
            continue
        for name, site in _labels_in_section(prog, section, labels).items():
            if site in func_entries or site not in instr_starts:
                continue
            text_records.add(TextRecord(site, BASIC_BLOCK))

    # Data records from labeled objects in data sections.
    data_records: list[DataRecord] = []
    for section in prog.sections:
        if section.execable:
            continue
        end = section.base + sizes[section.name]
        sites = sorted(s for s in set(_labels_in_section(prog, section, labels).values())
                       if section.base <= s < end)
        for i, site in enumerate(sites):
            limit = sites[i + 1] if i + 1 < len(sites) else end
            if limit > site:
                data_records.append(DataRecord(site, limit - site))

    # Stack records from slot definitions.
    stack_records = []
    for func_name, offsets in sorted(slot_offsets.items(),
                                     key=lambda kv: labels.get(kv[0], 0)):
        if func_name not in labels or func_name not in {f.name for f in functions}:
            raise UndefinedLabel(f"slot defined for unknown function {func_name!r}")
        stack_records.append(StackRecord(labels[func_name], tuple(sorted(offsets))))

    meta = EllfMetadata(
        instruction_regions=tuple(sorted(regions, key=lambda r: r.start)),
        pointers=tuple(sorted(pointers, key=_pointer_sort_key)),
        text=tuple(sorted(text_records, key=_text_sort_key)),
        stack=tuple(stack_records),
        data=tuple(sorted(data_records, key=lambda r: r.addr)),
    )
    check_invariants(meta)

    new_sections = []
    first_exec_base = None
    for section, blob in section_blobs:
        if section.execable and first_exec_base is None:
            first_exec_base = section.base
        flags = elfio.SHF_ALLOC
        if section.execable:
            flags |= elfio.SHF_EXECINSTR
        elif section.writable:
            flags |= elfio.SHF_WRITE
        sh_type = elfio.SHT_NOBITS if section.nobits else elfio.SHT_PROGBITS
        new_sections.append(elfio.NewSection(
            name=section.name, vaddr=section.base,
            data=b"" if section.nobits else blob,
            sh_type=sh_type, sh_flags=flags,
            size=sizes[section.name]))
    elf = elfio.build_elf(new_sections, entry_point=first_exec_base or 0)
    return elf, meta


def _labels_in_section(prog, section, labels):
    found = {}
    for item in section.items:
        if isinstance(item, (Label, FuncBegin)):
            found[item.name] = labels[item.name]
        elif isinstance(item, SetLabel):
            found[item.name] = labels[item.name]
    return found


def _data_size(item: Data) -> int:
    if item.directive == "byte":
        return len(item.payload)
    if item.directive == "long":
        return 4 * len(item.payload)
    if item.directive == "quad":
        return 8 * len(item.payload)
    if item.directive == "zero":
        return item.payload
    return len(item.payload)  # asciz bytes


def _resolve_mem(ast: _MemAst, slots, current_func, line):
    disp = 0
    for sign, term in ast.const_terms:
        if isinstance(term, int):
            disp += sign * term
        else:
            if current_func is None or term not in slots.get(current_func.name, {}):
                raise UndefinedLabel(
                    f"{term!r} is not a slot of the enclosing function", line)
            disp += sign * slots[current_func.name][term]
    return MemRef(base=ast.base, index=ast.index, scale=ast.scale, disp=disp)


def _instr_length(item: Instr, slots, current_func) -> int:
    ops = []
    for op in item.operands:
        if isinstance(op, LabelRef):
            if item.mnemonic in _BRANCH_MNEMONICS:
                from .isa import _PCREL_LENGTH
                return _PCREL_LENGTH[item.mnemonic]
            ops.append(Immediate(0, width=64))  # label immediates use movabs
        elif isinstance(op, LabelMem):
            ops.append(MemRef(rip_relative=True, disp=0))
        elif isinstance(op, _MemAst):
            ops.append(_resolve_mem(op, slots, current_func, item.line))
        else:
            ops.append(op)
    try:
        return len(encode_one(item.mnemonic, ops, 0))
    except EllfError as exc:
        raise AsmSyntaxError(str(exc), item.line) from exc


def _encode_instr(item: Instr, addr, labels, slots, prog, section):
    current = _enclosing_function(prog, section, item)
    records = []
    ops = []
    rip_slots = []  # operand indexes whose RIP displacement still needs the target
    for i, op in enumerate(item.operands):
        if isinstance(op, LabelRef):
            target = _label_value(labels, op.name, item.line) + op.offset
            if item.mnemonic in _BRANCH_MNEMONICS:
                ops.append(PcRel(target & U64))
            else:
                ops.append(Immediate(target & U64, width=64))
                records.append(("op", i, target & U64))
        elif isinstance(op, LabelMem):
            target = _label_value(labels, op.name, item.line) + op.offset
            ops.append(MemRef(rip_relative=True, disp=0))
            rip_slots.append((i, target & U64))
            records.append(("op", i, target & U64))
        elif isinstance(op, _MemAst):
            ops.append(_resolve_mem(op, slots, current, item.line))
        else:
            ops.append(op)
    try:
        encoded = encode_one(item.mnemonic, ops, addr)
        if rip_slots:
            length = len(encoded)
            for i, target in rip_slots:
                rel = target - (addr + length)
                if not -(1 << 31) <= rel < (1 << 31):
                    raise RangeOverflow(
                        f"RIP-relative target 0x{target:x} out of range", item.line)
                ops[i] = MemRef(rip_relative=True, disp=rel)
            encoded = encode_one(item.mnemonic, ops, addr)
            assert len(encoded) == length
    except AsmSyntaxError:
        raise
    except RangeOverflow:
        raise
    except EllfError as exc:
        raise AsmSyntaxError(str(exc), item.line) from exc
    return encoded, [OperandPointer(addr, i, t) for kind, i, t in records]


def _enclosing_function(prog, section, item):
    current = None
    for it in section.items:
        if isinstance(it, FuncBegin):
            current = _FunctionInfo(it.name, 0)
        elif isinstance(it, FuncEnd):
            current = None
        if it is item:
            return current
    return current


def _label_value(labels, name, line):
    if name not in labels:
        raise UndefinedLabel(f"label {name!r} is not defined", line)
    return labels[name]


def _encode_data(item: Data, addr, labels, section):
    records = []
    if item.directive == "byte":
        return bytes(item.payload), records
    if item.directive == "long":
        out = bytearray()
        for v in item.payload:
            out += v.to_bytes(4, "little")
        return bytes(out), records
    if item.directive == "zero":
        return bytes(item.payload), records
    if item.directive == "asciz":
        return item.payload, records
    out = bytearray()
    cell = addr
    for expr in item.payload:
        if isinstance(expr, QuadInt):
            out += (expr.value & U64).to_bytes(8, "little")
        elif isinstance(expr, QuadRef):
            target = (_label_value(labels, expr.name, item.line) + expr.offset) & U64
            out += target.to_bytes(8, "little")
            records.append(DataPointer(cell, target))
        else:
            minuend = (_label_value(labels, expr.minuend, item.line)
                       + expr.minuend_offset) & U64
            subtrahend = (_label_value(labels, expr.subtrahend, item.line)
                          + expr.subtrahend_offset) & U64
            out += ((minuend - subtrahend) & U64).to_bytes(8, "little")
            records.append(DataDiff(cell, minuend, subtrahend))
        cell += 8
    return bytes(out), records


# --- round-trip oracle ---

@dataclass
class RoundtripReport:
    bytes_identical: bool = False
    metadata_fixpoint: bool = False
    text_fixpoint: bool = False
    error: str | None = None

    @property
    def ok(self):
        return (self.bytes_identical and self.metadata_fixpoint
                and self.text_fixpoint and self.error is None)

    def lines(self):
        def mark(flag):
            return "PASS" if flag else "FAIL"
        out = [
            f"byte identity:      {mark(self.bytes_identical)}",
            f"metadata fixpoint:  {mark(self.metadata_fixpoint)}",
            f"text fixpoint:      {mark(self.text_fixpoint)}",
        ]
        if self.error:
            out.append(f"error: {self.error}")
        return out


def roundtrip_check(source_text: str) -> RoundtripReport:
    """Assemble, lift, re-emit, re-assemble; compare bytes, metadata, text."""
    from .lifter import emit_assembly, lift

    report = RoundtripReport()
    try:
        prog = parse_assembly(source_text)
        elf1, meta1 = assemble(prog)
        img1 = elfio.read_elf(elf1)
        text1 = emit_assembly(lift(img1, meta1, mode="strict"))
        elf2, meta2 = assemble(parse_assembly(text1))
        img2 = elfio.read_elf(elf2)

        report.bytes_identical = elfio.load_image(img1) == elfio.load_image(img2)
        report.metadata_fixpoint = meta1 == meta2
        text2 = emit_assembly(lift(img2, meta2, mode="strict"))
        report.text_fixpoint = text1 == text2
    except EllfError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
    return report
