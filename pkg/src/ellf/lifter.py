"""Metadata-driven lifting: decode, symbolize, recover CFGs, emit assembly.

The pipeline decodes exactly the instruction regions, replaces pointer
operands and pointer-holding data cells with labels, attaches function and
block structure, rewrites stack-frame accesses through named slot constants,
partitions data sections into variables, and renders deterministic text that
the bundled assembler accepts back. The text, stack and data passes write to
disjoint state, so they can run in any order with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .elfio import ElfImage, load_image
from .errors import (
    DanglingTextRecord,
    Diagnostic,
    LiftError,
    MetadataMismatch,
    NotAPointerPosition,
    OperandIndexOutOfRange,
    PointerStraddle,
    RegionDecodeError,
    RegionOverlap,
    TargetOutsideFunction,
    WARNING,
)
from .isa import (
    CALL,
    CONDITIONAL_JUMP,
    HALT,
    INDIRECT_JUMP,
    JUMP,
    RETURN,
    Immediate,
    Instruction,
    MemRef,
    PcRel,
    Register,
    SymbolRef,
    decode_one,
    instruction_class,
)
from .meta import (
    BASIC_BLOCK,
    DataDiff,
    DataPointer,
    EllfMetadata,
    FUNCTION_END,
    FUNCTION_START,
    OperandPointer,
    validate_metadata,
)

U64 = (1 << 64) - 1

STRICT = "strict"
LENIENT = "lenient"

POINTER_WIDTH = 8


# --- stack-slot operands (render through named assembler constants) ---

@dataclass(frozen=True)
class SlotMemRef:
    """A stack access expressed against a frame slot: disp = bias - slot + interior."""
    base: str
    slot_name: str
    slot_offset: int
    bias: int
    interior: int
    index: str | None = None
    scale: int = 1

    @property
    def disp(self):
        return self.bias - self.slot_offset + self.interior


# --- data variables ---

@dataclass(frozen=True)
class RawBytes:
    data: bytes


@dataclass(frozen=True)
class PointerPayload:
    label: str
    offset: int


@dataclass(frozen=True)
class DiffPayload:
    minuend_label: str
    minuend_offset: int
    subtrahend_label: str
    subtrahend_offset: int


@dataclass(frozen=True)
class Zeroes:
    size: int


@dataclass(frozen=True)
class Variable:
    address: int
    size: int
    label: str | None
    payload: tuple


# --- control flow graphs ---

@dataclass(frozen=True)
class CfgBlock:
    start: int
    end: int  # address of the block's last instruction
    successors: tuple[int, ...]


@dataclass(frozen=True)
class Cfg:
    function_entry: int
    blocks: tuple[CfgBlock, ...]


# --- label map ---

def _section_label(name: str) -> str:
    return "S_" + "".join(ch if ch.isalnum() else "_" for ch in name).strip("_")


@dataclass
class LabelMap:
    functions: dict[int, str] = field(default_factory=dict)
    blocks: dict[int, str] = field(default_factory=dict)
    bb_backed: set[int] = field(default_factory=set)
    data_labels: dict[int, str] = field(default_factory=dict)
    record_backed: set[int] = field(default_factory=set)
    text_floors: dict[int, str] = field(default_factory=dict)
    data_floors: dict[int, str] = field(default_factory=dict)
    slots: dict[int, tuple[tuple[int, str], ...]] = field(default_factory=dict)
    used: set[str] = field(default_factory=set)

    def _entries(self, namespace: str) -> list[tuple[int, str]]:
        if namespace == "text":
            merged = dict(self.text_floors)
            merged.update(self.blocks)
            merged.update(self.functions)
        else:
            merged = dict(self.data_floors)
            merged.update(self.data_labels)
        return sorted(merged.items())

    def lookup(self, addr: int, namespace: str) -> tuple[str, int] | None:
        """Greatest entry at or below ``addr``, with the non-negative offset."""
        best = None
        for entry_addr, name in self._entries(namespace):
            if entry_addr > addr:
                break
            best = (name, addr - entry_addr)
        return best

    def use(self, name: str) -> str:
        self.used.add(name)
        return name

    def all_names(self):
        for mapping in (self.functions, self.blocks, self.data_labels,
                        self.text_floors, self.data_floors):
            yield from mapping.values()


def generate_labels(meta: EllfMetadata, image: ElfImage) -> LabelMap:
    """Deterministic, address-derived names for every oracle entry.

    Block labels are also minted at in-text addresses that only pointer or
    diff records name, so jump tables and code pointers always resolve to an
    exact label; such extra labels are emitted only when referenced. When a
    table is absent, section-start labels keep every lookup resolvable at
    section granularity.
    """
    lm = LabelMap()

    def exec_section(addr):
        for sec in image.sections:
            if sec.alloc and sec.vaddr <= addr < sec.vaddr + sec.size:
                return sec.exec
        return None

    for rec in meta.text:
        if rec.kind == FUNCTION_START:
            lm.functions[rec.addr] = f"F_{rec.addr:x}"

    block_candidates = set()
    for rec in meta.text:
        if rec.kind == BASIC_BLOCK:
            block_candidates.add(rec.addr)
            lm.bb_backed.add(rec.addr)
        elif rec.kind == FUNCTION_END:
            block_candidates.add(rec.addr)

    data_candidates = set()

    def classify(addr):
        kind = exec_section(addr)
        if kind is True:
            block_candidates.add(addr)
        elif kind is False:
            data_candidates.add(addr)

    for rec in meta.pointers:
        if isinstance(rec, OperandPointer) or isinstance(rec, DataPointer):
            classify(rec.target)
        else:
            classify(rec.minuend)
            classify(rec.subtrahend)

    block_candidates -= set(lm.functions)
    for k, addr in enumerate(sorted(block_candidates), start=1):
        lm.blocks[addr] = f".Lb{k}"

    for rec in meta.data:
        lm.data_labels[rec.addr] = f"D_{rec.addr:x}"
        lm.record_backed.add(rec.addr)
    covered = [(r.addr, r.addr + r.size) for r in meta.data]
    for addr in sorted(data_candidates):
        if addr in lm.data_labels:
            continue
        if any(start <= addr < end for start, end in covered):
            continue  # interior of a record: rendered as label + offset
        lm.data_labels[addr] = f"D_{addr:x}"

    for sec in image.sections:
        if not sec.alloc:
            continue
        floor = (lm.text_floors if sec.exec else lm.data_floors)
        floor[sec.vaddr] = _section_label(sec.name)

    for rec in meta.stack:
        lm.slots[rec.function_entry] = tuple((off, f"s{off}") for off in rec.offsets)

    return lm


# --- step I: decoding by the instruction oracle ---

def lift_unsymbolized(image, regions) -> dict[int, Instruction]:
    """Decode exactly ``count`` instructions from each region start."""
    instrs: dict[int, Instruction] = {}
    prev_end = None
    prev_start = None
    for region in regions:
        if prev_end is not None and region.start < prev_end:
            raise RegionOverlap(
                f"region at 0x{region.start:x} begins inside the decoded extent of "
                f"the region at 0x{prev_start:x}")
        addr = region.start
        for _ in range(region.count):
            try:
                ins = decode_one(image, addr)
            except LiftError:
                raise
            except Exception as exc:
                raise RegionDecodeError(
                    f"region at 0x{region.start:x}: {exc}") from exc
            instrs[addr] = ins
            addr += ins.length
        prev_end = addr
        prev_start = region.start
    return instrs


# --- shared lifting state ---

@dataclass
class _LiftState:
    image: ElfImage
    byte_map: dict[int, int]
    meta: EllfMetadata
    mode: str
    labels: LabelMap
    instrs: dict[int, Instruction]
    diagnostics: list[Diagnostic] = field(default_factory=list)
    earmarks: dict[int, tuple] = field(default_factory=dict)
    pcrel_targets: dict[int, int] = field(default_factory=dict)
    func_open: dict[int, str] = field(default_factory=dict)    # addr -> function label
    func_close: set[int] = field(default_factory=set)
    block_marks: dict[int, str] = field(default_factory=dict)  # addr -> label line
    slot_lines: dict[int, tuple[str, ...]] = field(default_factory=dict)
    variables: list[Variable] = field(default_factory=list)

    def warn(self, kind, message, addr=None):
        self.diagnostics.append(Diagnostic(kind, message, addr, WARNING))


def _target_namespace(state, addr):
    for sec in state.image.sections:
        if sec.alloc and sec.vaddr <= addr < sec.vaddr + sec.size:
            return "text" if sec.exec else "data"
    return None


def _symbol_for(state, addr):
    ns = _target_namespace(state, addr)
    if ns is None:
        return None
    found = state.labels.lookup(addr, ns)
    if found is None:
        return None
    name, offset = found
    state.labels.use(name)
    return SymbolRef(name, offset)


# --- step II: coarse symbolization ---

def coarse_symbolize(state: _LiftState) -> None:
    """Replace recorded pointer operands with labels, earmark data pointers."""
    for rec in state.meta.pointers:
        if isinstance(rec, DataPointer):
            state.earmarks[rec.addr] = ("ptr", rec.target)
            continue
        if isinstance(rec, DataDiff):
            state.earmarks[rec.addr] = ("diff", rec.minuend, rec.subtrahend)
            continue
        ins = state.instrs.get(rec.instr_addr)
        if ins is None:
            msg = (f"operand pointer at 0x{rec.instr_addr:x} does not name a "
                   f"decoded instruction")
            if state.mode == STRICT:
                raise NotAPointerPosition(msg)
            state.warn("alignment", msg, rec.instr_addr)
            continue
        if rec.operand_index >= len(ins.operands):
            raise OperandIndexOutOfRange(
                f"operand index {rec.operand_index} out of range for the "
                f"instruction at 0x{rec.instr_addr:x}")
        op = ins.operands[rec.operand_index]
        sym = _symbol_for(state, rec.target)
        if sym is None:
            state.warn("range", f"pointer target 0x{rec.target:x} resolves to no "
                                f"label", rec.instr_addr)
            continue
        if isinstance(op, Immediate):
            if (op.value & U64) != rec.target:
                msg = (f"instruction at 0x{rec.instr_addr:x}: stored immediate "
                       f"0x{op.value & U64:x} disagrees with recorded target "
                       f"0x{rec.target:x}")
                if state.mode == STRICT:
                    raise MetadataMismatch(msg)
                state.warn("pointer", msg, rec.instr_addr)
            new_op = sym
        elif isinstance(op, MemRef) and op.rip_relative:
            computed = (ins.address + ins.length + op.disp) & U64
            if computed != rec.target:
                msg = (f"instruction at 0x{rec.instr_addr:x}: RIP-relative target "
                       f"0x{computed:x} disagrees with recorded target "
                       f"0x{rec.target:x}")
                if state.mode == STRICT:
                    raise MetadataMismatch(msg)
                state.warn("pointer", msg, rec.instr_addr)
            new_op = replace(op, label=sym.label, label_offset=sym.offset)
        else:
            msg = (f"operand {rec.operand_index} of the instruction at "
                   f"0x{rec.instr_addr:x} has no immediate or displacement field")
            if state.mode == STRICT:
                raise NotAPointerPosition(msg)
            state.warn("pointer", msg, rec.instr_addr)
            continue
        operands = list(ins.operands)
        operands[rec.operand_index] = new_op
        state.instrs[rec.instr_addr] = replace(ins, operands=tuple(operands))

    # RIP-relative operands are position-derived pointers even without a
    # record; resolving them keeps sections movable when metadata is partial.
    for addr in sorted(state.instrs):
        ins = state.instrs[addr]
        changed = False
        operands = list(ins.operands)
        for i, op in enumerate(operands):
            if isinstance(op, MemRef) and op.rip_relative and op.label is None:
                target = (ins.address + ins.length + op.disp) & U64
                sym = _symbol_for(state, target)
                if sym is None:
                    state.warn("range", f"RIP-relative target 0x{target:x} resolves "
                                        f"to no label", addr)
                    continue
                operands[i] = replace(op, label=sym.label, label_offset=sym.offset)
                changed = True
        if changed:
            state.instrs[addr] = replace(ins, operands=tuple(operands))


# --- function extents (shared by the fine-grained steps) ---

def _function_ranges(state) -> list[tuple[int, int]]:
    """(entry, end_exclusive) per function, bounded by the next function."""
    starts = sorted(a for a in
                    (r.addr for r in state.meta.text if r.kind == FUNCTION_START))
    ranges = []
    limit = 1 << 64
    for i, entry in enumerate(starts):
        end = starts[i + 1] if i + 1 < len(starts) else limit
        ranges.append((entry, end))
    return ranges


def _function_instrs(state, entry, end):
    return [a for a in sorted(state.instrs) if entry <= a < end]


# --- step III: text symbolization ---

def text_symbolize(state: _LiftState) -> None:
    for rec in state.meta.text:
        if rec.addr not in state.instrs:
            msg = (f"text record at 0x{rec.addr:x} ({rec.kind}) is not a decoded "
                   f"instruction start")
            if state.mode == STRICT:
                raise DanglingTextRecord(msg)
            state.warn("range", msg, rec.addr)
            continue
        if rec.kind == FUNCTION_START:
            state.func_open[rec.addr] = state.labels.functions[rec.addr]
        elif rec.kind == FUNCTION_END:
            state.func_close.add(rec.addr)
        elif rec.addr in state.labels.blocks:
            state.block_marks[rec.addr] = state.labels.blocks[rec.addr]

    for addr in sorted(state.instrs):
        ins = state.instrs[addr]
        changed = False
        operands = list(ins.operands)
        for i, op in enumerate(operands):
            if isinstance(op, PcRel):
                state.pcrel_targets[addr] = op.target
                sym = _symbol_for(state, op.target)
                if sym is None:
                    state.warn("range", f"branch target 0x{op.target:x} resolves to "
                                        f"no label", addr)
                    continue
                operands[i] = sym
                changed = True
        if changed:
            state.instrs[addr] = replace(ins, operands=tuple(operands))


# --- step IV: stack symbolization ---

def stack_symbolize(state: _LiftState) -> None:
    slot_table = {rec.function_entry: rec.offsets for rec in state.meta.stack}
    for entry, end in _function_ranges(state):
        offsets = slot_table.get(entry)
        if not offsets:
            continue
        names = dict(state.labels.slots[entry])
        func_label = state.labels.functions.get(entry, f"F_{entry:x}")
        state.slot_lines[entry] = tuple(
            f".slot {func_label}, s{off}, {off}" for off in offsets)

        sp_delta: int | None = 0
        rbp_delta: int | None = None
        for addr in _function_instrs(state, entry, end):
            ins = state.instrs[addr]
            rewritten = _rewrite_stack_operands(state, ins, offsets, names,
                                                sp_delta, rbp_delta)
            if rewritten is not None:
                state.instrs[addr] = rewritten
            sp_delta, rbp_delta = _apply_sp_effect(ins, sp_delta, rbp_delta)


def _rewrite_stack_operands(state, ins, offsets, names, sp_delta, rbp_delta):
    operands = list(ins.operands)
    changed = False
    for i, op in enumerate(operands):
        if not isinstance(op, MemRef) or op.rip_relative or op.label:
            continue
        if op.base == "rbp":
            anchor = rbp_delta
        elif op.base == "rsp":
            anchor = sp_delta
        else:
            continue
        if anchor is None:
            state.warn("stack", f"stack access at 0x{ins.address:x} has an "
                                f"untracked frame anchor", ins.address)
            continue
        depth = -(anchor + op.disp)
        if depth <= 0:
            continue  # at or above the entry stack pointer: not a local slot
        slot = min((off for off in offsets if off >= depth), default=None)
        if slot is None:
            state.warn("stack", f"stack access at 0x{ins.address:x} (depth {depth}) "
                                f"is outside every frame slot", ins.address)
            continue
        operands[i] = SlotMemRef(base=op.base, slot_name=names[slot],
                                 slot_offset=slot, bias=-anchor,
                                 interior=slot - depth,
                                 index=op.index, scale=op.scale)
        changed = True
    return replace(ins, operands=tuple(operands)) if changed else None


def _apply_sp_effect(ins, sp_delta, rbp_delta):
    m = ins.mnemonic
    ops = ins.operands

    def is_reg(op, name):
        return isinstance(op, Register) and op.name == name

    if m == "push":
        return (None if sp_delta is None else sp_delta - 8), rbp_delta
    if m == "pop":
        new_sp = None if sp_delta is None else sp_delta + 8
        if is_reg(ops[0], "rbp"):
            return new_sp, None
        if is_reg(ops[0], "rsp"):
            return None, rbp_delta
        return new_sp, rbp_delta
    if m == "mov" and len(ops) == 2:
        if is_reg(ops[0], "rbp"):
            return sp_delta, (sp_delta if is_reg(ops[1], "rsp") else None)
        if is_reg(ops[0], "rsp"):
            return (rbp_delta if is_reg(ops[1], "rbp") else None), rbp_delta
    if m in ("add", "sub") and len(ops) == 2 and is_reg(ops[0], "rsp"):
        if isinstance(ops[1], Immediate) and sp_delta is not None:
            step = ops[1].value if m == "add" else -ops[1].value
            return sp_delta + step, rbp_delta
        return None, rbp_delta
    if m in ("add", "sub", "inc", "dec", "lea", "movsxd", "imul", "xor",
             "and", "or") and ops and is_reg(ops[0], "rbp"):
        return sp_delta, None
    if m in ("add", "sub", "inc", "dec", "lea", "movsxd", "imul", "xor",
             "and", "or") and ops and is_reg(ops[0], "rsp"):
        return None, rbp_delta
    if m == "leave":
        new_sp = None if rbp_delta is None else rbp_delta + 8
        return new_sp, None
    return sp_delta, rbp_delta


# --- step V: data symbolization ---

def data_symbolize(state: _LiftState) -> None:
    variables: list[Variable] = []
    for sec in state.image.sections:
        if not sec.alloc or sec.exec or sec.size == 0:
            continue
        records = [r for r in state.meta.data
                   if sec.vaddr <= r.addr and r.addr + r.size <= sec.vaddr + sec.size]
        sec_end = sec.vaddr + sec.size
        spans: list[tuple[int, int, str | None]] = []
        if records:
            if records[0].addr > sec.vaddr:
                spans.append((sec.vaddr, records[0].addr, None))
            for i, rec in enumerate(records):
                end = records[i + 1].addr if i + 1 < len(records) else sec_end
                spans.append((rec.addr, end, state.labels.data_labels[rec.addr]))
        elif sec.size:
            spans.append((sec.vaddr, sec_end, None))

        nobits = sec.kind == "nobits"
        for start, end, label in spans:
            payload = _build_payload(state, sec, start, end, nobits)
            variables.append(Variable(address=start, size=end - start,
                                      label=label, payload=payload))
    state.variables = variables


def _build_payload(state, sec, start, end, nobits):
    if nobits:
        for addr in state.earmarks:
            if start <= addr < end:
                state.warn("pointer", f"pointer record at 0x{addr:x} lies in the "
                                      f"zero-initialized section {sec.name}", addr)
        return (Zeroes(end - start),)

    marks = sorted(a for a in state.earmarks if start <= a < end)
    parts = []
    pos = start
    for addr in marks:
        if addr < pos:
            msg = (f"pointer payload at 0x{addr:x} overlaps the pointer payload "
                   f"ending at 0x{pos:x}")
            if state.mode == STRICT:
                raise PointerStraddle(msg)
            state.warn("straddle", msg, addr)
            continue
        if addr + POINTER_WIDTH > end:
            msg = (f"pointer payload at 0x{addr:x} crosses the data object "
                   f"boundary at 0x{end:x}")
            if state.mode == STRICT:
                raise PointerStraddle(msg)
            state.warn("straddle", msg, addr)
            continue
        if addr > pos:
            parts.append(RawBytes(_raw(state, pos, addr)))
        parts.append(_pointer_part(state, addr))
        pos = addr + POINTER_WIDTH
    if pos < end:
        parts.append(RawBytes(_raw(state, pos, end)))
    return tuple(parts)


def _raw(state, start, end):
    return bytes(state.byte_map[a] for a in range(start, end))


def _pointer_part(state, addr):
    mark = state.earmarks[addr]
    stored = int.from_bytes(_raw(state, addr, addr + POINTER_WIDTH), "little")
    if mark[0] == "ptr":
        target = mark[1]
        if stored != target:
            msg = (f"data cell at 0x{addr:x} stores 0x{stored:x} but the record "
                   f"names 0x{target:x}")
            if state.mode == STRICT:
                raise MetadataMismatch(msg)
            state.warn("pointer", msg, addr)
        sym = _symbol_for(state, target)
        if sym is None:
            return RawBytes(_raw(state, addr, addr + POINTER_WIDTH))
        return PointerPayload(sym.label, sym.offset)
    _, minuend, subtrahend = mark
    if stored != (minuend - subtrahend) & U64:
        msg = (f"data cell at 0x{addr:x} stores 0x{stored:x} but the recorded "
               f"difference is 0x{(minuend - subtrahend) & U64:x}")
        if state.mode == STRICT:
            raise MetadataMismatch(msg)
        state.warn("pointer", msg, addr)
    msym = _symbol_for(state, minuend)
    ssym = _symbol_for(state, subtrahend)
    if msym is None or ssym is None:
        return RawBytes(_raw(state, addr, addr + POINTER_WIDTH))
    return DiffPayload(msym.label, msym.offset, ssym.label, ssym.offset)


# --- control flow graphs ---

def build_cfg(state: _LiftState) -> tuple[Cfg, ...]:
    tables: dict[int, list[int]] = {}
    for rec in state.meta.pointers:
        if isinstance(rec, DataDiff):
            tables.setdefault(rec.subtrahend, []).append(rec.minuend)

    block_addrs = {r.addr for r in state.meta.text if r.kind == BASIC_BLOCK}
    fe_addrs = {r.addr for r in state.meta.text if r.kind == FUNCTION_END}
    all_block_starts = set(state.labels.functions) | block_addrs

    cfgs = []
    for entry, limit in _function_ranges(state):
        addrs = _function_instrs(state, entry, limit)
        if not addrs:
            continue
        starts = sorted({entry} | {a for a in block_addrs if entry < a < limit})
        referenced = _referenced_labels(state, addrs)
        reachable_minuends: set[int] = set()
        for sub_addr, minuends in tables.items():
            found = state.labels.lookup(sub_addr, "data")
            if found and found[1] == 0 and found[0] in referenced:
                reachable_minuends.update(minuends)

        blocks = []
        for bi, bstart in enumerate(starts):
            bend_limit = starts[bi + 1] if bi + 1 < len(starts) else limit
            members = [a for a in addrs if bstart <= a < bend_limit]
            if not members:
                continue
            last = members[-1]
            ins = state.instrs[last]
            successors = _successors(state, ins, last, bi, starts, entry, limit,
                                     fe_addrs, reachable_minuends, all_block_starts)
            blocks.append(CfgBlock(start=bstart, end=last,
                                   successors=tuple(sorted(successors))))
        cfgs.append(Cfg(function_entry=entry, blocks=tuple(blocks)))
    return tuple(cfgs)


def _referenced_labels(state, addrs) -> set[str]:
    names = set()
    for addr in addrs:
        for op in state.instrs[addr].operands:
            if isinstance(op, SymbolRef):
                names.add(op.label)
            elif isinstance(op, MemRef) and op.label:
                names.add(op.label)
    return names


def _successors(state, ins, last, bi, starts, entry, limit, fe_addrs,
                reachable_minuends, all_block_starts):
    if last in fe_addrs:
        return []
    # Direct branches were rewritten to SymbolRefs during text symbolization;
    # the original PC-relative targets were captured before the rewrite.
    target = state.pcrel_targets.get(last)
    klass = instruction_class(ins)
    kind = klass.kind
    if target is None and klass.target is not None:
        target = klass.target
    if kind == INDIRECT_JUMP and target is not None:
        kind = JUMP
    next_start = starts[bi + 1] if bi + 1 < len(starts) else None

    if kind == JUMP:
        return _jump_targets(state, target, entry, limit, starts, all_block_starts)
    if kind == CONDITIONAL_JUMP:
        succ = _jump_targets(state, target, entry, limit, starts, all_block_starts)
        if next_start is not None:
            succ = sorted(set(succ) | {next_start})
        return succ
    if kind == INDIRECT_JUMP:
        inside = [m for m in reachable_minuends if m in starts]
        if inside:
            return inside
        state.warn("cfg", f"indirect jump at 0x{last:x} has no reachable jump "
                          f"table; assuming all blocks", last)
        return list(starts)
    if kind in (RETURN, HALT):
        return []
    # calls and plain fallthrough continue at the next block
    if next_start is not None:
        return [next_start]
    return []


def _jump_targets(state, target, entry, limit, starts, all_block_starts):
    if target is None:
        return []
    if entry <= target < limit and target in starts:
        return [target]
    if target in all_block_starts:
        return []  # a tail jump into another function leaves this one
    msg = f"branch target 0x{target:x} is not a block start in any function"
    if state.mode == STRICT:
        raise TargetOutsideFunction(msg)
    state.warn("cfg", msg, target)
    return []


# --- lifted program and emission ---

@dataclass
class LiftedProgram:
    sections: tuple
    instructions: dict[int, Instruction]
    padding: tuple[tuple[int, bytes], ...]
    variables: tuple[Variable, ...]
    labels: LabelMap
    cfgs: tuple[Cfg, ...]
    diagnostics: tuple[Diagnostic, ...]


def lift(image: ElfImage, meta: EllfMetadata, mode: str = STRICT,
         step_order: tuple[str, str, str] = ("text", "stack", "data")) -> LiftedProgram:
    """Run the full pipeline; the three fine-grained steps commute."""
    if sorted(step_order) != ["data", "stack", "text"]:
        raise ValueError(f"bad step order {step_order!r}")
    problems = validate_metadata(meta, image)
    if problems and mode == STRICT:
        raise LiftError("metadata fails validation: "
                        + "; ".join(str(p) for p in problems))

    byte_map = load_image(image)
    instrs = lift_unsymbolized(byte_map, meta.instruction_regions)
    labels = generate_labels(meta, image)
    state = _LiftState(image=image, byte_map=byte_map, meta=meta, mode=mode,
                       labels=labels, instrs=instrs)
    state.diagnostics.extend(problems)

    coarse_symbolize(state)
    steps = {"text": text_symbolize, "stack": stack_symbolize, "data": data_symbolize}
    for name in step_order:
        steps[name](state)
    cfgs = build_cfg(state)

    padding = _collect_padding(state)
    _finalize_annotations(state)

    return LiftedProgram(
        sections=tuple(sec for sec in image.sections if sec.alloc),
        instructions=dict(sorted(state.instrs.items())),
        padding=padding,
        variables=tuple(state.variables),
        labels=state.labels,
        cfgs=cfgs,
        diagnostics=tuple(state.diagnostics),
    )


def _collect_padding(state) -> tuple[tuple[int, bytes], ...]:
    """Executable-section bytes outside every decoded instruction."""
    covered = set()
    for addr, ins in state.instrs.items():
        covered.update(range(addr, addr + ins.length))
    runs = []
    for sec in state.image.sections:
        if not (sec.alloc and sec.exec) or sec.size == 0:
            continue
        run_start = None
        for a in range(sec.vaddr, sec.vaddr + sec.size + 1):
            inside = a < sec.vaddr + sec.size and a not in covered
            if inside and run_start is None:
                run_start = a
            elif not inside and run_start is not None:
                runs.append((run_start, _raw(state, run_start, a)))
                run_start = None
    return tuple(runs)


def _finalize_annotations(state) -> None:
    """Compose per-step marks into instruction annotations in a fixed order."""
    minted_used = {addr: name for addr, name in state.labels.blocks.items()
                   if addr not in state.labels.bb_backed
                   and name in state.labels.used}
    for addr in sorted(state.instrs):
        ins = state.instrs[addr]
        notes = []
        if addr in state.func_open:
            notes.append(f".func {state.func_open[addr]}")
            notes.extend(state.slot_lines.get(addr, ()))
        if addr in state.block_marks:
            notes.append(f"{state.block_marks[addr]}:")
        elif addr in minted_used and addr not in state.func_open:
            notes.append(f"{minted_used[addr]}:")
        post = (".endfunc",) if addr in state.func_close else ()
        if notes or post:
            state.instrs[addr] = replace(ins, annotations=tuple(notes),
                                         post_annotations=post)


# --- rendering ---

def _render_int(value):
    return str(value)


def render_operand(op) -> str:
    if isinstance(op, Register):
        return op.name
    if isinstance(op, Immediate):
        return _render_int(op.value)
    if isinstance(op, SymbolRef):
        if op.offset:
            return f"{op.label} + {op.offset}"
        return op.label
    if isinstance(op, SlotMemRef):
        parts = [op.base]
        if op.index:
            parts.append(f"{op.index}*{op.scale}")
        expr = " + ".join(parts)
        if op.bias:
            expr += f" + {op.bias}" if op.bias > 0 else f" - {-op.bias}"
        expr += f" - {op.slot_name}"
        if op.interior:
            expr += f" + {op.interior}"
        return f"[{expr}]"
    if isinstance(op, MemRef):
        if op.label is not None:
            if op.label_offset:
                return f"[{op.label} + {op.label_offset}]"
            return f"[{op.label}]"
        if op.rip_relative:
            raise LiftError(f"unsymbolized RIP-relative operand {op!r}")
        parts = []
        if op.base:
            parts.append(op.base)
        if op.index:
            parts.append(f"{op.index}*{op.scale}")
        if not parts:
            return f"[{_render_int(op.disp)}]"
        expr = " + ".join(parts)
        if op.disp:
            expr += f" + {op.disp}" if op.disp > 0 else f" - {-op.disp}"
        return f"[{expr}]"
    if isinstance(op, PcRel):
        raise LiftError(f"unsymbolized PC-relative operand {op!r}")
    raise LiftError(f"cannot render operand {op!r}")


def render_instruction(ins: Instruction) -> str:
    if not ins.operands:
        return ins.mnemonic
    return ins.mnemonic + " " + ", ".join(render_operand(op) for op in ins.operands)


def _byte_lines(data: bytes, per_line: int = 8):
    for i in range(0, len(data), per_line):
        chunk = data[i:i + per_line]
        yield "    .byte " + ", ".join(f"0x{b:02x}" for b in chunk)


def emit_assembly(lp: LiftedProgram) -> str:
    lines: list[str] = []
    floor_used = {}
    for addr, name in {**lp.labels.text_floors, **lp.labels.data_floors}.items():
        if name in lp.labels.used:
            floor_used[addr] = name

    data_marks = {addr: name for addr, name in lp.labels.data_labels.items()
                  if addr not in lp.labels.record_backed
                  and name in lp.labels.used}
    text_extra = {addr: name for addr, name in lp.labels.blocks.items()
                  if addr not in lp.labels.bb_backed and name in lp.labels.used}

    for sec in lp.sections:
        lines.append(f".section {sec.name} base=0x{sec.vaddr:x}")
        if sec.vaddr in floor_used:
            lines.append(f"{floor_used[sec.vaddr]}:")
        if sec.exec:
            _emit_text(lines, lp, sec, text_extra)
        else:
            _emit_data(lines, lp, sec, data_marks)
    return "\n".join(lines) + "\n"


def _emit_text(lines, lp, sec, text_extra):
    stream: list[tuple[int, str, object]] = []
    for addr, ins in lp.instructions.items():
        if sec.vaddr <= addr < sec.vaddr + sec.size:
            stream.append((addr, "ins", ins))
    for addr, blob in lp.padding:
        if sec.vaddr <= addr < sec.vaddr + sec.size:
            stream.append((addr, "pad", blob))
    stream.sort(key=lambda item: item[0])

    for addr, kind, payload in stream:
        if kind == "ins":
            lines.extend(payload.annotations)
            lines.append("    " + render_instruction(payload))
            lines.extend(payload.post_annotations)
        else:
            cuts = sorted(a for a in text_extra if addr < a < addr + len(payload))
            pos = addr
            for cut in cuts + [addr + len(payload)]:
                if pos in text_extra:
                    lines.append(f"{text_extra[pos]}:")
                lines.extend(_byte_lines(payload[pos - addr:cut - addr]))
                pos = cut


def _emit_data(lines, lp, sec, data_marks):
    for var in lp.variables:
        if not (sec.vaddr <= var.address < sec.vaddr + sec.size):
            continue
        if var.label:
            lines.append(f"{var.label}:")
        pos = var.address
        for part in var.payload:
            if isinstance(part, RawBytes):
                cuts = sorted(a for a in data_marks if pos < a < pos + len(part.data))
                sub = pos
                for cut in cuts + [pos + len(part.data)]:
                    if sub in data_marks:
                        lines.append(f"{data_marks[sub]}:")
                    lines.extend(_byte_lines(part.data[sub - pos:cut - pos]))
                    sub = cut
                pos += len(part.data)
            elif isinstance(part, PointerPayload):
                if pos in data_marks:
                    lines.append(f"{data_marks[pos]}:")
                ref = part.label + (f" + {part.offset}" if part.offset else "")
                lines.append(f"    .quad {ref}")
                pos += POINTER_WIDTH
            elif isinstance(part, DiffPayload):
                if pos in data_marks:
                    lines.append(f"{data_marks[pos]}:")
                a = part.minuend_label + (f" + {part.minuend_offset}"
                                          if part.minuend_offset else "")
                b = part.subtrahend_label + (f" + {part.subtrahend_offset}"
                                             if part.subtrahend_offset else "")
                lines.append(f"    .quad {a} - {b}")
                pos += POINTER_WIDTH
            else:  # Zeroes
                if pos in data_marks:
                    lines.append(f"{data_marks[pos]}:")
                lines.append(f"    .zero {part.size}")
                pos += part.size
