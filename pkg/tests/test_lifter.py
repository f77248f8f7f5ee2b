"""Pipeline behavior: decoding regions, labels, the three symbolization
passes, CFG recovery, and deterministic emission."""

import itertools
from dataclasses import replace

import pytest

from ellf import elfio
from ellf.asm import assemble, assemble_image, parse_assembly
from ellf.corpus import corpus_programs
from ellf.errors import (
    DanglingTextRecord,
    MetadataMismatch,
    PointerStraddle,
    RegionDecodeError,
    RegionOverlap,
)
from ellf.isa import Immediate, MemRef, Register
from ellf.lifter import (
    DiffPayload,
    LabelMap,
    PointerPayload,
    RawBytes,
    SlotMemRef,
    Zeroes,
    emit_assembly,
    generate_labels,
    lift,
    lift_unsymbolized,
)
from ellf.meta import (
    BASIC_BLOCK,
    DataRecord,
    EllfMetadata,
    InstructionRegion,
    OperandPointer,
    TextRecord,
    decode_metadata,
)

from conftest import SPARSE_DEMO_META, TABLE_DEMO


def demo_image(table_demo):
    _, _, img = table_demo
    return elfio.load_image(img)


# --- step I ---

def test_region_decodes_exact_count(table_demo):
    image = demo_image(table_demo)
    instrs = lift_unsymbolized(image, (InstructionRegion(0x4000, 10),))
    assert len(instrs) == 10
    ordered = sorted(instrs)
    assert instrs[ordered[0]].mnemonic == "push"
    assert instrs[ordered[-1]].mnemonic == "ret"


def test_single_instruction_region():
    image = {0x100: 0xC3}
    instrs = lift_unsymbolized(image, (InstructionRegion(0x100, 1),))
    assert instrs[0x100].mnemonic == "ret"


def test_region_decode_error():
    image = {0x100: 0xC3, 0x101: 0x06}
    with pytest.raises(RegionDecodeError):
        lift_unsymbolized(image, (InstructionRegion(0x100, 2),))


def test_region_overlap():
    image = {0x100: 0x55, 0x101: 0x55, 0x102: 0xC3}
    with pytest.raises(RegionOverlap):
        lift_unsymbolized(image, (InstructionRegion(0x100, 2),
                                  InstructionRegion(0x101, 1)))


# --- labels ---

def test_label_names_from_sparse_oracle(table_demo):
    _, _, img = table_demo
    lm = generate_labels(SPARSE_DEMO_META, img)
    assert lm.functions == {0x4000: "F_4000"}
    # blocks: the recorded one plus the addresses pointer records name
    assert lm.blocks[0x4014] == ".Lb1"
    assert lm.blocks[0x401C] == ".Lb2"
    assert lm.blocks[0x4023] == ".Lb3"
    assert lm.data_labels == {0x4024: "D_4024", 0x402C: "D_402c"}


def test_lookup_returns_floor_entry(table_demo):
    _, _, img = table_demo
    lm = generate_labels(EllfMetadata(), img)
    assert lm.lookup(0x4010, "text") == ("S_text", 0x10)
    assert lm.lookup(0x402C, "data") == ("S_rodata", 8)


def test_block_numbering_is_deterministic_across_functions():
    src = """\
.section .text base=0x1000
.func first
    xor rax, rax
    jmp .L_f1
.L_f1:
    ret
.endfunc
.func second
    xor rcx, rcx
    jmp .L_s1
.L_s1:
    ret
.endfunc
"""
    elf, meta = assemble(parse_assembly(src))
    img = elfio.read_elf(elf)
    lm = generate_labels(meta, img)
    names = [lm.blocks[a] for a in sorted(lm.blocks)]
    assert names == sorted(set(names)), "block labels must be unique"
    again = generate_labels(meta, img)
    assert {a: n for a, n in lm.blocks.items()} == again.blocks


# --- symbolization steps (driven through a lenient lift of the sparse oracle) ---

@pytest.fixture(scope="module")
def sparse_lift(table_demo):
    _, _, img = table_demo
    return lift(img, SPARSE_DEMO_META, mode="lenient")


def test_coarse_rewrites_recorded_operand(sparse_lift):
    lea = sparse_lift.instructions[0x4004]
    assert lea.operands[1] == MemRef(rip_relative=True, disp=0x19,
                                     label="D_4024", label_offset=0)


def test_raw_immediates_stay_raw(sparse_lift):
    mov = sparse_lift.instructions[0x401C]
    assert mov.operands == (Register("rax"), Immediate(42, 32))


def test_diff_payload_rendering(sparse_lift):
    text = emit_assembly(sparse_lift)
    assert "    .quad .Lb1 - D_4024" in text
    assert "    .quad .Lb2 - D_4024" in text


def test_function_annotations(sparse_lift):
    entry = sparse_lift.instructions[0x4000]
    assert entry.annotations == (".func F_4000",)
    last = sparse_lift.instructions[0x4023]
    assert last.post_annotations == (".endfunc",)


def test_direct_jump_rewritten_to_minted_label(sparse_lift):
    jmp = sparse_lift.instructions[0x4017]
    from ellf.isa import SymbolRef
    assert jmp.operands == (SymbolRef(".Lb3", 0),)


def test_region_only_metadata_degrades_to_section_labels(table_demo):
    _, _, img = table_demo
    meta = EllfMetadata(instruction_regions=SPARSE_DEMO_META.instruction_regions)
    lp = lift(img, meta, mode="lenient")
    text = emit_assembly(lp)
    # branches resolve through the synthetic section-start label
    assert "jmp S_text + 35" in text
    assert "lea rcx, [S_rodata]" in text
    assert ".func" not in text


def test_strict_dangling_text_record(table_demo):
    _, _, img = table_demo
    meta = replace(SPARSE_DEMO_META,
                   text=SPARSE_DEMO_META.text[:1]
                   + (TextRecord(0x4002, BASIC_BLOCK),)
                   + SPARSE_DEMO_META.text[1:])
    with pytest.raises(DanglingTextRecord):
        lift(img, meta, mode="strict")
    lp = lift(img, meta, mode="lenient")
    assert any(d.kind == "range" for d in lp.diagnostics)


def test_strict_metadata_mismatch(table_demo):
    _, _, img = table_demo
    bad = replace(SPARSE_DEMO_META,
                  pointers=(OperandPointer(0x4004, 1, 0x4028),)
                  + SPARSE_DEMO_META.pointers[1:])
    with pytest.raises(MetadataMismatch):
        lift(img, bad, mode="strict")
    lp = lift(img, bad, mode="lenient")
    lea = lp.instructions[0x4004]
    assert lea.operands[1].label == "D_4024"
    assert lea.operands[1].label_offset == 4


# --- stack symbolization ---

def test_stack_slot_resolution_rule():
    src = """\
.section .text base=0x1000
.func fr
.slot fr, s4, 4
.slot fr, s32, 32
.slot fr, s40, 40
    push rbp
    mov rbp, rsp
    mov rax, [rbp - 8]
    mov rcx, [rbp + 8 - s4]
    mov [rbp - 32], rax
    ret
.endfunc
"""
    elf, meta = assemble(parse_assembly(src))
    lp = lift(elfio.read_elf(elf), meta, mode="strict")
    ops = {a: ins.operands for a, ins in lp.instructions.items()}
    addrs = sorted(lp.instructions)
    # [rbp - 8] accesses depth 16: base offset 32, interior 16
    slot = ops[addrs[2]][1]
    assert isinstance(slot, SlotMemRef)
    assert (slot.slot_offset, slot.interior, slot.bias) == (32, 16, 8)
    # exact slot start: depth 4, interior 0
    slot = ops[addrs[3]][1]
    assert (slot.slot_offset, slot.interior) == (4, 0)
    # store at depth 40: deepest slot
    slot = ops[addrs[4]][0]
    assert (slot.slot_offset, slot.interior) == (40, 0)


def test_no_stack_record_leaves_operands(table_demo):
    src = """\
.section .text base=0x1000
.func plain
    push rbp
    mov rbp, rsp
    mov rax, [rbp - 8]
    leave
    ret
.endfunc
"""
    elf, meta = assemble(parse_assembly(src))
    lp = lift(elfio.read_elf(elf), meta, mode="strict")
    third = sorted(lp.instructions)[2]
    assert lp.instructions[third].operands[1] == MemRef(base="rbp", disp=-8)


# --- data symbolization ---

def test_two_diff_variables(sparse_lift):
    rodata_vars = [v for v in sparse_lift.variables if v.address >= 0x4024]
    assert [v.label for v in rodata_vars] == ["D_4024", "D_402c"]
    assert all(len(v.payload) == 1 and isinstance(v.payload[0], DiffPayload)
               for v in rodata_vars)


def test_section_without_records_is_one_anonymous_variable():
    src = """\
.section .text base=0x1000
.func f
    ret
.endfunc
.section .data base=0x2000
    .byte 0x01, 0x02, 0x03
"""
    elf, meta = assemble(parse_assembly(src))
    lp = lift(elfio.read_elf(elf), meta, mode="strict")
    assert len(lp.variables) == 1
    var = lp.variables[0]
    assert (var.address, var.size, var.label) == (0x2000, 3, None)
    assert var.payload == (RawBytes(b"\x01\x02\x03"),)


def test_uncovered_gap_merges_into_preceding_variable(table_demo):
    _, _, img = table_demo
    meta = replace(SPARSE_DEMO_META, data=(DataRecord(0x4024, 8),))
    lp = lift(img, meta, mode="lenient")
    var = [v for v in lp.variables if v.address == 0x4024][0]
    assert var.size == 16  # trailing record-free bytes merged in


def test_pointer_straddle_strict(table_demo):
    _, _, img = table_demo
    meta = replace(SPARSE_DEMO_META,
                   data=(DataRecord(0x4024, 4), DataRecord(0x4028, 12)))
    with pytest.raises(PointerStraddle):
        lift(img, meta, mode="strict")
    lp = lift(img, meta, mode="lenient")
    assert any(d.kind == "straddle" for d in lp.diagnostics)


def test_nobits_variables_are_zero_payloads():
    src = corpus_programs()["09_bss_buffer"]
    elf, meta = assemble(parse_assembly(src))
    lp = lift(elfio.read_elf(elf), meta, mode="strict")
    bss_vars = [v for v in lp.variables if v.address >= 0x405000]
    assert [v.payload for v in bss_vars] == [(Zeroes(4096),), (Zeroes(8),)]


# --- CFG ---

def test_dispatch_cfg_successors(table_demo):
    _, meta, img = table_demo
    lp = lift(img, meta, mode="strict")
    cfg = lp.cfgs[0]
    entry_block = cfg.blocks[0]
    assert entry_block.successors == (0x4014, 0x401C)


def test_straight_line_single_block():
    src = """\
.section .text base=0x1000
.func f
    push rbp
    ret
.endfunc
"""
    elf, meta = assemble(parse_assembly(src))
    lp = lift(elfio.read_elf(elf), meta, mode="strict")
    assert len(lp.cfgs) == 1
    assert lp.cfgs[0].blocks == (type(lp.cfgs[0].blocks[0])(
        start=0x1000, end=0x1001, successors=()),)


def test_conditional_block_has_two_successors():
    src = corpus_programs()["03_conditional"]
    elf, meta = assemble(parse_assembly(src))
    lp = lift(elfio.read_elf(elf), meta, mode="strict")
    cfg = lp.cfgs[0]
    assert len(cfg.blocks[0].successors) == 2


def test_call_falls_through_and_tail_jump_exits():
    src = """\
.section .text base=0x1000
.func a
    call b
.L_after:
    jmp b
.endfunc
.func b
    ret
.endfunc
"""
    elf, meta = assemble(parse_assembly(src))
    lp = lift(elfio.read_elf(elf), meta, mode="strict")
    cfg_a = lp.cfgs[0]
    assert cfg_a.blocks[0].successors == (cfg_a.blocks[1].start,)
    assert cfg_a.blocks[1].successors == ()  # tail jump leaves the function


# --- emission ---

def test_emit_deterministic(table_demo):
    _, meta, img = table_demo
    text1 = emit_assembly(lift(img, meta, mode="strict"))
    text2 = emit_assembly(lift(img, meta, mode="strict"))
    assert text1 == text2


def test_empty_program_emits_section_headers_only():
    elf = elfio.build_elf([
        elfio.NewSection(".text", 0x1000, b"",
                         sh_flags=elfio.SHF_ALLOC | elfio.SHF_EXECINSTR),
        elfio.NewSection(".data", 0x2000, b"",
                         sh_flags=elfio.SHF_ALLOC | elfio.SHF_WRITE),
    ])
    lp = lift(elfio.read_elf(elf), EllfMetadata(), mode="strict")
    assert emit_assembly(lp) == (".section .text base=0x1000\n"
                                 ".section .data base=0x2000\n")


def test_padding_bytes_emitted_explicitly():
    src = corpus_programs()["14_inline_bytes"]
    elf, meta = assemble(parse_assembly(src))
    lp = lift(elfio.read_elf(elf), meta, mode="strict")
    text = emit_assembly(lp)
    assert "    .byte 0x2a" in text


def test_step_order_commutes(table_demo):
    _, meta, img = table_demo
    texts = set()
    for order in itertools.permutations(("text", "stack", "data")):
        texts.add(emit_assembly(lift(img, meta, mode="strict",
                                     step_order=order)))
    assert len(texts) == 1


def test_coverage_partition_over_corpus():
    """Every alloc byte is exactly one of: instruction, padding, variable."""
    for name, src in corpus_programs().items():
        elf, meta = assemble(parse_assembly(src))
        img = elfio.read_elf(elf)
        lp = lift(img, meta, mode="strict")
        claimed: dict[int, str] = {}

        def claim(addr, what):
            assert addr not in claimed, (name, hex(addr), what, claimed[addr])
            claimed[addr] = what

        for addr, ins in lp.instructions.items():
            for a in range(addr, addr + ins.length):
                claim(a, "instruction")
        for addr, blob in lp.padding:
            for a in range(addr, addr + len(blob)):
                claim(a, "padding")
        for var in lp.variables:
            for a in range(var.address, var.address + var.size):
                claim(a, "variable")
        expected = set()
        for sec in img.sections:
            if sec.alloc:
                expected.update(range(sec.vaddr, sec.vaddr + sec.size))
        assert set(claimed) == expected, name
