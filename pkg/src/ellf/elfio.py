"""Minimal ELF64 little-endian container support.

Covers exactly what the toolkit needs: parsing section headers and dynamic
symbols into an ElfImage, building an address-indexed byte map, writing small
executables, and injecting or extracting the non-alloc `.ellf` section.
Injection appends payload, a grown string table and a rebuilt section header
table at the end of the file, so every original file offset, section body and
program header survives byte for byte.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import (
    DuplicateSection,
    MalformedHeader,
    NotElf,
    OverlapError,
    SectionNotFound,
    UnsupportedClass,
    UnsupportedEndianness,
)

ELF_MAGIC = b"\x7fELF"

SHT_NULL = 0
SHT_PROGBITS = 1
SHT_SYMTAB = 2
SHT_STRTAB = 3
SHT_NOBITS = 8
SHT_DYNSYM = 11
SHT_ELLF = 0x6FFF4C46  # OS-specific range; standard tools skip it

SHF_WRITE = 0x1
SHF_ALLOC = 0x2
SHF_EXECINSTR = 0x4

_EHDR = struct.Struct("<16sHHIQQQIHHHHHH")
_SHDR = struct.Struct("<IIQQQQIIQQ")
_SYM = struct.Struct("<IBBHQQ")


@dataclass(frozen=True)
class Section:
    name: str
    vaddr: int
    file_offset: int
    size: int
    sh_type: int
    sh_flags: int

    @property
    def alloc(self):
        return bool(self.sh_flags & SHF_ALLOC)

    @property
    def exec(self):
        return bool(self.sh_flags & SHF_EXECINSTR)

    @property
    def write(self):
        return bool(self.sh_flags & SHF_WRITE)

    @property
    def kind(self):
        if self.sh_type == SHT_PROGBITS:
            return "progbits"
        if self.sh_type == SHT_NOBITS:
            return "nobits"
        return "other"


@dataclass(frozen=True)
class ElfImage:
    entry_point: int
    sections: tuple[Section, ...]
    dynamic_symbols: dict[int, str] = field(default_factory=dict)
    raw_file: bytes = b""


def read_elf(data) -> ElfImage:
    data = bytes(data)
    if len(data) < 16 or data[:4] != ELF_MAGIC:
        raise NotElf("missing \\x7fELF magic")
    if data[4] != 2:
        raise UnsupportedClass("only 64-bit ELF files are supported")
    if data[5] != 1:
        raise UnsupportedEndianness("only little-endian ELF files are supported")
    if len(data) < _EHDR.size:
        raise MalformedHeader("file too short for an ELF64 header")
    try:
        (_ident, _type, _machine, _version, entry, _phoff, shoff, _flags,
         _ehsize, _phentsize, _phnum, shentsize, shnum, shstrndx) = \
            _EHDR.unpack_from(data, 0)
    except struct.error as exc:
        raise MalformedHeader(str(exc)) from None

    sections: list[Section] = []
    raw_headers = []
    if shnum:
        if shentsize < _SHDR.size:
            raise MalformedHeader(f"section header entry size {shentsize} too small")
        end = shoff + shnum * shentsize
        if shoff > len(data) or end > len(data) or shoff < 0:
            raise MalformedHeader("section header table runs past end of file")
        for i in range(shnum):
            raw_headers.append(_SHDR.unpack_from(data, shoff + i * shentsize))
        if shstrndx >= shnum:
            raise MalformedHeader(f"section name table index {shstrndx} out of range")
        str_off, str_size = raw_headers[shstrndx][4], raw_headers[shstrndx][5]
        if str_off + str_size > len(data):
            raise MalformedHeader("section name table runs past end of file")
        strtab = data[str_off:str_off + str_size]

        for (sh_name, sh_type, sh_flags, sh_addr, sh_offset, sh_size,
             _link, _info, _align, _entsize) in raw_headers:
            if sh_type == SHT_NULL:
                continue
            if sh_type != SHT_NOBITS and sh_offset + sh_size > len(data):
                raise MalformedHeader(f"section body at 0x{sh_offset:x} runs past "
                                      f"end of file")
            sections.append(Section(name=_cstr(strtab, sh_name),
                                    vaddr=sh_addr, file_offset=sh_offset,
                                    size=sh_size, sh_type=sh_type, sh_flags=sh_flags))

    dynamic_symbols: dict[int, str] = {}
    for i, hdr in enumerate(raw_headers):
        sh_type, sh_link = hdr[1], hdr[6]
        if sh_type != SHT_DYNSYM:
            continue
        if sh_link >= len(raw_headers):
            raise MalformedHeader("dynamic symbol table has a bad string table link")
        stroff, strsize = raw_headers[sh_link][4], raw_headers[sh_link][5]
        if stroff + strsize > len(data):
            raise MalformedHeader("dynamic string table runs past end of file")
        dynstr = data[stroff:stroff + strsize]
        off, size = hdr[4], hdr[5]
        for pos in range(off, off + size - _SYM.size + 1, _SYM.size):
            name_off, _info, _other, _shndx, value, _sz = _SYM.unpack_from(data, pos)
            if name_off and value:
                dynamic_symbols[value] = _cstr(dynstr, name_off)

    return ElfImage(entry_point=entry, sections=tuple(sections),
                    dynamic_symbols=dynamic_symbols, raw_file=data)


def _cstr(table: bytes, offset: int) -> str:
    if offset >= len(table):
        raise MalformedHeader(f"string offset {offset} outside string table")
    end = table.find(b"\0", offset)
    if end < 0:
        end = len(table)
    return table[offset:end].decode("latin-1")


def load_image(img: ElfImage) -> dict[int, int]:
    """Byte map of all alloc sections; nobits sections contribute zeros."""
    image: dict[int, int] = {}
    placed: list[tuple[int, int, str]] = []
    for sec in img.sections:
        if not sec.alloc or sec.size == 0:
            continue
        for start, end, name in placed:
            if sec.vaddr < end and start < sec.vaddr + sec.size:
                raise OverlapError(f"sections {name} and {sec.name} overlap "
                                   f"at 0x{max(start, sec.vaddr):x}")
        placed.append((sec.vaddr, sec.vaddr + sec.size, sec.name))
        if sec.kind == "nobits":
            for i in range(sec.size):
                image[sec.vaddr + i] = 0
        else:
            body = img.raw_file[sec.file_offset:sec.file_offset + sec.size]
            for i, byte in enumerate(body):
                image[sec.vaddr + i] = byte
    return image


def extract_section(img: ElfImage, name: str) -> bytes:
    for sec in img.sections:
        if sec.name == name:
            if sec.kind == "nobits":
                return b""
            return img.raw_file[sec.file_offset:sec.file_offset + sec.size]
    raise SectionNotFound(f"no section named {name}")


def has_section(img: ElfImage, name: str) -> bool:
    return any(sec.name == name for sec in img.sections)


def inject_section(img: ElfImage, name: str, payload: bytes) -> bytes:
    """Append a non-alloc section without disturbing the execution image."""
    if has_section(img, name):
        raise DuplicateSection(f"section {name} already present")
    data = img.raw_file
    (_ident, e_type, machine, version, entry, phoff, shoff, flags,
     ehsize, phentsize, phnum, shentsize, shnum, shstrndx) = _EHDR.unpack_from(data, 0)

    out = bytearray(data)

    if shnum == 0:
        # No section headers at all: build a fresh table with a null entry,
        # a string table and the new section.
        old_headers = [(0,) * 10]
        strtab = bytearray(b"\0")
        shstrndx = 1  # .shstrtab goes right after the null entry
        shentsize = _SHDR.size
        strtab_hdr_index = None
    else:
        old_headers = [list(_SHDR.unpack_from(data, shoff + i * shentsize))
                       for i in range(shnum)]
        strtab = bytearray(data[old_headers[shstrndx][4]:
                                old_headers[shstrndx][4] + old_headers[shstrndx][5]])
        strtab_hdr_index = shstrndx

    new_name_off = len(strtab)
    strtab += name.encode("latin-1") + b"\0"
    if strtab_hdr_index is None:
        shstr_name_off = len(strtab)
        strtab += b".shstrtab\0"

    payload_off = len(out)
    out += payload

    strtab_off = len(out)
    out += strtab

    # The relocated string table keeps its header slot; only offset/size move.
    if strtab_hdr_index is not None:
        old_headers[strtab_hdr_index][4] = strtab_off
        old_headers[strtab_hdr_index][5] = len(strtab)

    while len(out) % 8:
        out.append(0)
    new_shoff = len(out)

    headers = [tuple(h) for h in old_headers]
    if strtab_hdr_index is None:
        headers.append((shstr_name_off, SHT_STRTAB, 0, 0, strtab_off, len(strtab),
                        0, 0, 1, 0))
    headers.append((new_name_off, SHT_ELLF, 0, 0, payload_off, len(payload),
                    0, 0, 1, 0))
    for hdr in headers:
        out += _SHDR.pack(*hdr)

    _EHDR.pack_into(out, 0, _ident, e_type, machine, version, entry, phoff,
                    new_shoff, flags, ehsize, phentsize, phnum,
                    _SHDR.size if shnum == 0 else shentsize,
                    len(headers), shstrndx)
    return bytes(out)


# --- writing small executables (used by the assembler and tests) ---

@dataclass
class NewSection:
    name: str
    vaddr: int
    data: bytes = b""
    sh_type: int = SHT_PROGBITS
    sh_flags: int = SHF_ALLOC
    size: int | None = None  # defaults to len(data); nobits sections set it
    sh_link: int = 0
    sh_entsize: int = 0

    def body_size(self):
        return 0 if self.sh_type == SHT_NOBITS else len(self.data)

    def mem_size(self):
        return self.size if self.size is not None else len(self.data)


def build_elf(sections: list[NewSection], entry_point: int = 0) -> bytes:
    """Write an ET_EXEC ELF64 with the given sections and no program headers."""
    strtab = bytearray(b"\0")
    name_offsets = []
    for sec in sections:
        name_offsets.append(len(strtab))
        strtab += sec.name.encode("latin-1") + b"\0"
    shstr_name_off = len(strtab)
    strtab += b".shstrtab\0"

    out = bytearray(_EHDR.size * b"\0")
    body_offsets = []
    for sec in sections:
        while len(out) % 8:
            out.append(0)
        body_offsets.append(len(out))
        if sec.sh_type != SHT_NOBITS:
            out += sec.data

    while len(out) % 8:
        out.append(0)
    strtab_off = len(out)
    out += strtab

    while len(out) % 8:
        out.append(0)
    shoff = len(out)
    shnum = len(sections) + 2  # null entry + .shstrtab

    out += _SHDR.pack(0, 0, 0, 0, 0, 0, 0, 0, 0, 0)
    for sec, name_off, body_off in zip(sections, name_offsets, body_offsets):
        out += _SHDR.pack(name_off, sec.sh_type, sec.sh_flags, sec.vaddr,
                          body_off, sec.mem_size(), sec.sh_link, 0, 1,
                          sec.sh_entsize)
    out += _SHDR.pack(shstr_name_off, SHT_STRTAB, 0, 0, strtab_off, len(strtab),
                      0, 0, 1, 0)

    _EHDR.pack_into(out, 0,
                    ELF_MAGIC + bytes([2, 1, 1, 0]) + b"\0" * 8,
                    2,      # ET_EXEC
                    0x3E,   # x86-64
                    1, entry_point,
                    0,      # no program headers
                    shoff, 0, _EHDR.size, 0, 0, _SHDR.size, shnum, shnum - 1)
    return bytes(out)
