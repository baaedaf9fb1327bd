"""Rootkit and adversary models.

Each attack is a scripted mutation of guest state fired at a given event
index by the scenario loop. Entry vectors (kernel module, /dev/mem, kernel
exploit) are equivalent at this abstraction, so attacks simply rewrite
bytes, optionally through a freshly created writable page alias.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import AttackError, LifecycleError
from .guest import (
    HANDLER_BYTES,
    ROOTKIT_REGION_BASE,
    GuestState,
    KernelObject,
)
from .physmem import read_virtual, write_virtual


class AttackKind(Enum):
    SYSCALL_HOOK = "syscall_hook"
    INTERRUPT_HOOK = "interrupt_hook"
    FNPTR_HIJACK = "fnptr_hijack"
    RACING = "racing"
    SCHEDULER_FREEZE = "scheduler_freeze"


@dataclass(frozen=True)
class AttackScript:
    kind: AttackKind
    trigger_event: int
    table_index: int | None = None  # syscall/interrupt hooks
    rogue: int | None = None  # None: pick one from the rootkit region
    via_alias: bool = False
    object_index: int | None = None  # fnptr hijack / racing, index into guest.objects
    offset: int = 0
    hold_events: int | None = None  # racing window length
    unfreeze_event: int | None = None  # scheduler freeze


@dataclass
class AttackOutcome:
    kind: str
    applied_at: int
    detected_at: int | None = None
    repaired_at: int | None = None
    escaped: bool = True


def default_rogue(slot: int) -> int:
    """A distinct rootkit-region address per slot, so hooks are decidable."""
    return ROOTKIT_REGION_BASE + 0x1000 + slot * 0x100


def _write_table_entry(guest: GuestState, table: KernelObject, index: int, rogue: int,
                       via_alias: bool) -> None:
    vaddr = table.vaddr + index * HANDLER_BYTES
    current = int.from_bytes(
        read_virtual(guest.memory, guest.page_map, vaddr, HANDLER_BYTES), "little"
    )
    if rogue == current:
        raise AttackError("rogue value equals the current entry; no-op attack rejected")
    data = rogue.to_bytes(HANDLER_BYTES, "little")
    if not via_alias:
        write_virtual(guest.memory, guest.page_map, vaddr, data)
        return
    # Remap the backing frames onto fresh writable virtual pages and write
    # through the alias; the original mapping is left untouched.
    fs = guest.page_map.frame_size
    alias_vpage = guest.page_map.max_mapped_vpage() + 1
    first_vpage = vaddr // fs
    last_vpage = (vaddr + HANDLER_BYTES - 1) // fs
    for i, vpage in enumerate(range(first_vpage, last_vpage + 1)):
        guest.page_map.map_page(alias_vpage + i, guest.page_map.mapping[vpage])
    alias_vaddr = alias_vpage * fs + vaddr % fs
    write_virtual(guest.memory, guest.page_map, alias_vaddr, data)


def hook_syscall(guest: GuestState, index: int, rogue: int, via_alias: bool = False) -> None:
    """Point a syscall-table slot at rootkit code."""
    if not guest.boot_complete:
        raise LifecycleError("attacks only fire after boot is sealed")
    if not 0 <= index < len(guest.original_handlers):
        raise AttackError(f"syscall slot {index} out of bounds")
    _write_table_entry(guest, guest.syscall_table, index, rogue, via_alias)


def hook_interrupt(guest: GuestState, vector: int, rogue: int, via_alias: bool = False) -> None:
    """Point an interrupt-table vector at rootkit code."""
    if not guest.boot_complete:
        raise LifecycleError("attacks only fire after boot is sealed")
    if not 0 <= vector * HANDLER_BYTES < guest.interrupt_table.size:
        raise AttackError(f"interrupt vector {vector} out of bounds")
    _write_table_entry(guest, guest.interrupt_table, vector, rogue, via_alias)


def hijack_fnptr(guest: GuestState, object_index: int, offset: int, rogue: int) -> None:
    """Overwrite an 8-byte pointer inside an arbitrary protected object."""
    if not guest.boot_complete:
        raise LifecycleError("attacks only fire after boot is sealed")
    obj = guest.objects[object_index]
    if offset < 0 or offset + HANDLER_BYTES > obj.size:
        raise AttackError(f"offset {offset} outside object of {obj.size} bytes")
    vaddr = obj.vaddr + offset
    current = read_virtual(guest.memory, guest.page_map, vaddr, HANDLER_BYTES)
    data = rogue.to_bytes(HANDLER_BYTES, "little")
    if data == current:
        raise AttackError("rogue value equals the current bytes; no-op attack rejected")
    write_virtual(guest.memory, guest.page_map, vaddr, data)


def racing_modify(guest: GuestState, object_index: int) -> bytes:
    """Compromise an object and return the bytes needed to undo it."""
    obj = guest.objects[object_index]
    original = read_virtual(guest.memory, guest.page_map, obj.vaddr, obj.size)
    mutated = bytes(b ^ 0xFF for b in original[:HANDLER_BYTES]) + original[HANDLER_BYTES:]
    if mutated == original:
        raise AttackError("racing mutation is a no-op")
    write_virtual(guest.memory, guest.page_map, obj.vaddr, mutated)
    return original


def racing_restore(guest: GuestState, object_index: int, original: bytes) -> None:
    obj = guest.objects[object_index]
    write_virtual(guest.memory, guest.page_map, obj.vaddr, original)


def freeze_scheduler(guest: GuestState) -> None:
    """Stop task switching: no more CR3 writes, hence no more checks."""
    if not guest.boot_complete:
        raise LifecycleError("attacks only fire after boot is sealed")
    guest.frozen = True


def unfreeze_scheduler(guest: GuestState) -> None:
    guest.frozen = False
