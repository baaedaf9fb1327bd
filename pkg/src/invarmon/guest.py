"""Simulated guest kernel.

Boot populates memory with the invariant objects (dispatch tables plus a
configurable set of synthetic kernel objects), after which a trusted-module
analogue collects their addresses and hands them to the monitor over a
hypercall. Once the monitor seals registration, the guest only emits
control-register-write traps as its scheduler switches processes.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from .errors import AllocationError, LifecycleError, RegistrationError
from .physmem import GuestMemory, PageMap, read_virtual

HANDLER_BYTES = 8
# Pure address ranges for handler values; neither needs backing frames.
KERNEL_TEXT_BASE = 0x4000_0000
ROOTKIT_REGION_BASE = 0x8000_0000
ROOTKIT_REGION_SIZE = 0x0100_0000


class ObjectKind(Enum):
    STATIC_HARDCODED = "static_hardcoded"
    STATIC_MAPPED = "static_mapped"
    DYNAMIC_HEAP = "dynamic_heap"


@dataclass(frozen=True)
class KernelObject:
    id: str
    kind: ObjectKind
    vaddr: int
    size: int
    initial_content: bytes


@dataclass(frozen=True)
class ObjectGroup:
    """A batch of same-sized synthetic objects to allocate at boot."""

    kind: ObjectKind
    count: int
    size: int


@dataclass(frozen=True)
class GuestSpec:
    objects: tuple[ObjectGroup, ...] = ()
    frame_size: int = 4096
    num_frames: int | None = None  # None: sized to fit the population
    switch_rate: int = 25  # process switches per simulated second
    syscall_entries: int = 512
    interrupt_entries: int = 256
    seed: int = 0


@dataclass(frozen=True)
class VmEvent:
    kind: str  # "mov_cr" | "tick"
    index: int
    register: str | None = None
    cr3_tag: int | None = None


@dataclass(frozen=True)
class RegistrationEntry:
    vaddr: int
    size: int
    copy: bytes | None = None


@dataclass(frozen=True)
class RegistrationBatch:
    entries: tuple[RegistrationEntry, ...]


@dataclass(frozen=True)
class DispatchTrace:
    """Result of driving one syscall through the current page map."""

    nr: int
    arg: int
    handler: int
    original: bool
    in_rootkit_region: bool


@dataclass
class GuestState:
    memory: GuestMemory
    page_map: PageMap
    objects: list[KernelObject]
    syscall_table: KernelObject
    interrupt_table: KernelObject
    original_handlers: list[int]
    eoo_flag_addr: int
    switch_rate: int
    boot_complete: bool = False
    module_loaded: bool = True
    frozen: bool = False
    clock: Fraction = Fraction(0)
    event_count: int = 0
    _next_cr3_tag: int = field(default=1, repr=False)

    def eoo_flag(self) -> int:
        return self.memory.read(self.eoo_flag_addr, 1)[0]


def _required_frames(spec: GuestSpec) -> int:
    payload = spec.syscall_entries * HANDLER_BYTES + spec.interrupt_entries * HANDLER_BYTES
    payload += sum(g.count * g.size for g in spec.objects)
    # frame 0 is reserved for the shared end-of-operation flag
    frames = 1 + (payload + spec.frame_size - 1) // spec.frame_size
    return frames + 1  # one frame of slack for alignment at the tail


def boot(spec: GuestSpec) -> GuestState:
    """Build a booted-but-unsealed guest with seeded pseudorandom objects."""
    for group in spec.objects:
        if group.count < 0 or group.size < 1:
            raise AllocationError(f"bad object group {group}")
    num_frames = spec.num_frames if spec.num_frames is not None else _required_frames(spec)
    mem = GuestMemory(num_frames, spec.frame_size)
    if mem.size > KERNEL_TEXT_BASE:
        raise AllocationError("memory overlaps the reserved handler address ranges")
    pmap = PageMap(spec.frame_size, num_frames)
    for i in range(num_frames):
        pmap.map_page(i, i)  # identity map at boot; attacks may remap later

    rng = random.Random(spec.seed)
    cursor = spec.frame_size  # frame 0 reserved (end-of-operation flag at byte 0)
    objects: list[KernelObject] = []

    def place(obj_id: str, kind: ObjectKind, content: bytes) -> KernelObject:
        nonlocal cursor
        if cursor + len(content) > mem.size:
            raise AllocationError(
                f"object population exceeds memory ({mem.size} bytes, "
                f"{num_frames} frames of {spec.frame_size})"
            )
        obj = KernelObject(obj_id, kind, cursor, len(content), content)
        mem.write(cursor, content)  # identity map: vaddr == phys here
        cursor += len(content)
        objects.append(obj)
        return obj

    original_handlers = [KERNEL_TEXT_BASE + i * 0x40 for i in range(spec.syscall_entries)]
    syscall_bytes = b"".join(h.to_bytes(HANDLER_BYTES, "little") for h in original_handlers)
    syscall_table = place("syscall_table", ObjectKind.STATIC_MAPPED, syscall_bytes)

    int_handlers = [KERNEL_TEXT_BASE + 0x100000 + i * 0x40 for i in range(spec.interrupt_entries)]
    int_bytes = b"".join(h.to_bytes(HANDLER_BYTES, "little") for h in int_handlers)
    interrupt_table = place("interrupt_table", ObjectKind.STATIC_HARDCODED, int_bytes)

    serial = 0
    for group in spec.objects:
        for _ in range(group.count):
            place(f"obj_{serial:05d}", group.kind, rng.randbytes(group.size))
            serial += 1

    return GuestState(
        memory=mem,
        page_map=pmap,
        objects=objects,
        syscall_table=syscall_table,
        interrupt_table=interrupt_table,
        original_handlers=original_handlers,
        eoo_flag_addr=0,
        switch_rate=spec.switch_rate,
    )


def trusted_module_collect(guest: GuestState, with_copies: bool) -> RegistrationBatch:
    """Gather (vaddr, size[, copy]) for every invariant object.

    Only valid while the trusted module is still resident, i.e. before the
    hypercall seals registration.
    """
    if guest.boot_complete or not guest.module_loaded:
        raise LifecycleError("trusted module already unloaded; registration is closed")
    entries = tuple(
        RegistrationEntry(
            obj.vaddr,
            obj.size,
            read_virtual(guest.memory, guest.page_map, obj.vaddr, obj.size) if with_copies else None,
        )
        for obj in guest.objects
    )
    return RegistrationBatch(entries)


def raise_hypercall(guest: GuestState, monitor, batch: RegistrationBatch) -> int:
    """Send the collected entries down to the monitor and seal registration.

    On success the monitor holds one record per entry, the shared
    end-of-operation byte is set, and the trusted module is unloaded.
    """
    if guest.boot_complete:
        raise LifecycleError("hypercall rejected: registration already sealed")
    if not batch.entries:
        raise RegistrationError("empty registration batch")
    count = monitor.register_batch(guest.memory, guest.page_map, batch)
    monitor.seal(guest.memory, guest.eoo_flag_addr)
    guest.boot_complete = True
    guest.module_loaded = False
    return count


def process_switch(guest: GuestState) -> VmEvent:
    """Advance the scheduler by one quantum.

    Emits a CR3-write trap unless the scheduler has been frozen, in which
    case only the clock moves (the system is wedged, no traps fire).
    """
    guest.clock += Fraction(1, guest.switch_rate)
    index = guest.event_count
    guest.event_count += 1
    if guest.frozen:
        return VmEvent(kind="tick", index=index)
    tag = guest._next_cr3_tag
    guest._next_cr3_tag += 1
    return VmEvent(kind="mov_cr", index=index, register="cr3", cr3_tag=tag)


def invoke_syscall(guest: GuestState, nr: int, arg: int = 0) -> DispatchTrace:
    """Dispatch syscall ``nr`` and report where control would land."""
    if not 0 <= nr < len(guest.original_handlers):
        raise ValueError(f"syscall number {nr} out of range")
    raw = read_virtual(
        guest.memory, guest.page_map, guest.syscall_table.vaddr + nr * HANDLER_BYTES, HANDLER_BYTES
    )
    handler = int.from_bytes(raw, "little")
    return DispatchTrace(
        nr=nr,
        arg=arg,
        handler=handler,
        original=handler == guest.original_handlers[nr],
        in_rootkit_region=ROOTKIT_REGION_BASE <= handler < ROOTKIT_REGION_BASE + ROOTKIT_REGION_SIZE,
    )
