"""Monitor-side invariance enforcement.

Protection records are created once, from a boot-time batch, and from then
on every control-register-write trap checks the next subset of ``k`` records
against their registered MD5 signatures. Detections are logged; when a copy
of the original bytes was registered and repair is enabled, the bytes are
written back through the *physical* fragments, so page-table aliasing games
on the guest side cannot hide a modification.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass, field
from enum import Enum

from .errors import LifecycleError, RegistrationError
from .guest import RegistrationBatch, VmEvent
from .physmem import Fragment, GuestMemory, PageMap

RECORD_HEADER_BYTES = 20  # 64-bit phys addr + 32-bit size + 32-bit checksum + 32-bit flags
RECORD_HEADER_BYTES_FULL = 32  # same, with the untruncated 128-bit checksum

FLAG_HAS_COPY = 1 << 0
FLAG_COMPROMISED_SEEN = 1 << 1


class OrderingMode(Enum):
    ROUND_ROBIN = "round_robin"
    SEEDED_RANDOM = "seeded_random"


@dataclass(frozen=True)
class Digest:
    full: bytes  # 16-byte MD5

    @property
    def stored32(self) -> int:
        return int.from_bytes(self.full[:4], "big")

    def signature(self, full_digest: bool) -> bytes:
        return self.full if full_digest else self.full[:4]


def compute_digest(data: bytes) -> Digest:
    return Digest(hashlib.md5(data).digest())


@dataclass
class ProtectionRecord:
    id: int
    fragments: list[Fragment]
    size: int
    signature: bytes  # 4 bytes, or 16 in full-digest mode
    flags: int
    copy: bytes | None = None

    @property
    def has_copy(self) -> bool:
        return bool(self.flags & FLAG_HAS_COPY)


@dataclass(frozen=True)
class Detection:
    event_index: int
    record_id: int
    expected: bytes
    actual: bytes


@dataclass(frozen=True)
class CheckReport:
    event_index: int
    checked_ids: tuple[int, ...]
    detections: tuple[Detection, ...]
    repairs: tuple[int, ...]


class MonitorState:
    """Hypervisor-side state: records, check schedule and logs."""

    def __init__(
        self,
        subset_size: int,
        ordering: OrderingMode = OrderingMode.ROUND_ROBIN,
        repair_enabled: bool = True,
        full_digest: bool = False,
        seed: int = 0,
    ):
        if subset_size < 1:
            raise ValueError("subset_size must be >= 1")
        self.subset_size = subset_size
        self.ordering = ordering
        self.repair_enabled = repair_enabled
        self.full_digest = full_digest
        self.seed = seed
        self._rng = random.Random(seed)
        self.records: list[ProtectionRecord] = []
        self.boot_gate_open = True
        self.schedule: list[int] = []
        self.cursor = 0
        self.detections_log: list[Detection] = []
        self.repairs_log: list[tuple[int, int]] = []  # (event_index, record_id)
        self.checks_performed = 0
        self.bytes_hashed = 0

    # -- registration ------------------------------------------------------

    def register_batch(self, mem: GuestMemory, pmap: PageMap, batch: RegistrationBatch) -> int:
        """Create one record per entry; all-or-nothing on translation faults."""
        if not self.boot_gate_open:
            raise LifecycleError("registration is closed")
        if not batch.entries:
            raise RegistrationError("empty registration batch")
        staged = []
        base = len(self.records)
        for i, entry in enumerate(batch.entries):
            if entry.size < 1:
                raise RegistrationError(f"entry {i}: size must be >= 1")
            if entry.copy is not None and len(entry.copy) != entry.size:
                raise RegistrationError(f"entry {i}: copy length does not match size")
            fragments = pmap.translate_range(entry.vaddr, entry.size)
            data = b"".join(mem.read(f.phys, f.length) for f in fragments)
            flags = FLAG_HAS_COPY if entry.copy is not None else 0
            staged.append(
                ProtectionRecord(
                    id=base + i,
                    fragments=fragments,
                    size=entry.size,
                    signature=compute_digest(data).signature(self.full_digest),
                    flags=flags,
                    copy=entry.copy,
                )
            )
        self.records.extend(staged)
        return len(staged)

    def seal(self, mem: GuestMemory, eoo_flag_addr: int) -> None:
        """Close the boot gate, flag the trusted module, build the schedule."""
        if not self.boot_gate_open:
            raise LifecycleError("monitor already sealed")
        self.boot_gate_open = False
        mem.write(eoo_flag_addr, b"\x01")
        # The seeded-random schedule is drawn once, here, and reused every
        # pass: the attacker cannot learn it, and keeping it fixed preserves
        # the one-pass detection bound (re-shuffling per pass would not).
        self.schedule = list(range(len(self.records)))
        if self.ordering is OrderingMode.SEEDED_RANDOM:
            self._rng.shuffle(self.schedule)
        self.cursor = 0

    @property
    def num_subsets(self) -> int:
        return max(1, math.ceil(len(self.records) / self.subset_size))

    # -- checking ----------------------------------------------------------

    def _read_record(self, mem: GuestMemory, rec: ProtectionRecord) -> bytes:
        return b"".join(mem.read(f.phys, f.length) for f in rec.fragments)

    def check_record(self, mem: GuestMemory, rec: ProtectionRecord) -> bytes | None:
        """Recompute the signature; return the actual signature on mismatch."""
        data = self._read_record(mem, rec)
        self.checks_performed += 1
        self.bytes_hashed += len(data)
        actual = compute_digest(data).signature(self.full_digest)
        if actual == rec.signature:
            return None
        rec.flags |= FLAG_COMPROMISED_SEEN
        return actual

    def repair(self, mem: GuestMemory, rec: ProtectionRecord) -> bool:
        """Write the registered copy back; True iff the record is clean again."""
        if not (self.repair_enabled and rec.copy is not None):
            return False
        pos = 0
        for frag in rec.fragments:
            mem.write(frag.phys, rec.copy[pos : pos + frag.length])
            pos += frag.length
        return self.check_record(mem, rec) is None

    def handle_vmexit(self, mem: GuestMemory, event: VmEvent) -> CheckReport:
        """Check the next subset of records on a control-register trap.

        Ticks (no trap) produce an empty report. The cursor advances one
        subset per trap and wraps after a full pass, so any ceil(N/k)
        consecutive traps cover every record exactly once.
        """
        if self.boot_gate_open:
            raise LifecycleError("monitor not sealed; cannot check yet")
        if event.kind != "mov_cr" or not self.records:
            return CheckReport(event.index, (), (), ())
        k = self.subset_size
        subset = self.schedule[self.cursor * k : (self.cursor + 1) * k]
        detections = []
        repairs = []
        for rec_index in subset:
            rec = self.records[rec_index]
            actual = self.check_record(mem, rec)
            if actual is None:
                continue
            det = Detection(event.index, rec.id, rec.signature, actual)
            detections.append(det)
            self.detections_log.append(det)
            if self.repair(mem, rec):
                repairs.append(rec.id)
                self.repairs_log.append((event.index, rec.id))
        self.cursor += 1
        if self.cursor >= self.num_subsets:
            self.cursor = 0
        return CheckReport(event.index, tuple(subset), tuple(detections), tuple(repairs))


# -- closed-form accounting ------------------------------------------------


def worst_case_latency_switches(num_objects: int, subset_size: int) -> int:
    """Process switches from modification to detection, worst phase."""
    if subset_size < 1:
        raise ValueError("subset_size must be >= 1")
    if num_objects < 0:
        raise ValueError("num_objects must be >= 0")
    if num_objects == 0:
        return 0
    return math.ceil(num_objects / subset_size) - 1


def kib(nbytes: int) -> int:
    """Byte count rendered in KiB, rounded up to a whole unit."""
    return math.ceil(nbytes / 1024)


def memory_overhead(
    num_objects: int,
    obj_size: int,
    with_copies: bool,
    subset_size: int,
    full_digest: bool = False,
) -> dict[str, int]:
    """Exact byte accounting for the monitor's private memory cost.

    ``records`` is the per-object header cost, ``copies`` the optional
    original-content store, ``mapping`` the per-trap cost of mapping one
    subset into the monitor's address space.
    """
    header = RECORD_HEADER_BYTES_FULL if full_digest else RECORD_HEADER_BYTES
    records = num_objects * header
    copies = num_objects * obj_size if with_copies else 0
    mapping = subset_size * obj_size
    return {
        "records": records,
        "copies": copies,
        "mapping": mapping,
        "total": records + copies + mapping,
    }
