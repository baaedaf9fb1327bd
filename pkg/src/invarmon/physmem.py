"""Simulated guest physical memory and the virtual-to-physical page map.

The guest and the monitor deliberately share one ``GuestMemory`` instance:
the monitor reads and repairs protected objects through physical addresses,
while the guest goes through its ``PageMap``. Remapping a virtual page is
allowed to alias an already-used frame, which is exactly what the
read-only-bypass attack needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import BoundsError, TranslationFault


@dataclass(frozen=True)
class Fragment:
    """A physically contiguous piece of an object, confined to one frame."""

    phys: int
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("fragment length must be >= 1")


class GuestMemory:
    """Flat byte-addressable physical memory, zero-initialized."""

    def __init__(self, num_frames: int, frame_size: int = 4096):
        if num_frames < 1:
            raise ValueError("num_frames must be >= 1")
        if frame_size < 1:
            raise ValueError("frame_size must be >= 1")
        self.num_frames = num_frames
        self.frame_size = frame_size
        self._store = bytearray(num_frames * frame_size)

    @property
    def size(self) -> int:
        return len(self._store)

    def _check_range(self, at: int, length: int) -> None:
        if at < 0 or length < 0 or at + length > self.size:
            raise BoundsError(
                f"access [{at}, {at + length}) outside memory of {self.size} bytes"
            )

    def read(self, at: int, length: int) -> bytes:
        self._check_range(at, length)
        return bytes(self._store[at : at + length])

    def write(self, at: int, data: bytes) -> None:
        self._check_range(at, len(data))
        self._store[at : at + len(data)] = data


@dataclass
class PageMap:
    """Single-level map from virtual page number to physical frame number.

    Aliasing is permitted: several virtual pages may resolve to the same
    frame, and remapping a page silently replaces the previous entry.
    """

    frame_size: int
    num_frames: int
    mapping: dict[int, int] = field(default_factory=dict)

    def map_page(self, vpage: int, pframe: int) -> None:
        if not 0 <= pframe < self.num_frames:
            raise ValueError(f"frame {pframe} out of range (num_frames={self.num_frames})")
        if vpage < 0:
            raise ValueError("virtual page number must be >= 0")
        self.mapping[vpage] = pframe

    def translate(self, vaddr: int) -> int:
        vpage, offset = divmod(vaddr, self.frame_size)
        try:
            pframe = self.mapping[vpage]
        except KeyError:
            raise TranslationFault(f"virtual page {vpage:#x} is not mapped") from None
        return pframe * self.frame_size + offset

    def translate_range(self, vaddr: int, size: int) -> list[Fragment]:
        """Split [vaddr, vaddr+size) into per-frame physical fragments.

        Fragments come back in ascending virtual order and their lengths sum
        to ``size``; an object that fits in one frame yields one fragment.
        """
        if size < 1:
            raise ValueError("size must be >= 1")
        fragments = []
        cursor = vaddr
        remaining = size
        while remaining > 0:
            offset = cursor % self.frame_size
            chunk = min(remaining, self.frame_size - offset)
            fragments.append(Fragment(self.translate(cursor), chunk))
            cursor += chunk
            remaining -= chunk
        return fragments

    def max_mapped_vpage(self) -> int:
        return max(self.mapping, default=-1)


def read_virtual(mem: GuestMemory, pmap: PageMap, vaddr: int, size: int) -> bytes:
    """Read ``size`` bytes at a virtual address through the page map."""
    if size == 0:
        return b""
    return b"".join(mem.read(f.phys, f.length) for f in pmap.translate_range(vaddr, size))


def write_virtual(mem: GuestMemory, pmap: PageMap, vaddr: int, data: bytes) -> None:
    """Write ``data`` at a virtual address through the page map."""
    if not data:
        return
    pos = 0
    for frag in pmap.translate_range(vaddr, len(data)):
        mem.write(frag.phys, data[pos : pos + frag.length])
        pos += frag.length
