import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invarmon.errors import BoundsError, TranslationFault
from invarmon.physmem import Fragment, GuestMemory, PageMap, read_virtual, write_virtual


def identity_map(num_frames, frame_size=4096):
    pmap = PageMap(frame_size, num_frames)
    for i in range(num_frames):
        pmap.map_page(i, i)
    return pmap


class TestGuestMemory:
    def test_fresh_memory_is_zero(self):
        mem = GuestMemory(16, 4096)
        assert mem.size == 65536
        assert mem.read(0, 65536) == b"\x00" * 65536

    def test_one_byte_memory(self):
        mem = GuestMemory(1, 1)
        assert mem.size == 1

    @pytest.mark.parametrize("frames,size", [(0, 4096), (4, 0), (-1, 4096)])
    def test_bad_construction(self, frames, size):
        with pytest.raises(ValueError):
            GuestMemory(frames, size)

    def test_read_after_write(self):
        mem = GuestMemory(16, 4096)
        mem.write(100, bytes([1, 2, 3]))
        assert mem.read(100, 3) == bytes([1, 2, 3])

    def test_zero_length_read(self):
        mem = GuestMemory(16, 4096)
        assert mem.read(0, 0) == b""

    def test_read_off_by_one(self):
        mem = GuestMemory(16, 4096)
        with pytest.raises(BoundsError):
            mem.read(mem.size - 1, 2)

    def test_write_past_end(self):
        mem = GuestMemory(16, 4096)
        with pytest.raises(BoundsError):
            mem.write(mem.size, b"\x00")

    def test_overlapping_writes_last_wins(self):
        mem = GuestMemory(1, 16)
        mem.write(0, b"aaaa")
        mem.write(2, b"bb")
        assert mem.read(0, 4) == b"aabb"

    @given(
        at=st.integers(min_value=0, max_value=200),
        data=st.binary(min_size=0, max_size=56),
    )
    def test_roundtrip_property(self, at, data):
        mem = GuestMemory(4, 64)
        mem.write(at, data)
        assert mem.read(at, len(data)) == data


class TestPageMap:
    def test_translate_arithmetic(self):
        pmap = PageMap(4096, 16)
        pmap.map_page(3, 7)
        assert pmap.translate(3 * 4096 + 5) == 7 * 4096 + 5

    def test_remap_replaces(self):
        pmap = PageMap(4096, 16)
        pmap.map_page(3, 7)
        pmap.map_page(3, 9)
        assert pmap.translate(3 * 4096) == 9 * 4096

    def test_map_out_of_range_frame(self):
        pmap = PageMap(4096, 16)
        with pytest.raises(ValueError):
            pmap.map_page(0, 16)

    def test_translate_unmapped_faults(self):
        pmap = PageMap(4096, 16)
        with pytest.raises(TranslationFault):
            pmap.translate(0)

    def test_translate_range_single_frame(self):
        pmap = identity_map(16)
        frags = pmap.translate_range(0x1000, 128)
        assert frags == [Fragment(0x1000, 128)]

    def test_translate_range_page_split(self):
        pmap = identity_map(16)
        frags = pmap.translate_range(4096 - 64, 128)
        assert [f.length for f in frags] == [64, 64]
        assert frags[0].phys == 4096 - 64
        assert frags[1].phys == 4096

    def test_translate_range_hits_unmapped_page(self):
        pmap = PageMap(4096, 16)
        pmap.map_page(0, 0)
        with pytest.raises(TranslationFault):
            pmap.translate_range(4096 - 8, 16)

    def test_translate_range_zero_size(self):
        pmap = identity_map(16)
        with pytest.raises(ValueError):
            pmap.translate_range(0, 0)


@settings(max_examples=200)
@given(
    mapping=st.dictionaries(
        st.integers(min_value=0, max_value=15),
        st.integers(min_value=0, max_value=7),
        min_size=1,
    ),
    vaddr=st.integers(min_value=0, max_value=15 * 32),
    size=st.integers(min_value=1, max_value=96),
    data=st.data(),
)
def test_fragment_cover_matches_per_byte_oracle(mapping, vaddr, size, data):
    """translate_range must address exactly the bytes a byte-at-a-time
    translation would, in order."""
    frame_size = 32
    pmap = PageMap(frame_size, 8)
    for vpage, pframe in mapping.items():
        pmap.map_page(vpage, pframe)
    mem = GuestMemory(8, frame_size)
    mem.write(0, bytes(data.draw(st.binary(min_size=mem.size, max_size=mem.size))))

    covered = all((vaddr + i) // frame_size in pmap.mapping for i in range(size))
    if not covered:
        with pytest.raises(TranslationFault):
            pmap.translate_range(vaddr, size)
        return
    frags = pmap.translate_range(vaddr, size)
    assert sum(f.length for f in frags) == size
    for f in frags:
        assert f.phys // frame_size == (f.phys + f.length - 1) // frame_size
    oracle = bytes(mem.read(pmap.translate(vaddr + i), 1)[0] for i in range(size))
    assert read_virtual(mem, pmap, vaddr, size) == oracle


def test_alias_write_lands_in_new_frame_only():
    frame_size = 64
    mem = GuestMemory(4, frame_size)
    pmap = PageMap(frame_size, 4)
    pmap.map_page(0, 1)
    write_virtual(mem, pmap, 0, b"old old!")
    pmap.map_page(0, 2)  # remap: same vpage, new frame
    write_virtual(mem, pmap, 0, b"new new!")
    assert mem.read(1 * frame_size, 8) == b"old old!"
    assert mem.read(2 * frame_size, 8) == b"new new!"
    assert read_virtual(mem, pmap, 0, 8) == b"new new!"
