import pytest

from invarmon.guest import GuestSpec, ObjectGroup, ObjectKind, boot
from invarmon.harness import MonitorSpec, ScenarioConfig
from invarmon.monitor import OrderingMode


def small_guest_spec(count=6, size=40, frame_size=64, seed=0, **kw):
    """A guest tiny enough that objects straddle frames constantly."""
    return GuestSpec(
        objects=(ObjectGroup(ObjectKind.DYNAMIC_HEAP, count, size),),
        frame_size=frame_size,
        switch_rate=25,
        syscall_entries=16,
        interrupt_entries=8,
        seed=seed,
        **kw,
    )


def small_scenario(
    count=6,
    size=40,
    subset_size=2,
    run_length=20,
    attacks=(),
    ordering=OrderingMode.ROUND_ROBIN,
    repair=True,
    with_copies=True,
    seed=0,
    must_detect=False,
):
    return ScenarioConfig(
        guest=small_guest_spec(count=count, size=size, seed=seed),
        monitor=MonitorSpec(
            subset_size=subset_size,
            ordering=ordering,
            repair_enabled=repair,
            with_copies=with_copies,
        ),
        attacks=tuple(attacks),
        run_length=run_length,
        seed=seed,
        must_detect=must_detect,
    )


@pytest.fixture
def guest():
    return boot(small_guest_spec())
