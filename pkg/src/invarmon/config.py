"""Strict JSON scenario configs.

Unknown keys are rejected so a config file maps to exactly one behavior;
every error names the offending field with a dotted path.
"""

from __future__ import annotations

import json
from pathlib import Path

from .attacks import AttackKind, AttackScript
from .errors import ConfigError
from .guest import GuestSpec, ObjectGroup, ObjectKind
from .harness import DEFAULT_HYPERVISOR_BUDGET, MonitorSpec, ScenarioConfig
from .monitor import OrderingMode

SCHEMA_VERSION = 1

_ATTACK_FIELDS = {
    AttackKind.SYSCALL_HOOK: {"table_index", "rogue", "via_alias"},
    AttackKind.INTERRUPT_HOOK: {"table_index", "rogue", "via_alias"},
    AttackKind.FNPTR_HIJACK: {"object_index", "offset", "rogue"},
    AttackKind.RACING: {"object_index", "hold_events"},
    AttackKind.SCHEDULER_FREEZE: {"unfreeze_event"},
}


def _require_keys(doc: dict, allowed: dict[str, bool], path: str) -> None:
    """allowed maps key -> required flag."""
    if not isinstance(doc, dict):
        raise ConfigError(path or "<root>", "expected an object")
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown field")
    for key, required in allowed.items():
        if required and key not in doc:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")


def _as_int(doc: dict, key: str, path: str, default=None, minimum=None) -> int:
    if key not in doc:
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}.{key}", "expected an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}")
    return value


def _as_bool(doc: dict, key: str, path: str, default: bool) -> bool:
    value = doc.get(key, default)
    if not isinstance(value, bool):
        raise ConfigError(f"{path}.{key}", "expected a boolean")
    return value


def _parse_guest(doc: dict, seed: int) -> GuestSpec:
    _require_keys(
        doc,
        {
            "objects": True,
            "frame_size": False,
            "num_frames": False,
            "switch_rate": False,
            "syscall_entries": False,
            "interrupt_entries": False,
        },
        "guest",
    )
    if not isinstance(doc["objects"], list):
        raise ConfigError("guest.objects", "expected a list")
    groups = []
    for i, item in enumerate(doc["objects"]):
        path = f"guest.objects[{i}]"
        _require_keys(item, {"kind": True, "count": True, "size": True}, path)
        try:
            kind = ObjectKind(item["kind"])
        except ValueError:
            choices = ", ".join(k.value for k in ObjectKind)
            raise ConfigError(f"{path}.kind", f"expected one of: {choices}") from None
        groups.append(
            ObjectGroup(
                kind,
                _as_int(item, "count", path, minimum=0),
                _as_int(item, "size", path, minimum=1),
            )
        )
    return GuestSpec(
        objects=tuple(groups),
        frame_size=_as_int(doc, "frame_size", "guest", default=4096, minimum=1),
        num_frames=_as_int(doc, "num_frames", "guest", default=None, minimum=1),
        switch_rate=_as_int(doc, "switch_rate", "guest", default=25, minimum=1),
        syscall_entries=_as_int(doc, "syscall_entries", "guest", default=512, minimum=1),
        interrupt_entries=_as_int(doc, "interrupt_entries", "guest", default=256, minimum=1),
        seed=seed,
    )


def _parse_monitor(doc: dict) -> MonitorSpec:
    _require_keys(
        doc,
        {
            "subset_size": True,
            "ordering": False,
            "repair": False,
            "with_copies": False,
            "full_digest": False,
        },
        "monitor",
    )
    ordering_raw = doc.get("ordering", OrderingMode.ROUND_ROBIN.value)
    try:
        ordering = OrderingMode(ordering_raw)
    except ValueError:
        choices = ", ".join(m.value for m in OrderingMode)
        raise ConfigError("monitor.ordering", f"expected one of: {choices}") from None
    return MonitorSpec(
        subset_size=_as_int(doc, "subset_size", "monitor", minimum=1),
        ordering=ordering,
        repair_enabled=_as_bool(doc, "repair", "monitor", True),
        with_copies=_as_bool(doc, "with_copies", "monitor", True),
        full_digest=_as_bool(doc, "full_digest", "monitor", False),
    )


def _parse_attack(doc: dict, index: int) -> AttackScript:
    path = f"attacks[{index}]"
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    try:
        kind = AttackKind(doc.get("kind"))
    except ValueError:
        choices = ", ".join(k.value for k in AttackKind)
        raise ConfigError(f"{path}.kind", f"expected one of: {choices}") from None
    allowed = {"kind": True, "trigger_event": True}
    allowed.update({name: False for name in _ATTACK_FIELDS[kind]})
    _require_keys(doc, allowed, path)
    script = AttackScript(
        kind=kind,
        trigger_event=_as_int(doc, "trigger_event", path, minimum=0),
        table_index=_as_int(doc, "table_index", path),
        rogue=_as_int(doc, "rogue", path),
        via_alias=_as_bool(doc, "via_alias", path, False) if "via_alias" in allowed else False,
        object_index=_as_int(doc, "object_index", path),
        offset=_as_int(doc, "offset", path, default=0, minimum=0),
        hold_events=_as_int(doc, "hold_events", path, minimum=1),
        unfreeze_event=_as_int(doc, "unfreeze_event", path),
    )
    if kind in (AttackKind.SYSCALL_HOOK, AttackKind.INTERRUPT_HOOK) and script.table_index is None:
        raise ConfigError(f"{path}.table_index", "missing required field")
    if kind in (AttackKind.FNPTR_HIJACK, AttackKind.RACING) and script.object_index is None:
        raise ConfigError(f"{path}.object_index", "missing required field")
    if kind is AttackKind.RACING and script.hold_events is None:
        raise ConfigError(f"{path}.hold_events", "missing required field")
    return script


def parse_config(doc: dict, seed_override: int | None = None) -> ScenarioConfig:
    _require_keys(
        doc,
        {
            "schema_version": True,
            "guest": True,
            "monitor": True,
            "attacks": False,
            "run": True,
            "expectations": False,
            "hypervisor_budget": False,
        },
        "",
    )
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}")
    run_doc = doc["run"]
    _require_keys(run_doc, {"length": True, "seed": False}, "run")
    seed = _as_int(run_doc, "seed", "run", default=0)
    if seed_override is not None:
        seed = seed_override
    expectations = doc.get("expectations", {})
    _require_keys(expectations, {"must_detect": False}, "expectations")
    attacks_doc = doc.get("attacks", [])
    if not isinstance(attacks_doc, list):
        raise ConfigError("attacks", "expected a list")
    config = ScenarioConfig(
        guest=_parse_guest(doc["guest"], seed),
        monitor=_parse_monitor(doc["monitor"]),
        attacks=tuple(_parse_attack(a, i) for i, a in enumerate(attacks_doc)),
        run_length=_as_int(run_doc, "length", "run", minimum=1),
        seed=seed,
        hypervisor_budget=_as_int(
            doc, "hypervisor_budget", "", default=DEFAULT_HYPERVISOR_BUDGET, minimum=1
        ),
        must_detect=_as_bool(expectations, "must_detect", "expectations", False),
    )
    config.validate()
    return config


def load_config(path: str | Path, seed_override: int | None = None) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON: {exc}") from exc
    return parse_config(doc, seed_override)
