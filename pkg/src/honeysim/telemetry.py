"""Synthetic IDS alert generation and per-epoch aggregation.

Attacker actions never reach the defender directly; they are rendered into
IDS-style alerts (plus injected false positives), bundled per epoch, and
optionally digested into a bounded text summary. Alert streams can be
exported as line-delimited JSON records shaped like Suricata EVE alerts.

Severity runs 1 (low, scans and noise) to 3 (high, deep exploitation).
"""

from __future__ import annotations

import json
import random
import zlib
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from importlib import resources
from typing import Iterable, Optional, Sequence

from .attackers import AttackerAction, ExploitAction, ScanAction
from .catalog import AttackGraph, AttackStage

CLOCK_EPOCH_SECONDS = 60
CLOCK_BASE = datetime(2025, 1, 1, tzinfo=timezone.utc)

KNOWN_PORTS = {"gitlab": 443, "xdebug": 9000, "apache_struts": 8080, "docker_api": 2375}


class SignatureCatalogMissError(KeyError):
    """No signature entry exists for the requested (service, stage) pair."""


class EpochMismatchError(ValueError):
    """An alert from a different epoch was passed to aggregation."""


def stable_hash(text: str) -> int:
    # hash() is salted per interpreter run; crc32 keeps derived values reproducible
    return zlib.crc32(text.encode("utf-8"))


def attacker_src_ip(label: str) -> str:
    return f"198.51.100.{1 + stable_hash(label) % 254}"


def service_dest_ip(service_id: str) -> str:
    return f"203.0.113.{1 + stable_hash(service_id) % 254}"


def service_port(service_id: str) -> int:
    return KNOWN_PORTS.get(service_id, 8100 + stable_hash(service_id) % 100)


@dataclass(frozen=True)
class NoiseConfig:
    """Telemetry imperfection knobs; both default on at a low rate."""

    false_positive_rate: float = 0.1
    hint_corruption_rate: float = 0.1

    def __post_init__(self) -> None:
        for name in ("false_positive_rate", "hint_corruption_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True)
class IdsAlert:
    epoch: int
    clock: int
    src: str
    dest_service: str
    dest_port: int
    signature: str
    category: str
    severity: int
    stage_hint: Optional[AttackStage] = None


@dataclass(frozen=True)
class EpochObservation:
    epoch: int
    alerts: tuple[IdsAlert, ...]
    exposed_last: tuple[str, ...]


def empty_observation(epoch: int = 0) -> EpochObservation:
    return EpochObservation(epoch=epoch, alerts=(), exposed_last=())


def _load_signature_catalog() -> dict:
    with resources.files("honeysim.data").joinpath("signatures.json").open(encoding="utf-8") as fh:
        return json.load(fh)


_SIGNATURES: Optional[dict] = None


def signature_catalog() -> dict:
    global _SIGNATURES
    if _SIGNATURES is None:
        _SIGNATURES = _load_signature_catalog()
    return _SIGNATURES


def exploit_signatures(service_id: str, stage: AttackStage) -> list[dict]:
    entries = signature_catalog()["services"].get(service_id, {}).get(stage.label)
    if not entries:
        raise SignatureCatalogMissError(f"no signatures for ({service_id}, {stage.label})")
    return entries


def _corrupt_hint(stage: AttackStage, rng: random.Random) -> AttackStage:
    # shift to an adjacent stage, clamped to the valid ordinal range
    step = rng.choice((-1, 1))
    return AttackStage(min(max(stage.value + step, 0), len(AttackStage) - 1))


def synthesize_alerts(
    actions: Sequence[AttackerAction],
    epoch: int,
    noise: NoiseConfig,
    rng: random.Random,
    *,
    catalog: AttackGraph,
    src: str = "198.51.100.7",
) -> list[IdsAlert]:
    """Render one epoch of attacker actions into alerts plus injected noise.

    Scan actions yield one low-severity alert per scanned service. Exploit
    actions yield every catalog signature for their (service, stage); the
    first keeps the true stage hint, later ones may have it corrupted. False
    positives are drawn per catalog service at the configured rate.
    """
    sigs = signature_catalog()
    alerts: list[IdsAlert] = []
    clock = epoch * CLOCK_EPOCH_SECONDS

    def push(dest: str, entry: dict, hint: Optional[AttackStage]) -> None:
        nonlocal clock
        alerts.append(
            IdsAlert(
                epoch=epoch,
                clock=clock,
                src=src,
                dest_service=dest,
                dest_port=service_port(dest),
                signature=entry["signature"],
                category=entry["category"],
                severity=int(entry["severity"]),
                stage_hint=hint,
            )
        )
        clock += 1

    for action in actions:
        if isinstance(action, ScanAction):
            for service_id in action.services:
                push(service_id, sigs["scan"], AttackStage.RECONNAISSANCE)
        elif isinstance(action, ExploitAction):
            for idx, entry in enumerate(exploit_signatures(action.service, action.stage)):
                hint = action.stage
                if idx > 0 and rng.random() < noise.hint_corruption_rate:
                    hint = _corrupt_hint(action.stage, rng)
                push(action.service, entry, hint)
        else:
            raise TypeError(f"unknown action type: {action!r}")

    if noise.false_positive_rate > 0:
        for service_id in catalog.ids:
            if rng.random() < noise.false_positive_rate:
                entry = rng.choice(sigs["noise"])
                push(service_id, entry, AttackStage.RECONNAISSANCE)

    return alerts


def aggregate_epoch(alerts: Iterable[IdsAlert], exposed: Iterable[str], epoch: int) -> EpochObservation:
    """Bundle an epoch's alerts, in clock order, with the exposure in force."""
    bundled = sorted(alerts, key=lambda a: a.clock)
    for alert in bundled:
        if alert.epoch != epoch:
            raise EpochMismatchError(f"alert from epoch {alert.epoch} passed to epoch {epoch}")
    return EpochObservation(epoch=epoch, alerts=tuple(bundled), exposed_last=tuple(sorted(exposed)))


NO_ALERTS_DIGEST = "no alerts observed this epoch"


def summarize_for_prompt(obs: EpochObservation, budget_chars: int) -> str:
    """Deterministic digest grouping alerts by (service, signature).

    Groups are ordered by severity, then count; when the budget is tight the
    lowest-severity groups are dropped first so exploitation evidence survives.
    """
    if budget_chars <= 0:
        raise ValueError(f"budget_chars must be positive, got {budget_chars}")
    if not obs.alerts:
        return NO_ALERTS_DIGEST[:budget_chars]

    groups: dict[tuple[str, str], dict] = {}
    for alert in obs.alerts:
        g = groups.setdefault(
            (alert.dest_service, alert.signature),
            {"count": 0, "severity": 0, "hints": set()},
        )
        g["count"] += 1
        g["severity"] = max(g["severity"], alert.severity)
        if alert.stage_hint is not None:
            g["hints"].add(alert.stage_hint)

    ordered = sorted(
        groups.items(),
        key=lambda item: (-item[1]["severity"], -item[1]["count"], item[0][0], item[0][1]),
    )

    lines = []
    for (service, signature), g in ordered:
        hints = "/".join(s.label for s in sorted(g["hints"])) or "-"
        lines.append(f'{service}: "{signature}" x{g["count"]} sev={g["severity"]} stage={hints}')

    kept: list[str] = []
    used = 0
    for line in lines:
        extra = len(line) + (1 if kept else 0)
        if used + extra > budget_chars:
            break
        kept.append(line)
        used += extra
    if not kept:
        return lines[0][:budget_chars]
    return "\n".join(kept)


# ---------------------------------------------------------------------------
# Suricata-EVE-shaped export
# ---------------------------------------------------------------------------


def eve_timestamp(clock: int) -> str:
    moment = CLOCK_BASE + timedelta(seconds=clock)
    return moment.strftime("%Y-%m-%dT%H:%M:%S.%f%z")


def to_eve_dict(alert: IdsAlert) -> dict:
    """Map an alert onto the Suricata EVE alert record shape."""
    return {
        "timestamp": eve_timestamp(alert.clock),
        "event_type": "alert",
        "src_ip": alert.src,
        "src_port": 45000 + alert.clock % 1000,
        "dest_ip": service_dest_ip(alert.dest_service),
        "dest_port": alert.dest_port,
        "proto": "TCP",
        "alert": {
            "signature": alert.signature,
            "category": alert.category,
            "severity": alert.severity,
        },
        "honeypot": {
            "epoch": alert.epoch,
            "service": alert.dest_service,
            "stage_hint": alert.stage_hint.label if alert.stage_hint is not None else None,
        },
    }


def alerts_to_eve_jsonl(alerts: Iterable[IdsAlert]) -> str:
    return "\n".join(json.dumps(to_eve_dict(a), sort_keys=True) for a in alerts)
