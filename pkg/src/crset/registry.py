"""Issuer-side registry of revocation IDs.

State lives in a directory::

    registry.json   capacity and issuer account
    registry.log    append-only ``ISSUE <hex-id> <ts>`` / ``REVOKE <hex-id> <ts>`` lines
    snapshot.json   compacted record table (optional)
    staged.crset    most recently built cascade, waiting to be published

Replaying the log over the snapshot is idempotent, so a crash between
writing a snapshot and truncating the log loses nothing. A torn final log
line (no trailing newline) is discarded on load.
"""

from __future__ import annotations

import enum
import json
import logging
import os
import random
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

from .cascade import CascadeParams, FilterCascade, IdSets, build_cascade, default_rng, random_id
from .codec import serialize
from .errors import CapacityExceeded, CorruptPayload, MalformedEntry, UnknownId

__all__ = [
    "ENTRY_TYPE",
    "IssuerAccount",
    "Registry",
    "RegistryRecord",
    "Status",
    "StatusEntry",
]

log = logging.getLogger(__name__)

ENTRY_TYPE = "CRSetEntry"

CONFIG_FILE = "registry.json"
LOG_FILE = "registry.log"
SNAPSHOT_FILE = "snapshot.json"
STAGED_FILE = "staged.crset"

_NAMESPACE = re.compile(r"[-a-z0-9]{3,8}")
_REFERENCE = re.compile(r"[-_a-zA-Z0-9]{1,32}")
_ADDRESS = re.compile(r"[-.%a-zA-Z0-9]{1,128}")
_EVM_ADDRESS = re.compile(r"0x[0-9a-fA-F]{40}")


class Status(str, enum.Enum):
    VALID = "valid"
    REVOKED = "revoked"


@dataclass(frozen=True)
class IssuerAccount:
    """CAIP-10 account ``namespace:reference:address``."""

    namespace: str
    chain_id: str
    address: str

    def __post_init__(self) -> None:
        if not _NAMESPACE.fullmatch(self.namespace):
            raise MalformedEntry(f"invalid CAIP-2 namespace {self.namespace!r}")
        if not _REFERENCE.fullmatch(self.chain_id):
            raise MalformedEntry(f"invalid CAIP-2 reference {self.chain_id!r}")
        if not _ADDRESS.fullmatch(self.address):
            raise MalformedEntry(f"invalid account address {self.address!r}")
        if self.namespace == "eip155" and not _EVM_ADDRESS.fullmatch(self.address):
            raise MalformedEntry(f"eip155 address must be 0x + 40 hex digits: {self.address!r}")

    @classmethod
    def parse(cls, caip10: str) -> IssuerAccount:
        parts = caip10.split(":")
        if len(parts) != 3:
            raise MalformedEntry(f"CAIP-10 id needs 3 segments, got {len(parts)}")
        return cls(*parts)

    def __str__(self) -> str:
        return f"{self.namespace}:{self.chain_id}:{self.address}"


@dataclass(frozen=True)
class StatusEntry:
    id_uri: str
    type_tag: str = ENTRY_TYPE

    @classmethod
    def for_id(cls, account: IssuerAccount, rid: bytes) -> StatusEntry:
        return cls(f"{account}:{rid.hex()}")

    def to_json(self) -> dict:
        return {"credentialStatus": {"id": self.id_uri, "type": self.type_tag}}


@dataclass
class RegistryRecord:
    id: bytes
    status: Status
    created_at: int
    revoked_at: int | None = None

    def to_json(self) -> dict:
        return {
            "id": self.id.hex(),
            "status": self.status.value,
            "created_at": self.created_at,
            "revoked_at": self.revoked_at,
        }

    @classmethod
    def from_json(cls, obj: dict) -> RegistryRecord:
        return cls(
            bytes.fromhex(obj["id"]),
            Status(obj["status"]),
            int(obj["created_at"]),
            None if obj.get("revoked_at") is None else int(obj["revoked_at"]),
        )


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class Registry:
    """Record table for one CRSet instance.

    Pass ``path=None`` for a purely in-memory registry.
    """

    def __init__(
        self,
        capacity: int,
        account: IssuerAccount,
        path: str | os.PathLike | None = None,
        clock: Callable[[], float] = time.time,
    ) -> None:
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.account = account
        self.path = Path(path) if path is not None else None
        self.clock = clock
        self._records: dict[bytes, RegistryRecord] = {}

    # -- persistence ------------------------------------------------------

    @classmethod
    def create(
        cls,
        path: str | os.PathLike,
        capacity: int,
        account: IssuerAccount | str,
        clock: Callable[[], float] = time.time,
    ) -> Registry:
        if isinstance(account, str):
            account = IssuerAccount.parse(account)
        root = Path(path)
        root.mkdir(parents=True, exist_ok=True)
        if (root / CONFIG_FILE).exists():
            raise FileExistsError(f"registry already initialised in {root}")
        config = {"capacity": capacity, "account": str(account)}
        reg = cls(capacity, account, root, clock)
        _atomic_write(root / CONFIG_FILE, json.dumps(config, indent=2).encode())
        (root / LOG_FILE).touch()
        return reg

    @classmethod
    def open(cls, path: str | os.PathLike, clock: Callable[[], float] = time.time) -> Registry:
        root = Path(path)
        try:
            config = json.loads((root / CONFIG_FILE).read_text())
        except FileNotFoundError:
            raise FileNotFoundError(f"no registry in {root}") from None
        reg = cls(int(config["capacity"]), IssuerAccount.parse(config["account"]), root, clock)
        snapshot = root / SNAPSHOT_FILE
        if snapshot.exists():
            for obj in json.loads(snapshot.read_text())["records"]:
                rec = RegistryRecord.from_json(obj)
                reg._records[rec.id] = rec
        for op, rid, ts in reg._read_log():
            reg._apply(op, rid, ts)
        return reg

    def _read_log(self) -> Iterator[tuple[str, bytes, int]]:
        path = self.path / LOG_FILE
        if not path.exists():
            return
        data = path.read_text()
        lines = data.split("\n")
        if lines and lines[-1]:
            log.warning("discarding torn trailing log line %r", lines[-1])
        for lineno, line in enumerate(lines[:-1], 1):
            if not line:
                continue
            try:
                op, hex_id, ts = line.split(" ")
                rid = bytes.fromhex(hex_id)
            except ValueError:
                raise CorruptPayload(f"{path}:{lineno}: unparseable log line {line!r}") from None
            if op not in ("ISSUE", "REVOKE") or len(rid) != 32:
                raise CorruptPayload(f"{path}:{lineno}: bad log line {line!r}")
            yield op, rid, int(ts)

    def _append_log(self, lines: list[str]) -> None:
        if self.path is None or not lines:
            return
        with open(self.path / LOG_FILE, "a") as fh:
            fh.write("".join(line + "\n" for line in lines))
            fh.flush()
            os.fsync(fh.fileno())

    def _apply(self, op: str, rid: bytes, ts: int) -> None:
        rec = self._records.get(rid)
        if op == "ISSUE":
            if rec is None:
                self._records[rid] = RegistryRecord(rid, Status.VALID, ts)
        elif rec is None:
            raise CorruptPayload(f"REVOKE of unknown id {rid.hex()}")
        elif rec.status is Status.VALID:
            rec.status = Status.REVOKED
            rec.revoked_at = max(ts, rec.created_at)

    def compact(self) -> None:
        """Fold the log into ``snapshot.json`` and truncate it."""
        if self.path is None:
            return
        table = {"records": [r.to_json() for r in self._records.values()]}
        _atomic_write(self.path / SNAPSHOT_FILE, json.dumps(table).encode())
        _atomic_write(self.path / LOG_FILE, b"")

    # -- operations -------------------------------------------------------

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, rid: bytes) -> bool:
        return rid in self._records

    def records(self) -> list[RegistryRecord]:
        return list(self._records.values())

    def status(self, rid: bytes) -> Status:
        try:
            return self._records[rid].status
        except KeyError:
            raise UnknownId(rid.hex()) from None

    def _now(self) -> int:
        return int(self.clock())

    def create_entry(self, rng: random.Random | None = None) -> tuple[bytes, StatusEntry]:
        if len(self._records) >= self.capacity:
            raise CapacityExceeded(
                f"registry holds {len(self._records)} of {self.capacity} ids; start a new CRSet"
            )
        rng = rng or default_rng()
        rid = random_id(rng)
        while rid in self._records:
            rid = random_id(rng)
        ts = self._now()
        self._append_log([f"ISSUE {rid.hex()} {ts}"])
        self._apply("ISSUE", rid, ts)
        return rid, StatusEntry.for_id(self.account, rid)

    def revoke(self, rid: bytes) -> Status:
        rec = self._records.get(rid)
        if rec is None:
            raise UnknownId(rid.hex())
        if rec.status is Status.VALID:
            ts = self._now()
            self._append_log([f"REVOKE {rid.hex()} {ts}"])
            self._apply("REVOKE", rid, ts)
        return rec.status

    def revoke_all(self) -> int:
        ts = self._now()
        targets = [r.id for r in self._records.values() if r.status is Status.VALID]
        self._append_log([f"REVOKE {rid.hex()} {ts}" for rid in targets])
        for rid in targets:
            self._apply("REVOKE", rid, ts)
        return len(targets)

    def snapshot_sets(self) -> IdSets:
        valid = frozenset(r.id for r in self._records.values() if r.status is Status.VALID)
        revoked = frozenset(r.id for r in self._records.values() if r.status is Status.REVOKED)
        return IdSets(valid, revoked)

    def build_and_stage(
        self, params: CascadeParams | None = None, rng: random.Random | None = None
    ) -> FilterCascade:
        """Rebuild the cascade from scratch and stage it for publishing."""
        params = params or CascadeParams(self.capacity)
        if params.n_max != self.capacity:
            raise ValueError(f"params.n_max {params.n_max} != registry capacity {self.capacity}")
        cascade = build_cascade(self.snapshot_sets(), params, rng)
        if self.path is not None:
            _atomic_write(self.path / STAGED_FILE, serialize(cascade))
        return cascade

    def staged_bytes(self) -> bytes:
        if self.path is None:
            raise FileNotFoundError("in-memory registry has no staged file")
        try:
            return (self.path / STAGED_FILE).read_bytes()
        except FileNotFoundError:
            raise FileNotFoundError("nothing staged; run a build first") from None
