"""Publication layer: latest-wins blob bundles per issuer account.

``FileBlobStore`` is a local stand-in for blob-carrying transactions. Layout::

    <root>/<namespace>+<chain_id>+<address>/
        LATEST            sequence number of the newest publication
        <seq>.blob        concatenated blobs, each exactly blob_size bytes
        <seq>.json        blob_size, blob count, publish time, sha256
        .lock             serialises publishers across processes

Blob and metadata files are written under temporary names and renamed into
place before ``LATEST`` moves, so readers never see a torn bundle.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import os
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .codec import BlobBundle
from .errors import CorruptPayload, NoPublication
from .registry import IssuerAccount

__all__ = ["BlobStore", "FileBlobStore", "MemoryBlobStore", "PublishedCascade", "DEFAULT_RETENTION"]

DEFAULT_RETENTION = 8


@dataclass(frozen=True)
class PublishedCascade:
    account: IssuerAccount
    sequence: int
    bundle: BlobBundle
    published_at: float


class BlobStore(Protocol):
    def publish(self, account: IssuerAccount, bundle: BlobBundle) -> int: ...

    def fetch_latest(self, account: IssuerAccount) -> BlobBundle: ...

    def fetch(self, account: IssuerAccount, sequence: int) -> BlobBundle: ...


class MemoryBlobStore:
    def __init__(self, retention: int = DEFAULT_RETENTION) -> None:
        if retention < 1:
            raise ValueError("retention must be >= 1")
        self.retention = retention
        self.fetch_count = 0
        self._lock = threading.Lock()
        self._items: dict[str, list[PublishedCascade]] = {}

    def publish(self, account: IssuerAccount, bundle: BlobBundle) -> int:
        with self._lock:
            history = self._items.setdefault(str(account), [])
            seq = history[-1].sequence + 1 if history else 1
            history.append(PublishedCascade(account, seq, bundle, time.time()))
            del history[: -self.retention]
            return seq

    def latest(self, account: IssuerAccount) -> PublishedCascade:
        history = self._items.get(str(account))
        if not history:
            raise NoPublication(str(account))
        return history[-1]

    def fetch_latest(self, account: IssuerAccount) -> BlobBundle:
        self.fetch_count += 1
        return self.latest(account).bundle

    def fetch(self, account: IssuerAccount, sequence: int) -> BlobBundle:
        for item in self._items.get(str(account), ()):
            if item.sequence == sequence:
                return item.bundle
        raise NoPublication(f"{account} has no publication {sequence}")


class FileBlobStore:
    def __init__(self, root: str | os.PathLike, retention: int = DEFAULT_RETENTION) -> None:
        if retention < 1:
            raise ValueError("retention must be >= 1")
        self.root = Path(root)
        self.retention = retention
        self.fetch_count = 0
        self._thread_lock = threading.Lock()

    def account_dir(self, account: IssuerAccount) -> Path:
        # '+' appears in no CAIP-10 segment, so the mapping is injective
        return self.root / str(account).replace(":", "+")

    @contextmanager
    def _locked(self, directory: Path):
        directory.mkdir(parents=True, exist_ok=True)
        with self._thread_lock, open(directory / ".lock", "a") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                yield
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)

    @staticmethod
    def _write(path: Path, data: bytes) -> None:
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def _latest_seq(self, directory: Path) -> int | None:
        try:
            return int((directory / "LATEST").read_text().strip())
        except FileNotFoundError:
            return None

    def publish(self, account: IssuerAccount, bundle: BlobBundle) -> int:
        directory = self.account_dir(account)
        with self._locked(directory):
            seq = (self._latest_seq(directory) or 0) + 1
            raw = bundle.concat()
            meta = {
                "sequence": seq,
                "blob_size": bundle.blob_size,
                "blob_count": len(bundle.blobs),
                "published_at": time.time(),
                "sha256": hashlib.sha256(raw).hexdigest(),
            }
            self._write(directory / f"{seq}.blob", raw)
            self._write(directory / f"{seq}.json", json.dumps(meta).encode())
            self._write(directory / "LATEST", f"{seq}\n".encode())
            for old in range(seq - self.retention, 0, -1):
                blob = directory / f"{old}.blob"
                if not blob.exists():
                    break
                blob.unlink()
                (directory / f"{old}.json").unlink(missing_ok=True)
            return seq

    def _load(self, directory: Path, seq: int) -> BlobBundle:
        try:
            meta = json.loads((directory / f"{seq}.json").read_text())
            raw = (directory / f"{seq}.blob").read_bytes()
        except FileNotFoundError:
            raise NoPublication(f"publication {seq} not available") from None
        if hashlib.sha256(raw).hexdigest() != meta["sha256"]:
            raise CorruptPayload(f"publication {seq} fails its checksum")
        size = int(meta["blob_size"])
        if size < 1 or len(raw) != size * int(meta["blob_count"]):
            raise CorruptPayload(f"publication {seq} has inconsistent length")
        return BlobBundle(tuple(raw[i : i + size] for i in range(0, len(raw), size)), size)

    def fetch_latest(self, account: IssuerAccount) -> BlobBundle:
        self.fetch_count += 1
        directory = self.account_dir(account)
        seq = self._latest_seq(directory)
        if seq is None:
            raise NoPublication(str(account))
        return self._load(directory, seq)

    def fetch(self, account: IssuerAccount, sequence: int) -> BlobBundle:
        return self._load(self.account_dir(account), sequence)
