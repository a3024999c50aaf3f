"""Relying-party revocation check.

A status entry ``<caip10-account>:<64 hex id>`` names the issuer account and
the credential's revocation id. The checker fetches that account's newest
bundle, decodes the cascade and runs the membership test. Any failure on the
way raises :class:`CheckUnavailable`; nothing but a successful lookup can
produce ``valid``.
"""

from __future__ import annotations

import json
from typing import Union

from .blobstore import BlobStore
from .cascade import FilterCascade, test_id
from .codec import deserialize, unpack_blobs
from .errors import CheckUnavailable, CorruptPayload, MalformedEntry, NoPublication, UnsupportedFormat
from .registry import ENTRY_TYPE, IssuerAccount, Status, StatusEntry

__all__ = ["EntryLike", "check_many", "check_status", "fetch_cascade", "parse_status_entry"]

EntryLike = Union[StatusEntry, dict, str]


def parse_status_entry(id_uri: str) -> tuple[IssuerAccount, bytes]:
    parts = id_uri.split(":")
    if len(parts) != 4:
        raise MalformedEntry(f"expected namespace:chain:address:id, got {len(parts)} segments")
    namespace, chain_id, address, id_hex = parts
    if len(id_hex) != 64:
        raise MalformedEntry(f"revocation id must be 64 hex digits, got {len(id_hex)}")
    try:
        rid = bytes.fromhex(id_hex)
    except ValueError:
        raise MalformedEntry(f"revocation id is not hex: {id_hex!r}") from None
    return IssuerAccount(namespace, chain_id, address), rid


def _entry_uri(entry: EntryLike) -> str:
    """Accept a :class:`StatusEntry`, the ``credentialStatus`` JSON object, or a bare id."""
    if isinstance(entry, StatusEntry):
        obj = {"id": entry.id_uri, "type": entry.type_tag}
    elif isinstance(entry, dict):
        obj = entry.get("credentialStatus", entry)
    elif isinstance(entry, str):
        text = entry.strip()
        if not text.startswith("{"):
            return text
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedEntry(f"invalid JSON status entry: {exc}") from None
        obj = obj.get("credentialStatus", obj) if isinstance(obj, dict) else obj
    else:
        raise MalformedEntry(f"unsupported entry type {type(entry).__name__}")
    if not isinstance(obj, dict) or not isinstance(obj.get("id"), str):
        raise MalformedEntry("status entry lacks a string 'id'")
    if obj.get("type") != ENTRY_TYPE:
        raise MalformedEntry(f"status entry type is {obj.get('type')!r}, not {ENTRY_TYPE!r}")
    return obj["id"]


def fetch_cascade(store: BlobStore, account: IssuerAccount) -> FilterCascade:
    try:
        return deserialize(unpack_blobs(store.fetch_latest(account)))
    except (NoPublication, CorruptPayload, UnsupportedFormat) as exc:
        raise CheckUnavailable(f"{account}: {exc}") from exc


def check_status(store: BlobStore, entry: EntryLike) -> Status:
    account, rid = parse_status_entry(_entry_uri(entry))
    cascade = fetch_cascade(store, account)
    return Status.VALID if test_id(cascade, rid) else Status.REVOKED


def check_many(store: BlobStore, entries: list[EntryLike]) -> list[Status | Exception]:
    """Check a batch, fetching each issuer's cascade at most once.

    Failed entries hold the exception instead of a status.
    """
    cascades: dict[IssuerAccount, FilterCascade | Exception] = {}
    out: list[Status | Exception] = []
    for entry in entries:
        try:
            account, rid = parse_status_entry(_entry_uri(entry))
        except MalformedEntry as exc:
            out.append(exc)
            continue
        if account not in cascades:
            try:
                cascades[account] = fetch_cascade(store, account)
            except CheckUnavailable as exc:
                cascades[account] = exc
        cascade = cascades[account]
        if isinstance(cascade, Exception):
            out.append(cascade)
        else:
            out.append(Status.VALID if test_id(cascade, rid) else Status.REVOKED)
    return out
