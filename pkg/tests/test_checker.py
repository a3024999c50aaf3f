import hashlib
import json
import random

import pytest

from crset.blobstore import FileBlobStore, MemoryBlobStore
from crset.checker import check_many, check_status, parse_status_entry
from crset.codec import pack_blobs, serialize
from crset.errors import CheckUnavailable, MalformedEntry
from crset.registry import IssuerAccount, Registry, Status

from .conftest import ACCOUNT

FIG2_ID = ACCOUNT + ":" + "dd" + "00" * 30 + "d3"


def publish(reg, store, rng, blob_size=131072):
    cascade = reg.build_and_stage(rng=rng)
    return store.publish(reg.account, pack_blobs(serialize(cascade), blob_size))


@pytest.fixture
def issuer(account, rng):
    reg = Registry(256, account)
    store = MemoryBlobStore()
    entries = [reg.create_entry(rng)[1] for _ in range(20)]
    return reg, store, entries


class TestParse:
    def test_fig2_shape(self):
        account, rid = parse_status_entry(FIG2_ID)
        assert account == IssuerAccount("eip155", "1", ACCOUNT.split(":")[2])
        assert len(rid) == 32 and rid[0] == 0xDD and rid[-1] == 0xD3

    @pytest.mark.parametrize(
        "bad",
        [
            ACCOUNT,  # missing id segment
            ACCOUNT + ":" + "ab" * 31,  # 31-byte id
            ACCOUNT + ":" + "zz" * 32,  # not hex
            ACCOUNT + ":" + "ab" * 32 + ":x",  # extra segment
            "eip155:1:nothex:" + "ab" * 32,
        ],
    )
    def test_malformed(self, bad):
        with pytest.raises(MalformedEntry):
            parse_status_entry(bad)


class TestCheck:
    def test_valid_end_to_end(self, issuer, rng):
        reg, store, entries = issuer
        publish(reg, store, rng)
        assert check_status(store, entries[0]) is Status.VALID

    def test_revoked_after_rebuild(self, issuer, rng):
        reg, store, entries = issuer
        publish(reg, store, rng)
        rid = bytes.fromhex(entries[3].id_uri.rsplit(":", 1)[1])
        reg.revoke(rid)
        assert check_status(store, entries[3]) is Status.VALID  # stale until republished
        publish(reg, store, rng)
        assert check_status(store, entries[3]) is Status.REVOKED

    def test_unpublished(self, issuer):
        _, store, entries = issuer
        with pytest.raises(CheckUnavailable):
            check_status(store, entries[0])

    def test_entry_forms(self, issuer, rng):
        reg, store, entries = issuer
        publish(reg, store, rng)
        e = entries[0]
        forms = [e, e.id_uri, e.to_json(), e.to_json()["credentialStatus"], json.dumps(e.to_json())]
        assert {check_status(store, f) for f in forms} == {Status.VALID}

    def test_wrong_type_tag(self, issuer, rng):
        reg, store, entries = issuer
        publish(reg, store, rng)
        with pytest.raises(MalformedEntry):
            check_status(store, {"id": entries[0].id_uri, "type": "StatusList2021Entry"})

    def test_agreement_with_registry(self, account):
        r = random.Random(77)
        reg = Registry(512, account)
        store = MemoryBlobStore()
        entries = [reg.create_entry(r)[1] for _ in range(400)]
        for e in r.sample(entries, 150):
            reg.revoke(bytes.fromhex(e.id_uri.rsplit(":", 1)[1]))
        publish(reg, store, r)
        for e in entries:
            rid = bytes.fromhex(e.id_uri.rsplit(":", 1)[1])
            assert check_status(store, e) is reg.status(rid)


class TestFailClosed:
    @pytest.fixture
    def published(self, tmp_path, account, rng):
        reg = Registry(64, account)
        store = FileBlobStore(tmp_path)
        entries = [reg.create_entry(rng)[1] for _ in range(10)]
        publish(reg, store, rng, blob_size=256)
        return store, entries, store.account_dir(account)

    def _rewrite(self, directory, mutate):
        blob = directory / "1.blob"
        meta_path = directory / "1.json"
        raw = mutate(blob.read_bytes())
        meta = json.loads(meta_path.read_text())
        meta["sha256"] = hashlib.sha256(raw).hexdigest()
        meta["blob_count"] = len(raw) // meta["blob_size"]
        blob.write_bytes(raw)
        meta_path.write_text(json.dumps(meta))

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda raw: raw[:8] + b"XRST" + raw[12:],  # magic flip
            lambda raw: raw[:-256],  # drop the last blob
            lambda raw: raw[:-1],  # blob of wrong length
            lambda raw: (len(raw)).to_bytes(8, "big") + raw[8:],  # length prefix beyond content
            lambda raw: raw[:8] + raw[8:12] + b"\x09" + raw[13:],  # version
        ],
        ids=["magic", "drop-blob", "blob-length", "prefix", "version"],
    )
    def test_corruption_unavailable(self, published, mutate):
        store, entries, directory = published
        self._rewrite(directory, mutate)
        for e in entries:
            with pytest.raises(CheckUnavailable):
                check_status(store, e)

    def test_bitrot_unavailable(self, published):
        store, entries, directory = published
        blob = directory / "1.blob"
        raw = bytearray(blob.read_bytes())
        raw[20] ^= 0xFF
        blob.write_bytes(bytes(raw))
        with pytest.raises(CheckUnavailable):
            check_status(store, entries[0])


class TestCheckMany:
    def test_single_fetch(self, issuer, rng):
        reg, store, entries = issuer
        publish(reg, store, rng)
        before = store.fetch_count
        many = entries * 5
        assert check_many(store, many) == [Status.VALID] * 100
        assert store.fetch_count - before == 1

    def test_mixed_issuers(self, rng):
        store = MemoryBlobStore()
        regs = [Registry(64, IssuerAccount("eip155", str(i), "0x" + f"{i:040x}")) for i in range(1, 4)]
        entries = []
        for reg in regs:
            entries += [reg.create_entry(rng)[1] for _ in range(5)]
            publish(reg, store, rng)
        rng.shuffle(entries)
        before = store.fetch_count
        assert check_many(store, entries) == [Status.VALID] * 15
        assert store.fetch_count - before == 3

    def test_error_slots(self, issuer, rng):
        reg, store, entries = issuer
        publish(reg, store, rng)
        stranger = IssuerAccount("eip155", "9", "0x" + "11" * 20)
        out = check_many(store, [entries[0], "garbage", f"{stranger}:{'00' * 32}"])
        assert out[0] is Status.VALID
        assert isinstance(out[1], MalformedEntry)
        assert isinstance(out[2], CheckUnavailable)

    def test_matches_individual(self, account):
        r = random.Random(5)
        store = MemoryBlobStore()
        regs = [Registry(512, IssuerAccount("eip155", str(i), "0x" + f"{i:040x}")) for i in range(1, 4)]
        entries = []
        for reg in regs:
            es = [reg.create_entry(r)[1] for _ in range(340)]
            for e in r.sample(es, 100):
                reg.revoke(bytes.fromhex(e.id_uri.rsplit(":", 1)[1]))
            publish(reg, store, r)
            entries += es
        entries = r.sample(entries, 1000)
        assert check_many(store, entries) == [check_status(store, e) for e in entries]
