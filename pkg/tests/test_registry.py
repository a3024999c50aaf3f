import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from crset.cascade import CascadeParams, test_ids
from crset.errors import CapacityExceeded, CorruptPayload, MalformedEntry, UnknownId
from crset.registry import ENTRY_TYPE, IssuerAccount, Registry, Status, StatusEntry

from .conftest import ACCOUNT


class Clock:
    def __init__(self, t=1_700_000_000):
        self.t = t

    def __call__(self):
        self.t += 1
        return self.t


@pytest.fixture
def reg(account):
    return Registry(64, account, clock=Clock())


class TestAccount:
    def test_roundtrip(self):
        acc = IssuerAccount.parse(ACCOUNT)
        assert (acc.namespace, acc.chain_id) == ("eip155", "1")
        assert str(acc) == ACCOUNT

    @pytest.mark.parametrize(
        "bad",
        ["eip155:1", "eip155:1:0x12", "EIP155:1:0x32Be343B94f860124dC4fEe278FDCBD38C102D53", "ab:1:xyz", "eip155::0x" + "0" * 40],
    )
    def test_invalid(self, bad):
        with pytest.raises(MalformedEntry):
            IssuerAccount.parse(bad)

    def test_other_namespace(self):
        assert str(IssuerAccount.parse("cosmos:cosmoshub-3:cosmos1t2uflqwqe0fsj0shcfkrvpukewcw40yjj6hdc0")).startswith("cosmos:")


class TestEntries:
    def test_shape(self, reg, rng):
        rid, entry = reg.create_entry(rng)
        assert entry.type_tag == ENTRY_TYPE == "CRSetEntry"
        assert entry.id_uri == f"{ACCOUNT}:{rid.hex()}"
        assert entry.id_uri.split(":")[-1] == rid.hex().lower()
        assert entry.to_json() == {"credentialStatus": {"id": entry.id_uri, "type": "CRSetEntry"}}

    def test_distinct(self, reg, rng):
        assert reg.create_entry(rng)[0] != reg.create_entry(rng)[0]

    def test_capacity(self, account, rng):
        reg = Registry(3, account)
        for _ in range(3):
            reg.create_entry(rng)
        with pytest.raises(CapacityExceeded):
            reg.create_entry(rng)

    def test_capacity_counts_revoked(self, account, rng):
        reg = Registry(2, account)
        a, _ = reg.create_entry(rng)
        reg.revoke(a)
        reg.create_entry(rng)
        with pytest.raises(CapacityExceeded):
            reg.create_entry(rng)

    def test_duplicate_draw_retried(self, reg):
        class Sticky(random.Random):
            def getrandbits(self, k):
                self.calls = getattr(self, "calls", 0) + 1
                return 7 if self.calls <= 3 else super().getrandbits(k)

        r = Sticky(0)
        first, _ = reg.create_entry(r)
        second, _ = reg.create_entry(r)
        assert first == (7).to_bytes(32, "big") and second != first


class TestRevoke:
    def test_revoke(self, reg, rng):
        rid, _ = reg.create_entry(rng)
        assert reg.revoke(rid) is Status.REVOKED
        rec = reg.records()[0]
        assert rec.revoked_at >= rec.created_at

    def test_idempotent(self, reg, rng):
        rid, _ = reg.create_entry(rng)
        reg.revoke(rid)
        before = [r.to_json() for r in reg.records()]
        assert reg.revoke(rid) is Status.REVOKED
        assert [r.to_json() for r in reg.records()] == before

    def test_unknown(self, reg):
        with pytest.raises(UnknownId):
            reg.revoke(bytes(32))

    def test_revoke_all(self, reg, rng):
        ids = [reg.create_entry(rng)[0] for _ in range(8)]
        for rid in ids[:3]:
            reg.revoke(rid)
        assert reg.revoke_all() == 5
        assert all(reg.status(r) is Status.REVOKED for r in ids)
        assert reg.revoke_all() == 0

    def test_revoke_all_empty(self, reg):
        assert reg.revoke_all() == 0

    def test_revoke_all_then_build(self, reg, rng):
        ids = [reg.create_entry(rng)[0] for _ in range(8)]
        reg.revoke(ids[0])
        reg.revoke_all()
        assert reg.snapshot_sets().valid == frozenset()
        c = reg.build_and_stage(rng=rng)
        assert test_ids(c, ids) == [False] * 8


class TestSnapshot:
    def test_fresh(self, reg):
        s = reg.snapshot_sets()
        assert s.valid == frozenset() and s.revoked == frozenset()

    def test_counts(self, reg, rng):
        ids = [reg.create_entry(rng)[0] for _ in range(3)]
        reg.revoke(ids[1])
        s = reg.snapshot_sets()
        assert (len(s.valid), len(s.revoked)) == (2, 1)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.one_of(st.just("issue"), st.just("revoke_all"), st.integers(0, 100)), max_size=40), st.randoms(use_true_random=False))
    def test_disjoint_and_monotone(self, ops, r):
        reg = Registry(30, IssuerAccount.parse(ACCOUNT))
        ids, revoked = [], set()
        for op in ops:
            if op == "issue":
                if len(reg) < reg.capacity:
                    ids.append(reg.create_entry(r)[0])
            elif op == "revoke_all":
                reg.revoke_all()
            elif ids:
                reg.revoke(ids[op % len(ids)])
            s = reg.snapshot_sets()
            assert not s.valid & s.revoked
            assert len(s.valid) + len(s.revoked) == len(reg) <= reg.capacity
            assert revoked <= s.revoked
            revoked = set(s.revoked)


class TestBuild:
    def test_consecutive_builds_new_salt(self, reg, rng):
        ids = [reg.create_entry(rng)[0] for _ in range(10)]
        a, b = reg.build_and_stage(rng=rng), reg.build_and_stage(rng=rng)
        assert a.salt != b.salt
        for c in (a, b):
            assert test_ids(c, ids) == [True] * 10

    def test_rebuild_after_revoke(self, reg, rng):
        ids = [reg.create_entry(rng)[0] for _ in range(10)]
        assert test_ids(reg.build_and_stage(rng=rng), ids[:1]) == [True]
        reg.revoke(ids[0])
        assert test_ids(reg.build_and_stage(rng=rng), ids[:1]) == [False]

    def test_random_registries_exact(self, account):
        r = random.Random(2024)
        for _ in range(1000):
            reg = Registry(64, account)
            ids = [reg.create_entry(r)[0] for _ in range(r.randint(0, 64))]
            for rid in r.sample(ids, r.randint(0, len(ids))):
                reg.revoke(rid)
            c = reg.build_and_stage(rng=r)
            assert test_ids(c, ids) == [reg.status(i) is Status.VALID for i in ids]

    def test_params_must_match_capacity(self, reg):
        with pytest.raises(ValueError):
            reg.build_and_stage(CascadeParams(65))


class TestPersistence:
    def test_reopen(self, tmp_path, rng):
        reg = Registry.create(tmp_path, 16, ACCOUNT, clock=Clock())
        ids = [reg.create_entry(rng)[0] for _ in range(5)]
        reg.revoke(ids[2])
        again = Registry.open(tmp_path)
        assert [r.to_json() for r in again.records()] == [r.to_json() for r in reg.records()]
        assert again.capacity == 16 and str(again.account) == ACCOUNT

    def test_log_format(self, tmp_path, rng):
        reg = Registry.create(tmp_path, 16, ACCOUNT, clock=lambda: 1234)
        rid, _ = reg.create_entry(rng)
        reg.revoke(rid)
        assert (tmp_path / "registry.log").read_text() == f"ISSUE {rid.hex()} 1234\nREVOKE {rid.hex()} 1234\n"

    def test_double_init(self, tmp_path):
        Registry.create(tmp_path, 4, ACCOUNT)
        with pytest.raises(FileExistsError):
            Registry.create(tmp_path, 4, ACCOUNT)

    def test_torn_tail_discarded(self, tmp_path, rng):
        reg = Registry.create(tmp_path, 16, ACCOUNT)
        ids = [reg.create_entry(rng)[0] for _ in range(3)]
        with open(tmp_path / "registry.log", "a") as fh:
            fh.write(f"REVOKE {ids[0].hex()[:20]}")  # crash mid-write
        again = Registry.open(tmp_path)
        assert len(again) == 3 and again.status(ids[0]) is Status.VALID

    def test_compact(self, tmp_path, rng):
        reg = Registry.create(tmp_path, 16, ACCOUNT)
        ids = [reg.create_entry(rng)[0] for _ in range(4)]
        reg.revoke(ids[1])
        reg.compact()
        assert (tmp_path / "registry.log").read_text() == ""
        reg.revoke(ids[2])
        again = Registry.open(tmp_path)
        assert {r: again.status(r) for r in ids} == {r: reg.status(r) for r in ids}

    def test_crash_between_snapshot_and_truncate(self, tmp_path, rng):
        reg = Registry.create(tmp_path, 16, ACCOUNT)
        ids = [reg.create_entry(rng)[0] for _ in range(4)]
        reg.revoke(ids[0])
        log_before = (tmp_path / "registry.log").read_bytes()
        reg.compact()
        (tmp_path / "registry.log").write_bytes(log_before)  # truncation never happened
        again = Registry.open(tmp_path)
        assert [r.to_json() for r in again.records()] == [r.to_json() for r in reg.records()]

    @pytest.mark.parametrize("cut", range(1, 7))
    def test_crash_point_injection(self, tmp_path, rng, cut):
        reg = Registry.create(tmp_path, 16, ACCOUNT, clock=Clock())
        ids = [reg.create_entry(rng)[0] for _ in range(3)]
        reg.revoke(ids[1])
        reg.revoke(ids[2])
        lines = (tmp_path / "registry.log").read_text().splitlines(keepends=True)
        # keep the first `cut - 1` whole lines plus half of the next one
        partial = "".join(lines[: cut - 1]) + (lines[cut - 1][:30] if cut <= len(lines) else "")
        (tmp_path / "registry.log").write_text(partial)
        again = Registry.open(tmp_path)
        replayed = Registry(16, reg.account)
        for line in lines[: cut - 1]:
            op, hid, ts = line.split()
            replayed._apply(op, bytes.fromhex(hid), int(ts))
        assert [r.to_json() for r in again.records()] == [r.to_json() for r in replayed.records()]

    def test_corrupt_line(self, tmp_path):
        Registry.create(tmp_path, 4, ACCOUNT)
        (tmp_path / "registry.log").write_text("ISSUE zz 1\n")
        with pytest.raises(CorruptPayload):
            Registry.open(tmp_path)

    def test_staged_file(self, tmp_path, rng):
        reg = Registry.create(tmp_path, 16, ACCOUNT)
        with pytest.raises(FileNotFoundError):
            reg.staged_bytes()
        reg.build_and_stage(rng=rng)
        assert reg.staged_bytes()[:4] == b"CRST"

    def test_snapshot_is_json_table(self, tmp_path, rng):
        reg = Registry.create(tmp_path, 16, ACCOUNT)
        reg.create_entry(rng)
        reg.compact()
        table = json.loads((tmp_path / "snapshot.json").read_text())
        assert table["records"][0]["status"] == "valid"


def test_status_entry_for_id(account):
    entry = StatusEntry.for_id(account, bytes(range(32)))
    assert entry.id_uri.endswith(":" + bytes(range(32)).hex())
