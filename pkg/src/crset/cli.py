"""Command-line entry point.

Exit codes: 0 success, 1 domain error (capacity, unknown id, nothing
published, check unavailable), 2 usage error.
"""

from __future__ import annotations

import argparse
import fcntl
import json
import logging
import os
import random
import sys
import time
from contextlib import contextmanager
from pathlib import Path

from . import __version__
from .blobstore import FileBlobStore
from .cascade import CascadeParams, build_cascade, IdSets, random_id
from .checker import check_status
from .codec import DEFAULT_BLOB_SIZE, deserialize, pack_blobs, serialize
from .errors import CheckUnavailable, CRSetError
from .privacy import FeatureRegressionAdversary, RandomGuessAdversary, fit_ridge, generate_dataset, run_ccig
from .registry import Registry

DIR_ENV = "CRSET_DIR"
STORE_ENV = "CRSET_STORE"


def _rng(seed: str | None) -> random.Random:
    if seed is None:
        return random.SystemRandom()
    return random.Random(int(seed, 16))


def _hex_seed(text: str) -> str:
    try:
        int(text, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be hexadecimal: {text!r}") from None
    return text


def _capacities(text: str) -> list[int]:
    try:
        return [int(float(part)) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad capacity list {text!r}") from None


def _store(args) -> FileBlobStore:
    root = args.store or os.environ.get(STORE_ENV) or Path(args.dir) / "store"
    return FileBlobStore(root)


@contextmanager
def _registry_lock(directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / ".lock", "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def _emit(args, payload: dict, text: str) -> None:
    print(json.dumps(payload) if args.json else text)


def cmd_init(args) -> int:
    reg = Registry.create(args.dir, args.capacity, args.account)
    _emit(args, {"dir": str(args.dir), "capacity": reg.capacity, "account": str(reg.account)},
          f"initialised registry for {reg.account} (capacity {reg.capacity}) in {args.dir}")
    return 0


def cmd_issue(args) -> int:
    reg = Registry.open(args.dir)
    rng = _rng(args.seed)
    entries = [reg.create_entry(rng)[1] for _ in range(args.count)]
    if args.json:
        print(json.dumps([e.to_json() for e in entries]))
    else:
        for e in entries:
            print(e.id_uri)
    return 0


def cmd_revoke(args) -> int:
    reg = Registry.open(args.dir)
    try:
        rid = bytes.fromhex(args.id.split(":")[-1])
    except ValueError:
        print(f"error: not a hex id: {args.id}", file=sys.stderr)
        return 2
    status = reg.revoke(rid)
    _emit(args, {"id": rid.hex(), "status": status.value}, f"{rid.hex()} {status.value}")
    return 0


def cmd_revoke_all(args) -> int:
    count = Registry.open(args.dir).revoke_all()
    _emit(args, {"revoked": count}, f"revoked {count}")
    return 0


def cmd_build(args) -> int:
    reg = Registry.open(args.dir)
    params = CascadeParams(reg.capacity, p=args.p)
    cascade = reg.build_and_stage(params, _rng(args.seed))
    size = len(serialize(cascade))
    info = {
        "levels": len(cascade),
        "bytes": size,
        "bits_per_capacity": 8 * size / reg.capacity,
        "restarts": cascade.restarts,
    }
    _emit(args, info, f"levels={info['levels']} bytes={size} "
          f"bits/capacity={info['bits_per_capacity']:.3f}")
    return 0


def cmd_publish(args) -> int:
    reg = Registry.open(args.dir)
    data = reg.staged_bytes()
    bundle = pack_blobs(data, args.blob_size)
    seq = _store(args).publish(reg.account, bundle)
    _emit(args, {"sequence": seq, "blobs": len(bundle)},
          f"published sequence {seq} ({len(bundle)} blob(s) of {args.blob_size} bytes)")
    return 0


def cmd_check(args) -> int:
    try:
        status = check_status(_store(args), args.entry)
    except CheckUnavailable as exc:
        logging.getLogger(__name__).debug("check unavailable: %s", exc)
        _emit(args, {"status": "unavailable", "reason": str(exc)}, "unavailable")
        return 1
    _emit(args, {"status": status.value}, status.value)
    return 0


def bench(capacities: list[int], rng: random.Random, p: float = 0.5) -> list[dict]:
    """Time one full-capacity padded build per capacity."""
    rows = []
    for n in capacities:
        params = CascadeParams(n, p=p)
        start = time.perf_counter()
        cascade = build_cascade(IdSets(), params, rng)
        elapsed = time.perf_counter() - start
        size = len(serialize(cascade))
        rows.append({
            "capacity": n,
            "seconds": elapsed,
            "bytes": size,
            "levels": len(cascade),
            "bits_per_capacity": 8 * size / n,
        })
    return rows


def cmd_bench(args) -> int:
    rows = bench(args.capacities, _rng(args.seed), args.p)
    if args.json:
        print(json.dumps(rows))
    else:
        print(f"{'capacity':>10} {'seconds':>9} {'bytes':>10} {'levels':>6} {'bits/cap':>8}")
        for r in rows:
            print(f"{r['capacity']:>10} {r['seconds']:>9.3f} {r['bytes']:>10} "
                  f"{r['levels']:>6} {r['bits_per_capacity']:>8.3f}")
    return 0


def cmd_privacy_eval(args) -> int:
    rng = _rng(args.seed)
    rows = generate_dataset(args.samples, args.capacity, padded=args.padded, rng=rng)
    X = [r.features for r in rows]
    out = {}
    for label in ("revoked_count", "valid_count"):
        report, _ = fit_ridge(X, [getattr(r, label) for r in rows], l2=args.l2, rng=rng)
        out[label] = vars(report)
    if args.csv:
        from .privacy import write_dataset_csv

        with open(args.csv, "w", newline="") as fh:
            write_dataset_csv(rows, fh)
    if args.json:
        print(json.dumps(out))
    else:
        for label, rep in out.items():
            print(f"{label}: R2={rep['r2']:.4f} MSE={rep['mse']:.1f} "
                  f"var={rep['baseline_variance']:.1f} n={rep['n_samples']}")
    return 0


def cmd_ccig(args) -> int:
    rng = _rng(args.seed)
    adversary = RandomGuessAdversary(rng) if args.adversary == "random" else FeatureRegressionAdversary()
    rate = run_ccig(adversary, args.l, args.n, args.trials, rng, padded=not args.unpadded)
    _emit(args, {"win_rate": rate, "advantage": abs(rate - 0.5)},
          f"win_rate={rate:.4f} advantage={abs(rate - 0.5):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crset", description="Padded Bloom filter cascade revocation")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--dir", type=Path, default=Path(os.environ.get(DIR_ENV, ".")),
                        help=f"registry directory (default ${DIR_ENV} or .)")
    parser.add_argument("--store", type=Path, default=None,
                        help=f"blob store directory (default ${STORE_ENV} or DIR/store)")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a registry")
    p.add_argument("--capacity", type=int, required=True)
    p.add_argument("--account", required=True, help="CAIP-10 account id")
    p.add_argument("--dir", type=Path, default=argparse.SUPPRESS)
    p.set_defaults(func=cmd_init, locked=True)

    p = sub.add_parser("issue", help="mint revocation ids")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=_hex_seed)
    p.set_defaults(func=cmd_issue, locked=True)

    p = sub.add_parser("revoke", help="revoke one id")
    p.add_argument("id", help="hex revocation id or full status entry id")
    p.set_defaults(func=cmd_revoke, locked=True)

    p = sub.add_parser("revoke-all", help="emergency-revoke every valid id")
    p.set_defaults(func=cmd_revoke_all, locked=True)

    p = sub.add_parser("build", help="rebuild and stage the cascade")
    p.add_argument("--p", type=float, default=0.5, choices=[0.5, 0.53])
    p.add_argument("--seed", type=_hex_seed)
    p.set_defaults(func=cmd_build, locked=True)

    p = sub.add_parser("publish", help="publish the staged cascade")
    p.add_argument("--blob-size", type=int, default=DEFAULT_BLOB_SIZE)
    p.set_defaults(func=cmd_publish, locked=True)

    p = sub.add_parser("check", help="check a status entry")
    p.add_argument("entry", help="status entry id or credentialStatus JSON")
    p.set_defaults(func=cmd_check, locked=False)

    p = sub.add_parser("bench", help="creation time and size per capacity")
    p.add_argument("--capacities", type=_capacities, default=[1000, 10000, 100000])
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--seed", type=_hex_seed)
    p.set_defaults(func=cmd_bench, locked=False)

    p = sub.add_parser("privacy-eval", help="ridge regression attack on cascade features")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--capacity", type=int, required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--padded", dest="padded", action="store_true", default=True)
    group.add_argument("--unpadded", dest="padded", action="store_false")
    p.add_argument("--l2", type=float, default=1.0)
    p.add_argument("--csv", type=Path, help="also write the dataset as CSV")
    p.add_argument("--seed", type=_hex_seed)
    p.set_defaults(func=cmd_privacy_eval, locked=False)

    p = sub.add_parser("ccig", help="chosen-count indistinguishability game")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--unpadded", action="store_true")
    p.add_argument("--adversary", choices=["regression", "random"], default="regression")
    p.add_argument("--seed", type=_hex_seed)
    p.set_defaults(func=cmd_ccig, locked=False)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        if args.locked:
            with _registry_lock(args.dir):
                return args.func(args)
        return args.func(args)
    except CRSetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
