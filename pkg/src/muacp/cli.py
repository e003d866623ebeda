"""Command line entry points.

    muacp bench-codec    --out DIR [--iterations N] [--seed S]
    muacp sim-consensus  --config FILE --out DIR [--seeds A:B]
    muacp sim-scale      --config FILE --out DIR [--events]
    muacp check-traces   PROTOCOL.json ... [--max-len N] [--out DIR]
    muacp check-bound    DIST.json ... [--out DIR]
    muacp validate       VECTOR.hex ...

Exit codes: 0 success, 1 a check or simulation found a violation,
2 unusable input (missing file, malformed config).

Every command that takes --out writes a manifest.json naming the run's
inputs, seeds, and outputs.  The manifest (and bench-codec's
timing.json) contain wall-clock data; every other output file is a
pure function of config and seed, byte for byte.

The MUACP_TICK_MS environment variable sets how many milliseconds one
simulation tick represents in reports (default 1.0).
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import time

from . import __version__, compression, wire
from .consensus import CampaignConfig, run_campaign
from .fipa import (
    check_trace_inclusion,
    load_protocol,
    procedural_bound_check,
)
from .workloads import ScaleConfig, run_scale


class UsageError(Exception):
    pass


def _tick_ms() -> float:
    try:
        return float(os.environ.get("MUACP_TICK_MS", "1.0"))
    except ValueError:
        return 1.0


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fp:
            return json.load(fp)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read {path}: {e}") from e


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(obj, fp, indent=2, sort_keys=True)
        fp.write("\n")


def _write_manifest(
    out_dir: str, command: str, argv: list[str], seeds: list[int],
    outputs: list[str],
) -> None:
    _write_json(
        os.path.join(out_dir, "manifest.json"),
        {
            "command": command,
            "argv": argv,
            "seeds": seeds,
            "outputs": sorted(outputs),
            "version": __version__,
            "wall_clock_unix": time.time(),
        },
    )


def _csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(",".join(header) + "\n")
        for row in rows:
            fp.write(",".join("" if v is None else str(v) for v in row) + "\n")


def _parse_seeds(spec: str) -> list[int]:
    """Accept '1,2,3' or 'start:count'."""
    if ":" in spec:
        start, count = spec.split(":", 1)
        return list(range(int(start), int(start) + int(count)))
    return [int(s) for s in spec.split(",") if s]


# -- bench-codec ---------------------------------------------------------------


def _bench_messages(seed: int) -> dict[str, list[wire.Message]]:
    rng = random.Random(seed)
    fixed = {
        "empty_ping": [wire.message(wire.Verb.PING)],
        "tell_one_option": [
            wire.message(
                wire.Verb.TELL,
                options=(wire.Option(wire.OptionType.VALUE, b"\x01" * 9),),
            )
        ],
        "ask_query": [
            wire.message(
                wire.Verb.ASK,
                options=(wire.opt_content_type(wire.CONTENT_LITERAL),),
                payload=b"p(1)",
                correlation_id=7,
            )
        ],
    }
    rand = []
    for _ in range(256):
        options = tuple(
            wire.Option(
                rng.randrange(256),
                bytes(rng.randrange(256) for _ in range(rng.randrange(12))),
            )
            for _ in range(rng.randrange(4))
        )
        rand.append(
            wire.message(
                wire.Verb(rng.randrange(4)),
                qos=rng.randrange(4),
                flags=rng.randrange(4),
                message_id=rng.randrange(1 << 16),
                sequence=rng.randrange(1 << 16),
                correlation_id=rng.randrange(1 << 16),
                options=options,
                payload=bytes(
                    rng.randrange(256) for _ in range(rng.randrange(64))
                ),
            )
        )
    fixed["random_mix"] = rand
    return fixed


def cmd_bench_codec(args, argv) -> int:
    groups = _bench_messages(args.seed)
    iterations = args.iterations

    size_rows = []
    for name, msgs in sorted(groups.items()):
        sizes = [m.wire_size for m in msgs]
        size_rows.append(
            [name, len(msgs), round(sum(sizes) / len(sizes), 3),
             min(sizes), max(sizes)]
        )

    pool = [m for msgs in groups.values() for m in msgs]
    blobs = [wire.encode(m) for m in pool]
    for m, b in zip(pool, blobs):
        if wire.decode(b) != m:
            raise AssertionError("codec roundtrip failure in benchmark pool")

    t0 = time.perf_counter_ns()
    for _ in range(iterations):
        for m in pool:
            wire.encode(m)
    encode_ns = (time.perf_counter_ns() - t0) / (iterations * len(pool))
    t0 = time.perf_counter_ns()
    for _ in range(iterations):
        for b in blobs:
            wire.decode(b)
    decode_ns = (time.perf_counter_ns() - t0) / (iterations * len(blobs))

    timing = {
        "messages": len(pool),
        "iterations": iterations,
        "encode_us_mean": encode_ns / 1000.0,
        "decode_us_mean": decode_ns / 1000.0,
    }
    print(
        f"bench-codec: {len(pool)} messages, "
        f"encode {timing['encode_us_mean']:.3f} us, "
        f"decode {timing['decode_us_mean']:.3f} us"
    )
    for row in size_rows:
        print(f"  {row[0]}: mean {row[2]} bytes over {row[1]}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _csv(
            os.path.join(args.out, "sizes.csv"),
            ["class", "count", "mean_bytes", "min_bytes", "max_bytes"],
            size_rows,
        )
        _write_json(os.path.join(args.out, "timing.json"), timing)
        _write_manifest(
            args.out, "bench-codec", argv, [args.seed],
            ["sizes.csv", "timing.json"],
        )
    return 0


# -- sim-consensus ---------------------------------------------------------------


_CAMPAIGN_COLUMNS = [
    "seed", "n", "crashed", "decided", "survivors",
    "all_survivors_decided", "safety_ok", "core_messages", "prepares",
    "promises", "accepts", "accepteds", "nacks", "decides",
    "first_decision_tick", "last_decision_tick", "ticks",
]


def cmd_sim_consensus(args, argv) -> int:
    cfg = CampaignConfig.from_json(_load_json(args.config))
    if args.seeds:
        cfg = CampaignConfig(
            base=cfg.base,
            seeds=tuple(_parse_seeds(args.seeds)),
            crash_count=cfg.crash_count,
            crash_window=cfg.crash_window,
        )
    runs, corpus = run_campaign(cfg, collect_corpus=True)

    rows = [run.row() for run in runs]
    unsafe = [r for r in rows if not r["safety_ok"]]
    incomplete = [r for r in rows if not r["all_survivors_decided"]]
    summary = {
        "runs": len(rows),
        "n": cfg.base.n,
        "crash_count": cfg.crash_count,
        "safety_violations": len(unsafe),
        "liveness_misses": len(incomplete),
        "mean_core_messages": (
            round(sum(r["core_messages"] for r in rows) / len(rows), 3)
            if rows else 0
        ),
        "seeds": list(cfg.seeds),
    }
    print(
        f"sim-consensus: {summary['runs']} runs at n={summary['n']}, "
        f"{summary['safety_violations']} safety violations, "
        f"{summary['liveness_misses']} liveness misses, "
        f"mean core messages {summary['mean_core_messages']}"
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _csv(
            os.path.join(args.out, "runs.csv"),
            _CAMPAIGN_COLUMNS,
            [[row[c] for c in _CAMPAIGN_COLUMNS] for row in rows],
        )
        _write_json(os.path.join(args.out, "summary.json"), summary)
        dist = compression.MessageDistribution.from_counts(corpus)
        _write_json(
            os.path.join(args.out, "corpus_dist.json"), dist.to_json()
        )
        outputs = ["runs.csv", "summary.json", "corpus_dist.json"]
        if args.log_first and runs:
            runs[0].outcome.log.write_jsonl(
                os.path.join(args.out, "events_first_seed.jsonl")
            )
            outputs.append("events_first_seed.jsonl")
        _write_manifest(
            args.out, "sim-consensus", argv, list(cfg.seeds), outputs
        )
    return 0 if not unsafe else 1


# -- sim-scale -------------------------------------------------------------------


def cmd_sim_scale(args, argv) -> int:
    cfg = ScaleConfig.from_json(_load_json(args.config))
    report, net = run_scale(cfg)
    summary = report.to_json()
    clean = summary["workload"]["clean"]
    lat = summary["metrics"]["latency_ticks"]
    print(
        f"sim-scale: n={cfg.n}, {summary['metrics']['sends']} sends, "
        f"max queue depth {summary['metrics']['max_queue_depth']}, "
        f"p99 latency {lat['p99']} ticks, "
        f"workload {'clean' if clean else 'INCOMPLETE'}"
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "report.json"), summary)
        with open(
            os.path.join(args.out, "gauges.csv"), "w", encoding="utf-8"
        ) as fp:
            fp.write(report.metrics.gauges_csv())
        outputs = ["report.json", "gauges.csv"]
        if args.events:
            net.log.write_jsonl(os.path.join(args.out, "events.jsonl"))
            outputs.append("events.jsonl")
        _write_manifest(
            args.out, "sim-scale", argv, [cfg.seed, cfg.sim.seed], outputs
        )
    return 0 if clean else 1


# -- check-traces ----------------------------------------------------------------


def cmd_check_traces(args, argv) -> int:
    results = []
    ok = True
    for path in args.protocols:
        try:
            auto = load_protocol(path)
        except OSError as e:
            raise UsageError(str(e)) from e
        inclusion = check_trace_inclusion(auto, max_len=args.max_len)
        bound = procedural_bound_check(auto)
        results.append(
            {
                "protocol": auto.name,
                "path": path,
                "traces": inclusion.traces_checked,
                "covered": inclusion.covered,
                "uncovered": [
                    {"failed_at": u.failed_at, "reason": u.reason}
                    for u in inclusion.uncovered
                ],
                "states": bound.state_count,
                "max_semantic_messages": bound.max_semantic_messages,
                "bound_ok": bound.ok,
            }
        )
        line_ok = inclusion.ok and bound.ok
        ok = ok and line_ok
        print(
            f"check-traces: {auto.name}: {inclusion.covered}/"
            f"{inclusion.traces_checked} traces covered to length "
            f"{args.max_len}, bound {bound.max_semantic_messages}<="
            f"{bound.state_count}: {'ok' if line_ok else 'FAIL'}"
        )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "traces.json"), results)
        _write_manifest(args.out, "check-traces", argv, [], ["traces.json"])
    return 0 if ok else 1


# -- check-bound -----------------------------------------------------------------


def cmd_check_bound(args, argv) -> int:
    reports = []
    ok = True
    for path in args.distributions:
        try:
            dist = compression.load_distribution(path)
        except OSError as e:
            raise UsageError(str(e)) from e
        except compression.CompressionError as e:
            raise UsageError(f"{path}: {e}") from e
        rep = compression.check_bound(dist)
        reports.append({"path": path, **rep.to_json()})
        ok = ok and rep.ok
        print(
            f"check-bound: {path}: expected {rep.expected_total_bits:.6f} "
            f"bits <= bound {rep.bound_bits:.6f}: "
            f"{'ok' if rep.ok else 'FAIL'}"
        )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "bounds.json"), reports)
        _write_manifest(args.out, "check-bound", argv, [], ["bounds.json"])
    return 0 if ok else 1


# -- validate --------------------------------------------------------------------


def cmd_validate(args, argv) -> int:
    ok = True
    for path in args.vectors:
        try:
            with open(path, "r", encoding="utf-8") as fp:
                blob = bytes.fromhex("".join(fp.read().split()))
        except (OSError, ValueError) as e:
            raise UsageError(f"cannot read {path}: {e}") from e
        sidecar = os.path.splitext(path)[0] + ".json"
        expect = None
        if os.path.exists(sidecar):
            expect = _load_json(sidecar)
        violations = wire.validate(blob)
        error_name = None
        msg = None
        try:
            msg = wire.decode(blob)
        except wire.WireError as e:
            error_name = type(e).__name__

        if expect is None:
            status = "well-formed" if not violations else (
                "malformed: " + "; ".join(
                    f"[{v.clause}] {v.detail}" for v in violations
                )
            )
            print(f"validate: {path}: {status}")
            ok = ok and not violations
            continue

        failures = []
        if expect.get("expect") == "error":
            if error_name is None:
                failures.append("decoded but an error was expected")
            elif expect.get("error") and expect["error"] != error_name:
                failures.append(
                    f"raised {error_name}, expected {expect['error']}"
                )
        else:
            if error_name is not None:
                failures.append(f"failed to decode: {error_name}")
            elif msg is not None:
                checks = {
                    "verb": msg.header.verb.name,
                    "qos": msg.header.qos,
                    "flags": msg.header.flags,
                    "message_id": msg.header.message_id,
                    "sequence": msg.header.sequence,
                    "correlation_id": msg.header.correlation_id,
                    "payload_hex": msg.payload.hex(),
                    "options": [
                        [o.code, o.value.hex()] for o in msg.options
                    ],
                    "size": msg.wire_size,
                }
                for key, expected in expect.items():
                    if key == "expect":
                        continue
                    if key not in checks:
                        raise UsageError(f"{sidecar}: unknown field {key!r}")
                    if checks[key] != expected:
                        failures.append(
                            f"{key}: got {checks[key]!r}, "
                            f"expected {expected!r}"
                        )
        if failures:
            ok = False
            print(f"validate: {path}: FAIL ({'; '.join(failures)})")
        else:
            print(f"validate: {path}: ok")
    return 0 if ok else 1


# -- entry point --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="muacp",
        description="four-verb agent messaging toolkit",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench-codec", help="size and speed of the codec")
    p.add_argument("--iterations", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_bench_codec)

    p = sub.add_parser("sim-consensus", help="seeded decree campaigns")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", help="override: 'a,b,c' or 'start:count'")
    p.add_argument("--out")
    p.add_argument(
        "--log-first", action="store_true",
        help="also write the first seed's full event log",
    )
    p.set_defaults(fn=cmd_sim_consensus)

    p = sub.add_parser("sim-scale", help="mixed-workload scaling run")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument(
        "--events", action="store_true", help="also write the event log"
    )
    p.set_defaults(fn=cmd_sim_scale)

    p = sub.add_parser("check-traces", help="protocol trace inclusion")
    p.add_argument("protocols", nargs="+", metavar="PROTOCOL.json")
    p.add_argument("--max-len", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_check_traces)

    p = sub.add_parser("check-bound", help="entropy bound on distributions")
    p.add_argument("distributions", nargs="+", metavar="DIST.json")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_check_bound)

    p = sub.add_parser("validate", help="check wire vectors")
    p.add_argument("vectors", nargs="+", metavar="VECTOR.hex")
    p.set_defaults(fn=cmd_validate)

    return parser


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args, list(argv))
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
