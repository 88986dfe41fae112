"""Acceptance suite: one test per headline criterion.

Each test prints a single [PASS]/[FAIL] line (run with `pytest -s` to see
them for passing tests) and then asserts.  Tolerances are pinned here and
must not be loosened to make a failing criterion pass.
"""

import dataclasses
import math
import random

import pytest

from readbench.devicesim import DeviceModel, preset_model
from readbench.engines import (EngineConfig, WorkloadSpec, probe_engines,
                               read_scattered, run, run_kernel_async,
                               run_polled, run_ring, run_sync,
                               run_threadpool)
from readbench.errors import VerifyError
from readbench.measurement import LatencySample, aggregate_latencies
from readbench.report import encode_label, parse_label, scatter_summary
from readbench.sweep import BestConfigRow, paper_best_configs, whole_scan
from readbench.target import (open_target, prepare_target, simulated_target,
                              verify_file)


def _report(num, desc, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {num:2d}: {desc}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


def flat_model(latency_us=100.0, parallelism=8, **over):
    base = dict(kind="solid-state", base_latency_us=latency_us,
                per_byte_us=0.0, parallelism=parallelism,
                jitter_kind="none", jitter_scale_us=0.0,
                spike_probability=0.0, spike_duration_us=0.0,
                bandwidth_limit_bps=0.0, rng_seed=1)
    base.update(over)
    return DeviceModel(**base)


def test_criterion_01_percentile_oracle():
    rng = random.Random(20260826)
    failures = 0
    for _ in range(200):
        n = rng.randrange(1, 100001)
        durs = [rng.randrange(0, 10**7) for _ in range(n)]
        got = aggregate_latencies(
            [LatencySample(duration_us=d, nbytes=1) for d in durs])
        s = sorted(durs)
        p99 = s[max(1, math.ceil(0.99 * n)) - 1]
        p999 = s[max(1, math.ceil(0.999 * n)) - 1]
        if (got.count, got.min_us, got.max_us, got.p99_us, got.p999_us) != \
                (n, s[0], s[-1], p99, p999):
            failures += 1
        elif abs(got.mean_us - sum(s) / n) > 1e-9 * max(1, sum(s) / n):
            failures += 1
    _report(1, "percentiles match sort-based nearest-rank oracle exactly",
            failures == 0, f"{failures}/200 mismatches")


def test_criterion_02_hdd_random_read():
    block = 262144
    with simulated_target(preset_model("hdd"), 1 << 30, seed=7) as h:
        rec = run_sync(WorkloadSpec(target=h, pattern="random",
                                    block_size=block, request_budget=10**4,
                                    seed=1))
    ls = rec.latency
    transfer_fast = block / 250e6 * 1e6   # outermost-rate transfer, us
    transfer_slow = block / 150e6 * 1e6
    ok = (11400 <= ls.mean_us <= 12600
          and ls.min_us >= transfer_fast
          and ls.max_us <= 25000 + transfer_slow)
    _report(2, "simulated disk 256 KiB random read: mean 12 ms +-5%, "
               "min/max bounded", ok,
            f"mean={ls.mean_us:.1f}us min={ls.min_us} max={ls.max_us}")


def test_criterion_03_hdd_whole_scan():
    with simulated_target(preset_model("hdd"), 1 << 30, seed=7) as h:
        tl = whole_scan(h, block=1 << 20)
    first, last = tl.window_mb_s[0], tl.window_mb_s[-1]
    monotone = all(b <= a * 1.001
                   for a, b in zip(tl.window_mb_s, tl.window_mb_s[1:]))
    ok = (abs(first - 250) <= 12.5 and abs(last - 150) <= 7.5 and monotone)
    _report(3, "simulated disk whole-scan: 250 -> 150 MB/s +-5%, "
               "monotone non-increasing", ok,
            f"first={first:.1f} last={last:.1f} monotone={monotone}")


def test_criterion_04_ssd_and_ull_latency():
    with simulated_target(preset_model("sata-ssd"), 1 << 28, seed=1) as h:
        ssd = run_sync(WorkloadSpec(target=h, block_size=4096,
                                    request_budget=10**4, seed=2)).latency
    with simulated_target(preset_model("ull"), 1 << 28, seed=1) as h:
        ull = run_sync(WorkloadSpec(target=h, block_size=4096,
                                    request_budget=10**4, seed=3)).latency
    ok = (126 <= ssd.mean_us <= 154) and (11 <= ull.min_us <= 13)
    _report(4, "flash 4 KiB mean 140 us +-10%; ultra-low-latency min "
               "12 us +-1", ok,
            f"ssd_mean={ssd.mean_us:.1f}us ull_min={ull.min_us}us")


def test_criterion_05_littles_law_grid():
    import time
    t0 = time.monotonic()
    latency, block = 200.0, 4096
    worst = 0.0
    for parallelism in (1, 4, 16):
        model = flat_model(latency_us=latency, parallelism=parallelism)
        with simulated_target(model, 1 << 28, seed=1) as h:
            for depth in (1, 4, 16):
                rec = run_kernel_async(
                    WorkloadSpec(target=h, block_size=block,
                                 request_budget=2000, seed=4),
                    EngineConfig(kind="aio", queue_size=depth))
                expect = min(depth, parallelism) * block / latency  # MB/s
                worst = max(worst,
                            abs(rec.throughput_mb_s - expect) / expect)
    elapsed = time.monotonic() - t0
    ok = worst <= 0.10 and elapsed < 30.0
    _report(5, "throughput = min(depth, parallelism) x block/latency "
               "+-10% over 3x3 grid", ok,
            f"worst_rel_err={worst:.3f} elapsed={elapsed:.1f}s")


def test_criterion_06_depth1_equivalence():
    model = flat_model(latency_us=150.0, parallelism=4)
    with simulated_target(model, 1 << 26, seed=1) as h:
        w = WorkloadSpec(target=h, block_size=4096, request_budget=2000,
                         seed=5)
        sync_mean = run_sync(w).latency.mean_us
        aio_mean = run_kernel_async(
            w, EngineConfig(kind="aio", queue_size=1)).latency.mean_us
        ring_mean = run_ring(
            w, EngineConfig(kind="uring", queue_size=1)).latency.mean_us
    ok = (abs(aio_mean - sync_mean) <= 0.10 * sync_mean
          and abs(ring_mean - sync_mean) <= 0.10 * sync_mean)
    _report(6, "depth-1 async engines match synchronous mean latency "
               "within 10%", ok,
            f"sync={sync_mean:.1f} aio={aio_mean:.1f} ring={ring_mean:.1f}")


def test_criterion_07_cross_engine_data_equivalence(tmp_path):
    path = str(tmp_path / "accept.dat")
    seed = 20260826
    prepare_target(path, size=64 << 20, seed=seed).close()

    sums = []
    runners = [
        ("sync", lambda w: run_sync(w)),
        ("polled", lambda w: run_polled(w)),
        ("pool", lambda w: run_threadpool(w)),
        ("aio", lambda w: run_kernel_async(
            w, EngineConfig(kind="aio", queue_size=16,
                            allow_fallback=True))),
        ("uring", lambda w: run_ring(
            w, EngineConfig(kind="uring", queue_size=16,
                            allow_fallback=True))),
    ]
    for _, make in runners:
        with open_target(path, seed=seed, direct=False) as h:
            w = WorkloadSpec(target=h, pattern="random", block_size=65536,
                             request_budget=256, seed=9, verify=True)
            sums.append(make(w).data_checksum)
    with open_target(path, seed=seed, direct=False) as h:
        verify_file(h)

    flip_at = 31 << 20
    with open(path, "r+b") as f:
        f.seek(flip_at)
        orig = f.read(1)
        f.seek(flip_at)
        f.write(bytes([orig[0] ^ 0x40]))
    named_offset = None
    with open_target(path, seed=seed, direct=False) as h:
        try:
            verify_file(h)
        except VerifyError as exc:
            named_offset = exc.offset
    ok = (len(set(sums)) == 1 and len(sums[0]) == 64
          and named_offset == (flip_at // 8) * 8)
    _report(7, "five engines agree on the data checksum; corruption is "
               "detected at its offset", ok,
            f"distinct_sums={len(set(sums))} offset={named_offset}")


def test_criterion_08_scattered_reads():
    latency = 100.0
    with simulated_target(flat_model(latency_us=latency, parallelism=32),
                          1 << 26, seed=1) as h:
        w = WorkloadSpec(target=h, block_size=4096, request_budget=50,
                         seed=6)
        e = EngineConfig(kind="aio", queue_size=32)
        parallel_ok = all(
            read_scattered(w, e, offsets=[i * 4096 for i in range(n)]
                           ).mean_us <= 1.2 * latency
            for n in (1, 5, 20))
    with simulated_target(preset_model("hdd"), 1 << 30, seed=7) as h:
        w = WorkloadSpec(target=h, pattern="random", block_size=262144,
                         request_budget=200, seed=6)
        e = EngineConfig(kind="aio", queue_size=32)
        one = read_scattered(
            w, EngineConfig(kind="aio", queue_size=1)).mean_us
        # groups of five random blocks submitted together
        five = read_scattered(
            w, EngineConfig(kind="aio", queue_size=5)).mean_us
    ok = parallel_ok and five < 5 * one
    _report(8, "scattered read makespan: ~1 service time on parallel "
               "devices, sub-linear on disk", ok,
            f"parallel_ok={parallel_ok} hdd_ratio={five / one:.2f}")


def test_criterion_09_label_codec():
    literals = {
        "P": (EngineConfig(kind="sync"), 1),
        "A16B1": (EngineConfig(kind="aio", queue_size=16), 1),
        "A64B1": (EngineConfig(kind="aio", queue_size=64), 1),
        "U1B1F": (EngineConfig(kind="uring", queue_size=1,
                               fixed_files=True), 1),
        "A16B1T3": (EngineConfig(kind="aio", queue_size=16), 3),
        "U64B1MFT2": (EngineConfig(kind="uring", queue_size=64,
                                   fixed_buffers=True, fixed_files=True), 2),
        "U32B1": (EngineConfig(kind="uring", queue_size=32), 1),
    }
    literal_ok = all(parse_label(text) == expect
                     for text, expect in literals.items())

    rng = random.Random(99)
    failures = 0
    for _ in range(10**4):
        kind = rng.choice(("sync", "pool", "aio", "uring"))
        if kind == "sync":
            threads, e = 1, EngineConfig(kind="sync")
        elif kind == "pool":
            threads, e = rng.randrange(2, 65), EngineConfig(kind="pool")
        else:
            threads = rng.randrange(1, 65)
            q = 2 ** rng.randrange(0, 10)
            b = 2 ** rng.randrange(0, int(math.log2(q)) + 1)
            e = EngineConfig(
                kind=kind, queue_size=q, batch_size=b,
                fixed_files=kind == "uring" and rng.random() < 0.5,
                fixed_buffers=kind == "uring" and rng.random() < 0.5)
        if parse_label(encode_label(e, threads).text) != (e, threads):
            failures += 1
    ok = literal_ok and failures == 0
    _report(9, "label codec round-trips 10^4 configurations and the "
               "published literals", ok,
            f"literal_ok={literal_ok} roundtrip_failures={failures}")


def test_criterion_10_best_config_tables():
    expected = {
        "aio": (("optane", 2, 16, 4), ("nvme", 3, 16, 1),
                ("ssd", 1, 16, 2), ("hdd", 1, 16, 16)),
        "uring": (("optane", 3, 4, 2), ("nvme", 3, 16, 2),
                  ("ssd", 1, 32, 8), ("hdd", 1, 1, 1)),
        "uring+poll": (("optane", 2, 16, 2), ("nvme", 2, 32, 8),
                       ("ssd", 1, 16, 4), ("hdd", 1, 1, 1)),
    }
    mismatches = []
    for kind, rows in expected.items():
        table = paper_best_configs(kind)
        want = tuple(BestConfigRow(*r) for r in rows)
        if table.rows != want or table.engine_kind != kind:
            mismatches.append(kind)
    _report(10, "published best-configuration tables match field for field",
            not mismatches, f"mismatches={mismatches or 'none'}")


def test_criterion_11_determinism_replay():
    def one_run():
        with simulated_target(preset_model("nvme-ssd"), 1 << 26, seed=3) as h:
            w = WorkloadSpec(target=h, block_size=4096, request_budget=500,
                             seed=8, verify=True)
            return run_ring(w, EngineConfig(kind="uring", queue_size=32,
                                            batch_size=4))

    a, b = one_run(), one_run()
    b = dataclasses.replace(b, started_at=a.started_at, cpu=a.cpu)
    stats_ok = (a.latency == b.latency
                and a.throughput_mb_s == b.throughput_mb_s
                and a.data_checksum == b.data_checksum)
    svg_ok = scatter_summary([a]) == scatter_summary([b])
    _report(11, "simulated replay is bit-identical; scatter output is "
               "byte-identical", stats_ok and svg_ok,
            f"stats_ok={stats_ok} svg_ok={svg_ok}")


def test_criterion_12_warmup_exclusion():
    latency = 100.0
    model = flat_model(latency_us=latency, parallelism=1,
                       degraded_until_us=20000.0, degraded_factor=10.0)
    with simulated_target(model, 1 << 26, seed=1) as h:
        w = WorkloadSpec(target=h, block_size=4096, duration_s=0.2,
                         warmup_s=0.02, seed=2)
        mean = run_sync(w).latency.mean_us
    ok = abs(mean - latency) <= 0.05 * latency
    _report(12, "warm-up window excluded: post-warm-up mean matches the "
               "steady-state model", ok, f"mean={mean:.2f}us")


def test_criterion_13_real_hardware_smoke(tmp_path):
    path = str(tmp_path / "smoke.dat")
    seed = 13
    prepare_target(path, size=256 << 20, seed=seed).close()
    try:
        open_target(path, seed=seed, direct=True).close()
    except OSError:
        pytest.skip("direct I/O unavailable on this filesystem")

    probes = probe_engines()
    results = []
    for kind, queue in (("sync", 1), ("polled", 1), ("pool", 1),
                        ("aio", 16), ("uring", 16)):
        if not probes[kind]["available"]:
            results.append((kind, "skipped: unsupported"))
            continue
        with open_target(path, seed=seed, direct=True) as h:
            w = WorkloadSpec(target=h, pattern="random", block_size=4096,
                             threads=2 if kind == "pool" else 1,
                             duration_s=5.0, warmup_s=0.5, seed=10,
                             verify=True)
            if kind == "sync":
                rec = run_sync(w)
            elif kind == "polled":
                rec = run_polled(w)
            elif kind == "pool":
                rec = run_threadpool(w)
            elif kind == "aio":
                rec = run_kernel_async(
                    w, EngineConfig(kind="aio", queue_size=queue))
            else:
                rec = run_ring(
                    w, EngineConfig(kind="uring", queue_size=queue))
        depth_ok = rec.extra.get("max_inflight", 1) <= queue
        results.append((kind, f"n={rec.latency.count} "
                              f"mean={rec.latency.mean_us}us "
                              f"depth_ok={depth_ok}"))
        assert rec.latency.count > 0
        assert depth_ok, f"{kind}: queue-depth invariant violated"
    _report(13, "real-hardware smoke: verified 4 KiB random runs on every "
                "supported engine", True,
            "; ".join(f"{k}: {d}" for k, d in results))
