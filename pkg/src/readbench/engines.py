"""The five reading strategies and their execution backends.

Engine kinds:

* ``sync``   — one thread, positional reads one at a time.
* ``polled`` — like sync but through the kernel's polled-completion path.
* ``pool``   — a pool of threads each running an independent sync loop.
* ``aio``    — kernel async queue (one per worker): keep the queue full,
  wait for at least batch_size completions, refill by as many.
* ``uring``  — same fill/harvest contract over a submission/completion
  ring, with optional fixed files, fixed buffers, and a kernel-side
  submission poll thread.

Simulated targets never spawn threads: workers become logical entities in
a single deterministic event-driven loop over the device scheduler, so a
re-run with identical seeds reproduces identical statistics bit for bit.
Real-file targets use actual threads and the native syscall backends.
"""

from __future__ import annotations

import hashlib
import queue as queue_mod
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterator

from . import aio_native, fill, uring_native
from .devicesim import SimRequest, SimState, advance, submit
from .errors import AbortedRun, EngineUnsupported, IoError, VerifyError
from .measurement import (CpuUsage, LatencySample, LatencyStats,
                          aggregate_latencies, compute_throughput, measure_cpu,
                          snapshot_cpu)
from .rng import SplitMix64, worker_seed
from .target import TargetHandle, alloc_aligned, read_block, read_block_polled

ENGINE_KINDS = ("sync", "polled", "pool", "aio", "uring")
ASYNC_KINDS = ("aio", "uring")

MIN_BLOCK = 4096
MAX_BLOCK = 64 << 20
MAX_QUEUE = 4096

#: how long a harvest may wait before the run is flagged as stalled
HARVEST_TIMEOUT_S = 1.0


@dataclass(frozen=True)
class EngineConfig:
    kind: str = "sync"
    queue_size: int = 1
    batch_size: int = 1
    fixed_files: bool = False
    fixed_buffers: bool = False
    kernel_poll: bool = False
    # permit falling back to an emulated backend / plain reads when the
    # kernel lacks the native interface
    allow_fallback: bool = False

    def __post_init__(self):
        if self.kind not in ENGINE_KINDS:
            raise ValueError(f"unknown engine kind {self.kind!r}")
        if not 1 <= self.queue_size <= MAX_QUEUE:
            raise ValueError("queue_size must be in 1..4096")
        if not 1 <= self.batch_size <= self.queue_size:
            raise ValueError("batch_size must be in 1..queue_size")
        if self.kind not in ASYNC_KINDS and self.queue_size != 1:
            raise ValueError(f"{self.kind} engine has no queue")
        if self.kind != "uring" and (self.fixed_files or self.fixed_buffers
                                     or self.kernel_poll):
            raise ValueError("ring flags are only valid for the uring engine")

    def as_dict(self) -> dict:
        return {
            "kind": self.kind, "queue_size": self.queue_size,
            "batch_size": self.batch_size, "fixed_files": self.fixed_files,
            "fixed_buffers": self.fixed_buffers, "kernel_poll": self.kernel_poll,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        return cls(kind=d["kind"], queue_size=d["queue_size"],
                   batch_size=d["batch_size"], fixed_files=d["fixed_files"],
                   fixed_buffers=d["fixed_buffers"], kernel_poll=d["kernel_poll"])


@dataclass
class WorkloadSpec:
    target: TargetHandle
    pattern: str = "random"  # random | sequential
    block_size: int = 4096
    threads: int = 1
    warmup_s: float = 0.0
    duration_s: float | None = None
    request_budget: int | None = None
    seed: int = 0
    verify: bool = False

    def __post_init__(self):
        if self.pattern not in ("random", "sequential"):
            raise ValueError(f"unknown pattern {self.pattern!r}")
        b = self.block_size
        if b < MIN_BLOCK or b > MAX_BLOCK or b & (b - 1):
            raise ValueError("block_size must be a power of two in 4KiB..64MiB")
        if self.target.capacity % b:
            raise ValueError("block_size must divide target capacity")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if (self.duration_s is None) == (self.request_budget is None):
            raise ValueError("set exactly one of duration_s / request_budget")

    def describe(self) -> dict:
        return {
            "target": self.target.describe(), "pattern": self.pattern,
            "block_size": self.block_size, "threads": self.threads,
            "warmup_s": self.warmup_s, "duration_s": self.duration_s,
            "request_budget": self.request_budget, "seed": self.seed,
            "verify": self.verify,
        }


@dataclass
class RunRecord:
    workload: dict
    engine: EngineConfig
    throughput_mb_s: float
    latency: LatencyStats
    cpu: CpuUsage
    label: str
    started_at: str
    notes: str = ""
    data_checksum: str = ""
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {
            "workload": self.workload,
            "engine": self.engine.as_dict(),
            "throughput_mb_s": self.throughput_mb_s,
            "latency": self.latency.as_dict(),
            "cpu": self.cpu.as_dict(),
            "label": self.label,
            "started_at": self.started_at,
            "notes": self.notes,
            "data_checksum": self.data_checksum,
        }
        d.update(self.extra)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        known = {"workload", "engine", "throughput_mb_s", "latency", "cpu",
                 "label", "started_at", "notes", "data_checksum"}
        extra = {k: v for k, v in d.items() if k not in known}
        return cls(
            workload=d["workload"],
            engine=EngineConfig.from_dict(d["engine"]),
            throughput_mb_s=d["throughput_mb_s"],
            latency=LatencyStats.from_dict(d["latency"]),
            cpu=CpuUsage.from_dict(d["cpu"]),
            label=d["label"],
            started_at=d["started_at"],
            notes=d.get("notes", ""),
            data_checksum=d.get("data_checksum", ""),
            extra=extra,
        )


def offset_stream(workload: WorkloadSpec, worker: int) -> Iterator[int]:
    """Per-worker stream of block-aligned offsets."""
    nblocks = workload.target.capacity // workload.block_size
    if workload.pattern == "random":
        rng = SplitMix64(worker_seed(workload.seed, worker))
        while True:
            yield (rng.next_u64() % nblocks) * workload.block_size
    else:
        i = (nblocks // workload.threads) * worker
        while True:
            yield (i % nblocks) * workload.block_size
            i += 1


def split_budget(total: int, threads: int, worker: int) -> int:
    return total // threads + (1 if worker < total % threads else 0)


_CHECKSUM_MOD = 1 << 256


class _Checksum:
    """Order-independent digest of every block read (sum of block hashes)."""

    def __init__(self):
        self.value = 0
        self.blocks = 0

    def add(self, data) -> None:
        h = hashlib.sha256(bytes(data)).digest()
        self.value = (self.value + int.from_bytes(h, "big")) % _CHECKSUM_MOD
        self.blocks += 1

    def hexdigest(self) -> str:
        return format(self.value, "064x")


def _depth_and_batch(engine: EngineConfig) -> tuple[int, int]:
    if engine.kind in ASYNC_KINDS:
        return engine.queue_size, engine.batch_size
    return 1, 1


# ---------------------------------------------------------------------------
# simulated execution (virtual time, no threads)
# ---------------------------------------------------------------------------

class _SimWorker:
    __slots__ = ("stream", "remaining", "outstanding", "ready", "submitted",
                 "max_outstanding")

    def __init__(self, stream, remaining):
        self.stream = stream
        self.remaining = remaining  # None in duration mode
        self.outstanding = 0
        self.ready: list[tuple[SimRequest, float]] = []
        self.submitted = 0
        self.max_outstanding = 0


def _simulate(workload: WorkloadSpec, engine: EngineConfig):
    """Run the workload in virtual time; returns (samples, bytes, elapsed_s,
    checksum hex, notes)."""
    depth, batch = _depth_and_batch(engine)
    polled = engine.kind == "polled"
    state: SimState = workload.target.fresh_sim_state()
    warmup_us = workload.warmup_s * 1e6
    measure_end = None
    if workload.duration_s is not None:
        measure_end = warmup_us + workload.duration_s * 1e6

    workers = []
    for w in range(workload.threads):
        remaining = (split_budget(workload.request_budget, workload.threads, w)
                     if workload.request_budget is not None else None)
        workers.append(_SimWorker(offset_stream(workload, w), remaining))

    checksum = _Checksum() if workload.verify else None

    def may_submit(wk: _SimWorker, now: float) -> bool:
        if wk.remaining is not None:
            return wk.remaining > 0
        return now < measure_end

    def submit_one(idx: int, wk: _SimWorker, now: float) -> None:
        offset = next(wk.stream)
        req = SimRequest(offset, workload.block_size, submit_time=now,
                         polled=polled, tag=idx)
        submit(state, req)
        wk.outstanding += 1
        wk.max_outstanding = max(wk.max_outstanding, wk.outstanding)
        wk.submitted += 1
        if wk.remaining is not None:
            wk.remaining -= 1
        if checksum is not None:
            checksum.add(fill.pattern_bytes(workload.target.fill_seed,
                                            offset, workload.block_size))

    for idx, wk in enumerate(workers):
        for _ in range(depth):
            if may_submit(wk, 0.0):
                submit_one(idx, wk, 0.0)

    samples: list[LatencySample] = []
    measured_bytes = 0
    last_completion = warmup_us
    short_harvests = 0

    while any(wk.outstanding for wk in workers):
        for req, t in advance(state):
            workers[req.tag].ready.append((req, t))
        now = state.clock
        for idx, wk in enumerate(workers):
            # harvest once >= batch completions are ready, or on final drain
            while wk.ready and (len(wk.ready) >= batch
                                or not may_submit(wk, now)):
                if len(wk.ready) < batch and may_submit(wk, now):
                    short_harvests += 1
                harvested = wk.ready
                wk.ready = []
                wk.outstanding -= len(harvested)
                for req, t in harvested:
                    if req.submit_time >= warmup_us and (
                            measure_end is None or req.submit_time < measure_end):
                        samples.append(LatencySample(
                            duration_us=int(round(t - req.submit_time)),
                            nbytes=req.length))
                        measured_bytes += req.length
                        last_completion = max(last_completion, t)
                for _ in range(len(harvested)):
                    if may_submit(wk, now):
                        submit_one(idx, wk, now)

    elapsed_s = max(last_completion - warmup_us, 1e-9) / 1e6
    notes = ["simulated"]
    extra = {"max_inflight": max(wk.max_outstanding for wk in workers),
             "short_harvests": short_harvests}
    return samples, measured_bytes, elapsed_s, (
        checksum.hexdigest() if checksum else ""), notes, extra


# ---------------------------------------------------------------------------
# real-file execution (actual threads and syscalls)
# ---------------------------------------------------------------------------

class _EmulatedAsyncQueue:
    """Thread-pool stand-in for a kernel async queue, used as an explicit
    fallback when the native interface is unavailable."""

    def __init__(self, handle: TargetHandle, depth: int, buffers):
        self.handle = handle
        self.buffers = buffers
        self._work: queue_mod.Queue = queue_mod.Queue()
        self._done: queue_mod.Queue = queue_mod.Queue()
        self._threads = [threading.Thread(target=self._serve, daemon=True)
                         for _ in range(depth)]
        for t in self._threads:
            t.start()

    def _serve(self):
        while True:
            item = self._work.get()
            if item is None:
                return
            data, offset, buf = item
            try:
                import os
                n = os.preadv(self.handle.fd, [buf], offset)
                self._done.put((data, n))
            except OSError as exc:
                self._done.put((data, -exc.errno))

    def submit_reads(self, entries):
        for entry in entries:
            self._work.put(entry)

    def wait(self, min_nr: int, timeout_s=None):
        out = [self._done.get()]
        while len(out) < min_nr:
            out.append(self._done.get())
        while True:
            try:
                out.append(self._done.get_nowait())
            except queue_mod.Empty:
                return out

    def close(self):
        for _ in self._threads:
            self._work.put(None)
        for t in self._threads:
            t.join()


def _make_async_backend(engine: EngineConfig, handle: TargetHandle,
                        depth: int, buffers, notes: list[str]):
    try:
        if engine.kind == "aio":
            return aio_native.AioQueue(handle.fd, depth)
        return uring_native.UringQueue(
            handle.fd, depth, fixed_files=engine.fixed_files,
            fixed_buffers=engine.fixed_buffers,
            kernel_poll=engine.kernel_poll, buffers=buffers)
    except EngineUnsupported:
        if not engine.allow_fallback:
            raise
        notes.append(f"{engine.kind}: native interface unavailable, "
                     "using emulated thread backend")
        return _EmulatedAsyncQueue(handle, depth, buffers)


class _RealWorkerResult:
    __slots__ = ("samples", "nbytes", "checksum", "error", "notes",
                 "max_inflight")

    def __init__(self):
        self.samples: list[tuple[float, int]] = []  # (submit_wall_s, us)
        self.nbytes = 0
        self.checksum = _Checksum()
        self.error: BaseException | None = None
        self.notes: list[str] = []
        self.max_inflight = 0


def _real_worker(workload: WorkloadSpec, engine: EngineConfig, w: int,
                 start_wall: float, deadline: float | None,
                 result: _RealWorkerResult) -> None:
    handle = workload.target
    block = workload.block_size
    depth, batch = _depth_and_batch(engine)
    stream = offset_stream(workload, w)
    remaining = (split_budget(workload.request_budget, workload.threads, w)
                 if workload.request_budget is not None else None)
    seed = handle.fill_seed

    def record(submit_t: float, dur_us: int, offset: int, buf) -> None:
        if workload.verify:
            fill.check_block(buf, offset, seed)
            result.checksum.add(buf)
        result.samples.append((submit_t, dur_us))
        result.nbytes += block

    _issued = [0]

    def want_more(now: float) -> bool:
        if remaining is not None:
            return _issued[0] < remaining
        return now < deadline

    if engine.kind in ("sync", "polled", "pool"):
        buf = alloc_aligned(block) if handle.direct else memoryview(bytearray(block))
        reader = read_block_polled if engine.kind == "polled" else read_block
        while True:
            now = time.monotonic()
            if not want_more(now):
                break
            offset = next(stream)
            dur = reader(handle, offset, buf)
            _issued[0] += 1
            result.max_inflight = max(result.max_inflight, 1)
            record(now, dur, offset, buf)
        if engine.kind == "polled" and handle.polled_fallback:
            result.notes.append("polled reads unsupported, fell back to plain reads")
        return

    buffers = [alloc_aligned(block) if handle.direct else memoryview(bytearray(block))
               for _ in range(depth)]
    backend = _make_async_backend(engine, handle, depth, buffers, result.notes)
    try:
        inflight: dict[int, tuple[float, int]] = {}  # slot -> (submit, offset)
        free = deque(range(depth))

        def fill_queue() -> None:
            entries = []
            now = time.monotonic()
            while free and want_more(now):
                slot = free.popleft()
                offset = next(stream)
                entries.append((slot, offset, buffers[slot]))
                inflight[slot] = (now, offset)
                _issued[0] += 1
            if entries:
                backend.submit_reads(entries)
            result.max_inflight = max(result.max_inflight, len(inflight))

        fill_queue()
        stalled = False
        while inflight:
            done = backend.wait(min(batch, len(inflight)), HARVEST_TIMEOUT_S)
            if not done:
                if not stalled:
                    result.notes.append("harvest stalled beyond timeout")
                    stalled = True
                continue
            now = time.monotonic()
            for data, res in done:
                slot = int(data)
                submit_t, offset = inflight.pop(slot)
                if res != block:
                    raise IoError(f"async read at {offset} returned {res}")
                record(submit_t, int((now - submit_t) * 1e6), offset,
                       buffers[slot])
                free.append(slot)
            fill_queue()
    finally:
        backend.close()


def _run_real(workload: WorkloadSpec, engine: EngineConfig):
    start_wall = time.monotonic()
    deadline = None
    if workload.duration_s is not None:
        deadline = start_wall + workload.warmup_s + workload.duration_s
    results = [_RealWorkerResult() for _ in range(workload.threads)]

    def runner(w: int) -> None:
        try:
            _real_worker(workload, engine, w, start_wall, deadline, results[w])
        except BaseException as exc:  # collected and re-raised by the parent
            results[w].error = exc

    if workload.threads == 1:
        runner(0)
    else:
        threads = [threading.Thread(target=runner, args=(w,))
                   for w in range(workload.threads)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    for r in results:
        if isinstance(r.error, VerifyError):
            raise r.error
    failed = [r.error for r in results if r.error is not None]
    if failed:
        if isinstance(failed[0], EngineUnsupported):
            raise failed[0]
        raise AbortedRun(f"{len(failed)} worker(s) failed: {failed[0]!r}") from failed[0]

    warmup_cut = start_wall + workload.warmup_s
    samples: list[LatencySample] = []
    measured_bytes = 0
    last = warmup_cut
    block = workload.block_size
    for r in results:
        for submit_t, dur in r.samples:
            if submit_t >= warmup_cut and (deadline is None or submit_t < deadline):
                samples.append(LatencySample(duration_us=max(dur, 0), nbytes=block))
                measured_bytes += block
                last = max(last, submit_t + dur / 1e6)
    elapsed = max(last - warmup_cut, 1e-9)

    checksum = _Checksum()
    if workload.verify:
        checksum.value = sum(r.checksum.value for r in results) % _CHECKSUM_MOD
    notes: list[str] = []
    for r in results:
        for n in r.notes:
            if n not in notes:
                notes.append(n)
    extra = {"max_inflight": max(r.max_inflight for r in results)}
    return samples, measured_bytes, elapsed, (
        checksum.hexdigest() if workload.verify else ""), notes, extra


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def run(workload: WorkloadSpec, engine: EngineConfig) -> RunRecord:
    """Execute one (workload, engine) combination and assemble its record."""
    if engine.kind in ("sync", "polled") and workload.threads != 1:
        raise ValueError(f"{engine.kind} engine runs single-threaded")
    from .report import encode_label  # local import: report depends on us

    started_at = datetime.now(timezone.utc).isoformat()
    cpu_before = snapshot_cpu()
    wall0 = time.monotonic()
    if workload.target.is_simulated:
        samples, nbytes, elapsed_s, checksum, notes, extra = _simulate(
            workload, engine)
    else:
        samples, nbytes, elapsed_s, checksum, notes, extra = _run_real(
            workload, engine)
    wall = max(time.monotonic() - wall0, 1e-9)
    cpu = measure_cpu(cpu_before, snapshot_cpu(), wall)

    label = encode_label(engine, workload.threads)
    if label.note:
        notes = notes + [label.note]
    return RunRecord(
        workload=workload.describe(),
        engine=engine,
        throughput_mb_s=compute_throughput(nbytes, elapsed_s),
        latency=aggregate_latencies(samples),
        cpu=cpu,
        label=label.text,
        started_at=started_at,
        notes="; ".join(notes),
        data_checksum=checksum,
        extra=extra,
    )


def run_sync(workload: WorkloadSpec) -> RunRecord:
    return run(workload, EngineConfig(kind="sync"))


def run_polled(workload: WorkloadSpec) -> RunRecord:
    return run(workload, EngineConfig(kind="polled"))


def run_threadpool(workload: WorkloadSpec) -> RunRecord:
    return run(workload, EngineConfig(kind="pool"))


def run_kernel_async(workload: WorkloadSpec, engine: EngineConfig) -> RunRecord:
    if engine.kind != "aio":
        raise ValueError("run_kernel_async requires an aio engine config")
    return run(workload, engine)


def run_ring(workload: WorkloadSpec, engine: EngineConfig) -> RunRecord:
    if engine.kind != "uring":
        raise ValueError("run_ring requires a uring engine config")
    return run(workload, engine)


def read_scattered(workload: WorkloadSpec, engine: EngineConfig,
                   offsets: list[int] | None = None) -> LatencyStats:
    """Multi-block single-wait reads: submit a group of blocks at once,
    wait for all of them, record the group's makespan.  Repeats for the
    request budget (one budget unit = one group)."""
    if engine.kind not in ASYNC_KINDS:
        raise ValueError("scattered reads require an async engine")
    if workload.request_budget is None:
        raise ValueError("scattered reads run in request-budget mode")
    if offsets is not None and len(offsets) > engine.queue_size:
        raise ValueError("more offsets than queue slots")

    handle = workload.target
    block = workload.block_size
    reps = workload.request_budget
    stream = offset_stream(workload, 0)

    def group() -> list[int]:
        if offsets is not None:
            return offsets
        return [next(stream) for _ in range(engine.queue_size)]

    makespans: list[LatencySample] = []
    if handle.is_simulated:
        state = handle.fresh_sim_state()
        for _ in range(reps):
            offs = group()
            t0 = state.clock
            reqs = [SimRequest(o, block, submit_time=t0) for o in offs]
            for r in reqs:
                submit(state, r)
            pending = set(map(id, reqs))
            t_last = t0
            while pending:
                for req, t in advance(state):
                    pending.discard(id(req))
                    t_last = max(t_last, t)
            makespans.append(LatencySample(
                duration_us=int(round(t_last - t0)), nbytes=block * len(offs)))
    else:
        n = len(offsets) if offsets is not None else engine.queue_size
        buffers = [alloc_aligned(block) if handle.direct
                   else memoryview(bytearray(block)) for _ in range(n)]
        notes: list[str] = []
        backend = _make_async_backend(engine, handle, n, buffers, notes)
        try:
            for _ in range(reps):
                offs = group()
                t0 = time.monotonic()
                backend.submit_reads(
                    [(i, o, buffers[i]) for i, o in enumerate(offs)])
                got = 0
                while got < len(offs):
                    got += len(backend.wait(len(offs) - got, HARVEST_TIMEOUT_S))
                makespans.append(LatencySample(
                    duration_us=int((time.monotonic() - t0) * 1e6),
                    nbytes=block * len(offs)))
        finally:
            backend.close()
    return aggregate_latencies(makespans)


def probe_engines() -> dict[str, dict]:
    """Which engines (and ring features) this system supports."""
    import os
    info: dict[str, dict] = {
        "sync": {"available": True, "detail": "positional reads"},
        "polled": {"available": hasattr(os, "preadv"),
                   "detail": "preadv2 high-priority reads; falls back to "
                             "plain reads where unsupported"},
        "pool": {"available": True, "detail": "thread pool of positional reads"},
    }
    ok, err = aio_native.probe()
    info["aio"] = {"available": ok, "detail": err or "kernel async queue"}
    ok, err = uring_native.probe()
    entry = {"available": ok, "detail": err or "submission/completion ring"}
    if ok:
        for feature, kwargs in (("fixed_buffers", {"fixed_buffers": True}),
                                ("kernel_poll", {"kernel_poll": True})):
            fok, ferr = uring_native.probe(**kwargs)
            entry[feature] = fok
    info["uring"] = entry
    return info
