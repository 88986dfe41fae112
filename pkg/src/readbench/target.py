"""Read targets: real files (buffered or direct) and simulated devices.

Both kinds answer positional block reads through the same API, so engines
never care which backend they drive.  Real-file content is the offset-derived
fill pattern from :mod:`readbench.fill`; simulated targets synthesize the
same pattern on the fly, making byte-level verification work identically.
"""

from __future__ import annotations

import mmap
import os
import time
from dataclasses import dataclass, field

from . import fill
from .devicesim import DeviceModel, SimRequest, SimState, advance, submit
from .errors import AlignmentError, IoError, PrepareError
from .rng import MASK64

ALIGNMENT = 4096
RWF_HIGHPRI = 0x1  # preadv2 high-priority (polled-completion) flag
_PREPARE_CHUNK = 1 << 20


@dataclass
class TargetHandle:
    """An open read target.  Real files carry an fd; simulated targets carry
    a device model plus a private scheduler state for standalone reads."""

    capacity: int
    fill_seed: int
    path: str | None = None
    fd: int | None = None
    direct: bool = False
    polled_hint: bool = False
    model: DeviceModel | None = None
    polled_fallback: bool = False
    _sim: SimState | None = field(default=None, repr=False)

    @property
    def is_simulated(self) -> bool:
        return self.model is not None

    @property
    def sim_state(self) -> SimState:
        if self._sim is None:
            self._sim = SimState(self.model, self.capacity)
        return self._sim

    def fresh_sim_state(self) -> SimState:
        """Independent scheduler state (engines own their request history)."""
        return SimState(self.model, self.capacity)

    def describe(self) -> dict:
        if self.is_simulated:
            return {"kind": "simulated", "model": self.model.kind,
                    "capacity": self.capacity, "fill_seed": self.fill_seed}
        return {"kind": "file", "path": self.path, "direct": self.direct,
                "capacity": self.capacity, "fill_seed": self.fill_seed}

    def close(self) -> None:
        if self.fd is not None:
            os.close(self.fd)
            self.fd = None

    def __enter__(self) -> "TargetHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def alloc_aligned(nbytes: int) -> memoryview:
    """Page-aligned writable buffer (required by direct-mode reads)."""
    return memoryview(mmap.mmap(-1, nbytes))


def recommended_file_size(device_capacity: int) -> int:
    """Largest 4096-multiple not exceeding 90% of the device capacity."""
    return int(device_capacity * 0.9) // ALIGNMENT * ALIGNMENT


def prepare_target(path: str, size: int, seed: int) -> TargetHandle:
    """Create and fill a test file; returns a buffered handle on it."""
    if size <= 0 or size % ALIGNMENT:
        raise PrepareError(f"size must be a positive multiple of {ALIGNMENT}")
    seed &= MASK64
    try:
        fd = os.open(path, os.O_CREAT | os.O_TRUNC | os.O_WRONLY, 0o644)
        try:
            for off in range(0, size, _PREPARE_CHUNK):
                n = min(_PREPARE_CHUNK, size - off)
                os.write(fd, fill.pattern_bytes(seed, off, n))
            os.fsync(fd)
        finally:
            os.close(fd)
    except OSError as exc:
        raise PrepareError(f"cannot prepare {path}: {exc}") from exc
    return open_target(path, seed, direct=False)


def open_target(path: str, seed: int, direct: bool = True,
                polled_hint: bool = False) -> TargetHandle:
    """Open an existing file (or block device) for benchmarking."""
    flags = os.O_RDONLY
    if direct:
        flags |= os.O_DIRECT
    try:
        fd = os.open(path, flags)
        size = os.lseek(fd, 0, os.SEEK_END)
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    return TargetHandle(capacity=size, fill_seed=seed & MASK64, path=path,
                        fd=fd, direct=direct, polled_hint=polled_hint)


def simulated_target(model: DeviceModel, capacity: int, seed: int = 0) -> TargetHandle:
    if capacity <= 0 or capacity % ALIGNMENT:
        raise PrepareError(f"capacity must be a positive multiple of {ALIGNMENT}")
    return TargetHandle(capacity=capacity, fill_seed=seed & MASK64, model=model)


def _check_bounds(handle: TargetHandle, offset: int, length: int) -> None:
    if offset < 0 or offset + length > handle.capacity:
        raise IoError(f"read [{offset}, {offset + length}) beyond capacity "
                      f"{handle.capacity}")
    if not handle.is_simulated and handle.direct:
        if offset % ALIGNMENT or length % ALIGNMENT:
            raise AlignmentError(
                f"direct mode requires {ALIGNMENT}-aligned offset and length, "
                f"got offset={offset} length={length}")


def _sim_read(handle: TargetHandle, offset: int, buffer, polled: bool) -> int:
    state = handle.sim_state
    req = SimRequest(offset, len(buffer), submit_time=state.clock, polled=polled)
    submit(state, req)
    while True:
        done = advance(state)
        for r, t in done:
            if r is req:
                buffer[:] = fill.pattern_bytes(handle.fill_seed, offset, len(buffer))
                return int(round(t - req.submit_time))


def read_block(handle: TargetHandle, offset: int, buffer) -> int:
    """Fill the buffer from the target; returns observed latency in us."""
    _check_bounds(handle, offset, len(buffer))
    if handle.is_simulated:
        return _sim_read(handle, offset, buffer, polled=False)
    t0 = time.perf_counter_ns()
    n = os.preadv(handle.fd, [buffer], offset)
    t1 = time.perf_counter_ns()
    if n != len(buffer):
        raise IoError(f"short read at {offset}: {n} of {len(buffer)} bytes")
    return (t1 - t0) // 1000


def read_block_polled(handle: TargetHandle, offset: int, buffer) -> int:
    """Like read_block but through the kernel's polled-completion path.

    Falls back to the plain path (and flags the handle) when the kernel or
    filesystem doesn't support polled reads.
    """
    _check_bounds(handle, offset, len(buffer))
    if handle.is_simulated:
        return _sim_read(handle, offset, buffer, polled=True)
    if not handle.direct:
        # the kernel only polls direct-mode completions
        handle.polled_fallback = True
        return read_block(handle, offset, buffer)
    try:
        t0 = time.perf_counter_ns()
        n = os.preadv(handle.fd, [buffer], offset, RWF_HIGHPRI)
        t1 = time.perf_counter_ns()
    except OSError:
        handle.polled_fallback = True
        return read_block(handle, offset, buffer)
    if n != len(buffer):
        raise IoError(f"short read at {offset}: {n} of {len(buffer)} bytes")
    return (t1 - t0) // 1000


def verify_file(handle: TargetHandle, block: int = 1 << 20) -> None:
    """Sequentially verify the whole target against its fill pattern."""
    buf = alloc_aligned(block) if not handle.is_simulated else memoryview(bytearray(block))
    offset = 0
    while offset < handle.capacity:
        n = min(block, handle.capacity - offset)
        view = buf[:n]
        if handle.is_simulated:
            view[:] = fill.pattern_bytes(handle.fill_seed, offset, n)
        else:
            got = os.preadv(handle.fd, [view], offset)
            if got != n:
                raise IoError(f"short read at {offset}: {got} of {n} bytes")
        fill.check_block(view, offset, handle.fill_seed)
        offset += n
