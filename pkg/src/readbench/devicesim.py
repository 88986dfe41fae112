"""Deterministic parametric latency models of storage devices.

Four device classes (spinning disk, SATA SSD, NVMe SSD, ultra-low-latency
SSD) are reduced to a handful of parameters, plus an event-driven completion
scheduler so the read engines get a hardware-free backend.  Everything is
seeded and replayable: identical (model, seed, request sequence) produce
bit-identical latencies.

Model components:

* HDD: a random read pays a distance-proportional seek plus a uniform
  rotational wait plus transfer; a read starting exactly where the previous
  one ended pays transfer only.  Transfer rate falls linearly from the
  outer edge of the platter to the inner edge.
* Solid-state: fixed base latency + per-byte transfer + a jitter draw;
  the SATA class additionally suffers rare long stalls (firmware
  defragmentation pauses).
* parallelism: how many requests the device services concurrently;
  excess submissions queue FIFO.
* bandwidth_limit: a shared transfer channel that serializes the transfer
  portion of concurrent requests, capping aggregate throughput.
* The polled completion path replaces the heavy-tailed jitter draw with a
  uniform draw of the same mean, shrinking the maximum without moving the
  average; base and transfer components are unchanged.
"""

from __future__ import annotations

import heapq
import os
from collections import deque
from dataclasses import dataclass, field, fields, replace
from typing import Any

from .errors import Backpressure, NoSuchPreset
from .rng import SplitMix64

MODEL_SCHEMA_VERSION = 1

#: heavy-tail jitter is cap * U^HEAVY_TAIL_POWER: mean = cap/(power+1),
#: 99.9th percentile ~ 0.99 * cap, maximum -> cap.
HEAVY_TAIL_POWER = 9


@dataclass(frozen=True)
class DeviceModel:
    kind: str  # hdd | sata-ssd | nvme-ssd | ull | custom
    # spinning-disk parameters
    seek_min_us: float = 0.0
    seek_max_us: float = 0.0
    rotation_period_us: float = 0.0
    outer_rate_bps: float = 0.0
    inner_rate_bps: float = 0.0
    # solid-state parameters
    base_latency_us: float = 0.0
    per_byte_us: float = 0.0
    # shared behavior
    parallelism: int = 1
    jitter_kind: str = "none"  # none | uniform | heavy-tail
    jitter_scale_us: float = 0.0  # mean of the jitter draw
    spike_probability: float = 0.0
    spike_duration_us: float = 0.0
    bandwidth_limit_bps: float = 0.0  # 0 = unlimited
    # degraded start-up window, used to exercise warm-up exclusion
    degraded_until_us: float = 0.0
    degraded_factor: float = 1.0
    rng_seed: int = 1

    def __post_init__(self):
        if self.seek_min_us > self.seek_max_us:
            raise ValueError("seek_min_us must be <= seek_max_us")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        if not 0.0 <= self.spike_probability <= 1.0:
            raise ValueError("spike_probability must be in [0, 1]")
        if self.kind == "hdd" and (self.outer_rate_bps <= 0 or self.inner_rate_bps <= 0):
            raise ValueError("hdd transfer rates must be > 0")
        if self.jitter_kind not in ("none", "uniform", "heavy-tail"):
            raise ValueError(f"unknown jitter kind {self.jitter_kind!r}")

    def with_seed(self, rng_seed: int) -> "DeviceModel":
        return replace(self, rng_seed=rng_seed)


# Calibrated so a desk-scale simulation lands on the headline figures of
# the device classes: ~12 ms mean random access on the spinning disk with a
# 250 -> 150 MB/s sequential profile, ~140 us 4 KiB reads on SATA flash
# with ~48 ms stall spikes, ~90 us on NVMe flash, and a 12 us floor with a
# 2.3 GB/s ceiling on the ultra-low-latency class.
_PRESETS: dict[str, DeviceModel] = {
    "hdd": DeviceModel(
        kind="hdd",
        seek_min_us=2700.0,
        seek_max_us=14700.0,
        rotation_period_us=8000.0,
        outer_rate_bps=250e6,
        inner_rate_bps=150e6,
        parallelism=1,
    ),
    "sata-ssd": DeviceModel(
        kind="sata-ssd",
        base_latency_us=130.0,
        per_byte_us=1.0 / 560.0,  # 560 MB/s interface burst
        parallelism=32,  # legacy SATA command queue depth
        jitter_kind="heavy-tail",
        jitter_scale_us=2.0,
        spike_probability=1e-4,
        spike_duration_us=48000.0,
        bandwidth_limit_bps=250e6,
    ),
    "nvme-ssd": DeviceModel(
        kind="nvme-ssd",
        base_latency_us=90.0,
        per_byte_us=1.0 / 3200.0,
        parallelism=128,
        jitter_kind="heavy-tail",
        jitter_scale_us=4.0,
        bandwidth_limit_bps=3.2e9,
    ),
    "ull": DeviceModel(
        kind="ull",
        base_latency_us=10.0,
        per_byte_us=1.0 / 2300.0,
        parallelism=16,
        jitter_kind="heavy-tail",
        jitter_scale_us=4.0,
        bandwidth_limit_bps=2.3e9,
    ),
}

_ALIASES = {"ssd": "sata-ssd", "sata": "sata-ssd", "nvme": "nvme-ssd",
            "optane": "ull", "ultra": "ull"}


def preset_model(name: str) -> DeviceModel:
    key = _ALIASES.get(name, name)
    if key not in _PRESETS:
        raise NoSuchPreset(f"no device model preset named {name!r}")
    return _PRESETS[key]


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def save_model(model: DeviceModel, path: str) -> None:
    """Write a model as `key = value` lines."""
    with open(path, "w") as f:
        f.write(f"# readbench device model, schema {MODEL_SCHEMA_VERSION}\n")
        f.write(f"schema = {MODEL_SCHEMA_VERSION}\n")
        for fld in fields(DeviceModel):
            f.write(f"{fld.name} = {getattr(model, fld.name)}\n")


def load_model(path_or_name: str) -> DeviceModel:
    """Resolve a preset name, or parse a key-value model file."""
    try:
        return preset_model(path_or_name)
    except NoSuchPreset:
        pass
    if not os.path.exists(path_or_name):
        raise NoSuchPreset(f"{path_or_name!r} is neither a preset "
                           f"({', '.join(preset_names())}) nor a model file")
    values: dict[str, Any] = {}
    field_types = {f.name: f.type for f in fields(DeviceModel)}
    with open(path_or_name) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key == "schema":
                continue
            if key not in field_types:
                raise ValueError(f"unknown model field {key!r}")
            typ = field_types[key]
            if typ in ("str", str):
                values[key] = raw
            elif typ in ("int", int):
                values[key] = int(raw)
            else:
                values[key] = float(raw)
    return DeviceModel(**values)


@dataclass
class SimRequest:
    offset: int
    length: int
    submit_time: float
    polled: bool = False
    tag: Any = None


@dataclass
class SimState:
    """Mutable device state; confine one instance to one scheduler context."""

    model: DeviceModel
    capacity: int
    rng: SplitMix64 = field(init=False)
    clock: float = 0.0
    head_position: int = 0
    last_end: int = 0
    channel_free: float = 0.0
    pending: deque = field(default_factory=deque)
    in_flight: list = field(default_factory=list)  # heap of (t, seq, req)
    active: int = 0
    pending_bound: int = 65536
    _seq: int = 0

    def __post_init__(self):
        self.rng = SplitMix64(self.model.rng_seed)


def _jitter(model: DeviceModel, rng: SplitMix64, polled: bool) -> float:
    if model.jitter_kind == "none" or model.jitter_scale_us <= 0:
        return 0.0
    u = rng.next_float()
    if model.jitter_kind == "uniform" or polled:
        # uniform with the same mean as the heavy tail, max = 2 * mean
        return 2.0 * model.jitter_scale_us * u
    cap = (HEAVY_TAIL_POWER + 1) * model.jitter_scale_us
    return cap * u ** HEAVY_TAIL_POWER


def service_time(model: DeviceModel, state: SimState, offset: int, length: int,
                 polled: bool = False, at: float | None = None) -> float:
    """Service duration in microseconds for one request.

    Draws from the state's RNG and updates head/sequential-detection state,
    so call order defines the replayable request history.
    """
    at = state.clock if at is None else at
    if model.kind == "hdd":
        if offset == state.last_end:
            access = 0.0
        else:
            frac = abs(offset - state.head_position) / state.capacity
            seek = model.seek_min_us + (model.seek_max_us - model.seek_min_us) * frac
            rotation = state.rng.uniform(0.0, model.rotation_period_us)
            access = seek + rotation
        rate = model.outer_rate_bps + (
            model.inner_rate_bps - model.outer_rate_bps) * (offset / state.capacity)
        transfer = length / rate * 1e6
        state.head_position = offset + length
        state.last_end = offset + length
        total = access + transfer
    else:
        total = model.base_latency_us + length * model.per_byte_us
        total += _jitter(model, state.rng, polled)
        if model.spike_probability > 0:
            if state.rng.next_float() < model.spike_probability:
                total += model.spike_duration_us
    if at < model.degraded_until_us:
        total *= model.degraded_factor
    return total


def submit(state: SimState, req: SimRequest) -> None:
    """Queue a request; it enters service FIFO as parallelism slots free."""
    if req.offset < 0 or req.offset + req.length > state.capacity:
        raise ValueError("request outside device capacity")
    if len(state.pending) >= state.pending_bound:
        raise Backpressure(f"more than {state.pending_bound} requests queued")
    state.pending.append(req)
    _fill_slots(state)


def _next_pending(state: SimState) -> SimRequest:
    # spinning disk: shortest seek first among queued requests (drive/elevator
    # scheduling); everything else services strictly FIFO
    if state.model.kind == "hdd" and len(state.pending) > 1:
        best = min(range(len(state.pending)),
                   key=lambda i: (abs(state.pending[i].offset - state.head_position), i))
        req = state.pending[best]
        del state.pending[best]
        return req
    return state.pending.popleft()


def _fill_slots(state: SimState) -> None:
    model = state.model
    while state.active < model.parallelism and state.pending:
        req = _next_pending(state)
        start = max(req.submit_time, state.clock)
        dur = service_time(model, state, req.offset, req.length,
                           polled=req.polled, at=start)
        completion = start + dur
        if model.bandwidth_limit_bps > 0:
            tb = req.length / model.bandwidth_limit_bps * 1e6
            # the transfer is the trailing part of service and must
            # serialize on the shared channel
            channel_start = max(state.channel_free, completion - tb)
            completion = channel_start + tb
            state.channel_free = completion
        state._seq += 1
        heapq.heappush(state.in_flight, (completion, state._seq, req))
        state.active += 1


def advance(state: SimState) -> list[tuple[SimRequest, float]]:
    """Pop every completion due at the next event time.

    Returns (request, completion_time) pairs; the clock never moves
    backwards and stays put when nothing is in flight.
    """
    if not state.in_flight:
        return []
    t = state.in_flight[0][0]
    done: list[tuple[SimRequest, float]] = []
    while state.in_flight and state.in_flight[0][0] == t:
        _, _, req = heapq.heappop(state.in_flight)
        state.active -= 1
        done.append((req, t))
    state.clock = max(state.clock, t)
    _fill_slots(state)
    return done


def drain(state: SimState) -> list[tuple[SimRequest, float]]:
    """Run the scheduler until everything submitted has completed."""
    out: list[tuple[SimRequest, float]] = []
    while state.in_flight or state.pending:
        out.extend(advance(state))
    return out
