"""Simulated-device model behavior."""

import dataclasses

import pytest

from readbench.devicesim import (DeviceModel, SimRequest, SimState, advance, drain,
                                 load_model, preset_model, preset_names,
                                 save_model, service_time, submit)
from readbench.errors import Backpressure, NoSuchPreset
from readbench.rng import SplitMix64


def flat_model(latency_us=100.0, parallelism=4, **over):
    base = dict(kind="solid-state", base_latency_us=latency_us,
                per_byte_us=0.0, parallelism=parallelism,
                jitter_kind="none", jitter_scale_us=0.0,
                spike_probability=0.0, spike_duration_us=0.0,
                bandwidth_limit_bps=0.0, rng_seed=1)
    base.update(over)
    return DeviceModel(**base)


def run_closed_loop(model, depth, nreq, length=4096, capacity=1 << 30):
    """Closed-loop driver: keep `depth` requests outstanding."""
    state = SimState(model=model, capacity=capacity)
    offs = SplitMix64(12345)
    nblocks = capacity // length
    issued = 0
    done = []

    def issue():
        nonlocal issued
        off = (offs.next_u64() % nblocks) * length
        submit(state, SimRequest(offset=off, length=length,
                                 submit_time=state.clock))
        issued += 1

    for _ in range(min(depth, nreq)):
        issue()
    while len(done) < nreq:
        done.extend(advance(state))
        while issued < nreq and len(done) + depth > issued:
            issue()
    return state, done


class TestPresets:
    def test_names(self):
        assert set(preset_names()) >= {"hdd", "sata-ssd", "nvme-ssd", "ull"}

    def test_unknown(self):
        with pytest.raises(NoSuchPreset):
            preset_model("floppy")

    def test_aliases(self):
        assert preset_model("nvme") == preset_model("nvme-ssd")

    def test_roundtrip_file(self, tmp_path):
        for name in preset_names():
            p = tmp_path / f"{name}.model"
            m = preset_model(name)
            save_model(m, str(p))
            assert load_model(str(p)) == m


class TestServiceTime:
    def test_flat_model_constant(self):
        m = flat_model(latency_us=77.0)
        s = SimState(model=m, capacity=1 << 30)
        for off in (0, 4096, 1 << 20):
            assert service_time(m, s, off, 4096) == pytest.approx(77.0)

    def test_per_byte_component(self):
        m = dataclasses.replace(flat_model(latency_us=10.0),
                                per_byte_us=0.01)
        s = SimState(model=m, capacity=1 << 30)
        assert service_time(m, s, 0, 1000) == pytest.approx(10.0 + 10.0)
        assert service_time(m, s, 0, 2000) == pytest.approx(10.0 + 20.0)

    def test_hdd_sequential_is_transfer_only(self):
        m = preset_model("hdd")
        cap = 1 << 30
        s = SimState(model=m, capacity=cap)
        s.last_end = 4096
        s.head_position = 4096
        t = service_time(m, s, 4096, 262144)
        # no seek, no rotation: pure transfer at the position-local rate
        assert t < 2000.0

    def test_hdd_random_includes_seek_and_rotation(self):
        m = preset_model("hdd")
        cap = 1 << 30
        s = SimState(model=m, capacity=cap)
        s.last_end = 0
        s.head_position = 0
        t = service_time(m, s, cap // 2, 262144)
        assert t >= m.seek_min_us

    def test_hdd_seek_proportional_to_distance(self):
        m = preset_model("hdd")
        cap = 1 << 30
        samples = {frac: [] for frac in (0.1, 0.9)}
        for frac in samples:
            for seed in range(200):
                s = SimState(model=m.with_seed(seed), capacity=cap)
                s.head_position = 0
                s.last_end = 1  # force the random path
                samples[frac].append(
                    service_time(m, s, int(frac * cap) // 4096 * 4096, 4096))
        assert (sum(samples[0.9]) / 200) > (sum(samples[0.1]) / 200)

    def test_polled_jitter_uniform_and_capped(self):
        m = preset_model("ull")
        reg, pol = [], []
        for seed in range(3000):
            s = SimState(model=m.with_seed(seed), capacity=1 << 30)
            reg.append(service_time(m, s, 0, 4096))
            s2 = SimState(model=m.with_seed(seed), capacity=1 << 30)
            pol.append(service_time(m, s2, 0, 4096, polled=True))
        mean_r = sum(reg) / len(reg)
        mean_p = sum(pol) / len(pol)
        assert mean_p == pytest.approx(mean_r, rel=0.05)
        assert max(pol) <= max(reg) / 2 + 1e-9


class TestQueueing:
    def test_fifo_single_slot(self):
        m = flat_model(latency_us=100.0, parallelism=1)
        state, done = run_closed_loop(m, depth=4, nreq=10)
        times = sorted(t for _, t in done)
        assert times == [pytest.approx(100.0 * (i + 1)) for i in range(10)]

    def test_parallel_slots(self):
        m = flat_model(latency_us=100.0, parallelism=8)
        state, done = run_closed_loop(m, depth=8, nreq=8)
        assert all(t == pytest.approx(100.0) for _, t in done)

    def test_littles_law_grid(self):
        latency = 200.0
        for parallelism in (1, 4, 16):
            for depth in (1, 8, 64):
                m = flat_model(latency_us=latency, parallelism=parallelism)
                nreq = 2000
                state, done = run_closed_loop(m, depth, nreq)
                elapsed = max(t for _, t in done)
                effective = min(depth, parallelism)
                expect = nreq * latency / effective
                assert elapsed == pytest.approx(expect, rel=0.10)

    def test_bandwidth_channel_serializes_transfers(self):
        # two simultaneous 1 MB reads over a 100 MB/s channel: transfers
        # cannot overlap, so the second finishes a full transfer later.
        m = flat_model(latency_us=0.0, parallelism=2,
                       bandwidth_limit_bps=100e6)
        m = dataclasses.replace(m, per_byte_us=0.01)
        state = SimState(model=m, capacity=1 << 30)
        for i in range(2):
            submit(state, SimRequest(offset=i * (1 << 20), length=1 << 20,
                                     submit_time=0.0))
        done = drain(state)
        times = sorted(t for _, t in done)
        tb = (1 << 20) * 0.01
        assert times[0] == pytest.approx(tb, rel=0.01)
        assert times[1] == pytest.approx(2 * tb, rel=0.01)

    def test_backpressure(self):
        m = flat_model()
        state = SimState(model=m, capacity=1 << 30)
        state.pending_bound = 4
        for i in range(m.parallelism + 4):
            submit(state, SimRequest(offset=0, length=4096, submit_time=0.0))
        with pytest.raises(Backpressure):
            submit(state, SimRequest(offset=0, length=4096, submit_time=0.0))

    def test_degraded_window(self):
        m = flat_model(latency_us=100.0, parallelism=1,
                       degraded_until_us=1000.0, degraded_factor=10.0)
        state, done = run_closed_loop(m, depth=1, nreq=20)
        durs = [t - r.submit_time for r, t in done]
        assert durs[0] == pytest.approx(1000.0)  # degraded
        assert durs[-1] == pytest.approx(100.0)  # steady state

    def test_spikes_appear_at_configured_rate(self):
        m = flat_model(latency_us=100.0, parallelism=1,
                       spike_probability=0.01, spike_duration_us=48000.0)
        state, done = run_closed_loop(m, depth=1, nreq=5000)
        durs = [t - r.submit_time for r, t in done]
        spikes = sum(1 for d in durs if d > 40000)
        assert 20 <= spikes <= 90  # ~50 expected


class TestDeterminism:
    def test_replay_identical(self):
        m = preset_model("sata-ssd")
        _, a = run_closed_loop(m, depth=16, nreq=500)
        _, b = run_closed_loop(m, depth=16, nreq=500)
        assert [t for _, t in a] == [t for _, t in b]

    def test_seed_changes_outcome(self):
        m = preset_model("sata-ssd")
        m2 = dataclasses.replace(m, rng_seed=999)
        _, a = run_closed_loop(m, depth=16, nreq=500)
        _, b = run_closed_loop(m2, depth=16, nreq=500)
        assert [t for _, t in a] != [t for _, t in b]


class TestModelValidation:
    def test_bad_parallelism(self):
        with pytest.raises(ValueError):
            flat_model(parallelism=0)

    def test_bad_jitter_kind(self):
        with pytest.raises(ValueError):
            flat_model(jitter_kind="gaussian")
