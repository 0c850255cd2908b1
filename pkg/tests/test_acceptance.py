"""Acceptance criteria, each run at its stated tolerance.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion.
"""

import time

import numpy as np
import pytest

from mcsc.crypto import AesKey, CounterBlock, aes128_encrypt_block, decrypt_payload, encrypt_payload
from mcsc.harness.config import PRESET_NAMES, config_from_dict, load_preset
from mcsc.harness.metrics import (
    compute_latency,
    compute_pdr,
    compute_sync_overhead,
    compute_throughput,
)
from mcsc.harness.runner import run_scenario
from mcsc.hopping import ChannelPlan, HopSchedule, HopSeed, HopState
from mcsc.node import rejoin_intervals
from mcsc.packet import (
    Frame,
    ReplayRejected,
    ReplayWindow,
    TxContext,
    build_frame,
    deserialize,
    open_frame,
    serialize,
)
from mcsc.timesync import ClockModel, SyncSignal, SyncState, advance_clock, process_sync_signal

PLAN = ChannelPlan()
N = PLAN.channel_count

# PDR percentages the presets are calibrated against
PRESET_TARGETS = {
    "low_interference": 99.0,
    "medium_interference": 96.7,
    "high_interference": 92.5,
    "no_channel_hopping": 83.3,
    "with_jamming": 87.5,
    "dynamic_channel_hopping": 97.8,
}
PRESET_ORDER = ("low_interference", "dynamic_channel_hopping", "medium_interference",
                "high_interference", "with_jamming", "no_channel_hopping")


def detail(request, text: str) -> None:
    request.node.user_properties.append(("detail", text))


def two_node_doc(frames: int, **extra) -> dict:
    # traffic 1.0 fills every non-beacon slot
    slots = int(frames * 100 / 99) + 200
    doc = {
        "name": "acceptance",
        "total_slots": slots,
        "rng_seed": 2024,
        "max_missed_beacons": 8,
        "nodes": [{"address": 1, "role": "MASTER"}, {"address": 2, "traffic": 1.0}],
    }
    doc.update(extra)
    return doc


@pytest.mark.criterion("AES correctness")
def test_aes_correctness(request):
    t0 = time.perf_counter()
    key = AesKey(bytes(range(16)))
    ct = aes128_encrypt_block(key, bytes.fromhex("00112233445566778899aabbccddeeff"))
    assert ct == bytes.fromhex("69c4e0d86a7b0430d8cdb78070b4c55a")
    rng = np.random.default_rng(1)
    for i in range(10_000):
        pt = rng.bytes(11)
        ctr = CounterBlock(int(rng.integers(1 << 16)), i & 0xFFFF, i)
        assert decrypt_payload(key, ctr, encrypt_payload(key, ctr, pt)) == pt
    elapsed = time.perf_counter() - t0
    detail(request, f"FIPS vector ok, 10^4 round trips in {elapsed:.3f} s")
    assert elapsed < 1.0


@pytest.mark.criterion("Frame format")
def test_frame_format(request):
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        frame = Frame(int(rng.integers(256)), int(rng.integers(1 << 16)), rng.bytes(11),
                      int(rng.integers(1 << 16)))
        assert deserialize(serialize(frame)) == frame
    for _ in range(10_000):
        raw = rng.bytes(16)
        assert serialize(deserialize(raw)) == raw
    example = Frame(124, 0xBEEF, b"\xff" * 11, 1)
    assert serialize(example) == bytes([0x7C, 0xBE, 0xEF] + [0xFF] * 11 + [0x00, 0x01])
    detail(request, "2x10^4 round trips, example frame byte-exact")


def _hop_mismatches(clocks, slots, slot_ms=10.0, beacon_every=100):
    """Channel disagreements between nodes with private schedules, beacon-corrected clocks."""
    master_key, seed = AesKey(bytes(range(16, 32))), HopSeed(bytes(range(32, 48)))
    nodes = []
    for clock in clocks:
        sched = HopSchedule(PLAN, master_key, seed, 4096)
        nodes.append({"sched": sched, "state": sched.state_at(0), "sync": SyncState(),
                      "clock": clock})
    master = ClockModel()
    mismatches = worst = 0
    for slot in range(1, slots):
        master = advance_clock(master, slot_ms)
        channels = []
        for nd in nodes:
            nd["clock"] = advance_clock(nd["clock"], slot_ms)
            if slot % beacon_every == 0:
                sig = SyncSignal(master.local_time, 0, slot)
                nd["sync"], nd["clock"] = process_sync_signal(nd["sync"], nd["clock"], sig, slot_ms)
            local = nd["clock"].local_time
            worst = max(worst, abs(local - master.local_time))
            nd["state"] = nd["sched"].seek(nd["state"], int(np.floor(local / slot_ms + 0.5)))
            channels.append(nd["state"].current_channel)
        mismatches += channels[0] != channels[1]
    return mismatches, worst, nodes[0]["state"].seed.epoch


@pytest.mark.criterion("Hop agreement")
def test_hop_agreement(request):
    slots = 100_000
    # offsets pinned at the tolerance, one ahead and one behind
    pinned = _hop_mismatches([ClockModel(local_origin=2.0), ClockModel(local_origin=-2.0)], slots)
    # drifting clocks held by beacons; briefly exceed the tolerance between beacons
    drifting = _hop_mismatches([ClockModel(drift_rate=1e-3, local_origin=1.5),
                                ClockModel(drift_rate=-1e-3, local_origin=-1.5)], slots)
    detail(request, f"pinned +/-2 ms: {pinned[0]} mismatches; drift +/-1e-3: {drifting[0]} "
                    f"mismatches, max offset {drifting[1]:.2f} ms; {slots} slots, "
                    f"{pinned[2]} rotations")
    assert pinned[1] <= 2.0
    assert pinned[2] >= 1
    assert pinned[0] == 0
    assert drifting[0] == 0


@pytest.mark.criterion("Sync convergence")
def test_sync_convergence(request):
    t_sync, beacons = 1000.0, 10_000
    worst = 0.0
    for member_drift, master_drift in ((1e-3, -1e-3), (-1e-3, 1e-3), (1e-3, 0.0)):
        master = ClockModel(drift_rate=master_drift)
        member = ClockModel(drift_rate=member_drift, local_origin=37.0)
        state = SyncState(t_sync_interval=t_sync, t_max_offset=2.0)
        for k in range(1, beacons + 1):
            master = advance_clock(master, t_sync)
            member = advance_clock(member, t_sync)
            slot = round(master.local_time / 10.0)
            state, member = process_sync_signal(state, member,
                                                SyncSignal(master.local_time, 0, slot), 10.0)
            offset = abs(member.local_time - master.local_time)
            worst = max(worst, offset)
            assert offset <= 2.0, f"beacon {k}: offset {offset}"
    rng = np.random.default_rng(3)
    trials = [rejoin_intervals(rng, PLAN, 100) for _ in range(10_000)]
    mean = float(np.mean(trials))
    detail(request, f"max post-beacon offset {worst:.3f} ms; rejoin mean {mean:.1f} "
                    f"intervals (target {N} +/-20%)")
    assert abs(mean - N) <= 0.2 * N


@pytest.mark.criterion("Eavesdropping statistic")
def test_eavesdropping(request):
    t0 = time.perf_counter()
    mcsc = run_scenario(config_from_dict(
        two_node_doc(100_000, eavesdropper={"monitored_channels": [17]}))).metrics
    single = run_scenario(config_from_dict(two_node_doc(
        10_000, eavesdropper={"monitored_channels": [17]},
        nodes=[{"address": 1, "role": "MASTER", "strategy": "SINGLE_CHANNEL_AES",
                "fixed_channel": 17},
               {"address": 2, "traffic": 1.0, "strategy": "SINGLE_CHANNEL_AES",
                "fixed_channel": 17}]))).metrics
    elapsed = time.perf_counter() - t0
    rate = 100.0 * mcsc.counts["captures"] / mcsc.packets_sent
    single_rate = 100.0 * single.counts["captures"] / single.packets_sent
    detail(request, f"MCSC {rate:.3f}% of {mcsc.packets_sent} frames, single channel "
                    f"{single_rate:.1f}%, {elapsed:.1f} s")
    assert mcsc.packets_sent >= 100_000
    assert abs(rate - 0.8) <= 0.15
    assert single_rate == 100.0
    assert elapsed < 30.0


@pytest.mark.criterion("Jamming statistic")
def test_jamming(request):
    k = 10
    jam = run_scenario(config_from_dict(two_node_doc(
        100_000, jammer={"mode": "RANDOM", "jammed_channels_per_slot": k}))).metrics
    loss = jam.counts["jammed"] / jam.packets_sent
    expected = k / N
    fixed = run_scenario(config_from_dict(two_node_doc(
        5_000, jammer={"mode": "FIXED", "target_channel": 17},
        nodes=[{"address": 1, "role": "MASTER", "strategy": "SINGLE_CHANNEL_AES",
                "fixed_channel": 17},
               {"address": 2, "traffic": 1.0, "strategy": "SINGLE_CHANNEL_AES",
                "fixed_channel": 17}]))).metrics
    detail(request, f"k={k}: jam loss {100 * loss:.3f}% vs {100 * expected:.1f}% expected; "
                    f"fixed jammer vs single channel PDR {fixed.pdr_percent:.2f}%")
    assert jam.packets_sent >= 100_000
    assert abs(loss - expected) <= 0.1 * expected
    assert fixed.pdr_percent < 1.0


@pytest.mark.criterion("Replay defense")
def test_replay_defense(request):
    key = AesKey(bytes(range(16)))
    ctx = TxContext(key, 0x0042, HopState.start(PLAN, HopSeed(bytes(range(48, 64)))))
    window = ReplayWindow()
    rng = np.random.default_rng(4)

    # in-window: every replay of a recent frame is refused
    captured = []
    for slot in range(100):
        frame, ctx = build_frame(ctx, rng.bytes(11))
        open_frame(key, frame, slot, window)
        captured.append(frame)
    for frame in captured:
        with pytest.raises(ReplayRejected):
            open_frame(key, frame, 100, window)

    # long run: legitimate traffic slides the window past the captured frames
    attempts = accepted = 0
    for slot in range(100, 20_000):
        frame, ctx = build_frame(ctx, rng.bytes(11))
        open_frame(key, frame, slot, window)
        if slot % 2 == 0:
            attempts += 1
            try:
                open_frame(key, captured[int(rng.integers(len(captured)))], slot, window)
                accepted += 1
            except ReplayRejected:
                pass
    defense = 100.0 - 100.0 * accepted / attempts
    detail(request, f"in-window 100/100 rejected; long run {accepted}/{attempts} accepted, "
                    f"defense {defense:.2f}%")
    assert 95.0 < defense < 100.0


@pytest.fixture(scope="module")
def preset_runs():
    t0 = time.perf_counter()
    metrics = {name: run_scenario(load_preset(name)).metrics for name in PRESET_NAMES}
    return metrics, time.perf_counter() - t0


@pytest.mark.criterion("Scenario ordering")
def test_scenario_ordering(request, preset_runs):
    metrics, elapsed = preset_runs
    pdr = {name: m.pdr_percent for name, m in metrics.items()}
    detail(request, ", ".join(f"{n} {pdr[n]:.2f}" for n in PRESET_ORDER) + f"; {elapsed:.1f} s")
    assert [pdr[n] for n in PRESET_ORDER] == sorted(pdr.values(), reverse=True)
    for name, target in PRESET_TARGETS.items():
        assert abs(pdr[name] - target) <= 2.0, name
    assert elapsed < 60.0


@pytest.mark.criterion("Metric formulas")
def test_metric_formulas(request):
    assert compute_pdr(990, 1000) == 99.0
    assert compute_pdr(1850, 2000) == 92.5
    assert compute_latency((10, 5, 3, 10), 1).mean_ms == 28
    assert compute_latency((11, 5, 8, 9), 1).mean_ms == 33
    assert compute_throughput(1000 * 128, 0.256) == pytest.approx(500.0)
    assert compute_sync_overhead(45, 955) == pytest.approx(4.5)
    detail(request, "PDR 99.0/92.5, latency 28/33 ms, 500 kbps, 4.5% overhead")


@pytest.mark.criterion("Determinism")
def test_determinism(request):
    docs = [
        load_preset("with_jamming").raw,
        two_node_doc(3_000, interference={"per_packet_loss_prob": 0.05, "bit_error_prob": 2e-4},
                     eavesdropper={"monitored_channels": [1, 2, 3]},
                     replayer={"start_slot": 50, "interval_slots": 5},
                     jammer={"mode": "SWEEPING", "jammed_channels_per_slot": 4}),
    ]
    for doc in docs:
        cfg = config_from_dict(doc)
        a, b = run_scenario(cfg, 99), run_scenario(cfg, 99)
        assert a.csv_text().encode() == b.csv_text().encode()
        assert a.log_text().encode() == b.log_text().encode()
    detail(request, f"{len(docs)} configs, CSV and event logs byte-identical")
