import math

import pytest
from hypothesis import given, strategies as st

from airnet.logger import EventLog
from airnet.macphy import (
    ChannelParams,
    Jammer,
    JammerBehavior,
    MacFrame,
    MacMode,
    Medium,
    Outcome,
    RadioConfig,
    crc_ok,
    decide_reception,
    decode_frame,
    mac_submit,
    path_loss,
    per_logistic,
    tdma_slot_for,
)
from airnet.macphy.frame import FrameError
from airnet.macphy.medium import DIFS_US, TDMA_SLOT_US
from airnet.network import BROADCAST, Network
from airnet.simcore import RngRegistry


def build(positions, mode="csma", lossless=True, jammers=()):
    log = EventLog()
    m = Medium(ChannelParams(), log, RngRegistry(1), positions.__getitem__, MacMode(mode), lossless=lossless)
    nets = {}
    for n in sorted(positions):
        nets[n] = Network(n, log, m.time_s)
        m.add_radio(n, RadioConfig(), nets[n])
    for j in jammers:
        m.add_jammer(j)
    txs = []
    m.tx_observers.append(txs.append)
    return m, nets, txs


# -- framing ---------------------------------------------------------------
def test_frame_overhead_and_round_trip():
    raw = mac_submit(bytes(100), 1, BROADCAST, seq=3)
    assert len(raw) == 116
    f = decode_frame(raw)
    assert f == MacFrame(1, BROADCAST, 3, bytes(100))


def test_empty_pdu_frame():
    raw = mac_submit(b"", 2, 3)
    assert len(raw) == 16 and decode_frame(raw).body == b""


@given(st.binary(max_size=200), st.data())
def test_any_single_bit_flip_fails_crc(body, data):
    raw = bytearray(mac_submit(body, 1, 2))
    i = data.draw(st.integers(0, len(raw) - 1))
    raw[i] ^= 1 << data.draw(st.integers(0, 7))
    assert not crc_ok(bytes(raw))
    with pytest.raises(FrameError):
        decode_frame(bytes(raw))


# -- link budget -----------------------------------------------------------
def test_path_loss_examples():
    assert path_loss(1.0, 40, 2.7) == 40
    assert path_loss(0.1, 40, 2.7) == 40
    assert path_loss(2.0, 40, 2.0) - path_loss(1.0, 40, 2.0) == pytest.approx(6.0206, abs=1e-4)
    assert path_loss(100.0, 40, 3.0) - path_loss(10.0, 40, 3.0) == pytest.approx(30.0)


@given(st.floats(-40, 40), st.floats(-40, 40))
def test_per_monotonic_in_snr(a, b):
    lo, hi = sorted((a, b))
    assert per_logistic(hi, 5, 2) <= per_logistic(lo, 5, 2)


def test_per_at_threshold_is_half():
    assert per_logistic(5, 5, 2) == 0.5


def _snr_oracle(rssi, nf, interferers, jam_mw):
    total = 10 ** (nf / 10) + sum(10 ** (x / 10) for x in interferers) + jam_mw
    return rssi - 10 * math.log10(total)


@given(
    st.floats(-90, -40),
    st.lists(st.floats(-120, -60), max_size=4),
    st.floats(0, 1e-7),
)
def test_snr_sums_powers_in_milliwatts(rssi, interferers, jam):
    rec = decide_reception(rssi, -95, interferers, jam, ChannelParams(), lambda: 0.99)
    if rec.outcome is not Outcome.BELOW_SENSITIVITY:
        assert rec.snr == pytest.approx(_snr_oracle(rssi, -95, interferers, jam), abs=1e-9)


def test_similar_power_interferer_is_collision():
    rec = decide_reception(-60, -95, [-62], 0.0, ChannelParams(), lambda: 0.99)
    assert rec.outcome is Outcome.CRC_FAIL and rec.reason == "collision"


def test_weak_interferer_is_captured_over():
    rec = decide_reception(-60, -95, [-90], 0.0, ChannelParams(), lambda: 0.99)
    assert rec.outcome is Outcome.DELIVERED


def test_below_sensitivity():
    rec = decide_reception(-110, -95, [], 0.0, ChannelParams(), lambda: 0.0)
    assert rec.outcome is Outcome.BELOW_SENSITIVITY


def test_lossless_only_without_interference():
    p = ChannelParams()
    assert decide_reception(-88, -95, [], 0.0, p, lambda: 0.0, lossless=True).outcome is Outcome.DELIVERED
    assert decide_reception(-88, -95, [], 0.0, p, lambda: 0.0, lossless=False).outcome is Outcome.CRC_FAIL


def test_radio_frequency_range():
    with pytest.raises(ValueError):
        RadioConfig(carrier_frequency=50e6)
    with pytest.raises(ValueError):
        RadioConfig(carrier_frequency=7e9)


def test_airtime_rounds_up():
    assert RadioConfig(bitrate=250_000).airtime_us(116) == 3712
    assert RadioConfig(bitrate=3_000_000).airtime_us(1) == 3


# -- jammers ---------------------------------------------------------------
def test_passive_duty_cycle_windows():
    j = Jammer(1, (0, 0, 0), 20, 2.4e9, duty_cycle=0.5, period_us=1000, start_us=0, stop_us=5000)
    assert j.passive_on_during(0, 10)
    assert not j.passive_on_during(600, 900)
    assert j.passive_on_during(900, 1100)
    assert not j.passive_on_during(5000, 6000)
    assert j.jammer_emit(100) == pytest.approx(100.0)
    assert j.jammer_emit(700) == 0.0


def test_adaptive_jammer_only_when_sensing():
    j = Jammer(1, (0, 0, 0), 20, 2.4e9, behavior=JammerBehavior.ADAPTIVE)
    assert j.jammer_emit(0) == 0.0
    assert j.jammer_emit(0, sensing_cooperative=True) == pytest.approx(100.0)


def test_jammer_off_channel_has_no_effect():
    far = Jammer(1, (0, 5, 0), 30, 900e6)
    m, nets, _ = build({1: (0, 0, 0), 2: (10, 0, 0)}, lossless=False, jammers=[far])
    nets[1].send_data(2, b"x")
    m.run_until(100_000)
    assert nets[2].get_data() == b"x"


def test_passive_jammer_blocks_link():
    j = Jammer(1, (5, 0, 0), 30, 2.4e9)
    m, nets, _ = build({1: (0, 0, 0), 2: (10, 0, 0)}, lossless=False, jammers=[j])
    nets[1].send_data(2, b"x")
    m.run_until(100_000)
    assert nets[2].get_data() == b""


def test_adaptive_jammer_senses_and_counts():
    j = Jammer(1, (5, 0, 0), 30, 2.4e9, behavior=JammerBehavior.ADAPTIVE)
    m, nets, _ = build({1: (0, 0, 0), 2: (10, 0, 0)}, lossless=False, jammers=[j])
    nets[1].send_data(2, b"x")
    m.run_until(100_000)
    assert m.stats.jam_events == 1 and j.active_us > 0
    assert nets[2].get_data() == b""


# -- medium and MACs -------------------------------------------------------
def test_csma_idle_channel_transmits_immediately():
    m, nets, txs = build({1: (0, 0, 0), 2: (20, 0, 0)})
    nets[1].send_data(2, bytes(10))
    m.run_until(50_000)
    assert txs[0].start_us == 0
    assert nets[2].get_data() == bytes(10)


def test_csma_defers_while_busy():
    m, nets, txs = build({1: (0, 0, 0), 2: (20, 0, 0), 3: (0, 20, 0)})
    nets[1].send_data(2, bytes(200), ttl=1)
    m.run_until(1_000)
    nets[3].send_data(2, bytes(10), ttl=1)
    m.run_until(100_000)
    a, b = txs
    assert b.start_us >= a.end_us + DIFS_US
    assert m.stats.frames_overlapped == 0
    assert {nets[2].get_data(), nets[2].get_data()} == {bytes(200), bytes(10)}


def test_csma_contention_never_overlaps():
    pos = {1: (0, 0, 0), 2: (20, 0, 0), 3: (0, 20, 0), 4: (20, 20, 0)}
    m, nets, txs = build(pos)
    for t in range(0, 400_000, 7_000):
        m.run_until(t)
        nets[1 + (t // 7_000) % 4].send_data(BROADCAST, bytes(300), ttl=1)
    m.run_until(2_000_000)
    ordered = sorted(txs, key=lambda x: x.start_us)
    # a frame can only overlap when two senders start within the same microsecond
    for a, b in zip(ordered, ordered[1:]):
        assert b.start_us >= a.end_us or b.start_us == a.start_us


def test_aloha_simultaneous_senders_collide():
    m, nets, txs = build({1: (0, 0, 0), 2: (40, 0, 0), 3: (20, 0, 0)}, mode="aloha")
    nets[1].send_data(3, b"a")
    nets[2].send_data(3, b"b")
    m.run_until(50_000)
    assert txs[0].start_us == txs[1].start_us == 0
    assert m.stats.frames_overlapped == 2
    assert nets[3].get_data() == b""


def test_out_of_range_receiver():
    m, nets, _ = build({1: (0, 0, 0), 2: (5000, 0, 0)})
    nets[1].send_data(2, b"x")
    m.run_until(50_000)
    assert m.stats.outcomes["below_sensitivity"] == 1
    assert nets[2].get_data() == b""


def test_tdma_slot_for():
    assert [tdma_slot_for(0, 3, t) for t in (0, 4, 5, 15)] == [True, True, False, True]
    assert tdma_slot_for(1, 3, 5) and tdma_slot_for(2, 3, 14)


def test_tdma_each_node_uses_its_own_slot():
    pos = {1: (0, 0, 0), 2: (20, 0, 0), 3: (40, 0, 0)}
    m, nets, txs = build(pos, mode="tdma")
    for n in pos:
        nets[n].send_data(BROADCAST, bytes(50), ttl=1)
    m.run_until(300_000)
    starts = {tx.node: tx.start_us for tx in txs}
    assert starts == {1: 0, 2: TDMA_SLOT_US, 3: 2 * TDMA_SLOT_US}


def test_tdma_drops_frames_longer_than_a_slot():
    m, nets, txs = build({1: (0, 0, 0), 2: (20, 0, 0)}, mode="tdma")
    # slot is 50 ms; at 250 kbit/s a 1040-byte frame needs 33 ms, so shrink the bitrate
    m.radios[1].config = RadioConfig(bitrate=100_000)
    nets[1].send_data(2, bytes(1000))
    m.run_until(200_000)
    assert txs == [] and m.stats.mac_drops == 1


def test_high_snr_is_nearly_lossless():
    p = ChannelParams()
    assert p.per(p.snr_threshold + 30) < 1e-3
    rec = decide_reception(-60, -95, [], 0.0, p, lambda: 0.001)
    assert rec.outcome is Outcome.DELIVERED
