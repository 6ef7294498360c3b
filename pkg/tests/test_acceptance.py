"""End-to-end acceptance checks; each test carries a ``criterion`` marker and
the terminal summary prints one pass/fail line per criterion."""

from __future__ import annotations

import math
import random
import time
from collections import Counter, defaultdict, deque

import numpy as np
import pytest

from airnet import mavlink as mav
from airnet.autopilot import Airframe, FlightMode
from airnet.cli import main as cli_main
from airnet.geo import horizontal_distance
from airnet.links import LinkConfig, LinkKind, LinkManager
from airnet.logger import EventLog
from airnet.macphy import ChannelParams, MacMode, Medium, RadioConfig, path_loss
from airnet.macphy.channel import per_logistic
from airnet.network import BROADCAST, Network
from airnet.scenario.bundled import bundled_names, load_bundled
from airnet.scenario.runner import Simulation, run
from airnet.simcore import TICKS_PER_SECOND, RngRegistry, Scheduler


def _random_message(rng: random.Random) -> mav.Message:
    if rng.random() < 0.5:
        return mav.HeartbeatMsg(
            rng.choice(list(mav.VehicleType)), rng.choice(list(mav.AutopilotType)),
            mav.ModeFlag(rng.randrange(256)), rng.randrange(256),
        )
    params = tuple(rng.uniform(-1e6, 1e6) for _ in range(7))
    return mav.CommandMsg(rng.randrange(65536), rng.randrange(1, 256), rng.randrange(256), params, rng.randrange(256))


@pytest.mark.criterion(1, "codec soundness")
def test_codec_round_trip_and_corruption():
    rng = random.Random(2024)
    t0 = time.perf_counter()
    frames = []
    for i in range(10_000):
        msg = _random_message(rng)
        raw = mav.encode_frame(msg, i, rng.randrange(1, 256), rng.randrange(256))
        (frame,) = mav.MavParser().feed(raw)
        assert mav.decode_message(frame) == msg
        if i < 1_000:
            frames.append(raw)
    for raw in frames:
        for pos in range(len(raw)):
            bad = bytearray(raw)
            bad[pos] ^= rng.randrange(1, 256)
            assert mav.MavParser().feed(bytes(bad)) == []
    elapsed = time.perf_counter() - t0
    assert elapsed < 2.0, f"codec checks took {elapsed:.2f} s"


@pytest.mark.criterion(2, "frame constants and rates")
def test_frame_constants_and_rates():
    spec = load_bundled("reference_solo").model_copy(update={"duration": 60.0})
    sim = Simulation(spec)
    sent: list[bytes] = []
    orig_send = sim.links.send_bytes

    def tap(link_id, data, side="a"):
        sent.append(bytes(data))
        return orig_send(link_id, data, side)

    sim.links.send_bytes = tap
    agent = sim.agent(1)
    tracker_ticks = []
    inner = agent.mission_tracker

    def counted():
        tracker_ticks.append(sim.scheduler.now)
        inner()

    agent.mission_tracker = counted
    result = sim.run()

    assert sent and all(chunk[0] == 0xFE for chunk in sent)
    heartbeats = Counter()
    for rec in result.log.events:
        if rec.category == "mavlink" and rec.attrs.get("dir") == "tx" and rec.attrs.get("msgid") == mav.MSG_HEARTBEAT:
            heartbeats[(rec.attrs["side"], math.floor(rec.t + 1e-9))] += 1
    for side in ("autopilot", "acu"):
        assert [heartbeats[(side, s)] for s in range(60)] == [1] * 60
    per_second = Counter(t // TICKS_PER_SECOND for t in tracker_ticks)
    assert [per_second[s] for s in range(60)] == [100] * 60


def _mode_changes(log, node):
    return [(r.t, r.attrs["to"]) for r in log.events if r.node == node and r.ev == "mode"]


@pytest.mark.criterion(3, "failsafe semantics")
def test_failsafe():
    sim = Simulation(load_bundled("failsafe"))
    home = sim.autopilot(1).state.home
    result = sim.run()
    with_gps = _mode_changes(result.log, 1)
    rtl = [t for t, m in with_gps if m == "RTL"]
    assert len(rtl) == 1 and 13.00 <= rtl[0] <= 13.01 + 1e-9
    final = sim.autopilot(1).state
    assert final.mode is FlightMode.DISARMED
    assert horizontal_distance(final.position, home) <= 1.0
    no_gps = _mode_changes(result.log, 2)
    land = [t for t, m in no_gps if m == "LAND"]
    assert land and 13.00 <= land[0] <= 13.01 + 1e-9
    assert "RTL" not in [m for _, m in no_gps]


@pytest.mark.criterion(4, "reference mission")
def test_reference_mission():
    sim = Simulation(load_bundled("reference_solo"))
    behavior = sim.agent(1).behavior
    result = sim.run()
    assert [s for s, _ in behavior.trace] == ["STAGE_START", "STAGE_LOITER", "STAGE_STOP"]
    t = dict(behavior.trace)
    loiter = t["STAGE_STOP"] - t["STAGE_LOITER"]
    assert 20.00 - 1e-9 <= loiter <= 20.02 + 1e-9
    af = Airframe()
    tick = 1 / TICKS_PER_SECOND
    # arm state is first seen on the next 1 Hz heartbeat; each tracker decision costs a tick
    predicted = 1.0 + tick + 10 / af.climb_rate + 20 + tick + 10 / af.climb_rate
    done = result.report.mission_completion["1"]
    assert abs(done - predicted) <= 0.1


@pytest.mark.criterion(5, "serial throttling")
def test_serial_throttling():
    s = Scheduler()
    links = LinkManager(s)
    lid = links.open_link(LinkConfig(LinkKind.SERIAL, "ttyACM0", 115_200))
    links.connect_link(lid)
    got = []
    links.endpoints(lid)[1].on_receive = lambda data: got.append((s.now, len(data)))
    links.send_bytes(lid, bytes(11_520))
    s.run(300)
    (tick, n), = got
    assert n == 11_520 and abs(tick - TICKS_PER_SECOND) <= 1


@pytest.mark.criterion(6, "MAC properties")
def test_mac_properties():
    sat = run(load_bundled("tdma_saturated"))
    outcomes = Counter(r.attrs.get("reason") for r in sat.log.events if r.category == "radio")
    assert outcomes["collision"] == 0
    run_end = next(r for r in sat.log.events if r.ev == "run_end")
    assert run_end.attrs["frames_overlapped"] == 0
    goodput = Counter()
    for r in sat.log.events:
        if r.ev == "deliver":
            goodput[r.attrs["source"]] += 8 * (r.attrs["size"] - 16)
    total = sum(goodput.values())
    assert total > 0
    for node in (1, 2, 3, 4):
        assert abs(goodput[node] - total / 4) <= 0.05 * total / 4

    csma = run(load_bundled("load30_csma")).report.classes["1"]
    aloha = run(load_bundled("load30_aloha")).report.classes["1"]
    csma_ratio = csma.delivered / csma.offered
    aloha_ratio = aloha.delivered / aloha.offered
    assert csma_ratio >= aloha_ratio


@pytest.mark.criterion(7, "channel properties")
def test_channel_properties():
    params = ChannelParams(pl0=40.0, exponent=2.7, d0=1.0)
    cfg = RadioConfig(tx_power=13.0, rx_gain=2.5)
    positions = {1: (0.0, 0.0, 0.0), 2: (params.d0, 0.0, 0.0)}
    m = Medium(params, EventLog(), RngRegistry(0), positions.__getitem__, MacMode.CSMA)
    for n in positions:
        m.add_radio(n, cfg, Network(n, EventLog(), m.time_s))
    assert m.received_power(cfg.tx_power, positions[1], 2) == cfg.tx_power - params.pl0 + cfg.rx_gain

    d = np.linspace(1.0, 1000.0, 100_000)
    per = [per_logistic(cfg.tx_power - path_loss(x, params.pl0, params.exponent) - cfg.noise_floor,
                        params.snr_threshold, params.slope) for x in d]
    assert all(b >= a for a, b in zip(per, per[1:]))
    for base in (1.0, 3.7, 250.0):
        assert abs(path_loss(2 * base, 40, 2.0) - path_loss(base, 40, 2.0) - 6.0206) <= 1e-4


def _cross_ratio(log, group_of):
    sends = set()
    for r in log.events:
        if r.ev == "send" and r.attrs["destination"] != BROADCAST:
            if group_of[r.attrs["source"]] != group_of[r.attrs["destination"]]:
                sends.add((r.attrs["source"], r.attrs["packet_id"], r.attrs["destination"]))
    delivered = {
        (r.attrs["source"], r.attrs["packet_id"], r.node)
        for r in log.events if r.ev == "deliver"
    } & sends
    return len(delivered), len(sends), delivered


@pytest.mark.criterion(8, "partition and ferrying")
def test_partition_and_ferry():
    groups = {1: "a", 2: "a", 3: "b", 4: "b"}
    plain = run(load_bundled("partition"))
    got, offered, _ = _cross_ratio(plain.log, groups)
    assert offered > 0 and got / offered < 0.05

    sim = Simulation(load_bundled("partition_ferry"))
    ferry = sim.agent(5).behavior
    violations = []
    sim.scheduler.every(1, 10_000, lambda: ferry.conserved() or violations.append(sim.scheduler.now))
    result = sim.run()
    assert violations == []
    released = {(r.attrs["source"], r.attrs["packet_id"]) for r in result.log.events if r.ev == "custody_release"}
    _, _, delivered = _cross_ratio(result.log, groups)
    carried = {(s, p) for s, p, _ in delivered} & released
    assert len(carried) >= 1


@pytest.mark.criterion(9, "endurance")
def test_endurance():
    result = run(load_bundled("endurance"))
    ev = [r for r in result.log.events if r.ev == "endurance_exhausted"]
    assert len(ev) == 1 and abs(ev[0].t - 1560.0) <= 0.01 + 1e-9
    lands = [r.t for r in result.log.events if r.ev == "mode" and r.attrs["to"] == "LAND"]
    assert lands and abs(lands[0] - 1560.0) <= 0.01 + 1e-9


@pytest.mark.criterion(10, "determinism and log fidelity")
def test_determinism_and_metrics_replay(tmp_path, capsys):
    for name in bundled_names():
        out = tmp_path / name
        assert cli_main(["run", name, "--out", str(out)]) == 0
        again = run(load_bundled(name))
        assert (out / "events.log").read_text() == again.log.dumps(), name
        capsys.readouterr()
        assert cli_main(["metrics", str(out / "events.log")]) == 0
        assert capsys.readouterr().out == (out / "metrics.json").read_text(), name


def _bfs(adj, src):
    dist = {src: 0}
    q = deque([src])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


@pytest.mark.criterion(11, "flooding correctness")
def test_flooding_on_line():
    spec = load_bundled("line5")
    assert spec.channel.lossless and len(spec.nodes) == 5
    sim = Simulation(spec)
    delivered_app = defaultdict(list)
    for n in spec.network_nodes():
        sim.network(n).received_listeners.append(lambda p, n=n: delivered_app[(p.source_id, p.packet_id)].append(n))
    result = sim.run()

    params = sim.medium.params
    adj = {n.id: [] for n in spec.nodes}
    for a in spec.nodes:
        for b in spec.nodes:
            if a.id == b.id:
                continue
            d = math.dist(a.start.as_tuple(), b.start.as_tuple())
            snr = a.radio.tx_power - path_loss(d, params.pl0, params.exponent, params.d0) + b.radio.rx_gain - b.radio.noise_floor
            if snr >= params.sensitivity_snr:
                adj[a.id].append(b.id)
    sends = [r for r in result.log.events if r.ev == "send"]
    assert sends
    hops = {
        (r.attrs["source"], r.attrs["packet_id"]): 9 - r.attrs["ttl"]
        for r in result.log.events if r.ev == "deliver"
    }
    for s in sends:
        key = (s.attrs["source"], s.attrs["packet_id"])
        dest = s.attrs["destination"]
        expected = _bfs(adj, key[0])[dest]
        assert delivered_app[key] == [dest]
        assert hops[key] == expected <= 4
