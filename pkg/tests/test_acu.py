import pytest

from airnet import mavlink as mav
from airnet.acu import UnknownVehicleError
from airnet.mavlink import MavCmd

from rigs import Rig


def hb_frame(sysid=1, seq=0):
    raw = mav.encode_frame(mav.HeartbeatMsg(mav.VehicleType.QUADROTOR, mav.AutopilotType.ARDUPILOTMEGA), seq, sysid, 1)
    return mav.MavParser().feed(raw)[0]


def test_first_heartbeat_creates_proxy_then_updates():
    rig = Rig(start=False)
    created = []
    rig.acu.proxy_listeners.append(created.append)
    assert rig.acu.on_frame(hb_frame()) == "created"
    rig.s.run(50)
    assert rig.acu.on_frame(hb_frame(seq=1)) == "updated"
    assert len(created) == 1
    assert rig.acu.proxy(1).last_heartbeat == 50
    assert rig.acu.proxy(1).autopilot_type == mav.AutopilotType.ARDUPILOTMEGA


def test_command_addressed_elsewhere_dropped():
    rig = Rig(start=False)
    raw = mav.encode_frame(mav.map_execute_command(21, 9, 0), 0, 9, 191)
    assert rig.acu.on_frame(mav.MavParser().feed(raw)[0]) is None
    assert rig.events("frame_dropped")[0].attrs["reason"] == "not_addressed"


def test_command_before_heartbeat_is_unknown_vehicle():
    rig = Rig(start=False)
    with pytest.raises(UnknownVehicleError):
        rig.acu.execute_command(MavCmd.NAV_LAND, 1, 0)


def test_land_and_loiter_frames_reach_autopilot():
    rig = Rig(start=False)
    rig.acu.on_frame(hb_frame())
    got = []
    rig.ap.apply_command = got.append
    rig.acu.execute_command(MavCmd.NAV_LAND, 1, 0, 0, 0, 0, 0, 0, 0, 0)
    rig.acu.execute_command(MavCmd.NAV_LOITER_TIME, 1, 0, 30, 0, 5, 90, 38.5, -90.25, 15)
    rig.s.run(5)
    assert got[0].command_id == MavCmd.NAV_LAND
    assert got[1].params == (30.0, 0.0, 5.0, 90.0, 38.5, -90.25, 15.0)
    logged = [e for e in rig.log.events if e.attrs.get("ev") == "command"]
    assert logged[0].attrs["params"] == [0, 0, 0, 0, 0, 0, 0]


def test_acu_heartbeats_30_in_30s():
    rig = Rig()
    rig.run_s(30)
    assert rig.acu.heartbeats_sent == 30


def test_acu_heartbeat_skipped_on_disconnect():
    rig = Rig()
    rig.links.disconnect_link(rig.link)
    rig.run_s(3)
    assert rig.acu.heartbeats_skipped == 3


def test_heartbeat_timeout_edge_triggered_and_rearmed():
    rig = Rig(start=False)
    events = []
    rig.acu.timeout_listeners.append(lambda timed_out, sysid: events.append((rig.s.now, timed_out)))
    rig.s.every(1, 1, rig.acu.check_timeouts)
    for t in range(0, 1001, 100):
        rig.s.schedule_at(t, 1, lambda: rig.acu.on_frame(hb_frame()))
    rig.s.run(1300)
    assert events == []
    rig.s.run(1400)
    assert events == [(1301, True)]
    rig.s.schedule_at(1500, 1, lambda: rig.acu.on_frame(hb_frame()))
    rig.s.run(2000)
    assert events == [(1301, True), (1500, False), (1801, True)]
