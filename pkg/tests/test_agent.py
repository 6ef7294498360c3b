import pytest

from airnet.agent import (
    Agent,
    FerryMission,
    IdleBehavior,
    MissionPlan,
    PlanMission,
    PlanTask,
    ReferenceMission,
)
from airnet.autopilot import ACCEPTANCE_RADIUS, Airframe, FlightMode
from airnet.geo import offset_point
from airnet.network import Network, Packet
from airnet.scenario.schema import validate
from airnet.scenario.runner import Simulation

from conftest import scenario_doc
from rigs import HOME, Rig


def agent_rig(behavior, **kw):
    rig = Rig(**kw)
    rig.net = Network(1, rig.log, lambda: rig.s.now / 100)
    rig.agent = Agent(1, rig.s, rig.log, rig.acu, rig.net, lambda: rig.ap.state, behavior)
    rig.agent.start()
    return rig


def test_idle_agent_never_acts():
    rig = agent_rig(IdleBehavior())
    rig.s.run(99)
    assert rig.agent.tracker_calls == 100
    assert rig.agent.stage_actions == 0
    assert rig.ap.state.mode is FlightMode.DISARMED


def test_reference_mission_timeline():
    b = ReferenceMission(10, 20)
    rig = agent_rig(b)
    rig.run_s(40)
    stages = dict(b.trace)
    assert stages["STAGE_LOITER"] == pytest.approx(6.01)
    assert stages["STAGE_STOP"] - stages["STAGE_LOITER"] == pytest.approx(20.01)
    assert rig.agent.completed
    assert rig.ap.state.mode is FlightMode.DISARMED


def test_empty_plan_completes_immediately():
    rig = agent_rig(PlanMission(MissionPlan([])))
    rig.s.run(0)
    assert rig.agent.completed
    assert rig.ap.state.mode is FlightMode.DISARMED


def test_plan_deadlines_must_be_ordered():
    t = HOME
    with pytest.raises(ValueError):
        MissionPlan([PlanTask(t, 10), PlanTask(t, 5)])


@pytest.mark.parametrize("deadline,met", [(30.0, True), (5.0, False)])
def test_50m_task_deadline(deadline, met):
    target = offset_point(HOME, 50, 0, 10)
    b = PlanMission(MissionPlan([PlanTask(target, deadline)]), 10, on_complete="hold")
    rig = agent_rig(b)
    rig.run_s(30)
    (done,) = b.completions
    expected = (50 - ACCEPTANCE_RADIUS) / Airframe().cruise_speed
    assert done["elapsed"] == pytest.approx(expected, abs=0.02)
    assert done["elapsed"] == pytest.approx(10.0, rel=0.05)
    assert done["met"] is met


def test_task_loiter_then_land():
    target = offset_point(HOME, 10, 0, 10)
    b = PlanMission(MissionPlan([PlanTask(target, 60, loiter_seconds=5)]), 10)
    rig = agent_rig(b)
    rig.run_s(40)
    expected = (10 - ACCEPTANCE_RADIUS) / Airframe().cruise_speed + 5
    assert b.completions[0]["elapsed"] == pytest.approx(expected, abs=0.02)
    assert rig.agent.completed


def ferry_sim(**plan_kw):
    doc = scenario_doc(
        duration=60,
        nodes=[
            {"id": 1, "kind": "ground", "role": "leader", "start": {"east": -100}},
            {"id": 2, "kind": "ground", "start": {"east": 100}},
            {"id": 5, "kind": "air", "role": "ferry", "start": {"east": -100}},
        ],
        plans=[{
            "node": 5, "mission": "ferry", "region_a": {"east": -100}, "region_b": {"east": 100},
            "group_a": [1], "group_b": [2], **plan_kw,
        }],
    )
    return Simulation(validate(doc))


def test_ferry_custody_and_release():
    sim = ferry_sim(legs=2)
    sim.start()
    ferry = sim.agent(5).behavior
    assert isinstance(ferry, FerryMission)
    sim.scheduler.run(1000)
    pkt = Packet(7, 1, 2, 1, 255, 1, 8, 0xFFFFFFFF, b"cargo")
    assert ferry.near() == "a"
    assert ferry.take_custody(pkt) is True
    assert ferry.take_custody(pkt) is True
    assert (ferry.taken, ferry.held) == (1, 1)
    sim.scheduler.run(5999)
    assert ferry.released == 1 and ferry.held == 0 and ferry.conserved()
    assert (1, 7) in sim.network(2).delivered


def test_ferry_ignores_packets_for_current_region():
    sim = ferry_sim()
    sim.start()
    sim.scheduler.run(100)
    ferry = sim.agent(5).behavior
    assert ferry.take_custody(Packet(1, 2, 1, 2, 255, 1, 8, 0xFFFFFFFF, b"")) is False
    assert ferry.take_custody(Packet(1, 2, 9, 2, 255, 1, 8, 0xFFFFFFFF, b"")) is False
