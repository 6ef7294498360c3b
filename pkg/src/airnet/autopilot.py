"""Simulated flight controller.

``handle_command``, ``step_kinematics`` and ``failsafe_check`` are pure
state transitions; :class:`Autopilot` binds them to a link, the scheduler and
the event log.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, replace

from . import mavlink as mav
from .geo import GeoPoint, enu_offset, offset_point
from .links import LinkManager
from .logger import Category, EventLog
from .simcore import TICKS_PER_SECOND, Scheduler, seconds_to_ticks, ticks_to_seconds

logger = logging.getLogger(__name__)

DT = 1.0 / TICKS_PER_SECOND
CRUISE_SPEED = 5.0
CLIMB_RATE = 2.0
ACCEPTANCE_RADIUS = 2.0
ALT_TOLERANCE = 1e-6
HEARTBEAT_TIMEOUT_TICKS = 3 * TICKS_PER_SECOND
DEFAULT_ENDURANCE_S = 1560.0
AUTOPILOT_COMPID = 1


class FlightMode(str, enum.Enum):
    DISARMED = "DISARMED"
    ARMED_IDLE = "ARMED_IDLE"
    TAKEOFF = "TAKEOFF"
    WAYPOINT = "WAYPOINT"
    LOITER = "LOITER"
    LAND = "LAND"
    RTL = "RTL"


NAV_COMMANDS = frozenset(
    {
        mav.MavCmd.NAV_WAYPOINT,
        mav.MavCmd.NAV_LOITER_TIME,
        mav.MavCmd.NAV_RETURN_TO_LAUNCH,
        mav.MavCmd.NAV_LAND,
        mav.MavCmd.NAV_TAKEOFF,
    }
)


class CommandRejected(Exception):
    pass


class UnsupportedAction(Exception):
    pass


@dataclass(frozen=True)
class Airframe:
    cruise_speed: float = CRUISE_SPEED
    climb_rate: float = CLIMB_RATE
    acceptance_radius: float = ACCEPTANCE_RADIUS


@dataclass(frozen=True)
class VehicleState:
    position: GeoPoint
    home: GeoPoint
    mode: FlightMode = FlightMode.DISARMED
    armed: bool = False
    autonomous: bool = False
    gps_lock: bool = True
    groundspeed: float = 0.0
    climb_rate: float = 0.0
    heading: float = 0.0
    endurance_ticks: int = seconds_to_ticks(DEFAULT_ENDURANCE_S)
    active_target: GeoPoint | None = None
    target_reached: bool = False
    loiter_ticks: int = 0
    loiter_radius: float = 0.0
    loiter_until: int | None = None
    odometer: float = 0.0
    endurance_exhausted: bool = False

    @property
    def endurance_remaining(self) -> float:
        return ticks_to_seconds(self.endurance_ticks)

    @property
    def airborne(self) -> bool:
        return self.position.altitude > 0.0

    @property
    def holding(self) -> bool:
        """Arrived at the current target with no loiter timer left to run."""
        return self.mode is FlightMode.LOITER and self.target_reached and self.loiter_until is None

    def mode_flags(self) -> mav.ModeFlag:
        flags = mav.ModeFlag.NONE
        if self.armed:
            flags |= mav.ModeFlag.ARMED
        if self.autonomous:
            flags |= mav.ModeFlag.AUTONOMOUS
        return flags


def initial_state(start: GeoPoint, gps_lock: bool = True, endurance_s: float = DEFAULT_ENDURANCE_S) -> VehicleState:
    return VehicleState(
        position=start,
        home=start,
        gps_lock=gps_lock,
        endurance_ticks=seconds_to_ticks(endurance_s),
    )


def _land_target(state: VehicleState, where: GeoPoint | None = None) -> GeoPoint:
    p = where or state.position
    return GeoPoint(p.latitude, p.longitude, 0.0)


def handle_command(state: VehicleState, cmd: mav.CommandMsg, now: int = 0, airframe: Airframe = Airframe()) -> VehicleState:
    cid = cmd.command_id
    p = cmd.params
    if cid == mav.MavCmd.DO_SET_MODE:
        flags = mav.ModeFlag(int(p[0]) & 0xFF)
        autonomous = bool(flags & mav.ModeFlag.AUTONOMOUS)
        if flags & mav.ModeFlag.ARMED:
            if not state.armed:
                if state.endurance_ticks <= 0:
                    raise CommandRejected("no endurance left to arm")
                return replace(
                    state,
                    armed=True,
                    autonomous=autonomous,
                    mode=FlightMode.ARMED_IDLE,
                    home=state.position if not state.airborne else state.home,
                    active_target=None,
                    target_reached=False,
                )
            return replace(state, autonomous=autonomous)
        if state.armed:
            if state.airborne:
                raise CommandRejected("refusing to disarm in flight")
            return replace(state, armed=False, autonomous=autonomous, mode=FlightMode.DISARMED, active_target=None)
        return replace(state, autonomous=autonomous)
    if cid == mav.MavCmd.DO_SET_SERVO:
        raise UnsupportedAction("set-servo has no effect in the emulator")
    if cid not in mav.SUPPORTED_COMMANDS:
        raise CommandRejected(f"unsupported command {cid}")
    if not state.armed:
        raise CommandRejected(f"navigation command {cid} while disarmed")
    if state.mode is FlightMode.LAND and state.endurance_exhausted:
        raise CommandRejected("endurance exhausted; landing is mandatory")

    nav = dict(target_reached=False, loiter_until=None, loiter_ticks=0, loiter_radius=0.0)
    if cid == mav.MavCmd.NAV_TAKEOFF:
        target = state.position.with_altitude(max(0.0, p[6]))
        return replace(state, mode=FlightMode.TAKEOFF, active_target=target, **nav)
    if cid == mav.MavCmd.NAV_WAYPOINT:
        target = GeoPoint(p[4], p[5], max(0.0, p[6]))
        return replace(state, mode=FlightMode.WAYPOINT, active_target=target, **nav)
    if cid == mav.MavCmd.NAV_LOITER_TIME:
        target = GeoPoint(p[4], p[5], max(0.0, p[6]))
        new = replace(
            state,
            mode=FlightMode.LOITER,
            active_target=target,
            target_reached=False,
            loiter_until=None,
            loiter_ticks=seconds_to_ticks(max(0.0, p[0])),
            loiter_radius=max(0.0, p[2]),
        )
        if _arrived(new, airframe):
            new = replace(new, target_reached=True, loiter_until=now + new.loiter_ticks)
        return new
    if cid == mav.MavCmd.NAV_RETURN_TO_LAUNCH:
        if not state.gps_lock:
            return replace(state, mode=FlightMode.LAND, active_target=_land_target(state), **nav)
        target = state.home.with_altitude(state.position.altitude)
        return replace(state, mode=FlightMode.RTL, active_target=target, **nav)
    if cid == mav.MavCmd.NAV_LAND:
        return replace(state, mode=FlightMode.LAND, active_target=_land_target(state), **nav)
    raise CommandRejected(f"unhandled command {cid}")


def _arrived(state: VehicleState, airframe: Airframe) -> bool:
    if state.active_target is None:
        return False
    e, n, u = enu_offset(state.position, state.active_target)
    radius = airframe.acceptance_radius
    if state.mode is FlightMode.LOITER and state.loiter_radius > 0:
        radius = state.loiter_radius
    return math.hypot(e, n) <= radius and abs(u) <= ALT_TOLERANCE


# absorbs float drift from summing per-tick steps
SNAP_M = 1e-9


def step_kinematics(state: VehicleState, now: int = 0, dt: float = DT, airframe: Airframe = Airframe()) -> VehicleState:
    """Advance one tick of point-mass motion and the mode transitions it triggers."""
    changes: dict = {}
    endurance = state.endurance_ticks
    if state.armed:
        endurance = max(0, endurance - 1)
        changes["endurance_ticks"] = endurance

    target = state.active_target
    moving = state.armed and target is not None and state.mode not in (FlightMode.DISARMED, FlightMode.ARMED_IDLE)
    pos = state.position
    if moving:
        e, n, u = enu_offset(pos, target)
        dh = math.hypot(e, n)
        step_h = min(airframe.cruise_speed * dt, dh)
        step_v = min(airframe.climb_rate * dt, abs(u))
        if step_h >= dh - SNAP_M and step_v >= abs(u) - SNAP_M:
            new_pos = target
        else:
            de = e / dh * step_h if dh > 0 else 0.0
            dn = n / dh * step_h if dh > 0 else 0.0
            dz = math.copysign(step_v, u)
            new_pos = offset_point(pos, de, dn, dz)
            if step_v >= abs(u) - SNAP_M:
                new_pos = new_pos.with_altitude(target.altitude)
        if new_pos.altitude < 0:
            new_pos = new_pos.with_altitude(0.0)
        changes.update(
            position=new_pos,
            groundspeed=step_h / dt,
            climb_rate=math.copysign(step_v, u) / dt if step_v else 0.0,
            heading=(math.degrees(math.atan2(e, n)) % 360.0) if step_h > 0 else state.heading,
            odometer=state.odometer + math.hypot(step_h, step_v),
        )
    else:
        changes.update(groundspeed=0.0, climb_rate=0.0)

    new = replace(state, **changes)

    if new.armed and endurance == 0 and new.mode not in (FlightMode.LAND, FlightMode.DISARMED):
        return replace(
            new,
            mode=FlightMode.LAND,
            active_target=_land_target(new),
            target_reached=False,
            loiter_until=None,
            endurance_exhausted=True,
        )

    mode = new.mode
    if mode is FlightMode.TAKEOFF or mode is FlightMode.WAYPOINT:
        if _arrived(new, airframe):
            new = replace(new, mode=FlightMode.LOITER, target_reached=True, loiter_until=None, loiter_ticks=0)
    elif mode is FlightMode.LOITER:
        if not new.target_reached and _arrived(new, airframe):
            until = now + new.loiter_ticks if new.loiter_ticks > 0 else None
            new = replace(new, target_reached=True, loiter_until=until)
        elif new.loiter_until is not None and now >= new.loiter_until:
            new = replace(new, loiter_until=None, loiter_ticks=0)
    elif mode is FlightMode.RTL:
        if _arrived(new, airframe):
            new = replace(new, mode=FlightMode.LAND, active_target=_land_target(new, new.home), target_reached=False)
    elif mode is FlightMode.LAND:
        if new.position.altitude <= ALT_TOLERANCE:
            new = replace(
                new,
                position=new.position.with_altitude(0.0),
                mode=FlightMode.DISARMED,
                armed=False,
                active_target=None,
                target_reached=False,
                groundspeed=0.0,
                climb_rate=0.0,
            )
    return new


def failsafe_check(state: VehicleState, last_acu_heartbeat: int | None, now: int) -> VehicleState:
    """Heartbeat-loss failsafe: RTL with GPS lock, LAND without."""
    if not state.armed or last_acu_heartbeat is None:
        return state
    if now - last_acu_heartbeat <= HEARTBEAT_TIMEOUT_TICKS:
        return state
    if state.mode in (FlightMode.RTL, FlightMode.LAND, FlightMode.DISARMED):
        return state
    if state.gps_lock:
        return replace(
            state,
            mode=FlightMode.RTL,
            active_target=state.home.with_altitude(state.position.altitude),
            target_reached=False,
            loiter_until=None,
        )
    return replace(state, mode=FlightMode.LAND, active_target=_land_target(state), target_reached=False, loiter_until=None)


class Autopilot:
    """One emulated flight controller attached to the ``b`` side of a link."""

    def __init__(
        self,
        node_id: int,
        scheduler: Scheduler,
        log: EventLog,
        links: LinkManager,
        link_id: int,
        state: VehicleState,
        airframe: Airframe = Airframe(),
        vehicle_type: mav.VehicleType = mav.VehicleType.QUADROTOR,
        autopilot_type: mav.AutopilotType = mav.AutopilotType.ARDUPILOTMEGA,
    ):
        self.node_id = node_id
        self.sysid = node_id
        self.scheduler = scheduler
        self.log = log
        self.links = links
        self.link_id = link_id
        self.state = state
        self.airframe = airframe
        self.vehicle_type = vehicle_type
        self.autopilot_type = autopilot_type
        self.parser = mav.MavParser()
        self.seq = 0
        self.last_acu_heartbeat: int | None = None
        self.heartbeats_sent = 0
        self.heartbeats_skipped = 0
        self.failsafe_events = 0
        links.endpoints(link_id)[1].on_receive = self.on_bytes

    @property
    def t(self) -> float:
        return ticks_to_seconds(self.scheduler.now)

    def start(self) -> None:
        now = self.scheduler.now
        self.scheduler.every(1, self.node_id, self.tick, start=now + 1)
        self.scheduler.every(TICKS_PER_SECOND, self.node_id, self.heartbeat_tick, start=now)
        self.scheduler.every(TICKS_PER_SECOND, self.node_id, self.log_gps, start=now)

    def tick(self) -> None:
        now = self.scheduler.now
        before = self.state
        after = step_kinematics(before, now, DT, self.airframe)
        exhausted = after.endurance_exhausted and not before.endurance_exhausted
        if exhausted:
            self.log.record(
                self.t, self.node_id, Category.MODE, ev="endurance_exhausted", endurance=after.endurance_remaining
            )
        self._set_state(after, "endurance" if exhausted else "kinematics")
        fs = failsafe_check(self.state, self.last_acu_heartbeat, now)
        if fs is not self.state:
            self.failsafe_events += 1
            self.log.record(
                self.t,
                self.node_id,
                Category.MODE,
                ev="failsafe",
                last_heartbeat=ticks_to_seconds(self.last_acu_heartbeat),
                gps_lock=fs.gps_lock,
            )
            self._set_state(fs, "failsafe")

    def _set_state(self, new: VehicleState, reason: str) -> None:
        old = self.state
        self.state = new
        if new.mode is not old.mode:
            self.log.record(self.t, self.node_id, Category.MODE, ev="mode", **{"from": old.mode.value}, to=new.mode.value, reason=reason)
            if new.mode is FlightMode.DISARMED:
                self.log_gps()

    def log_gps(self) -> None:
        s = self.state
        p = s.position
        self.log.record(
            self.t,
            self.node_id,
            Category.GPS,
            lat=p.latitude,
            lon=p.longitude,
            alt=p.altitude,
            speed=s.groundspeed,
            climb=s.climb_rate,
            heading=s.heading,
            odometer=s.odometer,
            mode=s.mode.value,
        )

    def heartbeat_message(self) -> mav.HeartbeatMsg:
        return mav.HeartbeatMsg(self.vehicle_type, self.autopilot_type, self.state.mode_flags(), 1)

    def heartbeat_tick(self) -> None:
        if not self.links.is_connected(self.link_id):
            self.heartbeats_skipped += 1
            return
        self.send(self.heartbeat_message())
        self.heartbeats_sent += 1

    def send(self, msg: mav.Message) -> None:
        frame = mav.encode_frame(msg, self.seq, self.sysid, AUTOPILOT_COMPID)
        self.log.record(self.t, self.node_id, Category.MAVLINK, dir="tx", side="autopilot", msgid=msg.msgid, seq=self.seq, sysid=self.sysid)
        self.seq = (self.seq + 1) & 0xFF
        self.links.send_bytes(self.link_id, frame, side="b")

    def on_bytes(self, data: bytes) -> None:
        for frame in self.parser.feed(data):
            self.log.record(
                self.t, self.node_id, Category.MAVLINK, dir="rx", side="autopilot",
                msgid=frame.message_id, seq=frame.sequence, sysid=frame.system_id,
            )
            msg = mav.decode_message(frame)
            if isinstance(msg, mav.HeartbeatMsg):
                self.last_acu_heartbeat = self.scheduler.now
            elif msg.target_system == self.sysid:
                self.apply_command(msg)

    def apply_command(self, cmd: mav.CommandMsg) -> None:
        try:
            new = handle_command(self.state, cmd, self.scheduler.now, self.airframe)
        except UnsupportedAction as exc:
            self.log.record(self.t, self.node_id, Category.ERROR, ev="unsupported_action", command=cmd.command_id, note=str(exc))
            return
        except CommandRejected as exc:
            self.log.record(self.t, self.node_id, Category.ERROR, ev="command_rejected", command=cmd.command_id, note=str(exc))
            return
        self._set_state(new, f"command {cmd.command_id}")
