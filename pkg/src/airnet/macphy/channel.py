"""Log-distance path loss, link budget and a logistic packet-error curve."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable

MIN_FREQ_HZ = 70e6
MAX_FREQ_HZ = 6e9
REFERENCE_DISTANCE_M = 1.0
CHANNEL_BANDWIDTH_HZ = 1e6
# no capture: overlapping frames within this power margin destroy each other
CAPTURE_MARGIN_DB = 6.0
# noise-only SNR this many curve slopes under the threshold is undetectable
SENSITIVITY_SLOPES = 3.0


@dataclass(frozen=True)
class RadioConfig:
    tx_power: float = 10.0
    carrier_frequency: float = 2.4e9
    bitrate: float = 250_000.0
    noise_floor: float = -95.0
    rx_gain: float = 0.0

    def __post_init__(self):
        if not MIN_FREQ_HZ <= self.carrier_frequency <= MAX_FREQ_HZ:
            raise ValueError(f"carrier frequency {self.carrier_frequency} Hz outside 70 MHz - 6 GHz")
        if self.bitrate <= 0:
            raise ValueError("bitrate must be positive")

    def airtime_us(self, nbytes: int) -> int:
        return -(-nbytes * 8 * 1_000_000 // int(self.bitrate))


@dataclass(frozen=True)
class ChannelParams:
    pl0: float = 40.0
    exponent: float = 2.7
    snr_threshold: float = 5.0
    slope: float = 2.0
    d0: float = REFERENCE_DISTANCE_M

    def __post_init__(self):
        if self.slope <= 0:
            raise ValueError("PER slope must be positive")
        if self.d0 <= 0:
            raise ValueError("reference distance must be positive")

    def path_loss(self, d: float) -> float:
        return path_loss(d, self.pl0, self.exponent, self.d0)

    def per(self, snr_db: float) -> float:
        return per_logistic(snr_db, self.snr_threshold, self.slope)

    @property
    def sensitivity_snr(self) -> float:
        return self.snr_threshold - SENSITIVITY_SLOPES * self.slope


def path_loss(d: float, pl0: float = 40.0, n: float = 2.7, d0: float = REFERENCE_DISTANCE_M) -> float:
    """PL(d) = PL0 + 10 n log10(d / d0), clamped to PL0 inside d0."""
    d = max(d, d0)
    return pl0 + 10.0 * n * math.log10(d / d0)


def rssi_dbm(radio_tx_power: float, d: float, params: ChannelParams, rx_gain: float = 0.0) -> float:
    return radio_tx_power - params.path_loss(d) + rx_gain


def per_logistic(snr_db: float, threshold: float, slope: float) -> float:
    x = (snr_db - threshold) / slope
    if x > 700:
        return 0.0
    if x < -700:
        return 1.0
    return 1.0 / (1.0 + math.exp(x))


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    if mw <= 0:
        return -math.inf
    return 10.0 * math.log10(mw)


def power_sum_dbm(levels_dbm: Iterable[float]) -> float:
    """Sum powers in linear milliwatts and return dBm."""
    return mw_to_dbm(sum(dbm_to_mw(x) for x in levels_dbm))


def snr_db(signal_dbm: float, noise_floor_dbm: float, interference_mw: float = 0.0) -> float:
    return signal_dbm - mw_to_dbm(dbm_to_mw(noise_floor_dbm) + interference_mw)


def co_channel(f1: float, f2: float) -> bool:
    return abs(f1 - f2) < CHANNEL_BANDWIDTH_HZ


class Outcome(str, enum.Enum):
    DELIVERED = "delivered"
    CRC_FAIL = "crc_fail"
    BELOW_SENSITIVITY = "below_sensitivity"


class JammerBehavior(str, enum.Enum):
    PASSIVE = "passive"
    ADAPTIVE = "adaptive"


@dataclass
class Jammer:
    """Noncooperative emitter. Passive ones follow a fixed duty cycle;
    adaptive ones radiate only while they sense cooperative energy."""

    jammer_id: int
    position: tuple[float, float, float]
    power: float
    frequency: float
    behavior: JammerBehavior = JammerBehavior.PASSIVE
    duty_cycle: float = 1.0
    period_us: int = 100_000
    start_us: int = 0
    stop_us: int | None = None
    sense_threshold: float = -90.0
    active_us: int = 0

    def passive_on_during(self, start_us: int, end_us: int) -> bool:
        if self.behavior is not JammerBehavior.PASSIVE or self.duty_cycle <= 0:
            return False
        lo = max(start_us, self.start_us)
        hi = end_us if self.stop_us is None else min(end_us, self.stop_us)
        if hi <= lo:
            return False
        if self.duty_cycle >= 1.0:
            return True
        on_len = int(self.period_us * self.duty_cycle)
        # first period whose on-window could intersect [lo, hi)
        k = (lo - self.start_us) // self.period_us
        while True:
            on_start = self.start_us + k * self.period_us
            if on_start >= hi:
                return False
            if on_start + on_len > lo:
                return True
            k += 1

    def jammer_emit(self, t_us: int, sensing_cooperative: bool = False) -> float:
        """Radiated power in mW at instant ``t_us`` (0 when silent)."""
        if self.behavior is JammerBehavior.ADAPTIVE:
            return dbm_to_mw(self.power) if sensing_cooperative else 0.0
        return dbm_to_mw(self.power) if self.passive_on_during(t_us, t_us + 1) else 0.0


def distance3(a: tuple[float, float, float], b: tuple[float, float, float]) -> float:
    return math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + (a[2] - b[2]) ** 2)
