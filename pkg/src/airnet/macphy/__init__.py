"""Framing, channel model and medium access."""

from .channel import ChannelParams, Jammer, JammerBehavior, Outcome, RadioConfig, path_loss, per_logistic
from .frame import MacFrame, crc_ok, decode_frame, mac_submit
from .medium import MacMode, Medium, decide_reception, tdma_slot_for

__all__ = [
    "ChannelParams",
    "Jammer",
    "JammerBehavior",
    "MacFrame",
    "MacMode",
    "Medium",
    "Outcome",
    "RadioConfig",
    "crc_ok",
    "decide_reception",
    "decode_frame",
    "mac_submit",
    "path_loss",
    "per_logistic",
    "tdma_slot_for",
]
