"""Airtime computation: interframe spaces, frame durations, exchange times.

All durations are in microseconds.  Frame durations follow ERP-OFDM symbol
accounting: 16 service bits and 6 tail bits are prepended/appended to the MAC
frame, padded up to whole symbols carrying 4 bits per microsecond per Mb/s,
plus the PHY preamble and the trailing signal extension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

from .scenario import AcParams, PhyParams, TrafficClassTable

RTS_BYTES = 20
CTS_BYTES = 14  # same frame body as an ACK


def aifs(ac: AcParams, phy: PhyParams) -> float:
    """Arbitration interframe space: SIFS plus AIFSN idle slots."""
    return phy.sifs + ac.aifsn * phy.slot_time


def frame_duration(frame_bytes: int, rate_mbps: float, phy: PhyParams) -> float:
    """On-air duration of one frame at the given rate."""
    if frame_bytes <= 0:
        raise ValueError("frame_bytes must be > 0")
    bits = 16 + 6 + 8 * frame_bytes
    symbols = math.ceil(bits / (4.0 * rate_mbps))
    return phy.preamble_plus_signal + phy.ofdm_symbol * symbols + phy.signal_extension


@dataclass(frozen=True)
class ExchangeTimes:
    """Per-class exchange durations for one access mode.

    ``collision`` uses the longest payload among classes whose contention
    zones overlap, which is every class present in the table (validated by the
    zone structure), so heterogeneous payloads produce a conservative
    collision cost for the smaller-payload classes.
    """

    access: str                         # "basic" | "rts_cts"
    slot_time: float
    payload: tuple[float, ...]          # data frame airtime per class
    success: tuple[float, ...]          # full successful exchange per class
    collision: tuple[float, ...]        # wasted airtime per collision per class
    aifs_us: Mapping[int, float]        # per AC
    ack_timeout_us: Mapping[int, float]  # per AC; response timeout after a frame

    def reduced(self, keep: tuple[int, ...]) -> "ExchangeTimes":
        """Times for the sub-table made of the ``keep`` class indices."""
        payload = tuple(self.payload[j] for j in keep)
        success = tuple(self.success[j] for j in keep)
        if self.access == "rts_cts":
            collision = tuple(self.collision[j] for j in keep)
        else:
            shrink = max(self.payload) - max(payload)
            collision = tuple(self.collision[j] - shrink for j in keep)
        return ExchangeTimes(access=self.access, slot_time=self.slot_time,
                             payload=payload, success=success,
                             collision=collision, aifs_us=self.aifs_us,
                             ack_timeout_us=self.ack_timeout_us)


def exchange_times(table: TrafficClassTable, phy: PhyParams,
                   access: str = "basic") -> ExchangeTimes:
    """Compute per-class success and collision durations.

    A successful basic-access exchange is data, SIFS, ACK, then the sender's
    AIFS; a collision is the longest colliding frame followed by the response
    timeout and AIFS.  The timeout is SIFS plus the basic-rate response frame
    plus one slot, i.e. the amount by which the extended interframe space
    exceeds the AIFS.  RTS/CTS swaps the four-way handshake in, which makes
    the collision cost payload-independent.
    """
    if access not in ("basic", "rts_cts"):
        raise ValueError(f"unknown access mode {access!r}")
    delta = phy.propagation_delay
    t_ack = frame_duration(phy.ack_frame, phy.basic_rate, phy)
    t_cts = frame_duration(CTS_BYTES, phy.basic_rate, phy)
    t_rts = frame_duration(RTS_BYTES, phy.basic_rate, phy)
    aifs_us = {i: aifs(ac, phy) for i, ac in table.acs.items()}
    ack_timeout = phy.sifs + t_ack + phy.slot_time
    cts_timeout = phy.sifs + t_cts + phy.slot_time
    timeout = cts_timeout if access == "rts_cts" else ack_timeout
    ack_timeout_us = {i: timeout for i in table.acs}

    payload = tuple(
        frame_duration(phy.mac_header + tc.descriptor.mean_packet, phy.data_rate, phy)
        for tc in table)
    longest = max(payload)

    success, collision = [], []
    for tc, t_p in zip(table, payload):
        a = aifs_us[tc.ac]
        if access == "basic":
            success.append(t_p + delta + phy.sifs + t_ack + delta + a)
            collision.append(longest + ack_timeout + a)
        else:
            success.append(t_rts + delta + phy.sifs + t_cts + delta + phy.sifs
                           + t_p + delta + phy.sifs + t_ack + delta + a)
            collision.append(t_rts + cts_timeout + a)
    return ExchangeTimes(access=access, slot_time=phy.slot_time, payload=payload,
                         success=tuple(success), collision=tuple(collision),
                         aifs_us=aifs_us, ack_timeout_us=ack_timeout_us)
