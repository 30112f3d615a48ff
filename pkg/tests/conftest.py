import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from edcacap.scenario import (PhyParams, Scenario, StationSpec,
                              TrafficDescriptor)


@pytest.fixture(scope="session")
def phy():
    return PhyParams()


def saturated(packet=1000, flows=1):
    return TrafficDescriptor(kind="saturated", mean_packet=packet, flows=flows)


def cbr(packet, interval_ms, flows=1):
    return TrafficDescriptor(kind="cbr", mean_packet=packet,
                             mean_rate=8.0 * packet / (interval_ms / 1000.0),
                             packet_interval=interval_ms, flows=flows)


def voice_descriptor(period_ms=10.0, codec_bps=64000, flows=1):
    payload = int(codec_bps * period_ms / 1000 / 8) + 40
    return cbr(payload, period_ms, flows)


def two_way_voice(connections, period_ms=10.0, codec_bps=64000,
                  data_stations=0, data_packet=1000, **scenario_kwargs):
    """K two-way voice connections; the AP aggregates the downlink flows."""
    ap_traffic = {3: voice_descriptor(period_ms, codec_bps, flows=connections)}
    stations = [StationSpec(station_id="voice", count=connections,
                            traffic={3: voice_descriptor(period_ms, codec_bps)})]
    if data_stations:
        ap_traffic[1] = saturated()
        stations.append(StationSpec(station_id="data", count=data_stations,
                                    traffic={1: saturated()}))
    stations.insert(0, StationSpec(station_id="ap", traffic=ap_traffic))
    return Scenario(stations=tuple(stations), **scenario_kwargs)
