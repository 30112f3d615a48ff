import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edcacap.errors import ScenarioError
from edcacap.scenario import (AcParams, DEFAULT_ACS, FlowPlacement, Scenario,
                              StationSpec, apply_flows, derive_traffic_classes,
                              load_scenario, load_scenario_file)

from conftest import cbr, saturated, voice_descriptor


ACS_TWO = {1: AcParams.create(aifsn=3, cw_min=31, cw_max=1023),
           2: AcParams.create(aifsn=2, cw_min=15, cw_max=31)}


def test_infrastructure_example_yields_four_classes():
    stations = [
        StationSpec(station_id="ap", traffic={1: saturated(), 2: saturated()}),
        StationSpec(station_id="up1", count=3, traffic={1: saturated()}),
        StationSpec(station_id="up2", count=4, traffic={2: saturated()}),
    ]
    table = derive_traffic_classes(stations, ACS_TWO)
    assert len(table) == 4
    # ascending AC, then lexicographic activity vector
    assert [(tc.ac, tc.activity) for tc in table] == [
        (1, (0, 1, 0, 0)), (1, (0, 1, 1, 0)),
        (2, (0, 0, 1, 0)), (2, (0, 1, 1, 0)),
    ]
    assert [tc.flow_count for tc in table] == [3, 1, 4, 1]
    # co-located classes share a group; the uplink ones do not
    assert table[1].group == table[3].group
    assert table[0].group != table[2].group


def test_single_station_degenerate_table():
    table = derive_traffic_classes(
        [StationSpec(station_id="s", traffic={3: saturated()})], DEFAULT_ACS)
    assert len(table) == 1
    assert table[0].flow_count == 1
    assert table[0].aifs_offset == 0


def test_mixed_activity_groups_split_classes():
    stations = [
        StationSpec(station_id="a", count=10, traffic={1: saturated()}),
        StationSpec(station_id="b", count=10, traffic={3: saturated()}),
        StationSpec(station_id="c", count=10,
                    traffic={1: saturated(), 3: saturated()}),
    ]
    table = derive_traffic_classes(stations, DEFAULT_ACS)
    assert len(table) == 4
    assert [tc.flow_count for tc in table] == [10, 10, 10, 10]
    # the dual-AC stations contribute one class per AC, co-active
    by_ac = {}
    for tc in table:
        by_ac.setdefault(tc.ac, []).append(tc.activity)
    assert (0, 1, 0, 1) in by_ac[1] and (0, 1, 0, 1) in by_ac[3]


def test_class_count_matches_per_ac_group_counts():
    stations = [
        StationSpec(station_id="a", count=2, traffic={1: saturated()}),
        StationSpec(station_id="b", count=3,
                    traffic={2: saturated(), 3: saturated()}),
        StationSpec(station_id="c", count=1, traffic={3: cbr(120, 10.0)}),
    ]
    table = derive_traffic_classes(stations, DEFAULT_ACS)
    per_ac_groups = {}
    for tc in table:
        per_ac_groups.setdefault(tc.ac, set()).add(tc.group)
    assert len(table) == sum(len(v) for v in per_ac_groups.values())
    distinct_groups = {tc.group for tc in table}
    assert len(distinct_groups) <= len(table)


def test_same_activity_different_traffic_splits_groups():
    stations = [
        StationSpec(station_id="ap", traffic={3: voice_descriptor(flows=9)}),
        StationSpec(station_id="sta", count=9, traffic={3: voice_descriptor()}),
    ]
    table = derive_traffic_classes(stations, DEFAULT_ACS)
    assert len(table) == 2
    assert {tc.flow_count for tc in table} == {1, 9}


def test_class_tag_forces_distinct_classes():
    base = StationSpec(station_id="x", count=2, traffic={3: saturated()})
    tagged = StationSpec(station_id="y", count=3, traffic={3: saturated()},
                         class_tag="special")
    table = derive_traffic_classes([base, tagged], DEFAULT_ACS)
    assert len(table) == 2
    assert sorted(tc.flow_count for tc in table) == [2, 3]


def test_station_order_does_not_matter():
    stations = [
        StationSpec(station_id="a", count=2, traffic={1: saturated()}),
        StationSpec(station_id="b", count=5, traffic={3: saturated()}),
        StationSpec(station_id="c", traffic={1: saturated(), 3: saturated()}),
    ]
    t1 = derive_traffic_classes(stations, DEFAULT_ACS)
    t2 = derive_traffic_classes(list(reversed(stations)), DEFAULT_ACS)
    assert [dataclasses.astuple(a) for a in t1] == [dataclasses.astuple(b)
                                                    for b in t2]


@given(st.lists(
    st.tuples(st.sampled_from([(1,), (2,), (3,), (1, 3), (2, 3), (1, 2, 3)]),
              st.integers(min_value=1, max_value=5)),
    min_size=1, max_size=5))
@settings(max_examples=40, deadline=None)
def test_random_station_sets_keep_invariants(spec):
    stations = [StationSpec(station_id=f"s{i}", count=count,
                            traffic={ac: saturated() for ac in acs})
                for i, (acs, count) in enumerate(spec)]
    table = derive_traffic_classes(stations, DEFAULT_ACS)
    offsets = [tc.aifs_offset for tc in table]
    assert min(offsets) == 0
    assert all(d >= 0 for d in offsets)
    # one class per (group, AC); groups never exceed classes
    assert len({(tc.group, tc.ac) for tc in table}) == len(table)
    assert len({tc.group for tc in table}) <= len(table)
    # total station count preserved through grouping
    assert (sum({tc.group: tc.flow_count for tc in table}.values())
            == sum(count for _, count in spec))


def test_empty_station_list_rejected():
    with pytest.raises(ScenarioError, match="stations"):
        derive_traffic_classes([], DEFAULT_ACS)


def test_active_ac_without_parameters_rejected():
    with pytest.raises(ScenarioError, match="AC 3"):
        derive_traffic_classes(
            [StationSpec(station_id="s", traffic={3: saturated()})], ACS_TWO)


def test_loader_applies_phy_defaults():
    scenario = load_scenario({"stations": [
        {"id": "s", "traffic": {"ac3": {"kind": "saturated", "mean_packet": 500}}}]})
    assert scenario.phy.slot_time == 9.0
    assert scenario.phy.sifs == 10.0
    assert scenario.phy.data_rate == 54.0
    assert scenario.phy.basic_rate == 6.0


def test_loader_default_edca_table():
    scenario = load_scenario({"stations": []})
    assert scenario.acs[1].aifsn == 3
    assert scenario.acs[2].aifsn == 2
    assert scenario.acs[3].aifsn == 2
    assert (scenario.acs[1].cw_min, scenario.acs[2].cw_min,
            scenario.acs[3].cw_min) == (31, 15, 7)
    assert (scenario.acs[1].cw_max, scenario.acs[2].cw_max,
            scenario.acs[3].cw_max) == (1023, 31, 15)
    assert all(ac.retry_limit == 7 for ac in scenario.acs.values())


def test_loader_rejects_cw_inversion_with_field_path():
    doc = {"acs": [None, {"aifsn": 3, "cw_min": 31, "cw_max": 15}],
           "stations": []}
    with pytest.raises(ScenarioError, match=r"acs\[1\]"):
        load_scenario(doc)


def test_loader_rejects_unknown_keys():
    with pytest.raises(ScenarioError, match="unknown keys"):
        load_scenario({"stations": [], "extra": 1})


def test_loader_rejects_duplicate_station_ids():
    doc = {"stations": [
        {"id": "s", "traffic": {"ac3": {"kind": "saturated", "mean_packet": 10}}},
        {"id": "s", "traffic": {"ac2": {"kind": "saturated", "mean_packet": 10}}}]}
    with pytest.raises(ScenarioError, match="duplicate"):
        load_scenario(doc)


def test_loader_checks_declared_activity_vector():
    doc = {"stations": [
        {"id": "s", "activity": [0, 1, 0, 0],
         "traffic": {"ac3": {"kind": "saturated", "mean_packet": 10}}}]}
    with pytest.raises(ScenarioError, match="activity"):
        load_scenario(doc)


def test_cbr_rate_interval_consistency_enforced():
    doc = {"stations": [
        {"id": "s", "traffic": {"ac3": {"kind": "cbr", "mean_packet": 120,
                                        "packet_interval": 10.0,
                                        "mean_rate": 50000.0}}}]}
    with pytest.raises(ScenarioError, match="mean_rate"):
        load_scenario(doc)


def test_document_round_trip_preserves_classes():
    scenario = load_scenario_file("voice_20_connections")
    reloaded = load_scenario(scenario.to_document())
    t1, t2 = scenario.traffic_classes(), reloaded.traffic_classes()
    assert [dataclasses.astuple(a) for a in t1] == [dataclasses.astuple(b)
                                                    for b in t2]
    assert reloaded.phy == scenario.phy
    assert reloaded.solver == scenario.solver


def test_trace_descriptor_means_come_from_file():
    scenario = load_scenario_file("video_trace_station")
    desc = scenario.station("video").traffic[2]
    assert desc.kind == "trace"
    assert desc.mean_packet == 861
    assert desc.arrival_rate() == pytest.approx(174000 / (8 * 821), rel=1e-6)


def test_aifsn_ordering_validated():
    acs = {1: AcParams.create(aifsn=2, cw_min=31, cw_max=1023),
           3: AcParams.create(aifsn=3, cw_min=7, cw_max=15)}
    with pytest.raises(ScenarioError, match="AIFSN"):
        derive_traffic_classes(
            [StationSpec(station_id="a", traffic={1: saturated()}),
             StationSpec(station_id="b", traffic={3: saturated()})], acs)


def test_apply_flows_stacks_identical_descriptors():
    base = Scenario(stations=(
        StationSpec(station_id="ap", traffic={3: voice_descriptor(flows=2)}),))
    desc = voice_descriptor()
    grown = apply_flows(base, [FlowPlacement("ap", 3, desc),
                               FlowPlacement("sta7", 3, desc)])
    assert grown.station("ap").traffic[3].flows == 3
    assert grown.station("sta7").traffic[3].flows == 1


def test_apply_flows_rejects_grouped_station_target():
    base = Scenario(stations=(
        StationSpec(station_id="many", count=4, traffic={3: saturated()}),))
    with pytest.raises(ScenarioError, match="count > 1"):
        apply_flows(base, [FlowPlacement("many", 3, voice_descriptor())])


def test_ac_params_validation():
    with pytest.raises(ScenarioError, match="aifsn"):
        AcParams.create(aifsn=0, cw_min=15, cw_max=1023)
    with pytest.raises(ScenarioError, match="power of two"):
        AcParams.create(aifsn=2, cw_min=20, cw_max=1023)
    ac = AcParams.create(aifsn=2, cw_min=15, doublings=3)
    assert ac.cw_max == 127
    assert [ac.window(k) for k in (1, 2, 3, 4, 5)] == [15, 31, 63, 127, 127]
