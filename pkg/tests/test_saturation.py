import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from edcacap.errors import ZoneError
from edcacap.saturation import (SaturationSolution, average_collision_prob,
                                mean_backoff_slots, service_time,
                                slot_occupancy, solve_fixed_point,
                                zone_collision_prob, zone_structure,
                                zone_transmission_prob)
from edcacap.scenario import (AcParams, DEFAULT_ACS, PhyParams, SolverConfig,
                              StationSpec, derive_traffic_classes)
from edcacap.timing import exchange_times

from conftest import saturated
from oracles import dtmc_symmetric_fixed_point

PHY = PhyParams()


def table_of(stations, acs=None):
    return derive_traffic_classes(stations, acs or DEFAULT_ACS)


def two_priority_table(n_low=5, n_high=5):
    acs = {1: AcParams.create(aifsn=3, cw_min=31, doublings=3),
           3: AcParams.create(aifsn=2, cw_min=15, doublings=3)}
    stations = [
        StationSpec(station_id="low", count=n_low, traffic={1: saturated()}),
        StationSpec(station_id="high", count=n_high, traffic={3: saturated()}),
    ]
    return table_of(stations, acs)


def symmetric_table(n, cw_min=15, doublings=3, retry=7):
    acs = {3: AcParams.create(aifsn=2, cw_min=cw_min, doublings=doublings,
                              retry_limit=retry)}
    return table_of([StationSpec(station_id="s", count=n,
                                 traffic={3: saturated()})], acs)


# -- zone structure -----------------------------------------------------------

def test_zone_structure_two_priorities():
    table = two_priority_table()
    zs = zone_structure(table)
    assert zs.max_idle_slots == 127
    assert [z.ordinal for z in zs.zones] == [1, 2]
    assert zs.zones[0].eligible == (1,)           # high-priority class only
    assert zs.zones[1].eligible == (0, 1)
    assert zs.zones[0].first_slot == 1
    assert zs.zones[1].first_slot == 2
    # eligible sets grow along the idle period
    for earlier, later in zip(zs.zones, zs.zones[1:]):
        assert set(earlier.eligible) <= set(later.eligible)


def test_zone_structure_rejects_degenerate_window():
    acs = {1: AcParams.create(aifsn=9, cw_min=1, cw_max=1),
           3: AcParams.create(aifsn=2, cw_min=1, cw_max=1)}
    stations = [StationSpec(station_id="a", traffic={1: saturated()}),
                StationSpec(station_id="b", traffic={3: saturated()})]
    with pytest.raises(ZoneError):
        zone_structure(table_of(stations, acs))


# -- zone-level probabilities --------------------------------------------------

def test_collision_prob_single_user_is_zero():
    table = symmetric_table(1)
    zone = zone_structure(table).zones[0]
    assert zone_collision_prob(0, zone, [0.3], table) == pytest.approx(0.0)


def test_collision_prob_classical_form():
    table = symmetric_table(6)
    zone = zone_structure(table).zones[0]
    tau = 0.11
    assert zone_collision_prob(0, zone, [tau], table) == pytest.approx(
        1.0 - (1.0 - tau) ** 5)


def test_colocated_virtual_collision_asymmetry():
    # one station running both a high- and a low-priority queue: only the
    # simultaneous attempt hurts the low-priority one
    stations = [StationSpec(station_id="s",
                            traffic={1: saturated(), 3: saturated()})]
    table = table_of(stations)
    zs = zone_structure(table)
    shared = zs.zones[-1]
    low = next(j for j, tc in enumerate(table) if tc.ac == 1)
    high = next(j for j, tc in enumerate(table) if tc.ac == 3)
    tau = [0.0, 0.0]
    tau[low], tau[high] = 0.2, 0.35
    assert zone_collision_prob(high, shared, tau, table) == pytest.approx(0.0)
    assert zone_collision_prob(low, shared, tau, table) == pytest.approx(tau[high])


def test_collision_prob_requires_eligibility():
    table = two_priority_table()
    first = zone_structure(table).zones[0]
    with pytest.raises(ValueError, match="not eligible"):
        zone_collision_prob(0, first, [0.1, 0.1], table)


def test_transmission_prob_limits():
    table = symmetric_table(2)
    zone = zone_structure(table).zones[0]
    assert zone_transmission_prob(zone, [0.0], table) == 0.0
    assert zone_transmission_prob(zone, [0.5], table) == pytest.approx(0.75)


def test_transmission_prob_monotone_across_zones():
    table = two_priority_table()
    zs = zone_structure(table)
    tau = [0.07, 0.11]
    inner = zone_transmission_prob(zs.zones[0], tau, table)
    outer = zone_transmission_prob(zs.zones[1], tau, table)
    assert outer >= inner


# -- slot occupancy -------------------------------------------------------------

def test_occupancy_uniform_without_transmissions():
    table = symmetric_table(4, cw_min=7, doublings=1)
    zs = zone_structure(table)
    occ = slot_occupancy(zs, np.zeros(len(zs.zones)))
    assert occ == pytest.approx(np.full(zs.max_idle_slots,
                                        1.0 / zs.max_idle_slots))


def test_occupancy_two_slot_hand_solution():
    acs = {3: AcParams.create(aifsn=2, cw_min=3, cw_max=3, retry_limit=2)}
    table = table_of([StationSpec(station_id="s", count=2,
                                  traffic={3: saturated()})], acs)
    zs = zone_structure(table)
    assert zs.max_idle_slots == 3
    occ = slot_occupancy(zs, np.array([0.5]))
    assert occ == pytest.approx([4 / 7, 2 / 7, 1 / 7])


@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=1))
@settings(max_examples=30, deadline=None)
def test_occupancy_normalized_and_decaying(p_tr):
    table = symmetric_table(3)
    zs = zone_structure(table)
    occ = slot_occupancy(zs, np.array(p_tr))
    assert occ.sum() == pytest.approx(1.0)
    assert np.all(np.diff(occ) <= 1e-15)


# -- averaging and backoff -------------------------------------------------------

def test_average_collision_prob_constant_and_single_zone():
    occ = np.array([0.5, 0.3, 0.2])
    assert average_collision_prob(0, occ, np.array([0.4, 0.4, 0.4]), 1) == \
        pytest.approx(0.4)


def test_average_collision_prob_two_zone_hand_value():
    occ = np.array([0.5, 0.3, 0.2])
    per_slot = np.array([0.1, 0.3, 0.3])
    assert average_collision_prob(0, occ, per_slot, 1) == pytest.approx(0.20)
    # the slower class only sees the shared zone
    assert average_collision_prob(1, occ, per_slot, 2) == pytest.approx(0.3)


def test_average_collision_prob_requires_eligible_slot():
    with pytest.raises(ValueError, match="eligible"):
        average_collision_prob(0, np.array([0.6, 0.4]), np.array([0.1, 0.1]), 3)


def test_mean_backoff_no_collisions():
    assert mean_backoff_slots(0.0, 15, 1023, 7) == pytest.approx(7.5)


def test_mean_backoff_constant_window():
    for p in (0.0, 0.3, 0.8):
        assert mean_backoff_slots(p, 31, 31, 5) == pytest.approx(15.5)


def test_mean_backoff_three_stage_series():
    # stages 15, 31, 31 at p=0.5, conditioned on no drop
    assert mean_backoff_slots(0.5, 15, 31, 3) == pytest.approx(
        10.928571428571429)


def test_mean_backoff_rejects_certain_collision():
    with pytest.raises(ValueError):
        mean_backoff_slots(1.0, 15, 1023, 7)


# -- the fixed point -------------------------------------------------------------

def solve(table, access="basic"):
    times = exchange_times(table, PHY, access)
    return solve_fixed_point(table, times), times


def test_symmetric_case_matches_backoff_chain_oracle():
    table = symmetric_table(10, cw_min=15, doublings=3, retry=7)
    solution, _ = solve(table, "rts_cts")
    tau_ref, p_ref = dtmc_symmetric_fixed_point(10, 15, 127, 7)
    assert solution.attempt_prob[0] == pytest.approx(tau_ref, rel=0.01)
    assert solution.collision_prob[0] == pytest.approx(p_ref, rel=0.01)


def check_solution_invariants(table, solution: SaturationSolution):
    n = len(table)
    flows = [tc.flow_count for tc in table]
    assert sum(f * g for f, g in zip(flows, solution.success_share)) == \
        pytest.approx(1.0, abs=1e-9)
    for j in range(n):
        assert solution.success_count(j, j) == pytest.approx(flows[j])
        assert 0.0 <= solution.collision_prob[j] < 1.0
        assert 0.0 < solution.attempt_prob[j] <= 1.0
        assert solution.cycle_time[j] == pytest.approx(
            solution.success_time[j] + solution.collision_time[j]
            + solution.idle_time[j], rel=1e-12)
        assert solution.drop_prob[j] == pytest.approx(
            solution.collision_prob[j] ** table.ac_params(j).retry_limit)
    assert sum(solution.occupancy) == pytest.approx(1.0)
    assert 0.0 < sum(solution.throughput) <= 1.0


def test_solution_invariants_across_scenarios():
    cases = [
        symmetric_table(3, cw_min=7, doublings=1),
        symmetric_table(20),
        two_priority_table(10, 10),
        table_of([StationSpec(station_id="dual",
                              traffic={1: saturated(), 3: saturated()}),
                  StationSpec(station_id="plain", count=4,
                              traffic={3: saturated()})]),
    ]
    for table in cases:
        solution, _ = solve(table)
        check_solution_invariants(table, solution)


def test_fixed_point_residual_reconsistency():
    table = two_priority_table(8, 8)
    times = exchange_times(table, PHY, "rts_cts")
    config = SolverConfig()
    solution = solve_fixed_point(table, times, config)
    assert solution.residual < config.tolerance
    # one more full application of the map barely moves the answer
    again = solve_fixed_point(table, times, config)
    for a, b in zip(solution.attempt_prob, again.attempt_prob):
        assert a == pytest.approx(b, rel=1e-9)


def test_single_station_contention_free_closed_form():
    table = symmetric_table(1, cw_min=15, doublings=3)
    solution, times = solve(table)
    assert solution.collision_prob[0] == pytest.approx(0.0)
    expected_cycle = times.success[0] + 7.5 * PHY.slot_time
    assert solution.cycle_time[0] == pytest.approx(expected_cycle)
    assert solution.throughput[0] == pytest.approx(
        times.payload[0] / expected_cycle)
    assert solution.service_time[0] == pytest.approx(solution.cycle_time[0])


def test_aifsn_shift_leaves_contention_solution_unchanged():
    def build(shift):
        acs = {1: AcParams.create(aifsn=3 + shift, cw_min=31, doublings=3),
               3: AcParams.create(aifsn=2 + shift, cw_min=15, doublings=3)}
        stations = [
            StationSpec(station_id="low", count=6, traffic={1: saturated()}),
            StationSpec(station_id="high", count=6, traffic={3: saturated()}),
        ]
        return table_of(stations, acs)

    base = build(0)
    shifted = build(3)
    times = exchange_times(base, PHY, "rts_cts")  # hold exchange times fixed
    s1 = solve_fixed_point(base, times)
    s2 = solve_fixed_point(shifted, times)
    assert s1.attempt_prob == pytest.approx(s2.attempt_prob)
    assert s1.collision_prob == pytest.approx(s2.collision_prob)
    assert s1.cycle_time == pytest.approx(s2.cycle_time)
    # even with re-derived exchange times the contention solution is d-only
    s3 = solve_fixed_point(shifted, exchange_times(shifted, PHY, "rts_cts"))
    assert s1.attempt_prob == pytest.approx(s3.attempt_prob)
    assert s1.collision_prob == pytest.approx(s3.collision_prob)


def test_virtual_collision_grants_extra_differentiation():
    acs = {1: AcParams.create(aifsn=3, cw_min=31, doublings=3),
           3: AcParams.create(aifsn=2, cw_min=15, doublings=3)}
    colocated = table_of(
        [StationSpec(station_id="dual", count=8,
                     traffic={1: saturated(), 3: saturated()})], acs)
    separate = table_of(
        [StationSpec(station_id="low", count=8, traffic={1: saturated()}),
         StationSpec(station_id="high", count=8, traffic={3: saturated()})],
        acs)
    s_co, _ = solve(colocated, "rts_cts")
    s_sep, _ = solve(separate, "rts_cts")
    high_co = next(j for j, tc in enumerate(colocated) if tc.ac == 3)
    high_sep = next(j for j, tc in enumerate(separate) if tc.ac == 3)
    assert s_co.throughput[high_co] >= s_sep.throughput[high_sep]


# -- reduced-table service times ---------------------------------------------------

def test_service_time_single_active_is_bare_exchange():
    table = two_priority_table(4, 4)
    times = exchange_times(table, PHY, "basic")
    srv = service_time(table, times, [0, 1])
    assert srv == {1: times.success[1]}


def test_service_time_equals_cycle_without_drops():
    table = symmetric_table(1)
    times = exchange_times(table, PHY, "basic")
    solution = solve_fixed_point(table, times)
    assert solution.service_time[0] == pytest.approx(solution.cycle_time[0])


def test_service_time_monotone_in_population():
    table = symmetric_table(30, cw_min=7, doublings=1)
    times = exchange_times(table, PHY, "basic")
    previous = 0.0
    for n in (1, 2, 4, 8, 16, 30):
        srv = service_time(table, times, [n])[0]
        assert srv >= previous
        previous = srv


def test_service_time_validates_count_vector():
    table = symmetric_table(5)
    times = exchange_times(table, PHY, "basic")
    with pytest.raises(ValueError):
        service_time(table, times, [0])
    with pytest.raises(ValueError):
        service_time(table, times, [-1])
    with pytest.raises(ValueError):
        service_time(table, times, [1, 1])
