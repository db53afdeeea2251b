import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cobandit.game import (
    Allocation,
    GainScale,
    InconsistentAllocationError,
    NetworkKind,
    NetworkSpec,
    distance_to_ne,
    hamming_moves,
    is_nash,
    nash_allocation,
    nash_allocation_areas,
    perceived_loss,
    perceived_loss_array,
    raw_gain,
    scaled_gain,
)

BASELINE = [18.0, 8.0, 13.0, 16.0, 10.0]


def test_raw_gain_is_equal_share():
    assert raw_gain(NetworkSpec(1, 18.0), 6) == 3.0
    with pytest.raises(ValueError):
        raw_gain(NetworkSpec(1, 18.0), 0)


def test_network_spec_validation():
    with pytest.raises(ValueError):
        NetworkSpec(1, 0.0)
    assert NetworkSpec(2, 5.0, "cellular").kind is NetworkKind.CELLULAR
    with pytest.raises(ValueError):
        GainScale(0.0)


def test_scaled_gain_chosen_and_hypothetical():
    nets = [NetworkSpec(1, 18.0), NetworkSpec(2, 8.0)]
    scale = GainScale.for_networks(nets)
    alloc = Allocation((6, 2))
    assert scaled_gain(nets[0], alloc, 0, True, scale) == pytest.approx(3.0 / 18.0)
    assert scaled_gain(nets[1], alloc, 1, False, scale) == pytest.approx(8.0 / 3.0 / 18.0)
    # sole client on the largest network scores exactly 1
    assert scaled_gain(nets[0], Allocation((1, 0)), 0, True, scale) == 1.0
    with pytest.raises(InconsistentAllocationError):
        scaled_gain(nets[1], Allocation((1, 0)), 1, True, scale)


@given(st.floats(0.5, 50.0), st.integers(1, 60))
def test_scaled_gain_strictly_decreasing_in_clients(cap, n):
    net = NetworkSpec(1, cap)
    scale = GainScale(50.0)
    here = scaled_gain(net, Allocation((n,)), 0, True, scale)
    more = scaled_gain(net, Allocation((n + 1,)), 0, True, scale)
    assert more < here
    assert 0.0 < here <= 1.0


def test_perceived_loss_examples():
    assert perceived_loss([0.5, None, 0.2]) == pytest.approx([0.0, 0.0, 0.3])
    assert perceived_loss([None, None]) == [0.0, 0.0]


@given(st.lists(st.one_of(st.none(), st.floats(0.0, 1.0)), min_size=1, max_size=8))
def test_perceived_loss_range_and_zero(gains):
    out = perceived_loss(gains)
    assert all(0.0 <= x <= 1.0 for x in out)
    known = [i for i, g in enumerate(gains) if g is not None]
    if known:
        assert any(out[i] == 0.0 for i in known)
    arr = perceived_loss_array(np.array([math.nan if g is None else g for g in gains]))
    assert arr.tolist() == pytest.approx(out)


@pytest.mark.parametrize(
    "caps,n,expected",
    [
        (BASELINE, 20, (6, 2, 4, 5, 3)),
        ([13.0] * 5, 20, (4, 4, 4, 4, 4)),
        ([5.0], 3, (3,)),
    ],
)
def test_nash_allocation_examples(caps, n, expected):
    assert nash_allocation(caps, n).counts == expected


def test_baseline_equilibrium_is_the_unique_enumerated_one():
    # exhaustive over all 10626 allocations of 20 devices to 5 networks
    assert oracles.brute_force_equilibria(BASELINE, 20) == [(6, 2, 4, 5, 3)]


def test_nash_brute_force_equivalence_small_grids():

    for k in (1, 2, 3):
        for caps in itertools.product(range(1, 6), repeat=k):
            caps = [float(c) for c in caps]
            for n in range(1, 7):
                brute = set(oracles.brute_force_equilibria(caps, n))
                assert nash_allocation(caps, n).counts in brute
                for c in oracles.compositions(n, k):
                    assert is_nash(caps, c) == (c in brute)


@given(st.lists(st.floats(0.5, 30.0), min_size=1, max_size=6), st.integers(1, 40))
def test_greedy_optimality_witness(caps, n):
    counts = nash_allocation(caps, n).counts
    assert sum(counts) == n
    worst_occupied = min(c / m for c, m in zip(caps, counts) if m > 0)
    best_move = max(c / (m + 1) for c, m in zip(caps, counts))
    assert worst_occupied >= best_move - 1e-12


def test_nash_allocation_errors():
    with pytest.raises(ValueError):
        nash_allocation([], 3)
    with pytest.raises(ValueError):
        nash_allocation([1.0, 0.0], 3)
    with pytest.raises(ValueError):
        nash_allocation([1.0], 0)


def _area_stable(caps, areas, splits):
    counts = [0] * len(caps)
    for nets, split in zip(areas, splits):
        for i, c in zip(nets, split):
            counts[i] += c
    for nets, split in zip(areas, splits):
        for i, c in zip(nets, split):
            if c == 0:
                continue
            for m in nets:
                if m != i and caps[i] / counts[i] < caps[m] / (counts[m] + 1):
                    return None
    return tuple(counts)


@pytest.mark.parametrize(
    "caps,areas,pops",
    [
        ([16.0, 14.0, 22.0, 7.0, 4.0], [[0, 1], [1, 2, 4], [2, 3, 4]], [3, 4, 3]),
        ([5.0, 9.0, 3.0], [[0, 1], [1, 2]], [4, 5]),
        ([2.0, 2.0, 8.0], [[0], [0, 1, 2]], [3, 2]),
    ],
)
def test_multi_area_equilibrium_matches_enumeration(caps, areas, pops):

    per_area = [list(oracles.compositions(p, len(nets))) for p, nets in zip(pops, areas)]
    stable = {_area_stable(caps, areas, splits) for splits in itertools.product(*per_area)} - {None}
    assert nash_allocation_areas(caps, areas, pops).counts in stable


def test_multi_area_rejects_area_without_networks():
    with pytest.raises(ValueError):
        nash_allocation_areas([1.0], [[]], [3])


def test_single_area_version_matches_greedy():
    for n in range(1, 25):
        assert nash_allocation_areas(BASELINE, [list(range(5))], [n]).counts == nash_allocation(BASELINE, n).counts


@pytest.mark.parametrize(
    "current,expected",
    [((7, 2, 4, 4, 3), 100.0 / 6.0), ((8, 2, 4, 5, 1), 100.0 * 2.0 / 6.0), ((6, 2, 4, 5, 3), 0.0)],
)
def test_distance_examples(current, expected):
    assert distance_to_ne(Allocation(current), Allocation((6, 2, 4, 5, 3))) == pytest.approx(expected)


def test_distance_errors_and_empty_network_case():
    with pytest.raises(ValueError):
        distance_to_ne(Allocation((1, 2)), Allocation((1, 1)))
    with pytest.raises(ValueError):
        distance_to_ne(Allocation((1, 2)), Allocation((1, 1, 1)))
    # a device stuck on a network nobody uses at equilibrium
    caps = [10.0, 1.0]
    ne = nash_allocation(caps, 2)
    assert ne.counts == (2, 0)
    with pytest.raises(ValueError):
        distance_to_ne(Allocation((1, 1)), ne)
    # alone on the 1 Mbps network it would get 10/2 = 5 Mbps by moving
    assert distance_to_ne(Allocation((1, 1)), ne, caps) == pytest.approx(400.0)


@settings(max_examples=50)
@given(st.lists(st.integers(0, 10), min_size=1, max_size=6))
def test_distance_to_self_is_zero(counts):
    if sum(counts) == 0:
        return
    a = Allocation(tuple(counts))
    assert distance_to_ne(a, a, [1.0] * len(counts)) == 0.0


def test_distance_zero_iff_at_equilibrium_baseline():
    ne = nash_allocation(BASELINE, 20)
    for c in oracles.compositions(20, 5):
        d = distance_to_ne(Allocation(c), ne, BASELINE)
        assert (d == 0.0) == (c == ne.counts)


def test_hamming_moves():
    assert hamming_moves(Allocation((7, 2, 4, 4, 3)), Allocation((6, 2, 4, 5, 3))) == 1
    assert hamming_moves(Allocation((3, 3)), Allocation((3, 3))) == 0
