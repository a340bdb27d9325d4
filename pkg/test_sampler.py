"""Tests for the backward sampler of the invariant avalanche law."""
import math
from collections import Counter

import pytest
from scipy import stats

from avalanche.errors import BudgetExceeded, IncompleteTrace, OutOfDomain
from avalanche.models.forward import window_time_average
from avalanche.models.lattice import Color, RngStream
from avalanche.models.sampler import (
    STEP1, STEP1_PRIME, VARIANTS, BoxState, FinishedAllVacant, SamplerTrace, run_backward,
    sample_invariant_window, step0_init, step1_apply_event, step1prime_apply_event, step2_reconstruct,
)
from avalanche.stats import chi_square_two_sample


def _box(left, text):
    return BoxState(left, left + len(text) - 1, [int(c) for c in text])


def _started_box(l, seed):
    """First replica whose initial draw is not all vacant."""
    for replica in range(100):
        rng = RngStream(seed, replica)
        box = step0_init(l, rng)
        if isinstance(box, BoxState):
            return box, rng
    raise AssertionError('no non-empty initial draw')


# -- step 0 ----------------------------------------------------------------------

def test_step0_shape():
    box, _ = _started_box(2, 0)
    values = box.values()
    assert values[0] == 0 and values[-1] == 0
    assert box.left < -2 and box.right > 2
    margin = -2 - box.left
    assert all(v == 2 for v in values[1:margin])
    assert all(v == 2 for v in values[margin + 5:-1])
    assert set(values) <= {0, 2}
    assert box.twos >= 1


def test_step0_all_vacant_window_finishes_immediately():
    for replica in range(100):
        if isinstance(step0_init(0, RngStream(1, replica)), FinishedAllVacant):
            result = sample_invariant_window(0, STEP1_PRIME, RngStream(1, replica))
            assert result.all_vacant
            assert result.T == 0
            assert result.config.to_text() == '[0,0]:0'
            return
    raise AssertionError('no all-vacant draw in 100 replicas')


def test_step0_overshoot_is_geometric():
    overshoots = []
    for replica in range(6000):
        box = step0_init(0, RngStream(2, replica))
        if isinstance(box, BoxState):
            overshoots.append(box.right)
    n = len(overshoots)
    observed = [sum(1 for k in overshoots if k == j) for j in range(1, 6)]
    observed.append(n - sum(observed))
    expected = [n * 2.0 ** -j for j in range(1, 6)]
    expected.append(n - sum(expected))
    assert stats.chisquare(observed, expected).pvalue > 1e-3


def test_step0_rejects_negative_radius():
    with pytest.raises(ValueError):
        step0_init(-1, RngStream(0))


# -- step 1 -----------------------------------------------------------------------

def test_step1_black_on_occupied_clears_site():
    box = step1_apply_event(_box(-2, '02220'), 0, Color.BLACK, RngStream(0))
    assert box.to_text() == '[-2,2]:02020'


def test_step1_black_on_vacant_fills_component_with_two():
    box = step1_apply_event(_box(-3, '0100220'), 0, Color.BLACK, RngStream(0))
    assert box.to_text() == '[-3,3]:0102220'


def test_step1_black_on_vacant_fills_with_one_when_a_side_is_clear():
    box = step1_apply_event(_box(-3, '0100220'), -1, Color.BLACK, RngStream(0))
    assert box.to_text() == '[-3,3]:0110220'


def test_step1_grey_demotes_isolated_two():
    box = step1_apply_event(_box(-2, '02020'), -1, Color.GREY, RngStream(0))
    assert box.to_text() == '[-2,2]:01020'


def test_step1_extends_when_edge_holds_two():
    box = step1_apply_event(_box(0, '022'), 0, Color.BLACK, RngStream(3))
    values = box.values()
    assert box.left < 0 and box.right > 2
    assert values[0] == 0 and values[-1] == 0
    assert all(v == 2 for v in values[1:-1])


def test_step1_outside_domain():
    with pytest.raises(OutOfDomain):
        step1_apply_event(_box(-1, '020'), 5, Color.BLACK, RngStream(0))


# -- step 1' ---------------------------------------------------------------------

def test_step1prime_black_on_vacant_spreads_two_to_the_farthest_two():
    box = step1prime_apply_event(_box(-3, '0100120'), 0, Color.BLACK, RngStream(0))
    assert box.to_text() == '[-3,3]:0102220'


def test_step1prime_black_on_vacant_without_two_gives_one():
    box = step1prime_apply_event(_box(-2, '01010'), 0, Color.BLACK, RngStream(0))
    assert box.to_text() == '[-2,2]:01110'


@pytest.mark.parametrize('text, site, expected', [
    ('02210', 0, '02110'),
    ('02210', -1, '01210'),
    ('02220', 0, '02220'),
    ('02220', 1, '02210'),
])
def test_step1prime_grey(text, site, expected):
    box = step1prime_apply_event(_box(-2, text), site, Color.GREY, RngStream(0))
    assert box.to_text() == f'[-2,2]:{expected}'


def test_step1prime_extends_with_ones_when_edge_run_holds_two():
    box = step1prime_apply_event(_box(0, '1120'), 3, Color.GREY, RngStream(4))
    values = box.values()
    assert box.left < 0 and box.right == 3
    assert values[0] == 0
    assert all(v == 1 for v in values[1:-4])
    assert values[-4:] == [1, 1, 2, 0]


# -- backward runs and reconstruction ---------------------------------------------------

@pytest.mark.parametrize('variant', VARIANTS)
def test_run_backward_ends_without_twos_and_replays(variant):
    box, rng = _started_box(2, 5)
    initial = box.to_text()
    trace = run_backward(box, rng, variant)
    assert trace.final.twos == 0
    assert trace.T == len(trace.deltas) >= 1
    *_, first = trace.replay_states()
    assert first.to_text() == initial


def test_run_backward_budget():
    box = _box(-5, '02222222220')
    with pytest.raises(BudgetExceeded):
        run_backward(box, RngStream(6), STEP1, max_events=1)


def test_reconstruct_hand_built_trace():
    events = [(0, Color.BLACK), (0, Color.BLACK), (-1, Color.BLACK), (1, Color.BLACK), (0, Color.GREY)]
    states = [_box(-2, text) for text in ('01110', '01010', '01110', '00110', '00100', '00100')]
    trace = SamplerTrace.from_states(events, states)
    eta = step2_reconstruct(trace, check=True)
    assert [eta[k] for k in (-1, 0, 1)] == [0, 1, 0]


def test_reconstruct_needs_finished_trace():
    trace = SamplerTrace.from_states([(0, Color.GREY)], [_box(-1, '020'), _box(-1, '020')])
    with pytest.raises(IncompleteTrace):
        step2_reconstruct(trace)


@pytest.mark.parametrize('variant', VARIANTS)
def test_reconstruction_stays_below_bernoulli(variant):
    for replica in range(40):
        rng = RngStream(7, replica)
        box = step0_init(2, rng)
        if isinstance(box, FinishedAllVacant):
            continue
        trace = run_backward(box, rng, variant)
        eta = step2_reconstruct(trace, check=True)
        for k in range(-2, 3):
            assert eta[k] <= min(trace.initial[k], 1)


def test_sampler_is_deterministic():
    first = sample_invariant_window(2, STEP1_PRIME, RngStream(8, 3))
    second = sample_invariant_window(2, STEP1_PRIME, RngStream(8, 3))
    assert first.to_row(0) == second.to_row(0)
    assert first.config.window == (-2, 2)


@pytest.mark.parametrize('variant', VARIANTS)
def test_site_density_matches_the_steady_state(variant):
    # 1 - sum_k c_k with sum_k c_k = 0.692419
    n = 5000
    occupied = sum(sample_invariant_window(0, variant, RngStream(9, r)).config[0] for r in range(n))
    density = 1 - 0.692419
    assert abs(occupied / n - density) < 3 * math.sqrt(density * (1 - density) / n)


@pytest.fixture(scope='module')
def long_run_window_law():
    # radius 60, burn-in 50 time units, one record every 3 time units
    return window_time_average(60, (-1, 1), events=121 * 3 * 1500, burn_in=121 * 50,
                               rng=RngStream(11), thin=121 * 3)


@pytest.mark.parametrize('variant', VARIANTS)
def test_window_law_matches_a_long_forward_run(variant, long_run_window_law):
    sampled = Counter(''.join(map(str, sample_invariant_window(1, variant, RngStream(12, r)).config.values()))
                      for r in range(3000))
    assert sum(long_run_window_law.values()) == 1500
    _, pvalue = chi_square_two_sample(sampled, long_run_window_law)
    assert pvalue > 1e-3


def test_both_rule_sets_sample_the_same_law():
    n = 3000
    laws = {}
    for variant in VARIANTS:
        laws[variant] = Counter(sample_invariant_window(1, variant, RngStream(10, r)).config.to_text()
                                for r in range(n))
    _, pvalue = chi_square_two_sample(laws[STEP1], laws[STEP1_PRIME])
    assert pvalue > 1e-3


def test_unknown_variant():
    with pytest.raises(ValueError):
        sample_invariant_window(1, 'step3', RngStream(0))
