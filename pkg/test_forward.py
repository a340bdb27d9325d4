"""Tests for the forward avalanche, Bernoulli and coupled dynamics."""
import itertools
from collections import Counter

import pytest
from scipy import stats

from avalanche.errors import DominationViolated, OutOfWindow
from avalanche.models.forward import (
    EventLog, Horizon, apply_avalanche_mark, avalanche_apply_mark, coupled_step, evolve_bernoulli,
    generate_event_log, initial_config, run_avalanche, run_coupled, run_coupled_bernoulli_pair,
    trajectory_rows, transition_counts, window_time_average, CoupledState,
)
from avalanche.models.lattice import (
    Color, Config, Mark, RngStream, connected_component, enumerate_configs, sample_bernoulli_config,
)
from avalanche.stats import chi_square_two_sample


def _log(*marks):
    return EventLog([Mark(site, color, n) for n, (site, color) in enumerate(marks, start=1)],
                    Horizon.events(len(marks)))


def test_black_mark_fills_vacant_site():
    eta = Config.from_text('[0,4]:00000')
    assert apply_avalanche_mark(eta, 2) == [2]
    assert eta.to_text() == '[0,4]:00100'


def test_black_mark_clears_occupied_run():
    eta = Config.from_text('[0,6]:0111010')
    out = avalanche_apply_mark(eta, 2)
    assert out.to_text() == '[0,6]:0000010'
    assert eta.to_text() == '[0,6]:0111010'


def test_avalanche_stops_at_window_edge():
    eta = Config.from_text('[0,3]:1111')
    assert sorted(apply_avalanche_mark(eta, 0)) == [0, 1, 2, 3]
    with pytest.raises(OutOfWindow):
        apply_avalanche_mark(eta, 4)


def test_run_avalanche_ignores_grey_marks():
    eta0 = Config.from_text('[0,2]:000')
    log = _log((1, Color.GREY), (1, Color.BLACK), (0, Color.BLACK), (2, Color.GREY), (1, Color.BLACK))
    assert run_avalanche(eta0, log).to_text() == '[0,2]:000'


def test_evolve_bernoulli_flips_on_odd_counts():
    zeta0 = Config.from_text('[0,3]:0101')
    assert evolve_bernoulli(zeta0, {0: 3, 1: 2, 3: 1}).to_text() == '[0,3]:1100'


def test_event_mode_log():
    log = generate_event_log((-3, 3), Horizon.events(500), RngStream(1))
    assert len(log) == 500
    log.validate()
    assert {m.site for m in log} <= set(range(-3, 4))
    assert {m.color for m in log} == {Color.BLACK, Color.GREY}


def test_time_mode_log_has_poisson_counts():
    T = 5.0
    counts = []
    for replica in range(300):
        log = generate_event_log((0, 0), Horizon.time(T), RngStream(2, replica), colors=(Color.BLACK,))
        log.validate()
        assert all(0 <= m.time <= T for m in log)
        counts.append(len(log))
    mean = sum(counts) / len(counts)
    assert abs(mean - T) < 4 * (T / len(counts)) ** 0.5


def test_log_only_renumbers():
    log = _log((0, Color.GREY), (1, Color.BLACK), (2, Color.GREY))
    grey = log.only(Color.GREY)
    assert [m.site for m in grey] == [0, 2]
    grey.validate()


def test_coupled_single_steps():
    state = CoupledState(Config.from_text('[0,3]:0110'), Config.from_text('[0,3]:0010'))
    # grey on an occupied Bernoulli site fills the avalanche site
    state = coupled_step(state, Mark(1, Color.GREY, 1))
    assert state.eta.to_text() == '[0,3]:0110'
    # black on an occupied site clears both, the avalanche along its run
    state = coupled_step(state, Mark(2, Color.BLACK, 2))
    assert state.zeta.to_text() == '[0,3]:0100'
    assert state.eta.to_text() == '[0,3]:0000'
    # black on a vacant site fills both
    state = coupled_step(state, Mark(3, Color.BLACK, 3))
    assert state.zeta.to_text() == '[0,3]:0101'
    assert state.eta.to_text() == '[0,3]:0001'


def test_coupled_rejects_undominated_start():
    with pytest.raises(DominationViolated):
        run_coupled(Config.from_text('[0,2]:010'), Config.from_text('[0,2]:011'), _log())


@pytest.mark.parametrize('seed', range(5))
def test_coupled_run_keeps_domination_and_bernoulli_marginal(seed):
    rng = RngStream(seed)
    zeta0 = sample_bernoulli_config((-8, 8), rng.spawn('zeta')).restrict(-8, 8)
    eta0 = Config(-8, 8, [z * b for z, b in zip(zeta0.values(), initial_config('alternating', (-8, 8)).values())])
    log = generate_event_log((-8, 8), Horizon.events(2000), rng.spawn('marks'))
    trajectory = run_coupled(zeta0, eta0, log)
    for state in trajectory.states():
        assert all(e <= z for e, z in zip(state.eta.values(), state.zeta.values()))
    assert trajectory.final.zeta == evolve_bernoulli(zeta0, log.counts(Color.BLACK))
    *_, last = trajectory.states()
    assert last.eta == trajectory.final.eta


def test_trajectory_rows():
    zeta0 = Config.from_text('[0,2]:010')
    trajectory = run_coupled(zeta0, Config(0, 2), _log((1, Color.GREY), (1, Color.BLACK)))
    rows = trajectory_rows(trajectory)
    assert rows[0] == {'ordinal': 1, 'site': 1, 'color': 'grey', 'changed_sites': [[1, 1, 1]]}
    assert rows[1]['changed_sites'] == [[1, 0, 0]]


def test_pair_coalescence_is_absorbing_and_first_marginal_is_bernoulli():
    window = (0, 199)
    rng = RngStream(9)
    first = Config(0, 199)
    second = Config(0, 199, [1] * 200)
    log_n = generate_event_log(window, Horizon.time(4.0), rng.spawn('N'), colors=(Color.BLACK,))
    log_v = generate_event_log(window, Horizon.time(4.0), rng.spawn('V'), colors=(Color.GREY,))
    trajectory = run_coupled_bernoulli_pair(first, second, log_n, log_v)
    merged = {}
    for step in trajectory.steps:
        if step.site in merged:
            assert step.first == step.second
        elif step.first == step.second:
            merged[step.site] = step.mark.time
    assert merged == {k: t for k, t in trajectory.coalescence.items() if t is not None}
    assert trajectory.final[0] == evolve_bernoulli(first, log_n.counts(Color.BLACK))


def test_pair_coalescence_time_is_exponential_rate_two():
    window = (0, 999)
    rng = RngStream(10)
    log_n = generate_event_log(window, Horizon.time(12.0), rng.spawn('N'), colors=(Color.BLACK,))
    log_v = generate_event_log(window, Horizon.time(12.0), rng.spawn('V'), colors=(Color.GREY,))
    trajectory = run_coupled_bernoulli_pair(Config(0, 999), Config(0, 999, [1] * 1000), log_n, log_v)
    times = list(trajectory.coalescence.values())
    assert None not in times
    assert stats.kstest(times, 'expon', args=(0, 0.5)).pvalue > 1e-3


def test_pair_already_equal_sites_coalesce_at_zero():
    zeta = Config.from_text('[0,2]:010')
    trajectory = run_coupled_bernoulli_pair(zeta, zeta.copy(), _log(), _log())
    assert trajectory.coalescence == {0: 0.0, 1: 0.0, 2: 0.0}


@pytest.mark.parametrize('phi, text', [
    ('all-vacant', '[-2,2]:00000'),
    ('alternating', '[-2,2]:10101'),
])
def test_initial_config(phi, text):
    assert initial_config(phi, (-2, 2)).to_text() == text


def test_initial_config_unknown():
    with pytest.raises(ValueError):
        initial_config('half-full', (0, 3))


def test_window_time_average_counts():
    counts = window_time_average(10, (-1, 1), events=2100, burn_in=210, rng=RngStream(4))
    assert sum(counts.values()) == 2100 // 21
    assert all(len(pattern) == 3 for pattern in counts)


def test_transition_counts():
    counts = transition_counts(['a', 'a', 'b', 'a', 'b'])
    assert counts == {('a', 'b'): 2, ('b', 'a'): 1}


def _dominated_pairs(width):
    """Every (zeta, eta) on [0, width - 1] with eta <= zeta."""
    for zeta in enumerate_configs(0, width - 1):
        occupied = [k for k in zeta.sites() if zeta[k]]
        for bits in itertools.product((0, 1), repeat=len(occupied)):
            eta = Config(0, width - 1)
            for k, b in zip(occupied, bits):
                eta[k] = b
            yield zeta, eta


def _dominated(state):
    return all(e <= z for e, z in zip(state.eta.values(), state.zeta.values()))


@pytest.mark.parametrize('width', range(1, 6))
def test_every_coupled_step_keeps_domination_and_clears_one_component(width):
    for zeta, eta in _dominated_pairs(width):
        for site in range(width):
            for color in (Color.BLACK, Color.GREY):
                after = coupled_step(CoupledState(zeta, eta), Mark(site, color, 1))
                assert _dominated(after)
                expected_zeta = zeta.copy()
                if color is Color.BLACK:
                    expected_zeta.flip(site)
                assert after.zeta == expected_zeta
                changed = [k for k in eta.sites() if after.eta[k] != eta[k]]
                if color is Color.BLACK and eta[site] == 1:
                    left, right = connected_component(eta, site)
                    assert changed == list(range(left, right + 1))
                    assert not any(after.eta[k] for k in changed)
                else:
                    assert changed in ([], [site])


@pytest.mark.parametrize('width', range(1, 6))
def test_logs_up_to_six_marks_keep_domination_and_bernoulli_parity(width):
    # (zeta, eta) with zeta0 fixed determines the black parities, so two logs
    # reaching the same pair have the same future; expand each pair once.
    marks = [Mark(site, color, 1) for site in range(width) for color in (Color.BLACK, Color.GREY)]
    for zeta0, eta0 in _dominated_pairs(width):
        seen = {(zeta0.to_text(), eta0.to_text())}
        frontier = [CoupledState(zeta0, eta0)]
        for _ in range(6):
            grown = []
            for state in frontier:
                for mark in marks:
                    after = coupled_step(state, mark)
                    assert _dominated(after)
                    parity = {k: 1 for k in zeta0.sites() if after.zeta[k] != zeta0[k]}
                    if mark.color is Color.GREY:
                        assert after.zeta == state.zeta
                    assert after.zeta == evolve_bernoulli(zeta0, parity)
                    key = (after.zeta.to_text(), after.eta.to_text())
                    if key not in seen:
                        seen.add(key)
                        grown.append(after)
            frontier = grown


def test_every_log_of_six_marks_on_two_sites():
    marks = [(site, color) for site in range(2) for color in (Color.BLACK, Color.GREY)]
    for zeta0, eta0 in _dominated_pairs(2):
        for length in range(7):
            for sequence in itertools.product(marks, repeat=length):
                log = _log(*sequence)
                trajectory = run_coupled(zeta0, eta0, log)
                assert all(_dominated(state) for state in trajectory.states())
                assert trajectory.final.zeta == evolve_bernoulli(zeta0, log.counts(Color.BLACK))


def _stationary_window_sequence(rng, window, T):
    zeta = sample_bernoulli_config(window, rng.spawn('zeta')).restrict(*window)
    log = generate_event_log(window, Horizon.time(T), rng.spawn('marks'), colors=(Color.BLACK,))
    sequence = [zeta.to_text()]
    for mark in log:
        zeta.flip(mark.site)
        sequence.append(zeta.to_text())
    return sequence


def test_reversed_stationary_bernoulli_has_forward_transition_counts():
    forward, reversed_counts = Counter(), Counter()
    for r in range(6000):
        forward.update(transition_counts(_stationary_window_sequence(RngStream(21, r), (0, 1), 0.5)))
        backward = _stationary_window_sequence(RngStream(22, r), (0, 1), 0.5)
        reversed_counts.update(transition_counts(reversed(backward)))
    assert len(forward) == 8
    assert sum(forward.values()) == pytest.approx(6000, rel=0.1)
    _, pvalue = chi_square_two_sample(forward, reversed_counts)
    assert pvalue > 1e-3
