"""Right and left contour processes bracketing a site.

Positions are stored as integers: the right contour sits at r - 1/2 and
keeps the vacant site r on its right, the left contour sits at l + 1/2 and
keeps the vacant site l on its left. The left contour is the right contour
of the reflected lattice (site x of the reflected frame is site -x).

The Bernoulli environment is simulated in continuous time and lazily. Only
the clocks that can move a contour are drawn explicitly; every other site
evolves on its own, so when it is read again after being unobserved for a
time s it flips with probability (1 - e^{-2s}) / 2.
"""
import math
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from avalanche.errors import AlreadyStopped, BudgetExceeded, NoVacantSite
from avalanche.models.lattice import Color, Config, EnvPolicy, RngStream

EVENT_BUDGET = int(os.getenv('AVALANCHE_EVENT_BUDGET', 10_000_000))


class ContourEvent(Enum):
    """Driving clocks of a right contour at r: N at r, N at r-1, V at r-1.

    For the left contour the same names apply in the reflected frame.
    """
    BLACK_RIGHT = 'black_right'
    BLACK_LEFT = 'black_left'
    GREY_LEFT = 'grey_left'


RIGHT = 1
LEFT = -1


@dataclass
class ContourState:
    r: int
    l: Optional[int] = None
    r_max: Optional[int] = None
    l_min: Optional[int] = None
    met: bool = False
    events: int = 0
    fictitious: int = 0
    time: float = 0.0

    def __post_init__(self):
        if self.r_max is None:
            self.r_max = self.r
        if self.l is not None and self.l_min is None:
            self.l_min = self.l
        self._check_met()

    def _check_met(self):
        if self.l is not None and self.r <= self.l:
            self.met = True

    def position(self, side: int) -> int:
        return self.r if side == RIGHT else self.l

    def move(self, side: int, site: int):
        if side == RIGHT:
            self.r = site
            self.r_max = max(self.r_max, site)
        else:
            self.l = site
            self.l_min = min(self.l_min, site)
        self._check_met()


class TimedEnvironment:
    """Continuous-time Bernoulli configuration, materialized on demand."""

    def __init__(self, initial: Callable[[int], int], rng: RngStream):
        self._initial = initial
        self._rng = rng
        self._values: Dict[int, int] = {}
        self._stamps: Dict[int, float] = {}
        self.now = 0.0

    def read(self, site: int) -> int:
        value = self._values.get(site)
        if value is None:
            value = int(self._initial(site))
            self._values[site] = value
            self._stamps[site] = 0.0
        last = self._stamps[site]
        if last < self.now:
            if self._rng.random() < 0.5 * (1.0 - math.exp(-2.0 * (self.now - last))):
                value = 1 - value
                self._values[site] = value
            self._stamps[site] = self.now
        return value

    def flip(self, site: int):
        self._values[site] = 1 - self.read(site)

    def advance(self, dt: float, frozen: Sequence[int]):
        """Move time forward by ``dt`` while the sites in ``frozen`` keep their state.

        Frozen sites are exactly those whose black clock is being drawn
        explicitly; no flip happened to them during the interval.
        """
        for site in frozen:
            self.read(site)
        self.now += dt
        for site in frozen:
            self._stamps[site] = self.now


class XiConfig:
    """Occupied half-line up to 0, vacant site 1, fair coins from 2 on."""

    def __init__(self, rng: RngStream):
        self._rng = rng

    def __getitem__(self, site: int) -> int:
        if site <= 0:
            return 1
        if site == 1:
            return 0
        return self._rng.site_bit(site)

    def to_config(self, left: int, right: int) -> Config:
        return Config(left, right, [self[k] for k in range(left, right + 1)])


def _first_vacant_from(read: Callable[[int], int], start: int, limit: Optional[int] = None) -> int:
    site = start
    while read(site) == 1:
        site += 1
        if limit is not None and site > limit:
            raise NoVacantSite(f'no vacant site in [{start},{limit}]')
    return site


def init_right_contour(zeta0: Config, i: int) -> int:
    """First vacant site at or to the right of ``i``."""
    limit = zeta0.right if zeta0.policy is EnvPolicy.FIXED_VACANT_OUTSIDE else None
    if limit is not None and i > limit:
        return i
    return _first_vacant_from(zeta0.__getitem__, i, limit)


def init_left_contour(zeta0: Config, i: int) -> int:
    """Last vacant site at or to the left of ``i``."""
    limit = -zeta0.left if zeta0.policy is EnvPolicy.FIXED_VACANT_OUTSIDE else None
    if limit is not None and -i > limit:
        return i
    return -_first_vacant_from(lambda x: zeta0[-x], -i, limit)


def _move(x: int, read: Callable[[int], int], event: ContourEvent) -> Tuple[int, bool]:
    """New position of a right contour at ``x`` after ``event`` (flip already applied).

    Returns (position, fictitious).
    """
    if event is ContourEvent.BLACK_RIGHT:
        y = x + 1
        while read(y) == 1:
            y += 1
        return y, False
    if event is ContourEvent.BLACK_LEFT:
        y = x - 1
        while read(y) == 0:
            y -= 1
        return y + 1, False
    if read(x - 2) == 1:
        return x, True
    y = x - 3
    while read(y) == 0:
        y -= 1
    return y + 1, False


def _streams(side: int, position: int) -> List[Tuple[Tuple[int, Color], ContourEvent]]:
    """(actual site, colour) of each clock driving a contour, with its role."""
    x = side * position
    return [
        ((side * x, Color.BLACK), ContourEvent.BLACK_RIGHT),
        ((side * (x - 1), Color.BLACK), ContourEvent.BLACK_LEFT),
        ((side * (x - 1), Color.GREY), ContourEvent.GREY_LEFT),
    ]


def _apply(state: ContourState, env: TimedEnvironment, side: int, event: ContourEvent):
    x = side * state.position(side)
    new_x, fictitious = _move(x, lambda y: env.read(side * y), event)
    if fictitious:
        state.fictitious += 1
    else:
        state.move(side, side * new_x)


def contour_step(state: ContourState, env: TimedEnvironment, event: ContourEvent,
                 side: int = RIGHT) -> ContourState:
    """Apply one driving event to one contour (mutates and returns ``state``).

    Black events flip the Bernoulli site first, grey events leave it alone.
    """
    if state.met:
        raise AlreadyStopped('contours have already met')
    x = side * state.position(side)
    if event is ContourEvent.BLACK_RIGHT:
        env.flip(side * x)
    elif event is ContourEvent.BLACK_LEFT:
        env.flip(side * (x - 1))
    _apply(state, env, side, event)
    state.events += 1
    return state


@dataclass
class DrivenEvent:
    time: float
    site: int
    color: Color
    roles: List[Tuple[int, ContourEvent]] = field(default_factory=list)


def _drive(env: TimedEnvironment, contours: List[Tuple[ContourState, int]], rng: RngStream,
           stop: Callable[[DrivenEvent], bool], max_events: int,
           record: Optional[List[DrivenEvent]] = None) -> int:
    """Superpose the driving clocks of several contours until ``stop`` says so.

    Each event picks one of the distinct active clocks uniformly after an
    exponential holding time at rate equal to their number. A black mark
    flips the environment once, then every contour driven by that clock
    moves.
    """
    events = 0
    while True:
        table: Dict[Tuple[int, Color], List[Tuple[int, ContourEvent]]] = {}
        for index, (state, side) in enumerate(contours):
            for key, role in _streams(side, state.position(side)):
                table.setdefault(key, []).append((index, role))
        keys = sorted(table)
        frozen = [site for site, color in keys if color is Color.BLACK]
        dt = rng.exponential(len(keys))
        site, color = keys[rng.randint(0, len(keys) - 1)]
        env.advance(dt, frozen)
        if color is Color.BLACK:
            env.flip(site)
        event = DrivenEvent(env.now, site, color)
        for index, role in table[(site, color)]:
            state, side = contours[index]
            _apply(state, env, side, role)
            event.roles.append((index, role))
        events += 1
        for state, _ in contours:
            state.time = env.now
            state.events = events
        if record is not None:
            record.append(event)
        if stop(event):
            return events
        if events >= max_events:
            raise BudgetExceeded(events)


def run_until_meet(zeta0: Config, i: int, rng: RngStream,
                   max_events: Optional[int] = None) -> ContourState:
    """Run both contours around ``i`` until they cross; returns the final state.

    ``state.events`` counts every driving event consumed (the meeting
    index), ``state.fictitious`` the grey events that left a contour in
    place, ``state.time`` the reconstructed meeting time.
    """
    budget = max_events or EVENT_BUDGET
    r = init_right_contour(zeta0, i)
    l = init_left_contour(zeta0, i)
    state = ContourState(r=r, l=l)
    if state.met:
        return state
    env = TimedEnvironment(zeta0.__getitem__, rng.spawn('environment'))
    state.events = _drive(env, [(state, RIGHT), (state, LEFT)], rng,
                          lambda _event: state.met, budget)
    return state


def run_right_contour(initial: Callable[[int], int], i: int, rng: RngStream,
                      max_events: int, stop: Optional[Callable[[DrivenEvent], bool]] = None
                      ) -> Tuple[ContourState, List[DrivenEvent]]:
    """Single right contour started at the first vacant site >= ``i``."""
    r = _first_vacant_from(initial, i)
    state = ContourState(r=r)
    env = TimedEnvironment(initial, rng.spawn('environment'))
    record: List[DrivenEvent] = []
    try:
        _drive(env, [(state, RIGHT)], rng, stop or (lambda e: False), max_events, record)
    except BudgetExceeded:
        if stop is not None:
            raise
    return state, record


def run_right_contours(zeta0: Config, sites: Sequence[int], rng: RngStream,
                       n_events: int) -> List[Tuple[int, ...]]:
    """Right contours around several sites on one shared environment.

    Returns the positions after initialization and after every event.
    """
    env = TimedEnvironment(zeta0.__getitem__, rng.spawn('environment'))
    contours = [(ContourState(r=init_right_contour(zeta0, i)), RIGHT) for i in sites]
    path = [tuple(state.r for state, _ in contours)]

    def observe(_event):
        path.append(tuple(state.r for state, _ in contours))
        return len(path) > n_events

    if n_events > 0:
        _drive(env, contours, rng, observe, n_events + 1)
    return path


@dataclass
class Y1Outcome:
    value: int
    first_event: ContourEvent
    events: int


def sample_Y1_outcome(rng: RngStream, max_events: Optional[int] = None) -> Y1Outcome:
    """Right contour on Xi from r = 1 until its first black-right event."""
    xi = XiConfig(rng.spawn('xi'))
    roles = []

    def jumped_right(event):
        roles.append(event.roles[0][1])
        return event.roles[0][1] is ContourEvent.BLACK_RIGHT

    state, record = run_right_contour(xi.__getitem__, 1, rng, max_events or EVENT_BUDGET, jumped_right)
    return Y1Outcome(value=state.r - 1, first_event=roles[0], events=len(record))


def sample_Y1(rng: RngStream) -> int:
    return sample_Y1_outcome(rng).value


def y1_tail_bound(k: int) -> float:
    return 2.0 ** (1 - k)


def _p(s):
    return 0.5 * (1.0 - np.exp(-2.0 * s))


def analytic_increment_constants(check: bool = False) -> dict:
    """Closed forms of the four integrals bounding E[Y1] from above.

    With ``check=True`` each constant is also recomputed by quadrature of
    its defining integral and returned under ``<name>_quad``.
    """
    constants = {
        'I1': math.pi / 2 - 1,
        'I2': 1 / 3,
        'I3': 1 / 3,
        'I4': 1 / 5,
    }
    constants['I'] = constants['I1'] + constants['I2'] + constants['I3'] / 2 + constants['I4'] / 2
    constants['mean_bound'] = 1 - constants['I']
    if check:
        opts = {'epsabs': 1e-12, 'epsrel': 1e-12}
        constants['I1_quad'] = integrate.quad(lambda u: (1 - u * u) / (1 + u * u), 0, 1, **opts)[0]
        single = integrate.quad(lambda u: u * u * (1 - u * u) / (1 + u * u), 0, 1, **opts)[0]
        double = integrate.dblquad(lambda v, u: v * v * (1 - v * v) / (1 + u * u * v * v),
                                   0, 1, 0, 1, **opts)[0]
        constants['I2_quad'] = single + 2 * double
        constants['I3_quad'] = integrate.quad(lambda s: np.exp(-s) * _p(s), 0, np.inf, **opts)[0]
        constants['I4_quad'] = integrate.quad(lambda s: 3 * np.exp(-3 * s) * _p(s), 0, np.inf, **opts)[0]
    return constants
