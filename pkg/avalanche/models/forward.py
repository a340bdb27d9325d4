"""Event-driven forward simulation of the Bernoulli and avalanche processes.

Every dynamics here is a deterministic fold over an EventLog of coloured
marks. Forward runs live on a finite window with vacant ghost sites outside
(FIXED_VACANT_OUTSIDE), so avalanches stop at the window edge.
"""
import heapq
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from avalanche.errors import CouplingBroken, DominationViolated, EmptyWindow, OutOfWindow
from avalanche.models.lattice import (
    Color, Config, Mark, RngStream, Window, connected_component,
)

BOTH_COLORS = (Color.BLACK, Color.GREY)
PHI_SPECS = ('all-vacant', 'alternating', 'random-half')


@dataclass(frozen=True)
class Horizon:
    """Either a number of events (jump chain) or a continuous time T."""
    kind: str
    value: float

    @classmethod
    def events(cls, n: int) -> 'Horizon':
        return cls('events', int(n))

    @classmethod
    def time(cls, t: float) -> 'Horizon':
        return cls('time', float(t))

    @property
    def continuous(self) -> bool:
        return self.kind == 'time'


@dataclass
class EventLog:
    marks: List[Mark]
    horizon: Horizon

    def __len__(self):
        return len(self.marks)

    def __iter__(self) -> Iterator[Mark]:
        return iter(self.marks)

    def counts(self, color: Color = Color.BLACK) -> Dict[int, int]:
        """Per-site number of marks of one colour."""
        return dict(Counter(m.site for m in self.marks if m.color is color))

    def only(self, color: Color) -> 'EventLog':
        kept = [m for m in self.marks if m.color is color]
        return EventLog([Mark(m.site, m.color, n, m.time) for n, m in enumerate(kept, start=1)],
                        self.horizon)

    def validate(self):
        for expected, mark in enumerate(self.marks, start=1):
            if mark.ordinal != expected:
                raise ValueError(f'mark ordinals must run 1..n, found {mark.ordinal} at position {expected}')
        if self.horizon.continuous:
            times = [m.time for m in self.marks]
            if any(t is None for t in times) or any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError('continuous-time marks need strictly increasing times')


def generate_event_log(window: Window, horizon: Horizon, rng: RngStream,
                       colors: Sequence[Color] = BOTH_COLORS) -> EventLog:
    """Draw the marks hitting ``window`` up to ``horizon``.

    Event-count mode picks a uniform site and a uniform colour per mark.
    Time mode superposes independent rate-1 Poisson clocks, one per
    (site, colour), on [0, T].
    """
    left, right = window
    if right < left:
        raise EmptyWindow(f'window [{left},{right}] is empty')
    colors = tuple(colors)
    marks = []
    if not horizon.continuous:
        for ordinal in range(1, int(horizon.value) + 1):
            site = rng.randint(left, right)
            color = colors[rng.randint(0, len(colors) - 1)] if len(colors) > 1 else colors[0]
            marks.append(Mark(site, color, ordinal))
        return EventLog(marks, horizon)

    T = horizon.value
    arrivals = []
    for site in range(left, right + 1):
        for color in colors:
            for _ in range(rng.poisson(T)):
                arrivals.append((rng.random() * T, site, color))
    arrivals.sort()
    for ordinal, (t, site, color) in enumerate(arrivals, start=1):
        marks.append(Mark(site, color, ordinal, t))
    return EventLog(marks, horizon)


def evolve_bernoulli(zeta0: Config, counts: Dict[int, int]) -> Config:
    """Bernoulli process after ``counts[i]`` marks at each site: odd counts flip."""
    out = zeta0.copy()
    for site, n in counts.items():
        if site not in out:
            raise OutOfWindow(f'count given for site {site} outside [{out.left},{out.right}]')
        if n % 2:
            out.flip(site)
    return out


def apply_avalanche_mark(eta: Config, i: int) -> List[int]:
    """In-place avalanche rule at ``i``; returns the sites that changed."""
    if i not in eta:
        raise OutOfWindow(f'mark at {i} outside [{eta.left},{eta.right}]')
    if eta[i] == 0:
        eta[i] = 1
        return [i]
    left, right = connected_component(eta, i)
    for k in range(left, right + 1):
        eta[k] = 0
    return list(range(left, right + 1))


def avalanche_apply_mark(eta: Config, i: int) -> Config:
    out = eta.copy()
    apply_avalanche_mark(out, i)
    return out


def run_avalanche(eta0: Config, log: EventLog) -> Config:
    """Plain avalanche process: only black marks act."""
    eta = eta0.copy()
    for mark in log.marks:
        if mark.color is Color.BLACK:
            apply_avalanche_mark(eta, mark.site)
    return eta


@dataclass
class CoupledState:
    zeta: Config
    eta: Config

    def copy(self) -> 'CoupledState':
        return CoupledState(self.zeta.copy(), self.eta.copy())


@dataclass
class CoupledStep:
    mark: Mark
    changes: List[Tuple[int, int, int]]  # (site, zeta, eta) after the mark

    def to_row(self) -> dict:
        row = self.mark.to_dict()
        row['changed_sites'] = [list(c) for c in self.changes]
        return row


@dataclass
class CoupledTrajectory:
    initial: CoupledState
    steps: List[CoupledStep] = field(default_factory=list)
    final: Optional[CoupledState] = None

    def __len__(self):
        return len(self.steps) + 1

    def states(self) -> Iterator[CoupledState]:
        """Replay every recorded state, initial one included."""
        state = self.initial.copy()
        yield state.copy()
        for step in self.steps:
            for site, z, e in step.changes:
                state.zeta[site] = z
                state.eta[site] = e
            yield state.copy()


def _coupled_inplace(zeta: Config, eta: Config, mark: Mark) -> List[int]:
    i = mark.site
    if i not in zeta:
        raise OutOfWindow(f'mark at {i} outside [{zeta.left},{zeta.right}]')
    if eta[i] > zeta[i]:
        raise CouplingBroken(f'eta above zeta at site {i} before mark {mark.ordinal}')
    if mark.color is Color.BLACK:
        if zeta[i] == 1:
            zeta[i] = 0
            if eta[i] == 1:
                return apply_avalanche_mark(eta, i)
            return [i]
        zeta[i] = 1
        eta[i] = 1
        return [i]
    if eta[i] == 0 and zeta[i] == 1:
        eta[i] = 1
        return [i]
    return []


def coupled_step(state: CoupledState, mark: Mark) -> CoupledState:
    out = state.copy()
    _coupled_inplace(out.zeta, out.eta, mark)
    return out


def run_coupled(zeta0: Config, eta0: Config, log: EventLog) -> CoupledTrajectory:
    """Fold the coupled Bernoulli-avalanche rules over ``log``.

    Only the sites touched by each mark are stored; ``states()`` replays
    the full sequence. Domination is checked on every changed site.
    """
    if zeta0.window != eta0.window:
        raise ValueError(f'windows differ: {zeta0.window} vs {eta0.window}')
    bad = [k for k in zeta0.sites() if eta0[k] > zeta0[k]]
    if bad:
        raise DominationViolated(f'eta0 exceeds zeta0 at sites {bad[:5]}')
    state = CoupledState(zeta0.copy(), eta0.copy())
    trajectory = CoupledTrajectory(initial=state.copy())
    for mark in log.marks:
        changed = _coupled_inplace(state.zeta, state.eta, mark)
        changes = []
        for k in changed:
            z, e = state.zeta[k], state.eta[k]
            if e > z:
                raise CouplingBroken(f'eta above zeta at site {k} after mark {mark.ordinal}')
            changes.append((k, z, e))
        trajectory.steps.append(CoupledStep(mark, changes))
    trajectory.final = state
    return trajectory


@dataclass
class PairStep:
    mark: Mark
    clock: str  # 'N' or 'V'
    site: int
    first: int
    second: int


@dataclass
class PairTrajectory:
    initial: Tuple[Config, Config]
    steps: List[PairStep]
    final: Tuple[Config, Config]
    coalescence: Dict[int, Optional[float]]  # site -> time (or ordinal) of coalescence

    def states(self) -> Iterator[Tuple[Config, Config]]:
        first, second = self.initial[0].copy(), self.initial[1].copy()
        yield first.copy(), second.copy()
        for step in self.steps:
            first[step.site] = step.first
            second[step.site] = step.second
            yield first.copy(), second.copy()


def _merge_clocks(log_n: EventLog, log_v: EventLog) -> List[Tuple[str, Mark]]:
    timed = all(m.time is not None for m in log_n.marks) and all(m.time is not None for m in log_v.marks)
    if timed:
        key_n = ((m.time, 0, m.ordinal, 'N', m) for m in log_n.marks)
        key_v = ((m.time, 1, m.ordinal, 'V', m) for m in log_v.marks)
    else:
        # jump-chain logs interleave by ordinal, N before V
        key_n = ((m.ordinal, 0, m.ordinal, 'N', m) for m in log_n.marks)
        key_v = ((m.ordinal, 1, m.ordinal, 'V', m) for m in log_v.marks)
    return [(entry[3], entry[4]) for entry in heapq.merge(key_n, key_v, key=lambda e: e[:3])]


def run_coupled_bernoulli_pair(zeta0_1: Config, zeta0_2: Config,
                               log_n: EventLog, log_v: EventLog) -> PairTrajectory:
    """Two Bernoulli processes coupled until they agree, site by site.

    Where the components differ, the first one flips on N marks and the
    second on V marks; once a site agrees both follow N and never split again.
    """
    if zeta0_1.window != zeta0_2.window:
        raise ValueError(f'windows differ: {zeta0_1.window} vs {zeta0_2.window}')
    first, second = zeta0_1.copy(), zeta0_2.copy()
    coalescence = {k: (0.0 if first[k] == second[k] else None) for k in first.sites()}
    steps = []
    for clock, mark in _merge_clocks(log_n, log_v):
        i = mark.site
        if i not in first:
            raise OutOfWindow(f'mark at {i} outside [{first.left},{first.right}]')
        if first[i] != second[i]:
            if clock == 'N':
                first.flip(i)
            else:
                second.flip(i)
            if first[i] == second[i]:
                coalescence[i] = mark.time if mark.time is not None else float(mark.ordinal)
        elif clock == 'N':
            first.flip(i)
            second.flip(i)
        else:
            continue
        steps.append(PairStep(mark, clock, i, first[i], second[i]))
    return PairTrajectory((zeta0_1.copy(), zeta0_2.copy()), steps, (first, second), coalescence)


def initial_config(phi: str, window: Window, rng: Optional[RngStream] = None) -> Config:
    """Initial data for trend-to-equilibrium runs, truncated to ``window``."""
    left, right = window
    if phi == 'all-vacant':
        return Config(left, right)
    if phi == 'alternating':
        return Config(left, right, [1 if k % 2 == 0 else 0 for k in range(left, right + 1)])
    if phi == 'random-half':
        if rng is None:
            raise ValueError('random-half initial data needs an RngStream')
        return Config(left, right, [rng.coin() for _ in range(left, right + 1)])
    raise ValueError(f'unknown initial data {phi!r}, expected one of {PHI_SPECS}')


def window_time_average(radius: int, observe: Window, events: int, burn_in: int,
                        rng: RngStream, thin: Optional[int] = None) -> Counter:
    """Time-averaged law of ``observe`` along one long truncated avalanche run.

    The jump chain of black marks (uniform site on [-radius, radius]) is
    started from the empty configuration; after ``burn_in`` events the
    observed window is recorded every ``thin`` events (default: once per
    unit of time, i.e. every window-width events).
    """
    eta = Config(-radius, radius)
    thin = thin or eta.width
    lo, hi = observe
    counts = Counter()
    for n in range(1, burn_in + events + 1):
        apply_avalanche_mark(eta, rng.randint(-radius, radius))
        if n > burn_in and (n - burn_in) % thin == 0:
            counts[''.join(str(eta[k]) for k in range(lo, hi + 1))] += 1
    return counts


def transition_counts(sequence: Iterable[str]) -> Counter:
    """Counts of consecutive (a, b) pairs with a != b."""
    counts = Counter()
    previous = None
    for item in sequence:
        if previous is not None and item != previous:
            counts[(previous, item)] += 1
        previous = item
    return counts


def trajectory_rows(trajectory: CoupledTrajectory) -> List[dict]:
    return [step.to_row() for step in trajectory.steps]
