"""Perfect sampling of the avalanche invariant law on a window [-l, l].

The sampler runs the Bernoulli process backwards in time on a growing
domain [left, right] while tracking, for every Bernoulli-occupied site,
whether it can still influence the window at time 0 (value 2) or not
(value 1); vacant sites hold 0. Once no 2 is left, the avalanche
configuration at time 0 is rebuilt by replaying the marks in reverse.

Two rule sets drive the backward phase: ``step1`` follows the contour
processes closely, ``step1prime`` only keeps sites really needed for the
reconstruction and touches far fewer sites. Both give the same output law.
"""
import os
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

from avalanche.errors import BudgetExceeded, CouplingBroken, IncompleteTrace, OutOfDomain
from avalanche.models.lattice import Color, Config, RngStream

EVENT_BUDGET = int(os.getenv('AVALANCHE_EVENT_BUDGET', 10_000_000))

STEP1 = 'step1'
STEP1_PRIME = 'step1prime'
VARIANTS = (STEP1, STEP1_PRIME)


@dataclass
class BoxDelta:
    """Reversible record of one backward event."""
    site: int
    color: Color
    changes: List[Tuple[int, int]]  # (site, value before the event)
    left: int                       # domain before the event
    right: int


class BoxState:
    """{0,1,2}-valued array on the domain [left, right]; reads outside give 0."""

    def __init__(self, left: int, right: int, values: Sequence[int]):
        if len(values) != right - left + 1:
            raise ValueError(f'{len(values)} values for domain [{left},{right}]')
        self.left = left
        self.right = right
        self._values = [int(v) for v in values]
        self.twos = sum(1 for v in self._values if v == 2)
        self._journal: Optional[List[Tuple[int, int]]] = None

    @property
    def width(self) -> int:
        return self.right - self.left + 1

    def __getitem__(self, site: int) -> int:
        if self.left <= site <= self.right:
            return self._values[site - self.left]
        return 0

    def __setitem__(self, site: int, value: int):
        if not self.left <= site <= self.right:
            raise OutOfDomain(f'site {site} outside domain [{self.left},{self.right}]')
        old = self._values[site - self.left]
        if old == value:
            return
        if self._journal is not None:
            self._journal.append((site, old))
        self.twos += (value == 2) - (old == 2)
        self._values[site - self.left] = value

    def values(self) -> List[int]:
        return list(self._values)

    def copy(self) -> 'BoxState':
        return BoxState(self.left, self.right, self._values)

    def has_two(self, start: int, stop: int) -> bool:
        """Whether some site of [start, stop] (clipped to the domain) holds 2."""
        start, stop = max(start, self.left), min(stop, self.right)
        if start > stop or self.twos == 0:
            return False
        return 2 in self._values[start - self.left:stop - self.left + 1]

    def grow_right(self, new_right: int):
        self._values.extend([0] * (new_right - self.right))
        self.right = new_right

    def grow_left(self, new_left: int):
        self._values[:0] = [0] * (self.left - new_left)
        self.left = new_left

    def begin(self, site: int, color: Color) -> BoxDelta:
        self._journal = []
        return BoxDelta(site, color, self._journal, self.left, self.right)

    def commit(self):
        self._journal = None

    def undo(self, delta: BoxDelta):
        for site, old in reversed(delta.changes):
            value = self._values[site - self.left]
            self.twos += (old == 2) - (value == 2)
            self._values[site - self.left] = old
        if delta.right < self.right:
            del self._values[delta.right - self.left + 1:]
            self.right = delta.right
        if delta.left > self.left:
            del self._values[:delta.left - self.left]
            self.left = delta.left

    def to_text(self) -> str:
        return f"[{self.left},{self.right}]:{''.join(str(v) for v in self._values)}"

    def __repr__(self):
        return f'BoxState({self.to_text()})'


@dataclass(frozen=True)
class FinishedAllVacant:
    """Step 0 found the whole window vacant: the output is all vacant."""
    l: int


@dataclass
class SamplerTrace:
    initial: BoxState
    deltas: List[BoxDelta] = field(default_factory=list)
    final: Optional[BoxState] = None

    @property
    def T(self) -> int:
        return len(self.deltas)

    @property
    def events(self) -> List[Tuple[int, Color]]:
        return [(d.site, d.color) for d in self.deltas]

    @classmethod
    def from_states(cls, events: Sequence[Tuple[int, Color]], states: Sequence[BoxState]) -> 'SamplerTrace':
        """Trace built from explicit snapshots (states[n] after events[n-1])."""
        if len(states) != len(events) + 1:
            raise ValueError('need one more state than events')
        deltas = []
        for (site, color), before, after in zip(events, states, states[1:]):
            changes = [(k, before[k]) for k in range(after.left, after.right + 1) if before[k] != after[k]]
            deltas.append(BoxDelta(site, color, changes, before.left, before.right))
        return cls(initial=states[0].copy(), deltas=deltas, final=states[-1].copy())

    def replay_states(self) -> Iterator[BoxState]:
        """Snapshots from the terminal state back to the initial one."""
        box = self.final.copy()
        yield box.copy()
        for delta in reversed(self.deltas):
            box.undo(delta)
            yield box.copy()


def step0_init(l: int, rng: RngStream) -> Union[BoxState, FinishedAllVacant]:
    """Initial Bernoulli configuration on the window plus its vacant margins."""
    if l < 0:
        raise ValueError(f'window radius must be >= 0, got {l}')
    center = [rng.coin() for _ in range(2 * l + 1)]
    if not any(center):
        return FinishedAllVacant(l)
    right = []
    while rng.coin():
        right.append(1)
    right.append(0)
    left = []
    while rng.coin():
        left.append(1)
    left.append(0)
    values = [2 * v for v in reversed(left)] + [2 * v for v in center] + [2 * v for v in right]
    return BoxState(-l - len(left), l + len(right), values)


def _component(box: BoxState, i: int) -> Tuple[int, int]:
    a = i
    while box[a - 1] >= 1:
        a -= 1
    b = i
    while box[b + 1] >= 1:
        b += 1
    return a, b


def step1_apply_event(state: BoxState, i_n: int, m_n: Color, rng: RngStream) -> BoxState:
    """One backward event under the contour-following rules (mutates ``state``)."""
    if not state.left <= i_n <= state.right:
        raise OutOfDomain(f'site {i_n} outside domain [{state.left},{state.right}]')
    value = state[i_n]
    if m_n is Color.BLACK:
        if value >= 1:
            state[i_n] = 0
        else:
            a, b = _component(state, i_n)
            inside = state.has_two(a, b)
            clear_right = not inside and not state.has_two(i_n + 1, state.right)
            clear_left = not inside and not state.has_two(state.left, i_n - 1)
            fill = 1 if clear_right or clear_left else 2
            for k in range(a, b + 1):
                state[k] = fill
    elif value == 2:
        boundary = not state.has_two(state.left, i_n - 1) or not state.has_two(i_n + 1, state.right)
        if state[i_n - 1] == 0 and state[i_n + 1] == 0 and boundary:
            state[i_n] = 1

    old_left, old_right = state.left, state.right
    if state[old_right] == 2:
        new_right = old_right + rng.geometric_half()
        state.grow_right(new_right)
        for k in range(old_right, new_right):
            state[k] = 2
    if state[old_left] == 2:
        new_left = old_left - rng.geometric_half()
        state.grow_left(new_left)
        for k in range(new_left + 1, old_left + 1):
            state[k] = 2
    return state


def _touching_two(state: BoxState, start: int, step: int, stop: int) -> bool:
    """Whether the run of values >= 1 starting at ``start`` contains a 2."""
    k = start
    while k != stop + step and state[k] >= 1:
        if state[k] == 2:
            return True
        k += step
    return False


def step1prime_apply_event(state: BoxState, i_n: int, m_n: Color, rng: RngStream) -> BoxState:
    """One backward event under the reduced rules (mutates ``state``)."""
    if not state.left <= i_n <= state.right:
        raise OutOfDomain(f'site {i_n} outside domain [{state.left},{state.right}]')
    value = state[i_n]
    if m_n is Color.BLACK:
        if value >= 1:
            state[i_n] = 0
        else:
            hi = None
            k = i_n + 1
            while k <= state.right and state[k] >= 1:
                if state[k] == 2:
                    hi = k
                k += 1
            lo = None
            k = i_n - 1
            while k >= state.left and state[k] >= 1:
                if state[k] == 2:
                    lo = k
                k -= 1
            if lo is None and hi is None:
                state[i_n] = 1
            else:
                for k in range(i_n if lo is None else lo, (i_n if hi is None else hi) + 1):
                    state[k] = 2
    elif value == 2 and (state[i_n - 1] <= 1 or state[i_n + 1] <= 1):
        state[i_n] = 1

    old_left, old_right = state.left, state.right
    extend_left = _touching_two(state, old_left, 1, old_right)
    extend_right = _touching_two(state, old_right, -1, old_left)
    if extend_left:
        new_left = old_left - rng.geometric_half()
        state.grow_left(new_left)
        for k in range(new_left + 1, old_left):
            state[k] = 1
    if extend_right:
        new_right = old_right + rng.geometric_half()
        state.grow_right(new_right)
        for k in range(old_right + 1, new_right):
            state[k] = 1
    return state


RULES: dict = {STEP1: step1_apply_event, STEP1_PRIME: step1prime_apply_event}


def run_backward(box: BoxState, rng: RngStream, variant: str = STEP1_PRIME,
                 max_events: Optional[int] = None) -> SamplerTrace:
    """Draw backward events until no value 2 is left."""
    apply: Callable = RULES[variant]
    budget = max_events or EVENT_BUDGET
    trace = SamplerTrace(initial=box.copy())
    while box.twos:
        if trace.T >= budget:
            raise BudgetExceeded(trace.T)
        site = rng.randint(box.left, box.right)
        color = Color(rng.coin())
        delta = box.begin(site, color)
        apply(box, site, color, rng)
        box.commit()
        trace.deltas.append(delta)
    trace.final = box
    return trace


def step2_reconstruct(trace: SamplerTrace, check: bool = False) -> Config:
    """Rebuild the avalanche configuration at time 0 from a finished trace.

    Marks are replayed from the last backward event to the first; the
    avalanche state starts empty on the terminal domain, and sites that
    fall outside the domain of an earlier index are reset to vacant.
    With ``check=True`` every intermediate state is verified to lie below
    the Bernoulli occupancy.
    """
    if trace.final is None or trace.final.twos:
        raise IncompleteTrace('the terminal box still holds sites with value 2')
    box = trace.final.copy()
    eta = Config(box.left, box.right)
    for n in range(trace.T, 0, -1):
        delta = trace.deltas[n - 1]
        i = delta.site
        zeta_n = box[i]
        box.undo(delta)
        if delta.color is Color.BLACK:
            if eta[i] == 1:
                k = i
                while k >= eta.left and eta[k] == 1:
                    eta[k] = 0
                    k -= 1
                k = i + 1
                while k <= eta.right and eta[k] == 1:
                    eta[k] = 0
                    k += 1
            elif zeta_n == 0:
                eta[i] = 1
        elif box[i] >= 1:
            eta[i] = 1
        for k in range(eta.left, box.left):
            eta[k] = 0
        for k in range(box.right + 1, eta.right + 1):
            eta[k] = 0
        if check:
            for k in range(box.left, box.right + 1):
                if eta[k] > min(box[k], 1):
                    raise CouplingBroken(f'reconstructed avalanche above Bernoulli at site {k}, index {n - 1}')
    return eta


@dataclass
class SamplerResult:
    config: Config
    T: int
    domain_width: int
    variant: str
    all_vacant: bool = False

    def to_row(self, replica: int) -> dict:
        return {
            'replica': replica,
            'config': self.config.to_text(),
            'T': self.T,
            'domain_width': self.domain_width,
        }


def sample_invariant_window(l: int, variant: str = STEP1_PRIME, rng: Optional[RngStream] = None,
                            max_events: Optional[int] = None) -> SamplerResult:
    """Exact draw of the invariant avalanche law restricted to [-l, l]."""
    if variant not in RULES:
        raise ValueError(f'unknown variant {variant!r}, expected one of {VARIANTS}')
    start = step0_init(l, rng)
    if isinstance(start, FinishedAllVacant):
        return SamplerResult(Config(-l, l), 0, 2 * l + 1, variant, all_vacant=True)
    trace = run_backward(start, rng, variant, max_events)
    eta = step2_reconstruct(trace)
    return SamplerResult(eta.restrict(-l, l), trace.T, trace.final.width, variant)
