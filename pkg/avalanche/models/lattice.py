"""Lattice configurations, seeded random streams and primitive samplers.

Sites are plain integers. A Config holds the occupancy of a finite window
[left, right] plus a policy telling what lies outside of it: either vacant
ghost sites (finite truncation) or a lazily drawn stationary environment of
independent fair coins.
"""
import hashlib
import itertools
import math
import os
import re
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterator, Optional, Tuple, Union

import numpy as np

from avalanche.errors import BoundaryTruncated, EmptyWindow, OutOfWindow

# Uniform draws prefetched per refill of an RngStream
RNG_BUFFER_SIZE = int(os.getenv('AVALANCHE_RNG_BUFFER', 1024))

SEED_MASK = (1 << 64) - 1

Window = Tuple[int, int]
StreamLabel = Union[int, str]


class SiteState(IntEnum):
    VACANT = 0
    OCCUPIED = 1


class Color(IntEnum):
    """Mark colors. Black marks drive the N clocks, grey marks the V clocks."""
    BLACK = 0
    GREY = 1


class EnvPolicy(Enum):
    FIXED_VACANT_OUTSIDE = 'fixed'
    LAZY_BERNOULLI_HALF = 'lazy'


@dataclass(frozen=True)
class Mark:
    site: int
    color: Color
    ordinal: int
    time: Optional[float] = None

    def to_dict(self) -> dict:
        data = {'ordinal': self.ordinal, 'site': self.site, 'color': self.color.name.lower()}
        if self.time is not None:
            data['time'] = self.time
        return data


def _label_to_int(label: StreamLabel) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f'stream labels must be non-negative, got {label}')
        return int(label)
    digest = hashlib.blake2b(str(label).encode(), digest_size=8).digest()
    return int.from_bytes(digest, 'little')


class RngStream:
    """Deterministic random stream identified by (seed, stream_id).

    The stream id is a tuple of labels; ``spawn`` appends one more label, so
    replicas, sub-tasks and environments each get their own independent
    generator no matter in which order or on which worker they run.
    Uniform draws are served from a prefetched buffer.
    """

    def __init__(self, seed: int, stream_id: Union[StreamLabel, Tuple[StreamLabel, ...]] = 0):
        self.seed = int(seed) & SEED_MASK
        if not isinstance(stream_id, tuple):
            stream_id = (stream_id,)
        self.stream_id = stream_id
        self._key = tuple(_label_to_int(label) for label in stream_id)
        self._sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=self._key)
        self._generator = np.random.default_rng(self._sequence)
        self._site_salt = self._sequence.generate_state(2, np.uint64).tobytes()
        self._buffer = []
        self._position = 0

    def __repr__(self):
        return f'RngStream(seed={self.seed}, stream_id={self.stream_id!r})'

    def spawn(self, label: StreamLabel) -> 'RngStream':
        return RngStream(self.seed, self.stream_id + (label,))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def random(self) -> float:
        if self._position >= len(self._buffer):
            self._buffer = self._generator.random(RNG_BUFFER_SIZE).tolist()
            self._position = 0
        value = self._buffer[self._position]
        self._position += 1
        return value

    def coin(self) -> int:
        return 1 if self.random() < 0.5 else 0

    def randint(self, low: int, high: int) -> int:
        """Uniform integer on the inclusive range [low, high]."""
        span = high - low + 1
        return low + min(int(self.random() * span), span - 1)

    def exponential(self, rate: float) -> float:
        return -math.log(1.0 - self.random()) / rate

    def geometric_half(self) -> int:
        k = 1
        while self.random() < 0.5:
            k += 1
        return k

    def poisson(self, mean: float) -> int:
        return int(self._generator.poisson(mean))

    def site_bit(self, site: int) -> int:
        """Fair coin attached to a site; independent of the order of reads."""
        digest = hashlib.blake2b(self._site_salt + int(site).to_bytes(8, 'little', signed=True),
                                 digest_size=1).digest()
        return digest[0] & 1


class Config:
    """Occupancy of a window of sites, with an explicit out-of-window policy.

    Under ``LAZY_BERNOULLI_HALF`` reading outside the window grows it, each
    new site taking the value of the stream's ``site_bit``; under
    ``FIXED_VACANT_OUTSIDE`` outside reads return vacant and writes fail.
    """

    TEXT_PATTERN = re.compile(r'^\[(-?\d+),(-?\d+)\]:([01]+)$')

    def __init__(self, left: int, right: int, cells=None,
                 policy: EnvPolicy = EnvPolicy.FIXED_VACANT_OUTSIDE,
                 rng: Optional[RngStream] = None,
                 extension_budget: Optional[int] = None):
        if right < left:
            raise EmptyWindow(f'window [{left},{right}] is empty')
        if policy is EnvPolicy.LAZY_BERNOULLI_HALF and rng is None:
            raise ValueError('a lazy environment needs an RngStream')
        self.left = left
        self.right = right
        self.policy = policy
        self.extension_budget = extension_budget
        self._rng = rng
        if cells is None:
            if rng is not None and policy is EnvPolicy.LAZY_BERNOULLI_HALF:
                cells = [rng.site_bit(k) for k in range(left, right + 1)]
            else:
                cells = [0] * (right - left + 1)
        cells = [int(v) for v in cells]
        if len(cells) != right - left + 1:
            raise ValueError(f'{len(cells)} states given for a window of width {right - left + 1}')
        self._cells = cells

    # -- window ------------------------------------------------------------

    @property
    def window(self) -> Window:
        return (self.left, self.right)

    @property
    def width(self) -> int:
        return self.right - self.left + 1

    def __len__(self):
        return self.width

    def __contains__(self, site: int) -> bool:
        return self.left <= site <= self.right

    def sites(self) -> range:
        return range(self.left, self.right + 1)

    def _extend_to(self, site: int):
        added = (self.left - site) if site < self.left else (site - self.right)
        if self.extension_budget is not None:
            if added > self.extension_budget:
                raise OutOfWindow(f'site {site} lies beyond the extension budget of [{self.left},{self.right}]')
            self.extension_budget -= added
        if site < self.left:
            new = [self._rng.site_bit(k) for k in range(site, self.left)]
            self._cells = new + self._cells
            self.left = site
        else:
            self._cells.extend(self._rng.site_bit(k) for k in range(self.right + 1, site + 1))
            self.right = site

    # -- access ------------------------------------------------------------

    def __getitem__(self, site: int) -> int:
        if self.left <= site <= self.right:
            return self._cells[site - self.left]
        if self.policy is EnvPolicy.FIXED_VACANT_OUTSIDE:
            return 0
        self._extend_to(site)
        return self._cells[site - self.left]

    def __setitem__(self, site: int, value: int):
        if not self.left <= site <= self.right:
            if self.policy is EnvPolicy.FIXED_VACANT_OUTSIDE:
                raise OutOfWindow(f'cannot write site {site} outside [{self.left},{self.right}]')
            self._extend_to(site)
        self._cells[site - self.left] = int(value)

    def state(self, site: int) -> SiteState:
        return SiteState(self[site])

    def flip(self, site: int):
        self[site] = 1 - self[site]

    def values(self) -> list:
        return list(self._cells)

    def items(self) -> Iterator[Tuple[int, int]]:
        return zip(self.sites(), list(self._cells))

    def occupied_fraction(self) -> float:
        return sum(self._cells) / self.width

    # -- copies and text form ---------------------------------------------

    def copy(self) -> 'Config':
        clone = Config.__new__(Config)
        clone.left, clone.right = self.left, self.right
        clone.policy = self.policy
        clone.extension_budget = self.extension_budget
        clone._rng = self._rng
        clone._cells = list(self._cells)
        return clone

    def restrict(self, left: int, right: int) -> 'Config':
        """Sub-window copy with vacant ghost sites outside."""
        if left < self.left or right > self.right:
            raise OutOfWindow(f'[{left},{right}] is not inside [{self.left},{self.right}]')
        cells = self._cells[left - self.left:right - self.left + 1]
        return Config(left, right, cells)

    def to_text(self) -> str:
        return f"[{self.left},{self.right}]:{''.join(str(v) for v in self._cells)}"

    @classmethod
    def from_text(cls, text: str, policy: EnvPolicy = EnvPolicy.FIXED_VACANT_OUTSIDE,
                  rng: Optional[RngStream] = None) -> 'Config':
        match = cls.TEXT_PATTERN.match(text.strip())
        if not match:
            raise ValueError(f'not a configuration: {text!r}')
        left, right, bits = int(match.group(1)), int(match.group(2)), match.group(3)
        return cls(left, right, [int(b) for b in bits], policy=policy, rng=rng)

    def __eq__(self, other):
        if not isinstance(other, Config):
            return NotImplemented
        return self.window == other.window and self._cells == other._cells

    def __repr__(self):
        return f'Config({self.to_text()}, {self.policy.value})'


def sample_bernoulli_config(window: Window, rng: RngStream) -> Config:
    """Product Bernoulli(1/2) configuration on ``window`` that keeps growing lazily."""
    left, right = window
    if right < left:
        raise EmptyWindow(f'window [{left},{right}] is empty')
    return Config(left, right, policy=EnvPolicy.LAZY_BERNOULLI_HALF, rng=rng)


def sample_geometric_half(rng: RngStream) -> int:
    return rng.geometric_half()


def connected_component(config: Config, i: int) -> Optional[Window]:
    """Maximal occupied interval containing ``i``, or None when ``i`` is vacant."""
    if config[i] == 0:
        return None
    left = i
    while config[left - 1] == 1:
        left -= 1
    right = i
    while config[right + 1] == 1:
        right += 1
    return (left, right)


def particle_mass_at_edge(config: Config) -> int:
    """Mass of the particle containing the edge (0, 1).

    An occupied run glues together the edges on either side of each of its
    sites, so a run of length n forms a particle of mass n + 1. The run and
    its two bounding vacant sites must lie inside the window (a lazy
    environment extends itself to find them).
    """
    fixed = config.policy is EnvPolicy.FIXED_VACANT_OUTSIDE
    if fixed and (config.left > -1 or config.right < 2):
        raise BoundaryTruncated(f'window [{config.left},{config.right}] does not cover sites -1..2')
    if config[0] == 0 and config[1] == 0:
        return 1
    site = 0 if config[0] == 1 else 1
    left, right = connected_component(config, site)
    if fixed and (left <= config.left or right >= config.right):
        raise BoundaryTruncated(f'run [{left},{right}] reaches the edge of [{config.left},{config.right}]')
    return right - left + 2


def enumerate_configs(left: int, right: int) -> Iterator[Config]:
    """Every configuration of a small window, in lexicographic order."""
    if right < left:
        raise EmptyWindow(f'window [{left},{right}] is empty')
    for bits in itertools.product((0, 1), repeat=right - left + 1):
        yield Config(left, right, list(bits))
