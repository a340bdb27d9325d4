"""Mean-field coagulation-fragmentation model for particle concentrations.

c_k is the number of mass-k particles per unit length. Neighbouring
particles merge at rate 1 and a particle of mass k shatters into k unit
particles at rate k - 1. The unique steady state with unit mass is
c_k = a_k g^(k-1) 2^(-k), where a_1 = 1, a_k = (1/(k+1)) sum a_j a_(k-j)
and g solves sum a_k (g/2)^k = 1.
"""
import os
import sys
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import optimize

from avalanche.errors import BracketFailure, DegenerateState, EmptyTruncation, NegativityBreach

DEFAULT_K = int(os.getenv('AVALANCHE_MEANFIELD_K', 10000))
DEFAULT_TOL = float(os.getenv('AVALANCHE_MEANFIELD_TOL', 1e-10))
NEGATIVITY_TOLERANCE = 1e-12
MAX_STEP_HALVINGS = 6


@dataclass
class MeanFieldVector:
    c: np.ndarray  # c[k-1] is the concentration of mass-k particles

    @property
    def K(self) -> int:
        return len(self.c)

    @property
    def masses(self) -> np.ndarray:
        return np.arange(1, self.K + 1, dtype=float)

    @property
    def m0(self) -> float:
        return float(self.c.sum())

    @property
    def m1(self) -> float:
        return float(self.masses @ self.c)

    @property
    def m2(self) -> float:
        return float((self.masses ** 2) @ self.c)


def moments(c) -> dict:
    vector = c if isinstance(c, MeanFieldVector) else MeanFieldVector(np.asarray(c, dtype=float))
    return {'m0': vector.m0, 'm1': vector.m1, 'm2': vector.m2}


@dataclass
class SteadyStateSolution:
    a: np.ndarray
    g: float
    c: MeanFieldVector
    residual: float

    @property
    def q(self) -> float:
        return self.g / 2

    def summary(self) -> dict:
        return {'K': self.c.K, 'g': self.g, 'residual': self.residual, **moments(self.c)}


def compute_a(K: int) -> np.ndarray:
    """a_1..a_K of the convolution recurrence (index k-1 holds a_k)."""
    if K < 1:
        raise EmptyTruncation(f'truncation order must be >= 1, got {K}')
    a = np.zeros(K)
    a[0] = 1.0
    for k in range(2, K + 1):
        # sum_{j=1}^{k-1} a_j a_{k-j}
        a[k - 1] = np.dot(a[:k - 1], a[k - 2::-1]) / (k + 1)
    return a


def _series(a: np.ndarray, z: float) -> float:
    """sum_k a_k z^k by Horner's rule."""
    return float(np.polynomial.polynomial.polyval(z, np.concatenate(([0.0], a))))


def solve_g(K: int = DEFAULT_K, tol: float = DEFAULT_TOL, a: Optional[np.ndarray] = None) -> float:
    """Root g = 2z of sum a_k z^k = 1 by bisection on z in (0, 1)."""
    if a is None:
        a = compute_a(K)
    if tol <= 0:
        raise ValueError(f'tolerance must be positive, got {tol}')

    def f(z):
        return _series(a, z) - 1.0

    if f(0.0) * f(1.0) >= 0:
        raise BracketFailure(f'sum a_k z^k - 1 does not change sign on (0,1) for K={len(a)}')
    # f'(z) = g/z stays below 3 near the root, so xtol = tol/4 keeps |f| <= tol
    z = optimize.bisect(f, 0.0, 1.0, xtol=tol / 4, rtol=4 * np.finfo(float).eps, maxiter=200)
    return 2.0 * z


def steady_state(K: int = DEFAULT_K, tol: float = DEFAULT_TOL) -> SteadyStateSolution:
    a = compute_a(K)
    g = solve_g(K, tol, a=a)
    q = g / 2
    ks = np.arange(1, K + 1)
    c = a * np.power(q, ks) / g
    residual = abs(_series(a, q) - 1.0)
    return SteadyStateSolution(a=a, g=g, c=MeanFieldVector(c), residual=residual)


_steady_cache = {}


def get_steady_state(K: int = DEFAULT_K, tol: float = DEFAULT_TOL) -> SteadyStateSolution:
    """Steady state computed once per (K, tol) for the lifetime of the process."""
    key = (K, tol)
    if key not in _steady_cache:
        _steady_cache[key] = steady_state(K, tol)
        print(f"[MEANFIELD] Steady state K={K}: g={_steady_cache[key].g:.10f}", file=sys.stderr)
    return _steady_cache[key]


def proof_identities(solution: SteadyStateSolution) -> dict:
    """Both sides of the two identities satisfied at q = g/2.

    sum_{k>=2} (k+1) a_k q^k equals 1 and equals g + 1 - 2q.
    """
    a, g, q = solution.a, solution.g, solution.q
    ks = np.arange(1, len(a) + 1)
    tail = float(((ks[1:] + 1) * a[1:] * np.power(q, ks[1:])).sum())
    return {'sum': tail, 'one': 1.0, 'g_plus_1_minus_2q': g + 1 - 2 * q}


def _as_array(c) -> np.ndarray:
    if isinstance(c, MeanFieldVector):
        return c.c
    return np.asarray(c, dtype=float)


def _coagulation(c: np.ndarray) -> np.ndarray:
    """Full self-convolution: entry k-2 is sum_{i=1}^{k-1} c_i c_(k-i)."""
    return np.convolve(c, c)


def ode_rhs(c) -> np.ndarray:
    """Truncated right-hand side; merges producing mass above K are lost."""
    c = _as_array(c)
    K = len(c)
    m0 = c.sum()
    if m0 <= 0:
        raise DegenerateState(f'total particle density m0={m0} must be positive')
    ks = np.arange(1, K + 1, dtype=float)
    rhs = -2.0 * c
    rhs[0] += float(((ks - 1) * ks) @ c)
    if K > 1:
        rhs[1:] += -(ks[1:] - 1) * c[1:] + _coagulation(c)[:K - 1] / m0
    return rhs


def mass_leakage_rate(c) -> float:
    """Mass per unit time carried by merges into masses above K."""
    c = _as_array(c)
    K = len(c)
    conv = _coagulation(c)
    masses = np.arange(2, 2 * K + 1, dtype=float)
    return float(masses[K - 1:] @ conv[K - 1:] / c.sum())


def monodisperse(K: int) -> np.ndarray:
    c = np.zeros(K)
    c[0] = 1.0
    return c


@dataclass
class OdeTrajectory:
    times: List[float] = field(default_factory=list)
    m0: List[float] = field(default_factory=list)
    m1: List[float] = field(default_factory=list)
    leakage: List[float] = field(default_factory=list)
    final: Optional[np.ndarray] = None
    step: float = 0.0
    snapshots: List[np.ndarray] = field(default_factory=list)

    @property
    def m1_drift(self) -> float:
        return max(abs(m - self.m1[0]) for m in self.m1)

    def record(self, t: float, c: np.ndarray, keep: bool):
        self.times.append(t)
        self.m0.append(float(c.sum()))
        self.m1.append(float(np.arange(1, len(c) + 1) @ c))
        self.leakage.append(mass_leakage_rate(c))
        if keep:
            self.snapshots.append(c.copy())


def _rk4(c, h):
    k1 = ode_rhs(c)
    k2 = ode_rhs(c + 0.5 * h * k1)
    k3 = ode_rhs(c + 0.5 * h * k2)
    k4 = ode_rhs(c + h * k3)
    return c + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _euler(c, h):
    return c + h * ode_rhs(c)


STEPPERS = {'rk4': _rk4, 'euler': _euler}


def _integrate_fixed(c0, T, h, stepper, record_every, keep_snapshots) -> OdeTrajectory:
    trajectory = OdeTrajectory(step=h)
    c = c0.copy()
    trajectory.record(0.0, c, keep_snapshots)
    n_steps = int(np.ceil(T / h - 1e-9)) if T > 0 else 0
    t = 0.0
    for n in range(1, n_steps + 1):
        dt = min(h, T - t)
        c = stepper(c, dt)
        t = T if n == n_steps else t + dt
        low = c.min()
        if low < -NEGATIVITY_TOLERANCE:
            raise NegativityBreach(h, float(low))
        if n % record_every == 0 or n == n_steps:
            trajectory.record(t, c, keep_snapshots)
    trajectory.final = c
    return trajectory


def integrate(c0, T: float, K: Optional[int] = None, h: float = 0.01, method: str = 'rk4',
              record_every: int = 1, keep_snapshots: bool = False) -> OdeTrajectory:
    """Fixed-step integration of the truncated system up to time T.

    ``c0`` is padded with zeros (or cut) to length K. On a negativity breach
    the step is halved and the run restarted, at most MAX_STEP_HALVINGS times.
    """
    c0 = _as_array(c0)
    K = K or len(c0)
    start = np.zeros(K)
    start[:min(K, len(c0))] = c0[:K]
    if (start < 0).any():
        raise ValueError('initial concentrations must be nonnegative')
    if T < 0:
        raise ValueError(f'time horizon must be >= 0, got {T}')
    stepper = STEPPERS[method]
    for _ in range(MAX_STEP_HALVINGS + 1):
        try:
            return _integrate_fixed(start, T, h, stepper, record_every, keep_snapshots)
        except NegativityBreach as e:
            print(f"[MEANFIELD] {e}; retrying with h={h / 2}", file=sys.stderr)
            h /= 2
    raise NegativityBreach(h, float('nan'))
