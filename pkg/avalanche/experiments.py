"""Harness operations behind the CLI subcommands and the HTTP API.

Each ``*_record`` function takes a parameter dict (defaults in DEFAULTS)
and returns a ResultRecord; ``execute`` dispatches by subcommand name and
stamps wall time. Replica work goes through ``run_replicas`` so results do
not depend on the number of workers.
"""
import math
import sys
import time
from collections import Counter
from functools import partial
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from avalanche.errors import AdaptiveWindowWarning, BoundaryTruncated, BudgetExceeded
from avalanche.models.contour import (
    analytic_increment_constants, run_until_meet, sample_Y1_outcome, y1_tail_bound,
)
from avalanche.models.forward import (
    Horizon, PHI_SPECS, generate_event_log, initial_config, run_avalanche, run_coupled,
    trajectory_rows,
)
from avalanche.models.lattice import Color, Config, RngStream, particle_mass_at_edge, sample_bernoulli_config
from avalanche.models.meanfield import (
    DEFAULT_K, DEFAULT_TOL, SteadyStateSolution, get_steady_state, integrate, monodisperse,
    ode_rhs, proof_identities,
)
from avalanche.models.sampler import STEP1, STEP1_PRIME, VARIANTS, sample_invariant_window
from avalanche.replicas import DEFAULT_WORKERS, run_replicas
from avalanche.results import ResultRecord
from avalanche.stats import (
    MassHistogram, binomial_se, bootstrap_ci, chi_square_two_sample, dependence_statistic,
    exponential_tail_fit, histogram_rows, mean_se, tv_distance, tv_noise_floor,
)

ADAPTIVE_DISCARD_LIMIT = 0.01
CONTOUR_STATS = ('rho_events', 'rho_time', 'r_max')

DEFAULTS: Dict[str, dict] = {
    'sample': {'l': 3, 'samples': 1000, 'variant': STEP1_PRIME},
    'forward': {'radius': 10, 'events': 1000, 'time': None, 'phi': 'all-vacant'},
    'contour': {'replicas': 10000, 'site': 0, 'stat': 'rho_events', 'bin': 0.5},
    'y1': {'samples': 100000},
    'meanfield': {'K': DEFAULT_K, 'tol': DEFAULT_TOL, 'ode_T': 0.0, 'ode_K': 64, 'h': 0.01},
    'cluster-stats': {'samples': 100000, 'variant': STEP1_PRIME, 'start_l': 16},
    'compare': {'samples': 100000, 'variant': STEP1_PRIME, 'start_l': 16, 'K': DEFAULT_K,
                'tol': DEFAULT_TOL, 'kmax': 6},
    'mixing': {'k': 0, 'n': [1, 2, 4, 8, 16], 'samples': 20000, 'variant': STEP1_PRIME, 'bootstrap': 200},
    'tte': {'phi': 'all-vacant', 't': [1, 2, 4, 8], 'l': 1, 'samples': 20000, 'margin': 40,
            'variant': STEP1_PRIME},
    'bench': {'l': 3, 'samples': 1000},
}


def with_defaults(subcommand: str, parameters: Optional[dict] = None) -> dict:
    if subcommand not in DEFAULTS:
        raise ValueError(f'unknown subcommand {subcommand!r}')
    merged = {'seed': 0, 'workers': DEFAULT_WORKERS, **DEFAULTS[subcommand]}
    merged.update({k: v for k, v in (parameters or {}).items() if v is not None})
    return merged


# -- sampler -----------------------------------------------------------------

def _sample_task(rng: RngStream, l: int, variant: str) -> Optional[dict]:
    try:
        return sample_invariant_window(l, variant, rng).to_row(0)
    except BudgetExceeded:
        return None


def sample_record(params: dict) -> ResultRecord:
    rows = run_replicas(partial(_sample_task, l=params['l'], variant=params['variant']),
                        params['samples'], params['seed'], params['workers'], label='sample')
    record = ResultRecord('sample', params, params['seed'])
    for replica, row in enumerate(rows):
        if row is None:
            continue
        row['replica'] = replica
        record.payload.append(row)
    _budget_warning(record, len(rows) - len(record.payload))
    return record


# -- forward -------------------------------------------------------------------

def forward_record(params: dict) -> ResultRecord:
    """Coupled Bernoulli-avalanche run on a truncated window, one row per event."""
    rng = RngStream(params['seed'], 'forward')
    radius = params['radius']
    window = (-radius, radius)
    horizon = Horizon.time(params['time']) if params.get('time') else Horizon.events(params['events'])
    zeta0 = sample_bernoulli_config(window, rng.spawn('zeta'))
    zeta0 = zeta0.restrict(-radius, radius)
    eta0 = initial_config(params['phi'], window, rng.spawn('eta'))
    eta0 = Config(-radius, radius, [min(e, z) for e, z in zip(eta0.values(), zeta0.values())])
    log = generate_event_log(window, horizon, rng.spawn('marks'))
    trajectory = run_coupled(zeta0, eta0, log)
    record = ResultRecord('forward', params, params['seed'], payload=trajectory_rows(trajectory))
    record.summary = {
        'initial_zeta': zeta0.to_text(),
        'initial_eta': eta0.to_text(),
        'final_zeta': trajectory.final.zeta.to_text(),
        'final_eta': trajectory.final.eta.to_text(),
        'events': len(log),
    }
    return record


# -- contour -------------------------------------------------------------------

def _contour_task(rng: RngStream, site: int) -> Optional[Tuple[int, float, int, int]]:
    zeta0 = sample_bernoulli_config((site, site), rng.spawn('zeta'))
    try:
        state = run_until_meet(zeta0, site, rng.spawn('contour'))
    except BudgetExceeded:
        return None
    return state.events, state.time, state.r_max - site, state.fictitious


def contour_tails(replicas: int, seed: int, site: int = 0, workers: int = 1) -> dict:
    results = run_replicas(partial(_contour_task, site=site), replicas, seed, workers, label='contour')
    finished = [r for r in results if r is not None]
    columns = {
        'rho_events': [r[0] for r in finished],
        'rho_time': [r[1] for r in finished],
        'r_max': [r[2] for r in finished],
    }
    fits = {name: exponential_tail_fit(values) for name, values in columns.items()}
    return {
        'columns': columns,
        'fits': fits,
        'fictitious': sum(r[3] for r in finished),
        'budget_exceeded': len(results) - len(finished),
    }


def contour_record(params: dict) -> ResultRecord:
    if params['stat'] not in CONTOUR_STATS:
        raise ValueError(f"unknown contour statistic {params['stat']!r}, expected one of {CONTOUR_STATS}")
    tails = contour_tails(params['replicas'], params['seed'], params['site'], params['workers'])
    values = tails['columns'][params['stat']]
    if params['stat'] == 'rho_time':
        width = params['bin']
        values = [round(math.floor(v / width) * width, 10) for v in values]
    record = ResultRecord('contour', params, params['seed'], payload=histogram_rows(values))
    record.summary = {'tail_fits': tails['fits'], 'fictitious_jumps': tails['fictitious'],
                      'budget_exceeded': tails['budget_exceeded']}
    _budget_warning(record, tails['budget_exceeded'])
    return record


# -- Y1 ------------------------------------------------------------------------

def _y1_task(rng: RngStream) -> Tuple[int, str]:
    outcome = sample_Y1_outcome(rng)
    return outcome.value, outcome.first_event.value


def y1_statistics(samples: int, seed: int, workers: int = 1) -> dict:
    outcomes = run_replicas(_y1_task, samples, seed, workers, label='y1')
    values = np.array([v for v, _ in outcomes])
    mean, se = mean_se(values)
    tail = []
    for k in range(2, 11):
        fraction = float((values >= k).mean())
        tail.append({'k': k, 'fraction': fraction, 'se': binomial_se(fraction, samples),
                     'bound': y1_tail_bound(k)})
    return {
        'values': values,
        'first_events': Counter(kind for _, kind in outcomes),
        'mean': mean,
        'se': se,
        'ci': (mean - 3 * se, mean + 3 * se),
        'tail': tail,
        'constants': analytic_increment_constants(check=True),
    }


def y1_record(params: dict) -> ResultRecord:
    result = y1_statistics(params['samples'], params['seed'], params['workers'])
    record = ResultRecord('y1', params, params['seed'], payload=histogram_rows(result['values'].tolist()))
    record.summary = {key: result[key] for key in ('mean', 'se', 'ci', 'tail', 'constants')}
    record.summary['first_events'] = dict(result['first_events'])
    return record


# -- mean field ------------------------------------------------------------------

def meanfield_summary(solution: SteadyStateSolution, ode_T: float = 0.0, ode_K: int = 64,
                      h: float = 0.01) -> dict:
    summary = solution.summary()
    summary['identities'] = proof_identities(solution)
    summary['fixed_point_residual'] = float(np.abs(ode_rhs(solution.c.c)).max())
    if ode_T > 0:
        target = get_steady_state(ode_K, DEFAULT_TOL)
        trajectory = integrate(monodisperse(ode_K), ode_T, h=h, record_every=max(1, int(1 / h)))
        summary['ode'] = {
            'K': ode_K,
            'T': ode_T,
            'h': trajectory.step,
            'max_error': float(np.abs(trajectory.final - target.c.c).max()),
            'm1_drift': trajectory.m1_drift,
            'max_leakage_rate': max(trajectory.leakage),
        }
    return summary


def meanfield_record(params: dict) -> ResultRecord:
    solution = get_steady_state(params['K'], params['tol'])
    rows = [{'k': k, 'a_k': float(a), 'c_k': float(c)}
            for k, (a, c) in enumerate(zip(solution.a, solution.c.c), start=1)]
    record = ResultRecord('meanfield', params, params['seed'], payload=rows)
    record.summary = meanfield_summary(solution, params['ode_T'], params['ode_K'], params['h'])
    return record


# -- cluster statistics ------------------------------------------------------------

def _mass_task(rng: RngStream, variant: str, start_l: int) -> Tuple[Optional[int], int]:
    """Mass at the edge (0,1); reruns on a doubled window when the run is cut."""
    l = start_l
    discards = 0
    while True:
        try:
            result = sample_invariant_window(l, variant, rng.spawn(discards))
            return particle_mass_at_edge(result.config), discards
        except BoundaryTruncated:
            discards += 1
            l *= 2
        except BudgetExceeded:
            return None, discards


def estimate_cluster_mass_distribution(samples: int, seed: int, variant: str = STEP1_PRIME,
                                       workers: int = 1, start_l: int = 16) -> Tuple[MassHistogram, dict]:
    results = run_replicas(partial(_mass_task, variant=variant, start_l=start_l), samples, seed, workers,
                           label='cluster-stats')
    histogram = MassHistogram()
    discards = 0
    failed = 0
    for mass, dropped in results:
        discards += dropped
        if mass is None:
            failed += 1
        else:
            histogram.add(mass)
    info = {'discards': discards, 'budget_exceeded': failed, 'start_l': start_l,
            'window_policy': 'restart on doubled window when the run at (0,1) touches the edge',
            'warnings': []}
    if discards > ADAPTIVE_DISCARD_LIMIT * samples:
        message = f'{AdaptiveWindowWarning.__name__}: {discards} of {samples} replicas rerun on a wider window'
        print(f"[HARNESS] {message}", file=sys.stderr)
        info['warnings'].append(message)
    return histogram, info


def cluster_stats_record(params: dict) -> ResultRecord:
    histogram, info = estimate_cluster_mass_distribution(params['samples'], params['seed'], params['variant'],
                                                         params['workers'], params['start_l'])
    record = ResultRecord('cluster-stats', params, params['seed'], payload=histogram.table())
    m0, m0_se = histogram.m0()
    m2, m2_se = histogram.m2()
    record.summary = {'m0': m0, 'm0_se': m0_se, 'm2': m2, 'm2_se': m2_se,
                      'mass_check': sum(k * histogram.c_hat(k) for k in histogram.counts),
                      'histogram': histogram.to_dict(), **{k: v for k, v in info.items() if k != 'warnings'}}
    record.warnings.extend(info['warnings'])
    _budget_warning(record, info['budget_exceeded'])
    return record


def compare_with_meanfield(histogram: MassHistogram, steady: SteadyStateSolution, kmax: int = 6) -> List[dict]:
    """Side-by-side concentrations with z-scores; |z| < 3 flags agreement."""
    rows = []
    for k in range(1, kmax + 1):
        mc, se = histogram.c_hat(k), histogram.c_se(k)
        mf = float(steady.c.c[k - 1])
        rows.append(_comparison_row(f'c_{k}', mf, mc, se))
    m0, m0_se = histogram.m0()
    m2, m2_se = histogram.m2()
    rows.append(_comparison_row('m0', steady.c.m0, m0, m0_se))
    rows.append(_comparison_row('m2', steady.c.m2, m2, m2_se))
    return rows


def _comparison_row(quantity: str, meanfield: float, estimate: float, se: float) -> dict:
    z = (estimate - meanfield) / se if se > 0 else float('inf') if estimate != meanfield else 0.0
    return {'quantity': quantity, 'meanfield': meanfield, 'monte_carlo': estimate, 'se': se, 'z': z,
            'near_equal': abs(z) < 3}


def compare_record(params: dict) -> ResultRecord:
    histogram, info = estimate_cluster_mass_distribution(params['samples'], params['seed'], params['variant'],
                                                         params['workers'], params['start_l'])
    steady = get_steady_state(params['K'], params['tol'])
    record = ResultRecord('compare', params, params['seed'],
                          payload=compare_with_meanfield(histogram, steady, params['kmax']))
    record.summary = {'g': steady.g, 'samples': histogram.total, 'discards': info['discards']}
    record.warnings.extend(info['warnings'])
    _budget_warning(record, info['budget_exceeded'])
    return record


# -- mixing ----------------------------------------------------------------------

def _pair_task(rng: RngStream, sites: Tuple[int, int], l: int, variant: str) -> Optional[Tuple[int, int]]:
    try:
        config = sample_invariant_window(l, variant, rng).config
    except BudgetExceeded:
        return None
    return config[sites[0]], config[sites[1]]


def mixing_estimate(k: int, n: int, samples: int, seed: int, variant: str = STEP1_PRIME,
                    workers: int = 1, n_boot: int = 200) -> dict:
    """Dependence between the occupancies of sites k and k+n under the invariant law."""
    l = max(abs(k), abs(k + n))
    results = run_replicas(partial(_pair_task, sites=(k, k + n), l=l, variant=variant),
                           samples, seed, workers, label=f'mixing n={n}')
    pairs = np.array([p for p in results if p is not None], dtype=int)
    estimate = dependence_statistic(pairs)
    generator = RngStream(seed, 'bootstrap').generator
    low, high = bootstrap_ci(pairs, dependence_statistic, generator, n_boot)
    shuffled = []
    for _ in range(20):
        permuted = pairs.copy()
        permuted[:, 1] = generator.permutation(permuted[:, 1])
        shuffled.append(dependence_statistic(permuted))
    return {'k': k, 'n': n, 'samples': len(pairs), 'estimate': estimate, 'ci_low': low, 'ci_high': high,
            'noise_floor': float(np.mean(shuffled)), 'budget_exceeded': samples - len(pairs)}


def mixing_record(params: dict) -> ResultRecord:
    gaps = params['n'] if isinstance(params['n'], list) else [params['n']]
    rows = [mixing_estimate(params['k'], n, params['samples'], params['seed'], params['variant'],
                            params['workers'], params['bootstrap']) for n in gaps]
    record = ResultRecord('mixing', params, params['seed'], payload=rows)
    estimates = [row['estimate'] for row in rows]
    record.summary = {'decreasing': all(b < a for a, b in zip(estimates, estimates[1:]))}
    _budget_warning(record, sum(row['budget_exceeded'] for row in rows))
    return record


# -- trend to equilibrium ------------------------------------------------------------

def _forward_window_task(rng: RngStream, phi: str, t: float, l: int, margin: int) -> str:
    radius = l + margin
    window = (-radius, radius)
    eta = initial_config(phi, window, rng.spawn('phi'))
    if t > 0:
        log = generate_event_log(window, Horizon.time(t), rng.spawn('marks'), colors=(Color.BLACK,))
        eta = run_avalanche(eta, log)
    return ''.join(str(eta[k]) for k in range(-l, l + 1))


def _window_task(rng: RngStream, l: int, variant: str) -> Optional[str]:
    try:
        config = sample_invariant_window(l, variant, rng).config
    except BudgetExceeded:
        return None
    return ''.join(str(v) for v in config.values())


def invariant_window_counts(l: int, samples: int, seed: int, variant: str = STEP1_PRIME,
                            workers: int = 1) -> Counter:
    patterns = run_replicas(partial(_window_task, l=l, variant=variant), samples, seed, workers,
                            label='invariant window')
    return Counter(p for p in patterns if p is not None)


def tte_estimate(phi: str, t: float, l: int, samples: int, seed: int, margin: int = 40,
                 workers: int = 1, reference: Optional[Counter] = None,
                 variant: str = STEP1_PRIME) -> dict:
    """TV distance between the forward window law at time t and the invariant one."""
    if phi not in PHI_SPECS:
        raise ValueError(f'unknown initial data {phi!r}, expected one of {PHI_SPECS}')
    if reference is None:
        reference = invariant_window_counts(l, samples, seed, variant, workers)
    forward = Counter(run_replicas(partial(_forward_window_task, phi=phi, t=t, l=l, margin=margin),
                                   samples, seed + 1, workers,
                                   label=f'tte t={t}'))
    return {'phi': phi, 't': t, 'l': l, 'samples': samples,
            'tv': tv_distance(forward, reference), 'noise_floor': tv_noise_floor(forward, reference)}


def tte_record(params: dict) -> ResultRecord:
    times = params['t'] if isinstance(params['t'], list) else [params['t']]
    reference = invariant_window_counts(params['l'], params['samples'], params['seed'], params['variant'],
                                        params['workers'])
    rows = [tte_estimate(params['phi'], t, params['l'], params['samples'], params['seed'], params['margin'],
                         params['workers'], reference, params['variant']) for t in times]
    record = ResultRecord('tte', params, params['seed'], payload=rows)
    tvs = [row['tv'] for row in rows]
    record.summary = {'decreasing': all(b < a for a, b in zip(tvs, tvs[1:]))}
    return record


# -- benchmark ---------------------------------------------------------------------

def _median(values: List[float]) -> float:
    return float(np.median(values)) if values else float('nan')


def bench_variants(l: int, samples: int, seed: int, max_events: Optional[int] = None) -> dict:
    """Median wall time and terminal domain width of both backward rule sets.

    Replicas that exhaust the event budget are skipped and counted under
    ``budget_exceeded``.
    """
    report = {}
    outputs = {}
    for variant in VARIANTS:
        durations, widths, events = [], [], []
        patterns = Counter()
        exhausted = 0
        for replica in range(samples):
            rng = RngStream(seed, replica)
            started = time.perf_counter()
            try:
                result = sample_invariant_window(l, variant, rng, max_events)
            except BudgetExceeded:
                exhausted += 1
                continue
            durations.append(time.perf_counter() - started)
            widths.append(result.domain_width)
            events.append(result.T)
            patterns[result.config.to_text()] += 1
        outputs[variant] = patterns
        report[variant] = {'median_time': _median(durations),
                           'median_width': _median(widths),
                           'mean_events': float(np.mean(events)) if events else float('nan'),
                           'budget_exceeded': exhausted}
    report['speedup'] = report[STEP1]['median_time'] / max(report[STEP1_PRIME]['median_time'], 1e-12)
    report['narrower'] = report[STEP1_PRIME]['median_width'] < report[STEP1]['median_width']
    _, report['law_pvalue'] = chi_square_two_sample(outputs[STEP1], outputs[STEP1_PRIME])
    return report


def bench_record(params: dict) -> ResultRecord:
    report = bench_variants(params['l'], params['samples'], params['seed'])
    rows = [{'variant': v, **report[v]} for v in VARIANTS]
    record = ResultRecord('bench', params, params['seed'], payload=rows)
    record.summary = {k: report[k] for k in ('speedup', 'narrower', 'law_pvalue')}
    _budget_warning(record, sum(report[v]['budget_exceeded'] for v in VARIANTS))
    return record


def _budget_warning(record: ResultRecord, count: int):
    if count:
        message = f'{BudgetExceeded.__name__}: {count} replicas hit the event budget'
        print(f"[HARNESS] {message}", file=sys.stderr)
        record.warnings.append(message)


RUNNERS: Dict[str, Callable[[dict], ResultRecord]] = {
    'sample': sample_record,
    'forward': forward_record,
    'contour': contour_record,
    'y1': y1_record,
    'meanfield': meanfield_record,
    'cluster-stats': cluster_stats_record,
    'compare': compare_record,
    'mixing': mixing_record,
    'tte': tte_record,
    'bench': bench_record,
}


def execute(subcommand: str, parameters: Optional[dict] = None) -> ResultRecord:
    """Run one subcommand with defaults filled in; wall time is stamped on the record."""
    params = with_defaults(subcommand, parameters)
    started = time.perf_counter()
    record = RUNNERS[subcommand](params)
    record.wall_time = time.perf_counter() - started
    return record
