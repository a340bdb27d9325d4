from avalanche.models.lattice import (
    Color, Config, EnvPolicy, Mark, RngStream, SiteState, connected_component, enumerate_configs,
    particle_mass_at_edge, sample_bernoulli_config, sample_geometric_half,
)
from avalanche.models.forward import (
    EventLog, Horizon, evolve_bernoulli, generate_event_log, run_avalanche, run_coupled,
    run_coupled_bernoulli_pair,
)
from avalanche.models.contour import (
    ContourEvent, ContourState, contour_step, init_left_contour, init_right_contour, run_right_contours,
    run_until_meet, sample_Y1,
)
from avalanche.models.sampler import (
    BoxState, SamplerTrace, run_backward, sample_invariant_window, step0_init, step1_apply_event,
    step1prime_apply_event, step2_reconstruct,
)
from avalanche.models.meanfield import (
    MeanFieldVector, SteadyStateSolution, compute_a, get_steady_state, integrate, ode_rhs, solve_g,
    steady_state,
)

__all__ = [
    'Color', 'Config', 'EnvPolicy', 'Mark', 'RngStream', 'SiteState', 'connected_component',
    'enumerate_configs', 'particle_mass_at_edge', 'sample_bernoulli_config', 'sample_geometric_half',
    'EventLog', 'Horizon', 'evolve_bernoulli', 'generate_event_log', 'run_avalanche', 'run_coupled',
    'run_coupled_bernoulli_pair',
    'ContourEvent', 'ContourState', 'contour_step', 'init_left_contour', 'init_right_contour',
    'run_right_contours', 'run_until_meet', 'sample_Y1',
    'BoxState', 'SamplerTrace', 'run_backward', 'sample_invariant_window', 'step0_init',
    'step1_apply_event', 'step1prime_apply_event', 'step2_reconstruct',
    'MeanFieldVector', 'SteadyStateSolution', 'compute_a', 'get_steady_state', 'integrate', 'ode_rhs',
    'solve_g', 'steady_state',
]
