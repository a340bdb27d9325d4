"""Command-line entry point: one subcommand per harness operation, plus ``serve``."""
import argparse
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()

from avalanche import replicas
from avalanche.errors import AvalancheError
from avalanche.experiments import CONTOUR_STATS, execute
from avalanche.models.forward import PHI_SPECS
from avalanche.models.sampler import VARIANTS
from avalanche.results import dumps, emit

DEFAULT_SEED = int(os.getenv('AVALANCHE_SEED', 0))
CSV_BY_DEFAULT = ('contour', 'y1', 'meanfield')

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_WARNINGS = 3


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=DEFAULT_SEED)
    common.add_argument('--out', default=None, help='output file (stdout when omitted)')
    common.add_argument('--workers', type=int, default=replicas.DEFAULT_WORKERS)
    common.add_argument('--format', choices=('jsonl', 'csv'), default=None)
    common.add_argument('--strict', action='store_true', help='exit 3 when the run produced warnings')
    common.add_argument('--quiet', action='store_true', help='no progress lines on stderr')
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='avalanche', description='Avalanche particle system toolkit')
    sub = parser.add_subparsers(dest='subcommand', required=True)
    common = _common()

    p = sub.add_parser('sample', parents=[common], help='exact draws of the invariant law on [-l, l]')
    p.add_argument('--l', type=int)
    p.add_argument('--samples', type=int)
    p.add_argument('--variant', choices=VARIANTS)

    p = sub.add_parser('forward', parents=[common], help='coupled Bernoulli-avalanche trajectory')
    p.add_argument('--radius', type=int)
    p.add_argument('--events', type=int)
    p.add_argument('--time', type=float, help='continuous-time horizon (overrides --events)')
    p.add_argument('--phi', choices=PHI_SPECS)

    p = sub.add_parser('contour', parents=[common], help='meeting time and excursion histograms')
    p.add_argument('--replicas', type=int)
    p.add_argument('--site', type=int)
    p.add_argument('--stat', choices=CONTOUR_STATS)
    p.add_argument('--bin', type=float, help='bin width for rho_time')

    p = sub.add_parser('y1', parents=[common], help='first right-jump increment statistics')
    p.add_argument('--samples', type=int)

    p = sub.add_parser('meanfield', parents=[common], help='mean-field steady state and ODE check')
    p.add_argument('--K', type=int)
    p.add_argument('--tol', type=float)
    p.add_argument('--ode-T', dest='ode_T', type=float)
    p.add_argument('--ode-K', dest='ode_K', type=int)
    p.add_argument('--h', type=float)

    for name, help_text in (('cluster-stats', 'mass of the particle at the edge (0,1)'),
                            ('compare', 'Monte-Carlo concentrations against the mean field')):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument('--samples', type=int)
        p.add_argument('--variant', choices=VARIANTS)
        p.add_argument('--start-l', dest='start_l', type=int)
        if name == 'compare':
            p.add_argument('--K', type=int)
            p.add_argument('--tol', type=float)
            p.add_argument('--kmax', type=int)

    p = sub.add_parser('mixing', parents=[common], help='decay of two-site dependence')
    p.add_argument('--k', type=int)
    p.add_argument('--n', type=int, nargs='+')
    p.add_argument('--samples', type=int)
    p.add_argument('--variant', choices=VARIANTS)
    p.add_argument('--bootstrap', type=int)

    p = sub.add_parser('tte', parents=[common], help='trend to equilibrium in total variation')
    p.add_argument('--phi', choices=PHI_SPECS)
    p.add_argument('--t', type=float, nargs='+')
    p.add_argument('--l', type=int)
    p.add_argument('--samples', type=int)
    p.add_argument('--margin', type=int)
    p.add_argument('--variant', choices=VARIANTS)

    p = sub.add_parser('bench', parents=[common], help='wall time of the two backward rule sets')
    p.add_argument('--l', type=int)
    p.add_argument('--samples', type=int)

    p = sub.add_parser('serve', help='start the HTTP API')
    p.add_argument('--port', type=int, default=None)
    return parser


OUTPUT_FLAGS = ('subcommand', 'out', 'format', 'strict', 'quiet')


def cli_main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK

    if args.subcommand == 'serve':
        from avalanche.app import PORT, serve
        serve(args.port or PORT)
        return EXIT_OK

    if args.quiet:
        replicas.VERBOSE = 0
    parameters = {k: v for k, v in vars(args).items() if k not in OUTPUT_FLAGS}
    fmt = args.format or ('csv' if args.subcommand in CSV_BY_DEFAULT else 'jsonl')

    try:
        record = execute(args.subcommand, parameters)
    except AvalancheError as e:
        print(f"[ERROR] {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR
    except ValueError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return EXIT_USAGE

    emit(record, args.out, fmt)
    if args.subcommand == 'meanfield' and args.out not in (None, '-'):
        with open(f'{args.out}.summary.json', 'w') as f:
            f.write(dumps(record.summary) + '\n')
    if not args.quiet:
        print(f"[INFO] {args.subcommand} done in {record.wall_time:.2f}s", file=sys.stderr)
    for warning in record.warnings:
        print(f"[WARN] {warning}", file=sys.stderr)
    if args.strict and record.warnings:
        return EXIT_WARNINGS
    return EXIT_OK


def main():
    sys.exit(cli_main())


if __name__ == '__main__':
    main()
