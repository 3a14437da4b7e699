"""
Command-line entry point:

    hjbnet {validate|centralized|distributed|compare|oracle-lq}
           --config <path> [--out <dir>] [--seed <n>] [--K <n>] [--S <n>]
           [--time-steps <n>] [--centers <n>] [--workers <n>] [-v]

Exit codes: 0 success, 1 unexpected failure or failed oracle check,
2 configuration error, 3 numerical failure, 4 information-structure
violation.
"""
import argparse
import json
import logging
import os
import sys

from hjbnet.config import load_config
from hjbnet.cost import CostError
from hjbnet.engine import Engine
from hjbnet.errors import (
    ConfigError, InformationStructureViolation, ModelError, NumericalError,
)
from hjbnet.graph import GraphError


log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INFORMATION = 4

COMMANDS = ('validate', 'centralized', 'distributed', 'compare', 'oracle-lq')


def exit_code(exc):
    """
    Map an exception escaping a command to the process exit code.
    """
    if isinstance(exc, InformationStructureViolation):
        return EXIT_INFORMATION
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, (ConfigError, ModelError, GraphError, CostError)):
        return EXIT_CONFIG
    return EXIT_FAILURE


def _parse_args(argv=None):
    parser = argparse.ArgumentParser(
        prog='hjbnet',
        description='Centralized and distributed HJB value approximation '
                    'for networked multi-agent systems.',
    )
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', required=True,
                        help='scenario JSON file')
    parser.add_argument('--out', help='output directory')
    parser.add_argument('--seed', type=int, help='center sampling seed')
    parser.add_argument('--K', type=int, help='value-iteration sweeps')
    parser.add_argument('--S', type=int, help='consensus rounds per sweep')
    parser.add_argument('--time-steps', type=int, dest='time_steps',
                        help='time grid nodes')
    parser.add_argument('--centers', type=int, help='number of RBF centers')
    parser.add_argument('--workers', type=int,
                        help='threads stepping the agents of a round')
    parser.add_argument('-v', '--verbose', action='count', default=0)
    return parser.parse_args(argv)


def _setup_logging(verbose):
    if verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = os.environ.get('HJBNET_LOG', 'WARNING').upper()
    logging.basicConfig(
        level=level,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )


def run_command(args):
    overrides = {
        'output': args.out,
        'rbf.seed': args.seed,
        'rbf.count': args.centers,
        'iterations.K': args.K,
        'iterations.S': args.S,
        'time_steps': args.time_steps,
        'workers': args.workers,
    }
    config = load_config(args.config, overrides)
    engine = Engine(config)
    if args.command == 'validate':
        result = engine.validate()
    elif args.command == 'centralized':
        result = engine.centralized()
    elif args.command == 'distributed':
        result = engine.distributed()
    elif args.command == 'compare':
        result = engine.compare()
    else:
        result = engine.oracle_lq()
    print(json.dumps(result, indent=2, sort_keys=True))
    if args.command == 'oracle-lq' and not result['passed']:
        return EXIT_FAILURE
    return EXIT_OK


def main(argv=None):
    args = _parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return run_command(args)
    except Exception as exc:
        code = exit_code(exc)
        if code == EXIT_FAILURE:
            log.exception('%s failed', args.command)
        else:
            log.error('%s failed: %s', args.command, exc)
        return code


if __name__ == '__main__':
    sys.exit(main())
