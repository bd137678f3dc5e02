"""
aafib command line
Subcommands: solve, eval, bench, gen. Flags override values from an
optional --config YAML file, which override the built-in defaults.
"""

import argparse
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import config
from .anderson import AaParams
from .bench import SOLVERS, BenchConfig, BenchRunner, run_solver
from .errors import AafibError, EvaluationError
from .parser import save_pomdp
from .policy import BeliefMode, EvalConfig, evaluate
from .policy_file import load_policy, save_policy
from .problems import load_problem
from .sim import ResamplePolicy, SimParams

logger = logging.getLogger(__name__)

DEFAULTS: Dict[str, Any] = {
    'problem': 'tiger',
    'solver': 'aa-fib',
    'tol': 1e-6,
    'max_iter': 10000,
    'm_max': 4,
    'eta': 1e-3,
    'safeguard_d': 1e6,
    'safeguard_phi': 1e-6,
    'safeguard_ns': 5,
    'sample_size': 20,
    'resample': ResamplePolicy.FRESH.value,
    'seed': 0,
    'seeds': 100,
    'episodes': 100,
    'horizon': 100,
    'mode': 'both',
    'policy': None,
    'out': None,
    'workers': config.WORKERS,
}

BENCH_DEFAULTS = {'solver': ['fib', 'aa-fib'], 'm_max': [4], 'sample_size': [20]}


def _add_solver_flags(parser: argparse.ArgumentParser, sweep: bool):
    nargs = '+' if sweep else None
    parser.add_argument('--solver', choices=SOLVERS, nargs=nargs, help="Solver(s) to run")
    parser.add_argument('--tol', type=float, help="Sup-norm residual stopping threshold")
    parser.add_argument('--max-iter', type=int, help="Iteration cap")
    parser.add_argument('--m-max', type=int, nargs=nargs, help="Anderson memory size(s)")
    parser.add_argument('--eta', type=float, help="Regularization scale")
    parser.add_argument('--safeguard-d', type=float, help="Safeguard factor D")
    parser.add_argument('--safeguard-phi', type=float, help="Safeguard exponent phi")
    parser.add_argument('--safeguard-ns', type=int, help="Safeguard interval N_s")
    parser.add_argument('--sample-size', type=int, nargs=nargs, help="Samples per (s, a) for aa-fib-sim")
    parser.add_argument('--resample', choices=[p.value for p in ResamplePolicy],
                        help="Fresh batches every application, or one frozen batch")


def _add_eval_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--episodes', type=int, help="Episodes per evaluation")
    parser.add_argument('--horizon', type=int, help="Maximum steps per episode")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--problem', help="tiger, grid_nav[:W:H[:SLIP:NOISE[:SEED]]] or a .pomdp path")
    common.add_argument('--config', help="YAML run file; flags override its values")
    common.add_argument('--out', help=f"Output location (default from AAFIB_OUTPUT_DIR, {config.OUTPUT_DIR})")
    common.add_argument('--log-level', help="DEBUG, INFO, WARNING, ...")

    parser = argparse.ArgumentParser(
        prog='aafib',
        description="Anderson-accelerated fast informed bound POMDP solver toolkit"
    )
    commands = parser.add_subparsers(dest='command', required=True)

    solve = commands.add_parser('solve', parents=[common], help="Solve a problem, write policy and trace")
    _add_solver_flags(solve, sweep=False)
    solve.add_argument('--seed', type=int, help="Seed for the initial alpha (and samples)")

    ev = commands.add_parser('eval', parents=[common], help="Evaluate a saved policy")
    ev.add_argument('--policy', required=True, help="Policy JSON written by solve")
    ev.add_argument('--mode', choices=['fixed', 'random', 'both'], help="Initial-belief mode")
    ev.add_argument('--seed', type=int, help="Evaluation seed")
    _add_eval_flags(ev)

    bench = commands.add_parser('bench', parents=[common], help="Sweep solvers, memory and sample sizes")
    _add_solver_flags(bench, sweep=True)
    _add_eval_flags(bench)
    bench.add_argument('--seeds', type=int, help="Repeated runs with seeds 0..N-1")
    bench.add_argument('--workers', type=int, help="Worker processes (default AAFIB_WORKERS)")

    commands.add_parser('gen', parents=[common], help="Write a built-in or generated problem as .pomdp")
    return parser


def resolve_settings(args: argparse.Namespace) -> Dict[str, Any]:
    defaults = dict(DEFAULTS)
    if args.command == 'bench':
        defaults.update(BENCH_DEFAULTS)
    file_values = config.load_run_file(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items()
             if k not in ('command', 'config', 'log_level')}
    return config.merge_settings(defaults, file_values, flags)


def _aa_params(settings: Dict[str, Any]) -> AaParams:
    return AaParams(tol=settings['tol'], max_iter=settings['max_iter'], seed=settings['seed'],
                    m_max=settings['m_max'], eta=settings['eta'], safeguard_d=settings['safeguard_d'],
                    safeguard_phi=settings['safeguard_phi'], safeguard_ns=settings['safeguard_ns'])


def _as_list(value) -> List:
    return list(value) if isinstance(value, (list, tuple)) else [value]


def cmd_solve(settings: Dict[str, Any]) -> int:
    model = load_problem(settings['problem'])
    solver = settings['solver']
    params = _aa_params(settings)
    sim_params = SimParams(sample_size=settings['sample_size'], seed=settings['seed'],
                           resample=settings['resample'])

    logger.info(f"🚀 Solving '{settings['problem']}' with {solver}")
    result = run_solver(model, solver, params, sim_params)

    out_dir = Path(settings['out'] or config.OUTPUT_DIR)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{solver}_seed{settings['seed']}"
    policy_file = save_policy(out_dir / f"{stem}_policy.json", model, result, solver)
    trace_file = out_dir / f"{stem}_trace.csv"
    result.trace_frame().to_csv(trace_file, index=False)

    run_file = out_dir / f"{stem}_run.json"
    metadata = {
        'problem': settings['problem'],
        'solver': solver,
        'params': {k: settings[k] for k in ('tol', 'max_iter', 'seed', 'm_max', 'eta', 'safeguard_d',
                                            'safeguard_phi', 'safeguard_ns', 'sample_size', 'resample')},
        'num_states': model.num_states,
        'num_actions': model.num_actions,
        'num_observations': model.num_observations,
        'discount': model.discount,
        'converged': result.converged,
        'iterations': result.iterations,
        'final_residual': result.trace[-1].residual_inf,
        't_total': result.t_total,
        't_aa': result.t_aa,
        'finished_at': datetime.now().isoformat(),
    }
    with open(run_file, 'w') as f:
        json.dump(metadata, f, indent=2)

    status = "✅ converged" if result.converged else "⚠️ did not converge"
    logger.info(f"{status} after {result.iterations} iterations ({result.t_total:.3f}s, t_AA {result.t_aa:.3f}s)")
    logger.info(f"📁 Policy: {policy_file}")
    logger.info(f"📁 Trace: {trace_file}")
    return 0


def cmd_eval(settings: Dict[str, Any]) -> int:
    model = load_problem(settings['problem'])
    policy = load_policy(settings['policy'])
    policy.check_model(model)
    alpha = policy.alpha_matrix()

    modes = ['fixed', 'random'] if settings['mode'] == 'both' else [settings['mode']]
    report = {}
    for mode in modes:
        if mode == 'fixed' and model.start_belief is None:
            if settings['mode'] == 'fixed':
                raise EvaluationError("fixed-belief evaluation needs a problem with a start belief")
            logger.warning("⚠️ Problem has no start belief, skipping fixed-belief evaluation")
            continue
        eval_config = EvalConfig(num_episodes=settings['episodes'], max_steps=settings['horizon'],
                                 initial_belief=BeliefMode(mode), seed=settings['seed'])
        report[mode] = evaluate(model, alpha, eval_config).to_dict()

    print(json.dumps(report, indent=2))
    return 0


def cmd_bench(settings: Dict[str, Any]) -> int:
    bench_config = BenchConfig(
        problem=settings['problem'],
        solvers=_as_list(settings['solver']),
        m_max=_as_list(settings['m_max']),
        sample_size=_as_list(settings['sample_size']),
        seeds=settings['seeds'],
        tol=settings['tol'],
        max_iter=settings['max_iter'],
        eta=settings['eta'],
        safeguard_d=settings['safeguard_d'],
        safeguard_phi=settings['safeguard_phi'],
        safeguard_ns=settings['safeguard_ns'],
        resample=settings['resample'],
        episodes=settings['episodes'],
        horizon=settings['horizon'],
        workers=settings['workers'],
        out=Path(settings['out'] or config.OUTPUT_DIR),
    )
    BenchRunner(bench_config).run()
    return 0


def cmd_gen(settings: Dict[str, Any]) -> int:
    model = load_problem(settings['problem'])
    default_name = settings['problem'].replace(':', '_') + '.pomdp'
    out = Path(settings['out']) if settings['out'] else config.OUTPUT_DIR / default_name
    save_pomdp(out, model)
    logger.info(f"📁 Wrote {model.num_states}-state problem to {out}")
    return 0


COMMANDS = {
    'solve': cmd_solve,
    'eval': cmd_eval,
    'bench': cmd_bench,
    'gen': cmd_gen,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    config.configure_logging(args.log_level)

    try:
        settings = resolve_settings(args)
        return COMMANDS[args.command](settings)
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return 130
    except (AafibError, FileNotFoundError, ValueError) as e:
        logger.error(f"❌ {e}")
        return 1
