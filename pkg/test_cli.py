import json

import numpy as np
import pandas as pd
import pytest

from aafib import config
from aafib.cli import build_parser, main, resolve_settings
from aafib.fib import TRACE_COLUMNS
from aafib.parser import load_pomdp, save_pomdp


def solve(tmp_path, *extra):
    return main(['solve', '--problem', 'tiger', '--out', str(tmp_path), *extra])


def test_solve_writes_policy_trace_and_run_file(tmp_path):
    assert solve(tmp_path, '--solver', 'fib', '--tol', '1e-6') == 0

    policy = json.loads((tmp_path / 'fib_seed0_policy.json').read_text())
    assert (policy['num_states'], policy['num_actions']) == (2, 3)
    assert policy['converged'] is True

    trace = pd.read_csv(tmp_path / 'fib_seed0_trace.csv')
    assert list(trace.columns) == TRACE_COLUMNS
    assert set(trace['step_kind']) == {'FPI'}
    assert np.all(np.diff(trace['residual_inf'].to_numpy()[1:]) < 0)
    assert trace['residual_inf'].iloc[-1] <= 1e-6

    run = json.loads((tmp_path / 'fib_seed0_run.json').read_text())
    assert run['iterations'] == len(trace)
    assert run['params']['tol'] == 1e-6


def test_aa_trace_has_both_step_kinds(tmp_path):
    assert solve(tmp_path, '--solver', 'aa-fib', '--m-max', '4') == 0
    trace = pd.read_csv(tmp_path / 'aa-fib_seed0_trace.csv')
    assert set(trace['step_kind']) == {'AA', 'FPI'}
    assert (trace.loc[trace['step_kind'] == 'AA', 'weight_seconds'] > 0).all()


def test_sim_solver_runs_from_the_command_line(tmp_path):
    assert solve(tmp_path, '--solver', 'aa-fib-sim', '--sample-size', '5', '--resample', 'frozen',
                 '--seed', '2') == 0
    assert (tmp_path / 'aa-fib-sim_seed2_policy.json').exists()


def test_missing_problem_file_fails_with_its_path(tmp_path, capsys):
    missing = tmp_path / 'missing.pomdp'
    code = main(['solve', '--problem', str(missing), '--out', str(tmp_path)])
    assert code == 1
    assert 'missing.pomdp' in capsys.readouterr().out


def test_malformed_problem_file_fails(tmp_path, capsys):
    bad = tmp_path / 'bad.pomdp'
    bad.write_text("discount: 0.9\nvalues: reward\nstates: 2\nactions: 1\nobservations: 1\nT: 0 identity\n")
    assert main(['solve', '--problem', str(bad), '--out', str(tmp_path)]) == 1
    assert 'never specified' in capsys.readouterr().out


def test_eval_prints_both_modes(tmp_path, capsys):
    solve(tmp_path, '--solver', 'fib')
    capsys.readouterr()

    code = main(['eval', '--problem', 'tiger', '--policy', str(tmp_path / 'fib_seed0_policy.json'),
                 '--episodes', '50', '--horizon', '30', '--log-level', 'ERROR'])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {'fixed', 'random'}
    for stats in report.values():
        assert np.isfinite(stats['mean'])
        assert stats['std'] > 0
        assert stats['episodes'] == 50
        assert stats['seed'] == 0


def test_eval_zero_reward_problem(tmp_path, capsys, zero_reward_model):
    problem = save_pomdp(tmp_path / 'flat.pomdp', zero_reward_model)
    main(['solve', '--problem', str(problem), '--solver', 'fib', '--out', str(tmp_path)])
    capsys.readouterr()

    main(['eval', '--problem', str(problem), '--policy', str(tmp_path / 'fib_seed0_policy.json'),
          '--mode', 'fixed', '--episodes', '5', '--log-level', 'ERROR'])
    report = json.loads(capsys.readouterr().out)
    assert report['fixed']['mean'] == 0.0
    assert report['fixed']['std'] == 0.0


def test_eval_rejects_policy_for_another_model(tmp_path, capsys):
    solve(tmp_path, '--solver', 'fib')
    code = main(['eval', '--problem', 'grid_nav:2:2', '--policy', str(tmp_path / 'fib_seed0_policy.json')])
    assert code == 1
    assert 'policy is for 2 states x 3 actions' in capsys.readouterr().out


def test_eval_missing_policy_file(tmp_path):
    assert main(['eval', '--problem', 'tiger', '--policy', str(tmp_path / 'none.json')]) == 1


def test_bench_writes_cells_and_summary(tmp_path):
    code = main(['bench', '--problem', 'tiger', '--solver', 'fib', 'aa-fib', '--m-max', '2', '4',
                 '--seeds', '2', '--episodes', '5', '--horizon', '10', '--out', str(tmp_path)])
    assert code == 0

    cells = pd.read_csv(tmp_path / 'cells.csv')
    summary = pd.read_csv(tmp_path / 'summary.csv')
    assert len(cells) == 2 + 2 * 2
    assert len(summary) == 3
    assert list(summary['runs']) == [2, 2, 2]
    for column in ('iterations_mean', 'iterations_std', 't_aa_mean', 'reward_fixed_mean', 'error_pct_mean'):
        assert column in summary.columns
    assert summary['converged_frac'].eq(1.0).all()
    assert summary['reward_fixed_mean'].notna().all()


def test_single_seed_bench_has_zero_spread(tmp_path):
    main(['bench', '--problem', 'tiger', '--solver', 'aa-fib', '--seeds', '1', '--episodes', '3',
          '--horizon', '5', '--out', str(tmp_path)])
    summary = pd.read_csv(tmp_path / 'summary.csv')
    assert len(summary) == 1
    for column in ('iterations_std', 't_total_std', 'reward_rand_std', 'error_pct_std'):
        assert summary[column].iloc[0] == 0.0


def test_gen_writes_a_loadable_file(tmp_path):
    out = tmp_path / 'grid.pomdp'
    assert main(['gen', '--problem', 'grid_nav:3:3:0.1:0.1:2', '--out', str(out)]) == 0
    model = load_pomdp(out)
    assert model.num_states == 9
    assert model.action_names == ('north', 'east', 'south', 'west', 'declare')


def test_gen_defaults_to_the_output_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(config, 'OUTPUT_DIR', tmp_path)
    assert main(['gen', '--problem', 'tiger']) == 0
    assert load_pomdp(tmp_path / 'tiger.pomdp').num_actions == 3


def test_yaml_config_is_overridden_by_flags(tmp_path):
    run_file = tmp_path / 'run.yaml'
    run_file.write_text("solver: fib\ntol: 0.0001\nseed: 3\nmax-iter: 500\n")

    assert solve(tmp_path, '--config', str(run_file), '--seed', '5') == 0

    run = json.loads((tmp_path / 'fib_seed5_run.json').read_text())
    assert run['solver'] == 'fib'
    assert run['params']['tol'] == 0.0001
    assert run['params']['max_iter'] == 500
    assert run['params']['seed'] == 5


def test_missing_config_file(tmp_path, capsys):
    assert solve(tmp_path, '--config', str(tmp_path / 'nope.yaml')) == 1
    assert 'Config file not found' in capsys.readouterr().out


def test_settings_fall_back_to_defaults():
    args = build_parser().parse_args(['bench', '--problem', 'tiger'])
    settings = resolve_settings(args)
    assert settings['solver'] == ['fib', 'aa-fib']
    assert settings['m_max'] == [4]
    assert settings['tol'] == 1e-6

    solve_settings = resolve_settings(build_parser().parse_args(['solve']))
    assert solve_settings['solver'] == 'aa-fib'
    assert solve_settings['m_max'] == 4


def test_subcommand_is_required():
    with pytest.raises(SystemExit):
        main([])


@pytest.mark.parametrize("solver, extra", [
    ('aa-fib', []),
    ('aa-fib-sim', ['--sample-size', '6', '--max-iter', '40']),
])
def test_same_settings_give_identical_traces(tmp_path, solver, extra):
    timing = ['step_seconds', 'weight_seconds']
    traces = []
    for run in ('first', 'second'):
        out = tmp_path / run
        assert main(['solve', '--problem', 'tiger', '--solver', solver, '--seed', '3', '--out', str(out), *extra]) == 0
        traces.append(pd.read_csv(out / f'{solver}_seed3_trace.csv').drop(columns=timing))
    pd.testing.assert_frame_equal(traces[0], traces[1])


def test_memory_sweep_gives_one_row_per_memory_size(tmp_path):
    main(['bench', '--problem', 'tiger', '--solver', 'fib', 'aa-fib', '--m-max', '4', '8', '12', '16',
          '--seeds', '1', '--episodes', '0', '--out', str(tmp_path)])
    summary = pd.read_csv(tmp_path / 'summary.csv')
    assert len(summary) == 5
    assert (summary['solver'] == 'fib').sum() == 1
    assert sorted(summary.loc[summary['solver'] == 'aa-fib', 'm_max']) == [4, 8, 12, 16]
    assert summary['reward_rand_mean'].isna().all()


def test_sample_size_sweep_gives_one_row_per_batch_size(tmp_path):
    main(['bench', '--problem', 'tiger', '--solver', 'aa-fib-sim', '--sample-size', '2', '4', '6',
          '--resample', 'frozen', '--max-iter', '200', '--seeds', '2', '--episodes', '0', '--out', str(tmp_path)])
    summary = pd.read_csv(tmp_path / 'summary.csv')
    assert list(summary['sample_size']) == [2, 4, 6]
    assert list(summary['runs']) == [2, 2, 2]


def test_bench_defaults_to_a_hundred_seeds():
    settings = resolve_settings(build_parser().parse_args(['bench']))
    assert settings['seeds'] == 100
