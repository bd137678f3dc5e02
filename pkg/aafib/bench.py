"""
Benchmark sweeps
Runs every (solver, memory, sample size, seed) cell against one problem,
evaluates the resulting policies, and aggregates mean / std per cell
group into summary.csv (raw rows go to cells.csv).
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from .anderson import AaParams, aa_fib_solve
from .config import OUTPUT_DIR
from .fib import SolveParams, SolveResult, fib_solve, qmdp_solve
from .model import AlphaMatrix, PomdpModel
from .policy import BeliefMode, EvalConfig, evaluate
from .problems import load_problem
from .sim import ModelSimulator, SimParams, sim_aa_fib_solve

logger = logging.getLogger(__name__)

SOLVERS = ('fib', 'aa-fib', 'aa-fib-sim', 'qmdp')
REFERENCE_TOL = 1e-10
METRICS = ['iterations', 't_total', 't_aa', 'reward_rand', 'reward_fixed', 'error_pct']
GROUP_KEYS = ['solver', 'm_max', 'sample_size']


@dataclass(frozen=True)
class Cell:
    solver: str
    seed: int
    m_max: Optional[int] = None
    sample_size: Optional[int] = None


@dataclass
class BenchConfig:
    problem: str = 'tiger'
    solvers: List[str] = field(default_factory=lambda: ['fib', 'aa-fib'])
    m_max: List[int] = field(default_factory=lambda: [4])
    sample_size: List[int] = field(default_factory=lambda: [20])
    seeds: int = 100
    tol: float = 1e-6
    max_iter: int = 10000
    eta: float = 1e-3
    safeguard_d: float = 1e6
    safeguard_phi: float = 1e-6
    safeguard_ns: int = 5
    resample: str = 'fresh'
    episodes: int = 100
    horizon: int = 100
    workers: int = 1
    out: Path = OUTPUT_DIR

    def __post_init__(self):
        unknown = [s for s in self.solvers if s not in SOLVERS]
        if unknown:
            raise ValueError(f"unknown solver(s) {unknown}, expected one of {list(SOLVERS)}")
        if self.seeds < 1:
            raise ValueError(f"seeds must be at least 1, got {self.seeds}")
        if self.episodes < 0:
            raise ValueError(f"episodes must be non-negative, got {self.episodes}")
        self.out = Path(self.out)

    def aa_params(self, m_max: int, seed: int) -> AaParams:
        return AaParams(tol=self.tol, max_iter=self.max_iter, seed=seed, m_max=m_max, eta=self.eta,
                        safeguard_d=self.safeguard_d, safeguard_phi=self.safeguard_phi,
                        safeguard_ns=self.safeguard_ns)

    def cells(self) -> List[Cell]:
        """fib / qmdp ignore memory and sample size; aa-fib varies memory; aa-fib-sim varies both"""
        cells = []
        for solver in self.solvers:
            for seed in range(self.seeds):
                if solver in ('fib', 'qmdp'):
                    cells.append(Cell(solver, seed))
                elif solver == 'aa-fib':
                    cells.extend(Cell(solver, seed, m) for m in self.m_max)
                else:
                    cells.extend(Cell(solver, seed, m, j) for m in self.m_max for j in self.sample_size)
        return cells


def run_solver(model: PomdpModel, solver: str, params: AaParams,
               sim_params: Optional[SimParams] = None) -> SolveResult:
    """Dispatch on the solver name; AaParams doubles as SolveParams for fib / qmdp"""
    if solver == 'fib':
        return fib_solve(model, params)
    if solver == 'qmdp':
        return qmdp_solve(model, params)
    if solver == 'aa-fib':
        return aa_fib_solve(model, params)
    if solver == 'aa-fib-sim':
        return sim_aa_fib_solve(ModelSimulator(model), params, sim_params or SimParams(seed=params.seed))
    raise ValueError(f"unknown solver '{solver}', expected one of {list(SOLVERS)}")


def error_pct(alpha: AlphaMatrix, reference: AlphaMatrix) -> float:
    """100 * ||alpha - alpha*||_inf / ||alpha*||_inf"""
    scale = float(np.max(np.abs(reference.data)))
    return 100.0 * float(np.max(np.abs(alpha.data - reference.data))) / scale if scale > 0 else math.nan


def run_cell(model: PomdpModel, reference: AlphaMatrix, config: BenchConfig, cell: Cell) -> Dict:
    params = config.aa_params(cell.m_max or 0, cell.seed)
    sim_params = None
    if cell.sample_size is not None:
        sim_params = SimParams(sample_size=cell.sample_size, seed=cell.seed, resample=config.resample)
    result = run_solver(model, cell.solver, params, sim_params)

    row = {
        **asdict(cell),
        'iterations': result.iterations,
        't_total': result.t_total,
        't_aa': result.t_aa,
        'converged': result.converged,
        'error_pct': error_pct(result.alpha, reference),
        'reward_rand': math.nan,
        'reward_fixed': math.nan,
    }
    if config.episodes > 0:
        eval_kwargs = dict(num_episodes=config.episodes, max_steps=config.horizon, seed=cell.seed)
        row['reward_rand'] = evaluate(model, result.alpha, EvalConfig(initial_belief=BeliefMode.RANDOM,
                                                                      **eval_kwargs)).mean
        if model.start_belief is not None:
            row['reward_fixed'] = evaluate(model, result.alpha, EvalConfig(initial_belief=BeliefMode.FIXED,
                                                                           **eval_kwargs)).mean
    return row


def aggregate(cells: pd.DataFrame) -> pd.DataFrame:
    """One row per (solver, m_max, sample_size); std is the population std (ddof=0)"""
    grouped = cells.groupby(GROUP_KEYS, dropna=False, sort=False)
    means = grouped[METRICS].mean().add_suffix('_mean')
    stds = grouped[METRICS].std(ddof=0).add_suffix('_std')
    summary = pd.concat([grouped.size().rename('runs'), means, stds,
                         grouped['converged'].mean().rename('converged_frac')], axis=1)

    ordered = ['runs']
    for metric in METRICS:
        ordered += [f"{metric}_mean", f"{metric}_std"]
    return summary[ordered + ['converged_frac']].reset_index()


class BenchRunner:
    def __init__(self, config: BenchConfig, model: Optional[PomdpModel] = None):
        self.config = config
        self.model = model if model is not None else load_problem(config.problem)
        self.output_dir = Path(config.out)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        logger.info(f"Bench initialized for '{config.problem}' "
                    f"(|S|={self.model.num_states}, |A|={self.model.num_actions}, "
                    f"|O|={self.model.num_observations})")

    def _run_cells(self, reference: AlphaMatrix, cells: List[Cell]) -> List[Dict]:
        work = partial(run_cell, self.model, reference, self.config)
        if self.config.workers > 1:
            with ProcessPoolExecutor(max_workers=self.config.workers) as pool:
                return list(pool.map(work, cells))

        rows = []
        for i, cell in enumerate(cells, 1):
            print(f"Processing {i}/{len(cells)}", end="\r")
            rows.append(work(cell))
        return rows

    def run(self) -> Tuple[pd.DataFrame, pd.DataFrame]:
        logger.info("=" * 50)
        logger.info("Starting benchmark sweep")
        logger.info("=" * 50)

        logger.info(f"Step 1: Reference FIB solve at tol {REFERENCE_TOL:g}...")
        reference = fib_solve(self.model, SolveParams(tol=REFERENCE_TOL, max_iter=10 ** 6)).alpha

        cells = self.config.cells()
        logger.info(f"Step 2: Running {len(cells)} cells on {self.config.workers} worker(s)...")
        rows = self._run_cells(reference, cells)

        logger.info("Step 3: Aggregating across seeds...")
        cells_df = pd.DataFrame(rows)
        summary = aggregate(cells_df)

        logger.info("Step 4: Saving to CSV...")
        cells_file = self.output_dir / "cells.csv"
        summary_file = self.output_dir / "summary.csv"
        cells_df.to_csv(cells_file, index=False)
        summary.to_csv(summary_file, index=False)

        logger.info("=" * 50)
        logger.info("✅ Benchmark completed!")
        logger.info(f"📁 Cells: {cells_file}")
        logger.info(f"📊 Summary: {summary_file} ({len(summary)} rows)")
        logger.info("=" * 50)
        return cells_df, summary
