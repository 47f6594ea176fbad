"""
Solver implementations share this surface: configuration, convergence
trace, result container, the abstract solver and the factory
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from config import AL_DEFAULTS, PF_DEFAULTS, SOLVERS
from cylinder_grid import CyclicScalarField, SpatialScalarField, require_same_grid

logger = logging.getLogger(__name__)

AL_TRACE_COLUMNS = ('iteration', 'energy', 'mean_G', 'max_G', 'norm_err')
PF_TRACE_COLUMNS = ('iteration', 'energy', 'pf_objective', 'max_du', 'norm_err')


@dataclass(frozen=True)
class SolverConfig:
    """Step sizes, stopping controls and solver choice"""

    solver: str = 'al'
    c: float = AL_DEFAULTS['c']
    tau: float = AL_DEFAULTS['tau']
    max_iters: int = AL_DEFAULTS['max_iters']
    tolerance: float = AL_DEFAULTS['tolerance']
    log_every: int = AL_DEFAULTS['log_every']
    c_anneal_factor: float = AL_DEFAULTS['c_anneal_factor']
    c_floor: float = AL_DEFAULTS['c_floor']

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"Unknown solver '{self.solver}', expected one of {SOLVERS}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if int(self.max_iters) < 1:
            raise ValueError(f"max_iters must be at least 1, got {self.max_iters}")
        if not self.tolerance >= 0:
            raise ValueError(f"tolerance must be nonnegative, got {self.tolerance}")
        if int(self.log_every) < 1:
            raise ValueError(f"log_every must be at least 1, got {self.log_every}")
        if not 0 < self.c_anneal_factor <= 1:
            raise ValueError(f"c_anneal_factor must lie in (0, 1], got {self.c_anneal_factor}")
        if not self.c_floor > 0:
            raise ValueError(f"c_floor must be positive, got {self.c_floor}")

    @classmethod
    def for_solver(cls, solver: str, **overrides) -> 'SolverConfig':
        """Defaults for the named solver, with keyword overrides (None values ignored)"""
        if solver not in SOLVERS:
            raise ValueError(f"Unknown solver '{solver}', expected one of {SOLVERS}")
        settings = dict(AL_DEFAULTS if solver == 'al' else PF_DEFAULTS)
        settings.update({key: value for key, value in overrides.items() if value is not None})
        return cls(solver=solver, **settings)

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class ConvergenceTrace:
    """One record per logged iteration"""

    columns: Tuple[str, ...]
    records: List[Tuple] = field(default_factory=list)

    def append(self, iteration: int, *metrics: float):
        if self.records and iteration <= self.records[-1][0]:
            raise ValueError(f"Trace iterations must increase, got {iteration} after {self.records[-1][0]}")
        if len(metrics) != len(self.columns) - 1:
            raise ValueError(f"Expected {len(self.columns) - 1} metrics, got {len(metrics)}")
        self.records.append((int(iteration),) + tuple(float(m) for m in metrics))

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        index = self.columns.index(name)
        return np.array([record[index] for record in self.records])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame.from_records(self.records, columns=list(self.columns))
        return frame.astype({'iteration': 'int64'})

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format='%.17g')
        return path


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    labels: SpatialScalarField
    label_bins: np.ndarray = field(repr=False)
    final_u: CyclicScalarField = field(repr=False)
    trace: ConvergenceTrace = field(repr=False)
    converged: bool
    iterations: int
    config_echo: SolverConfig


class CyclicMaxFlowSolver(ABC):
    """Abstract base class for the cyclic max-flow solvers"""

    name = ''

    def __init__(self, config: SolverConfig):
        self.config = config

    @staticmethod
    def validate_inputs(D: CyclicScalarField, S: CyclicScalarField):
        require_same_grid(D, S)
        if np.any(S.values < 0):
            raise ValueError("Smoothness field S must be nonnegative")

    @abstractmethod
    def solve(self, D: CyclicScalarField, S: CyclicScalarField) -> ReconstructionResult:
        """Reconstruct a labeling from data term D and smoothness S"""

    def _log_progress(self, iteration: int, metrics: Sequence[float], columns: Sequence[str]):
        logger.info("%s iter %d: %s", self.name,
                    iteration, ", ".join(f"{c}={m:.6g}" for c, m in zip(columns[1:], metrics)))

    def _log_outcome(self, converged: bool, iterations: int):
        if converged:
            logger.info("%s solver converged after %d iterations", self.name, iterations)
        else:
            logger.warning("%s solver stopped at max_iters=%d without reaching tolerance %g",
                           self.name, iterations, self.config.tolerance)


class SolverFactory:
    """Factory class to create solvers"""

    @staticmethod
    def create_solver(solver_type: str, config: SolverConfig = None) -> CyclicMaxFlowSolver:
        """Create a solver by name ('al' or 'pf')"""
        solver_type = solver_type.lower()
        if config is None:
            config = SolverConfig.for_solver(solver_type)
        elif config.solver != solver_type:
            raise ValueError(f"Config is for solver '{config.solver}', not '{solver_type}'")
        if solver_type == 'al':
            from solver_al import AugmentedLagrangianSolver
            return AugmentedLagrangianSolver(config)
        elif solver_type == 'pf':
            from solver_pf import PseudoFlowSolver
            return PseudoFlowSolver(config)
        else:
            raise ValueError(f"Unknown solver type: {solver_type}")

    @staticmethod
    def get_available_solvers() -> List[str]:
        return list(SOLVERS)
