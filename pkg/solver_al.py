"""
Augmented-Lagrangian continuous max-flow solver on the cylinder.

Each iteration updates, in order and over the whole field:
  1. spatial/theta flow q by a projected (Chambolle-type) ascent step
  2. sink flows p_sink, capped by the data term D
  3. source flow p_source, analytically
  4. the multiplier u, which becomes the labeling
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from config import TWO_PI
from cylinder_grid import (CyclicScalarField, FlowField, SpatialScalarField, integrate_theta,
                           require_same_grid, theta_sum, uniform_indicator)
from data_term import energy, extract_label_bins, extract_labels
from diff_ops import divergence_array, gradient_array, project_capacity_array
from solver_engine import (AL_TRACE_COLUMNS, ConvergenceTrace, CyclicMaxFlowSolver, ReconstructionResult,
                           SolverConfig)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ALState:
    u: CyclicScalarField = field(repr=False)
    p_sink: CyclicScalarField = field(repr=False)
    p_source: SpatialScalarField = field(repr=False)
    q: FlowField = field(repr=False)

    def __post_init__(self):
        require_same_grid(self.u, self.p_sink, self.p_source, self.q)


def initial_state(D: CyclicScalarField) -> ALState:
    """u = 1/(2 pi), q = 0, p_sink = p_source = per-voxel minimum of D"""
    grid = D.grid
    d_min = D.values.min(axis=-1)
    return ALState(
        u=uniform_indicator(grid),
        p_sink=CyclicScalarField(grid, np.broadcast_to(d_min[..., None], grid.shape)),
        p_source=SpatialScalarField(grid, d_min),
        q=FlowField.zeros(grid),
    )


def _residual(div: np.ndarray, p_sink: np.ndarray, p_source: np.ndarray) -> np.ndarray:
    return div + p_sink - p_source[..., None]


def residual_G(state: ALState) -> CyclicScalarField:
    """Flow conservation residual G = div q + p_sink - p_source"""
    div = divergence_array(state.q.components)
    return CyclicScalarField(state.u.grid, _residual(div, state.p_sink.values, state.p_source.values))


def _al_update(u, p_sink, p_source, q, d, s, c, tau, delta_theta):
    q = project_capacity_array(
        q + tau * gradient_array(_residual(divergence_array(q), p_sink, p_source) - u / c), s)
    div = divergence_array(q)
    p_sink = np.minimum(d, p_source[..., None] - div + u / c)
    p_source = (1.0 / c + theta_sum(p_sink + div - u / c) * delta_theta) / TWO_PI
    u = u - c * _residual(div, p_sink, p_source)
    return u, p_sink, p_source, q, div


def al_step(state: ALState, D: CyclicScalarField, S: CyclicScalarField, cfg: SolverConfig) -> ALState:
    """One full q, p_sink, p_source, u sweep"""
    grid = require_same_grid(state.u, D, S)
    u, p_sink, p_source, q, _ = _al_update(
        state.u.values, state.p_sink.values, state.p_source.values, state.q.components,
        D.values, S.values, cfg.c, cfg.tau, grid.delta_theta)
    return ALState(CyclicScalarField(grid, u), CyclicScalarField(grid, p_sink),
                   SpatialScalarField(grid, p_source), FlowField(grid, q))


def mean_abs(values: np.ndarray) -> float:
    """Mean absolute value, summed per voxel in theta-shift invariant order"""
    return float(np.sum(theta_sum(np.abs(values)))) / values.size


def normalization_error(u: CyclicScalarField) -> float:
    """max over voxels of |integral of u over theta - 1|"""
    return float(np.max(np.abs(integrate_theta(u).values - 1.0)))


class AugmentedLagrangianSolver(CyclicMaxFlowSolver):
    """Augmented-Lagrangian max-flow solver, stopping on mean |G|"""

    name = 'al'

    def solve(self, D: CyclicScalarField, S: CyclicScalarField) -> ReconstructionResult:
        self.validate_inputs(D, S)
        cfg = self.config
        grid = D.grid
        if cfg.c_anneal_factor != 1.0:
            logger.warning("c annealing is only used by the pseudo-flow solver; ignoring it")

        state = initial_state(D)
        u, p_sink, p_source, q = (state.u.values, state.p_sink.values,
                                  state.p_source.values, state.q.components)
        trace = ConvergenceTrace(AL_TRACE_COLUMNS)
        converged = False
        iteration = 0

        for iteration in range(1, cfg.max_iters + 1):
            u, p_sink, p_source, q, div = _al_update(u, p_sink, p_source, q, D.values, S.values,
                                                     cfg.c, cfg.tau, grid.delta_theta)
            g = _residual(div, p_sink, p_source)
            mean_g = mean_abs(g)
            converged = mean_g <= cfg.tolerance
            if converged or iteration % cfg.log_every == 0 or iteration == cfg.max_iters:
                if not np.all(np.isfinite(u)):
                    raise FloatingPointError(f"AL iteration {iteration} produced non-finite values; "
                                             f"try a smaller tau (currently {cfg.tau})")
                u_field = CyclicScalarField(grid, u)
                report = energy(CyclicScalarField(grid, np.maximum(u, 0.0)), D, S)
                metrics = (report.total, mean_g, float(np.max(np.abs(g))), normalization_error(u_field))
                trace.append(iteration, *metrics)
                self._log_progress(iteration, metrics, AL_TRACE_COLUMNS)
            if converged:
                break

        self._log_outcome(converged, iteration)
        final_u = CyclicScalarField(grid, u)
        return ReconstructionResult(
            labels=extract_labels(final_u),
            label_bins=extract_label_bins(final_u),
            final_u=final_u,
            trace=trace,
            converged=converged,
            iterations=iteration,
            config_echo=cfg,
        )


def solve_al(D: CyclicScalarField, S: CyclicScalarField, cfg: SolverConfig = None) -> ReconstructionResult:
    return AugmentedLagrangianSolver(cfg or SolverConfig.for_solver('al')).solve(D, S)
