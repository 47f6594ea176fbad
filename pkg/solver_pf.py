"""
Pseudo-flow solver: Bregman proximal iterations with the entropy distance.

The labeling u stays feasible (nonnegative, integrating to one over theta)
after every iteration; only the flow q carries the spatial coupling.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from config import PF_U_FLOOR
from cylinder_grid import CyclicScalarField, FlowField, require_same_grid, theta_sum, uniform_indicator
from data_term import energy, extract_label_bins, extract_labels
from diff_ops import divergence_array, gradient_array, project_capacity_array
from solver_al import normalization_error
from solver_engine import (PF_TRACE_COLUMNS, ConvergenceTrace, CyclicMaxFlowSolver, ReconstructionResult,
                           SolverConfig)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PFState:
    u: CyclicScalarField = field(repr=False)
    q: FlowField = field(repr=False)

    def __post_init__(self):
        require_same_grid(self.u, self.q)
        if np.any(self.u.values < 0):
            raise ValueError("Pseudo-flow labeling must be nonnegative")


def bregman_distance(u: CyclicScalarField, v: CyclicScalarField) -> float:
    """Entropy Bregman distance sum(u ln(u/v) - u + v), with 0 ln 0 = 0"""
    grid = require_same_grid(u, v)
    if np.any(u.values < 0):
        raise ValueError("u must be nonnegative")
    if np.any(v.values < 0):
        raise ValueError("v must be nonnegative")
    support = u.values > 0
    if np.any(support & (v.values <= 0)):
        raise ValueError("v must be positive wherever u is positive")
    ratio = np.divide(u.values, v.values, out=np.ones_like(u.values), where=support)
    terms = np.where(support, u.values * np.log(ratio), 0.0) - u.values + v.values
    return float(np.sum(terms)) * grid.delta_theta * grid.voxel_volume


def _label_update(u, d, div, c, delta_theta):
    with np.errstate(divide='ignore'):
        exponent = np.log(u) - (d + div) / c
    exponent -= exponent.max(axis=-1, keepdims=True)
    weights = np.exp(exponent)
    return weights / (theta_sum(weights)[..., None] * delta_theta)


def pf_label_update(u: CyclicScalarField, D: CyclicScalarField, q: FlowField, c: float) -> CyclicScalarField:
    """u' proportional to u exp(-(D + div q)/c), renormalized per voxel"""
    grid = require_same_grid(u, D, q)
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    return CyclicScalarField(grid, _label_update(u.values, D.values, divergence_array(q.components),
                                                 c, grid.delta_theta))


def _flow_update(q, u, d, s, c, tau, delta_theta):
    # the per-voxel normalizer of the proximal labeling is the source flow
    prox = _label_update(np.maximum(u, PF_U_FLOOR), d, divergence_array(q), c, delta_theta)
    return project_capacity_array(q - c * tau * delta_theta * gradient_array(prox), s)


def pf_flow_update(q: FlowField, u: CyclicScalarField, D: CyclicScalarField, S: CyclicScalarField,
                   c: float, tau: float) -> FlowField:
    """
    One projected descent step on q against the proximal labeling
    u exp(-(D + div q - p_source)/c), where p_source normalizes it per voxel.
    The step is c * tau * dtheta, stable while tau * ||grad||^2 < 1.
    """
    grid = require_same_grid(q, u, D, S)
    return FlowField(grid, _flow_update(q.components, u.values, D.values, S.values, c, tau, grid.delta_theta))


def pseudo_flow_objective(D: CyclicScalarField, q: FlowField) -> float:
    """Sum over voxels of min over theta of (D + div q)"""
    grid = require_same_grid(D, q)
    per_voxel = (D.values + divergence_array(q.components)).min(axis=-1)
    return float(np.sum(per_voxel)) * grid.voxel_volume


def proximal_objective(u: CyclicScalarField, v: CyclicScalarField, D: CyclicScalarField,
                       q: FlowField, c: float) -> float:
    """Linear cost of u against D + div q plus c times the Bregman distance to v"""
    grid = require_same_grid(u, v, D, q)
    linear = float(np.sum(u.values * (D.values + divergence_array(q.components))))
    return linear * grid.delta_theta * grid.voxel_volume + c * bregman_distance(u, v)


def pf_step(state: PFState, D: CyclicScalarField, S: CyclicScalarField, c: float, tau: float) -> PFState:
    """Flow update followed by the exponentiate-and-normalize label update"""
    q = pf_flow_update(state.q, state.u, D, S, c, tau)
    v = CyclicScalarField(state.u.grid, np.maximum(state.u.values, PF_U_FLOOR))
    return PFState(pf_label_update(v, D, q, c), q)


class PseudoFlowSolver(CyclicMaxFlowSolver):
    """Bregman proximal pseudo-flow solver, stopping on max node |du|"""

    name = 'pf'

    def solve(self, D: CyclicScalarField, S: CyclicScalarField) -> ReconstructionResult:
        self.validate_inputs(D, S)
        cfg = self.config
        grid = D.grid

        u = uniform_indicator(grid).values
        q = np.zeros(grid.flow_shape)
        c = cfg.c
        trace = ConvergenceTrace(PF_TRACE_COLUMNS)
        converged = False
        iteration = 0

        for iteration in range(1, cfg.max_iters + 1):
            q = _flow_update(q, u, D.values, S.values, c, cfg.tau, grid.delta_theta)
            div = divergence_array(q)
            u_next = _label_update(np.maximum(u, PF_U_FLOOR), D.values, div, c, grid.delta_theta)
            max_du = float(np.max(np.abs(u_next - u)))
            u = u_next
            converged = max_du <= cfg.tolerance
            if converged or iteration % cfg.log_every == 0 or iteration == cfg.max_iters:
                if not np.all(np.isfinite(q)):
                    raise FloatingPointError(f"PF iteration {iteration} produced non-finite flows; "
                                             f"try a smaller tau (currently {cfg.tau})")
                u_field = CyclicScalarField(grid, u)
                objective = float(np.sum((D.values + div).min(axis=-1))) * grid.voxel_volume
                metrics = (energy(u_field, D, S).total, objective, max_du, normalization_error(u_field))
                trace.append(iteration, *metrics)
                self._log_progress(iteration, metrics, PF_TRACE_COLUMNS)
            if converged:
                break
            c = max(c * cfg.c_anneal_factor, cfg.c_floor) if cfg.c_anneal_factor < 1.0 else c

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


def solve_pf(D: CyclicScalarField, S: CyclicScalarField, cfg: SolverConfig = None) -> ReconstructionResult:
    return PseudoFlowSolver(cfg or SolverConfig.for_solver('pf')).solve(D, S)
