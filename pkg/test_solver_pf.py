"""
Tests for the pseudo-flow (Bregman proximal) solver
"""

import math

import numpy as np
import pytest

from cylinder_grid import CyclicScalarField, FlowField, make_grid, uniform_indicator
from data_term import labels_to_indicator
from solver_engine import SolverConfig
from solver_pf import (PFState, bregman_distance, pf_flow_update, pf_label_update, pf_step, proximal_objective,
                       pseudo_flow_objective, solve_pf)


def _random_density(rng, grid):
    values = rng.uniform(0.1, 1.0, size=grid.shape)
    return CyclicScalarField(grid, values / (values.sum(axis=-1, keepdims=True) * grid.delta_theta))


def test_label_update_example():
    grid = make_grid([1], 2)
    c = 0.1
    D = CyclicScalarField(grid, np.array([[0.0, c * math.log(3.0)]]))
    updated = pf_label_update(uniform_indicator(grid), D, FlowField.zeros(grid), c)
    np.testing.assert_allclose(updated.values * grid.delta_theta, [[0.75, 0.25]], rtol=1e-12)


def test_label_update_is_softmin_of_data():
    grid = make_grid([3], 6)
    D = CyclicScalarField(grid, np.linspace(0.0, 2.0, grid.n_nodes).reshape(grid.shape))
    c = 0.4
    updated = pf_label_update(uniform_indicator(grid), D, FlowField.zeros(grid), c)
    weights = np.exp(-D.values / c)
    expected = weights / (weights.sum(axis=-1, keepdims=True) * grid.delta_theta)
    np.testing.assert_allclose(updated.values, expected, rtol=1e-12)


def test_label_update_survives_huge_data_values():
    grid = make_grid([2], 4)
    D = CyclicScalarField(grid, np.array([[1e6, 2e6, 3e6, 4e6], [0.0, 5e5, 5e5, 5e5]]))
    updated = pf_label_update(uniform_indicator(grid), D, FlowField.zeros(grid), 0.01)
    assert np.all(np.isfinite(updated.values))
    np.testing.assert_allclose(updated.values[:, 0] * grid.delta_theta, 1.0)


def test_label_update_rejects_bad_c():
    grid = make_grid([1], 4)
    with pytest.raises(ValueError):
        pf_label_update(uniform_indicator(grid), CyclicScalarField.zeros(grid), FlowField.zeros(grid), 0.0)


def test_flow_update_matches_node_loops(rng, reference_ops):
    grid = make_grid([6], 5)
    c, tau = 0.3, 0.1
    q = rng.normal(scale=0.1, size=grid.flow_shape)
    u = _random_density(rng, grid).values
    d = rng.uniform(0.0, 1.0, size=grid.shape)
    s = np.full(grid.shape, 0.15)
    weights = u * np.exp(-(d + reference_ops.divergence(q)) / c)
    prox = weights / (weights.sum(axis=-1, keepdims=True) * grid.delta_theta)
    expected = reference_ops.project(q - c * tau * grid.delta_theta * reference_ops.gradient(prox), s)
    updated = pf_flow_update(FlowField(grid, q), CyclicScalarField(grid, u), CyclicScalarField(grid, d),
                             CyclicScalarField(grid, s), c, tau)
    np.testing.assert_allclose(updated.components, expected, rtol=1e-12, atol=1e-14)


def test_label_update_minimizes_proximal_objective(rng):
    grid = make_grid([4], 6)
    c = 0.2
    v = _random_density(rng, grid)
    D = CyclicScalarField(grid, rng.uniform(0.0, 1.0, size=grid.shape))
    q = FlowField(grid, rng.normal(scale=0.1, size=grid.flow_shape))
    best = pf_label_update(v, D, q, c)
    best_value = proximal_objective(best, v, D, q, c)
    candidates = [v, uniform_indicator(grid), _random_density(rng, grid),
                  labels_to_indicator(np.array([0, 2, 5, 1]), grid)]
    for other in candidates:
        assert best_value <= proximal_objective(other, v, D, q, c) + 1e-12


def test_bregman_distance():
    grid = make_grid([2], 4)
    u = uniform_indicator(grid)
    assert bregman_distance(u, u) == pytest.approx(0.0, abs=1e-15)
    one_hot = labels_to_indicator(np.array([1, 3]), grid)
    assert bregman_distance(one_hot, u) > 0
    with pytest.raises(ValueError):
        bregman_distance(u, CyclicScalarField.zeros(grid))


def test_bregman_distance_by_hand():
    grid = make_grid([1], 4)
    peak, flat = 2 / math.pi, 1 / (2 * math.pi)
    u = CyclicScalarField(grid, np.array([[peak, 0.0, 0.0, 0.0]]))
    expected = (peak * math.log(peak / flat) - peak + flat + 3 * flat) * (math.pi / 2)
    assert bregman_distance(u, uniform_indicator(grid)) == pytest.approx(expected, rel=1e-12)


def test_bregman_distance_is_nonnegative(rng):
    grid = make_grid([3], 5)
    for _ in range(20):
        assert bregman_distance(_random_density(rng, grid), _random_density(rng, grid)) >= 0.0


def test_label_update_ignores_theta_constant_costs(rng):
    grid = make_grid([3], 6)
    v = _random_density(rng, grid)
    D = CyclicScalarField(grid, np.repeat(rng.uniform(0.0, 5.0, size=(3, 1)), 6, axis=1))
    updated = pf_label_update(v, D, FlowField.zeros(grid), 0.05)
    np.testing.assert_allclose(updated.values, v.values, rtol=1e-12)


def test_flow_update_with_zero_capacity_stays_zero(rng):
    grid = make_grid([4], 6)
    updated = pf_flow_update(FlowField.zeros(grid), _random_density(rng, grid),
                             CyclicScalarField(grid, rng.uniform(size=grid.shape)), CyclicScalarField.zeros(grid),
                             0.1, 0.1)
    np.testing.assert_array_equal(updated.components, 0.0)


def test_flow_update_ignores_voxelwise_cost_offsets(rng):
    grid = make_grid([5, 3], 6)
    q = FlowField(grid, rng.normal(scale=0.1, size=grid.flow_shape))
    u = _random_density(rng, grid)
    D = CyclicScalarField(grid, rng.uniform(0.0, 1.0, size=grid.shape))
    offsets = rng.uniform(0.0, 2.0, size=grid.spatial_dims)[..., None]
    shifted = CyclicScalarField(grid, D.values + offsets)
    S = CyclicScalarField.constant(grid, 0.3)
    np.testing.assert_allclose(pf_flow_update(q, u, shifted, S, 0.2, 0.05).components,
                               pf_flow_update(q, u, D, S, 0.2, 0.05).components, rtol=1e-10, atol=1e-13)


def test_iterates_stay_feasible(rng):
    grid = make_grid([5, 4], 8)
    D = CyclicScalarField(grid, rng.uniform(0.0, 2.0, size=grid.shape))
    S = CyclicScalarField.constant(grid, 0.2)
    state = PFState(uniform_indicator(grid), FlowField.zeros(grid))
    for _ in range(500):
        state = pf_step(state, D, S, c=0.1, tau=0.1)
        assert np.all(state.u.values >= 0)
        integral = state.u.values.sum(axis=-1) * grid.delta_theta
        assert np.max(np.abs(integral - 1.0)) <= 1e-10


def test_objective_is_below_energy_on_trace(rng):
    grid = make_grid([6, 5], 8)
    D = CyclicScalarField(grid, rng.uniform(0.0, 2.0, size=grid.shape))
    S = CyclicScalarField.constant(grid, 0.15)
    result = solve_pf(D, S, SolverConfig.for_solver('pf', max_iters=300, log_every=10))
    energies = result.trace.column('energy')
    objectives = result.trace.column('pf_objective')
    assert np.all(objectives <= energies + 1e-9 * np.maximum(1.0, np.abs(energies)))
    assert np.all(result.trace.column('norm_err') <= 1e-10)


def test_pseudo_flow_objective_without_flow():
    grid = make_grid([2], 4)
    D = CyclicScalarField(grid, np.array([[3.0, 1.0, 2.0, 5.0], [0.5, 0.25, 4.0, 0.7]]))
    assert pseudo_flow_objective(D, FlowField.zeros(grid)) == pytest.approx(1.25)


def test_zero_smoothness_picks_data_minimum(rng):
    grid = make_grid([6], 8)
    values = np.stack([rng.permutation(8) * 0.5 for _ in range(6)])
    D = CyclicScalarField(grid, values)
    result = solve_pf(D, CyclicScalarField.zeros(grid))
    assert result.converged
    np.testing.assert_array_equal(result.label_bins, np.argmin(values, axis=-1))


def test_zero_data_keeps_uniform_labeling():
    grid = make_grid([4], 8)
    result = solve_pf(CyclicScalarField.zeros(grid), CyclicScalarField.constant(grid, 0.2))
    assert result.converged
    assert result.iterations == 1
    np.testing.assert_allclose(result.final_u.values, 1.0 / (2 * math.pi), rtol=1e-12)


@pytest.mark.parametrize("k", [1, 4])
def test_theta_shift_rotates_labels(rng, k):
    grid = make_grid([4, 4], 8)
    D = CyclicScalarField(grid, rng.uniform(0.0, 3.0, size=grid.shape))
    S = CyclicScalarField.constant(grid, 0.1)
    cfg = SolverConfig.for_solver('pf', max_iters=200)
    base = solve_pf(D, S, cfg)
    shifted = solve_pf(CyclicScalarField(grid, np.roll(D.values, k, axis=-1)), S, cfg)
    assert shifted.final_u.values.tobytes() == np.roll(base.final_u.values, k, axis=-1).tobytes()
    np.testing.assert_array_equal(shifted.label_bins, (base.label_bins + k) % 8)


def test_annealing_still_returns_feasible_labeling(rng):
    grid = make_grid([5], 8)
    D = CyclicScalarField(grid, rng.uniform(0.0, 2.0, size=grid.shape))
    cfg = SolverConfig.for_solver('pf', c=0.5, c_anneal_factor=0.9, c_floor=0.05, max_iters=200)
    result = solve_pf(D, CyclicScalarField.constant(grid, 0.1), cfg)
    assert np.all(result.final_u.values >= 0)
    assert result.trace.column('norm_err')[-1] <= 1e-10


def test_deterministic(rng):
    grid = make_grid([4, 3], 6)
    D = CyclicScalarField(grid, rng.uniform(0.0, 2.0, size=grid.shape))
    S = CyclicScalarField.constant(grid, 0.15)
    cfg = SolverConfig.for_solver('pf', max_iters=300)
    first, second = solve_pf(D, S, cfg), solve_pf(D, S, cfg)
    assert first.final_u.values.tobytes() == second.final_u.values.tobytes()
    assert first.trace.records == second.trace.records
