"""
Tests for the exact discrete solvers and for the continuous solvers against them
"""

import math

import numpy as np
import pytest

from conftest import two_phase_instance
from cylinder_grid import CyclicScalarField, make_grid
from data_term import energy, labels_to_indicator
import oracle
from oracle import InstanceTooLargeError, brute_force, chain_dp, discrete_energy, grid_edges, make_instance
from solver_al import solve_al
from solver_engine import SolverConfig
from solver_pf import solve_pf


def test_grid_edges():
    np.testing.assert_array_equal(grid_edges((3,)), [[0, 1], [1, 2]])
    edges = grid_edges((2, 2))
    assert sorted(map(tuple, edges)) == [(0, 1), (0, 2), (1, 3), (2, 3)]
    assert len(grid_edges((1,))) == 0


def test_discrete_energy_example():
    grid = make_grid([2], 4)
    D = CyclicScalarField(grid, np.array([[0.0, 1.0, 2.0, 3.0], [3.0, 2.0, 1.0, 0.0]]))
    inst = make_instance(D, 0.5)
    assert discrete_energy(np.array([0, 3]), inst) == pytest.approx(0.5 * (2 * math.pi / 4))
    assert discrete_energy(np.array([0, 0]), inst) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        discrete_energy(np.array([0, 4]), inst)
    with pytest.raises(ValueError):
        discrete_energy(np.array([0.0, 1.0]), inst)


def test_single_voxel_is_data_argmin():
    grid = make_grid([1], 6)
    D = CyclicScalarField(grid, np.array([[1.0, 0.2, 0.7, 0.1, 0.9, 0.4]]))
    inst = make_instance(D, 1.0)
    labels, value = brute_force(inst)
    assert labels.tolist() == [3]
    assert value == pytest.approx(0.1)
    assert chain_dp(inst)[0].tolist() == [3]


def test_brute_force_ties_pick_lexicographically_smallest():
    grid = make_grid([2], 4)
    inst = make_instance(CyclicScalarField.zeros(grid), 0.0)
    labels, value = brute_force(inst)
    assert labels.tolist() == [0, 0]
    assert value == 0.0


def test_budget_guard():
    grid = make_grid([9], 8)
    with pytest.raises(InstanceTooLargeError):
        brute_force(make_instance(CyclicScalarField.zeros(grid), 0.1))


def test_brute_force_agrees_with_chain_dp(rng):
    for n_voxels, n_theta in ((3, 4), (5, 4), (4, 6), (6, 8)):
        grid = make_grid([n_voxels], n_theta)
        D = CyclicScalarField(grid, rng.uniform(0.0, 2.0, size=grid.shape))
        weights = rng.uniform(0.0, 1.0, size=n_voxels - 1)
        inst = make_instance(D, weights)
        _, exhaustive = brute_force(inst, workers=2)
        labels, dp = chain_dp(inst)
        assert dp == pytest.approx(exhaustive, abs=1e-12)
        assert discrete_energy(labels, inst) == pytest.approx(exhaustive, abs=1e-12)


def test_brute_force_takes_worker_count_from_environment(rng, monkeypatch):
    seen = []

    class RecordingPool(oracle.ThreadPoolExecutor):
        def __init__(self, max_workers=None):
            seen.append(max_workers)
            super().__init__(max_workers=max_workers)

    grid = make_grid([7], 8)
    inst = make_instance(CyclicScalarField(grid, rng.uniform(0.0, 2.0, size=grid.shape)), 0.2)
    expected = brute_force(inst, workers=1)
    monkeypatch.setattr(oracle, 'ThreadPoolExecutor', RecordingPool)
    monkeypatch.setenv('CYCLIC_FLOW_THREADS', '3')
    labels, value = brute_force(inst)
    assert seen == [3]
    np.testing.assert_array_equal(labels, expected[0])
    assert value == expected[1]


def test_brute_force_on_2d_grid_beats_every_sampled_labeling(rng):
    grid = make_grid([2, 3], 4)
    inst = make_instance(CyclicScalarField(grid, rng.uniform(0.0, 2.0, size=grid.shape)), 0.3)
    labels, best = brute_force(inst)
    assert labels.shape == (2, 3)
    for _ in range(200):
        assert best <= discrete_energy(rng.integers(0, 4, size=(2, 3)), inst) + 1e-12
    with pytest.raises(ValueError):
        chain_dp(inst)


def test_fixture_instances_are_solved_by_the_clean_labeling(oracle_case):
    labels, value = brute_force(oracle_case.instance)
    np.testing.assert_array_equal(labels, oracle_case.truth_bins)
    assert chain_dp(oracle_case.instance)[1] == pytest.approx(value, abs=1e-12)


@pytest.mark.parametrize("solve, name", [(solve_al, 'al'), (solve_pf, 'pf')])
def test_continuous_solvers_reach_discrete_optimum(oracle_case, solve, name):
    _, optimum = chain_dp(oracle_case.instance)
    result = solve(oracle_case.D, oracle_case.S, SolverConfig.for_solver(name, max_iters=2000))
    assert discrete_energy(result.label_bins, oracle_case.instance) <= 1.02 * optimum + 1e-12


def test_continuous_solvers_agree_on_oracle_instances(oracle_case):
    al = solve_al(oracle_case.D, oracle_case.S, SolverConfig.for_solver('al', tolerance=1e-5))
    pf = solve_pf(oracle_case.D, oracle_case.S)
    e_al = discrete_energy(al.label_bins, oracle_case.instance)
    e_pf = discrete_energy(pf.label_bins, oracle_case.instance)
    assert abs(e_al - e_pf) <= 0.01 * min(e_al, e_pf)
    assert np.mean(al.label_bins == pf.label_bins) >= 0.95


def test_continuous_solvers_agree_on_noisy_phase_image(noisy_phase_image):
    D, S = noisy_phase_image.D, noisy_phase_image.S
    al = solve_al(D, S, SolverConfig.for_solver('al', tolerance=1e-5))
    pf = solve_pf(D, S)
    e_al = energy(labels_to_indicator(al.label_bins, D.grid), D, S).total
    e_pf = energy(labels_to_indicator(pf.label_bins, D.grid), D, S).total
    assert abs(e_al - e_pf) <= 0.01 * min(e_al, e_pf)
    assert np.mean(al.label_bins == pf.label_bins) >= 0.95


def test_two_phase_fixture_is_reproducible():
    first, second = two_phase_instance(3), two_phase_instance(3)
    assert first.D.values.tobytes() == second.D.values.tobytes()
    assert first.s_value == second.s_value
