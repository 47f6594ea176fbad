"""
Shared pytest fixtures
"""

from types import SimpleNamespace

import numpy as np
import pytest

from cylinder_grid import CyclicScalarField, make_grid
from data_term import CyclicObservation, build_data_term, phase_from_complex
from io_cli import SynthConfig, synth_ground_truth
from oracle import make_instance

ORACLE_SEEDS = list(range(10))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _loop_gradient_1d(u):
    """Forward differences written out node by node for a 1D spatial grid"""
    n_x, n_t = u.shape
    grad = np.zeros((2, n_x, n_t))
    for x in range(n_x):
        for k in range(n_t):
            grad[0, x, k] = u[x + 1, k] - u[x, k] if x + 1 < n_x else 0.0
            grad[1, x, k] = u[x, (k + 1) % n_t] - u[x, k]
    return grad


def _loop_divergence_1d(q):
    n_x, n_t = q.shape[1:]
    div = np.zeros((n_x, n_t))
    for x in range(n_x):
        for k in range(n_t):
            out_x = q[0, x, k] if x + 1 < n_x else 0.0
            in_x = q[0, x - 1, k] if x > 0 else 0.0
            div[x, k] = out_x - in_x + q[1, x, k] - q[1, x, k - 1]
    return div


def _loop_project_1d(q, s):
    out = q.copy()
    for x in range(q.shape[1]):
        for k in range(q.shape[2]):
            norm = np.hypot(q[0, x, k], q[1, x, k])
            if norm > s[x, k]:
                out[:, x, k] = q[:, x, k] * s[x, k] / norm
    return out


@pytest.fixture
def reference_ops():
    return SimpleNamespace(gradient=_loop_gradient_1d, divergence=_loop_divergence_1d,
                           project=_loop_project_1d)


def two_phase_instance(seed: int):
    """
    6 voxels x 8 bins: two phases at bin centers, per-voxel angle jitter
    well inside half a bin, and a smoothness weight in [0.02, 0.15].
    """
    local = np.random.default_rng(1000 + seed)
    grid = make_grid([6], 8)
    centers = grid.theta_centers
    bin_a = int(local.integers(0, 8))
    bin_b = (bin_a + int(local.integers(2, 7))) % 8
    split = int(local.integers(2, 5))
    angles = np.where(np.arange(6) < split, centers[bin_a], centers[bin_b])
    angles = angles + local.uniform(-0.1, 0.1, size=6)
    obs = CyclicObservation(grid, angles, np.ones(6))
    D = build_data_term(obs)
    s_value = float(local.uniform(0.02, 0.15))
    S = CyclicScalarField.constant(grid, s_value)
    return SimpleNamespace(D=D, S=S, s_value=s_value, instance=make_instance(D, s_value),
                           truth_bins=np.where(np.arange(6) < split, bin_a, bin_b))


@pytest.fixture(params=ORACLE_SEEDS)
def oracle_case(request):
    return two_phase_instance(request.param)


@pytest.fixture(scope="session")
def noisy_phase_image():
    """
    32 x 32 two-phase angle map with wrapped Gaussian noise (sigma 0.3),
    sampled on 16 bins, smoothness 0.2.
    """
    synth_cfg = SynthConfig(output_dir='.', dims=(32, 32), noise=0.3, seed=0, n_theta=16)
    truth = synth_ground_truth(synth_cfg)
    local = np.random.default_rng(synth_cfg.seed)
    observed = truth + synth_cfg.noise * local.standard_normal(truth.shape)
    D = build_data_term(phase_from_complex(np.cos(observed), np.sin(observed), n_theta=16))
    return SimpleNamespace(D=D, S=CyclicScalarField.constant(D.grid, 0.2), truth=truth)
