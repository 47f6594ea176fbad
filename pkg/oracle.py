"""
Exact solvers for the discrete cyclic MRF on tiny grids, used as ground
truth for the continuous solvers.

Energy of a labeling l (bin index per voxel):

    sum_x D(x, l(x)) + sum over edges (a, b) of w_ab * cyclic_distance(theta_l(a), theta_l(b))
"""

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from config import ORACLE_CHUNK_LABELINGS, ORACLE_MAX_LABELINGS
from cylinder_grid import CyclicScalarField, CylinderGrid
from data_term import cyclic_distance
from utils import thread_count

logger = logging.getLogger(__name__)


class InstanceTooLargeError(ValueError):
    """Raised when exhaustive enumeration would exceed the labeling budget"""


def grid_edges(spatial_dims) -> np.ndarray:
    """Forward-neighbor voxel pairs (flat C-order indices) along every spatial axis"""
    index = np.arange(int(np.prod(spatial_dims))).reshape(spatial_dims)
    edges = []
    for axis in range(len(spatial_dims)):
        lead = np.take(index, np.arange(spatial_dims[axis] - 1), axis=axis)
        tail = np.take(index, np.arange(1, spatial_dims[axis]), axis=axis)
        edges.append(np.stack([lead.ravel(), tail.ravel()], axis=1))
    return np.concatenate(edges, axis=0).astype(np.int64)


@dataclass(frozen=True, eq=False)
class DiscreteInstance:
    grid: CylinderGrid
    D: CyclicScalarField = field(repr=False)
    edges: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.D.grid != self.grid:
            raise ValueError("Data term grid does not match instance grid")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(weights) != len(edges):
            raise ValueError(f"Expected {len(edges)} edge weights, got {len(weights)}")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("Edge weights must be finite and nonnegative")
        if np.any(edges < 0) or np.any(edges >= self.grid.n_voxels):
            raise ValueError("Edge endpoints out of range")
        object.__setattr__(self, 'edges', edges)
        object.__setattr__(self, 'weights', weights)

    @property
    def n_labelings(self) -> int:
        return self.grid.n_theta ** self.grid.n_voxels

    @property
    def unary(self) -> np.ndarray:
        return self.D.values.reshape(self.grid.n_voxels, self.grid.n_theta)

    @property
    def label_distance(self) -> np.ndarray:
        centers = self.grid.theta_centers
        return cyclic_distance(centers[:, None], centers[None, :])


def make_instance(D: CyclicScalarField, smoothness_weight: Union[float, np.ndarray]) -> DiscreteInstance:
    """Instance on D's grid with nearest-neighbor edges and scalar or per-edge weights"""
    edges = grid_edges(D.grid.spatial_dims)
    weights = np.broadcast_to(np.asarray(smoothness_weight, dtype=np.float64), (len(edges),))
    return DiscreteInstance(D.grid, D, edges, weights)


def _check_labels(labels, inst: DiscreteInstance) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size != inst.grid.n_voxels:
        raise ValueError(f"Expected {inst.grid.n_voxels} labels, got {labels.size}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("Labels must be integer bin indices")
    flat = labels.reshape(-1)
    if np.any(flat < 0) or np.any(flat >= inst.grid.n_theta):
        raise ValueError(f"Label bins must lie in [0, {inst.grid.n_theta})")
    return flat


def discrete_energy(labels, inst: DiscreteInstance) -> float:
    flat = _check_labels(labels, inst)
    data = float(np.sum(inst.unary[np.arange(len(flat)), flat])) * inst.grid.voxel_volume
    if len(inst.edges) == 0:
        return data
    jumps = inst.label_distance[flat[inst.edges[:, 0]], flat[inst.edges[:, 1]]]
    return data + float(np.sum(inst.weights * jumps))


def _all_labelings(n_labels: int, n_voxels: int) -> np.ndarray:
    """Every labeling of n_voxels voxels in lexicographic order, one per row"""
    if n_voxels == 0:
        return np.zeros((1, 0), dtype=np.int64)
    return np.indices((n_labels,) * n_voxels).reshape(n_voxels, -1).T


def brute_force(inst: DiscreteInstance, workers: Optional[int] = None) -> Tuple[np.ndarray, float]:
    """
    Global minimizer by enumeration; ties go to the lexicographically smallest labeling.
    Without explicit workers the chunk pool takes its size from CYCLIC_FLOW_THREADS.
    """
    grid = inst.grid
    n, n_voxels = grid.n_theta, grid.n_voxels
    if inst.n_labelings > ORACLE_MAX_LABELINGS:
        raise InstanceTooLargeError(f"{n}^{n_voxels} labelings exceed the exhaustive budget "
                                    f"of {ORACLE_MAX_LABELINGS}")

    # Enumerate in chunks sharing a label prefix over the leading voxels
    prefix_len = 0
    while n ** (n_voxels - prefix_len) > ORACLE_CHUNK_LABELINGS:
        prefix_len += 1
    suffixes = _all_labelings(n, n_voxels - prefix_len)
    unary = inst.unary
    distance = inst.label_distance
    voxels = np.arange(n_voxels)

    def best_in_chunk(prefix):
        labelings = np.concatenate(
            [np.broadcast_to(np.asarray(prefix, dtype=np.int64), (len(suffixes), prefix_len)), suffixes], axis=1)
        energies = unary[voxels, labelings].sum(axis=1)
        if len(inst.edges):
            jumps = distance[labelings[:, inst.edges[:, 0]], labelings[:, inst.edges[:, 1]]]
            energies = energies + (jumps * inst.weights).sum(axis=1)
        best = int(np.argmin(energies))
        return energies[best], labelings[best]

    prefixes = list(itertools.product(range(n), repeat=prefix_len))
    with ThreadPoolExecutor(max_workers=workers or thread_count()) as pool:
        chunk_results = list(pool.map(best_in_chunk, prefixes))

    # Ordered reduction keeps the earliest chunk on ties
    best_energy, best_labels = chunk_results[0]
    for chunk_energy, chunk_labels in chunk_results[1:]:
        if chunk_energy < best_energy:
            best_energy, best_labels = chunk_energy, chunk_labels

    labels = np.array(best_labels).reshape(grid.spatial_dims)
    logger.debug("brute force over %d labelings: energy %.12g", inst.n_labelings, best_energy)
    return labels, discrete_energy(labels, inst)


def _chain_order(inst: DiscreteInstance) -> np.ndarray:
    """Edge weights along the chain 0-1-...-(n-1), or ValueError for other topologies"""
    grid = inst.grid
    if sum(d > 1 for d in grid.spatial_dims) > 1:
        raise ValueError(f"Grid {grid.spatial_dims} is not a 1D chain")
    n_voxels = grid.n_voxels
    expected = np.stack([np.arange(n_voxels - 1), np.arange(1, n_voxels)], axis=1)
    edges = np.sort(inst.edges, axis=1)
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    if len(edges) != n_voxels - 1 or not np.array_equal(edges[order], expected):
        raise ValueError("Instance edges do not form a 1D chain")
    return inst.weights[order]


def chain_dp(inst: DiscreteInstance) -> Tuple[np.ndarray, float]:
    """Exact minimizer on a chain by min-sum dynamic programming"""
    weights = _chain_order(inst)
    unary = inst.unary
    distance = inst.label_distance
    n_voxels = inst.grid.n_voxels

    cost = unary[0].copy()
    backpointers = []
    for i in range(1, n_voxels):
        candidates = cost[:, None] + weights[i - 1] * distance
        backpointers.append(np.argmin(candidates, axis=0))
        cost = candidates.min(axis=0) + unary[i]

    labels = np.zeros(n_voxels, dtype=np.int64)
    labels[-1] = int(np.argmin(cost))
    for i in range(n_voxels - 1, 0, -1):
        labels[i - 1] = backpointers[i - 1][labels[i]]

    labels = labels.reshape(inst.grid.spatial_dims)
    return labels, discrete_energy(labels, inst)
