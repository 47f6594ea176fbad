"""
Finite-difference operators over the cylinder: forward-difference gradient,
its negative adjoint (backward-difference divergence) and the node-wise
capacity projection. Theta wraps cyclically; spatial boundaries are
zero-flux.
"""

import numpy as np

from cylinder_grid import CyclicScalarField, FlowField, require_same_grid


def gradient_array(u: np.ndarray) -> np.ndarray:
    """Forward differences along each spatial axis, then theta (last axis)"""
    n_axes = u.ndim - 1
    grad = np.zeros((n_axes + 1,) + u.shape)
    for axis in range(n_axes):
        lead = [slice(None)] * u.ndim
        tail = [slice(None)] * u.ndim
        lead[axis] = slice(None, -1)
        tail[axis] = slice(1, None)
        # Last voxel along the axis keeps a zero difference
        grad[axis][tuple(lead)] = u[tuple(tail)] - u[tuple(lead)]
    grad[n_axes] = np.roll(u, -1, axis=-1) - u
    return grad


def divergence_array(q: np.ndarray) -> np.ndarray:
    """Backward differences, the negative adjoint of gradient_array"""
    n_axes = q.shape[0] - 1
    div = np.zeros(q.shape[1:])
    for axis in range(n_axes):
        component = q[axis]
        n = component.shape[axis]
        if n == 1:
            continue
        first = [slice(None)] * component.ndim
        inner = [slice(None)] * component.ndim
        prev_inner = [slice(None)] * component.ndim
        last = [slice(None)] * component.ndim
        before_last = [slice(None)] * component.ndim
        first[axis] = 0
        inner[axis] = slice(1, -1)
        prev_inner[axis] = slice(0, -2)
        last[axis] = n - 1
        before_last[axis] = n - 2
        div[tuple(first)] += component[tuple(first)]
        div[tuple(inner)] += component[tuple(inner)] - component[tuple(prev_inner)]
        div[tuple(last)] -= component[tuple(before_last)]
    theta = q[n_axes]
    div += theta - np.roll(theta, 1, axis=-1)
    return div


def node_norm(q: np.ndarray) -> np.ndarray:
    """Euclidean norm of each node's (spatial + theta) flow vector"""
    return np.sqrt(np.sum(q * q, axis=0))


def project_capacity_array(q: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Radially shrink node vectors whose norm exceeds s; output norms never exceed s"""
    norm = node_norm(q)
    factor = np.ones_like(norm)
    np.divide(s, norm, out=factor, where=norm > s)
    projected = q * factor
    # rounding can leave a rescaled node a few ulps above s
    excess = node_norm(projected) > s
    while np.any(excess):
        factor = np.where(excess, np.nextafter(factor, 0.0), factor)
        projected = q * factor
        excess = node_norm(projected) > s
    return projected


def gradient(u: CyclicScalarField) -> FlowField:
    return FlowField(u.grid, gradient_array(u.values))


def divergence(q: FlowField) -> CyclicScalarField:
    return CyclicScalarField(q.grid, divergence_array(q.components))


def project_capacity(q: FlowField, S: CyclicScalarField) -> FlowField:
    """Project every node vector onto the ball of radius S"""
    grid = require_same_grid(q, S)
    if np.any(S.values < 0):
        raise ValueError("Capacity S must be nonnegative")
    return FlowField(grid, project_capacity_array(q.components, S.values))
