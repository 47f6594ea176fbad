"""
Data-term construction for cyclic observations (wrapped phase, hue) and
evaluation of the relaxed energy

    E(u) = sum over (x, theta) of ( D u + S |grad u| ) * delta_theta * voxel volume
"""

import math
from dataclasses import dataclass, field

import numpy as np

from config import ALLOWED_DATA_POWERS, DEFAULT_DATA_POWER, DEFAULT_DATA_SCALE, DEFAULT_N_THETA, TWO_PI
from cylinder_grid import CyclicScalarField, CylinderGrid, SpatialScalarField, make_grid, require_same_grid
from diff_ops import gradient_array, node_norm


def wrap_angle(angle):
    """Map any real angle into [-pi, pi)"""
    wrapped = np.mod(np.asarray(angle, dtype=np.float64) + math.pi, TWO_PI) - math.pi
    # mod can round up to exactly 2 pi for tiny negative inputs
    return np.where(wrapped >= math.pi, wrapped - TWO_PI, wrapped)


def cyclic_distance(a, b):
    """Geodesic distance on the circle, in [0, pi]"""
    d = np.mod(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)), TWO_PI)
    result = np.minimum(d, TWO_PI - d)
    return float(result) if np.ndim(result) == 0 else result


def cyclic_rmse(estimate, truth) -> float:
    """Root mean square of the cyclic distance between two angle maps"""
    d = np.asarray(cyclic_distance(estimate, truth))
    return float(np.sqrt(np.mean(d * d)))


@dataclass(frozen=True, eq=False)
class CyclicObservation:
    """Observed angle in [-pi, pi) and a nonnegative confidence weight per voxel"""

    grid: CylinderGrid
    observed_angle: np.ndarray = field(repr=False)
    weight: np.ndarray = field(repr=False)

    def __post_init__(self):
        angle = np.array(self.observed_angle, dtype=np.float64)
        weight = np.array(self.weight, dtype=np.float64)
        for name, array in (('observed_angle', angle), ('weight', weight)):
            if array.shape != self.grid.spatial_dims:
                raise ValueError(f"{name} shape {array.shape} does not match grid {self.grid.spatial_dims}")
            if not np.all(np.isfinite(array)):
                raise ValueError(f"{name} must be finite")
        if np.any(angle < -math.pi) or np.any(angle >= math.pi):
            raise ValueError("Observed angles must lie in [-pi, pi)")
        if np.any(weight < 0):
            raise ValueError("Observation weights must be nonnegative")
        angle.flags.writeable = False
        weight.flags.writeable = False
        object.__setattr__(self, 'observed_angle', angle)
        object.__setattr__(self, 'weight', weight)


@dataclass(frozen=True)
class EnergyReport:
    data_energy: float
    smoothness_energy: float

    @property
    def total(self) -> float:
        return self.data_energy + self.smoothness_energy


def build_data_term(obs: CyclicObservation,
                    power: int = DEFAULT_DATA_POWER,
                    scale: float = DEFAULT_DATA_SCALE) -> CyclicScalarField:
    """D(x, k) = scale * weight(x) * cyclic_distance(theta_k, observed(x)) ** power"""
    if power not in ALLOWED_DATA_POWERS:
        raise ValueError(f"Data-term power must be one of {ALLOWED_DATA_POWERS}, got {power}")
    if not scale > 0:
        raise ValueError(f"Data-term scale must be positive, got {scale}")
    grid = obs.grid
    distance = cyclic_distance(grid.theta_centers, obs.observed_angle[..., None])
    return CyclicScalarField(grid, scale * obs.weight[..., None] * distance ** power)


def phase_from_complex(real_part, imag_part, n_theta: int = DEFAULT_N_THETA) -> CyclicObservation:
    """Wrapped phase and modulus of a complex image; (0, 0) maps to angle 0, weight 0"""
    real_part = np.asarray(real_part, dtype=np.float64)
    imag_part = np.asarray(imag_part, dtype=np.float64)
    if real_part.shape != imag_part.shape:
        raise ValueError(f"Real/imaginary shapes differ: {real_part.shape} vs {imag_part.shape}")
    grid = make_grid(real_part.shape, n_theta)
    angle = wrap_angle(np.arctan2(imag_part, real_part))
    return CyclicObservation(grid, angle, np.hypot(real_part, imag_part))


def hue_from_rgb(r, g, b, n_theta: int = DEFAULT_N_THETA) -> CyclicObservation:
    """Hexcone hue (red = 0, counterclockwise) with weight saturation * value, in float64"""
    r, g, b = (np.clip(np.asarray(c, dtype=np.float64), 0.0, 1.0) for c in (r, g, b))
    if not r.shape == g.shape == b.shape:
        raise ValueError("RGB channels must share a shape")
    high = np.maximum(np.maximum(r, g), b)
    chroma = high - np.minimum(np.minimum(r, g), b)
    rs, gs, bs = (np.divide(channel, chroma, out=np.zeros_like(chroma), where=chroma > 0) for channel in (r, g, b))
    # sextant position in [0, 6); red wins ties, then green
    sextant = np.where(r == high, np.mod(gs - bs, 6.0), np.where(g == high, bs - rs + 2.0, rs - gs + 4.0))
    hue = wrap_angle(sextant * (math.pi / 3.0))
    # saturation * value is the chroma; gray pixels carry no hue
    hue = np.where(chroma > 0, hue, 0.0)
    return CyclicObservation(make_grid(r.shape, n_theta), hue, chroma)


def energy(u: CyclicScalarField, D: CyclicScalarField, S: CyclicScalarField) -> EnergyReport:
    grid = require_same_grid(u, D, S)
    cell = grid.delta_theta * grid.voxel_volume
    data = float(np.sum(D.values * u.values)) * cell
    smooth = float(np.sum(S.values * node_norm(gradient_array(u.values)))) * cell
    return EnergyReport(data, smooth)


def extract_label_bins(u: CyclicScalarField) -> np.ndarray:
    """Index of the maximal bin per voxel; ties go to the lowest index"""
    return np.argmax(u.values, axis=-1)


def extract_labels(u: CyclicScalarField) -> SpatialScalarField:
    return SpatialScalarField(u.grid, u.grid.theta_centers[extract_label_bins(u)])


def labels_to_indicator(label_bins, grid: CylinderGrid) -> CyclicScalarField:
    """One-hot density (1 / delta_theta in the chosen bin) for a hard labeling"""
    label_bins = np.asarray(label_bins)
    if label_bins.shape != grid.spatial_dims:
        raise ValueError(f"Label shape {label_bins.shape} does not match grid {grid.spatial_dims}")
    if np.any(label_bins < 0) or np.any(label_bins >= grid.n_theta):
        raise ValueError("Label bins out of range")
    one_hot = (np.arange(grid.n_theta) == label_bins[..., None]) / grid.delta_theta
    return CyclicScalarField(grid, one_hot)
