"""
Discretized cylinder domain (spatial grid x cyclic theta bins) and the
field containers the solvers operate on.

Layout: arrays are C-ordered with shape ``spatial_dims + (n_theta,)`` so
theta is the fastest-varying axis. Flow fields prepend one axis holding
the spatial components followed by the theta component.
"""

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from config import FIELD_DTYPE, FIELD_KINDS, FIELD_MAGIC, FIELD_VERSION, MAX_SPATIAL_AXES, TWO_PI


class GridMismatchError(ValueError):
    """Raised when fields that must share a grid do not"""


class FieldFormatError(ValueError):
    """Raised when a binary field cannot be parsed"""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class CylinderGrid:
    """Spatial voxel grid crossed with ``n_theta`` cyclic bins over [-pi, pi)"""

    spatial_dims: Tuple[int, ...]
    n_theta: int

    def __post_init__(self):
        dims = tuple(int(d) for d in self.spatial_dims)
        if not 1 <= len(dims) <= MAX_SPATIAL_AXES:
            raise ValueError(f"Expected 1 to {MAX_SPATIAL_AXES} spatial axes, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise ValueError(f"Spatial dimensions must be positive, got {dims}")
        if int(self.n_theta) < 2:
            raise ValueError(f"n_theta must be at least 2, got {self.n_theta}")
        object.__setattr__(self, 'spatial_dims', dims)
        object.__setattr__(self, 'n_theta', int(self.n_theta))

    @property
    def delta_theta(self) -> float:
        return TWO_PI / self.n_theta

    @property
    def n_axes(self) -> int:
        """Number of spatial axes"""
        return len(self.spatial_dims)

    @property
    def n_voxels(self) -> int:
        return math.prod(self.spatial_dims)

    @property
    def n_nodes(self) -> int:
        return self.n_voxels * self.n_theta

    @property
    def voxel_volume(self) -> float:
        # Unit spacing in every spatial axis
        return 1.0

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.spatial_dims + (self.n_theta,)

    @property
    def flow_shape(self) -> Tuple[int, ...]:
        return (self.n_axes + 1,) + self.shape

    @property
    def theta_centers(self) -> np.ndarray:
        """Bin centers -pi + (k + 1/2) * delta_theta"""
        return -math.pi + (np.arange(self.n_theta) + 0.5) * self.delta_theta


def make_grid(spatial_dims: Sequence[int], n_theta: int) -> CylinderGrid:
    """Build a cylinder grid, rejecting non-positive dims and n_theta < 2"""
    return CylinderGrid(tuple(spatial_dims), n_theta)


def _frozen_copy(values, shape: Tuple[int, ...], name: str) -> np.ndarray:
    array = np.array(values, dtype=np.float64, copy=True)
    if array.shape != shape:
        raise GridMismatchError(f"{name} expects shape {shape}, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} values must be finite")
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class CyclicScalarField:
    """One real value per (voxel, theta-bin): u, p_sink, D and S by role"""

    grid: CylinderGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen_copy(self.values, self.grid.shape, 'CyclicScalarField'))

    @classmethod
    def constant(cls, grid: CylinderGrid, value: float) -> 'CyclicScalarField':
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def zeros(cls, grid: CylinderGrid) -> 'CyclicScalarField':
        return cls.constant(grid, 0.0)


@dataclass(frozen=True, eq=False)
class SpatialScalarField:
    """One real value per voxel: p_source and label maps"""

    grid: CylinderGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'values', _frozen_copy(self.values, self.grid.spatial_dims, 'SpatialScalarField'))

    @classmethod
    def zeros(cls, grid: CylinderGrid) -> 'SpatialScalarField':
        return cls(grid, np.zeros(grid.spatial_dims))

    def broadcast_theta(self) -> CyclicScalarField:
        """Repeat the voxel values over every theta-bin"""
        return CyclicScalarField(self.grid, np.broadcast_to(self.values[..., None], self.grid.shape))


@dataclass(frozen=True, eq=False)
class FlowField:
    """Flow q with one component per spatial axis plus the theta component"""

    grid: CylinderGrid
    components: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'components', _frozen_copy(self.components, self.grid.flow_shape, 'FlowField'))

    @classmethod
    def zeros(cls, grid: CylinderGrid) -> 'FlowField':
        return cls(grid, np.zeros(grid.flow_shape))

    @property
    def theta_component(self) -> np.ndarray:
        return self.components[-1]


AnyField = Union[CyclicScalarField, SpatialScalarField, FlowField]


def require_same_grid(*fields: AnyField) -> CylinderGrid:
    """Return the shared grid or raise GridMismatchError"""
    grid = fields[0].grid
    for other in fields[1:]:
        if other.grid != grid:
            raise GridMismatchError(f"Grid mismatch: {grid} vs {other.grid}")
    return grid


def theta_sum(values: np.ndarray) -> np.ndarray:
    """Sum over the theta axis in sorted order so cyclic shifts give identical results"""
    return np.sort(values, axis=-1).sum(axis=-1)


def uniform_indicator(grid: CylinderGrid) -> CyclicScalarField:
    """The constant density 1/(2 pi), which integrates to 1 over theta"""
    return CyclicScalarField.constant(grid, 1.0 / TWO_PI)


def integrate_theta(f: CyclicScalarField) -> SpatialScalarField:
    """Midpoint rule over theta: per-voxel sum times delta_theta"""
    return SpatialScalarField(f.grid, theta_sum(f.values) * f.grid.delta_theta)


# Binary field format
_HEADER = struct.Struct('<4sHBBB')  # magic, version, kind, n_axes, dtype code
_DIM = struct.Struct('<I')
_DTYPE_CODES = {FIELD_DTYPE: 1}


def _field_kind(f: AnyField) -> str:
    if isinstance(f, CyclicScalarField):
        return 'cyclic'
    if isinstance(f, SpatialScalarField):
        return 'spatial'
    if isinstance(f, FlowField):
        return 'flow'
    raise TypeError(f"Not a field container: {type(f).__name__}")


def field_to_bytes(f: AnyField) -> bytes:
    """Serialize a field: header, spatial dims, n_theta, then float64 LE values"""
    kind = _field_kind(f)
    grid = f.grid
    data = f.components if kind == 'flow' else f.values
    parts = [_HEADER.pack(FIELD_MAGIC, FIELD_VERSION, FIELD_KINDS[kind], grid.n_axes, _DTYPE_CODES[FIELD_DTYPE])]
    parts.extend(_DIM.pack(d) for d in grid.spatial_dims)
    parts.append(_DIM.pack(grid.n_theta))
    parts.append(np.ascontiguousarray(data, dtype=FIELD_DTYPE).tobytes())
    return b''.join(parts)


def field_from_bytes(buffer: bytes) -> AnyField:
    """Parse a serialized field, raising FieldFormatError with the failing offset"""
    if len(buffer) < _HEADER.size:
        raise FieldFormatError(f"Truncated header: need {_HEADER.size} bytes, got {len(buffer)}", len(buffer))
    magic, version, kind_code, n_axes, dtype_code = _HEADER.unpack_from(buffer, 0)
    if magic != FIELD_MAGIC:
        raise FieldFormatError(f"Bad magic {magic!r}", 0)
    if version != FIELD_VERSION:
        raise FieldFormatError(f"Unsupported version {version}", 4)
    kinds = {code: name for name, code in FIELD_KINDS.items()}
    if kind_code not in kinds:
        raise FieldFormatError(f"Unknown field kind {kind_code}", 6)
    if not 1 <= n_axes <= MAX_SPATIAL_AXES:
        raise FieldFormatError(f"Invalid number of spatial axes {n_axes}", 7)
    if dtype_code != _DTYPE_CODES[FIELD_DTYPE]:
        raise FieldFormatError(f"Unsupported element type code {dtype_code}", 8)

    offset = _HEADER.size
    dims = []
    for _ in range(n_axes + 1):
        if len(buffer) < offset + _DIM.size:
            raise FieldFormatError("Truncated dimension table", len(buffer))
        dims.append(_DIM.unpack_from(buffer, offset)[0])
        offset += _DIM.size
    try:
        grid = CylinderGrid(tuple(dims[:-1]), dims[-1])
    except ValueError as e:
        raise FieldFormatError(f"Invalid grid: {e}", _HEADER.size) from e

    kind = kinds[kind_code]
    shape = {'cyclic': grid.shape, 'spatial': grid.spatial_dims, 'flow': grid.flow_shape}[kind]
    n_bytes = math.prod(shape) * np.dtype(FIELD_DTYPE).itemsize
    available = len(buffer) - offset
    if available < n_bytes:
        raise FieldFormatError(f"Truncated values: expected {n_bytes} bytes, got {available}", len(buffer))
    if available > n_bytes:
        raise FieldFormatError(f"{available - n_bytes} trailing bytes after values", offset + n_bytes)
    values = np.frombuffer(buffer, dtype=FIELD_DTYPE, count=math.prod(shape), offset=offset).reshape(shape)
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values.ravel()))[0])
        raise FieldFormatError("Non-finite value", offset + bad * np.dtype(FIELD_DTYPE).itemsize)

    if kind == 'cyclic':
        return CyclicScalarField(grid, values)
    if kind == 'spatial':
        return SpatialScalarField(grid, values)
    return FlowField(grid, values)


def save_field(path: Union[str, Path], f: AnyField) -> Path:
    path = Path(path)
    path.write_bytes(field_to_bytes(f))
    return path


def load_field(path: Union[str, Path]) -> AnyField:
    return field_from_bytes(Path(path).read_bytes())
