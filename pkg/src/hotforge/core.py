"""Grid geometry, field containers, normalization and surface-contour extraction.

Everything downstream (oracle, dataset, surrogate, controller) shares the
21 x 11 nodal layout defined here: rows are axial positions (0 = bottom
symmetry plane, 20 = top die face), columns are radial positions (0 = axis,
10 = outer surface).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "FIELD_NAMES",
    "Grid",
    "NormalizationConstants",
    "WorkpieceState",
    "TemperatureContour",
    "UnknownFieldError",
    "normalize_field",
    "denormalize_field",
    "contour_node_indices",
    "extract_contour",
    "state_to_tensor",
    "tensor_to_state",
]

# Channel order used everywhere a state is packed into a (6, 21, 11) tensor.
FIELD_NAMES = ("temperature", "ux", "uy", "eqplast", "rx", "grain")


class UnknownFieldError(KeyError):
    """Raised when a field identifier is not one of FIELD_NAMES."""


@dataclass(frozen=True)
class Grid:
    """Uniform axisymmetric node lattice of the half-model billet."""

    n_axial: int = 21
    n_radial: int = 11
    radius0: float = 2.5       # mm
    half_height0: float = 5.0  # mm

    def __post_init__(self):
        if self.n_axial < 2 or self.n_radial < 2:
            raise ValueError("grid needs at least 2 nodes per axis")

    @property
    def n_nodes(self) -> int:
        return self.n_axial * self.n_radial

    @property
    def dz0(self) -> float:
        return self.half_height0 / (self.n_axial - 1)

    @property
    def dr0(self) -> float:
        return self.radius0 / (self.n_radial - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_axial, self.n_radial)


DEFAULT_GRID = Grid()

# (min, range) per field; temperature in degC, displacements in mm, grain in um.
_DEFAULT_LIMITS = {
    "temperature": (938.0, 512.0),
    "ux": (0.0, 2.41),
    "uy": (-5.0, 5.0),
    "eqplast": (0.0, 1.13),
    "rx": (0.0, 1.0),
    "grain": (17.5, 52.5),
}


@dataclass(frozen=True)
class NormalizationConstants:
    """Per-field (min, range) pairs mapping physical values onto [0, 1]."""

    limits: dict = field(default_factory=lambda: dict(_DEFAULT_LIMITS))

    def __post_init__(self):
        for name, (lo, rng) in self.limits.items():
            if rng <= 0:
                raise ValueError(f"non-positive range for field {name!r}")

    def minimum(self, field_id: str) -> float:
        return self._pair(field_id)[0]

    def span(self, field_id: str) -> float:
        return self._pair(field_id)[1]

    def _pair(self, field_id: str) -> tuple[float, float]:
        try:
            return self.limits[field_id]
        except KeyError:
            raise UnknownFieldError(field_id) from None

    def with_override(self, field_id: str, minimum: float, span: float) -> "NormalizationConstants":
        if span <= 0:
            raise ValueError("range must be positive")
        limits = dict(self.limits)
        limits[field_id] = (float(minimum), float(span))
        return NormalizationConstants(limits)

    def as_dict(self) -> dict:
        return {k: [float(v[0]), float(v[1])] for k, v in self.limits.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationConstants":
        return cls({k: (float(v[0]), float(v[1])) for k, v in d.items()})


DEFAULT_CONSTANTS = NormalizationConstants()


@dataclass
class WorkpieceState:
    """Six nodal fields plus the current half-height / radius of the billet.

    Array layout is row-major (axial, radial); see module docstring for the
    orientation convention.
    """

    temperature: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    eqplast: np.ndarray
    rx: np.ndarray
    grain: np.ndarray
    half_height: float = DEFAULT_GRID.half_height0
    radius: float = DEFAULT_GRID.radius0
    grid: Grid = field(default_factory=Grid)

    @classmethod
    def initial(cls, temperature: float, grain: float = 70.0, grid: Grid = DEFAULT_GRID) -> "WorkpieceState":
        shape = grid.shape
        return cls(
            temperature=np.full(shape, float(temperature)),
            ux=np.zeros(shape),
            uy=np.zeros(shape),
            eqplast=np.zeros(shape),
            rx=np.zeros(shape),
            grain=np.full(shape, float(grain)),
            half_height=grid.half_height0,
            radius=grid.radius0,
            grid=grid,
        )

    def fields(self) -> dict:
        return {name: getattr(self, name) for name in FIELD_NAMES}

    def copy(self) -> "WorkpieceState":
        return replace(self, **{name: getattr(self, name).copy() for name in FIELD_NAMES})

    def validate(self) -> None:
        for name, arr in self.fields().items():
            if arr.shape != self.grid.shape:
                raise ValueError(f"field {name!r} has shape {arr.shape}, expected {self.grid.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"field {name!r} contains non-finite values")
        if np.any(self.rx < 0) or np.any(self.rx > 1):
            raise ValueError("rx outside [0, 1]")
        if np.any(self.grain <= 0):
            raise ValueError("grain must be strictly positive")
        if np.any(self.ux < -1e-12) or np.any(self.uy > 1e-12):
            raise ValueError("displacement sign convention violated")


@dataclass(frozen=True)
class TemperatureContour:
    """Normalized surface temperatures along the measurable free edges."""

    values: np.ndarray

    LENGTH = 31

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.LENGTH,):
            raise ValueError(f"contour must hold exactly {self.LENGTH} values")
        object.__setattr__(self, "values", np.clip(vals, 0.0, 1.0))


def normalize_field(values: np.ndarray, constants: NormalizationConstants, field_id: str) -> np.ndarray:
    """Map physical field values onto [0, 1], clamping outside the limits."""
    lo = constants.minimum(field_id)
    rng = constants.span(field_id)
    return np.clip((np.asarray(values, dtype=float) - lo) / rng, 0.0, 1.0)


def denormalize_field(values: np.ndarray, constants: NormalizationConstants, field_id: str) -> np.ndarray:
    """Inverse of normalize_field on the interior of the clamp region."""
    lo = constants.minimum(field_id)
    rng = constants.span(field_id)
    return np.asarray(values, dtype=float) * rng + lo


def contour_node_indices(grid: Grid = DEFAULT_GRID) -> list[tuple[int, int]]:
    """Node indices sampled by the contour, in measurement order.

    Top edge from the axis corner outwards, then down the outer lateral edge
    to the bottom. The bottom edge (die/symmetry face) and the axis itself
    are excluded.
    """
    top = grid.n_axial - 1
    outer = grid.n_radial - 1
    idx = [(top, c) for c in range(grid.n_radial)]
    idx += [(r, outer) for r in range(top - 1, -1, -1)]
    return idx


def extract_contour(state: WorkpieceState, constants: NormalizationConstants = DEFAULT_CONSTANTS) -> TemperatureContour:
    """Sample the normalized temperature field along the measurable surface."""
    norm = normalize_field(state.temperature, constants, "temperature")
    idx = contour_node_indices(state.grid)
    return TemperatureContour(np.array([norm[r, c] for r, c in idx]))


def state_to_tensor(state: WorkpieceState, constants: NormalizationConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Pack a state into the normalized (6, 21, 11) channel tensor."""
    return np.stack([normalize_field(getattr(state, name), constants, name) for name in FIELD_NAMES])


def tensor_to_state(tensor: np.ndarray, constants: NormalizationConstants = DEFAULT_CONSTANTS,
                    grid: Grid = DEFAULT_GRID) -> WorkpieceState:
    """Unpack a normalized (6, 21, 11) tensor into physical fields.

    Geometry is not recoverable from the tensor; the returned state carries
    the reference grid dimensions.
    """
    tensor = np.asarray(tensor, dtype=float)
    if tensor.shape != (len(FIELD_NAMES),) + grid.shape:
        raise ValueError(f"expected tensor of shape {(len(FIELD_NAMES),) + grid.shape}, got {tensor.shape}")
    fields = {name: denormalize_field(tensor[k], constants, name) for k, name in enumerate(FIELD_NAMES)}
    return WorkpieceState(grid=grid, **fields)
