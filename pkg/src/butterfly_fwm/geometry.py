"""Collective emission modes on the full sphere.

The sphere is cut into equal-area polar rings (uniform in ``cos(theta)``).
Every ring carries one representative mode and a degeneracy weight equal
to the ring solid angle divided by the per-mode solid angle
``(wavelength / (2 * radius))**2``.  Weights are fractional; only weighted
sums over modes ever enter the dynamics.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DipoleOrientation",
    "ModeGrid",
    "SIGMA_PLUS",
    "SIGMA_MINUS",
    "LINEAR_Z",
    "build_mode_grid",
    "enhancement_factor",
    "enhancement_prefactor",
    "ring_enhancement",
    "enhancement_sum",
    "write_grid_csv",
]

_NORM_TOL = 1e-12


@dataclass(frozen=True)
class DipoleOrientation:
    """Complex unit dipole vector of one transition."""

    vector: tuple[complex, complex, complex]
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=complex)
        if v.shape != (3,):
            raise ValueError("dipole vector must have three components")
        norm = float(np.vdot(v, v).real)
        if abs(norm - 1.0) > _NORM_TOL:
            raise ValueError(f"dipole vector is not normalised (|d|^2 = {norm!r})")

    @classmethod
    def from_components(cls, components, label: str = "", normalize: bool = True):
        v = np.asarray(components, dtype=complex)
        if normalize:
            v = v / np.sqrt(np.vdot(v, v).real)
        return cls(tuple(complex(c) for c in v), label)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.vector, dtype=complex)


_S2 = 1.0 / np.sqrt(2.0)
SIGMA_PLUS = DipoleOrientation((_S2, 1j * _S2, 0j), "sigma+")
SIGMA_MINUS = DipoleOrientation((_S2, -1j * _S2, 0j), "sigma-")
LINEAR_Z = DipoleOrientation((0j, 0j, 1 + 0j), "z")


@dataclass(frozen=True, eq=False)
class ModeGrid:
    """Equal-area ring discretisation of the emission sphere.

    Attributes
    ----------
    boundaries : ndarray, shape (rings + 1,)
        Polar ring edges in radians, increasing from 0 to pi.
    theta : ndarray, shape (rings,)
        Polar angle of each ring's representative mode (equal-area midpoint).
    directions : ndarray, shape (rings, 3)
        Unit vector of the representative mode (azimuth 0).
    weights : ndarray, shape (rings,)
        Number of collective modes in each ring (fractional).
    mode_solid_angle : float
        Solid angle of one collective mode, ``(wavelength / 2 radius)**2``.
    """

    boundaries: np.ndarray
    theta: np.ndarray
    directions: np.ndarray
    weights: np.ndarray
    mode_solid_angle: float
    wavelength: float
    radius: float
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for name in ("boundaries", "theta", "directions", "weights"):
            getattr(self, name).setflags(write=False)

    @property
    def ring_count(self) -> int:
        return self.theta.size

    @property
    def mode_count(self) -> float:
        return float(self.weights.sum())

    @property
    def cos_theta(self) -> np.ndarray:
        return self.directions[:, 2]

    def ring_index(self, theta: float) -> int:
        """Index of the ring containing polar angle ``theta``."""
        if not 0.0 <= theta <= np.pi:
            raise ValueError("theta must lie in [0, pi]")
        j = int(np.searchsorted(self.boundaries, theta, side="right")) - 1
        return min(max(j, 0), self.ring_count - 1)


def build_mode_grid(radius: float, wavelength: float, ring_count: int) -> ModeGrid:
    """Partition the sphere into ``ring_count`` equal-area rings.

    ``radius`` and ``wavelength`` only need to share a length unit.
    """
    if not (radius > 0 and wavelength > 0):
        raise ValueError("radius and wavelength must be positive")
    if radius < wavelength:
        raise ValueError(
            f"radius {radius!r} is smaller than the wavelength {wavelength!r}; "
            "collective modes are not defined for such a small sample"
        )
    if int(ring_count) != ring_count or ring_count < 2:
        raise ValueError("ring_count must be an integer >= 2")
    ring_count = int(ring_count)

    mode_solid_angle = (wavelength / (2.0 * radius)) ** 2
    cos_edges = np.linspace(1.0, -1.0, ring_count + 1)
    cos_edges[0], cos_edges[-1] = 1.0, -1.0
    boundaries = np.arccos(cos_edges)
    cos_mid = 0.5 * (cos_edges[:-1] + cos_edges[1:])
    theta = np.arccos(cos_mid)
    sin_mid = np.sqrt(1.0 - cos_mid**2)
    directions = np.column_stack([sin_mid, np.zeros_like(sin_mid), cos_mid])
    ring_solid_angle = 2.0 * np.pi * (cos_edges[:-1] - cos_edges[1:])
    weights = ring_solid_angle / mode_solid_angle
    return ModeGrid(
        boundaries=boundaries,
        theta=theta,
        directions=directions,
        weights=weights,
        mode_solid_angle=mode_solid_angle,
        wavelength=float(wavelength),
        radius=float(radius),
    )


def enhancement_prefactor(radius: float, wavelength: float) -> float:
    """Largest possible enhancement, reached transverse to a linear dipole."""
    return 3.0 / (8.0 * np.pi) * (wavelength / (2.0 * radius)) ** 2


def enhancement_factor(direction, dipole: DipoleOrientation, radius: float, wavelength: float) -> float:
    """Collective enhancement of emission into the mode along ``direction``.

    mu = (1 - |k.d|^2) * 3/(8 pi) * (lambda / 2R)^2, real part only.
    """
    k = np.asarray(direction, dtype=float)
    if k.shape != (3,):
        raise ValueError("direction must be a 3-vector")
    if abs(np.linalg.norm(k) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    overlap = abs(np.dot(k, dipole.array)) ** 2
    transverse = max(0.0, 1.0 - overlap)
    return transverse * enhancement_prefactor(radius, wavelength)


def ring_enhancement(grid: ModeGrid, dipole: DipoleOrientation) -> np.ndarray:
    """Azimuthally averaged enhancement factor of every ring.

    For dipoles symmetric about z this equals the pointwise value at the
    ring's representative direction.
    """
    key = ("mu", dipole.vector)
    cached = grid._cache.get(key)
    if cached is not None:
        return cached
    d = dipole.array
    c = grid.cos_theta
    s2 = 1.0 - c**2
    # <|k.d|^2>_phi for k = (s cos phi, s sin phi, c)
    overlap = 0.5 * s2 * (abs(d[0]) ** 2 + abs(d[1]) ** 2) + c**2 * abs(d[2]) ** 2
    mu = np.clip(1.0 - overlap, 0.0, None) * enhancement_prefactor(grid.radius, grid.wavelength)
    mu.setflags(write=False)
    grid._cache[key] = mu
    return mu


def enhancement_sum(grid: ModeGrid, dipole: DipoleOrientation) -> float:
    """Total enhancement summed over every mode; tends to 1."""
    return float(np.dot(grid.weights, ring_enhancement(grid, dipole)))


def write_grid_csv(path, grid: ModeGrid, signal: DipoleOrientation, idler: DipoleOrientation) -> Path:
    path = Path(path)
    mu_s = ring_enhancement(grid, signal)
    mu_i = ring_enhancement(grid, idler)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["theta_center", "weight", "mu_signal", "mu_idler"])
        for row in zip(grid.theta, grid.weights, mu_s, mu_i):
            writer.writerow([f"{v:.17g}" for v in row])
    return path
