"""Circular-polarization statistics of the emitted pairs.

Angles are polar angles measured from the pump axis.  Probabilities are
defined along the signal wavevector k; "opposite circular polarization
along k" is the same helicity along each photon's own direction of
travel.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate

from .geometry import SIGMA_PLUS, DipoleOrientation

__all__ = [
    "PolarizationPoint",
    "circular_probabilities",
    "opposite_polarization_probability",
    "bell_fidelity",
    "emission_pattern",
    "entangled_fraction",
    "angular_scan",
    "write_scan_csv",
]


def _check_theta(theta):
    t = np.asarray(theta, dtype=float)
    if np.any((t < 0.0) | (t > math.pi)) or np.any(~np.isfinite(t)):
        raise ValueError("theta must lie in [0, pi]")
    return t


@dataclass(frozen=True)
class PolarizationPoint:
    theta: float
    signal_left: float
    signal_right: float
    idler_left: float
    idler_right: float
    opposite: float


def _beta_left(t):
    # 1 / (1 + cot^4(t/2)) written without the pole at t = 0
    s4 = np.sin(0.5 * t) ** 4
    c4 = np.cos(0.5 * t) ** 4
    return s4 / (s4 + c4)


def circular_probabilities(theta: float) -> PolarizationPoint:
    """Left/right circular-polarization probabilities of signal and idler."""
    t = float(_check_theta(theta))
    left = float(_beta_left(t))
    right = float(_beta_left(math.pi - t))
    return PolarizationPoint(
        theta=t,
        signal_left=left,
        signal_right=right,
        idler_left=right,
        idler_right=left,
        opposite=left * left + right * right,
    )


def opposite_polarization_probability(theta):
    """``(1 + cot^8(theta/2)) / (1 + cot^4(theta/2))^2``; 1 at both poles.

    Evaluated as ``(s^8 + c^8) / (s^4 + c^4)^2`` with ``s, c`` the sine and
    cosine of ``theta/2``, which has no pole.
    """
    t = _check_theta(theta)
    s4 = np.sin(0.5 * t) ** 4
    c4 = np.cos(0.5 * t) ** 4
    p = (s4 * s4 + c4 * c4) / (s4 + c4) ** 2
    return float(p) if p.ndim == 0 else p


def bell_fidelity(theta):
    """Fidelity of a pair to the |Psi+> Bell state, assuming full temporal overlap."""
    return opposite_polarization_probability(theta)


def emission_pattern(cos_theta, dipole: DipoleOrientation = SIGMA_PLUS):
    """Azimuth-averaged ``1 - |k.d|^2`` as a function of ``cos(theta)``."""
    c = np.asarray(cos_theta, dtype=float)
    d = dipole.array
    overlap = 0.5 * (1.0 - c**2) * (abs(d[0]) ** 2 + abs(d[1]) ** 2) + c**2 * abs(d[2]) ** 2
    return 1.0 - overlap


def entangled_fraction(theta_max: float, dipole: DipoleOrientation = SIGMA_PLUS,
                       *, tol: float = 1e-9) -> float:
    """Share of pairs whose signal photon leaves within ``theta_max`` of either pole."""
    if not 0.0 <= theta_max <= math.pi / 2:
        raise ValueError("theta_max must lie in [0, pi/2]")
    if theta_max == 0.0:
        return 0.0
    u0 = math.cos(theta_max)

    def f(u):
        return emission_pattern(u, dipole)

    total, _ = integrate.quad(f, -1.0, 1.0, epsabs=tol, epsrel=0.0)
    north, _ = integrate.quad(f, u0, 1.0, epsabs=tol, epsrel=0.0)
    south, _ = integrate.quad(f, -1.0, -u0, epsabs=tol, epsrel=0.0)
    return min(1.0, (north + south) / total)


def angular_scan(thetas) -> list[PolarizationPoint]:
    return [circular_probabilities(t) for t in np.asarray(thetas, dtype=float)]


def write_scan_csv(path, points) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["theta", "betaL", "betaR", "P", "fidelity"])
        for pt in points:
            fid = bell_fidelity(pt.theta)
            row = (pt.theta, pt.signal_left, pt.signal_right, pt.opposite, fid)
            writer.writerow([f"{v:.17g}" for v in row])
    return path
