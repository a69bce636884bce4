"""Signal-idler cross-correlation of opposite-momentum modes.

Uses the strong-coupling closed form

    g2(tau) = 1 + chi(tau) / N4,
    chi(tau) = sin^2(omega_c tau / 2) * exp(-gamma4 mu4 N1 tau / 2),

evaluated on a steady state.  Zero-delay auto-correlations of the signal
and idler fields are taken as 2 (thermal single-mode statistics) when
forming the Cauchy-Schwarz ratio.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import optimize

from .dynamics import ButterflyParams, SystemState
from .errors import RegimeWarning
from .geometry import ModeGrid, ring_enhancement

__all__ = [
    "AUTO_CORRELATION_ZERO_DELAY",
    "CorrelationCurve",
    "chi",
    "is_strong_coupling",
    "g2_cross",
    "first_peak",
    "correlation_curve",
    "cs_violation",
    "idler_delay",
]

AUTO_CORRELATION_ZERO_DELAY = 2.0


def is_strong_coupling(omega_c: float, gamma4: float, mu: float, n1: float) -> bool:
    return omega_c >= gamma4 * mu * n1


def chi(tau, omega_c: float, gamma4: float, mu: float, n1: float, *, warn: bool = True):
    """Damped oscillation factor of the cross-correlation.

    Warns with :class:`RegimeWarning` when ``omega_c < gamma4 * mu * n1``;
    the formula is evaluated regardless.
    """
    tau_arr = np.asarray(tau, dtype=float)
    if np.any(tau_arr < 0):
        raise ValueError("tau must be non-negative")
    if warn and not is_strong_coupling(omega_c, gamma4, mu, n1):
        warnings.warn(
            f"coupler omega_c={omega_c:g} is below the collective rate "
            f"{gamma4 * mu * n1:g}; closed-form chi is outside its regime",
            RegimeWarning,
            stacklevel=2,
        )
    val = np.sin(0.5 * omega_c * tau_arr) ** 2 * np.exp(-0.5 * gamma4 * mu * n1 * tau_arr)
    return float(val) if np.ndim(val) == 0 else val


def _ring_inputs(ring: int, steady: SystemState, params: ButterflyParams, grid: ModeGrid):
    n4 = float(steady.n4[ring])
    if not n4 > 0:
        raise ValueError(f"ring {ring} has no idler population; g2 is undefined")
    mu = float(ring_enhancement(grid, params.dipole4)[ring])
    return n4, mu


def g2_cross(ring: int, tau, steady: SystemState, params: ButterflyParams, grid: ModeGrid,
             *, warn: bool = True):
    """``1 + chi(tau) / N4`` for the given ring."""
    n4, mu = _ring_inputs(ring, steady, params, grid)
    c = chi(tau, params.omega_c, params.gamma4, mu, steady.n1, warn=warn)
    return 1.0 + c / n4


def first_peak(ring: int, steady: SystemState, params: ButterflyParams, grid: ModeGrid):
    """Position, height and full width at half maximum of the first g2 peak.

    The maximum of ``sin^2(x) exp(-2 gamma x / omega_c)`` sits at
    ``tan x = omega_c / gamma`` with ``gamma = gamma4 mu N1 / 2``.  The width
    is NaN when the peak is lower than twice the baseline of 1.
    """
    n4, mu = _ring_inputs(ring, steady, params, grid)
    oc = params.omega_c
    if not oc > 0:
        raise ValueError("g2 peak needs omega_c > 0")
    damping = 0.5 * params.gamma4 * mu * steady.n1
    tau_peak = 2.0 * math.atan2(oc, damping) / oc

    def g(t):
        return 1.0 + chi(t, oc, params.gamma4, mu, steady.n1, warn=False) / n4

    peak = g(tau_peak)
    half = 0.5 * peak
    if half <= 1.0:
        return tau_peak, peak, float("nan")
    period_end = 2.0 * math.pi / oc
    left = optimize.brentq(lambda t: g(t) - half, 0.0, tau_peak, xtol=1e-15, rtol=1e-14)
    right = optimize.brentq(lambda t: g(t) - half, tau_peak, period_end, xtol=1e-15, rtol=1e-14)
    return tau_peak, peak, right - left


@dataclass
class CorrelationCurve:
    tau: np.ndarray
    g2: np.ndarray
    peak: float
    peak_tau: float
    fwhm: float
    theta: float
    ring: int
    cs_factor: float
    strong_coupling: bool

    def summary(self) -> dict:
        return {
            "ring": self.ring,
            "theta": self.theta,
            "peak": self.peak,
            "peak_tau": self.peak_tau,
            "fwhm": self.fwhm,
            "cs_factor": self.cs_factor,
            "strong_coupling": self.strong_coupling,
        }

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["tau", "g2"])
            for t, v in zip(self.tau, self.g2):
                writer.writerow([f"{t:.17g}", f"{v:.17g}"])
        return path


def cs_violation(ring: int, steady: SystemState, params: ButterflyParams, grid: ModeGrid) -> float:
    """``max_tau g2_si^2 / (g2_ss(0) g2_ii(0))``; above 1 is nonclassical."""
    _, peak, _ = first_peak(ring, steady, params, grid)
    return peak**2 / AUTO_CORRELATION_ZERO_DELAY**2


def idler_delay(ring: int, steady: SystemState, params: ButterflyParams, grid: ModeGrid) -> float:
    """Typical idler delay ``1 / (gamma4 mu4 N1)``."""
    mu = float(ring_enhancement(grid, params.dipole4)[ring])
    rate = params.gamma4 * mu * steady.n1
    if not rate > 0:
        raise ValueError("idler delay is undefined for zero collective rate")
    return 1.0 / rate


def correlation_curve(ring: int, steady: SystemState, params: ButterflyParams, grid: ModeGrid,
                      *, tau_max: float | None = None, samples: int = 4001) -> CorrelationCurve:
    """Sample g2 on ``[0, tau_max]``; default span is ten idler delays."""
    n4, mu = _ring_inputs(ring, steady, params, grid)
    strong = is_strong_coupling(params.omega_c, params.gamma4, mu, steady.n1)
    if not strong:
        warnings.warn(
            f"ring {ring}: coupler below the collective rate, g2 outside its validity regime",
            RegimeWarning,
            stacklevel=2,
        )
    if tau_max is None:
        tau_max = 10.0 / (params.gamma4 * mu * steady.n1)
    tau = np.linspace(0.0, tau_max, samples)
    g2 = g2_cross(ring, tau, steady, params, grid, warn=False)
    peak_tau, peak, fwhm = first_peak(ring, steady, params, grid)
    return CorrelationCurve(
        tau=tau,
        g2=g2,
        peak=peak,
        peak_tau=peak_tau,
        fwhm=fwhm,
        theta=float(grid.theta[ring]),
        ring=ring,
        cs_factor=peak**2 / AUTO_CORRELATION_ZERO_DELAY**2,
        strong_coupling=strong,
    )
