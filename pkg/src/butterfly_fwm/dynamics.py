"""Collective-mode rate equations of the butterfly level scheme.

Populations ``N1``, ``N2`` and the drive coherence ``rho21`` are global;
``N3``, ``N4`` and the coupler coherence ``rho43`` are resolved per ring
of the mode grid (one representative mode per ring, sums weighted by the
ring degeneracy).  Two counters accumulate the generated pairs and the
atoms lost to non-collective decay.

Time is measured in units of ``1 / rate`` for whatever rate unit the
parameters use; for the toy model that is ``1 / Gamma``.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import _backend
from .errors import IntegrationError, SteadyStateError
from .geometry import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    DipoleOrientation,
    ModeGrid,
    ring_enhancement,
)

log = logging.getLogger(__name__)

__all__ = [
    "ButterflyParams",
    "SystemState",
    "IntegratorControl",
    "Trajectory",
    "rhs",
    "integrate",
    "steady_state",
    "steady_residual",
    "emission_rates",
    "pairing_ratio",
    "kappa",
    "sphere_kappa_estimate",
    "fit_linear_rate",
]


@dataclass(frozen=True)
class ButterflyParams:
    """Physical constants of one butterfly scheme.

    Rates and Rabi frequencies share one unit (``Gamma`` for the toy model).
    ``rogue_rate`` is an extra per-atom loss rate out of ``|1>`` used by the
    reduced silver model; it is zero in the toy model.  ``rate_unit_per_s``
    converts the rate unit to s^-1 when it is known.
    """

    omega_d: float
    omega_c: float
    atom_number: float
    radius: float
    wavelength: float
    gamma2: float = 1.0
    gamma4: float = 1.0
    dipole2: DipoleOrientation = SIGMA_PLUS
    dipole4: DipoleOrientation = SIGMA_MINUS
    rogue_rate: float = 0.0
    rate_unit_per_s: float | None = None
    pump_axis: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        if not (self.gamma2 > 0 and self.gamma4 > 0):
            raise ValueError("gamma2 and gamma4 must be positive")
        if self.omega_d < 0 or self.omega_c < 0:
            raise ValueError("Rabi frequencies must be non-negative")
        if self.atom_number < 1:
            raise ValueError("atom_number must be >= 1")
        if not (self.radius > 0 and self.wavelength > 0):
            raise ValueError("radius and wavelength must be positive")
        if self.rogue_rate < 0:
            raise ValueError("rogue_rate must be non-negative")

    def replace(self, **changes) -> "ButterflyParams":
        return dataclasses.replace(self, **changes)


@dataclass
class SystemState:
    """Dynamical variables at one instant (or their time derivatives)."""

    n1: float
    n2: float
    rho21: complex
    n3: np.ndarray
    n4: np.ndarray
    rho43: np.ndarray
    n_pair: float = 0.0
    n_loss: float = 0.0
    t: float = 0.0

    @property
    def ring_count(self) -> int:
        return self.n3.shape[0]

    @classmethod
    def ground(cls, atom_number: float, ring_count: int) -> "SystemState":
        """All atoms in ``|1>``, nothing else populated."""
        z = np.zeros(ring_count)
        return cls(float(atom_number), 0.0, 0j, z.copy(), z.copy(), np.zeros(ring_count, complex))

    def to_vector(self) -> np.ndarray:
        J = self.ring_count
        y = np.empty(6 + 4 * J)
        y[0], y[1] = self.n1, self.n2
        y[2], y[3] = self.rho21.real, self.rho21.imag
        y[4 : 4 + J] = self.n3
        y[4 + J : 4 + 2 * J] = self.n4
        y[4 + 2 * J : 4 + 3 * J] = np.real(self.rho43)
        y[4 + 3 * J : 4 + 4 * J] = np.imag(self.rho43)
        y[4 + 4 * J] = self.n_pair
        y[5 + 4 * J] = self.n_loss
        return y

    @classmethod
    def from_vector(cls, y, t: float = 0.0) -> "SystemState":
        y = np.asarray(y, dtype=float)
        J, rem = divmod(y.shape[0] - 6, 4)
        if rem or J < 1:
            raise ValueError(f"state vector length {y.shape[0]} does not match any ring count")
        return cls(
            n1=float(y[0]),
            n2=float(y[1]),
            rho21=complex(y[2], y[3]),
            n3=y[4 : 4 + J].copy(),
            n4=y[4 + J : 4 + 2 * J].copy(),
            rho43=y[4 + 2 * J : 4 + 3 * J] + 1j * y[4 + 3 * J : 4 + 4 * J],
            n_pair=float(y[4 + 4 * J]),
            n_loss=float(y[5 + 4 * J]),
            t=float(t),
        )

    def total_atoms(self, grid: ModeGrid) -> float:
        """Atoms still taking part in the collective cycle."""
        return self.n1 + self.n2 + float(np.dot(grid.weights, self.n3 + self.n4))


class _Coupling:
    """Per-ring arrays handed to the kernels."""

    def __init__(self, params: ButterflyParams, grid: ModeGrid):
        ratio_p = params.radius / params.wavelength
        ratio_g = grid.radius / grid.wavelength
        if abs(ratio_p - ratio_g) > 1e-9 * ratio_p:
            raise ValueError(
                f"grid was built for R/lambda = {ratio_g!r} but parameters give {ratio_p!r}"
            )
        self.J = grid.ring_count
        self.mu2 = np.ascontiguousarray(ring_enhancement(grid, params.dipole2), dtype=float)
        self.mu4 = np.ascontiguousarray(ring_enhancement(grid, params.dipole4), dtype=float)
        self.w = np.ascontiguousarray(grid.weights, dtype=float)
        self.wmu2 = self.w * self.mu2
        self.wmu4 = self.w * self.mu4
        self.p = np.array(
            [params.gamma2, params.gamma4, params.omega_d, params.omega_c, params.rogue_rate, 0.0]
        )

    def packed(self, conserve: bool):
        p = self.p.copy()
        p[5] = 1.0 if conserve else 0.0
        return p, self.mu2, self.mu4, self.wmu2, self.wmu4, self.w


def _check_dims(state: SystemState, grid: ModeGrid):
    J = grid.ring_count
    for name in ("n3", "n4", "rho43"):
        if getattr(state, name).shape != (J,):
            raise ValueError(
                f"state.{name} has shape {getattr(state, name).shape}, grid has {J} rings"
            )


def rhs(state: SystemState, params: ButterflyParams, grid: ModeGrid, *,
        conserve_atoms: bool = False, threads: int = 1, backend: str | None = None) -> SystemState:
    """Time derivative of every dynamical variable.

    With ``conserve_atoms`` the non-collective decays of ``|4>`` are fed back
    into ``|1>`` (atom losses neglected, as used for the steady state) and the
    counters are frozen.
    """
    _check_dims(state, grid)
    kern = _backend.get_kernels(backend)
    cp = _Coupling(params, grid)
    y = state.to_vector()
    out = np.empty_like(y)
    kern.rhs(y, *cp.packed(conserve_atoms), out, threads)
    return SystemState.from_vector(out, state.t)


@dataclass(frozen=True)
class IntegratorControl:
    """Step and tolerance settings of the adaptive integrator.

    ``max_step`` defaults to ``0.01 / omega_c``, resolving the coupler
    oscillation; ``fit_fraction`` is the trailing share of samples used for
    the linear rate fits.
    """

    rtol: float = 1e-8
    atol: float = 1e-10
    max_step: float | None = None
    first_step: float | None = None
    samples: int = 1001
    fit_fraction: float = 0.7
    max_steps: int = 50_000_000
    threads: int = 1
    backend: str | None = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("tolerances must be positive")
        if self.samples < 2:
            raise ValueError("need at least two samples")
        if not 0 < self.fit_fraction <= 1:
            raise ValueError("fit_fraction must lie in (0, 1]")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def resolved_max_step(self, params: ButterflyParams, t_end: float) -> float:
        if self.max_step is not None:
            return float(self.max_step)
        if params.omega_c > 0:
            return min(0.01 / params.omega_c, t_end)
        return t_end / 100.0


def fit_linear_rate(times, values, fraction: float = 0.7):
    """Least-squares slope over the trailing ``fraction`` of the samples.

    Returns ``(slope, intercept, rms_residual, t_start)``.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    start = min(int(round((1.0 - fraction) * (times.size - 1))), times.size - 2)
    tt, vv = times[start:], values[start:]
    slope, intercept = np.polyfit(tt, vv, 1)
    resid = vv - (slope * tt + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))), float(tt[0])


@dataclass
class Trajectory:
    """Sampled solution of the rate equations plus fitted linear rates."""

    times: np.ndarray
    states: np.ndarray
    params: ButterflyParams
    grid: ModeGrid
    pair_rate: float
    loss_rate: float
    fit_start: float
    pair_fit_rms: float
    loss_fit_rms: float
    stats: dict = field(default_factory=dict)

    def _block(self, k):
        J = self.grid.ring_count
        return self.states[:, 4 + k * J : 4 + (k + 1) * J]

    @property
    def n1(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def n2(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def nbar3(self) -> np.ndarray:
        """Mode-averaged N3 (negative integration noise clamped)."""
        w = self.grid.weights
        return np.clip(self._block(0), 0.0, None) @ w / w.sum()

    @property
    def nbar4(self) -> np.ndarray:
        w = self.grid.weights
        return np.clip(self._block(1), 0.0, None) @ w / w.sum()

    @property
    def n_pair(self) -> np.ndarray:
        return self.states[:, -2]

    @property
    def n_loss(self) -> np.ndarray:
        return self.states[:, -1]

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def state(self, index: int = -1) -> SystemState:
        return SystemState.from_vector(self.states[index], self.times[index])

    def total_atoms(self) -> np.ndarray:
        w = self.grid.weights
        return self.n1 + self.n2 + (self._block(0) + self._block(1)) @ w

    def columns(self) -> dict:
        return {
            "t": self.times,
            "N1": self.n1,
            "N2": self.n2,
            "Nbar3": self.nbar3,
            "Nbar4": self.nbar4,
            "Npair": self.n_pair,
            "Nloss": self.n_loss,
        }


def integrate(initial: SystemState, params: ButterflyParams, grid: ModeGrid, t_end: float,
              control: IntegratorControl | None = None) -> Trajectory:
    """Integrate from ``initial`` (taken at t = 0) to ``t_end``.

    Raises
    ------
    IntegrationError
        On step-size underflow, a non-finite state, or the step-count cap.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    control = control or IntegratorControl()
    _check_dims(initial, grid)
    kern = _backend.get_kernels(control.backend)
    cp = _Coupling(params, grid)
    max_step = control.resolved_max_step(params, t_end)
    first_step = control.first_step if control.first_step is not None else min(max_step, 1e-3 * t_end)
    times = np.linspace(0.0, float(t_end), control.samples)
    y0 = np.ascontiguousarray(initial.to_vector())

    status, t_fail, samples, n_acc, n_rej, nfev = kern.integrate(
        y0, *cp.packed(False), times, control.rtol, control.atol, max_step, first_step,
        control.max_steps, control.threads,
    )
    if status == 1:
        raise IntegrationError("step size underflow (stiffness failure)", t_fail)
    if status == 2:
        raise IntegrationError("non-finite state encountered", t_fail)
    if status == 3:
        raise IntegrationError(f"step limit {control.max_steps} exhausted", t_fail)
    samples = np.asarray(samples)
    log.debug("integrated to t=%g: %d steps, %d rejected, %d rhs calls", t_end, n_acc, n_rej, nfev)

    pair_rate, _, pair_rms, fit_start = fit_linear_rate(times, samples[:, -2], control.fit_fraction)
    loss_rate, _, loss_rms, _ = fit_linear_rate(times, samples[:, -1], control.fit_fraction)
    return Trajectory(
        times=times,
        states=samples,
        params=params,
        grid=grid,
        pair_rate=pair_rate,
        loss_rate=loss_rate,
        fit_start=fit_start,
        pair_fit_rms=pair_rms,
        loss_fit_rms=loss_rms,
        stats={
            "accepted_steps": int(n_acc),
            "rejected_steps": int(n_rej),
            "rhs_evaluations": int(nfev),
            "max_step": max_step,
            "backend": kern.BACKEND,
            "threads": control.threads,
        },
    )


def _ring_steady(n1, n2, params: ButterflyParams, mu2, mu4):
    """Closed-form ring occupations for fixed N1, N2."""
    a = params.gamma2 * mu2 * n2
    b = params.gamma4 * (mu4 * n1 + 1.0)
    c = b - a
    oc2 = params.omega_c**2
    n4 = a / (c * (1.0 - a * b / oc2))
    n3 = n4 * (1.0 + b * c / oc2)
    qi = params.omega_c * (n3 - n4) / c
    return n3, n4, qi


def _assemble(x, params, grid, mu2, mu4):
    N = params.atom_number
    n1, n2 = x[0] * N, x[1] * N
    n3, n4, qi = _ring_steady(n1, n2, params, mu2, mu4)
    w = grid.weights
    s3 = np.dot(w * mu2, n3 + 1.0)
    s4 = np.dot(w * mu4, n4)
    d = params.gamma4 * s4 - params.gamma2 * s3
    ri = -params.omega_d * (n1 - n2) / d
    state = SystemState(n1, n2, complex(0.0, ri), n3, n4, 1j * qi)
    return state, s3


def steady_residual(state: SystemState, params: ButterflyParams, grid: ModeGrid) -> float:
    """Relative residual |rhs| / |state| of the loss-free equations."""
    d = rhs(state, params, grid, conserve_atoms=True).to_vector()[:-2]
    y = state.to_vector()[:-2]
    return float(np.linalg.norm(d) / np.linalg.norm(y))


def steady_state(params: ButterflyParams, grid: ModeGrid, *, tol: float = 1e-10,
                 max_iter: int = 200) -> SystemState:
    """Stationary state with atom losses neglected.

    Ring variables follow in closed form from ``N1`` and ``N2``; those two
    are found from the ``N2`` balance and total-atom conservation.

    Raises
    ------
    SteadyStateError
        If the relative residual is still above ``tol`` after ``max_iter``
        function evaluations.
    """
    if not params.omega_d > 0:
        raise ValueError("steady state needs omega_d > 0")
    if not params.omega_c > 0:
        raise ValueError("steady state needs omega_c > 0 (no transfer out of |3> otherwise)")
    cp = _Coupling(params, grid)
    mu2, mu4 = cp.mu2, cp.mu4
    N = params.atom_number
    w = grid.weights

    def equations(x):
        state, s3 = _assemble(x, params, grid, mu2, mu4)
        f2 = params.omega_d * state.rho21.imag - params.gamma2 * state.n2 * s3
        total = state.total_atoms(grid)
        return [f2 / (params.gamma2 * N), total / N - 1.0]

    # two-level estimate of the excited fraction as starting point
    s = (params.omega_d / params.gamma2) ** 2 / np.dot(w, mu2) ** 2
    x0 = [1.0 - s / (1.0 + 2.0 * s), s / (1.0 + 2.0 * s)]
    sol = optimize.root(equations, x0, method="hybr", options={"xtol": 1e-15, "maxfev": max_iter})
    state, _ = _assemble(sol.x, params, grid, mu2, mu4)
    residual = steady_residual(state, params, grid)
    if not (np.isfinite(residual) and residual < tol):
        raise SteadyStateError("steady-state solve did not converge", residual)
    return state


def emission_rates(state: SystemState, params: ButterflyParams, grid: ModeGrid):
    """Total signal and idler emission rates ``(R_S, R_I)``."""
    _check_dims(state, grid)
    mu2 = ring_enhancement(grid, params.dipole2)
    mu4 = ring_enhancement(grid, params.dipole4)
    w = grid.weights
    n1 = max(state.n1, 0.0)
    n2 = max(state.n2, 0.0)
    n3 = np.clip(state.n3, 0.0, None)
    n4 = np.clip(state.n4, 0.0, None)
    r_s = params.gamma2 * n2 * float(np.dot(w * mu2, n3 + 1.0))
    r_i = params.gamma4 * (n1 + 1.0) * float(np.dot(w * mu4, n4))
    return r_s, r_i


def pairing_ratio(state: SystemState, ring: int) -> float:
    """Idler-to-signal rate ratio along one direction, equal mu and Gamma assumed.

    ``((N1 + 1) / N2) * (N4 / (N3 + 1))``.
    """
    if not state.n2 > 0:
        raise ValueError("pairing ratio is undefined for N2 = 0")
    return (state.n1 + 1.0) / state.n2 * (state.n4[ring] / (state.n3[ring] + 1.0))


def kappa(state: SystemState, params: ButterflyParams, grid: ModeGrid) -> float:
    """Pair-generation to atom-loss rate ratio ``N1 * mu_bar``."""
    mu4 = ring_enhancement(grid, params.dipole4)
    w = grid.weights
    n4 = np.clip(state.n4, 0.0, None)
    total = float(np.dot(w, n4))
    if not total > 0:
        raise ValueError("kappa is undefined without idler population")
    return state.n1 * float(np.dot(w * mu4, n4)) / total


def sphere_kappa_estimate(atom_number: float, radius: float, wavelength: float) -> float:
    """Rough spherical-sample estimate ``N lambda^2 / (4 pi R^2)``."""
    return atom_number * wavelength**2 / (4.0 * np.pi * radius**2)
