"""Reduction of the six-laser silver scheme to butterfly parameters.

Each leg (drive |1> -> |2>, coupling |3> -> |4>) is a chain of lasers
through far-detuned intermediate states.  Eliminating the intermediates
gives the multiphoton Rabi frequency

    omega_eff = prod(omega_i) / (2**(n-1) * prod(delta_j)),

i.e. ``omega1 omega2 omega3 / (4 delta1 delta2)`` for three lasers.  Light
shifts are assumed compensated (legs resonant).

Silver frequencies are rates in GHz (1e9 s^-1).  Reduced parameters are
expressed in units of the 5P3/2 linewidth so the dynamics run in the same
units as the toy model.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ButterflyParams
from .errors import ReductionError
from .geometry import SIGMA_MINUS, SIGMA_PLUS, ModeGrid, ring_enhancement

__all__ = [
    "SILVER_GAMMA_GHZ",
    "SILVER_WAVELENGTH_M",
    "DEFAULT_B_LOSS",
    "MAX_LINK_RATIO",
    "SilverConfig",
    "SilverReduction",
    "RegimeReport",
    "chain_rabi",
    "chain_link_ratios",
    "reduce_silver",
    "effective_params_from_silver",
    "validate_regime",
]

GHZ = 1e9
SILVER_GAMMA_GHZ = 2.0 * math.pi * 0.0234
SILVER_WAVELENGTH_M = 328e-9
# calibrated: cumulative Npair/Nloss = 4 after 20/Gamma at the default lasers
DEFAULT_B_LOSS = 0.63
MAX_LINK_RATIO = 0.5
WEAK_DRIVE_MAX = 0.3
LARGE_KAPPA = 10.0


@dataclass(frozen=True)
class SilverConfig:
    """Laser settings of the silver scheme; all frequencies in GHz.

    ``drive_rabi`` / ``coupling_rabi`` list the lasers of each leg in chain
    order, ``*_detuning`` the detunings of the intermediate states (one
    fewer than lasers).  ``b_loss`` is the fraction of off-resonantly
    excited atoms that decay to hyperfine levels outside the cycle.
    """

    drive_rabi: tuple[float, ...] = (0.4, 9.0, 1.5)
    drive_detuning: tuple[float, ...] = (24.0, 3.0)
    coupling_rabi: tuple[float, ...] = (4.0, 12.0, 0.5)
    coupling_detuning: tuple[float, ...] = (80.0, 0.4)
    gamma: float = SILVER_GAMMA_GHZ
    atom_number: float = 1e6
    radius: float = 20e-6
    wavelength: float = SILVER_WAVELENGTH_M
    b_loss: float = DEFAULT_B_LOSS
    allow_near_resonant: bool = False

    def __post_init__(self):
        for name in ("drive", "coupling"):
            rabi = getattr(self, f"{name}_rabi")
            det = getattr(self, f"{name}_detuning")
            if len(rabi) < 1 or len(det) != len(rabi) - 1:
                raise ValueError(f"{name} chain needs n lasers and n-1 detunings")
            if any(o < 0 for o in rabi):
                raise ValueError(f"{name} Rabi frequencies must be non-negative")
            if any(d == 0 for d in det):
                raise ValueError(f"{name} detunings must be non-zero")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0.0 <= self.b_loss <= 1.0:
            raise ValueError("b_loss must lie in [0, 1]")
        if not (self.radius > 0 and self.wavelength > 0):
            raise ValueError("radius and wavelength must be positive")
        if self.atom_number < 1:
            raise ValueError("atom_number must be >= 1")

    def replace(self, **changes) -> "SilverConfig":
        return dataclasses.replace(self, **changes)


def chain_rabi(rabi, detuning) -> float:
    """Effective Rabi frequency of a laser chain after adiabatic elimination."""
    rabi = tuple(float(o) for o in rabi)
    detuning = tuple(float(d) for d in detuning)
    if len(detuning) != len(rabi) - 1:
        raise ValueError("need one detuning per intermediate state")
    n = len(rabi)
    return math.prod(rabi) / (2.0 ** (n - 1) * math.prod(detuning))


def chain_link_ratios(rabi, detuning) -> list[float]:
    """|omega / delta| of every link, the small parameters of the elimination.

    Chain order: laser 0 reaches the first intermediate (detuning
    ``delta_0``), a middle laser k connects intermediates k-1 and k (energy
    gap ``|delta_{k-1} - delta_k|``), the last laser leaves the last
    intermediate (``delta_{n-2}``).
    """
    n = len(rabi)
    if n == 1:
        return []
    ratios = [abs(rabi[0] / detuning[0])]
    for k in range(1, n - 1):
        gap = abs(detuning[k - 1] - detuning[k])
        ratios.append(math.inf if gap == 0 else abs(rabi[k] / gap))
    ratios.append(abs(rabi[-1] / detuning[-1]))
    return ratios


@dataclass(frozen=True)
class SilverReduction:
    params: ButterflyParams
    omega_d_ghz: float
    omega_c_ghz: float
    rogue_rate_ghz: float
    drive_link_ratios: tuple[float, ...]
    coupling_link_ratios: tuple[float, ...]
    near_resonant: bool
    rogue_detuning_ghz: float | None

    def summary(self) -> dict:
        return {
            "omega_d_eff_GHz": self.omega_d_ghz,
            "omega_c_eff_GHz": self.omega_c_ghz,
            "omega_d_eff_Gamma": self.params.omega_d,
            "omega_c_eff_Gamma": self.params.omega_c,
            "gamma_GHz": self.params.rate_unit_per_s / GHZ,
            "rogue_rate_GHz": self.rogue_rate_ghz,
            "rogue_detuning_GHz": self.rogue_detuning_ghz,
            "drive_link_ratios": list(self.drive_link_ratios),
            "coupling_link_ratios": list(self.coupling_link_ratios),
            "near_resonant": self.near_resonant,
        }


def reduce_silver(cfg: SilverConfig) -> SilverReduction:
    """Full reduction record; see :func:`effective_params_from_silver`."""
    drive_ratios = chain_link_ratios(cfg.drive_rabi, cfg.drive_detuning)
    coupling_ratios = chain_link_ratios(cfg.coupling_rabi, cfg.coupling_detuning)
    near = any(r > MAX_LINK_RATIO for r in drive_ratios + coupling_ratios)
    if near and not cfg.allow_near_resonant:
        bad = [
            f"{leg} link {i + 1}: |omega/delta| = {r:.3g}"
            for leg, ratios in (("drive", drive_ratios), ("coupling", coupling_ratios))
            for i, r in enumerate(ratios)
            if r > MAX_LINK_RATIO
        ]
        raise ReductionError(
            "adiabatic elimination invalid, near-resonant intermediate link ("
            + "; ".join(bad)
            + f" > {MAX_LINK_RATIO}); set allow_near_resonant to override"
        )
    omega_d = chain_rabi(cfg.drive_rabi, cfg.drive_detuning)
    omega_c = chain_rabi(cfg.coupling_rabi, cfg.coupling_detuning)
    # first coupling laser pumps |1> off resonance; the excited atoms decay
    # non-collectively and a fraction b_loss leaves the cycle
    if cfg.coupling_detuning:
        first = cfg.coupling_rabi[0] / (2.0 * cfg.coupling_detuning[0])
        rogue = cfg.b_loss * cfg.gamma * first * first
        rogue_detuning = abs(cfg.coupling_detuning[0])
    else:
        rogue, rogue_detuning = 0.0, None
    g = cfg.gamma
    params = ButterflyParams(
        omega_d=omega_d / g,
        omega_c=omega_c / g,
        atom_number=cfg.atom_number,
        radius=cfg.radius,
        wavelength=cfg.wavelength,
        gamma2=1.0,
        gamma4=1.0,
        dipole2=SIGMA_PLUS,
        dipole4=SIGMA_MINUS,
        rogue_rate=rogue / g,
        rate_unit_per_s=g * GHZ,
    )
    return SilverReduction(
        params=params,
        omega_d_ghz=omega_d,
        omega_c_ghz=omega_c,
        rogue_rate_ghz=rogue,
        drive_link_ratios=tuple(drive_ratios),
        coupling_link_ratios=tuple(coupling_ratios),
        near_resonant=near,
        rogue_detuning_ghz=rogue_detuning,
    )


def effective_params_from_silver(cfg: SilverConfig) -> ButterflyParams:
    """Butterfly parameters (in units of the silver linewidth) for ``cfg``.

    Raises
    ------
    ReductionError
        If any link has ``|omega/delta| > 0.5`` and the config does not
        explicitly allow near-resonant chains.
    """
    return reduce_silver(cfg).params


@dataclass(frozen=True)
class RegimeReport:
    weak_drive: bool
    strong_coupler: bool
    drive_ratio: float
    coupler_ratio: float
    predicted_n2: float
    predicted_n4: float
    predicted_kappa: float
    large_kappa: bool
    notes: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return self.weak_drive and self.strong_coupler and self.large_kappa

    @property
    def warnings(self) -> list[str]:
        out = []
        if not self.weak_drive:
            out.append(f"drive not weak: omega_d/gamma2 = {self.drive_ratio:.3g}")
        if not self.strong_coupler:
            out.append(f"coupler not strong: omega_c/(gamma4 mu N) = {self.coupler_ratio:.3g}")
        if not self.large_kappa:
            out.append(f"kappa estimate {self.predicted_kappa:.3g} is not >> 1")
        return out

    def summary(self) -> dict:
        return {
            "weak_drive": self.weak_drive,
            "strong_coupler": self.strong_coupler,
            "large_kappa": self.large_kappa,
            "drive_ratio": self.drive_ratio,
            "coupler_ratio": self.coupler_ratio,
            "predicted_N2": self.predicted_n2,
            "predicted_Nk4": self.predicted_n4,
            "predicted_kappa": self.predicted_kappa,
            "warnings": self.warnings,
            "notes": list(self.notes),
        }


def validate_regime(params: ButterflyParams, grid: ModeGrid,
                    rogue_detuning_ghz: float | None = None) -> RegimeReport:
    """Check the weak-drive / strong-coupler operating point without simulating."""
    mu2 = ring_enhancement(grid, params.dipole2)
    mu4 = ring_enhancement(grid, params.dipole4)
    N = params.atom_number
    drive_ratio = params.omega_d / params.gamma2
    collective = params.gamma4 * float(np.max(mu4)) * N
    coupler_ratio = params.omega_c / collective if collective > 0 else math.inf
    # two-level saturation estimate with the enhanced decay rate of |2>
    decay = params.gamma2 * float(np.dot(grid.weights, mu2))
    s = (params.omega_d / decay) ** 2
    n2 = N * s / (1.0 + 2.0 * s)
    n4 = n2 / max(N - n2, 1.0)
    kap = N * grid.wavelength**2 / (4.0 * math.pi * grid.radius**2)
    notes = []
    if rogue_detuning_ghz is not None:
        notes.append(
            f"rogue photons detuned by ~{rogue_detuning_ghz:g} GHz from the pairs; "
            "filterable, not modeled"
        )
    return RegimeReport(
        weak_drive=drive_ratio < WEAK_DRIVE_MAX,
        strong_coupler=coupler_ratio >= 1.0,
        drive_ratio=drive_ratio,
        coupler_ratio=coupler_ratio,
        predicted_n2=n2,
        predicted_n4=n4,
        predicted_kappa=kap,
        large_kappa=kap >= LARGE_KAPPA,
        notes=tuple(notes),
    )
