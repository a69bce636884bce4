import math

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from butterfly_fwm import (
    ButterflyParams,
    ReductionError,
    SilverConfig,
    build_mode_grid,
    effective_params_from_silver,
    reduce_silver,
    validate_regime,
)
from butterfly_fwm.schemes import SILVER_GAMMA_GHZ, chain_link_ratios, chain_rabi
from oracles import chain_splitting

DEFAULT_LASERS = SilverConfig(allow_near_resonant=True)


def test_default_chain_values():
    assert chain_rabi((0.4, 9.0, 1.5), (24.0, 3.0)) == pytest.approx(0.01875, rel=1e-14)
    assert chain_rabi((4.0, 12.0, 0.5), (80.0, 0.4)) == pytest.approx(0.1875, rel=1e-14)
    assert chain_rabi((0.3,), ()) == 0.3
    assert chain_rabi((0.3, 0.2), (4.0,)) == pytest.approx(0.3 * 0.2 / 8.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 0.05), min_size=3, max_size=3),
       st.floats(1.0, 3.0), st.floats(1.0, 3.0))
def test_formula_matches_oracle_when_perturbative(rabi, d1, d2):
    assume(abs(d1 - d2) > 0.5)
    ratios = chain_link_ratios(rabi, (d1, d2))
    assert max(ratios) <= 0.1
    exact = chain_splitting(rabi, (d1, d2))
    assert chain_rabi(rabi, (d1, d2)) == pytest.approx(exact, rel=0.03)


def test_oracle_at_default_lasers():
    # the default lasers are outside the perturbative regime: the exact
    # splittings exceed the eliminated formula by 31% and 55%
    assert chain_splitting((0.4, 9.0, 1.5), (24.0, 3.0)) == pytest.approx(0.024561806484297035, rel=1e-6)
    assert chain_splitting((4.0, 12.0, 0.5), (80.0, 0.4)) == pytest.approx(0.29030461367248306, rel=1e-6)


@settings(max_examples=50)
@given(st.lists(st.floats(0.01, 10.0), min_size=3, max_size=3),
       st.lists(st.floats(0.5, 50.0), min_size=2, max_size=2), st.floats(0.1, 10.0))
def test_homogeneous_degree_one(rabi, det, scale):
    base = chain_rabi(rabi, det)
    scaled = chain_rabi([scale * o for o in rabi], [scale * d for d in det])
    assert scaled == pytest.approx(scale * base, rel=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(0.01, 10.0), min_size=3, max_size=3),
       st.lists(st.floats(0.5, 50.0), min_size=2, max_size=2), st.integers(0, 2))
def test_monotone_in_each_rabi(rabi, det, k):
    bigger = list(rabi)
    bigger[k] *= 1.5
    assert chain_rabi(bigger, det) > chain_rabi(rabi, det)


def test_link_ratios_of_default_chains():
    drive = chain_link_ratios((0.4, 9.0, 1.5), (24.0, 3.0))
    coupling = chain_link_ratios((4.0, 12.0, 0.5), (80.0, 0.4))
    assert drive == pytest.approx([0.4 / 24, 9.0 / 21.0, 0.5])
    assert coupling == pytest.approx([0.05, 12.0 / 79.6, 1.25])


def test_near_resonant_chain_refused():
    with pytest.raises(ReductionError, match="near-resonant"):
        reduce_silver(SilverConfig())
    red = reduce_silver(DEFAULT_LASERS)
    assert red.near_resonant


def test_reduction_of_default_lasers():
    red = reduce_silver(DEFAULT_LASERS)
    p = red.params
    assert red.omega_d_ghz == pytest.approx(0.01875)
    assert red.omega_c_ghz == pytest.approx(0.1875)
    assert SILVER_GAMMA_GHZ == pytest.approx(2 * math.pi * 0.0234)
    assert p.omega_d == pytest.approx(0.01875 / SILVER_GAMMA_GHZ)
    assert p.omega_c == pytest.approx(0.1875 / SILVER_GAMMA_GHZ)
    assert p.rate_unit_per_s == pytest.approx(SILVER_GAMMA_GHZ * 1e9)
    assert p.gamma2 == p.gamma4 == 1.0
    assert red.rogue_rate_ghz == pytest.approx(DEFAULT_LASERS.b_loss * SILVER_GAMMA_GHZ * (4.0 / 160.0) ** 2)
    assert red.rogue_detuning_ghz == 80.0
    assert effective_params_from_silver(DEFAULT_LASERS) == p
    summary = red.summary()
    assert summary["omega_d_eff_GHz"] == pytest.approx(0.01875)


def test_silver_config_validation():
    with pytest.raises(ValueError):
        SilverConfig(drive_detuning=(24.0,))
    with pytest.raises(ValueError):
        SilverConfig(b_loss=1.5)
    with pytest.raises(ValueError):
        SilverConfig(coupling_detuning=(80.0, 0.0))


def test_regime_fig2():
    p = ButterflyParams(omega_d=0.1, omega_c=100.0, atom_number=1e6, radius=50.0, wavelength=1.0)
    grid = build_mode_grid(50.0, 1.0, 200)
    rep = validate_regime(p, grid)
    assert rep.ok and rep.weak_drive and rep.strong_coupler
    assert rep.predicted_kappa == pytest.approx(31.830988618379067)
    # mu_max N ~ 11.9 for the circular idler dipole near the axis
    assert p.omega_c / rep.coupler_ratio == pytest.approx(3e6 / (8 * math.pi * 1e4), rel=1e-2)
    assert rep.predicted_n4 == pytest.approx(0.0099, rel=0.01)
    bad = validate_regime(p.replace(omega_d=10.0), grid)
    assert not bad.weak_drive and not bad.ok and bad.warnings


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 20.0), st.floats(0.01, 20.0))
def test_regime_flags_monotone(a, b):
    grid = build_mode_grid(50.0, 1.0, 20)
    base = ButterflyParams(omega_d=0.1, omega_c=100.0, atom_number=1e6, radius=50.0, wavelength=1.0)
    lo, hi = sorted((a, b))
    # stronger drive can only lose the weak-drive flag, stronger coupler only gain the other
    if validate_regime(base.replace(omega_d=hi), grid).weak_drive:
        assert validate_regime(base.replace(omega_d=lo), grid).weak_drive
    if validate_regime(base.replace(omega_c=lo), grid).strong_coupler:
        assert validate_regime(base.replace(omega_c=hi), grid).strong_coupler


def test_regime_silver_notes():
    red = reduce_silver(DEFAULT_LASERS)
    grid = build_mode_grid(DEFAULT_LASERS.radius, DEFAULT_LASERS.wavelength, 50)
    rep = validate_regime(red.params, grid, red.rogue_detuning_ghz)
    assert any("80" in n for n in rep.notes)
    assert rep.summary()["predicted_kappa"] == pytest.approx(
        1e6 * DEFAULT_LASERS.wavelength**2 / (4 * math.pi * DEFAULT_LASERS.radius**2))
