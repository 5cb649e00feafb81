import cmath
import math

import numpy as np
import pytest

from nevlab.fits import fit_power_law
from nevlab.functions import (
    ClosedFormTwoAV,
    OdeBacked,
    asymptotic_values,
    derivative,
    evaluate,
    exp_iz_pair,
    germ,
    predicted_asymptotic_values,
    residue_at,
    toy_as_ode,
)
from nevlab.roots import AnnularSector, inverse_derivative_residue, poles_in_region, preimages_in_region
from nevlab.schwarzian import SchwarzPolynomial, numeric_derivative
from nevlab.sphere import INF, chordal_distance, is_inf


# -- evaluation ---------------------------------------------------------------------------


def test_pole_at_origin(toy):
    assert evaluate(toy, 0) is INF


def test_right_tract_value(toy):
    for y in (0.0, 1.0, -2.5):
        assert abs(evaluate(toy, 40 + 1j * y) - 2) <= 1e-15


def test_value_at_half_pi_i(toy):
    z = 1j * math.pi / 2
    direct = evaluate(toy, z)
    assert abs(direct - 1.5) <= 1e-15
    assert abs(evaluate(toy_as_ode(2, 1), z) - direct) <= 1e-12


def test_evaluate_rejects_infinity(toy):
    with pytest.raises(ValueError):
        evaluate(toy, INF)


def test_deep_tract_stays_finite(toy):
    v = toy.values(np.array([1e4 + 3j, -1e4 - 1j]))
    assert np.allclose(v, [2, 1], atol=1e-15)


def test_derivative_dies_in_tract(toy):
    assert abs(derivative(toy, 40 + 0.3j)) <= 1e-15


def test_coth_derivative():
    f = ClosedFormTwoAV(1, -1)
    expected = 1 - (math.cosh(1) / math.sinh(1)) ** 2
    assert abs(derivative(f, 1) - expected) <= 1e-14
    # 1 - coth^2 = -csch^2
    assert expected == pytest.approx(-1 / math.sinh(1) ** 2, rel=1e-14)
    assert expected == pytest.approx(-0.7241, abs=1e-4)


def test_derivative_at_pole_is_infinite(toy):
    assert derivative(toy, 0) is INF
    # the float nearest pi*i is not a pole, but lies within 1e-15 of one
    assert abs(derivative(toy, 1j * math.pi)) > 1e25


def test_derivative_matches_finite_differences(toy, rng):
    z = rng.uniform(-3, 3, 100) + 1j * rng.uniform(-3, 3, 100)
    exact = toy.derivative_values(z)
    for zi, d in zip(z, exact):
        # step scaled to the distance from the pole lattice
        dist = min(abs(zi - 1j * math.pi * round(zi.imag / math.pi)), 1.0)
        fd = numeric_derivative(germ(toy, zi), zi, scale=dist)
        assert abs(fd - d) <= 1e-7 * abs(d)


def test_closed_form_matches_ode_oracle(rng):
    t = ClosedFormTwoAV(2, 1)
    o = toy_as_ode(2, 1)
    z = rng.uniform(-5, 5, 200) + 1j * rng.uniform(-5, 5, 200)
    z = z[np.abs(z) <= 5][:100]
    a, b = t.values(z), o.values(z)
    assert np.max(np.abs(a - b) / np.abs(a)) <= 1e-9


def test_ode_backed_rejects_constant():
    with pytest.raises(ValueError):
        OdeBacked(SchwarzPolynomial.of(1), 1, 2, 2, 4, base=exp_iz_pair())


# -- asymptotic values ---------------------------------------------------------------------


def test_closed_form_asymptotic_values(toy):
    vals = {v.value for v in asymptotic_values(toy)}
    assert vals == {2, 1}


def test_exp_iz_quotient_asymptotic_values():
    f = OdeBacked(SchwarzPolynomial.of(1), 1, 0, 0, 1, base=exp_iz_pair())
    vals = [v.value for v in asymptotic_values(f)]
    assert len(vals) == 2
    assert any(is_inf(v) for v in vals)
    assert any(not is_inf(v) and abs(v) <= 1e-8 for v in vals)


def test_three_values_for_linear_potential(ode_z):
    avs = asymptotic_values(ode_z)
    assert len(avs) == 3
    assert sorted(v.tract for v in avs) == [0, 1, 2]
    # the two tracts flanking the normalisation ray carry B/D and A/C
    pred = predicted_asymptotic_values(ode_z)
    got = {v.tract: v.value for v in avs}
    for k, v in pred.items():
        assert chordal_distance(got[k], v) <= 1e-6


# -- poles and residues ----------------------------------------------------------------------


def test_closed_form_poles(toy):
    poles = poles_in_region(toy, AnnularSector(1, 20, math.pi / 2, math.pi))
    js = sorted(round(p.s.imag / math.pi) for p in poles)
    assert js == sorted([j for j in range(-6, 7) if j != 0])
    for p in poles:
        assert abs(p.s - round(p.s.imag / math.pi) * math.pi * 1j) <= 1e-9
        arg = cmath.phase(p.s) % (2 * math.pi)
        assert min(abs(arg - math.pi / 2), abs(arg - 3 * math.pi / 2)) <= 1e-12


def test_closed_form_residues(toy):
    assert abs(residue_at(toy, 1j * math.pi) - 0.5) <= 1e-12
    assert abs(residue_at(toy, -3j * math.pi) - 0.5) <= 1e-12
    assert abs(residue_at(toy, 2j * math.pi, method="contour") - 0.5) <= 1e-10


def test_closed_form_preimages(toy):
    region = AnnularSector(0.1, 10, math.pi / 2, math.pi)
    pre = preimages_in_region(toy, 0, region)
    for p in pre:
        j = round(p.p.imag / math.pi)
        assert abs(p.p - (-math.log(2) / 2 + j * math.pi * 1j)) <= 1e-12
    assert len(pre) == 7  # j = -3..3 with |z| <= 10
    at_inf = preimages_in_region(toy, INF, AnnularSector(1, 20, math.pi / 2, math.pi))
    poles = poles_in_region(toy, AnnularSector(1, 20, math.pi / 2, math.pi))
    assert [p.p for p in at_inf] == [p.s for p in poles]


def test_closed_form_residue_fit_is_flat(toy):
    poles = poles_in_region(toy, AnnularSector(1, 40.5 * math.pi, math.pi / 2, math.pi))
    fit = fit_power_law([(p.j, abs(p.r)) for p in poles if p.j > 0], 3, 40)
    assert abs(fit.exponent) <= 1e-9


def test_pole_modulus_exponent(ode_z_poles):
    fit = fit_power_law([(p.j, abs(p.s)) for p in ode_z_poles], 5, 40)
    assert abs(fit.exponent - 2 / 3) <= 0.05


def test_residue_exponent(ode_z_poles):
    fit = fit_power_law([(p.j, abs(p.r)) for p in ode_z_poles], 5, 40)
    assert abs(fit.exponent + 1 / 3) <= 0.1


def test_residue_times_root_p_is_constant(ode_z, ode_z_poles):
    c = [p.r * cmath.sqrt(ode_z.P(p.s)) for p in ode_z_poles if p.j >= 5]
    ref = np.median(np.real(c)) + 1j * np.median(np.imag(c))
    assert max(abs(v / ref - 1) for v in c) <= 0.03
    # W = -2i reproduces the constant (1/2i)(A/C - B/D) = -0.75i
    assert abs(ref - (2 - 0.5) / 2j) <= 0.03 * 0.75


def test_quotient_and_contour_residues_agree(ode_z, ode_z_poles):
    for p in ode_z_poles:
        rc = residue_at(ode_z, p.s, method="contour")
        assert abs(rc / p.r - 1) <= 1e-8


def test_pole_arguments_converge(ode_z, ode_z_poles):
    dev = [(p.j, abs(ode_z.frame.nearest(cmath.phase(p.s) % (2 * math.pi))[1])) for p in ode_z_poles]
    tail = [d for j, d in sorted(dev) if j >= 10]
    assert max(tail) < 0.1
    assert all(b <= a for a, b in zip(tail, tail[1:]))


def test_derivative_at_preimages_exponent(ode_z_preimages):
    fit = fit_power_law([(p.j, abs(p.df)) for p in ode_z_preimages], 5, 40)
    assert abs(fit.exponent - 1 / 3) <= 0.05


def test_inverse_residue_identity(ode_z, ode_z_preimages):
    for p in ode_z_preimages[:10]:
        res = inverse_derivative_residue(ode_z, p.p, 1)
        assert abs(abs(p.df) * abs(res) - 1) <= 1e-8
