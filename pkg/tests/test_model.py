"""Closed-form constants: dual-route identities and hand-computed oracles."""

import math

import numpy as np
import pytest

import pruefer_lab as pl
from pruefer_lab.errors import NoCriticalEnergy, SingularShift
from pruefer_lab.model import FourierFunction, mean_product_with_potential


def test_decay_values():
    p = pl.DecayProfile(alpha=0.5)
    assert pl.eval_decay(p, 0.0) == 1.0
    p1 = pl.DecayProfile(alpha=1.0)
    assert pl.eval_decay(p1, 1.0) == pytest.approx(math.sqrt(0.5), abs=1e-15)
    # exact t^-alpha tail
    t = 1e6
    v = pl.eval_decay(pl.DecayProfile(alpha=0.5), t)
    assert abs(v * t**0.5 - 1.0) < 1e-12


def test_decay_monotone_and_amplitude():
    p = pl.DecayProfile(alpha=0.7, amplitude=2.0)
    ts = np.linspace(0, 50, 201)
    vals = pl.eval_decay(p, ts)
    assert vals[0] == 2.0
    assert np.all(np.diff(vals) <= 0)
    # envelope bounds C1 t^-a <= a(t) <= C2 t^-a for t >= 1
    ts = np.linspace(1, 100, 57)
    vals = pl.eval_decay(p, ts)
    assert np.all(vals <= 2.0 * ts**-0.7 + 1e-15)
    assert np.all(vals >= 2.0 ** (1 - 0.35) / 2 * ts**-0.7 - 1e-15)  # 2^{-a/2}*amp*t^-a


def test_decay_validation():
    with pytest.raises(ValueError):
        pl.DecayProfile(alpha=-1.0)
    with pytest.raises(ValueError):
        pl.DecayProfile(alpha=0.5, amplitude=-0.1)


def test_potential_requires_nonconstant():
    with pytest.raises(ValueError):
        pl.PotentialModel((0.0,), (0.0,), 1.0)
    with pytest.raises(ValueError):
        pl.PotentialModel((1.0,), (), 0.0)


def test_eval_potential_oracle(cosine_model):
    assert pl.eval_potential(cosine_model, 0.0) == pytest.approx(1.0, abs=1e-15)
    assert pl.eval_potential(cosine_model, math.pi / 2) == pytest.approx(0.0, abs=1e-15)
    m = pl.PotentialModel((1.0, 0.0), (0.0, 0.5), 1.0)
    x = math.pi / 3
    want = math.cos(x) + 0.5 * math.sin(2 * x)
    assert pl.eval_potential(m, x) == pytest.approx(want, abs=1e-14)


def test_eval_potential_zero_mean(cosine_model):
    xs = np.linspace(0, 2 * math.pi, 4096, endpoint=False)
    assert abs(pl.eval_potential(cosine_model, xs).mean()) < 1e-14


def test_resolvent_hand_values(cosine_model):
    g = pl.resolvent_apply(cosine_model, 2j * 1.0)
    assert g.cos[0] == pytest.approx(1.0 / (-0.5 + 2j), abs=1e-15)
    g0 = pl.resolvent_apply(cosine_model, 0.0)
    assert g0.cos[0] == pytest.approx(-2.0, abs=1e-15)


def test_resolvent_roundtrip(cosine_model):
    m = pl.PotentialModel((0.3, -0.2), (0.1,), 2.0)
    z = 0.7 + 0.3j
    g = pl.resolvent_apply(m, z)
    lam = g.mode_eigenvalues()
    _, a, b = m.coefficient_arrays()
    back_cos = g.cos * (lam + z)
    back_sin = g.sin * (lam + z)
    assert np.allclose(back_cos, a, atol=1e-14)
    assert np.allclose(back_sin, b, atol=1e-14)


def test_resolvent_singular_shift(cosine_model):
    with pytest.raises(SingularShift):
        pl.resolvent_apply(cosine_model, 0.5)  # -lambda_1 = sigma2/2 = 0.5


def test_carre_du_champ_oracles(cosine_model):
    val = pl.carre_du_champ_mean(cosine_model, cosine_model)
    assert val == pytest.approx(0.5, abs=1e-15)
    sin_model = FourierFunction(np.array([0.0 + 0j]), np.array([1.0 + 0j]), 1.0)
    assert pl.carre_du_champ_mean(cosine_model, sin_model) == pytest.approx(0.0, abs=1e-15)
    # brute quadrature for <grad cos . grad sin> under normalized measure
    xs = np.linspace(0, 2 * math.pi, 1 << 14, endpoint=False)
    assert abs(np.mean(-np.sin(xs) * np.cos(xs))) < 1e-14
    g = pl.resolvent_apply(cosine_model, 2j * 1.0)
    got = pl.carre_du_champ_mean(g, g)
    assert got.real == pytest.approx(1.0 / (2 * (0.25 + 4.0)), abs=1e-15)
    assert abs(got.imag) < 1e-16


def test_carre_du_champ_nonneg_real():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = pl.PotentialModel(tuple(rng.standard_normal(3)), tuple(rng.standard_normal(2)), 1.3)
        v = pl.carre_du_champ_mean(m, m)
        assert abs(v.imag) < 1e-14
        assert v.real >= 0


def test_lyapunov_oracle(cosine_model):
    sf = cosine_model.spectral_measure()
    g = pl.lyapunov_from_spectral_measure(sf, 1.0)
    assert g == pytest.approx(1.0 / 68.0, rel=1e-14)
    # asymptotics: gamma(E)*16E(1/4+4E) -> 1
    for E in (1e3, 1e6):
        val = pl.lyapunov_from_spectral_measure(sf, E) * 16 * E * (0.25 + 4 * E)
        assert val == pytest.approx(1.0, rel=1e-6)
    assert pl.lyapunov_from_spectral_measure((np.array([]), np.array([])), 1.0) == 0.0
    gs = [pl.lyapunov_from_spectral_measure(sf, E) for E in (0.1, 0.3, 1.0, 3.0)]
    assert all(a > b for a, b in zip(gs, gs[1:]))


def test_constants_identities(cosine_model):
    for E in (0.1, 0.5, 1.0, 4.0):
        c = pl.spectral_constants(cosine_model, E)
        want = 1.0 / (2 * (0.25 + 4 * E))
        assert c.C_E == pytest.approx(want, rel=1e-12)
        assert abs(c.C_E - 8 * E * c.gamma_E) <= 1e-12 * c.C_E
        assert abs(c.beta_E * c.gamma_E - 1.0) <= 1e-12
        assert c.D == pytest.approx(math.sqrt(c.C_E / (2 * E)), rel=1e-14)


def test_critical_energy(cosine_model):
    c = pl.spectral_constants(cosine_model, 1.0)
    exact = (-4.0 + math.sqrt(528.0)) / 128.0
    assert c.E_c == pytest.approx(exact, abs=1e-10)
    gamma_at_ec = pl.lyapunov_from_spectral_measure(cosine_model.spectral_measure(), c.E_c)
    assert abs(gamma_at_ec - 0.5) <= 1e-10
    at_ec = pl.spectral_constants(cosine_model, c.E_c)
    assert at_ec.beta_E == pytest.approx(2.0, abs=1e-9)


def test_energy_for_beta(cosine_model):
    e4 = pl.energy_for_beta(cosine_model, 4.0)
    exact = (-4.0 + math.sqrt(1040.0)) / 128.0
    assert e4 == pytest.approx(exact, abs=1e-10)


def test_g_means_negative_real(cosine_model):
    for E in (0.5, 1.0, 2.0):
        c = pl.spectral_constants(cosine_model, E)
        for m in (-3, -2, -1, 1, 2, 3):
            assert c.G_mean(m).real < 0


def test_g_means_match_c3_c4(cosine_model):
    """<G_m> = i m C3 - m^2 C4^2/2: ties the rotation constants together."""
    for E in (0.5, 1.0, 2.0):
        c = pl.spectral_constants(cosine_model, E)
        for m in (1, 2, 3, 4):
            want = 1j * m * c.C3 - 0.5 * m * m * c.C4**2
            assert c.G_mean(m) == pytest.approx(want, rel=1e-12)
        assert (1j * c.C3) == pytest.approx(c.C1 + 0.5 * c.C4**2, rel=1e-12)
        assert c.C2 == pytest.approx(1j * c.C4, rel=1e-14)


def test_constants_multimode_consistency():
    """Dual-route C(E) on a two-mode potential with sigma2 != 1."""
    m = pl.PotentialModel((0.8, 0.0, 0.3), (0.0, -0.4), 1.7)
    for E in (0.3, 1.1):
        c = pl.spectral_constants(m, E)
        assert abs(c.C_E - 8 * E * c.gamma_E) <= 1e-12 * c.C_E
        lam, mass = m.spectral_measure()
        direct = -2.0 * np.sum(mass * lam / (lam**2 + 4 * E))
        assert c.C_E == pytest.approx(direct, rel=1e-12)
        g = pl.resolvent_apply(m, 2j * math.sqrt(E))
        assert pl.carre_du_champ_mean(g, g).real == pytest.approx(c.C_E, rel=1e-12)


def test_mean_product_matches_quadrature():
    m = pl.PotentialModel((0.5, 0.2), (0.0, 0.7), 1.0)
    g = pl.resolvent_apply(m, 2j * 0.9)
    xs = np.linspace(0, 2 * math.pi, 1 << 15, endpoint=False)
    k = np.arange(1, 3)
    fx = pl.eval_potential(m, xs)
    gx = sum(g.cos[i] * np.cos((i + 1) * xs) + g.sin[i] * np.sin((i + 1) * xs) for i in range(2))
    want = np.mean(fx * gx)
    assert mean_product_with_potential(m, g) == pytest.approx(want, abs=1e-12)


def test_json_export(cosine_model):
    import json

    c = pl.spectral_constants(cosine_model, 1.0)
    doc = json.loads(c.to_json())
    assert set(doc) == {"E", "C_E", "gamma", "beta", "E_c", "D", "G_m", "C1", "C2", "C3", "C4"}
    assert doc["C_E"] == pytest.approx(0.11764705882352941)
    ms = [row[0] for row in doc["G_m"]]
    assert 1 in ms and -1 in ms


def test_no_critical_energy_guard(cosine_model):
    # gamma(1e-12) is finite, so an absurdly small beta target exhausts the bracket
    with pytest.raises(NoCriticalEnergy):
        pl.energy_for_beta(cosine_model, 1e-15)
