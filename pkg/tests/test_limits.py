"""Limit objects: covariance quadrature, Psi/eta SDEs, circular beta-ensemble."""

import math

import numpy as np
import pytest

import pruefer_lab as pl
from pruefer_lab import limits
from pruefer_lab.errors import DegenerateProposal
from conftest import midpoint_integral

PI = math.pi


@pytest.fixture(scope="module")
def consts():
    return pl.spectral_constants(pl.PotentialModel((1.0,), (), 1.0), 1.0)


# ---------------------------------------------------------------- covariance

def test_covariance_trivial_zero(consts):
    assert pl.gaussian_covariance_general(consts, 0.75, 1.0, 1.0, 2.0, 0.5) == 0.0


def test_covariance_swap_symmetry(consts):
    a = pl.gaussian_covariance_general(consts, 0.75, PI, 0.0, 2 * PI, PI)
    b = pl.gaussian_covariance_general(consts, 0.75, 2 * PI, PI, PI, 0.0)
    assert a == pytest.approx(b, rel=1e-12)


def test_covariance_lattice_symmetries(consts):
    c01 = pl.gaussian_covariance(consts, 0.75, 0, 1)
    assert pl.gaussian_covariance(consts, 0.75, 1, 0) == pytest.approx(c01, rel=1e-10)
    assert pl.gaussian_covariance(consts, 0.75, 5, 6) == pytest.approx(c01, rel=1e-10)
    c00 = pl.gaussian_covariance(consts, 0.75, 0, 0)
    assert c00 > 0
    assert pl.gaussian_covariance(consts, 0.75, 3, 3) == pytest.approx(c00, rel=1e-12)


def test_covariance_two_routes(consts):
    """Specialized lattice formula == general kernel with offset pairs."""
    for n, npr in ((0, 0), (0, 1), (2, 5)):
        spec = pl.gaussian_covariance(consts, 0.75, n, npr)
        for gamma0 in (0.0, 0.37):
            gen = pl.gaussian_covariance_general(
                consts, 0.75,
                (n + 1) * PI + gamma0, n * PI + gamma0,
                (npr + 1) * PI + gamma0, npr * PI + gamma0,
            )
            assert gen == pytest.approx(spec, abs=1e-9)


def test_covariance_midpoint_oracle(consts):
    """Adaptive quadrature vs brute midpoint rule at 1e6 panels."""
    alpha = 0.75
    got = pl.gaussian_covariance_general(consts, alpha, PI, 0.0, PI, 0.0)

    def integrand(s):
        d = np.abs(np.exp(2j * PI * s) - 1.0) ** 2
        return s ** (-2 * alpha) * d

    want = consts.C_E / (8 * consts.energy) * midpoint_integral(integrand, 0.0, 1.0)
    assert got == pytest.approx(want, abs=1e-6)

    got2 = pl.gaussian_covariance(consts, alpha, 0, 1)

    def integrand2(s):
        return s ** (-2 * alpha) * np.cos(2 * PI * s) * 2 * (1 - np.cos(2 * PI * s))

    want2 = consts.C_E / (8 * consts.energy) * midpoint_integral(integrand2, 0.0, 1.0)
    assert got2 == pytest.approx(want2, abs=1e-6)


def test_covariance_alpha_domain(consts):
    with pytest.raises(ValueError):
        pl.gaussian_covariance(consts, 0.4, 0, 0)
    with pytest.raises(ValueError):
        pl.gaussian_covariance_general(consts, 1.0, PI, 0.0, PI, 0.0)


# ---------------------------------------------------------------- Psi SDE

def test_psi_zero_drift_fixed_point(consts):
    paths = pl.simulate_psi_sde(1, consts, np.array([-1.0, 0.0, 1.0]), steps=500)
    j = int(np.argmin(np.abs(paths.cs)))
    assert np.all(paths.values[:, j] == 0.0)


def test_psi_degenerate_noiseless():
    paths = pl.simulate_psi_sde(2, 0.0, np.array([0.5, 1.0, 2.0]), steps=300)
    for j, c in enumerate(paths.cs):
        assert paths.values[-1, j] == pytest.approx(2 * c, rel=1e-12)


def test_psi_mean_and_monotone(consts):
    ts, vals = pl.psi_batch(3, consts, np.array([0.5, 1.0, 2.0]), steps=1200,
                            replicas=1500, record_times=(0.25, 0.5, 1.0))
    assert np.all(np.diff(vals, axis=2) > 0)
    for it, t in enumerate(ts):
        for ic, c in enumerate((0.5, 1.0, 2.0)):
            v = vals[:, it, ic]
            se = v.std(ddof=1) / math.sqrt(v.size)
            assert abs(v.mean() - 2 * c * t) < 3.5 * se, (t, c, v.mean(), se)


def test_psi_translation_invariance(consts):
    """Psi_1(c + c0) - Psi_1(c0) ~ Psi_1(c) in law (KS on 1500 replicas)."""
    from pruefer_lab import stats

    _, vals = pl.psi_batch(4, consts, np.array([1.0, 2.0]), steps=1200,
                           replicas=1500, record_times=(1.0,))
    shifted = vals[:, 0, 1] - vals[:, 0, 0]   # Psi(2) - Psi(1)
    base = vals[:, 0, 0]                       # Psi(1)
    ks = stats.ks_distance(stats.Ecdf.from_samples(shifted), stats.Ecdf.from_samples(base))
    assert ks < 0.08


def test_psi_point_process_degenerate():
    atoms_list, thetas = pl.sde_limit_point_process(5, 0.0, window=4.0, replicas=6, steps=200)
    for atoms, th in zip(atoms_list, thetas):
        want = []
        n = math.ceil((2 * -4.0 - th) / (2 * PI))
        while (2 * PI * n + th) / 2.0 <= 4.0:
            x = (2 * PI * n + th) / 2.0
            if x >= -4.0:
                want.append(x)
            n += 1
        assert np.allclose(atoms, want, atol=1e-9)
        if len(atoms) >= 2:
            assert np.allclose(np.diff(atoms), PI, atol=1e-9)


def test_psi_point_process_count(consts):
    atoms_list, _ = pl.sde_limit_point_process(6, consts, window=3 * PI, replicas=400,
                                               steps=800)
    counts = np.array([a.size for a in atoms_list])
    # mean count = window width / pi exactly in expectation
    want = 2 * 3 * PI / PI
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - want) < max(3 * se, 0.05 * want)


# ---------------------------------------------------------------- CBE

def test_cbe_two_point_oracle():
    samples, rate = pl.cbe_chain(7, n=2, beta=2.0, n_samples=20000, walkers=64,
                                 burn_sweeps=200, thin_sweeps=2)
    from pruefer_lab import stats

    gaps = limits.cbe_scaled_gaps(samples)["gaps"].ravel()
    cdf = limits.cbe_two_point_gap_cdf(2.0)
    ks = stats.ks_distance_to_cdf(stats.Ecdf.from_samples(gaps), cdf)
    assert 0.05 < rate < 0.95
    assert ks < 0.02, ks


def test_cbe_beta_zero_uniform():
    from pruefer_lab import stats

    samples, _ = pl.cbe_chain(8, n=8, beta=1e-9, n_samples=4000, walkers=64,
                              burn_sweeps=100, thin_sweeps=1)
    pooled = (samples.ravel() + PI) % (2 * PI)
    ks = stats.ks_distance_to_cdf(stats.Ecdf.from_samples(pooled),
                                  lambda x: np.asarray(x) / (2 * PI))
    assert ks < 0.02


def test_cbe_gap_mean_exact():
    samples, _ = pl.cbe_chain(9, n=16, beta=4.0, n_samples=500, walkers=50,
                              burn_sweeps=150, thin_sweeps=1)
    sc = limits.cbe_scaled_gaps(samples)
    assert np.mean(sc["gaps"]) == pytest.approx(2 * PI / 16, rel=1e-12)
    assert np.mean(sc["half_scaled_gaps"]) == pytest.approx(PI, rel=1e-12)


def test_cbe_scaled_points_example():
    s = limits.CBESample(2, 2.0, np.array([0.0, -PI]), 0.4, 100)
    sc = limits.cbe_scaled_gaps(s)
    assert np.allclose(np.sort(sc["scaled_points"][0]), [-2 * PI, 0.0])
    assert np.allclose(np.sort(sc["half_scaled_points"][0]), [-PI, 0.0])


def test_cbe_final_state_sampler():
    s = pl.sample_circular_beta(10, n=6, beta=2.0, sweeps=200)
    assert s.angles.shape == (6,)
    assert np.all(np.diff(s.angles) >= 0)
    assert 0.0 < s.acceptance_rate < 1.0
    with pytest.raises(DegenerateProposal):
        pl.sample_circular_beta(10, n=4, beta=2.0, proposal_width=-0.5)


# ---------------------------------------------------------------- eta SDE

def test_eta_modulus_and_deterministic(consts):
    class Fake:
        C3 = consts.C3
        C4 = 0.0

    path = pl.simulate_eta_sde(11, Fake(), 1.0, 10.0, steps=64, replicas=3)
    assert np.allclose(np.abs(path.eta), 1.0, atol=1e-14)
    du = math.log(10.0)
    want = path.args[:, 0] + consts.C3 * du
    assert np.allclose(path.args[:, -1], want, atol=1e-12)


def test_eta_increment_independence(consts):
    path = pl.simulate_eta_sde(12, consts, 1.0, math.e**2, steps=2, replicas=8000)
    d1 = path.args[:, 1] - path.args[:, 0]
    d2 = path.args[:, 2] - path.args[:, 1]
    corr = np.corrcoef(d1, d2)[0, 1]
    assert abs(corr) < 0.05


def test_eta_char_matches_g_means(consts):
    """E[e^{im(arg eta_t - arg eta_t0)}] = (t/t0)^<G_m> through C3, C4."""
    t0, t1 = 1.0, 4.0
    path = pl.simulate_eta_sde(13, consts, t0, t1, steps=1, replicas=20000)
    darg = path.args[:, -1] - path.args[:, 0]
    for m in (1, 2):
        z = np.exp(1j * m * darg)
        emp = z.mean()
        se = math.sqrt((z.real.var(ddof=1) + z.imag.var(ddof=1)) / z.size)
        theo = np.exp(consts.G_mean(m) * math.log(t1 / t0))
        assert abs(emp - theo) < 3.5 * se, (m, emp, theo, se)


# ---------------------------------------------------------------- clock

def test_clock_free_offset(cosine_model):
    free = pl.DecayProfile(alpha=0.9, amplitude=0.0)
    cs = pl.clock_limit_sample(14, cosine_model, free, 1.0, beta_offset=0.7,
                               T_horizon=50.0, window=2 * PI)
    assert cs.phi_beta == pytest.approx(0.7, abs=1e-12)
    want = np.arange(math.ceil((-2 * PI + 0.7) / PI), math.floor((2 * PI + 0.7) / PI) + 1) * PI - 0.7
    assert np.allclose(cs.atoms, want, atol=1e-12)
    assert np.allclose(np.diff(cs.atoms), PI, atol=1e-15)


def test_clock_alpha_guard(cosine_model):
    with pytest.raises(ValueError):
        pl.clock_limit_sample(15, cosine_model, pl.DecayProfile(alpha=0.5), 1.0, 0.0, 10.0)
