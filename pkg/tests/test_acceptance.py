"""Acceptance gate: every criterion at its stated tolerance, one line each.

Run with `pytest -s tests/test_acceptance.py` to see the PASS/FAIL lines as
they complete.  The Monte Carlo criteria are pinned to fixed master seeds;
runtimes quoted are for this package's single-core reference box (a few
times slower than a laptop core).
"""

import json
import math
import os

import numpy as np
import pytest

import pruefer_lab as pl
from pruefer_lab import limits, runner, stats
from pruefer_lab.config import parse_config
from pruefer_lab.spectrum import EigenWindow
from pruefer_lab.stats import triangular_bump

PI = math.pi
COS = pl.PotentialModel((1.0,), (), 1.0)
FREE = pl.DecayProfile(alpha=0.9, amplitude=0.0)


def report_line(num, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {num:2d} ({name}): {status} - {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


def _run(tmp, text):
    cfg = parse_config(text)
    man = runner.run_experiment(cfg)
    with open(os.path.join(man["output_dir"], "stats.json")) as fh:
        return man, json.load(fh)


# ---------------------------------------------------------------------------
# 1. exactness floor (free operator)
# ---------------------------------------------------------------------------

def test_criterion_01_exactness_floor():
    worst_gap = 0.0
    worst_psi = 0.0
    worst_lap = 0.0
    for seed in (1, 2, 3):
        L = pl.choose_length(1.0, 40, 0.9)
        path = pl.simulate_noise(seed, L, 1e-3)
        win = EigenWindow(1.0, L, 2.5 * PI)
        s = pl.solve_eigenvalues(path, win, FREE, COS, theta_tol=1e-11)
        worst_gap = max(worst_gap, float(np.abs(np.diff(s.atoms) - PI).max()))
        xs = np.linspace(-2.0, 2.0, 9)
        psi = pl.relative_phase(path, 1.0, L, xs, FREE, COS)
        worst_psi = max(worst_psi, float(np.abs(psi - xs).max()))
        for center in (-0.7, 0.0, 1.1):
            f = triangular_bump(center, 0.6, 1.3)
            via_phase = pl.laplace_functional_via_phase(path, win, f, FREE, COS,
                                                        theta_tol=1e-12)
            fx = np.interp(s.atoms, f[0], f[1], left=0.0, right=0.0)
            worst_lap = max(worst_lap, abs(via_phase - math.exp(-fx.sum())))
    ok = worst_gap <= 1e-9 and worst_psi <= 1e-9 and worst_lap <= 1e-12
    report_line(1, "exactness floor", ok,
                f"max|gap-pi|={worst_gap:.2e} (<=1e-9), max|Psi(x)-x|={worst_psi:.2e} "
                f"(<=1e-9), max laplace route diff={worst_lap:.2e} (<=1e-12)")


# ---------------------------------------------------------------------------
# 2. constants identities
# ---------------------------------------------------------------------------

def test_criterion_02_constants():
    devs = []
    for E in (0.1, 0.5, 1.0, 4.0):
        c = pl.spectral_constants(COS, E)
        closed = 1.0 / (2 * (0.25 + 4 * E))
        devs.append(abs(c.C_E - closed) / closed)
        devs.append(abs(c.C_E - 8 * E * c.gamma_E) / c.C_E)
        devs.append(abs(c.beta_E * c.gamma_E - 1.0))
    c1 = pl.spectral_constants(COS, 1.0)
    ec_exact = (-4.0 + math.sqrt(528.0)) / 128.0
    ec_dev = abs(c1.E_c - ec_exact)
    gamma_dev = abs(pl.lyapunov_from_spectral_measure(COS.spectral_measure(), c1.E_c) - 0.5)
    beta_at_ec = pl.spectral_constants(COS, c1.E_c).beta_E
    ok = max(devs) <= 1e-12 and ec_dev <= 1e-10 and gamma_dev <= 1e-10 \
        and abs(beta_at_ec - 2.0) <= 1e-9
    report_line(2, "constants identities", ok,
                f"max identity dev={max(devs):.2e} (<=1e-12), |E_c-exact|={ec_dev:.2e} "
                f"(<=1e-10), |gamma(E_c)-1/2|={gamma_dev:.2e}, beta(E_c)={beta_at_ec:.10f}")


# ---------------------------------------------------------------------------
# 3. clock regime
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_03_clock(tmp_path):
    g = {}
    atom_sets = None
    for m_lock, h in ((63, 1e-3), (254, 2e-3), (1018, 2e-3)):
        L = pl.choose_length(1.0, m_lock, 0.0)
        out = tmp_path / f"clock_L{m_lock}"
        text = f"""
kind = "spectrum"
[decay]
alpha = 0.9
[numerics]
h = {h}
theta_tol = 1e-9
[run]
master_seed = 303
replicas = 200
output_dir = "{out}"
[experiment]
E0 = 1.0
m_lock = {m_lock}
beta_offset = 0.0
offsets = [-1, 0, 1, 2]
"""
        man, doc = _run(tmp_path, text)
        assert man["failed_count"] == 0
        g[m_lock] = doc["summary"]["g_center_mean_abs_dev"]
        if m_lock == 1018:
            rows = (out / "sample.csv").read_text().splitlines()[1:]
            by_rep = {}
            for r in rows:
                rep, n, x, k = r.split(",")
                by_rep.setdefault(int(rep), []).append(float(x))
            atom_sets = [np.sort(v) for v in by_rep.values()]
    decreasing = g[63] > g[254] > g[1018]
    small = g[1018] < 0.05

    # clock-limit sample at the same phase lock
    out = tmp_path / "clock_limit"
    text = f"""
kind = "clock"
[decay]
alpha = 0.9
[numerics]
h = 0.002
[run]
master_seed = 304
replicas = 200
output_dir = "{out}"
[experiment]
E0 = 1.0
T = 2000.0
beta_offset = 0.0
"""
    _run(tmp_path, text)
    phis = [float(r.split(",")[1]) for r in (out / "clock.csv").read_text().splitlines()[1:]]
    clock_sets = []
    for phi in phis:
        n_lo = int(math.ceil((-2 * PI + phi) / PI))
        n_hi = int(math.floor((2 * PI + phi) / PI))
        clock_sets.append(np.arange(n_lo, n_hi + 1) * PI - phi)

    lap_ok = True
    lap_report = []
    for center, width in ((0.0, 0.8), (-0.8, 0.6), (0.7, 0.7)):
        f = triangular_bump(center, width, 1.0)
        m_xi, se_xi = stats.empirical_laplace(atom_sets, f)
        m_cl, se_cl = stats.empirical_laplace(clock_sets, f)
        se = math.hypot(se_xi, se_cl)
        z = abs(m_xi - m_cl) / se
        lap_report.append(f"f@{center}: z={z:.2f}")
        lap_ok &= z < 3.0
    ok = decreasing and small and lap_ok
    report_line(3, "clock regime", ok,
                f"g(200)={g[63]:.4f} > g(800)={g[254]:.4f} > g(3200)={g[1018]:.4f} "
                f"(<0.05), laplace z: {', '.join(lap_report)} (<3)")


# ---------------------------------------------------------------------------
# 4. gaussian regime
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_04_gaussian(tmp_path):
    out = tmp_path / "gauss"
    text = f"""
kind = "gaussian"
[decay]
alpha = 0.75
[numerics]
h = 0.0025
theta_tol = 1e-7
[run]
master_seed = 404
replicas = 2000
output_dir = "{out}"
[experiment]
E0 = 1.0
m_lock = 509
n_values = [0, 1]
"""
    man, doc = _run(tmp_path, text)
    assert man["failed_count"] == 0
    s = doc["summary"]
    checks = {c["name"]: c for c in doc["checks"]}
    z00 = checks["cov_X0_X0_z"]["statistic"]
    z01 = checks["cov_X0_X1_z"]["statistic"]
    ks = checks["X0_normal_ks"]["statistic"]
    ok = z00 <= 3 and z01 <= 3 and ks <= 0.05
    report_line(4, "gaussian regime", ok,
                f"Var(X0)={s['cov_0_0']:.4f} vs C(0,0)={s['cov_0_0_target']:.4f} (z={z00:.2f}<=3), "
                f"Cov(X0,X1)={s['cov_0_1']:.4f} vs {s['cov_0_1_target']:.4f} (z={z01:.2f}<=3), "
                f"normal KS={ks:.3f} (<=0.05)")


# ---------------------------------------------------------------------------
# 5. critical regime vs circular beta-ensemble
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_05_critical(tmp_path):
    results = []
    for beta_target, seed in ((2.0, 505), (4.0, 506)):
        E0 = pl.energy_for_beta(COS, beta_target)
        m_lock = int(math.floor(math.sqrt(E0) * 2000.0 / PI))
        out = tmp_path / f"crit_b{int(beta_target)}"
        text = f"""
kind = "critical"
[decay]
alpha = 0.5
[numerics]
h = 0.004
theta_tol = 1e-6
window = {3 * PI}
[run]
master_seed = {seed}
replicas = 500
output_dir = "{out}"
[experiment]
E0 = {E0!r}
m_lock = {m_lock}
beta_offset = 0.0
"""
        man, doc = _run(tmp_path, text)
        assert man["failed_count"] == 0
        rows = (out / "sample.csv").read_text().splitlines()[1:]
        by_rep = {}
        for r in rows:
            rep, n, x, k = r.split(",")
            by_rep.setdefault(int(rep), []).append(float(x))
        # inclusion-weighted ECDF: window sampling is length-biased against
        # long gaps, circular-ensemble gaps are not
        xi_gaps = stats.gap_ecdf(list(by_rep.values()), window_length=6 * PI)

        samples, rate = limits.cbe_chain(seed + 10, n=64, beta=beta_target,
                                         n_samples=10_000, walkers=50,
                                         burn_sweeps=600, thin_sweeps=1)
        half = limits.cbe_scaled_gaps(samples)["half_scaled_gaps"].ravel()
        ks = stats.ks_distance(xi_gaps, stats.Ecdf.from_samples(half))
        results.append((beta_target, ks, rate))
    ok = all(ks < 0.08 for _, ks, _ in results)
    detail = ", ".join(f"beta={b:g}: KS={ks:.3f} (<0.08, acc_rate={r:.2f})"
                       for b, ks, r in results)
    report_line(5, "critical regime vs CBE", ok, detail)


# ---------------------------------------------------------------------------
# 6. Psi SDE simulator
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_06_psi_sde():
    consts = pl.spectral_constants(COS, pl.find_critical_energy(COS))
    cs = np.array([0.0, 0.5, 1.0, 2.0])
    ts, vals = pl.psi_batch(606, consts, cs, t0=1e-3, steps=4000,
                            replicas=4000, record_times=(1.0,))
    final = vals[:, 0, :]
    zero_ok = bool(np.all(final[:, 0] == 0.0))
    mean_rep = []
    mean_ok = True
    for ic, c in enumerate(cs[1:], start=1):
        v = final[:, ic]
        se = v.std(ddof=1) / math.sqrt(v.size)
        z = abs(v.mean() - 2 * c) / se
        mean_rep.append(f"c={c:g}: z={z:.2f}")
        mean_ok &= z < 3.0
    mono = bool(np.all(np.diff(final, axis=1) > 0))
    shifted = final[:, 3] - final[:, 2]      # Psi(1+1) - Psi(1)
    base = final[:, 2]                        # Psi(1)
    ks = stats.ks_distance(stats.Ecdf.from_samples(shifted),
                           stats.Ecdf.from_samples(base))
    ok = zero_ok and mean_ok and mono and ks < 0.05
    report_line(6, "Psi SDE", ok,
                f"Psi(0)=0: {zero_ok}, E[Psi_1(c)]=2c: {', '.join(mean_rep)} (<3), "
                f"monotone in c: {mono} (100%), translation KS={ks:.3f} (<0.05)")


# ---------------------------------------------------------------------------
# 7. phase uniformity at criticality
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_07_uniformity(tmp_path):
    out = tmp_path / "unif"
    text = f"""
kind = "uniformity"
[decay]
alpha = 0.5
[numerics]
h = 0.004
[run]
master_seed = 707
replicas = 2000
output_dir = "{out}"
[experiment]
E0 = 1.0
T = 10000.0
"""
    man, doc = _run(tmp_path, text)
    checks = {c["name"]: c for c in doc["checks"]}
    chi2 = checks["uniformity_chi2"]
    mod = checks["uniformity_max_modulus"]
    ok = chi2["pass"] and mod["pass"]
    report_line(7, "phase uniformity", ok,
                f"chi2={chi2['statistic']:.1f} (<{chi2['threshold']:.1f}), "
                f"max|E e^(im theta)|={mod['statistic']:.4f} (<{mod['threshold']:.4f})")


# ---------------------------------------------------------------------------
# 8. characteristic decay of the rotation phase
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_08_char_decay(tmp_path):
    out = tmp_path / "char"
    text = f"""
kind = "char_decay"
[decay]
alpha = 0.5
[numerics]
h = 0.0025
[run]
master_seed = 808
replicas = 4000
output_dir = "{out}"
[experiment]
E0 = 1.0
m = 1
scale = 1000.0
t0_factor = 1.0
t_factor = 4.0
"""
    man, doc = _run(tmp_path, text)
    s = doc["summary"]
    chk = doc["checks"][0]
    emp = complex(*s["empirical"])
    theo = complex(*s["theoretical"])
    ok = chk["pass"]
    report_line(8, "characteristic decay", ok,
                f"|emp-theo|={abs(emp - theo):.4f} = {chk['statistic']:.2f} se (<3), "
                f"emp={emp:.4f}, 4^<G_1>={theo:.4f}")


# ---------------------------------------------------------------------------
# 9. CBE sampler oracle (n = 2 gap law)
# ---------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_09_cbe_oracle():
    rep = []
    ok = True
    for beta in (1.0, 2.0, 4.0):
        samples, rate = limits.cbe_chain(909, n=2, beta=beta, n_samples=100_000,
                                         walkers=100, burn_sweeps=300, thin_sweeps=2)
        gaps = limits.cbe_scaled_gaps(samples)["gaps"].ravel()
        cdf = limits.cbe_two_point_gap_cdf(beta)
        ks = stats.ks_distance_to_cdf(stats.Ecdf.from_samples(gaps), cdf)
        rep.append(f"beta={beta:g}: KS={ks:.4f}")
        ok &= ks < 0.01
    report_line(9, "CBE n=2 oracle", ok, ", ".join(rep) + " (<0.01)")


# ---------------------------------------------------------------------------
# 10. determinism across worker counts
# ---------------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    bodies = {}
    for workers in (1, 8):
        out = tmp_path / f"det_w{workers}"
        text = f"""
kind = "spectrum"
[decay]
alpha = 0.9
[numerics]
h = 0.005
window = 4.0
[run]
master_seed = 1010
replicas = 130
workers = {workers}
output_dir = "{out}"
[experiment]
E0 = 1.0
L = 40.0
"""
        cfg = parse_config(text)
        runner.run_experiment(cfg)
        bodies[workers] = ((out / "sample.csv").read_bytes(),
                           (out / "gaps_ecdf.csv").read_bytes())
    ok = bodies[1] == bodies[8]
    report_line(10, "determinism", ok,
                "byte-identical CSV bodies for workers in {1, 8} (130 replicas, 2 chunks)")
