"""Limit objects: clock process, Gaussian covariance kernel, critical SDEs,
and the circular beta-ensemble.

Everything here simulates (or integrates in closed form) the L -> infinity
limits that the finite-L spectrum runs are compared against:

  * clock_limit_sample      — atoms n*pi - phi_beta with the empirical offset law
  * gaussian_covariance(*)  — spacing-fluctuation covariance by adaptive quadrature
  * simulate_psi_sde        — dPsi = 2c dt + D Re[(e^{iPsi}-1) dZ/sqrt(t)], coupled in c
  * sde_limit_point_process — atoms Psi_1^{-1}(2 n pi + theta), theta uniform
  * sample_circular_beta    — Metropolis sampling of |Vandermonde|^beta on the circle
  * simulate_eta_sde        — unit-circle phase eta_t, exact in log-time
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import engine
from .errors import DegenerateProposal, GridTooNarrow, MonotonicityBreach, QuadratureFailure

_PI = math.pi
_TWO_PI = 2.0 * math.pi

__all__ = [
    "ClockSample",
    "PsiPaths",
    "CBESample",
    "clock_limit_sample",
    "gaussian_covariance_general",
    "gaussian_covariance",
    "simulate_psi_sde",
    "psi_batch",
    "sde_limit_point_process",
    "sample_circular_beta",
    "cbe_chain",
    "cbe_scaled_gaps",
    "simulate_eta_sde",
]


# ---------------------------------------------------------------------------
# clock process
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClockSample:
    """Atoms {n pi - phi_beta} in a window; spacing is exactly pi."""

    phi_beta: float
    atoms: np.ndarray
    window: float
    theta_tilde_T: float
    metadata: dict = field(default_factory=dict, repr=False)


def default_step(kappa: float) -> float:
    """Resolve each phase rotation by >= 125 steps: h = min(1e-3, 0.05/kappa)."""
    return min(1e-3, 0.05 / kappa)


def clock_limit_sample(seed, model, decay, E0, beta_offset, T_horizon,
                       window=3.0 * _PI, h=None) -> ClockSample:
    """Clock-process sample with offset phi_beta = (beta + theta_tilde_T) mod pi.

    theta_tilde_infinity is approximated by the integrated phase at T_horizon
    (valid for alpha > 1/2 where the centered phase converges).
    """
    if decay.alpha <= 0.5 and decay.amplitude > 0:
        raise ValueError("clock limit needs alpha > 1/2")
    kappa = math.sqrt(E0)
    if h is None:
        h = default_step(kappa)
    n, h_eff = engine.grid_steps(T_horizon, h)
    src = engine.stream_source([int(seed)], n, h_eff, model.generator_scale if model else 1.0,
                               model, decay)
    tt = float(engine.integrate_phase(src, np.array([kappa]))["tt"][0, 0])
    phi = (beta_offset + tt) % _PI
    n_lo = int(math.ceil((-window + phi) / _PI))
    n_hi = int(math.floor((window + phi) / _PI))
    atoms = np.arange(n_lo, n_hi + 1) * _PI - phi
    meta = {"seed": int(seed), "E0": E0, "beta_offset": beta_offset, "T": T_horizon, "h": h_eff}
    return ClockSample(phi, atoms, window, tt, meta)


# ---------------------------------------------------------------------------
# Gaussian covariance kernel
# ---------------------------------------------------------------------------

def _kernel_integrand(s, alpha, c1, c2, c1p, c2p):
    """Re[(e^{2i c1 s}-e^{2i c2 s}) conj(e^{2i c1' s}-e^{2i c2' s})] * s^-2alpha."""
    val = (
        np.cos(2.0 * (c1 - c1p) * s)
        - np.cos(2.0 * (c1 - c2p) * s)
        - np.cos(2.0 * (c2 - c1p) * s)
        + np.cos(2.0 * (c2 - c2p) * s)
    )
    return val * s ** (-2.0 * alpha)


def gaussian_covariance_general(constants, alpha, c1, c2, c1p, c2p, t=1.0,
                                tol=1e-10) -> float:
    """Covariance l_t((c1,c2),(c1',c2')) of the limiting Gaussian phase field.

    Prefactor C(E)/(8E); the integrand has an integrable s^(2-2alpha)
    singularity at 0 which the adaptive panel handles after splitting.
    """
    if not 0.5 < alpha < 1.0:
        raise ValueError("need 1/2 < alpha < 1")
    if c1 == c2 or c1p == c2p:
        return 0.0
    val, err = quad(
        _kernel_integrand, 0.0, t, args=(alpha, c1, c2, c1p, c2p),
        epsabs=tol * 1e-2, epsrel=1e-12, limit=400,
    )
    if err > tol * max(1.0, abs(val)):
        raise QuadratureFailure(f"estimated error {err:.2e} above tolerance {tol:.2e}")
    pref = constants.C_E / (8.0 * constants.energy)
    return float(pref * val)


def covariance_table(constants, alpha, dn_values, tol=1e-10) -> dict:
    """JSON-ready table of C(n, n') keyed by (alpha, E0, n - n')."""
    return {
        "alpha": float(alpha),
        "E0": float(constants.energy),
        "entries": [
            {"dn": int(dn), "value": gaussian_covariance(constants, alpha, int(dn), 0, tol)}
            for dn in dn_values
        ],
    }


def gaussian_covariance(constants, alpha, n, n_prime, tol=1e-10) -> float:
    """C(n, n') = (C(E0)/8E0) Re int_0^1 s^-2a e^{2i(n-n') pi s} 2(1-cos 2 pi s) ds.

    Depends on n - n' only; equals the general kernel with the consecutive
    lattice pairs c = ((n+1) pi, n pi) for any common offset.
    """
    if not 0.5 < alpha < 1.0:
        raise ValueError("need 1/2 < alpha < 1")
    d = float(n - n_prime)

    def f(s):
        return math.cos(2.0 * d * _PI * s) * 2.0 * (1.0 - math.cos(_TWO_PI * s)) * s ** (-2.0 * alpha)

    val, err = quad(f, 0.0, 1.0, epsabs=tol * 1e-2, epsrel=1e-12, limit=400)
    if err > tol * max(1.0, abs(val)):
        raise QuadratureFailure(f"estimated error {err:.2e} above tolerance {tol:.2e}")
    return float(constants.C_E / (8.0 * constants.energy) * val)


# ---------------------------------------------------------------------------
# critical-case Psi SDE
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PsiPaths:
    """Coupled solutions Psi_t(c_j) on a geometric grid from t0 to 1."""

    cs: np.ndarray
    ts: np.ndarray
    values: np.ndarray = field(repr=False)  # (n_times, n_c)
    D: float
    t0: float

    def at_final(self) -> np.ndarray:
        return self.values[-1]


def _coerce_D(constants_or_D) -> float:
    return float(getattr(constants_or_D, "D", constants_or_D))


def _psi_block(rngs, D, cs, t0, steps, record_idx):
    """Euler-Maruyama for one replica block; all c's share each replica's Z."""
    R = len(rngs)
    cs = np.asarray(cs, dtype=float)
    ts = t0 * (1.0 / t0) ** (np.arange(steps + 1) / steps)
    ts[-1] = 1.0
    dts = np.diff(ts)
    dB = np.empty((steps, R, 2))
    for j, r in enumerate(rngs):
        dB[:, j, :] = r.standard_normal((steps, 2))
    dB *= np.sqrt(dts)[:, None, None]
    psi = 2.0 * cs[None, :] * t0 * np.ones((R, 1))
    rec = []
    if 0 in record_idx:
        rec.append(psi.copy())
    for i in range(steps):
        coef = D / math.sqrt(ts[i])
        c_psi = np.cos(psi)
        s_psi = np.sin(psi)
        psi = psi + 2.0 * cs[None, :] * dts[i] + coef * (
            (c_psi - 1.0) * dB[i, :, 0, None] - s_psi * dB[i, :, 1, None]
        )
        if (i + 1) in record_idx:
            rec.append(psi.copy())
    return ts, np.array(rec)


def psi_batch(master_seed, constants_or_D, cs, t0=1e-3, steps=4000, replicas=1,
              record_times=(1.0,), max_refinements=3):
    """Psi_t(c) for many replicas; monotonicity in c enforced by step refinement.

    Returns (record_ts, values) with values of shape (replicas, n_rec, n_c).
    Replicas whose recorded values violate the c-ordering are re-run with the
    step count doubled (violation is a discretization artifact; the limit
    process is strictly increasing in c).
    """
    cs = np.asarray(cs, dtype=float)
    if cs.ndim != 1 or (cs.size > 1 and np.any(np.diff(cs) <= 0)):
        raise ValueError("cs must be strictly increasing")
    if not 0.0 < t0 <= 0.1:
        raise ValueError("t0 must lie in (0, 0.1]")
    seeds = [engine.split_seed(master_seed, i) for i in range(replicas)]

    def run(idx_list, n_steps):
        rngs = [engine.make_rng(seeds[i]) for i in idx_list]
        ts = t0 * (1.0 / t0) ** (np.arange(n_steps + 1) / n_steps)
        ts[-1] = 1.0
        rec_idx = sorted({int(np.argmin(np.abs(ts - rt))) for rt in record_times})
        ts_out, rec = _psi_block(rngs, _coerce_D(constants_or_D), cs, t0, n_steps, set(rec_idx))
        return ts_out[rec_idx], np.transpose(rec, (1, 0, 2))

    block = 500
    rec_ts = None
    values = np.empty((replicas, len(record_times), cs.size))
    for b0 in range(0, replicas, block):
        idx = list(range(b0, min(b0 + block, replicas)))
        rec_ts, vals = run(idx, steps)
        values[b0 : b0 + len(idx)] = vals
    if cs.size > 1:
        bad = np.nonzero(np.any(np.diff(values, axis=2) <= 0, axis=(1, 2)))[0]
        n_steps = steps
        for _ in range(max_refinements):
            if bad.size == 0:
                break
            n_steps *= 2
            _, vals = run(list(bad), n_steps)
            values[bad] = vals
            bad = bad[np.any(np.diff(vals, axis=2) <= 0, axis=(1, 2))]
        if bad.size:
            raise MonotonicityBreach(
                f"{bad.size} replicas non-monotone after {max_refinements} refinements "
                f"(steps={n_steps}, t0={t0})"
            )
    return rec_ts, values


def simulate_psi_sde(seed, constants_or_D, cs, t0=1e-3, steps=4000) -> PsiPaths:
    """One realization of the coupled family Psi_t(c), full path on the grid."""
    cs = np.asarray(cs, dtype=float)
    D = _coerce_D(constants_or_D)
    stride = max(1, steps // 2000)
    rec_frac = sorted(set(list(range(0, steps + 1, stride)) + [steps]))
    n_steps = steps
    for _ in range(4):
        rng = [engine.make_rng(engine.split_seed(seed, 0))]
        rec_idx = sorted(set(int(round(i * n_steps / steps)) for i in rec_frac))
        ts, rec = _psi_block(rng, D, cs, t0, n_steps, set(rec_idx))
        values = rec[:, 0, :]
        if cs.size < 2 or np.all(np.diff(values, axis=1) > 0):
            return PsiPaths(cs, ts[rec_idx], values, D, t0)
        n_steps *= 2
    raise MonotonicityBreach(f"paths non-monotone in c even at steps={n_steps}")


def sde_limit_point_process(seed, constants_or_D, window, replicas=1,
                            t0=1e-3, steps=4000, c_step=0.25, c_pad=3.0):
    """Atoms Psi_1^{-1}(2 n pi + theta) in [-window, window], theta ~ U[0, 2pi).

    Returns a list of atom arrays (one per replica).  The monotone c -> Psi_1(c)
    profile is inverted by piecewise-linear interpolation on a c grid that
    covers the window with padding.
    """
    lo = -window - c_pad
    hi = window + c_pad
    n_c = int(math.ceil((hi - lo) / c_step)) + 1
    cs = np.linspace(lo, hi, n_c)
    seeds = [engine.split_seed(seed, i) for i in range(replicas)]
    thetas = np.array([engine.make_rng(s).random() * _TWO_PI for s in seeds])
    # path noise continues each replica's stream after its theta draw
    D = _coerce_D(constants_or_D)
    out = []
    block = 500
    for b0 in range(0, replicas, block):
        idx = list(range(b0, min(b0 + block, replicas)))
        rngs = []
        for i in idx:
            r = engine.make_rng(seeds[i])
            r.random()  # skip the theta draw
            rngs.append(r)
        _, rec = _psi_block(rngs, D, cs, t0, steps, {steps})
        psi1 = rec[0]
        for row, i in enumerate(idx):
            prof = psi1[row]
            if np.any(np.diff(prof) <= 0):
                prof = np.maximum.accumulate(prof)  # guard hairline EM wiggles
            w_lo = float(np.interp(-window, cs, prof))
            w_hi = float(np.interp(window, cs, prof))
            if w_lo < prof[0] or w_hi > prof[-1]:
                raise GridTooNarrow("window image exits the computed Psi range; increase c_pad")
            n_min = int(math.ceil((w_lo - thetas[i]) / _TWO_PI))
            n_max = int(math.floor((w_hi - thetas[i]) / _TWO_PI))
            targets = thetas[i] + _TWO_PI * np.arange(n_min, n_max + 1)
            xs = np.interp(targets, prof, cs)
            out.append(xs[(xs >= -window) & (xs <= window)])
    return out, thetas


# ---------------------------------------------------------------------------
# circular beta-ensemble
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CBESample:
    """Final MCMC state of the n-point circular beta-ensemble chain."""

    n: int
    beta: float
    angles: np.ndarray
    acceptance_rate: float
    sweeps: int


def _log_sin_sum(theta, prop, cur, j):
    """sum_{k != j} ln|sin((x - theta_k)/2)| for x = prop and x = cur."""
    with np.errstate(divide="ignore"):
        s_new = np.log(np.abs(np.sin(0.5 * (prop[:, None] - theta))))
        s_old = np.log(np.abs(np.sin(0.5 * (cur[:, None] - theta))))
    s_new[:, j] = 0.0
    s_old[:, j] = 0.0
    return s_new.sum(axis=1), s_old.sum(axis=1)


def _default_width(n, beta):
    return float(min(1.2, 2.6 / math.sqrt(n * max(beta, 0.2))))


def cbe_chain(seed, n, beta, n_samples, walkers=32, burn_sweeps=500, thin_sweeps=1,
              proposal_width=None):
    """Metropolis chains for the circular beta-ensemble, vectorized over walkers.

    Returns (samples, acceptance_rate) with samples of shape (>= n_samples, n);
    kept states are pooled round-robin across walkers after per-walker burn-in.
    """
    if n < 2 or beta <= 0:
        raise ValueError("need n >= 2 and beta > 0")
    width = _default_width(n, beta) if proposal_width is None else float(proposal_width)
    if width <= 0:
        raise DegenerateProposal(f"proposal_width must be > 0, got {width}")
    rng = engine.make_rng(int(seed))
    theta = rng.random((walkers, n)) * _TWO_PI - _PI
    acc = 0
    tot = 0
    keep_rounds = int(math.ceil(n_samples / walkers))
    samples = np.empty((keep_rounds * walkers, n))
    kept = 0

    def sweep(count_acc):
        nonlocal acc, tot
        for j in range(n):
            cur = theta[:, j]
            prop = cur + width * rng.standard_normal(walkers)
            prop = (prop + _PI) % _TWO_PI - _PI
            s_new, s_old = _log_sin_sum(theta, prop, cur, j)
            log_ratio = beta * (s_new - s_old)
            accept = np.log(rng.random(walkers)) < log_ratio
            theta[accept, j] = prop[accept]
            if count_acc:
                acc += int(np.count_nonzero(accept))
                tot += walkers

    for _ in range(burn_sweeps):
        sweep(False)
    for _ in range(keep_rounds):
        for _ in range(thin_sweeps):
            sweep(True)
        samples[kept : kept + walkers] = np.sort(theta, axis=1)
        kept += walkers
    return samples[:n_samples], (acc / tot if tot else 0.0)


def sample_circular_beta(seed, n, beta, sweeps=2000, proposal_width=None) -> CBESample:
    """Single-chain sampler returning the final state plus diagnostics.

    Burn-in is the first half of the sweeps; the acceptance rate is recorded
    over the second half.
    """
    samples, rate = cbe_chain(
        seed, n, beta, n_samples=1, walkers=1,
        burn_sweeps=sweeps // 2, thin_sweeps=max(1, sweeps - sweeps // 2),
        proposal_width=proposal_width,
    )
    return CBESample(n, beta, samples[0], rate, sweeps)


def circular_gaps(angles: np.ndarray) -> np.ndarray:
    """All n circular gaps (wrap gap included) of sorted angles; sums to 2 pi."""
    a = np.sort(angles)
    return np.append(np.diff(a), a[0] + _TWO_PI - a[-1])


def cbe_two_point_gap_cdf(beta, n_grid=20001):
    """CDF of the n=2 circular gap, density proportional to (2 sin(phi/2))^beta.

    Quadrature reference for sampler verification; returns a callable."""
    phi = np.linspace(0.0, _TWO_PI, n_grid)
    dens = (2.0 * np.sin(0.5 * phi)) ** beta
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(phi))])
    cdf /= cdf[-1]

    def f(x):
        return np.interp(np.asarray(x, dtype=float), phi, cdf, left=0.0, right=1.0)

    return f


def cbe_scaled_gaps(sample):
    """Scaled points n*theta_j, the half-scaled points, and the circular gaps.

    Accepts a CBESample or an (m, n) array of angle rows.  The half-scaled
    points (n*theta_j)/2 are the desk-scale stand-in for the lambda/2-rescaled
    limit ensemble.
    """
    if isinstance(sample, CBESample):
        rows = sample.angles[None, :]
        n = sample.n
    else:
        rows = np.atleast_2d(np.asarray(sample, dtype=float))
        n = rows.shape[1]
    gaps = np.array([circular_gaps(r) for r in rows])
    return {
        "scaled_points": n * rows,
        "half_scaled_points": 0.5 * n * rows,
        "gaps": gaps,
        "scaled_gaps": n * gaps,
        "half_scaled_gaps": 0.5 * n * gaps,
    }


# ---------------------------------------------------------------------------
# eta phase SDE (exact in log-time)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EtaPath:
    """Unit-circle phase process sampled on a geometric time grid."""

    times: np.ndarray
    args: np.ndarray  # (replicas, n_times), unwrapped arguments

    @property
    def eta(self) -> np.ndarray:
        return np.exp(1j * self.args)


def simulate_eta_sde(seed, constants, t0, t1, steps, replicas=1) -> EtaPath:
    """eta_t on [t0, t1] via the stationary log-time form.

    In u = log t the argument performs a Brownian motion with drift:
    d(arg) = C3 du + C4 dB, which is integrated exactly with Gaussian
    increments; |eta_t| = 1 identically.  arg(eta_{t0}) is uniform.
    """
    if not 0 < t0 < t1:
        raise ValueError("need 0 < t0 < t1")
    us = np.linspace(math.log(t0), math.log(t1), steps + 1)
    du = np.diff(us)
    rngs = [engine.make_rng(engine.split_seed(seed, i)) for i in range(replicas)]
    args = np.empty((replicas, steps + 1))
    c3 = constants.C3
    c4 = constants.C4
    for i, r in enumerate(rngs):
        a0 = r.random() * _TWO_PI
        incr = c3 * du + c4 * np.sqrt(du) * r.standard_normal(steps)
        args[i, 0] = a0
        args[i, 1:] = a0 + np.cumsum(incr)
    return EtaPath(np.exp(us), args)
