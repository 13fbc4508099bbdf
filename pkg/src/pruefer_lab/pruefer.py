"""Noise paths and Pruefer-phase integration along one frozen realization.

The phase theta_t(kappa) of the eigenvalue equation -x'' + a F(X) x = kappa^2 x
(Dirichlet start theta_0 = 0) is integrated jointly with the driving circle
diffusion X_t; theta is kept unwrapped as kappa*t + theta_tilde.  A batch of
kappa values rides along one shared noise path, which is the workhorse for
eigenvalue extraction upstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .errors import InvalidGrid, WindowUnderflow
from .model import DecayProfile, PotentialModel

_TWO_PI = 2.0 * math.pi

__all__ = [
    "NoisePath",
    "PhaseTrajectory",
    "simulate_noise",
    "integrate_theta",
    "integrate_theta_batch",
    "relative_phase",
    "phase_mod",
]


@dataclass(frozen=True)
class NoisePath:
    """One seeded realization of the driving Brownian increments.

    increments[i] ~ N(0, sigma2*h) is the step from t_i to t_{i+1};
    x0 is the uniform stationary start on [0, 2pi).  Regenerating with the
    same seed yields bit-identical arrays.
    """

    seed: int
    h: float
    L: float
    sigma2: float
    x0: float
    increments: np.ndarray = field(repr=False)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    def coarsen(self, factor: int = 2) -> "NoisePath":
        """Same Brownian path on a grid coarsened by `factor` (increments summed)."""
        n = self.n_steps
        if n % factor != 0:
            raise InvalidGrid(f"n_steps {n} not divisible by {factor}")
        inc = self.increments.reshape(n // factor, factor).sum(axis=1)
        return NoisePath(self.seed, self.h * factor, self.L, self.sigma2, self.x0, inc)


def simulate_noise(seed: int, L: float, h: float, sigma2: float = 1.0) -> NoisePath:
    """Materialize the seeded noise path on the grid covering [0, L].

    The step is adjusted to h_eff = L/ceil(L/h) so the grid hits L exactly;
    increments.length = ceil(L/h).
    """
    if h <= 0 or L <= 0 or h > L:
        raise InvalidGrid(f"need 0 < h <= L, got h={h}, L={L}")
    if sigma2 <= 0:
        raise InvalidGrid(f"sigma2 must be > 0, got {sigma2}")
    n, h_eff = engine.grid_steps(L, h)
    rng = engine.make_rng(seed)
    x0 = engine.draw_initial_angle(rng)
    scale = math.sqrt(sigma2 * h_eff)
    chunks = []
    done = 0
    while done < n:
        m = min(engine._CHUNK, n - done)
        chunks.append(rng.standard_normal(m))
        done += m
    increments = np.concatenate(chunks) * scale
    return NoisePath(seed, h_eff, L, sigma2, x0, increments)


@dataclass(frozen=True)
class PhaseTrajectory:
    """Sampled (theta, theta_tilde, log r) along one path at one kappa."""

    kappa: float
    times: np.ndarray = field(repr=False)
    theta_tilde: np.ndarray = field(repr=False)
    log_r: np.ndarray = field(repr=False)

    @property
    def theta(self) -> np.ndarray:
        return self.kappa * self.times + self.theta_tilde

    @property
    def theta_final(self) -> float:
        return float(self.kappa * self.times[-1] + self.theta_tilde[-1])

    def to_csv(self, path):
        th = self.theta
        with open(path, "w") as fh:
            fh.write("t,theta,theta_tilde,log_r\n")
            for i in range(len(self.times)):
                cells = (self.times[i], th[i], self.theta_tilde[i], self.log_r[i])
                fh.write(",".join(repr(float(c)) for c in cells) + "\n")


def _record_indices(n_steps: int, stride) -> np.ndarray:
    if stride is None:
        stride = max(1, n_steps // 2000)
    idx = np.arange(0, n_steps + 1, stride, dtype=np.int64)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def integrate_theta_batch(
    path: NoisePath,
    kappas,
    decay: DecayProfile,
    model: PotentialModel,
    sample_stride=None,
):
    """Integrate theta for several kappas on one shared path.

    kappas must be strictly increasing and positive.  Results are identical
    (bit for bit) to per-kappa calls: the batch axis is elementwise.
    """
    kappas = np.atleast_1d(np.asarray(kappas, dtype=float))
    if np.any(kappas <= 0):
        raise WindowUnderflow("all kappas must be > 0")
    if kappas.size > 1 and np.any(np.diff(kappas) <= 0):
        raise ValueError("kappas must be strictly increasing")
    engine.check_step(path.h, kappas, model, decay)
    source = engine.array_source(path.increments, [path.x0], path.h, model, decay)
    idx = _record_indices(path.n_steps, sample_stride)
    out = engine.integrate_phase(source, kappas, want_logr=True, record_indices=idx)
    times = idx * path.h
    trajs = []
    for j, k in enumerate(kappas):
        trajs.append(
            PhaseTrajectory(
                kappa=float(k),
                times=times,
                theta_tilde=out["rec_tt"][:, 0, j].copy(),
                log_r=out["rec_logr"][:, 0, j].copy(),
            )
        )
    return trajs


def integrate_theta(path, kappa, decay, model, sample_stride=None) -> PhaseTrajectory:
    """Single-kappa integration (batch of one)."""
    return integrate_theta_batch(path, [kappa], decay, model, sample_stride)[0]


def theta_final_batch(path, kappas, decay, model, want_logr=False):
    """Final (theta_tilde_L, log_r_L) only, no trajectory sampling."""
    kappas = np.atleast_1d(np.asarray(kappas, dtype=float))
    engine.check_step(path.h, kappas, model, decay)
    source = engine.array_source(path.increments, [path.x0], path.h, model, decay)
    out = engine.integrate_phase(source, kappas, want_logr=want_logr)
    tt = out["tt"][0]
    lr = out["logr"][0] if want_logr else None
    return tt, lr


def relative_phase(path, E0, L, xs, decay, model, doubled=False):
    """Relative Pruefer phase Psi_L(x) = theta_L(sqrt(E0)+x/L) - theta_L(sqrt(E0)).

    With doubled=True returns Phi_L = 2 Psi_L.  Psi_L(0) = 0 and Psi_L is
    strictly increasing in x.
    """
    if abs(L - path.L) > 1e-9 * max(1.0, path.L):
        raise ValueError("L must match the path horizon")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    kappa0 = math.sqrt(E0)
    kappas = kappa0 + xs / L
    if np.any(kappas <= 0):
        raise WindowUnderflow("sqrt(E0) + x/L must stay > 0")
    order = np.argsort(np.append(kappas, kappa0))
    k_all = np.append(kappas, kappa0)[order]
    # drop duplicates while keeping positions recoverable
    uniq, inv = np.unique(k_all, return_inverse=True)
    engine.check_step(path.h, uniq, model, decay)
    source = engine.array_source(path.increments, [path.x0], path.h, model, decay)
    tt = engine.integrate_phase(source, uniq, want_logr=False)["tt"][0]
    theta_u = uniq * L + tt
    theta_all = theta_u[inv]
    unordered = np.empty_like(theta_all)
    unordered[order] = theta_all
    psi = unordered[:-1] - unordered[-1]
    return 2.0 * psi if doubled else psi


def phase_mod(theta_L: float, modulus: float):
    """Write theta = m*modulus + phi with integer m and phi in [0, modulus)."""
    m = math.floor(theta_L / modulus)
    phi = theta_L - m * modulus
    if phi >= modulus:  # guard the floating edge phi == modulus
        m += 1
        phi -= modulus
    if phi < 0.0:
        m -= 1
        phi += modulus
    return m, phi
