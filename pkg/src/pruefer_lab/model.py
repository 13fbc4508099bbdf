"""Potential model on the circle and every closed-form constant derived from it.

The driving diffusion is a Brownian motion on the flat circle with generator
L = (sigma2/2) d^2/dx^2 and the *normalized* (probability) volume measure, so
<.> below always means the average over [0, 2pi).  The potential shape is a
finite Fourier sum

    F(x) = sum_k a_k cos(kx) + b_k sin(kx),   k >= 1,

which has <F> = 0 structurally.  Both cos(kx) and sin(kx) are eigenfunctions
of L with eigenvalue lambda_k = -(sigma2/2) k^2, so resolvents of L are
diagonal in this basis and all constants below are exact finite sums:

    C(E)      = <grad (L+2i sqrt(E))^-1 F . conj(...)>        (diffusion strength)
    gamma(E)  = -(1/4E) int lambda/(lambda^2+4E) dsigma_F     (Lyapunov exponent)
    beta(E)   = 8E/C(E) = 1/gamma(E)                          (ensemble parameter)
    D         = sqrt(C(E)/(2E))                               (SDE noise constant)

together with the rotation-phase constants <G_m>, C1..C4 used by the
critical-case phase process.  Two independent computation routes (mode sums
vs. spectral-measure integrals) are kept side by side so tests can pin them
against each other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoCriticalEnergy, SingularShift

__all__ = [
    "PotentialModel",
    "DecayProfile",
    "FourierFunction",
    "SpectralConstants",
    "eval_decay",
    "eval_potential",
    "resolvent_apply",
    "carre_du_champ_mean",
    "lyapunov_from_spectral_measure",
    "find_critical_energy",
    "energy_for_beta",
    "spectral_constants",
]


@dataclass(frozen=True)
class PotentialModel:
    """Fourier potential F on the circle plus the diffusion normalization.

    fourier_cos[k-1] and fourier_sin[k-1] are the coefficients of cos(kx) and
    sin(kx); there is no k = 0 slot, so <F> = 0 cannot be violated.
    """

    fourier_cos: tuple = (1.0,)
    fourier_sin: tuple = ()
    generator_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "fourier_cos", tuple(float(c) for c in self.fourier_cos))
        object.__setattr__(self, "fourier_sin", tuple(float(c) for c in self.fourier_sin))
        if self.generator_scale <= 0:
            raise ValueError("generator_scale must be > 0")
        if not any(c != 0.0 for c in self.fourier_cos + self.fourier_sin):
            raise ValueError("F must be non-constant: at least one Fourier coefficient nonzero")

    @property
    def n_modes(self) -> int:
        return max(len(self.fourier_cos), len(self.fourier_sin))

    def coefficient_arrays(self):
        """Return (k, a_k, b_k) as aligned arrays, k = 1..n_modes."""
        n = self.n_modes
        a = np.zeros(n)
        b = np.zeros(n)
        a[: len(self.fourier_cos)] = self.fourier_cos
        b[: len(self.fourier_sin)] = self.fourier_sin
        return np.arange(1, n + 1), a, b

    def mode_eigenvalues(self) -> np.ndarray:
        """lambda_k = -(sigma2/2) k^2 for k = 1..n_modes."""
        k, _, _ = self.coefficient_arrays()
        return -0.5 * self.generator_scale * k.astype(float) ** 2

    def spectral_measure(self):
        """Spectral measure of L w.r.t. F: atoms (lambda_k, (a_k^2+b_k^2)/2).

        Total mass equals <F^2> under the normalized volume.
        """
        k, a, b = self.coefficient_arrays()
        lam = self.mode_eigenvalues()
        mass = 0.5 * (a**2 + b**2)
        keep = mass > 0
        return lam[keep], mass[keep]

    def max_abs(self) -> float:
        """Cheap upper bound for max |F| (sum of coefficient amplitudes)."""
        _, a, b = self.coefficient_arrays()
        return float(np.sum(np.hypot(a, b)))

    def scaled(self, factor: float) -> "PotentialModel":
        """Model with all coefficients multiplied by `factor` (amplitude absorption)."""
        return PotentialModel(
            tuple(factor * c for c in self.fourier_cos),
            tuple(factor * c for c in self.fourier_sin),
            self.generator_scale,
        )


@dataclass(frozen=True)
class DecayProfile:
    """Smooth even decay envelope a(t) = amplitude * (1 + t^2)^(-alpha/2).

    Satisfies 2^(-alpha/2) * amplitude * t^-alpha <= a(t) <= amplitude * t^-alpha
    for t >= 1 and a(t) t^alpha -> amplitude, so the t^-alpha normalization
    needed by the Gaussian/critical limits holds exactly when amplitude = 1.
    amplitude = 0 switches the potential off (free operator).
    """

    alpha: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")


def eval_decay(profile: DecayProfile, t):
    """Evaluate a(t) for t >= 0 (a is even, so negative t never needed)."""
    t = np.asarray(t, dtype=float)
    return profile.amplitude * (1.0 + t * t) ** (-0.5 * profile.alpha)


def eval_potential(model: PotentialModel, x):
    """Evaluate F(x) = sum a_k cos(kx) + b_k sin(kx); x interpreted mod 2pi."""
    x = np.asarray(x, dtype=float)
    k, a, b = model.coefficient_arrays()
    kx = np.multiply.outer(x, k)
    return np.cos(kx) @ a + np.sin(kx) @ b


@dataclass(frozen=True)
class FourierFunction:
    """A function on the circle as (possibly complex) cos/sin coefficients."""

    cos: np.ndarray
    sin: np.ndarray
    generator_scale: float

    def mode_eigenvalues(self) -> np.ndarray:
        k = np.arange(1, len(self.cos) + 1, dtype=float)
        return -0.5 * self.generator_scale * k**2


def _as_fourier(obj) -> FourierFunction:
    if isinstance(obj, FourierFunction):
        return obj
    if isinstance(obj, PotentialModel):
        _, a, b = obj.coefficient_arrays()
        return FourierFunction(a.astype(complex), b.astype(complex), obj.generator_scale)
    raise TypeError(f"expected PotentialModel or FourierFunction, got {type(obj)!r}")


def resolvent_apply(model, shift) -> FourierFunction:
    """Apply (L + shift)^-1 to F mode by mode.

    Mode k of F picks up the factor 1/(lambda_k + shift).  For shift = 0 this
    is L^-1 on the zero-mean part (F has no constant mode by construction).
    Raises SingularShift when shift hits -lambda_k of an active mode.
    """
    f = _as_fourier(model)
    lam = f.mode_eigenvalues()
    z = complex(shift)
    denom = lam + z
    active = (np.abs(f.cos) > 0) | (np.abs(f.sin) > 0)
    if np.any(active & (np.abs(denom) == 0.0)):
        raise SingularShift(f"shift {z} is an eigenvalue of -L on an active mode")
    denom = np.where(denom == 0.0, 1.0, denom)
    out = FourierFunction(f.cos / denom, f.sin / denom, f.generator_scale)
    if z.imag == 0.0 and z.real == 0.0:
        return FourierFunction(out.cos.real.astype(complex), out.sin.real.astype(complex), f.generator_scale)
    return out


def carre_du_champ_mean(f, h) -> complex:
    """Mean carre du champ <[f, conj(h)]> = sigma2 <f' conj(h')>.

    In the cos/sin basis this is sigma2 * sum_k k^2 (a_k conj(c_k) + b_k conj(d_k)) / 2.
    For f = h with real coefficients the value is real and >= 0.
    """
    ff = _as_fourier(f)
    hh = _as_fourier(h)
    if ff.generator_scale != hh.generator_scale:
        raise ValueError("mismatched generator_scale")
    n = max(len(ff.cos), len(hh.cos))

    def pad(v, m):
        out = np.zeros(m, dtype=complex)
        out[: len(v)] = v
        return out

    a, b = pad(ff.cos, n), pad(ff.sin, n)
    c, d = pad(hh.cos, n), pad(hh.sin, n)
    k2 = np.arange(1, n + 1, dtype=float) ** 2
    val = 0.5 * ff.generator_scale * np.sum(k2 * (a * np.conj(c) + b * np.conj(d)))
    return complex(val)


def mean_product_with_potential(model: PotentialModel, g: FourierFunction) -> complex:
    """<F g> under the normalized volume = sum_k (a_k g_cos_k + b_k g_sin_k)/2."""
    _, a, b = model.coefficient_arrays()
    n = len(a)
    gc = np.zeros(n, dtype=complex)
    gs = np.zeros(n, dtype=complex)
    gc[: len(g.cos)] = g.cos
    gs[: len(g.sin)] = g.sin
    return complex(0.5 * np.sum(a * gc + b * gs))


def lyapunov_from_spectral_measure(sigma_f, E: float) -> float:
    """gamma(E) = -(1/4E) int lambda/(lambda^2 + 4E) dsigma_F(lambda).

    sigma_f is a pair (lambdas, masses) supported on lambda <= 0; returns the
    Lyapunov exponent, positive and strictly decreasing in E.
    """
    lam, mass = (np.asarray(v, dtype=float) for v in sigma_f)
    if E <= 0:
        raise ValueError("E must be > 0")
    if lam.size == 0:
        return 0.0
    return float(-np.sum(mass * lam / (lam**2 + 4.0 * E)) / (4.0 * E))


def _gamma(model: PotentialModel, E: float) -> float:
    return lyapunov_from_spectral_measure(model.spectral_measure(), E)


def find_critical_energy(model: PotentialModel, tol: float = 1e-13) -> float:
    """Unique root of gamma(E) = 1/2: the point-spectrum boundary E_c.

    gamma is strictly decreasing with gamma(0+) = +inf, so bracketing is safe.
    """
    return energy_for_beta(model, 2.0, tol)


def energy_for_beta(model: PotentialModel, beta_target: float, tol: float = 1e-13) -> float:
    """Energy with beta(E) = 8E/C(E) = beta_target (root of gamma(E) = 1/beta_target).

    gamma is strictly decreasing, so the doubling bracket plus bisection used
    for the critical energy applies verbatim.
    """
    if beta_target <= 0:
        raise ValueError("beta_target must be > 0")
    target = 1.0 / beta_target
    lo = 1e-12
    if _gamma(model, lo) < target:
        raise NoCriticalEnergy(f"gamma(E) < {target:g} already at the lower bracket end")
    hi = 1.0
    while _gamma(model, hi) > target:
        hi *= 2.0
        if hi > 1e15:
            raise NoCriticalEnergy(f"gamma(E) stays above {target:g} up to E = 1e15")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _gamma(model, mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SpectralConstants:
    """Every closed-form constant at reference energy E (see module docstring)."""

    energy: float
    kappa: float
    g_kappa: FourierFunction
    g_zero: FourierFunction
    C_E: float
    gamma_E: float
    beta_E: float
    E_c: float
    D: float
    G_m_means: dict = field(repr=False)
    C1: complex
    C2: complex
    C3: float
    C4: float
    sigma_F: tuple = field(repr=False)

    def G_mean(self, m: int) -> complex:
        """<G_m> for any integer m (computed on demand if not cached)."""
        if m in self.G_m_means:
            return self.G_m_means[m]
        return _g_mean_from_parts(m, self.kappa, self._S_plus, self._S_minus, self._S_zero)

    @property
    def _S_plus(self) -> complex:
        lam, mass = self.sigma_F
        return complex(np.sum(np.asarray(mass) / (np.asarray(lam) + 2j * self.kappa)))

    @property
    def _S_minus(self) -> complex:
        return np.conj(self._S_plus)

    @property
    def _S_zero(self) -> float:
        lam, mass = self.sigma_F
        return float(np.sum(np.asarray(mass) / np.asarray(lam)))

    def to_json_dict(self) -> dict:
        ms = sorted(self.G_m_means)
        return {
            "E": self.energy,
            "C_E": self.C_E,
            "gamma": self.gamma_E,
            "beta": self.beta_E,
            "E_c": self.E_c,
            "D": self.D,
            "G_m": [[m, self.G_m_means[m].real, self.G_m_means[m].imag] for m in ms],
            "C1": [self.C1.real, self.C1.imag],
            "C2": [self.C2.real, self.C2.imag],
            "C3": self.C3,
            "C4": self.C4,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_json_dict(), **kw)


def _g_mean_from_parts(m, kappa, s_plus, s_minus, s_zero) -> complex:
    """<G_m> = m(m+1)/(4k^2) <F g_k> + m(m-1)/(4k^2) <F g_-k> + m^2/k^2 <F g>."""
    k2 = kappa * kappa
    return (
        m * (m + 1) / (4.0 * k2) * s_plus
        + m * (m - 1) / (4.0 * k2) * s_minus
        + m * m / k2 * s_zero
    )


def spectral_constants(model: PotentialModel, E: float, m_range: int = 4) -> SpectralConstants:
    """Compute all closed-form constants of the model at energy E > 0.

    C_E is produced by the direct mode sum <[g_kappa, conj(g_kappa)]>; the
    spectral-measure route 8 E gamma(E) agrees to ~1e-15 by construction and
    is exposed separately for the dual-route tests.
    """
    if E <= 0:
        raise ValueError("E must be > 0")
    kappa = math.sqrt(E)
    g_kappa = resolvent_apply(model, 2j * kappa)
    g_zero = resolvent_apply(model, 0.0)

    c_e = carre_du_champ_mean(g_kappa, g_kappa)
    if abs(c_e.imag) > 1e-12 * max(1.0, abs(c_e.real)):
        raise AssertionError("C(E) came out non-real")
    C_E = float(c_e.real)

    sigma_f = model.spectral_measure()
    gamma_e = lyapunov_from_spectral_measure(sigma_f, E)
    beta_e = 8.0 * E / C_E
    e_c = find_critical_energy(model)
    D = math.sqrt(C_E / (2.0 * E))

    s_plus = mean_product_with_potential(model, g_kappa)       # <F g_kappa>
    s_zero = mean_product_with_potential(model, g_zero).real   # <F g>, real
    s_minus = np.conj(s_plus)

    # <[g, g]> = -2 <F g> (integration by parts on the circle)
    cdc_g = carre_du_champ_mean(g_zero, g_zero).real
    c1 = (s_plus + 2.0 * s_zero) / (2.0 * E)
    c4_sq = (2.0 * C_E + 4.0 * cdc_g) / (4.0 * E)
    c4 = math.sqrt(c4_sq)
    c2 = 1j * c4
    lam, mass = sigma_f
    c3 = float(-np.sum(mass / (lam**2 + 4.0 * E)) / kappa)

    g_means = {
        m: _g_mean_from_parts(m, kappa, s_plus, s_minus, s_zero)
        for m in range(-m_range, m_range + 1)
        if m != 0
    }

    return SpectralConstants(
        energy=E,
        kappa=kappa,
        g_kappa=g_kappa,
        g_zero=g_zero,
        C_E=C_E,
        gamma_E=gamma_e,
        beta_E=beta_e,
        E_c=e_c,
        D=D,
        G_m_means=g_means,
        C1=complex(c1),
        C2=complex(c2),
        C3=c3,
        C4=c4,
        sigma_F=sigma_f,
    )
