"""Estimators and test statistics for the simulated ensembles.

Everything is a pure reduction of its input multiset: permutation-invariant
over replicas, deterministic, and mergeable.  ECDFs are exact step functions
stored as (sorted values, cumulative fractions).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SupportExceedsWindow, TooFewAtoms

_TWO_PI = 2.0 * math.pi

__all__ = [
    "Ecdf",
    "empirical_laplace",
    "gap_ecdf",
    "ks_distance",
    "ks_distance_to_cdf",
    "covariance_estimate",
    "uniformity_test",
    "char_decay_test",
    "triangular_bump",
]


@dataclass(frozen=True)
class Ecdf:
    """Empirical CDF with exact step heights (optionally weighted)."""

    values: np.ndarray
    fractions: np.ndarray

    @classmethod
    def from_samples(cls, samples, weights=None) -> "Ecdf":
        v = np.asarray(samples, dtype=float)
        if v.size == 0:
            raise TooFewAtoms("empty sample")
        order = np.argsort(v, kind="stable")
        v = v[order]
        if weights is None:
            f = np.arange(1, v.size + 1) / v.size
        else:
            w = np.asarray(weights, dtype=float)[order]
            if np.any(w < 0) or w.sum() <= 0:
                raise ValueError("weights must be nonnegative with positive total")
            f = np.cumsum(w) / w.sum()
        return cls(v, f)

    def _ext(self):
        return np.concatenate(([0.0], self.fractions))

    def eval(self, x) -> np.ndarray:
        i = np.searchsorted(self.values, np.asarray(x, dtype=float), side="right")
        return self._ext()[i]

    def eval_left(self, x) -> np.ndarray:
        """Left limit F(x-)."""
        i = np.searchsorted(self.values, np.asarray(x, dtype=float), side="left")
        return self._ext()[i]

    def to_rows(self):
        return np.column_stack([self.values, self.fractions])


def triangular_bump(center: float, width: float, height: float = 1.0, n_knots: int = 33):
    """Piecewise-linear table of h*max(0, 1-|x-c|/w) (the test-function family)."""
    xs = np.linspace(center - width, center + width, n_knots)
    ys = height * np.maximum(0.0, 1.0 - np.abs(xs - center) / width)
    ys[0] = ys[-1] = 0.0
    return xs, ys


def _f_eval(f_table, x):
    xs, ys = (np.asarray(v, dtype=float) for v in f_table)
    return np.interp(x, xs, ys, left=0.0, right=0.0)


def empirical_laplace(point_sets, f_table, window=None):
    """Mean and stderr of exp(-sum_atoms f(x)) over the point sets.

    If `window` is given, the support of f must fit inside [-window, window]
    of every set (SupportExceedsWindow otherwise).
    """
    xs, ys = (np.asarray(v, dtype=float) for v in f_table)
    if np.any(ys < 0):
        raise ValueError("f must be nonnegative")
    if window is not None:
        pos = np.nonzero(ys > 0)[0]
        if pos.size and (xs[pos[0]] < -window or xs[pos[-1]] > window):
            raise SupportExceedsWindow("f support exceeds the sample window")
    vals = np.array([math.exp(-float(np.sum(_f_eval(f_table, np.asarray(p))))) for p in point_sets])
    n = vals.size
    mean = float(vals.mean())
    err = float(vals.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, err


def gap_ecdf(point_sets, window_length=None) -> Ecdf:
    """Pooled consecutive-gap ECDF across point sets (each needs >= 2 atoms).

    window_length, when given, applies the inclusion-probability correction
    for gaps observed through a window of that length: a gap g fits inside
    with probability proportional to (window_length - g), so weighting by
    1/(window_length - g) recovers the typical (Palm) gap law that a
    window-free sample, e.g. circular-ensemble gaps, is drawn from.
    """
    gaps = []
    for p in point_sets:
        a = np.sort(np.asarray(p, dtype=float))
        if a.size < 2:
            raise TooFewAtoms("each point set needs at least two atoms")
        gaps.append(np.diff(a))
    g = np.concatenate(gaps)
    if window_length is None:
        return Ecdf.from_samples(g)
    if np.any(g >= window_length):
        raise ValueError("gap exceeds the stated window length")
    return Ecdf.from_samples(g, weights=1.0 / (window_length - g))


def ks_distance(ecdf_a: Ecdf, ecdf_b: Ecdf) -> float:
    """sup |F_a - F_b| over all jump points of both ECDFs (both jump sides)."""
    grid = np.union1d(ecdf_a.values, ecdf_b.values)
    d = np.abs(ecdf_a.eval(grid) - ecdf_b.eval(grid))
    dl = np.abs(ecdf_a.eval_left(grid) - ecdf_b.eval_left(grid))
    return float(max(d.max(), dl.max()))


def ks_distance_to_cdf(ecdf: Ecdf, cdf) -> float:
    """sup |F_n - F| against a callable CDF (evaluated at both jump sides)."""
    f = np.asarray(cdf(ecdf.values), dtype=float)
    upper = np.abs(ecdf.fractions - f)
    lower = np.abs(f - ecdf._ext()[:-1])
    return float(max(upper.max(), lower.max()))


def covariance_estimate(vectors):
    """Unbiased sample covariance of replica vectors plus jackknife stderrs.

    vectors: (replicas, k).  Returns (cov, stderr) both (k, k).
    """
    x = np.asarray(vectors, dtype=float)
    n, k = x.shape
    if n < 30:
        raise ValueError("need at least 30 replicas for a covariance estimate")
    cov = np.cov(x, rowvar=False, ddof=1).reshape(k, k)
    # delete-one jackknife
    mean = x.mean(axis=0)
    sum_outer = (x - mean).T @ (x - mean)  # = (n-1) * cov
    jk = np.empty((n, k, k))
    for i in range(n):
        outer_i = sum_outer - np.outer(x[i] - mean, x[i] - mean) * n / (n - 1)
        jk[i] = outer_i / (n - 2)
    jbar = jk.mean(axis=0)
    se = np.sqrt((n - 1) / n * np.sum((jk - jbar) ** 2, axis=0))
    return cov, se


def uniformity_test(phases, n_bins=16, max_m=4):
    """Chi-square over equal bins of [0, 2pi) plus |E e^{im theta}| for m <= max_m."""
    ph = np.asarray(phases, dtype=float) % _TWO_PI
    n = ph.size
    if n < 500:
        raise ValueError("need at least 500 samples")
    counts, _ = np.histogram(ph, bins=n_bins, range=(0.0, _TWO_PI))
    expected = n / n_bins
    chi2 = float(np.sum((counts - expected) ** 2) / expected)
    moduli = {}
    for m in range(1, max_m + 1):
        z = np.exp(1j * m * ph).mean()
        moduli[m] = float(abs(z))
    return chi2, moduli


@dataclass(frozen=True)
class CharDecayRecord:
    """Empirical vs theoretical characteristic decay of the rotation phase."""

    m: int
    t0: float
    t: float
    empirical: complex
    stderr: float
    theoretical: complex
    n_replicas: int

    @property
    def deviation(self) -> float:
        return abs(self.empirical - self.theoretical)

    @property
    def within(self) -> float:
        """Deviation measured in stderr units."""
        return self.deviation / self.stderr if self.stderr > 0 else math.inf


def char_decay_test(theta_tilde_t0, theta_tilde_t, m, constants, t0, t) -> CharDecayRecord:
    """Compare E[e^{2mi(theta~_t - theta~_t0)}] with (t/t0)^<G_m>.

    Inputs are replica arrays of the centered phase at the two (absolute)
    times n*t0 and n*t; the scale n cancels in the ratio t/t0.
    """
    a = np.asarray(theta_tilde_t0, dtype=float)
    b = np.asarray(theta_tilde_t, dtype=float)
    if a.shape != b.shape:
        raise ValueError("replica arrays must align")
    z = np.exp(2j * m * (b - a))
    emp = complex(z.mean())
    n = z.size
    var = float(np.var(z.real, ddof=1) + np.var(z.imag, ddof=1)) if n > 1 else 0.0
    err = math.sqrt(var / n) if n > 1 else 0.0
    g_m = constants.G_mean(m) if m != 0 else 0.0
    theo = complex(np.exp(g_m * math.log(t / t0))) if m != 0 else complex(1.0)
    return CharDecayRecord(m, t0, t, emp, err, theo, n)
