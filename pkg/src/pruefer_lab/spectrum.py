"""Dirichlet eigenvalues near a reference energy via the phase map.

Sturm oscillation reads the spectrum off the unwrapped phase: kappa_n with
theta_L(kappa_n) = n*pi are the square roots of the Dirichlet eigenvalues,
and the rescaled atoms are x_n = L*(kappa_n - sqrt(E0)).  theta_L is strictly
increasing in kappa along a frozen path, so every root is found by bracketed
refinement on a kappa grid: brackets come from one grid pass, then Illinois
(secant with a bisection guarantee) re-integrates the frozen path once per
probe, at most 40 probes per eigenvalue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .errors import BracketFailure, MissingIndex, SupportExceedsWindow, TooFewAtoms, WindowUnderflow

__all__ = [
    "EigenWindow",
    "PointProcessSample",
    "choose_length",
    "count_states",
    "solve_eigenvalues",
    "spacing_fluctuations",
    "laplace_functional_via_phase",
    "two_window_sample",
]

_PI = math.pi


@dataclass(frozen=True)
class EigenWindow:
    """Window around E0 in rescaled units x = L*(sqrt(E) - sqrt(E0))."""

    E0: float
    L: float
    half_width: float = 6.0 * _PI

    def __post_init__(self):
        if self.E0 <= 0 or self.L <= 0 or self.half_width <= 0:
            raise ValueError("E0, L, half_width must be > 0")
        if self.kappa_min <= 0:
            raise WindowUnderflow(
                f"window reaches kappa <= 0: sqrt(E0) - W/L = {self.kappa_min:.3g}"
            )

    @property
    def kappa0(self) -> float:
        return math.sqrt(self.E0)

    @property
    def kappa_min(self) -> float:
        return self.kappa0 - self.half_width / self.L

    @property
    def kappa_max(self) -> float:
        return self.kappa0 + self.half_width / self.L


@dataclass(frozen=True)
class PointProcessSample:
    """Atoms of xi_L in one window along one frozen path."""

    atoms: np.ndarray
    indices: np.ndarray
    phi: float
    m: int
    residuals: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict, repr=False)

    def gaps(self) -> np.ndarray:
        return np.diff(self.atoms)


def choose_length(E0: float, m: int, beta_offset: float = 0.0) -> float:
    """L with sqrt(E0)*L = m*pi + beta_offset exactly (phase-locked horizon)."""
    if not 0.0 <= beta_offset < _PI:
        raise ValueError("beta_offset must lie in [0, pi)")
    L = (m * _PI + beta_offset) / math.sqrt(E0)
    if L <= 0:
        raise ValueError("m too small: L must be > 0")
    return L


def _theta_evaluator_from_path(path, decay, model):
    """theta_L(kappa) evaluator re-integrating the frozen materialized path."""
    L = path.L

    def eval_theta(kappas):
        kappas = np.asarray(kappas, dtype=float)
        engine.check_step(path.h, kappas, model, decay)
        source = engine.array_source(path.increments, [path.x0], path.h, model, decay)
        tt = engine.integrate_phase(source, kappas, want_logr=False)["tt"]
        k2 = kappas if kappas.ndim == 2 else kappas[None, :]
        return k2 * L + tt

    return eval_theta


def count_states(path, kappa, L, decay, model) -> int:
    """#{n : E_n <= kappa^2} = floor(theta_L(kappa)/pi) (Sturm oscillation)."""
    if abs(L - path.L) > 1e-9 * max(1.0, path.L):
        raise ValueError("L must match the path horizon")
    ev = _theta_evaluator_from_path(path, decay, model)
    theta = float(ev(np.array([kappa]))[0, 0])
    return int(math.floor(theta / _PI))


def _refine_roots(eval_theta, lo, hi, f_lo, f_hi, tau, theta_tol, max_probes):
    """Vectorized Illinois refinement of theta(kappa) = tau inside brackets.

    All arrays share shape (R, J).  Returns (kappa_root, residual).
    """
    lo = lo.copy()
    hi = hi.copy()
    f_lo = f_lo.copy()
    f_hi = f_hi.copy()
    if np.any(f_lo > 0) or np.any(f_hi < 0):
        raise BracketFailure("initial bracket does not straddle the target")
    root = 0.5 * (lo + hi)
    resid = np.full(lo.shape, np.inf)
    done = np.zeros(lo.shape, dtype=bool)
    last_side = np.zeros(lo.shape, dtype=np.int8)  # +1 low side moved, -1 high side
    for _ in range(max_probes):
        denom = f_hi - f_lo
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = (lo * f_hi - hi * f_lo) / denom
        bad = ~np.isfinite(cand)
        mid = 0.5 * (lo + hi)
        cand = np.where(bad, mid, cand)
        span = hi - lo
        cand = np.clip(cand, lo + 1e-3 * span, hi - 1e-3 * span)
        cand = np.where(done, root, cand)
        theta = eval_theta(cand)
        f = theta - tau
        newly = (np.abs(f) <= theta_tol) & ~done
        root = np.where(newly, cand, root)
        resid = np.where(newly, np.abs(f), resid)
        done |= newly
        if bool(np.all(done)):
            return root, resid
        low_side = f < 0
        move_lo = low_side & ~done
        move_hi = ~low_side & ~done
        # Illinois: halve the stagnant end's value on repeated same-side moves
        f_hi = np.where(move_lo & (last_side == 1), 0.5 * f_hi, f_hi)
        f_lo = np.where(move_hi & (last_side == -1), 0.5 * f_lo, f_lo)
        lo = np.where(move_lo, cand, lo)
        f_lo = np.where(move_lo, f, f_lo)
        hi = np.where(move_hi, cand, hi)
        f_hi = np.where(move_hi, f, f_hi)
        last_side = np.where(move_lo, 1, np.where(move_hi, -1, last_side)).astype(np.int8)
    raise BracketFailure(f"root refinement exhausted {max_probes} probes")


def _grid_pass(eval_theta, window: EigenWindow, extra_kappas=()):
    """One batched pass over a kappa grid spanning the window (kappa0 included)."""
    span_theta = 2.0 * window.half_width
    n_cells = max(3, int(math.ceil(span_theta / (0.8 * _PI))))
    grid = np.linspace(window.kappa_min, window.kappa_max, n_cells + 1)
    cols = np.unique(np.concatenate([grid, [window.kappa0], np.asarray(extra_kappas, dtype=float)]))
    theta = eval_theta(cols)
    return cols, theta


def _solve_targets(eval_theta, cols, theta_grid, tau, theta_tol, max_probes):
    """Bracket each target between grid columns, then refine.  tau: (R, J)."""
    R, J = tau.shape
    if J == 0:
        return np.zeros((R, 0)), np.zeros((R, 0))
    idx = np.empty((R, J), dtype=np.int64)
    for r in range(R):
        idx[r] = np.searchsorted(theta_grid[r], tau[r])
    if np.any(idx <= 0) or np.any(idx >= theta_grid.shape[1]):
        raise BracketFailure("target falls outside the evaluated grid")
    rows = np.arange(R)[:, None]
    lo = np.broadcast_to(cols, theta_grid.shape)[rows, idx - 1]
    hi = np.broadcast_to(cols, theta_grid.shape)[rows, idx]
    f_lo = theta_grid[rows, idx - 1] - tau
    f_hi = theta_grid[rows, idx] - tau
    return _refine_roots(eval_theta, lo, hi, f_lo, f_hi, tau, theta_tol, max_probes)


def extract_block(eval_theta, window: EigenWindow, theta_tol=1e-9, max_probes=40, metadata=None):
    """Point-process samples for a whole replica block sharing one evaluator.

    eval_theta maps a kappa array (J,) or (R, J) to theta_L values (R, J).
    Returns a list of PointProcessSample, one per replica row.
    """
    cols, theta_g = _grid_pass(eval_theta, window)
    R = theta_g.shape[0]
    i0 = int(np.searchsorted(cols, window.kappa0))
    theta0 = theta_g[:, i0]
    m_int = np.floor(theta0 / _PI).astype(np.int64)
    phi = theta0 - m_int * _PI
    n_first = np.floor(theta_g[:, 0] / _PI).astype(np.int64) + 1
    n_last = np.floor(theta_g[:, -1] / _PI).astype(np.int64)
    counts = np.maximum(n_last - n_first + 1, 0)
    J = int(counts.max()) if R else 0
    if J == 0:
        meta = metadata or {}
        return [
            PointProcessSample(np.array([]), np.array([], dtype=np.int64),
                               float(phi[r]), int(m_int[r]), np.array([]), dict(meta))
            for r in range(R)
        ]
    offs = np.arange(J)[None, :]
    ns = n_first[:, None] + np.minimum(offs, np.maximum(counts - 1, 0)[:, None])
    tau = ns * _PI
    empty = counts == 0
    if np.any(empty):
        # harmless in-range dummy target for rows without any atom
        tau = np.where(empty[:, None], 0.5 * (theta_g[:, :1] + theta_g[:, -1:]), tau)
    roots, resid = _solve_targets(eval_theta, cols, theta_g, tau.astype(float), theta_tol, max_probes)
    kappa0 = window.kappa0
    L = window.L
    samples = []
    for r in range(R):
        c = int(counts[r])
        meta = dict(metadata or {})
        samples.append(
            PointProcessSample(
                atoms=(roots[r, :c] - kappa0) * L,
                indices=ns[r, :c].copy(),
                phi=float(phi[r]),
                m=int(m_int[r]),
                residuals=resid[r, :c].copy(),
                metadata=meta,
            )
        )
    return samples


def extract_targeted_block(eval_theta, E0, L, offsets=(0, 1, 2, 3), theta_tol=1e-9,
                           max_probes=40, metadata=None):
    """Solve only the atoms with indices m + offsets, m = floor(theta_L(kappa0)/pi).

    Cheaper than a full window scan when the statistics need a handful of
    atoms around the reference energy.  offsets must be consecutive integers;
    bracket endpoints sit at half-integer phase levels between the targets
    (the relative phase stays well within half a spacing of the identity for
    decaying potentials), and are widened on the rare bracket miss.
    """
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets.size == 0 or np.any(np.diff(offsets) != 1):
        raise ValueError("offsets must be consecutive integers")
    kappa0 = math.sqrt(E0)
    theta0 = eval_theta(np.array([kappa0]))[:, 0]
    R = theta0.shape[0]
    m_int = np.floor(theta0 / _PI).astype(np.int64)
    phi = theta0 - m_int * _PI
    ns = m_int[:, None] + offsets[None, :]
    tau = ns * _PI
    J = offsets.size
    grow = 0.0
    for attempt in range(4):
        levels = (m_int[:, None] + np.arange(offsets[0], offsets[-1] + 2)[None, :] - 0.5) * _PI
        lo_lv = levels[:, :-1] - grow * _PI
        hi_lv = levels[:, 1:] + grow * _PI
        k_lo = kappa0 + (lo_lv - theta0[:, None]) / L
        k_hi = kappa0 + (hi_lv - theta0[:, None]) / L
        cols = np.concatenate([k_lo, k_hi], axis=1)
        theta_cols = eval_theta(cols)
        f_lo = theta_cols[:, :J] - tau
        f_hi = theta_cols[:, J:] - tau
        if np.all(f_lo < 0) and np.all(f_hi > 0):
            break
        grow += 0.45
    else:
        raise BracketFailure("targeted brackets failed even after widening")
    roots, resid = _refine_roots(eval_theta, k_lo, k_hi, f_lo, f_hi,
                                 tau.astype(float), theta_tol, max_probes)
    samples = []
    for r in range(R):
        samples.append(
            PointProcessSample(
                atoms=(roots[r] - kappa0) * L,
                indices=ns[r].copy(),
                phi=float(phi[r]),
                m=int(m_int[r]),
                residuals=resid[r].copy(),
                metadata=dict(metadata or {}),
            )
        )
    return samples


def solve_eigenvalues(path, window: EigenWindow, decay, model, theta_tol=1e-9, max_probes=40):
    """All eigenvalue atoms in the window along one frozen path."""
    if abs(window.L - path.L) > 1e-9 * max(1.0, path.L):
        raise ValueError("window.L must match the path horizon")
    ev = _theta_evaluator_from_path(path, decay, model)
    meta = {
        "seed": path.seed,
        "L": path.L,
        "E0": window.E0,
        "alpha": decay.alpha if decay is not None else None,
        "W": window.half_width,
        "h": path.h,
        "theta_tol": theta_tol,
    }
    return extract_block(ev, window, theta_tol, max_probes, metadata=meta)[0]


def two_window_sample(path, E0, E0_prime, L, half_width, decay, model, theta_tol=1e-9):
    """Point processes at two reference energies on the same frozen path.

    Exposed for joint-law experiments; no limit statement is asserted.
    """
    s1 = solve_eigenvalues(path, EigenWindow(E0, L, half_width), decay, model, theta_tol)
    s2 = solve_eigenvalues(path, EigenWindow(E0_prime, L, half_width), decay, model, theta_tol)
    return s1, s2


def spacing_fluctuations(sample: PointProcessSample, alpha: float, L: float, center=None):
    """Rescaled spacing fluctuations X_j(n) = (gap_n - pi) * L^(alpha - 1/2).

    gap_n is the atom gap between indices center+n and center+n+1; center
    defaults to the atom nearest x = 0 (ties toward negative x).  Returns
    (n_values, X_values).
    """
    atoms = sample.atoms
    if atoms.size < 2:
        raise TooFewAtoms("need at least two atoms for spacings")
    if center is None:
        center_pos = int(np.argmin(np.abs(atoms)))  # first minimum = negative side on ties
        center = int(sample.indices[center_pos])
    else:
        hits = np.nonzero(sample.indices == center)[0]
        if hits.size == 0:
            raise MissingIndex(f"center index {center} not in window")
        center_pos = int(hits[0])
    scale = L ** (alpha - 0.5)
    gaps = np.diff(atoms)
    ns = sample.indices[:-1] - center
    return ns, (gaps - _PI) * scale


def _interp_table(f_table):
    xs, ys = (np.asarray(v, dtype=float) for v in f_table)
    if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0):
        raise ValueError("f_table must be (increasing xs, ys)")
    if np.any(ys < 0):
        raise ValueError("test function must be nonnegative")
    return xs, ys


def laplace_functional_via_phase(path, window: EigenWindow, f_table, decay, model,
                                 theta_tol=1e-8, max_probes=40):
    """exp(-sum_n f(Psi_L^{-1}(n pi - phi))) evaluated through the phase map.

    f is a piecewise-linear table (xs, ys >= 0) of compact support; lattice
    points n pi - phi outside Psi_L's computed range never carry support mass
    (SupportExceedsWindow otherwise).  Per path this must agree with
    exp(-sum f(x_n)) over the solve_eigenvalues atoms.
    """
    xs, ys = _interp_table(f_table)
    pos = np.nonzero(ys > 0)[0]
    if pos.size == 0:
        return 1.0
    s_lo = xs[max(pos[0] - 1, 0)]
    s_hi = xs[min(pos[-1] + 1, xs.size - 1)]
    if s_lo < -window.half_width or s_hi > window.half_width:
        raise SupportExceedsWindow(
            f"support [{s_lo:.3g}, {s_hi:.3g}] exceeds window half-width {window.half_width:.3g}"
        )
    ev = _theta_evaluator_from_path(path, decay, model)
    k_lo = window.kappa0 + s_lo / window.L
    k_hi = window.kappa0 + s_hi / window.L
    cols, theta_g = _grid_pass(ev, window, extra_kappas=[k_lo, k_hi])
    i0 = int(np.searchsorted(cols, window.kappa0))
    theta0 = float(theta_g[0, i0])
    m_int, phi = divmod(theta0, _PI)
    psi_lo = float(theta_g[0, int(np.searchsorted(cols, k_lo))]) - theta0
    psi_hi = float(theta_g[0, int(np.searchsorted(cols, k_hi))]) - theta0
    # lattice points y = n*pi - phi inside the support image; the 1e-9 nudge
    # drops only boundary roots where f vanishes anyway
    n_min = int(math.ceil((psi_lo + phi) / _PI + 1e-9))
    n_max = int(math.floor((psi_hi + phi) / _PI - 1e-9))
    if n_max < n_min:
        return 1.0
    y = np.arange(n_min, n_max + 1) * _PI - phi
    tau = (theta0 + y)[None, :]
    roots, _ = _solve_targets(ev, cols, theta_g, tau, theta_tol, max_probes)
    x_roots = (roots[0] - window.kappa0) * window.L
    f_vals = np.interp(x_roots, xs, ys, left=0.0, right=0.0)
    return float(np.exp(-np.sum(f_vals)))
