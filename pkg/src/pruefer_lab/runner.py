"""Experiment orchestration: replica fan-out, persistence, manifests.

Replicas are processed in fixed-size chunks (order and size independent of
the worker count), each replica seeded by a counter-based split of the master
seed, so (master_seed, replicas) fixes every artifact byte no matter how the
chunks are scheduled.  A failing replica is retried in isolation, recorded in
the manifest, and excluded from aggregates.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import os
import time

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2 as _chi2

from . import engine, limits, spectrum, stats
from .config import ExperimentConfig, validate_config
from .errors import PrueferLabError
from .model import energy_for_beta, spectral_constants
from .spectrum import EigenWindow, choose_length

__version__ = "0.1.0"

REPLICA_CHUNK = 125  # fixed: chunk boundaries must not depend on worker count
_PI = math.pi


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def fmt(x) -> str:
    """Shortest round-trip decimal for floats (CSV cells)."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(c) for c in row) + "\n")


def effective_workers(requested: int) -> int:
    if requested and requested > 0:
        return requested
    env = os.environ.get("PRUEFER_LAB_WORKERS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def effective_model(cfg: ExperimentConfig):
    """Model with the decay amplitude absorbed into F (theory normalization)."""
    amp = cfg.decay.amplitude
    if amp in (0.0, 1.0):
        return cfg.model
    return cfg.model.scaled(amp)


def resolve_E0(cfg: ExperimentConfig) -> float:
    exp = cfg.experiment
    if exp.get("beta_target") is not None and exp.get("E0") is None:
        return energy_for_beta(effective_model(cfg), float(exp["beta_target"]))
    return float(exp["E0"])


def resolve_L(cfg: ExperimentConfig, E0: float) -> float:
    exp = cfg.experiment
    if exp.get("m_lock") is not None:
        return choose_length(E0, int(exp["m_lock"]), float(exp.get("beta_offset", 0.0)))
    return float(exp["L"])


def resolve_h(cfg: ExperimentConfig, kappa: float) -> float:
    h = float(cfg.numerics.get("h", 0.0))
    return h if h > 0 else limits.default_step(kappa)


def bracket_margin(cfg: ExperimentConfig) -> float:
    m = float(cfg.numerics.get("margin", 0.0))
    if m > 0:
        return m
    return 1.6 if cfg.decay.alpha <= 0.55 else 1.0


def replica_seeds(master: int, indices) -> list:
    return [engine.split_seed(master, i) for i in indices]


def _chunks(n: int, offset: int = 0):
    return [
        list(range(offset + i, offset + min(i + REPLICA_CHUNK, n)))
        for i in range(0, n, REPLICA_CHUNK)
    ]


# ---------------------------------------------------------------------------
# replica-chunk execution (one function per chunked kind)
# ---------------------------------------------------------------------------

def _block_evaluator(seeds, n_steps, h, L, cfg):
    model, decay = cfg.model, cfg.decay
    sigma2 = model.generator_scale

    def ev(kappas):
        kappas = np.asarray(kappas, dtype=float)
        engine.check_step(h, kappas, model, decay)
        src = engine.stream_source(seeds, n_steps, h, sigma2, model, decay)
        tt = engine.integrate_phase(src, kappas)["tt"]
        k2 = kappas if kappas.ndim == 2 else kappas[None, :]
        return k2 * L + tt

    return ev


def _chunk_spectrum(cfg: ExperimentConfig, indices):
    E0 = resolve_E0(cfg)
    L = resolve_L(cfg, E0)
    kappa0 = math.sqrt(E0)
    h = resolve_h(cfg, kappa0)
    n_steps, h_eff = engine.grid_steps(L, h)
    seeds = replica_seeds(cfg.run["master_seed"], indices)
    ev = _block_evaluator(seeds, n_steps, h_eff, L, cfg)
    offsets = cfg.experiment.get("offsets")
    if offsets is not None:
        samples = spectrum.extract_targeted_block(
            ev, E0, L, offsets=offsets, theta_tol=float(cfg.numerics["theta_tol"]),
        )
    else:
        window = EigenWindow(E0, L, float(cfg.numerics["window"]))
        samples = spectrum.extract_block(
            ev, window, theta_tol=float(cfg.numerics["theta_tol"]),
        )
    out = []
    for s in samples:
        out.append({
            "indices": s.indices, "atoms": s.atoms,
            "kappas": kappa0 + s.atoms / L,
            "phi": s.phi, "m": s.m,
            "resid_max": float(s.residuals.max()) if s.residuals.size else 0.0,
        })
    return out


def _chunk_gaussian(cfg: ExperimentConfig, indices):
    n_values = cfg.experiment.get("n_values", [0, 1])
    if cfg.experiment.get("offsets") is None:
        lo = min(min(n_values), 0)
        cfg.experiment["offsets"] = list(range(lo, max(n_values) + 3))
    base = _chunk_spectrum(cfg, indices)
    alpha = cfg.decay.alpha
    E0 = resolve_E0(cfg)
    L = resolve_L(cfg, E0)
    for rec in base:
        s = spectrum.PointProcessSample(
            rec["atoms"], rec["indices"], rec["phi"], rec["m"],
            np.zeros_like(rec["atoms"]), {},
        )
        ns, xs = spectrum.spacing_fluctuations(s, alpha, L)
        row = []
        for n in n_values:
            hit = np.nonzero(ns == n)[0]
            if hit.size == 0:
                raise PrueferLabError(f"X_j({n}) not covered by the window")
            row.append(float(xs[hit[0]]))
        rec["X"] = row
    return base


def _chunk_clock(cfg: ExperimentConfig, indices):
    E0 = float(cfg.experiment["E0"])
    kappa = math.sqrt(E0)
    T = float(cfg.experiment["T"])
    beta_offset = float(cfg.experiment.get("beta_offset", 0.0))
    h = resolve_h(cfg, kappa)
    n_steps, h_eff = engine.grid_steps(T, h)
    seeds = replica_seeds(cfg.run["master_seed"], indices)
    src = engine.stream_source(seeds, n_steps, h_eff, cfg.model.generator_scale,
                               cfg.model, cfg.decay)
    tt = engine.integrate_phase(src, np.array([kappa]))["tt"][:, 0]
    return [
        {"theta_tilde_T": float(t), "phi_beta": float((beta_offset + t) % _PI)}
        for t in tt
    ]


def _chunk_uniformity(cfg: ExperimentConfig, indices):
    E0 = float(cfg.experiment["E0"])
    kappa = math.sqrt(E0)
    T = float(cfg.experiment["T"])
    h = resolve_h(cfg, kappa)
    n_steps, h_eff = engine.grid_steps(T, h)
    seeds = replica_seeds(cfg.run["master_seed"], indices)
    src = engine.stream_source(seeds, n_steps, h_eff, cfg.model.generator_scale,
                               cfg.model, cfg.decay)
    tt = engine.integrate_phase(src, np.array([kappa]))["tt"][:, 0]
    phases = (2.0 * kappa * (n_steps * h_eff) + 2.0 * tt) % (2.0 * _PI)
    return [{"phase": float(p)} for p in phases]


def _chunk_char_decay(cfg: ExperimentConfig, indices):
    E0 = float(cfg.experiment["E0"])
    kappa = math.sqrt(E0)
    scale = float(cfg.experiment["scale"])
    t0 = float(cfg.experiment.get("t0_factor", 1.0)) * scale
    t1 = float(cfg.experiment.get("t_factor", 4.0)) * scale
    h = resolve_h(cfg, kappa)
    n_steps, h_eff = engine.grid_steps(t1, h)
    i0 = int(round(t0 / h_eff))
    seeds = replica_seeds(cfg.run["master_seed"], indices)
    src = engine.stream_source(seeds, n_steps, h_eff, cfg.model.generator_scale,
                               cfg.model, cfg.decay)
    out = engine.integrate_phase(src, np.array([kappa]), record_indices=[i0, n_steps])
    tt0 = out["rec_tt"][0, :, 0]
    tt1 = out["rec_tt"][1, :, 0]
    return [{"tt0": float(a), "tt1": float(b)} for a, b in zip(tt0, tt1)]


_CHUNK_RUNNERS = {
    "spectrum": _chunk_spectrum,
    "critical": _chunk_spectrum,
    "gaussian": _chunk_gaussian,
    "clock": _chunk_clock,
    "uniformity": _chunk_uniformity,
    "char_decay": _chunk_char_decay,
}


def _chunk_worker(payload):
    raw, indices = payload
    cfg = validate_config(raw)
    runner = _CHUNK_RUNNERS[cfg.kind]
    try:
        results = runner(cfg, indices)
        return {"ok": list(zip(indices, results)), "failed": []}
    except Exception:
        ok, failed = [], []
        for i in indices:
            try:
                res = runner(cfg, [i])
                ok.append((i, res[0]))
            except Exception as exc:  # noqa: BLE001 - replica isolation
                failed.append((i, f"{type(exc).__name__}: {exc}"))
        return {"ok": ok, "failed": failed}


def _fan_out(cfg: ExperimentConfig):
    n = int(cfg.run["replicas"])
    offset = int(cfg.run.get("replica_offset", 0))
    payloads = [(cfg.raw, idx) for idx in _chunks(n, offset)]
    workers = effective_workers(int(cfg.run["workers"]))
    if workers <= 1 or len(payloads) <= 1:
        outs = [_chunk_worker(p) for p in payloads]
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(min(workers, len(payloads))) as pool:
            outs = pool.map(_chunk_worker, payloads)
    ok, failed = [], []
    for o in outs:
        ok.extend(o["ok"])
        failed.extend(o["failed"])
    ok.sort(key=lambda t: t[0])
    failed.sort(key=lambda t: t[0])
    return ok, failed


# ---------------------------------------------------------------------------
# experiment drivers (artifact writers)
# ---------------------------------------------------------------------------

def _spectrum_artifacts(cfg, ok, out_dir, E0, L):
    rows = []
    meta_phi = {}
    meta_m = {}
    for idx, rec in ok:
        meta_phi[str(idx)] = rec["phi"]
        meta_m[str(idx)] = rec["m"]
        for n, x, k in zip(rec["indices"], rec["atoms"], rec["kappas"]):
            rows.append((idx, int(n), float(x), float(k)))
    write_csv(os.path.join(out_dir, "sample.csv"), ["replica", "n", "x_n", "kappa_n"], rows)
    center_dev = []
    gap_pool = []
    max_gap_dev = 0.0
    for idx, rec in ok:
        atoms = rec["atoms"]
        if atoms.size >= 2:
            gaps = np.diff(atoms)
            gap_pool.extend(gaps.tolist())
            max_gap_dev = max(max_gap_dev, float(np.abs(gaps - _PI).max()))
            c = int(np.argmin(np.abs(atoms)))
            if c < atoms.size - 1:
                center_dev.append(abs(float(atoms[c + 1] - atoms[c]) - _PI))
    summary = {
        "E0": E0, "L": L, "alpha": cfg.decay.alpha,
        "replicas_ok": len(ok),
        "g_center_mean_abs_dev": float(np.mean(center_dev)) if center_dev else None,
        "gap_mean": float(np.mean(gap_pool)) if gap_pool else None,
        "max_abs_gap_dev": max_gap_dev,
        "resid_max": max((rec["resid_max"] for _, rec in ok), default=0.0),
    }
    checks = []
    if cfg.decay.amplitude == 0.0:
        checks.append(_check("free_gaps_equal_pi", max_gap_dev, 1e-9, "<="))
    if gap_pool:
        ecdf = stats.Ecdf.from_samples(gap_pool)
        write_csv(os.path.join(out_dir, "gaps_ecdf.csv"), ["gap", "F"], ecdf.to_rows())
    return summary, checks, {"phi": meta_phi, "m": meta_m}


def _check(name, statistic, threshold, op):
    ok = statistic <= threshold if op == "<=" else statistic >= threshold
    return {"name": name, "statistic": float(statistic), "threshold": float(threshold),
            "op": op, "pass": bool(ok)}


def run_experiment(cfg: ExperimentConfig, check=False):
    """Execute one experiment config; write artifacts; return the manifest dict."""
    t_start = time.time()
    out_dir = cfg.run["output_dir"]
    os.makedirs(out_dir, exist_ok=True)
    kind = cfg.kind
    artifacts = []
    failures = []
    stats_doc = {"kind": kind, "summary": {}, "checks": []}
    sidecar = {
        "kind": kind,
        "master_seed": cfg.run["master_seed"],
        "replicas": cfg.run["replicas"],
        "alpha": cfg.decay.alpha,
        "amplitude": cfg.decay.amplitude,
        "sigma2": cfg.model.generator_scale,
        "numerics": dict(cfg.numerics),
    }

    if kind in ("spectrum", "critical", "gaussian"):
        E0 = resolve_E0(cfg)
        L = resolve_L(cfg, E0)
        kappa0 = math.sqrt(E0)
        h = resolve_h(cfg, kappa0)
        _, h_eff = engine.grid_steps(L, h)
        sidecar.update({"E0": E0, "L": L, "W": cfg.numerics["window"],
                        "h": h_eff, "theta_tol": cfg.numerics["theta_tol"]})
        ok, failed = _fan_out(cfg)
        failures = failed
        summary, checks, extra = _spectrum_artifacts(cfg, ok, out_dir, E0, L)
        sidecar.update(extra)
        artifacts += ["sample.csv"]
        if os.path.exists(os.path.join(out_dir, "gaps_ecdf.csv")):
            artifacts += ["gaps_ecdf.csv"]
        stats_doc["summary"] = summary
        stats_doc["checks"] = checks
        if kind == "gaussian":
            n_values = cfg.experiment.get("n_values", [0, 1])
            X = np.array([rec["X"] for _, rec in ok])
            write_csv(os.path.join(out_dir, "xjn.csv"),
                      ["replica"] + [f"X_{n}" for n in n_values],
                      [(idx, *rec["X"]) for idx, rec in ok])
            artifacts.append("xjn.csv")
            consts = spectral_constants(effective_model(cfg), E0)
            dns = sorted({abs(a - b) for a in n_values for b in n_values})
            with open(os.path.join(out_dir, "covariance_table.json"), "w") as fh:
                json.dump(limits.covariance_table(consts, cfg.decay.alpha, dns), fh, indent=2)
            artifacts.append("covariance_table.json")
            cov, se = stats.covariance_estimate(X)
            checks = stats_doc["checks"]
            for i, n_i in enumerate(n_values):
                for j, n_j in enumerate(n_values):
                    if j < i:
                        continue
                    target = limits.gaussian_covariance(consts, cfg.decay.alpha, n_i, n_j)
                    z = abs(cov[i, j] - target) / se[i, j] if se[i, j] > 0 else math.inf
                    checks.append(_check(f"cov_X{n_i}_X{n_j}_z", z, 3.0, "<="))
                    stats_doc["summary"][f"cov_{n_i}_{n_j}"] = float(cov[i, j])
                    stats_doc["summary"][f"cov_{n_i}_{n_j}_target"] = target
                    stats_doc["summary"][f"cov_{n_i}_{n_j}_se"] = float(se[i, j])
            x0 = X[:, 0]
            mu, sd = float(x0.mean()), float(x0.std(ddof=1))
            ecdf = stats.Ecdf.from_samples(x0)
            ks = stats.ks_distance_to_cdf(ecdf, lambda v: ndtr((v - mu) / sd))
            checks.append(_check("X0_normal_ks", ks, 0.05, "<="))

    elif kind == "clock":
        ok, failed = _fan_out(cfg)
        failures = failed
        rows = [(idx, rec["phi_beta"], rec["theta_tilde_T"]) for idx, rec in ok]
        write_csv(os.path.join(out_dir, "clock.csv"),
                  ["replica", "phi_beta", "theta_tilde_T"], rows)
        artifacts.append("clock.csv")
        phis = np.array([rec["phi_beta"] for _, rec in ok])
        stats_doc["summary"] = {
            "E0": cfg.experiment["E0"], "T": cfg.experiment["T"],
            "beta_offset": cfg.experiment.get("beta_offset", 0.0),
            "replicas_ok": len(ok),
            "phi_beta_mean": float(phis.mean()) if phis.size else None,
        }

    elif kind == "uniformity":
        ok, failed = _fan_out(cfg)
        failures = failed
        rows = [(idx, rec["phase"]) for idx, rec in ok]
        write_csv(os.path.join(out_dir, "phases.csv"), ["replica", "phase_2theta"], rows)
        artifacts.append("phases.csv")
        phases = np.array([rec["phase"] for _, rec in ok])
        chi2_stat, moduli = stats.uniformity_test(phases)
        chi2_thresh = float(_chi2.ppf(0.999, 15))
        mod_thresh = 3.0 / math.sqrt(len(phases))
        stats_doc["summary"] = {"chi2": chi2_stat, "moduli": {str(k): v for k, v in moduli.items()},
                                "replicas_ok": len(ok)}
        stats_doc["checks"] = [
            _check("uniformity_chi2", chi2_stat, chi2_thresh, "<="),
            _check("uniformity_max_modulus", max(moduli.values()), mod_thresh, "<="),
        ]

    elif kind == "char_decay":
        ok, failed = _fan_out(cfg)
        failures = failed
        rows = [(idx, rec["tt0"], rec["tt1"]) for idx, rec in ok]
        write_csv(os.path.join(out_dir, "char.csv"),
                  ["replica", "theta_tilde_t0", "theta_tilde_t"], rows)
        artifacts.append("char.csv")
        consts = spectral_constants(effective_model(cfg), float(cfg.experiment["E0"]))
        m = int(cfg.experiment.get("m", 1))
        t0f = float(cfg.experiment.get("t0_factor", 1.0))
        tf = float(cfg.experiment.get("t_factor", 4.0))
        rec = stats.char_decay_test(
            np.array([r["tt0"] for _, r in ok]), np.array([r["tt1"] for _, r in ok]),
            m, consts, t0f, tf)
        stats_doc["summary"] = {
            "m": m, "t_ratio": tf / t0f,
            "empirical": [rec.empirical.real, rec.empirical.imag],
            "stderr": rec.stderr,
            "theoretical": [rec.theoretical.real, rec.theoretical.imag],
            "replicas_ok": len(ok),
        }
        stats_doc["checks"] = [_check("char_decay_dev_in_se", rec.within, 3.0, "<=")]

    elif kind == "psi_sde":
        exp = cfg.experiment
        if exp.get("D") is not None:
            D = float(exp["D"])
        else:
            D = spectral_constants(effective_model(cfg), resolve_E0(cfg)).D
        cs = np.asarray(exp["cs"], dtype=float)
        record_times = tuple(exp.get("record_times", [0.25, 0.5, 1.0]))
        ts, values = limits.psi_batch(
            cfg.run["master_seed"], D, cs, t0=float(cfg.numerics["t0"]),
            steps=int(cfg.numerics["sde_steps"]), replicas=int(cfg.run["replicas"]),
            record_times=record_times)
        rows = []
        for r in range(values.shape[0]):
            for it, t in enumerate(ts):
                for ic, c in enumerate(cs):
                    rows.append((r, float(t), float(c), float(values[r, it, ic])))
        write_csv(os.path.join(out_dir, "psi.csv"), ["replica", "t", "c", "psi"], rows)
        artifacts.append("psi.csv")
        checks = []
        summary = {"D": D, "ts": [float(t) for t in ts], "cs": cs.tolist()}
        for it, t in enumerate(ts):
            for ic, c in enumerate(cs):
                v = values[:, it, ic]
                se = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
                dev = abs(v.mean() - 2.0 * c * t)
                summary[f"mean_psi_t{it}_c{ic}"] = float(v.mean())
                if c != 0 and se > 0:
                    checks.append(_check(f"mean_psi_2ct_z_t{it}_c{ic}", dev / se, 3.0, "<="))
                elif c == 0:
                    checks.append(_check(f"psi_zero_fixed_t{it}", float(np.abs(v).max()), 1e-12, "<="))
        mono = 1.0
        if cs.size > 1:
            mono = float(np.mean(np.all(np.diff(values, axis=2) > 0, axis=(1, 2))))
        checks.append(_check("monotone_fraction", mono, 1.0, ">="))
        stats_doc["summary"] = summary
        stats_doc["checks"] = checks

    elif kind == "cbe":
        exp = cfg.experiment
        n = int(exp["n"])
        beta = float(exp["beta"])
        n_samples = int(exp.get("samples", 1000))
        samples, rate = limits.cbe_chain(
            cfg.run["master_seed"], n, beta, n_samples,
            walkers=int(exp.get("walkers", 32)),
            burn_sweeps=int(exp.get("burn_sweeps", 500)),
            thin_sweeps=int(exp.get("thin_sweeps", 1)),
            proposal_width=exp.get("proposal_width"),
        )
        scal = limits.cbe_scaled_gaps(samples)
        rows = []
        for i in range(samples.shape[0]):
            for g, hg in zip(scal["scaled_gaps"][i], scal["half_scaled_gaps"][i]):
                rows.append((i, float(g), float(hg)))
        write_csv(os.path.join(out_dir, "cbe_gaps.csv"),
                  ["sample", "scaled_gap", "half_scaled_gap"], rows)
        artifacts.append("cbe_gaps.csv")
        summary = {"n": n, "beta": beta, "samples": n_samples, "acceptance_rate": rate,
                   "mean_half_scaled_gap": float(np.mean(scal["half_scaled_gaps"]))}
        checks = [_check("acceptance_rate_positive", rate, 1e-6, ">=")]
        if n == 2:
            cdf = limits.cbe_two_point_gap_cdf(beta)
            ecdf = stats.Ecdf.from_samples(scal["gaps"].ravel())
            ks = stats.ks_distance_to_cdf(ecdf, cdf)
            summary["gap_ks_vs_oracle"] = ks
            checks.append(_check("cbe2_gap_ks", ks, max(0.01, 2.0 / math.sqrt(n_samples)), "<="))
        stats_doc["summary"] = summary
        stats_doc["checks"] = checks

    elif kind == "constants":
        consts = spectral_constants(effective_model(cfg), float(cfg.experiment["E"]))
        with open(os.path.join(out_dir, "constants.json"), "w") as fh:
            fh.write(consts.to_json(indent=2))
        artifacts.append("constants.json")
        stats_doc["summary"] = consts.to_json_dict()
        stats_doc["checks"] = [
            _check("C_equals_8E_gamma",
                   abs(consts.C_E - 8 * consts.energy * consts.gamma_E) / consts.C_E, 1e-12, "<="),
            _check("beta_gamma_identity", abs(consts.beta_E * consts.gamma_E - 1.0), 1e-12, "<="),
        ]

    else:  # pragma: no cover - config validation rejects unknown kinds
        raise PrueferLabError(f"unhandled kind {kind}")

    with open(os.path.join(out_dir, "stats.json"), "w") as fh:
        json.dump(stats_doc, fh, indent=2)
    artifacts.append("stats.json")
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(sidecar, fh, indent=2)
    artifacts.append("meta.json")

    n_rep = int(cfg.run["replicas"])
    off = int(cfg.run.get("replica_offset", 0))
    manifest = {
        "version": __version__,
        "kind": kind,
        "config": cfg.raw,
        "artifacts": artifacts,
        "replica_seeds": [
            str(s)
            for s in replica_seeds(cfg.run["master_seed"], range(off, off + min(n_rep, 10000)))
        ],
        "failures": [{"replica": i, "error": msg} for i, msg in failures],
        "failed_count": len(failures),
        "wall_time_s": time.time() - t_start,
        "output_dir": out_dir,
    }
    if kind in ("spectrum", "critical", "gaussian"):
        manifest["derived"] = {"E0": resolve_E0(cfg), "L": resolve_L(cfg, resolve_E0(cfg))}
    man_path = os.path.join(out_dir, "manifest.json")
    with open(man_path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    manifest["path"] = man_path
    return manifest


def checks_passed(manifest) -> bool:
    with open(os.path.join(manifest["output_dir"], "stats.json")) as fh:
        doc = json.load(fh)
    return all(c["pass"] for c in doc.get("checks", []))
