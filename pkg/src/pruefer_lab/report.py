"""Consolidated reports: merge manifests, recompute pooled statistics, render figures.

Shards of one experiment (identical config apart from the run block, same
master seed) are pooled exactly: statistics are recomputed from the pooled
CSV rows, so two shards merge to the same numbers a single larger run gives.
Sections with different configs are reported side by side.  Figures are
rendered to PNG files next to the delimited output.
"""

from __future__ import annotations

import json
import math
import os
from collections import defaultdict

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from scipy.stats import chi2 as _chi2  # noqa: E402

from . import limits, stats  # noqa: E402
from .config import validate_config  # noqa: E402
from .errors import SchemaMismatch  # noqa: E402
from .model import spectral_constants  # noqa: E402
from .runner import __version__, _check, effective_model, fmt, resolve_E0, resolve_L, write_csv  # noqa: E402

_PI = math.pi


def _load_manifest(path):
    with open(path) as fh:
        man = json.load(fh)
    man["_dir"] = os.path.dirname(os.path.abspath(path))
    return man


def _config_key(man):
    cfgd = dict(man["config"])
    run = dict(cfgd.get("run", {}))
    seed = run.get("master_seed", 1)
    for k in ("replicas", "replica_offset", "workers", "output_dir"):
        run.pop(k, None)
    cfgd["run"] = run
    return json.dumps({"kind": man["kind"], "cfg": cfgd, "seed": seed}, sort_keys=True)


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header, rows


def _csv_columns(man, name, cols, types):
    header, rows = _read_csv(os.path.join(man["_dir"], name))
    idx = [header.index(c) for c in cols]
    out = [[] for _ in cols]
    for row in rows:
        for j, (i, t) in enumerate(zip(idx, types)):
            out[j].append(t(row[i]))
    return [np.asarray(col) for col in out]


def _pool_spectrum(mans, cfg):
    reps, ns, xs = [], [], []
    for man in mans:
        r, n, x = _csv_columns(man, "sample.csv", ["replica", "n", "x_n"], [int, int, float])
        reps.append(r)
        ns.append(n)
        xs.append(x)
    reps = np.concatenate(reps)
    xs = np.concatenate(xs)
    by_rep = defaultdict(list)
    for r, x in zip(reps, xs):
        by_rep[int(r)].append(float(x))
    gap_pool = []
    center_dev = []
    max_dev = 0.0
    for r, atoms in sorted(by_rep.items()):
        a = np.sort(np.asarray(atoms))
        if a.size < 2:
            continue
        g = np.diff(a)
        gap_pool.extend(g.tolist())
        max_dev = max(max_dev, float(np.abs(g - _PI).max()))
        c = int(np.argmin(np.abs(a)))
        if c < a.size - 1:
            center_dev.append(abs(float(a[c + 1] - a[c]) - _PI))
    summary = {
        "replicas": len(by_rep),
        "g_center_mean_abs_dev": float(np.mean(center_dev)) if center_dev else None,
        "gap_mean": float(np.mean(gap_pool)) if gap_pool else None,
        "max_abs_gap_dev": max_dev,
        "alpha": cfg.decay.alpha,
        "E0": resolve_E0(cfg),
        "L": resolve_L(cfg, resolve_E0(cfg)),
    }
    checks = []
    if cfg.decay.amplitude == 0.0:
        checks.append(_check("free_gaps_equal_pi", max_dev, 1e-9, "<="))
    gap_pool = np.asarray(gap_pool)
    ecdf = None
    if gap_pool.size:
        if cfg.experiment.get("offsets") is None:
            # windowed sample: undo the length-biased truncation of the window
            wlen = 2.0 * float(cfg.numerics["window"])
            ecdf = stats.Ecdf.from_samples(gap_pool, weights=1.0 / (wlen - gap_pool))
        else:
            ecdf = stats.Ecdf.from_samples(gap_pool)
    return summary, checks, ecdf


def _pool_gaussian_cov(mans, cfg, summary, checks):
    """Pooled X_j(n) covariance vs quadrature (exact shard merge for gaussian)."""
    n_values = cfg.experiment.get("n_values", [0, 1])
    cols = [f"X_{n}" for n in n_values]
    parts = [np.column_stack(_csv_columns(m, "xjn.csv", cols, [float] * len(cols)))
             for m in mans]
    X = np.vstack(parts)
    consts = spectral_constants(effective_model(cfg), resolve_E0(cfg))
    cov, se = stats.covariance_estimate(X)
    for i, n_i in enumerate(n_values):
        for j, n_j in enumerate(n_values):
            if j < i:
                continue
            target = limits.gaussian_covariance(consts, cfg.decay.alpha, n_i, n_j)
            z = abs(cov[i, j] - target) / se[i, j] if se[i, j] > 0 else math.inf
            checks.append(_check(f"cov_X{n_i}_X{n_j}_z", z, 3.0, "<="))
            summary[f"cov_{n_i}_{n_j}"] = float(cov[i, j])
            summary[f"cov_{n_i}_{n_j}_target"] = target


def _pool_uniformity(mans, cfg):
    phases = np.concatenate(
        [_csv_columns(m, "phases.csv", ["phase_2theta"], [float])[0] for m in mans]
    )
    chi2_stat, moduli = stats.uniformity_test(phases)
    checks = [
        _check("uniformity_chi2", chi2_stat, float(_chi2.ppf(0.999, 15)), "<="),
        _check("uniformity_max_modulus", max(moduli.values()), 3.0 / math.sqrt(phases.size), "<="),
    ]
    summary = {"replicas": int(phases.size), "chi2": chi2_stat,
               "moduli": {str(k): v for k, v in moduli.items()}}
    return summary, checks, phases


def _pool_char(mans, cfg):
    tt0 = np.concatenate(
        [_csv_columns(m, "char.csv", ["theta_tilde_t0"], [float])[0] for m in mans])
    tt1 = np.concatenate(
        [_csv_columns(m, "char.csv", ["theta_tilde_t"], [float])[0] for m in mans])
    consts = spectral_constants(effective_model(cfg), float(cfg.experiment["E0"]))
    m_order = int(cfg.experiment.get("m", 1))
    rec = stats.char_decay_test(tt0, tt1, m_order,
                                consts, float(cfg.experiment.get("t0_factor", 1.0)),
                                float(cfg.experiment.get("t_factor", 4.0)))
    summary = {
        "replicas": int(tt0.size),
        "empirical": [rec.empirical.real, rec.empirical.imag],
        "theoretical": [rec.theoretical.real, rec.theoretical.imag],
        "stderr": rec.stderr,
    }
    return summary, [_check("char_decay_dev_in_se", rec.within, 3.0, "<=")], None


def _pool_cbe(mans, cfg):
    gaps = np.concatenate(
        [_csv_columns(m, "cbe_gaps.csv", ["half_scaled_gap"], [float])[0] for m in mans])
    raw_gaps = gaps * 2.0 / int(cfg.experiment["n"])
    summary = {"kept_samples_gaps": int(gaps.size),
               "mean_half_scaled_gap": float(gaps.mean())}
    checks = []
    if int(cfg.experiment["n"]) == 2:
        cdf = limits.cbe_two_point_gap_cdf(float(cfg.experiment["beta"]))
        ks = stats.ks_distance_to_cdf(stats.Ecdf.from_samples(raw_gaps), cdf)
        summary["gap_ks_vs_oracle"] = ks
        checks.append(_check("cbe2_gap_ks", ks, max(0.01, 2.0 / math.sqrt(gaps.size / 2)), "<="))
    return summary, checks, gaps


def report(manifest_paths, out_dir, pool=False):
    """Merge manifests into one pass/fail report plus plot-ready CSVs and figures."""
    mans = [_load_manifest(p) for p in manifest_paths]
    if not mans:
        raise SchemaMismatch("no manifests given")
    versions = {m.get("version") for m in mans}
    if len(versions) != 1:
        raise SchemaMismatch(f"mixed manifest versions: {sorted(versions)}")
    if versions != {__version__}:
        raise SchemaMismatch(f"manifest version {versions} != tool version {__version__}")
    os.makedirs(out_dir, exist_ok=True)

    groups = defaultdict(list)
    for m in mans:
        groups[_config_key(m)].append(m)
    if pool and len(groups) > 1 and len({m["kind"] for m in mans}) == 1:
        raise SchemaMismatch("asked to pool shards but configs conflict")

    sections = []
    gap_curves = []   # (label, gaps) for the ECDF overlay
    clock_points = []  # (L, g) for the decay figure
    phases_all = None
    for key, group in sorted(groups.items()):
        cfg = validate_config(group[0]["config"])
        kind = cfg.kind
        failed = sum(m.get("failed_count", 0) for m in group)
        if kind in ("spectrum", "critical", "gaussian"):
            summary, checks, ecdf = _pool_spectrum(group, cfg)
            if kind == "gaussian":
                _pool_gaussian_cov(group, cfg, summary, checks)
            label = f"{kind} L={summary['L']:.6g} alpha={summary['alpha']}"
            if ecdf is not None:
                gap_curves.append((label, ecdf))
                clock_points.append((summary["L"], summary["g_center_mean_abs_dev"]))
        elif kind == "uniformity":
            summary, checks, phases_all = _pool_uniformity(group, cfg)
        elif kind == "char_decay":
            summary, checks, _ = _pool_char(group, cfg)
        elif kind == "cbe":
            summary, checks, gaps = _pool_cbe(group, cfg)
            if gaps is not None and gaps.size:
                gap_curves.append((f"cbe n={cfg.experiment['n']} beta={cfg.experiment['beta']}",
                                   stats.Ecdf.from_samples(gaps)))
        else:
            # passthrough kinds: reuse the per-run stats document
            with open(os.path.join(group[0]["_dir"], "stats.json")) as fh:
                doc = json.load(fh)
            summary, checks = doc.get("summary", {}), doc.get("checks", [])
        sections.append({
            "kind": kind,
            "manifests": [m["_dir"] for m in group],
            "failed_replicas": failed,
            "summary": summary,
            "checks": checks,
        })

    # cross-section comparison: critical spectrum vs half-scaled cbe gaps
    crit = [(lbl, e) for lbl, e in gap_curves if lbl.startswith("critical")]
    cbe = [(lbl, e) for lbl, e in gap_curves if lbl.startswith("cbe")]
    cross = []
    for clbl, ce in crit:
        for blbl, be in cbe:
            ks = stats.ks_distance(ce, be)
            cross.append({
                "name": f"gap_ks[{clbl} | {blbl}]",
                "statistic": ks, "threshold": 0.08, "op": "<=", "pass": bool(ks <= 0.08),
            })
    if cross:
        sections.append({"kind": "comparison", "manifests": [], "failed_replicas": 0,
                         "summary": {}, "checks": cross})

    figures = _render_figures(out_dir, gap_curves, clock_points, phases_all)
    ecdf_rows = []
    for lbl, e in gap_curves:
        ecdf_rows += [(lbl, float(v), float(f)) for v, f in zip(e.values, e.fractions)]
    if ecdf_rows:
        write_csv(os.path.join(out_dir, "gap_ecdfs.csv"), ["series", "gap", "F"], ecdf_rows)

    all_checks = [c for s in sections for c in s["checks"]]
    doc = {
        "version": __version__,
        "sections": sections,
        "figures": figures,
        "pass": all(c["pass"] for c in all_checks),
        "n_checks": len(all_checks),
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
    _write_table(os.path.join(out_dir, "report.txt"), sections)
    return doc


def _write_table(path, sections):
    lines = []
    for s in sections:
        lines.append(f"[{s['kind']}] failed_replicas={s['failed_replicas']}")
        for c in s["checks"]:
            status = "PASS" if c["pass"] else "FAIL"
            lines.append(
                f"  {status}  {c['name']}: {fmt(c['statistic'])} {c['op']} {fmt(c['threshold'])}"
            )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _render_figures(out_dir, gap_curves, clock_points, phases):
    made = []
    if gap_curves:
        fig, ax = plt.subplots(figsize=(6, 4))
        for lbl, e in gap_curves:
            ax.step(e.values, e.fractions, where="post", label=lbl)
        ax.set_xlabel("gap")
        ax.set_ylabel("ECDF")
        ax.legend(fontsize=7)
        fig.tight_layout()
        p = os.path.join(out_dir, "gap_ecdfs.png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        made.append("gap_ecdfs.png")
    pts = [(L, g) for L, g in clock_points if g is not None]
    if len(pts) >= 2:
        pts.sort()
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.loglog([p[0] for p in pts], [p[1] for p in pts], "o-")
        ax.set_xlabel("L")
        ax.set_ylabel("mean |center gap - pi|")
        fig.tight_layout()
        p = os.path.join(out_dir, "clock_decay.png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        made.append("clock_decay.png")
    if phases is not None and phases.size:
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.hist(phases, bins=16, range=(0, 2 * _PI), density=True)
        ax.axhline(1.0 / (2 * _PI), color="k", lw=1)
        ax.set_xlabel("2*theta mod 2pi")
        ax.set_ylabel("density")
        fig.tight_layout()
        p = os.path.join(out_dir, "uniformity_hist.png")
        fig.savefig(p, dpi=120)
        plt.close(fig)
        made.append("uniformity_hist.png")
    return made
