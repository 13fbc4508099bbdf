"""Experiment configuration: TOML parsing and exhaustive validation.

Configs are TOML with blocks [model], [decay], [numerics], [run],
[experiment] and a top-level `kind`.  Validation collects *every* violation
(with a dotted field path) instead of stopping at the first.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigParseError, ConfigValidationError
from .model import DecayProfile, PotentialModel

KINDS = (
    "spectrum",
    "clock",
    "gaussian",
    "critical",
    "psi_sde",
    "cbe",
    "constants",
    "uniformity",
    "char_decay",
)

_PI = math.pi

NUMERICS_DEFAULTS = {
    "h": 0.0,            # 0 -> min(1e-3, 0.05/kappa)
    "theta_tol": 1e-9,
    "window": 6.0 * _PI,
    "t0": 1e-3,
    "sde_steps": 4000,
    "stride": 0,
    "margin": 0.0,       # 0 -> per-alpha default bracket margin
}

RUN_DEFAULTS = {
    "master_seed": 1,
    "replicas": 1,
    "replica_offset": 0,  # shard support: replica index base
    "workers": 0,         # 0 -> PRUEFER_LAB_WORKERS env or 1
    "output_dir": "runs/out",
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: PotentialModel
    decay: DecayProfile
    numerics: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _check_num(errors, block, key, value, pred, msg, required=False):
    if value is None:
        if required:
            errors.append(f"{block}.{key}: required")
        return
    if not _is_num(value):
        errors.append(f"{block}.{key}: must be a number")
        return
    if not pred(value):
        errors.append(f"{block}.{key}: {msg}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a config document; raise with every violation listed."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"at line (\d+), column (\d+)", str(exc))
        line, col = (int(m.group(1)), int(m.group(2))) if m else (None, None)
        raise ConfigParseError(str(exc), line, col) from exc
    return validate_config(raw)


def validate_config(raw: dict) -> ExperimentConfig:
    errors = []
    kind = raw.get("kind")
    if kind is None:
        errors.append("kind: required")
    elif kind not in KINDS:
        errors.append(f"kind: unknown kind {kind!r}; expected one of {', '.join(KINDS)}")

    model_blk = raw.get("model", {})
    if not isinstance(model_blk, dict):
        errors.append("model: must be a table")
        model_blk = {}
    cos = model_blk.get("fourier_cos", [1.0])
    sin = model_blk.get("fourier_sin", [])
    sigma2 = model_blk.get("sigma2", 1.0)
    for name, coefs in (("fourier_cos", cos), ("fourier_sin", sin)):
        if not isinstance(coefs, list) or not all(_is_num(c) for c in coefs):
            errors.append(f"model.{name}: must be an array of numbers")
    _check_num(errors, "model", "sigma2", sigma2, lambda v: v > 0, "must be > 0")
    model = None
    if not errors or all(not e.startswith("model.") for e in errors):
        try:
            model = PotentialModel(tuple(cos), tuple(sin), float(sigma2))
        except (ValueError, TypeError) as exc:
            errors.append(f"model: {exc}")

    decay_blk = raw.get("decay", {})
    if not isinstance(decay_blk, dict):
        errors.append("decay: must be a table")
        decay_blk = {}
    alpha = decay_blk.get("alpha")
    amplitude = decay_blk.get("amplitude", 1.0)
    _check_num(errors, "decay", "alpha", alpha, lambda v: v > 0, "must be > 0", required=True)
    _check_num(errors, "decay", "amplitude", amplitude, lambda v: v >= 0, "must be >= 0")
    decay = None
    if alpha is not None and _is_num(alpha) and alpha > 0 and _is_num(amplitude) and amplitude >= 0:
        decay = DecayProfile(float(alpha), float(amplitude))

    numerics = dict(NUMERICS_DEFAULTS)
    blk = raw.get("numerics", {})
    if not isinstance(blk, dict):
        errors.append("numerics: must be a table")
        blk = {}
    for k, v in blk.items():
        if k not in NUMERICS_DEFAULTS:
            errors.append(f"numerics.{k}: unknown key")
        else:
            numerics[k] = v
    _check_num(errors, "numerics", "h", numerics["h"], lambda v: v >= 0, "must be >= 0")
    _check_num(errors, "numerics", "theta_tol", numerics["theta_tol"], lambda v: v > 0, "must be > 0")
    _check_num(errors, "numerics", "window", numerics["window"], lambda v: v > 0, "must be > 0")
    _check_num(errors, "numerics", "t0", numerics["t0"], lambda v: 0 < v <= 0.1,
               "must lie in (0, 0.1]")
    _check_num(errors, "numerics", "sde_steps", numerics["sde_steps"], lambda v: v >= 10,
               "must be >= 10")
    _check_num(errors, "numerics", "stride", numerics["stride"], lambda v: v >= 0, "must be >= 0")
    _check_num(errors, "numerics", "margin", numerics["margin"], lambda v: v >= 0, "must be >= 0")

    run = dict(RUN_DEFAULTS)
    blk = raw.get("run", {})
    if not isinstance(blk, dict):
        errors.append("run: must be a table")
        blk = {}
    for k, v in blk.items():
        if k not in RUN_DEFAULTS:
            errors.append(f"run.{k}: unknown key")
        else:
            run[k] = v
    if not isinstance(run["master_seed"], int) or isinstance(run["master_seed"], bool):
        errors.append("run.master_seed: must be an integer")
    if not isinstance(run["replicas"], int) or isinstance(run["replicas"], bool) or run["replicas"] < 1:
        errors.append("run.replicas: must be an integer >= 1")
    if not isinstance(run["replica_offset"], int) or isinstance(run["replica_offset"], bool) or run["replica_offset"] < 0:
        errors.append("run.replica_offset: must be an integer >= 0")
    if not isinstance(run["workers"], int) or isinstance(run["workers"], bool) or run["workers"] < 0:
        errors.append("run.workers: must be an integer >= 0")
    if not isinstance(run["output_dir"], str) or not run["output_dir"]:
        errors.append("run.output_dir: must be a non-empty string")

    exp = raw.get("experiment", {})
    if not isinstance(exp, dict):
        errors.append("experiment: must be a table")
        exp = {}
    if kind in KINDS:
        _validate_experiment(errors, kind, exp, decay)

    for key in raw:
        if key not in ("kind", "model", "decay", "numerics", "run", "experiment"):
            errors.append(f"{key}: unknown top-level key")

    if errors:
        raise ConfigValidationError(errors)
    return ExperimentConfig(kind, model, decay, numerics, run, exp, raw)


def _validate_experiment(errors, kind, exp, decay):
    def need(key, pred, msg):
        _check_num(errors, "experiment", key, exp.get(key), pred, msg, required=True)

    def opt(key, pred, msg):
        _check_num(errors, "experiment", key, exp.get(key), pred, msg, required=False)

    alpha = decay.alpha if decay is not None else None
    if kind in ("spectrum", "gaussian", "critical"):
        opt("E0", lambda v: v > 0, "must be > 0")
        opt("beta_target", lambda v: v > 0, "must be > 0")
        if exp.get("E0") is None and exp.get("beta_target") is None:
            errors.append("experiment.E0: required (or provide experiment.beta_target)")
        if exp.get("L") is None and exp.get("m_lock") is None:
            errors.append("experiment.L: required (or provide experiment.m_lock)")
        opt("L", lambda v: v > 0, "must be > 0")
        if exp.get("m_lock") is not None and (not isinstance(exp["m_lock"], int) or exp["m_lock"] < 1):
            errors.append("experiment.m_lock: must be an integer >= 1")
        opt("beta_offset", lambda v: 0 <= v < _PI, "must lie in [0, pi)")
        offs = exp.get("offsets")
        if offs is not None:
            if (not isinstance(offs, list) or not all(isinstance(i, int) for i in offs)
                    or any(b - a != 1 for a, b in zip(offs, offs[1:])) or len(offs) == 0):
                errors.append("experiment.offsets: must be consecutive integers")
    if kind == "gaussian":
        if alpha is not None and not 0.5 < alpha < 1.0:
            errors.append("decay.alpha: gaussian regime needs 1/2 < alpha < 1")
        nv = exp.get("n_values", [0, 1])
        if not isinstance(nv, list) or not all(isinstance(i, int) for i in nv):
            errors.append("experiment.n_values: must be an array of integers")
    if kind == "clock":
        need("E0", lambda v: v > 0, "must be > 0")
        need("T", lambda v: v > 0, "must be > 0")
        opt("beta_offset", lambda v: 0 <= v < _PI, "must lie in [0, pi)")
        if alpha is not None and alpha <= 0.5:
            errors.append("decay.alpha: clock regime needs alpha > 1/2")
    if kind == "psi_sde":
        cs = exp.get("cs")
        if cs is None:
            errors.append("experiment.cs: required")
        elif not isinstance(cs, list) or not all(_is_num(c) for c in cs) or len(cs) == 0:
            errors.append("experiment.cs: must be a non-empty array of numbers")
        elif any(b <= a for a, b in zip(cs, cs[1:])):
            errors.append("experiment.cs: must be strictly increasing")
        opt("E0", lambda v: v > 0, "must be > 0")
        opt("D", lambda v: v >= 0, "must be >= 0")
        opt("beta_target", lambda v: v > 0, "must be > 0")
        if exp.get("E0") is None and exp.get("D") is None and exp.get("beta_target") is None:
            errors.append("experiment.E0: required (or provide experiment.D or beta_target)")
    if kind == "cbe":
        n = exp.get("n")
        if not isinstance(n, int) or n < 2:
            errors.append("experiment.n: must be an integer >= 2")
        need("beta", lambda v: v > 0, "must be > 0")
        samples = exp.get("samples", 1000)
        if not isinstance(samples, int) or samples < 1:
            errors.append("experiment.samples: must be an integer >= 1")
        opt("proposal_width", lambda v: v > 0, "must be > 0")
    if kind == "constants":
        need("E", lambda v: v > 0, "must be > 0")
    if kind == "uniformity":
        need("E0", lambda v: v > 0, "must be > 0")
        need("T", lambda v: v > 0, "must be > 0")
    if kind == "char_decay":
        need("E0", lambda v: v > 0, "must be > 0")
        m = exp.get("m", 1)
        if not isinstance(m, int) or m == 0:
            errors.append("experiment.m: must be a nonzero integer")
        need("scale", lambda v: v > 0, "must be > 0")
        opt("t0_factor", lambda v: v > 0, "must be > 0")
        opt("t_factor", lambda v: v > 0, "must be > 0")
        tf = exp.get("t_factor", 4.0)
        t0f = exp.get("t0_factor", 1.0)
        if _is_num(tf) and _is_num(t0f) and tf <= t0f:
            errors.append("experiment.t_factor: must exceed t0_factor")
