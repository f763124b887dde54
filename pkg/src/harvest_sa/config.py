"""Experiment configuration: a flat ``key = value`` file split into sections.

Recognised sections and keys are listed in ``KEYS``; unknown sections or
keys are errors. ``#`` and ``;`` start comments. Lists are comma separated.

Example::

    [model]
    kappa = 0.6
    phi_degrees = -10

    [uq]
    case = classical
    seed = 42
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError
from .integrator import IntegratorSettings
from .model import HarvesterParams, State3
from .pce import DegreePolicy
from .uq import CASES, InputEntry, RandomInputSpec, build_input_space

_float = float


def _int(text):
    val = float(text)
    if not val.is_integer():
        raise ValueError(f"{text!r} is not an integer")
    return int(val)


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _case(text):
    if text not in CASES:
        raise ValueError(f"expected one of {', '.join(CASES)}")
    return text


def _method(text):
    if text not in ("dopri5", "rk4"):
        raise ValueError("expected dopri5 or rk4")
    return text


KEYS = {
    "model": {"xi": _float, "chi": _float, "lam": _float, "lambda": _float, "kappa": _float,
              "f": _float, "Omega": _float, "omega": _float, "beta": _float, "delta": _float,
              "phi_degrees": _float, "p": _float, "x0": _float, "xdot0": _float, "v0": _float},
    "integrator": {"rel_tol": _float, "abs_tol": _float, "t0": _float, "t1": _float,
                   "n_out": _int, "max_steps": _int, "method": _method, "h0": _float,
                   "dt": _float},
    "uq": {"case": _case, "cv": _float, "seed": _int, "mc_n": _int, "propagate_n": _int,
           "percentiles": _floats, "window_fraction": _float, "fixed": str},
    "pce": {"pce_n": _int, "degree": _int, "degree_min": _int, "degree_max": _int,
            "max_order": _int},
    "sweep": {"f_start": _float, "f_end": _float, "f_steps": _int, "f_values": _floats,
              "beta_values": _floats, "beta_start": _float, "beta_end": _float,
              "beta_steps": _int, "n_strobe": _int, "discard_fraction": _float},
    "output": {"out_dir": str, "workers": _int},
}
# per-input bound overrides: bounds.<name> = lo, hi   (phi given in degrees)
BOUNDS_PREFIX = "bounds."


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    nominal: HarvesterParams = HarvesterParams()
    s0: State3 = State3(1.0, 0.0, 0.0)
    integrator: IntegratorSettings = IntegratorSettings()
    window_fraction: float = 0.5
    case: str = "classical"
    cv: float = 0.2
    bounds: tuple = ()  # (name, lo, hi) overrides, radians for phi
    fixed: tuple = ()
    mc_n: int = 2048
    pce_n: int = 1000
    propagate_n: int = 500
    degree_policy: DegreePolicy = DegreePolicy.adaptive(2, 6)
    max_order: int = 2
    f_grid: tuple = tuple(np.linspace(0.05, 0.2, 7).tolist())
    bif_range: tuple = (0.02, 0.2, 37)
    beta_axis: tuple = tuple(np.linspace(0.5, 3.0, 10).tolist())
    power_f_axis: tuple = tuple(np.linspace(0.05, 0.2, 10).tolist())
    n_strobe: int = 32
    discard_fraction: float = 0.5
    percentiles: tuple = (5.0, 50.0, 95.0)
    out_dir: str = "out"
    workers: int | None = None
    beta_given: bool = False

    def study_nominal(self) -> HarvesterParams:
        """Nominal point of the study case; nonlinear-coupling cases default to beta = 1."""
        if self.case in ("nl_coupling", "full") and not self.beta_given:
            return self.nominal.with_(beta=1.0)
        return self.nominal

    def input_space(self, nominal: HarvesterParams | None = None) -> RandomInputSpec:
        nominal = nominal or self.study_nominal()
        spec = build_input_space(self.case, nominal, self.cv)
        entries = {e.name: e for e in spec.entries}
        for name, lo, hi in self.bounds:
            entries[name] = InputEntry(name, lo, hi)
        frozen = dict(spec.frozen)
        for name in self.fixed:
            entries.pop(name, None)
            frozen[name] = getattr(nominal, name)
        return RandomInputSpec(tuple(entries.values()), frozen)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("out_dir")
        d.pop("workers")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()


def _read(path):
    sections = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].split(";", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                if current not in KEYS:
                    raise ConfigError(f"unknown section [{current}]", line=lineno)
                continue
            if "=" not in line:
                raise ConfigError(f"expected 'key = value', got {line!r}", line=lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            if current is None:
                raise ConfigError("key outside of any section", key=key, line=lineno)
            if key.startswith(BOUNDS_PREFIX) and current == "uq":
                conv = _floats
            elif key in KEYS[current]:
                conv = KEYS[current][key]
            else:
                raise ConfigError(f"unknown key in [{current}]", key=key, line=lineno)
            try:
                parsed = conv(value)
            except ValueError as exc:
                raise ConfigError(f"cannot parse {value!r}: {exc}", key=key, line=lineno) from None
            if isinstance(parsed, float) and not math.isfinite(parsed):
                raise ConfigError("value must be finite", key=key, line=lineno)
            sections.setdefault(current, {})[key] = (parsed, lineno)
    return sections


def parse_config(path=None, seed: int | None = None, **overrides) -> ExperimentConfig:
    """Read, validate and default a config file; ``seed`` and ``overrides`` win over the file."""
    sec = _read(path) if path is not None else {}

    def get(section, key, default=None):
        return sec.get(section, {}).get(key, (default, None))

    def line_of(section, key):
        return sec.get(section, {}).get(key, (None, None))[1]

    model = {k: v for k, (v, _) in sec.get("model", {}).items()}
    if "lambda" in model:
        model["lam"] = model.pop("lambda")
    if "omega" in model:
        model["Omega"] = model.pop("omega")
    s0 = State3(model.pop("x0", 1.0), model.pop("xdot0", 0.0), model.pop("v0", 0.0))
    beta_given = "beta" in model
    phi_deg = model.pop("phi_degrees", 0.0)
    try:
        nominal = HarvesterParams(phi=math.radians(phi_deg), **model)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None

    integ = {k: v for k, (v, _) in sec.get("integrator", {}).items()}
    try:
        settings = IntegratorSettings(**integ)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None

    file_seed, _ = get("uq", "seed")
    seed = seed if seed is not None else file_seed
    if seed is None:
        raise ConfigError("a seed is mandatory: set 'seed' in [uq] or pass --seed", key="seed")

    kwargs = dict(seed=int(seed), nominal=nominal, s0=s0, integrator=settings, beta_given=beta_given)
    for key in ("case", "cv", "mc_n", "propagate_n", "window_fraction"):
        val, _ = get("uq", key)
        if val is not None:
            kwargs[key] = val
    pct, ln = get("uq", "percentiles")
    if pct is not None:
        if not pct or any(not 0 < p < 100 for p in pct) or pct != sorted(pct):
            raise ConfigError("percentiles must be sorted and inside (0, 100)", "percentiles", ln)
        kwargs["percentiles"] = tuple(pct)
    fixed, _ = get("uq", "fixed")
    if fixed:
        kwargs["fixed"] = tuple(n.strip() for n in fixed.split(",") if n.strip())
    bounds = []
    for key, (val, ln) in sec.get("uq", {}).items():
        if key.startswith(BOUNDS_PREFIX):
            name = key[len(BOUNDS_PREFIX):]
            if len(val) != 2 or not val[0] <= val[1]:
                raise ConfigError("bounds need 'lo, hi' with lo <= hi", key, ln)
            if name == "phi_degrees":
                name, val = "phi", [math.radians(v) for v in val]
            if name not in HarvesterParams.__dataclass_fields__:
                raise ConfigError(f"unknown parameter {name!r}", key, ln)
            bounds.append((name, float(val[0]), float(val[1])))
    kwargs["bounds"] = tuple(bounds)

    for key in ("pce_n", "max_order"):
        val, _ = get("pce", key)
        if val is not None:
            kwargs[key] = val
    deg, ln = get("pce", "degree")
    try:
        if deg is not None:
            kwargs["degree_policy"] = DegreePolicy.fixed(deg)
        else:
            lo, _ = get("pce", "degree_min", 2)
            hi, _ = get("pce", "degree_max", 6)
            kwargs["degree_policy"] = DegreePolicy.adaptive(lo, hi)
    except ConfigError as exc:
        raise ConfigError(str(exc), "degree", ln or line_of("pce", "degree_min")) from None

    fv, ln = get("sweep", "f_values")
    f_start, _ = get("sweep", "f_start")
    f_end, _ = get("sweep", "f_end")
    f_steps, _ = get("sweep", "f_steps")
    if fv is not None:
        if not fv:
            raise ConfigError("f_values must be non-empty", "f_values", ln)
        kwargs["f_grid"] = tuple(fv)
    elif f_start is not None or f_end is not None or f_steps is not None:
        lo = 0.02 if f_start is None else f_start
        hi = 0.2 if f_end is None else f_end
        n = 37 if f_steps is None else f_steps
        if n < 2 or hi <= lo:
            raise ConfigError("need f_end > f_start and f_steps >= 2", "f_steps", line_of("sweep", "f_steps"))
        kwargs["f_grid"] = tuple(np.linspace(lo, hi, n).tolist())
        kwargs["bif_range"] = (lo, hi, n)
        kwargs["power_f_axis"] = kwargs["f_grid"]
    bv, ln = get("sweep", "beta_values")
    if bv is not None:
        if not bv or min(bv) < 0:
            raise ConfigError("beta_values must be non-empty and >= 0", "beta_values", ln)
        kwargs["beta_axis"] = tuple(bv)
    else:
        b0, _ = get("sweep", "beta_start")
        b1, _ = get("sweep", "beta_end")
        bn, _ = get("sweep", "beta_steps")
        if b0 is not None or b1 is not None or bn is not None:
            kwargs["beta_axis"] = tuple(np.linspace(0.5 if b0 is None else b0, 3.0 if b1 is None else b1,
                                                    10 if bn is None else bn).tolist())
    for key in ("n_strobe", "discard_fraction"):
        val, _ = get("sweep", key)
        if val is not None:
            kwargs[key] = val
    for key in ("out_dir", "workers"):
        val, _ = get("output", key)
        if val is not None:
            kwargs[key] = val

    cfg = ExperimentConfig(**kwargs)
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    _validate(cfg, sec)
    return cfg


def _validate(cfg: ExperimentConfig, sec):
    def fail(msg, section, key):
        raise ConfigError(msg, key, sec.get(section, {}).get(key, (None, None))[1])

    if not 0 < cfg.cv < 1:
        fail("cv must lie in (0, 1)", "uq", "cv")
    if not 0 < cfg.window_fraction <= 1:
        fail("window_fraction must lie in (0, 1]", "uq", "window_fraction")
    if not 0 <= cfg.discard_fraction < 1:
        fail("discard_fraction must lie in [0, 1)", "sweep", "discard_fraction")
    if cfg.mc_n < 64:
        fail("mc_n must be >= 64", "uq", "mc_n")
    if cfg.pce_n < 2 or cfg.propagate_n < 1:
        fail("sample sizes must be positive", "pce", "pce_n")
    if cfg.max_order < 1:
        fail("max_order must be >= 1", "pce", "max_order")
    if cfg.n_strobe < 1:
        fail("n_strobe must be >= 1", "sweep", "n_strobe")
    if cfg.workers is not None and cfg.workers < 1:
        fail("workers must be >= 1", "output", "workers")
    for name in cfg.fixed:
        if name not in HarvesterParams.__dataclass_fields__:
            fail(f"unknown parameter {name!r}", "uq", "fixed")
    try:
        cfg.input_space()
    except ConfigError as exc:
        raise ConfigError(str(exc), exc.key, exc.line) from None
