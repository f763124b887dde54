"""Uncertain inputs, sampling designs, Monte-Carlo Sobol indices and propagation bands."""
from __future__ import annotations

import hashlib
import json
import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .analysis import DEFAULT_WINDOW, simulate_power
from .errors import ConfigError, DegenerateOutputError, DomainError, HarvestError
from .integrator import IntegratorSettings
from .model import IDX, PARAM_NAMES, HarvesterParams, State3
from .parallel import parallel_map

CASES = ("classical", "nl_coupling", "asymmetric", "full")
CLASSICAL = ("xi", "chi", "lam", "kappa", "f", "Omega")
DELTA_RANGE = (-0.15, 0.15)
PHI_RANGE_DEG = (-15.0, 15.0)
DEGENERATE_VAR = 1e-14


@dataclass(frozen=True)
class InputEntry:
    name: str
    lower: float
    upper: float

    @property
    def mid(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def half_width(self):
        return 0.5 * (self.upper - self.lower)


@dataclass(frozen=True)
class RandomInputSpec:
    """Independent uniform inputs; everything else is pinned in ``frozen``.

    Zero-width intervals are accepted so a study can be collapsed to its
    deterministic nominal point.
    """

    entries: tuple
    frozen: dict = field(default_factory=dict)

    def __post_init__(self):
        entries = tuple(e if isinstance(e, InputEntry) else InputEntry(*e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        names = [e.name for e in entries]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate input names in {names}")
        for e in entries:
            if not (math.isfinite(e.lower) and math.isfinite(e.upper)) or e.lower > e.upper:
                raise ConfigError(f"invalid bounds [{e.lower}, {e.upper}]", key=e.name)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    @property
    def k(self) -> int:
        return len(self.entries)

    @property
    def lower(self) -> np.ndarray:
        return np.array([e.lower for e in self.entries])

    @property
    def upper(self) -> np.ndarray:
        return np.array([e.upper for e in self.entries])

    def to_values(self, u) -> np.ndarray:
        """Map cube points ``u`` (n, k) in [-1, 1]^k onto the physical intervals."""
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-1] != self.k:
            raise DomainError(f"expected {self.k} coordinates, got {u.shape[-1]}")
        if np.any(np.abs(u) > 1.0):
            raise DomainError("cube coordinates must lie in [-1, 1]")
        lo, hi = self.lower, self.upper
        x = 0.5 * (lo + hi) + u * 0.5 * (hi - lo)
        # pin the cube faces to the bounds themselves
        return np.where(u == 1.0, hi, np.where(u == -1.0, lo, x))

    def to_cube(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        lo, hi = self.lower, self.upper
        half = 0.5 * (hi - lo)
        safe = np.where(half > 0, half, 1.0)
        return np.where(half > 0, (x - 0.5 * (lo + hi)) / safe, 0.0)

    def replace_entry(self, name: str, lower: float, upper: float) -> "RandomInputSpec":
        return RandomInputSpec(
            tuple(InputEntry(name, lower, upper) if e.name == name else e for e in self.entries),
            dict(self.frozen))

    def digest(self) -> str:
        payload = {"entries": [[e.name, repr(e.lower), repr(e.upper)] for e in self.entries],
                   "frozen": {k: repr(v) for k, v in sorted(self.frozen.items())}}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def build_input_space(case: str, nominal: HarvesterParams, cv: float = 0.2) -> RandomInputSpec:
    """Uniform +/- cv intervals around the nominals, plus absolute ranges for delta and phi."""
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}; expected one of {CASES}", key="case")
    if not 0 < cv < 1:
        raise ConfigError(f"cv must lie in (0, 1), got {cv}", key="cv")
    names = list(CLASSICAL)
    if case in ("nl_coupling", "full"):
        names.append("beta")
    entries = []
    for name in names:
        nom = getattr(nominal, name)
        if nom == 0:
            raise ConfigError(f"nominal {name} is zero; a relative interval is empty, "
                              "give absolute bounds instead", key=name)
        entries.append(InputEntry(name, nom * (1 - cv), nom * (1 + cv)))
    if case in ("asymmetric", "full"):
        entries.append(InputEntry("delta", *DELTA_RANGE))
        entries.append(InputEntry("phi", *(math.radians(d) for d in PHI_RANGE_DEG)))
    active = {e.name for e in entries}
    frozen = {n: getattr(nominal, n) for n in PARAM_NAMES if n not in active}
    return RandomInputSpec(tuple(entries), frozen)


def to_physical(u, spec: RandomInputSpec, nominal: HarvesterParams | None = None) -> HarvesterParams:
    """One cube point to model parameters; ``spec.frozen`` pins the non-random fields."""
    values = spec.to_values(np.asarray(u, dtype=np.float64).reshape(spec.k))
    base = nominal.as_dict() if nominal is not None else {}
    base.update(spec.frozen)
    base.update({n: float(v) for n, v in zip(spec.names, values)})
    return HarvesterParams(**base)


@dataclass(frozen=True)
class SampleMatrix:
    values: np.ndarray  # (n, k), in [-1, 1]
    seed: int

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def k(self):
        return self.values.shape[1]


def _stream(seed: int, *key) -> np.random.Generator:
    """Independent generator for a (seed, label...) pair."""
    words = [zlib.crc32(str(part).encode()) for part in key]
    return np.random.default_rng(np.random.SeedSequence([int(seed), *words]))


def lhs_sample(n: int, k: int, seed: int) -> SampleMatrix:
    """Latin hypercube on [-1, 1]^k: one jittered point per stratum and column."""
    if n < 1 or k < 1:
        raise DomainError("n and k must be >= 1")
    rng = np.random.default_rng(seed)
    out = np.empty((n, k))
    for j in range(k):
        strata = rng.permutation(n)
        out[:, j] = 2.0 * (strata + rng.random(n)) / n - 1.0
    return SampleMatrix(np.clip(out, -1.0, 1.0), int(seed))


def mc_sample(n: int, names, seed: int, tag: str = "A") -> SampleMatrix:
    """Plain Monte-Carlo cube sample; each column has its own stream keyed by name."""
    cols = [_stream(seed, tag, name).uniform(-1.0, 1.0, n) for name in names]
    return SampleMatrix(np.column_stack(cols) if cols else np.empty((n, 0)), int(seed))


@dataclass
class SensitivityReport:
    method: str
    indices: dict  # tuple of names -> index
    metadata: dict = field(default_factory=dict)

    def order(self, n: int) -> dict:
        return {key: v for key, v in self.indices.items() if len(key) == n}

    @property
    def first_order(self) -> dict:
        return {key[0]: v for key, v in self.order(1).items()}

    @property
    def second_order(self) -> dict:
        return self.order(2)

    @property
    def total_explained(self) -> float:
        return float(sum(self.indices.values()))

    def ranking(self) -> list[str]:
        fo = self.first_order
        return sorted(fo, key=lambda n: -fo[n])

    def rows(self):
        """(order, param_1, param_2, index) rows for CSV emission."""
        for key, val in self.indices.items():
            yield len(key), key[0], key[1] if len(key) > 1 else "", val


def mc_first_order(qoi_eval, spec: RandomInputSpec, N: int, seed: int) -> SensitivityReport:
    """First-order Sobol indices by pick-and-freeze (Saltelli 2010 estimator).

    ``qoi_eval`` maps an ``(n, k)`` array of physical input values (columns in
    ``spec.names`` order) to ``n`` outputs.
    """
    if N < 64:
        raise DomainError(f"N must be >= 64, got {N}")
    k = spec.k
    A = mc_sample(N, spec.names, seed, "A").values
    B = mc_sample(N, spec.names, seed, "B").values
    blocks = [A, B]
    for i in range(k):
        ABi = A.copy()
        ABi[:, i] = B[:, i]
        blocks.append(ABi)
    y = np.asarray(qoi_eval(spec.to_values(np.vstack(blocks))), dtype=np.float64)
    yA, yB = y[:N], y[N:2 * N]
    var = float(np.var(np.concatenate([yA, yB])))
    if not var > DEGENERATE_VAR:
        raise DegenerateOutputError(f"output variance {var:.3e} too small")
    # centring leaves the estimator unbiased and removes the mean^2 noise term
    shift = float(np.mean(np.concatenate([yA, yB])))
    yBc = yB - shift
    indices = {}
    for i, name in enumerate(spec.names):
        yABi = y[(2 + i) * N:(3 + i) * N]
        indices[(name,)] = float(np.mean(yBc * (yABi - yA)) / var)
    meta = {"N": N, "seed": seed, "evaluations": N * (k + 2), "variance": var}
    return SensitivityReport("mc", indices, meta)


def _power_task(task):
    prm_vec, y0, settings, window_fraction = task
    try:
        return simulate_power(prm_vec, y0, settings, window_fraction).power
    except HarvestError:
        return float("nan")


class HarvesterQoI:
    """Mean output power as a function of the uncertain inputs.

    Evaluations are memoised on (parameter vector, initial state, settings,
    window). Failed simulations return NaN unless ``strict``.
    """

    def __init__(self, spec: RandomInputSpec, nominal: HarvesterParams,
                 settings: IntegratorSettings | None = None, s0=State3(),
                 window_fraction: float = DEFAULT_WINDOW, workers: int | None = None,
                 strict: bool = True):
        self.names = spec.names
        base = nominal.as_dict()
        base.update(spec.frozen)
        self.base = HarvesterParams(**base).to_array()
        self.settings = settings or IntegratorSettings()
        self.y0 = s0.to_array() if isinstance(s0, State3) else np.asarray(s0, dtype=np.float64)
        self.window_fraction = window_fraction
        self.workers = workers
        self.strict = strict
        self.cache: dict = {}
        self.evaluations = 0

    def param_vectors(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        prm = np.tile(self.base, (x.shape[0], 1))
        for j, name in enumerate(self.names):
            prm[:, IDX[name]] = x[:, j]
        return prm

    def _key(self, vec):
        return (vec.tobytes(), self.y0.tobytes(), self.settings, self.window_fraction)

    def __call__(self, x) -> np.ndarray:
        prm = self.param_vectors(x)
        keys = [self._key(v) for v in prm]
        pending = {}
        for key, vec in zip(keys, prm):
            if key not in self.cache and key not in pending:
                pending[key] = vec
        tasks = [(vec, self.y0, self.settings, self.window_fraction) for vec in pending.values()]
        for key, val in zip(pending, parallel_map(_power_task, tasks, self.workers)):
            self.cache[key] = val
        self.evaluations += len(tasks)
        out = np.array([self.cache[key] for key in keys])
        if self.strict and not np.all(np.isfinite(out)):
            bad = int(np.sum(~np.isfinite(out)))
            raise HarvestError(f"{bad} of {len(out)} simulations failed")
        return out


def nearest_rank(sorted_values: np.ndarray, pct: float) -> float:
    n = len(sorted_values)
    rank = max(1, math.ceil(pct / 100.0 * n))
    return float(sorted_values[rank - 1])


@dataclass
class Bands:
    f_grid: np.ndarray
    percentiles: tuple
    values: np.ndarray  # (len(f_grid), len(percentiles))
    mean: np.ndarray
    n_failed: np.ndarray

    def width(self, lo: float, hi: float) -> np.ndarray:
        i, j = self.percentiles.index(lo), self.percentiles.index(hi)
        return self.values[:, j] - self.values[:, i]


def recenter(spec: RandomInputSpec, nominal: HarvesterParams, f_new: float) -> RandomInputSpec:
    """Move the amplitude entry (or the frozen amplitude) to a new nominal ``f_new``."""
    if "f" in spec.names:
        e = spec.entries[spec.names.index("f")]
        scale = f_new / nominal.f if nominal.f else 1.0
        if e.lower == e.upper or not nominal.f:
            lo = hi = f_new
        else:
            lo, hi = e.lower * scale, e.upper * scale
        return spec.replace_entry("f", lo, hi)
    frozen = dict(spec.frozen)
    frozen["f"] = f_new
    return RandomInputSpec(spec.entries, frozen)


def propagate(spec: RandomInputSpec, nominal: HarvesterParams, f_grid, N: int,
              percentiles=(5.0, 50.0, 95.0), seed: int = 0,
              settings: IntegratorSettings | None = None, s0=State3(),
              window_fraction: float = DEFAULT_WINDOW, workers: int | None = None,
              min_success: float = 0.9) -> Bands:
    """Percentile bands of mean power along the amplitude grid.

    The same cube sample is reused at every grid point, and the amplitude
    interval scales with its nominal value.
    """
    percentiles = tuple(float(p) for p in percentiles)
    if not percentiles or any(not 0 < p < 100 for p in percentiles) or list(percentiles) != sorted(percentiles):
        raise DomainError("percentiles must be sorted and inside (0, 100)")
    if N < 1:
        raise DomainError("N must be >= 1")
    f_grid = np.asarray(f_grid, dtype=np.float64)
    u = mc_sample(N, spec.names, seed, "propagate").values
    values = np.empty((len(f_grid), len(percentiles)))
    means = np.empty(len(f_grid))
    failed = np.zeros(len(f_grid), dtype=int)
    for g, f_nom in enumerate(f_grid):
        local = recenter(spec, nominal, float(f_nom))
        qoi = HarvesterQoI(local, nominal.with_(f=float(f_nom)), settings, s0,
                           window_fraction, workers, strict=False)
        y = qoi(local.to_values(u))
        ok = np.isfinite(y)
        failed[g] = int(np.sum(~ok))
        if ok.sum() < min_success * N:
            raise HarvestError(f"only {ok.sum()} of {N} simulations succeeded at f={f_nom}")
        ys = np.sort(y[ok])
        values[g] = [nearest_rank(ys, p) for p in percentiles]
        means[g] = float(np.mean(ys))
    return Bands(f_grid, percentiles, values, means, failed)
