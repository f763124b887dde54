"""Quantities of interest and regime diagnostics built on trajectories."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, HarvestError
from .integrator import IntegratorSettings, TimeSeries, resample, run_steps
from .model import IDX, HarvesterParams, State3
from .parallel import parallel_map

DEFAULT_WINDOW = 0.5
DEFAULT_STROBES = 32
SPREAD_TOL = 1e-3
MAX_PERIOD = 8
MIN_POINTS = 50


def window_start(t: np.ndarray, window_fraction: float) -> int:
    """Index of the first sample inside the trailing ``window_fraction`` of ``t``."""
    if not 0 < window_fraction <= 1:
        raise DomainError(f"window_fraction must be in (0, 1], got {window_fraction}")
    span = t[-1] - t[0]
    start = t[-1] - window_fraction * span
    slack = 1e-9 * span / max(len(t) - 1, 1)
    return int(np.searchsorted(t, start - slack, side="left"))


def mean_power(series: TimeSeries, lam: float, window_fraction: float = DEFAULT_WINDOW) -> float:
    """Time average of ``lam * v^2`` over the trailing window (trapezoidal rule)."""
    i0 = window_start(series.t, window_fraction)
    t = series.t[i0:]
    if len(t) < 2:
        raise DomainError("fewer than 2 samples in the averaging window")
    v = series.v[i0:]
    p = lam * v * v
    integral = float(np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(t)))
    return integral / float(t[-1] - t[0])


@dataclass
class PowerResult:
    power: float
    final_state: np.ndarray
    n_steps: int


def simulate_power(prm_vec: np.ndarray, y0: np.ndarray, settings: IntegratorSettings,
                   window_fraction: float = DEFAULT_WINDOW) -> PowerResult:
    """Mean power of one run, sampling only the averaging window of the output grid.

    Gives the same number as ``mean_power(integrate(...))``.
    """
    steps = run_steps(prm_vec, y0, settings)
    grid = settings.grid()
    i0 = window_start(grid, window_fraction)
    series = resample(steps, t=grid[i0:])
    power = mean_power(series, float(prm_vec[IDX["lam"]]), 1.0)
    return PowerResult(power, steps.y[-1].copy(), len(steps))


def strobe_times(t0: float, t1: float, Omega: float, discard_fraction: float = DEFAULT_WINDOW) -> np.ndarray:
    """Forcing-period multiples (phase reference t = 0) after the discarded transient."""
    if Omega <= 0:
        raise DomainError("Omega must be positive")
    if not 0 <= discard_fraction < 1:
        raise DomainError("discard_fraction must be in [0, 1)")
    period = 2 * math.pi / Omega
    start = t0 + discard_fraction * (t1 - t0)
    if t1 - start < period:
        raise DomainError("less than one forcing period left after the discarded transient")
    n_first = math.ceil(start / period - 1e-12)
    n_last = math.floor(t1 / period + 1e-12)
    times = np.arange(n_first, n_last + 1) * period
    return times[(times >= t0) & (times <= t1)]


def _interp4(t: np.ndarray, y: np.ndarray, tq: np.ndarray) -> np.ndarray:
    """4-point Lagrange interpolation on a uniform grid (columns of ``y``)."""
    n = len(t)
    dt = (t[-1] - t[0]) / (n - 1)
    pos = (tq - t[0]) / dt
    j = np.clip(np.floor(pos).astype(int) - 1, 0, max(n - 4, 0))
    s = pos - j
    # weights sum to one, so write it relative to y[j]: constant data stays exact
    out = y[j].astype(np.float64)
    m = min(4, n)
    for a in range(1, m):
        w = np.ones_like(s)
        for b in range(m):
            if b != a:
                w *= (s - b) / (a - b)
        out += w[:, None] * (y[j + a] - y[j])
    return out


def poincare_samples(series: TimeSeries, Omega: float,
                     discard_fraction: float = DEFAULT_WINDOW) -> np.ndarray:
    """States at the stroboscopic times, as an ``(n, 3)`` array (x, xdot, v)."""
    times = strobe_times(series.t[0], series.t[-1], Omega, discard_fraction)
    return _interp4(series.t, series.states, times)


def regime_period(points, spread_tol: float = SPREAD_TOL, max_period: int = MAX_PERIOD,
                  min_points: int = MIN_POINTS) -> int | None:
    """Smallest k such that every k-th stroboscopic voltage repeats within ``spread_tol``."""
    pts = np.asarray(points, dtype=np.float64)
    v = pts[:, 2] if pts.ndim == 2 else pts
    if len(v) < min_points:
        raise DomainError(f"need at least {min_points} stroboscopic points, got {len(v)}")
    for k in range(1, max_period + 1):
        if all(np.ptp(v[r::k]) < spread_tol for r in range(k)):
            return k
    return None


def classify_regime(points, spread_tol: float = SPREAD_TOL, max_period: int = MAX_PERIOD) -> str:
    k = regime_period(points, spread_tol, max_period)
    return "aperiodic" if k is None else f"period-{k}"


@dataclass
class BifurcationRecord:
    f: float
    v: np.ndarray
    error: str | None = None


@dataclass
class BifurcationData:
    direction: str
    records: list = field(default_factory=list)

    @property
    def f_values(self) -> np.ndarray:
        return np.array([r.f for r in self.records])


def bifurcation_sweep(prm_base: HarvesterParams, f_start: float, f_end: float, n_steps: int,
                      direction: str = "up", settings: IntegratorSettings | None = None,
                      s0=State3(), n_strobe: int = DEFAULT_STROBES,
                      discard_fraction: float = DEFAULT_WINDOW) -> BifurcationData:
    """Continuation sweep in excitation amplitude, recording stroboscopic voltages.

    Each amplitude starts from the final state of the previous one. A failed
    integration is recorded on its record and the sweep carries on from the
    last good state.
    """
    if n_steps < 2:
        raise DomainError("n_steps must be >= 2")
    if direction not in ("up", "down"):
        raise DomainError(f"direction must be 'up' or 'down', got {direction!r}")
    settings = settings or IntegratorSettings()
    lo, hi = sorted((f_start, f_end))
    f_values = np.linspace(lo, hi, n_steps)
    if direction == "down":
        f_values = f_values[::-1]
    times = strobe_times(settings.t0, settings.t1, prm_base.Omega, discard_fraction)[-n_strobe:]
    y = s0.to_array() if isinstance(s0, State3) else np.asarray(s0, dtype=np.float64)
    data = BifurcationData(direction)
    for f in f_values:
        prm = prm_base.with_(f=float(f))
        try:
            steps = run_steps(prm.to_array(), y, settings)
        except HarvestError as exc:
            data.records.append(BifurcationRecord(float(f), np.empty(0), error=str(exc)))
            continue
        strobes = resample(steps, t=times)
        data.records.append(BifurcationRecord(float(f), strobes.v.copy()))
        y = steps.y[-1].copy()
    return data


def _hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def sweep_disagreement(up: BifurcationData, down: BifurcationData, tol: float = 1e-2) -> list[float]:
    """Amplitudes where the up- and down-sweep attractors differ (hysteresis window)."""
    down_by_f = {round(r.f, 12): r for r in down.records}
    out = []
    for r in up.records:
        other = down_by_f.get(round(r.f, 12))
        if other is None or r.error or other.error or not len(r.v) or not len(other.v):
            continue
        if _hausdorff(r.v, other.v) > tol:
            out.append(r.f)
    return out


@dataclass
class PowerGrid:
    f_axis: np.ndarray
    beta_axis: np.ndarray
    mean_power: np.ndarray  # (len(beta_axis), len(f_axis))


def _power_row(task):
    prm_vec, f_axis, y0, settings, window_fraction = task
    row = np.empty(len(f_axis))
    y = y0
    for j, f in enumerate(f_axis):
        prm_vec = prm_vec.copy()
        prm_vec[IDX["f"]] = f
        res = simulate_power(prm_vec, y, settings, window_fraction)
        row[j] = res.power
        y = res.final_state
    return row


def power_map(prm_base: HarvesterParams, f_axis, beta_axis, settings: IntegratorSettings | None = None,
              s0=State3(), window_fraction: float = DEFAULT_WINDOW,
              workers: int | None = None) -> PowerGrid:
    """Mean power over an (amplitude, nonlinear coupling) grid.

    Amplitudes are continued along each row; rows are independent.
    """
    f_axis = np.asarray(f_axis, dtype=np.float64)
    beta_axis = np.asarray(beta_axis, dtype=np.float64)
    if f_axis.size == 0 or beta_axis.size == 0:
        raise DomainError("power map axes must be non-empty")
    settings = settings or IntegratorSettings()
    y0 = s0.to_array() if isinstance(s0, State3) else np.asarray(s0, dtype=np.float64)
    tasks = [(prm_base.with_(beta=float(b)).to_array(), f_axis, y0, settings, window_fraction)
             for b in beta_axis]
    rows = parallel_map(_power_row, tasks, workers)
    return PowerGrid(f_axis, beta_axis, np.vstack(rows))
