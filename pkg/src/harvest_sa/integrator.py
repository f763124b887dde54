"""Explicit Runge-Kutta integration with cubic Hermite dense output.

The default scheme is the Dormand-Prince 5(4) embedded pair with PI step
control; a fixed-step classical RK4 is available for reference runs.  Both
record every accepted step (time, state, derivative) so any output grid can
be produced afterwards by :func:`resample`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .errors import BlowUpError, DomainError, NonConvergentIntegration
from .model import HarvesterParams, State3, harvester_rhs

MODEL_HARVESTER = 0
# y' = M y + g with prm = (M row-major, g); used by the oracle problems.
MODEL_LINEAR = 1

STATUS_OK = 0
STATUS_MAX_STEPS = 1
STATUS_BLOWUP = 2
STATUS_UNDERFLOW = 3

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 5.0
# PI controller exponents (Hairer & Wanner's DOPRI5 defaults)
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# error weights: 5th order minus embedded 4th order
E1 = 71 / 57600
E3 = -71 / 16695
E4 = 71 / 1920
E5 = -17253 / 339200
E6 = 22 / 525
E7 = -1 / 40


@dataclass(frozen=True)
class IntegratorSettings:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    t0: float = 0.0
    t1: float = 2000.0
    n_out: int = 200_001
    max_steps: int = 10_000_000
    method: str = "dopri5"  # or "rk4"
    h0: float = 1e-3
    dt: float = 1e-3  # rk4 only

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("tolerances must be positive")
        if not self.t1 > self.t0:
            raise DomainError("t1 must exceed t0")
        if self.n_out < 2:
            raise DomainError("n_out must be >= 2")
        if self.max_steps < 1 or self.h0 <= 0 or self.dt <= 0:
            raise DomainError("max_steps, h0 and dt must be positive")
        if self.method not in ("dopri5", "rk4"):
            raise DomainError(f"unknown method {self.method!r}")

    def grid(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.n_out)


@dataclass
class StepRecord:
    """Accepted steps of one run."""

    t: np.ndarray
    y: np.ndarray  # (n, 3)
    dy: np.ndarray  # (n, 3)
    n_rejected: int = 0

    def __len__(self):
        return len(self.t)


@dataclass
class TimeSeries:
    t: np.ndarray
    states: np.ndarray  # (n, 3): x, xdot, v

    def __post_init__(self):
        if self.states.shape != (len(self.t), 3):
            raise DomainError("states must be (len(t), 3)")

    @property
    def x(self):
        return self.states[:, 0]

    @property
    def xdot(self):
        return self.states[:, 1]

    @property
    def v(self):
        return self.states[:, 2]

    def __len__(self):
        return len(self.t)

    def final_state(self) -> State3:
        return State3(*map(float, self.states[-1]))


@njit
def _deriv(model, t, a, b, c, prm):
    if model == MODEL_HARVESTER:
        return harvester_rhs(t, a, b, c, prm)
    return (prm[0] * a + prm[1] * b + prm[2] * c + prm[9],
            prm[3] * a + prm[4] * b + prm[5] * c + prm[10],
            prm[6] * a + prm[7] * b + prm[8] * c + prm[11])


@njit
def _grow(arr, n):
    out = np.empty((2 * arr.shape[0], arr.shape[1]))
    out[:n] = arr[:n]
    return out


@njit
def dopri5_kernel(model, prm, y0, t0, t1, rtol, atol, h0, max_steps):
    """Adaptive DOPRI5 run; returns (records, n_accepted, n_rejected, status).

    ``records`` rows are (t, y0, y1, y2, f0, f1, f2) for each accepted step.
    """
    rec = np.empty((1024, 7))
    n = 0
    t = t0
    a = y0[0]
    b = y0[1]
    c = y0[2]
    ka, kb, kc = _deriv(model, t, a, b, c, prm)
    rec[0, 0] = t
    rec[0, 1] = a
    rec[0, 2] = b
    rec[0, 3] = c
    rec[0, 4] = ka
    rec[0, 5] = kb
    rec[0, 6] = kc
    n = 1
    h = min(h0, t1 - t0)
    errold = 1e-4
    rejected = False
    attempts = 0
    rejections = 0
    status = STATUS_OK
    while t < t1:
        if attempts >= max_steps:
            status = STATUS_MAX_STEPS
            break
        last = False
        if t + 1.01 * h >= t1:
            h = t1 - t
            last = True
        attempts += 1
        # stage 2
        a2 = a + h * A21 * ka
        b2 = b + h * A21 * kb
        c2 = c + h * A21 * kc
        k2a, k2b, k2c = _deriv(model, t + C2 * h, a2, b2, c2, prm)
        a3 = a + h * (A31 * ka + A32 * k2a)
        b3 = b + h * (A31 * kb + A32 * k2b)
        c3 = c + h * (A31 * kc + A32 * k2c)
        k3a, k3b, k3c = _deriv(model, t + C3 * h, a3, b3, c3, prm)
        a4 = a + h * (A41 * ka + A42 * k2a + A43 * k3a)
        b4 = b + h * (A41 * kb + A42 * k2b + A43 * k3b)
        c4 = c + h * (A41 * kc + A42 * k2c + A43 * k3c)
        k4a, k4b, k4c = _deriv(model, t + C4 * h, a4, b4, c4, prm)
        a5 = a + h * (A51 * ka + A52 * k2a + A53 * k3a + A54 * k4a)
        b5 = b + h * (A51 * kb + A52 * k2b + A53 * k3b + A54 * k4b)
        c5 = c + h * (A51 * kc + A52 * k2c + A53 * k3c + A54 * k4c)
        k5a, k5b, k5c = _deriv(model, t + C5 * h, a5, b5, c5, prm)
        a6 = a + h * (A61 * ka + A62 * k2a + A63 * k3a + A64 * k4a + A65 * k5a)
        b6 = b + h * (A61 * kb + A62 * k2b + A63 * k3b + A64 * k4b + A65 * k5b)
        c6 = c + h * (A61 * kc + A62 * k2c + A63 * k3c + A64 * k4c + A65 * k5c)
        k6a, k6b, k6c = _deriv(model, t + h, a6, b6, c6, prm)
        an = a + h * (B1 * ka + B3 * k3a + B4 * k4a + B5 * k5a + B6 * k6a)
        bn = b + h * (B1 * kb + B3 * k3b + B4 * k4b + B5 * k5b + B6 * k6b)
        cn = c + h * (B1 * kc + B3 * k3c + B4 * k4c + B5 * k5c + B6 * k6c)
        tn = t1 if last else t + h
        k7a, k7b, k7c = _deriv(model, tn, an, bn, cn, prm)

        ea = h * (E1 * ka + E3 * k3a + E4 * k4a + E5 * k5a + E6 * k6a + E7 * k7a)
        eb = h * (E1 * kb + E3 * k3b + E4 * k4b + E5 * k5b + E6 * k6b + E7 * k7b)
        ec = h * (E1 * kc + E3 * k3c + E4 * k4c + E5 * k5c + E6 * k6c + E7 * k7c)
        err = max(abs(ea) / (atol + rtol * max(abs(a), abs(an))),
                  abs(eb) / (atol + rtol * max(abs(b), abs(bn))),
                  abs(ec) / (atol + rtol * max(abs(c), abs(cn))))

        if not math.isfinite(err):
            # overflow inside the trial step: shrink hard and retry
            h *= FAC_MIN
            rejected = True
            rejections += 1
            if h <= 1e-14 * max(1.0, abs(t)):
                status = STATUS_BLOWUP
                break
            continue

        if err <= 1.0:
            t = tn
            a = an
            b = bn
            c = cn
            ka = k7a
            kb = k7b
            kc = k7c
            if n == rec.shape[0]:
                rec = _grow(rec, n)
            rec[n, 0] = t
            rec[n, 1] = a
            rec[n, 2] = b
            rec[n, 3] = c
            rec[n, 4] = ka
            rec[n, 5] = kb
            rec[n, 6] = kc
            n += 1
            if err == 0.0:
                fac = FAC_MAX
            else:
                fac = SAFETY * err ** (-_ALPHA) * errold ** _BETA
                fac = min(FAC_MAX, max(FAC_MIN, fac))
            if rejected:
                fac = min(fac, 1.0)
            errold = max(err, 1e-4)
            h *= fac
            rejected = False
        else:
            fac = max(FAC_MIN, SAFETY * err ** -0.2)
            h *= fac
            rejected = True
            rejections += 1
        if h <= 1e-14 * max(1.0, abs(t)) and t < t1:
            status = STATUS_UNDERFLOW
            break
    return rec[:n], n, rejections, status


@njit
def rk4_kernel(model, prm, y0, t0, t1, dt, max_steps):
    """Fixed-step classical RK4 on an even partition of [t0, t1]."""
    m = int(math.ceil((t1 - t0) / dt - 1e-9))
    if m < 1:
        m = 1
    status = STATUS_OK
    if m > max_steps:
        m = max_steps
        status = STATUS_MAX_STEPS
    h = (t1 - t0) / int(math.ceil((t1 - t0) / dt - 1e-9))
    rec = np.empty((m + 1, 7))
    a = y0[0]
    b = y0[1]
    c = y0[2]
    t = t0
    ka, kb, kc = _deriv(model, t, a, b, c, prm)
    rec[0, 0] = t
    rec[0, 1] = a
    rec[0, 2] = b
    rec[0, 3] = c
    rec[0, 4] = ka
    rec[0, 5] = kb
    rec[0, 6] = kc
    n = 1
    for i in range(m):
        hh = 0.5 * h
        k2a, k2b, k2c = _deriv(model, t + hh, a + hh * ka, b + hh * kb, c + hh * kc, prm)
        k3a, k3b, k3c = _deriv(model, t + hh, a + hh * k2a, b + hh * k2b, c + hh * k2c, prm)
        k4a, k4b, k4c = _deriv(model, t + h, a + h * k3a, b + h * k3b, c + h * k3c, prm)
        a = a + h / 6.0 * (ka + 2.0 * k2a + 2.0 * k3a + k4a)
        b = b + h / 6.0 * (kb + 2.0 * k2b + 2.0 * k3b + k4b)
        c = c + h / 6.0 * (kc + 2.0 * k2c + 2.0 * k3c + k4c)
        t = t0 + (i + 1) * h
        if i == m - 1 and status == STATUS_OK:
            t = t1
        if not (math.isfinite(a) and math.isfinite(b) and math.isfinite(c)):
            status = STATUS_BLOWUP
            break
        ka, kb, kc = _deriv(model, t, a, b, c, prm)
        rec[n, 0] = t
        rec[n, 1] = a
        rec[n, 2] = b
        rec[n, 3] = c
        rec[n, 4] = ka
        rec[n, 5] = kb
        rec[n, 6] = kc
        n += 1
    return rec[:n], n, 0, status


@njit
def hermite_kernel(ts, ys, fs, grid):
    """Cubic Hermite interpolation of step data at ascending ``grid`` times."""
    out = np.empty((grid.shape[0], 3))
    j = 0
    last = ts.shape[0] - 1
    for g in range(grid.shape[0]):
        tg = grid[g]
        while j < last - 1 and ts[j + 1] < tg:
            j += 1
        if tg == ts[j]:
            out[g, 0] = ys[j, 0]
            out[g, 1] = ys[j, 1]
            out[g, 2] = ys[j, 2]
            continue
        if tg == ts[j + 1]:
            out[g, 0] = ys[j + 1, 0]
            out[g, 1] = ys[j + 1, 1]
            out[g, 2] = ys[j + 1, 2]
            continue
        h = ts[j + 1] - ts[j]
        s = (tg - ts[j]) / h
        s1 = 1.0 - s
        # h00 = 1 - h01 folded in, so constant data is reproduced exactly
        h10 = s * s1 * s1
        h01 = s * s * (3.0 - 2.0 * s)
        h11 = -s * s * s1
        for k in range(3):
            out[g, k] = (ys[j, k] + h01 * (ys[j + 1, k] - ys[j, k])
                         + h * (h10 * fs[j, k] + h11 * fs[j + 1, k]))
    return out


def _check_status(status, rec, max_steps):
    t_last = float(rec[-1, 0]) if len(rec) else float("nan")
    if status == STATUS_MAX_STEPS:
        raise NonConvergentIntegration(
            f"non-convergent integration: step budget {max_steps} exhausted", t_last)
    if status == STATUS_UNDERFLOW:
        raise NonConvergentIntegration("non-convergent integration: step size underflow", t_last)
    if status == STATUS_BLOWUP:
        raise BlowUpError("blow-up: state became non-finite", t_last)


def _as_y0(s0) -> np.ndarray:
    y0 = s0.to_array() if isinstance(s0, State3) else np.asarray(s0, dtype=np.float64).copy()
    if y0.shape != (3,) or not np.all(np.isfinite(y0)):
        raise DomainError(f"initial state must be 3 finite values, got {s0!r}")
    return y0


def run_steps(prm_vec: np.ndarray, y0: np.ndarray, settings: IntegratorSettings,
              model: int = MODEL_HARVESTER) -> StepRecord:
    """Integrate a packed parameter vector; returns the accepted steps."""
    if settings.method == "dopri5":
        rec, n, nrej, status = dopri5_kernel(
            model, prm_vec, y0, float(settings.t0), float(settings.t1),
            float(settings.rel_tol), float(settings.abs_tol), float(settings.h0),
            int(settings.max_steps))
    else:
        rec, n, nrej, status = rk4_kernel(
            model, prm_vec, y0, float(settings.t0), float(settings.t1),
            float(settings.dt), int(settings.max_steps))
    _check_status(status, rec, settings.max_steps)
    return StepRecord(t=rec[:, 0].copy(), y=rec[:, 1:4].copy(), dy=rec[:, 4:7].copy(),
                      n_rejected=int(nrej))


def integrate_steps(prm: HarvesterParams, s0, settings: IntegratorSettings | None = None) -> StepRecord:
    settings = settings or IntegratorSettings()
    return run_steps(prm.to_array(), _as_y0(s0), settings)


def resample(steps: StepRecord, n_out: int | None = None, t=None) -> TimeSeries:
    """Dense output of ``steps`` on a uniform ``n_out`` grid or on explicit times ``t``."""
    if len(steps) < 2:
        raise DomainError("need at least 2 accepted steps")
    if t is None:
        if n_out is None or n_out < 2:
            raise DomainError("n_out must be >= 2")
        t = np.linspace(steps.t[0], steps.t[-1], n_out)
    else:
        t = np.asarray(t, dtype=np.float64)
        if t.size and (t[0] < steps.t[0] or t[-1] > steps.t[-1] or np.any(np.diff(t) < 0)):
            raise DomainError("resample times must be ascending and inside the step range")
    states = hermite_kernel(steps.t, steps.y, steps.dy, t)
    return TimeSeries(t=t, states=states)


def integrate(prm: HarvesterParams, s0=State3(), settings: IntegratorSettings | None = None) -> TimeSeries:
    """Simulate the harvester and sample the trajectory on the uniform output grid."""
    settings = settings or IntegratorSettings()
    steps = integrate_steps(prm, s0, settings)
    return resample(steps, t=settings.grid())


def integrate_linear(matrix, offset, y0, settings: IntegratorSettings) -> StepRecord:
    """Integrate ``y' = matrix @ y + offset`` (3 states) with the same kernels."""
    prm = np.concatenate([np.asarray(matrix, dtype=np.float64).reshape(9),
                          np.asarray(offset, dtype=np.float64).reshape(3)])
    return run_steps(prm, _as_y0(y0), settings, model=MODEL_LINEAR)
