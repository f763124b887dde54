"""Lumped-parameter model of the (a)symmetric bistable piezo-magneto-elastic harvester.

Dimensionless equations of motion::

    x'' + 2 xi x' - x (1 + 2 delta x - x^2) / 2 - (1 + beta |x|) chi v = f cos(Omega t) + p sin(phi)
    v'  + lambda v + (1 + beta |x|) kappa x' = 0

With ``beta = delta = phi = 0`` this is the classical bistable harvester.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from ._jit import njit
from .errors import DomainError

# Order of the packed parameter vector handed to the compiled kernels.
PARAM_NAMES = ("xi", "chi", "lam", "kappa", "f", "Omega", "beta", "delta", "phi", "p")
IDX = {name: i for i, name in enumerate(PARAM_NAMES)}


@dataclass(frozen=True)
class HarvesterParams:
    xi: float = 0.01
    chi: float = 0.05
    lam: float = 0.05
    kappa: float = 0.5
    f: float = 0.147
    Omega: float = 0.8
    beta: float = 0.0
    delta: float = 0.0
    phi: float = 0.0  # radians
    p: float = 1.0

    def __post_init__(self):
        for fld in fields(self):
            val = getattr(self, fld.name)
            if not math.isfinite(val):
                raise DomainError(f"{fld.name} must be finite, got {val!r}")
        for name in ("xi", "lam", "kappa", "f", "beta"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0, got {getattr(self, name)!r}")
        if self.Omega <= 0:
            raise DomainError(f"Omega must be > 0, got {self.Omega!r}")

    @classmethod
    def from_degrees(cls, phi_degrees: float = 0.0, **kwargs) -> "HarvesterParams":
        return cls(phi=math.radians(phi_degrees), **kwargs)

    @property
    def phi_degrees(self) -> float:
        return math.degrees(self.phi)

    def with_(self, **changes) -> "HarvesterParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, arr) -> "HarvesterParams":
        return cls(**{n: float(v) for n, v in zip(PARAM_NAMES, arr)})


@dataclass(frozen=True)
class State3:
    x: float = 1.0
    xdot: float = 0.0
    v: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.x, self.xdot, self.v)):
            raise DomainError(f"state must be finite, got {self}")

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.xdot, self.v], dtype=np.float64)


@njit
def coupling_modulation(x, beta):
    """Strain-dependent scaling ``1 + beta |x|`` of both piezo couplings."""
    return 1.0 + beta * abs(x)


@njit
def restoring_force(x, delta):
    return 0.5 * x * (1.0 + 2.0 * delta * x - x * x)


@njit
def harvester_rhs(t, x, xd, v, prm):
    """Right-hand side on scalars; ``prm`` is the packed vector (see PARAM_NAMES)."""
    theta = 1.0 + prm[6] * abs(x)
    acc = (-2.0 * prm[0] * xd + restoring_force(x, prm[7]) + theta * prm[1] * v
           + prm[4] * math.cos(prm[5] * t) + prm[9] * math.sin(prm[8]))
    vdot = -prm[2] * v - theta * prm[3] * xd
    return xd, acc, vdot


def rhs(s, t: float, prm: HarvesterParams) -> np.ndarray:
    """Time derivative ``(x', x'', v')`` of the state ``s``."""
    if isinstance(s, State3):
        y = s.to_array()
    else:
        y = np.asarray(s, dtype=np.float64)
    if y.shape != (3,) or not np.all(np.isfinite(y)) or not math.isfinite(t):
        raise DomainError(f"non-finite or malformed state/time: {s!r}, t={t!r}")
    return np.array(harvester_rhs(float(t), y[0], y[1], y[2], prm.to_array()))


def potential_energy(x, delta: float):
    """U(x) = -x^2/4 - delta x^3/3 + x^4/8, so that -U'(x) is the restoring force."""
    x = np.asarray(x, dtype=np.float64)
    u = -x**2 / 4.0 - delta * x**3 / 3.0 + x**4 / 8.0
    return float(u) if u.ndim == 0 else u


def equilibria(delta: float) -> list[float]:
    """Zeros of the restoring force, ascending: two wells around one saddle at 0."""
    r = math.hypot(delta, 1.0)
    # x^2 - 2 delta x - 1 = 0; the cancellation-free form for the smaller-magnitude root
    if delta >= 0:
        hi = delta + r
        lo = -1.0 / hi
    else:
        lo = delta - r
        hi = -1.0 / lo
    return [lo, 0.0, hi]
