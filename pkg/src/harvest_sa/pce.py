"""Legendre polynomial chaos surrogates fitted by least squares.

Inputs live on the cube [-1, 1]^k with the uniform density; the basis is the
tensorised orthonormal Legendre family ``psi_n = sqrt(2n + 1) P_n``, so the
output mean, variance and Sobol indices follow directly from the
coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg

from .errors import ConfigError, DegenerateOutputError, DomainError, IllConditionedDesign
from .uq import InputEntry, RandomInputSpec, SampleMatrix, SensitivityReport

FORMAT_TAG = "harvest_sa-pce"
FORMAT_VERSION = 1
OVERSAMPLING = 2


def _compositions(total: int, k: int):
    # first component descending, recursively
    if k == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, k - 1):
            yield (first, *rest)


def multi_indices(k: int, p: int) -> np.ndarray:
    """All degree vectors with total degree <= p, graded, ``(C(k+p, k), k)``."""
    if k < 1 or p < 0:
        raise DomainError("need k >= 1 and p >= 0")
    rows = [alpha for d in range(p + 1) for alpha in _compositions(d, k)]
    return np.array(rows, dtype=np.int64).reshape(-1, k)


def basis_size(k: int, p: int) -> int:
    return math.comb(k + p, k)


def legendre_table(u, n_max: int) -> np.ndarray:
    """Orthonormal Legendre values ``psi_0..psi_n_max`` at ``u``; shape ``u.shape + (n_max+1,)``."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty(u.shape + (n_max + 1,))
    out[..., 0] = 1.0
    if n_max >= 1:
        out[..., 1] = u
    for n in range(1, n_max):
        out[..., n + 1] = ((2 * n + 1) * u * out[..., n] - n * out[..., n - 1]) / (n + 1)
    out *= np.sqrt(2.0 * np.arange(n_max + 1) + 1.0)
    return out


def eval_basis(alpha, u) -> np.ndarray:
    """Product basis ``prod_i psi_{alpha_i}(u_i)`` at one point or an ``(n, k)`` batch."""
    alpha = np.asarray(alpha, dtype=np.int64)
    u = np.asarray(u, dtype=np.float64)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    table = legendre_table(u, int(alpha.max(initial=0)))
    vals = np.prod(np.take_along_axis(table, alpha[None, :, None], axis=2)[..., 0], axis=1)
    return vals[0] if single else vals


def design_matrix(u, indices: np.ndarray) -> np.ndarray:
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    if np.any(np.abs(u) > 1.0):
        raise DomainError("design points must lie in [-1, 1]^k")
    table = legendre_table(u, int(indices.max(initial=0)))  # (n, k, p+1)
    k = u.shape[1]
    psi = np.ones((u.shape[0], len(indices)))
    for i in range(k):
        psi *= table[:, i, indices[:, i]]
    return psi


@dataclass(frozen=True)
class DegreePolicy:
    """Fixed degree (``p_min == p_max``) or LOO-driven choice within a range."""

    p_min: int
    p_max: int

    def __post_init__(self):
        if not 0 <= self.p_min <= self.p_max:
            raise ConfigError(f"invalid degree range {self.p_min}..{self.p_max}", key="degree")

    @classmethod
    def fixed(cls, p: int) -> "DegreePolicy":
        return cls(p, p)

    @classmethod
    def adaptive(cls, p_min: int = 2, p_max: int = 6) -> "DegreePolicy":
        return cls(p_min, p_max)

    @property
    def is_fixed(self) -> bool:
        return self.p_min == self.p_max


@dataclass
class PceModel:
    indices: np.ndarray
    coeffs: np.ndarray
    degree: int
    loo_error: float
    n_train: int
    spec: RandomInputSpec | None = None
    loo_by_degree: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    @property
    def names(self) -> list[str]:
        return self.spec.names if self.spec is not None else [f"x{i + 1}" for i in range(self.k)]


@dataclass
class _Fit:
    coeffs: np.ndarray
    loo: float


def _least_squares(psi: np.ndarray, y: np.ndarray) -> _Fit:
    n, m = psi.shape
    if m and np.all(y == y[0]) and np.all(psi[:, 0] == 1.0):
        # constant responses: the exact fit, without rounding from the solve
        coeffs = np.zeros(m)
        coeffs[0] = y[0]
        return _Fit(coeffs, 0.0)
    q, r, piv = scipy.linalg.qr(psi, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, m) * np.finfo(float).eps * diag[0] if m else 0.0
    if m and (diag[-1] <= tol):
        rank = int(np.sum(diag > tol))
        raise IllConditionedDesign(f"design matrix rank {rank} < {m} basis terms")
    z = scipy.linalg.solve_triangular(r, q.T @ y)
    coeffs = np.empty(m)
    coeffs[piv] = z
    resid = y - q @ (q.T @ y)
    h = np.sum(q * q, axis=1)
    var = float(np.var(y))
    if var <= 0.0 or not np.any(resid):
        loo = 0.0
    else:
        loo = float(np.mean((resid / (1.0 - h)) ** 2) / var)
    return _Fit(coeffs, loo)


def fit(design, responses, degree_policy=None, spec: RandomInputSpec | None = None) -> PceModel:
    """Least-squares PCE on cube design points.

    ``degree_policy`` is an int (fixed degree) or a :class:`DegreePolicy`. In
    the adaptive case the admissible degrees are those whose basis the
    design oversamples at least twice; among them the lowest normalised
    leave-one-out error wins.
    """
    u = design.values if isinstance(design, SampleMatrix) else np.asarray(design, dtype=np.float64)
    u = np.atleast_2d(u)
    y = np.asarray(responses, dtype=np.float64).ravel()
    n, k = u.shape
    if len(y) != n:
        raise DomainError(f"{n} design points but {len(y)} responses")
    if not np.all(np.isfinite(y)):
        raise DomainError("responses must be finite")
    if spec is not None and spec.k != k:
        raise DomainError("spec dimension does not match the design")
    if degree_policy is None:
        degree_policy = DegreePolicy.adaptive()
    elif isinstance(degree_policy, int):
        degree_policy = DegreePolicy.fixed(degree_policy)
    degrees = [p for p in range(degree_policy.p_min, degree_policy.p_max + 1)
               if n >= OVERSAMPLING * basis_size(k, p)]
    if degree_policy.p_min not in degrees:
        need = OVERSAMPLING * basis_size(k, degree_policy.p_min)
        raise ConfigError(f"{n} training points cannot support degree {degree_policy.p_min} "
                          f"in {k} dimensions (need >= {need})", key="pce_n")
    best = None
    loo_by_degree = {}
    for p in degrees:
        idx = multi_indices(k, p)
        res = _least_squares(design_matrix(u, idx), y)
        loo_by_degree[p] = res.loo
        if best is None or res.loo < best[2].loo:
            best = (p, idx, res)
    p, idx, res = best
    return PceModel(idx, res.coeffs, p, res.loo, n, spec, loo_by_degree)


def surrogate_eval(model: PceModel, u) -> np.ndarray | float:
    u = np.asarray(u, dtype=np.float64)
    vals = design_matrix(np.atleast_2d(u), model.indices) @ model.coeffs
    return float(vals[0]) if u.ndim == 1 else vals


def moments(model: PceModel) -> tuple[float, float]:
    """(mean, variance) of the surrogate output."""
    zero = np.all(model.indices == 0, axis=1)
    return float(model.coeffs[zero].sum()), float(np.sum(model.coeffs[~zero] ** 2))


def sobol_from_pce(model: PceModel, max_order: int = 2) -> SensitivityReport:
    """Sobol indices up to ``max_order`` from squared coefficients, grouped by active inputs."""
    sq = model.coeffs ** 2
    active = model.indices > 0
    nonzero = active.any(axis=1)
    variance = float(sq[nonzero].sum())
    if not variance > 0:
        raise DegenerateOutputError("surrogate variance is zero")
    names = model.names
    order = active.sum(axis=1)
    indices = {}
    for q in range(1, min(max_order, model.k) + 1):
        for combo in combinations(range(model.k), q):
            mask = (order == q) & active[:, list(combo)].all(axis=1)
            indices[tuple(names[i] for i in combo)] = float(sq[mask].sum() / variance)
    meta = {"n_train": model.n_train, "degree": model.degree, "loo_error": model.loo_error,
            "max_order": max_order,
            "higher_order": float(max(0.0, 1.0 - sum(indices.values())))}
    return SensitivityReport("pce", indices, meta)


def save_pce(model: PceModel, path) -> None:
    """Write a plain-text, versioned copy of the fitted surrogate."""
    lines = [f"# {FORMAT_TAG} v{FORMAT_VERSION}",
             f"spec_hash {model.spec.digest() if model.spec is not None else '-'}",
             f"degree {model.degree}",
             f"n_train {model.n_train}",
             f"loo_error {model.loo_error!r}",
             f"k {model.k}"]
    if model.spec is not None:
        for e in model.spec.entries:
            lines.append(f"input {e.name} {e.lower!r} {e.upper!r}")
        for name, val in sorted(model.spec.frozen.items()):
            lines.append(f"frozen {name} {float(val)!r}")
    lines.append(f"terms {len(model.coeffs)}")
    for alpha, c in zip(model.indices, model.coeffs):
        lines.append(" ".join(str(int(a)) for a in alpha) + f" {float(c)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_pce(path) -> PceModel:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith(f"# {FORMAT_TAG} v"):
        raise ConfigError(f"{path}: not a PCE artifact", line=1)
    version = int(lines[0].rsplit("v", 1)[1])
    if version != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported version {version}", line=1)
    head = {}
    entries, frozen = [], {}
    i = 1
    while i < len(lines) and not lines[i].startswith("terms "):
        parts = lines[i].split()
        if parts[0] == "input":
            entries.append(InputEntry(parts[1], float(parts[2]), float(parts[3])))
        elif parts[0] == "frozen":
            frozen[parts[1]] = float(parts[2])
        else:
            head[parts[0]] = parts[1]
        i += 1
    n_terms = int(lines[i].split()[1])
    k = int(head["k"])
    rows = [lines[j].split() for j in range(i + 1, i + 1 + n_terms)]
    indices = np.array([[int(a) for a in r[:k]] for r in rows], dtype=np.int64).reshape(-1, k)
    coeffs = np.array([float(r[k]) for r in rows])
    spec = RandomInputSpec(tuple(entries), frozen) if entries else None
    if spec is not None and head.get("spec_hash") not in ("-", spec.digest()):
        raise ConfigError(f"{path}: spec hash mismatch")
    return PceModel(indices, coeffs, int(head["degree"]), float(head["loo_error"]),
                    int(head["n_train"]), spec)
