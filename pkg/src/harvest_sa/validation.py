"""Analytic oracle problems and the ``validate`` check suite."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrator import IntegratorSettings, integrate_linear, run_steps
from .model import HarvesterParams, potential_energy
from .pce import DegreePolicy, design_matrix, fit, multi_indices, sobol_from_pce
from .uq import InputEntry, RandomInputSpec, lhs_sample, mc_first_order

ISHIGAMI_A = 7.0
ISHIGAMI_B = 0.1


def ishigami(x, a: float = ISHIGAMI_A, b: float = ISHIGAMI_B) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.sin(x[:, 0]) + a * np.sin(x[:, 1]) ** 2 + b * x[:, 2] ** 4 * np.sin(x[:, 0])


def ishigami_sobol(a: float = ISHIGAMI_A, b: float = ISHIGAMI_B) -> dict:
    """Closed-form first- and second-order indices for inputs U(-pi, pi)."""
    pi4, pi8 = math.pi ** 4, math.pi ** 8
    v1 = 0.5 * (1 + b * pi4 / 5) ** 2
    v2 = a * a / 8
    v13 = b * b * pi8 * (1 / 18 - 1 / 50)
    var = v1 + v2 + v13
    return {("x1",): v1 / var, ("x2",): v2 / var, ("x3",): 0.0,
            ("x1", "x2"): 0.0, ("x1", "x3"): v13 / var, ("x2", "x3"): 0.0}


def ishigami_spec() -> RandomInputSpec:
    return RandomInputSpec(tuple(InputEntry(f"x{i}", -math.pi, math.pi) for i in (1, 2, 3)))


def linear_spec() -> RandomInputSpec:
    return RandomInputSpec((InputEntry("x1", -1.0, 1.0), InputEntry("x2", -1.0, 1.0)))


def linear_model(x) -> np.ndarray:
    x = np.atleast_2d(x)
    return x[:, 0] + 2.0 * x[:, 1]


def exponential_decay_error(settings: IntegratorSettings | None = None) -> float:
    """|y(1) - e^-1| for y' = -y, y(0) = 1."""
    settings = settings or IntegratorSettings(t0=0.0, t1=1.0)
    steps = integrate_linear(np.diag([-1.0, 0.0, 0.0]), np.zeros(3), [1.0, 0.0, 0.0], settings)
    return float(abs(steps.y[-1, 0] - math.exp(-1.0)))


def well_energy_drift(x0: float = 1.2, t1: float = 200.0, settings: IntegratorSettings | None = None) -> float:
    """Max relative drift of x'^2/2 + U(x) for the undriven, undamped, uncoupled well."""
    settings = settings or IntegratorSettings(t0=0.0, t1=t1)
    prm = HarvesterParams(xi=0.0, chi=0.0, f=0.0, delta=0.0, phi=0.0)
    steps = run_steps(prm.to_array(), np.array([x0, 0.0, 0.0]), settings)
    energy = 0.5 * steps.y[:, 1] ** 2 + potential_energy(steps.y[:, 0], 0.0)
    return float(np.max(np.abs(energy - energy[0])) / abs(energy[0]))


def legendre_gram_error(n_max: int = 10, n_quad: int = 64) -> float:
    u, w = np.polynomial.legendre.leggauss(n_quad)
    psi = design_matrix(u[:, None], multi_indices(1, n_max))
    gram = psi.T @ (0.5 * w[:, None] * psi)
    return float(np.max(np.abs(gram - np.eye(n_max + 1))))


def square_fit_error(seed: int = 0) -> float:
    """Coefficient error of the degree-2 fit of u1^2 on 2 inputs (exact: 1/3 and 2/(3 sqrt 5))."""
    design = lhs_sample(60, 2, seed)
    model = fit(design, design.values[:, 0] ** 2, DegreePolicy.fixed(2))
    exact = np.zeros(len(model.coeffs))
    exact[0] = 1.0 / 3.0
    exact[3] = 2.0 / (3.0 * math.sqrt(5.0))
    return float(np.max(np.abs(model.coeffs - exact)))


@dataclass
class Check:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tolerance)


def _max_dev(report, exact: dict, order: int = 1) -> float:
    return max(abs(report.indices[k] - v) for k, v in exact.items() if len(k) == order)


def run_oracles(seed: int = 0) -> list[Check]:
    """Every analytic check, each as (measured deviation, tolerance)."""
    checks = [
        Check("exponential_decay_abs_error", exponential_decay_error(), 1e-6),
        Check("well_energy_rel_drift", well_energy_drift(), 1e-5),
        Check("legendre_gram_max_dev", legendre_gram_error(), 1e-12),
        Check("square_pce_coeff_max_dev", square_fit_error(seed), 1e-10),
    ]

    spec = linear_spec()
    design = lhs_sample(50, 2, seed)
    lin = sobol_from_pce(fit(design, linear_model(spec.to_values(design.values)), 1, spec))
    exact_lin = {("x1",): 0.2, ("x2",): 0.8}
    checks.append(Check("linear_pce_max_dev", _max_dev(lin, exact_lin), 1e-12))
    lin_mc = mc_first_order(linear_model, spec, 4096, seed)
    checks.append(Check("linear_mc_max_dev", _max_dev(lin_mc, exact_lin), 0.03))

    ispec = ishigami_spec()
    exact = ishigami_sobol()
    design = lhs_sample(500, 3, seed)
    ish_pce = sobol_from_pce(fit(design, ishigami(ispec.to_values(design.values)), 9, ispec))
    ish_mc = mc_first_order(ishigami, ispec, 16384, seed)
    checks.append(Check("ishigami_pce_max_dev", _max_dev(ish_pce, exact), 0.02))
    checks.append(Check("ishigami_mc_max_dev", _max_dev(ish_mc, exact), 0.03))
    mae = float(np.mean([abs(ish_pce.indices[k] - ish_mc.indices[k]) for k in ish_pce.order(1)]))
    checks.append(Check("ishigami_pce_vs_mc_mae", mae, 0.03))
    return checks
