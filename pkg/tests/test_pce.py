import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harvest_sa.errors import ConfigError, DegenerateOutputError, IllConditionedDesign
from harvest_sa.pce import (DegreePolicy, PceModel, basis_size, design_matrix, eval_basis, fit,
                            load_pce, moments, multi_indices, save_pce, sobol_from_pce,
                            surrogate_eval)
from harvest_sa.uq import InputEntry, RandomInputSpec, lhs_sample
from harvest_sa.validation import ishigami, ishigami_sobol, ishigami_spec, legendre_gram_error


def test_multi_indices_examples():
    assert multi_indices(2, 2).tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
    assert len(multi_indices(6, 3)) == 84 == basis_size(6, 3)
    assert multi_indices(4, 0).tolist() == [[0, 0, 0, 0]]


@given(k=st.integers(1, 5), p=st.integers(0, 5))
def test_multi_indices_count_and_degree(k, p):
    idx = multi_indices(k, p)
    assert len(idx) == math.comb(k + p, k)
    assert np.all(idx.sum(axis=1) <= p)
    assert np.all(np.diff(idx.sum(axis=1)) >= 0)
    assert len({tuple(a) for a in idx}) == len(idx)


def test_basis_examples():
    u = np.random.default_rng(0).uniform(-1, 1, (5, 3))
    np.testing.assert_array_equal(eval_basis([0, 0, 0], u), np.ones(5))
    assert eval_basis([1], np.array([1.0])) == pytest.approx(math.sqrt(3), rel=1e-15)
    assert legendre_gram_error() < 1e-12


def test_basis_is_product():
    u = np.array([[0.3, -0.7]])
    expected = (math.sqrt(5) * 0.5 * (3 * 0.09 - 1)) * (math.sqrt(3) * -0.7)
    assert eval_basis([2, 1], u)[0] == pytest.approx(expected, rel=1e-14)


def test_constant_fit():
    design = lhs_sample(30, 2, 0)
    model = fit(design, np.full(30, 2.5), 2)
    assert model.coeffs[0] == 2.5
    assert np.all(model.coeffs[1:] == 0.0)
    assert model.loo_error == 0.0
    assert moments(model) == (2.5, 0.0)
    np.testing.assert_allclose(surrogate_eval(model, design.values), 2.5, rtol=1e-14)
    with pytest.raises(DegenerateOutputError):
        sobol_from_pce(PceModel(model.indices, np.r_[2.5, np.zeros(5)], 2, 0.0, 30))


@pytest.fixture(scope="module")
def square_model():
    design = lhs_sample(60, 2, 0)
    return fit(design, design.values[:, 0] ** 2, DegreePolicy.fixed(2)), design


def test_square_fit_coefficients(square_model):
    model, design = square_model
    exact = np.zeros(6)
    exact[0] = 1 / 3
    exact[3] = 2 / (3 * math.sqrt(5))
    assert np.max(np.abs(model.coeffs - exact)) < 1e-10
    assert model.loo_error < 1e-10
    np.testing.assert_allclose(surrogate_eval(model, design.values), design.values[:, 0] ** 2,
                               atol=1e-9)


def test_square_moments_and_indices(square_model):
    model, _ = square_model
    mean, var = moments(model)
    assert mean == pytest.approx(1 / 3, abs=1e-9)
    assert var == pytest.approx(4 / 45, abs=1e-9)
    rep = sobol_from_pce(model)
    assert rep.first_order["x1"] == pytest.approx(1.0, abs=1e-12)
    assert rep.first_order["x2"] == pytest.approx(0.0, abs=1e-12)


def test_midpoint_uses_even_terms_only(square_model):
    model, _ = square_model
    even = np.all(model.indices % 2 == 0, axis=1)
    at_zero = design_matrix(np.zeros((1, 2)), model.indices)[0]
    assert surrogate_eval(model, np.zeros(2)) == pytest.approx(float(at_zero[even] @ model.coeffs[even]),
                                                               rel=1e-15)
    assert np.all(at_zero[~even] == 0.0)


def test_linear_indices_exact():
    design = lhs_sample(40, 2, 5)
    model = fit(design, design.values[:, 0] + 2 * design.values[:, 1], 1)
    rep = sobol_from_pce(model)
    assert rep.first_order["x1"] == pytest.approx(0.2, abs=1e-12)
    assert rep.first_order["x2"] == pytest.approx(0.8, abs=1e-12)


def test_moments_against_surrogate_monte_carlo():
    design = lhs_sample(200, 3, 1)
    u = design.values
    model = fit(design, np.exp(u[:, 0]) * (1 + u[:, 1] * u[:, 2]), 4)
    mean, var = moments(model)
    samples = surrogate_eval(model, np.random.default_rng(2).uniform(-1, 1, (1_000_000, 3)))
    assert abs(samples.mean() - mean) < 0.01 * abs(mean)
    assert abs(samples.var() - var) < 0.01 * var


def test_moments_against_quadrature():
    design = lhs_sample(120, 3, 4)
    u = design.values
    model = fit(design, np.sin(2 * u[:, 0]) + u[:, 1] ** 3 * u[:, 2], 4)
    nodes, weights = np.polynomial.legendre.leggauss(12)
    pts = np.array(list(product(nodes, repeat=3)))
    w = np.prod(np.array(list(product(weights, repeat=3))), axis=1) / 8
    vals = surrogate_eval(model, pts)
    mean = float(w @ vals)
    var = float(w @ (vals - mean) ** 2)
    assert moments(model) == pytest.approx((mean, var), abs=1e-8)


@pytest.fixture(scope="module")
def ishigami_model():
    spec = ishigami_spec()
    design = lhs_sample(500, 3, 0)
    return fit(design, ishigami(spec.to_values(design.values)), 9, spec)


def test_ishigami_surrogate(ishigami_model):
    # 10 LHS seeds at this size give LOO errors between 9e-4 and 2.9e-3
    assert ishigami_model.loo_error < 5e-3
    rep = sobol_from_pce(ishigami_model)
    exact = ishigami_sobol()
    for key in (("x1",), ("x2",), ("x3",), ("x1", "x3")):
        assert abs(rep.indices[key] - exact[key]) < 0.02
    assert all(0 <= v <= 1 for v in rep.indices.values())
    assert rep.total_explained <= 1 + 1e-9


def test_partition_closure(ishigami_model):
    full = sobol_from_pce(ishigami_model, max_order=3)
    assert full.total_explained == pytest.approx(1.0, abs=1e-12)
    two = sobol_from_pce(ishigami_model)
    assert two.total_explained + two.metadata["higher_order"] == pytest.approx(1.0, abs=1e-12)


def test_permutation_equivariance():
    spec = ishigami_spec()
    design = lhs_sample(300, 3, 2)
    y = ishigami(spec.to_values(design.values))
    perm = [1, 2, 0]
    pspec = RandomInputSpec(tuple(spec.entries[i] for i in perm))
    a = sobol_from_pce(fit(design, y, 5, spec))
    b = sobol_from_pce(fit(design.values[:, perm], y, 5, pspec))
    for key, val in a.indices.items():
        other = b.indices.get(key, b.indices.get(key[::-1]))
        assert abs(val - other) <= 1e-12


def test_noise_does_not_lower_loo():
    design = lhs_sample(150, 2, 3)
    u = design.values
    y = np.cos(u[:, 0]) + u[:, 1] ** 2
    noise = np.random.default_rng(0).normal(0, 0.05, len(y))
    clean = fit(design, y, 3).loo_error
    assert fit(design, y + noise, 3).loo_error >= clean


def test_adaptive_policy_picks_lowest_loo():
    design = lhs_sample(200, 2, 1)
    u = design.values
    model = fit(design, u[:, 0] ** 3 - u[:, 1], DegreePolicy.adaptive(2, 6))
    assert model.degree == min(model.loo_by_degree, key=model.loo_by_degree.get)
    assert model.loo_by_degree[3] < 1e-20


def test_adaptive_skips_unsupported_degrees():
    design = lhs_sample(60, 3, 0)
    model = fit(design, design.values[:, 0], DegreePolicy.adaptive(2, 6))
    # 2 * C(3+p, 3) <= 60 only for p <= 3
    assert set(model.loo_by_degree) == {2, 3}


def test_oversampling_violation():
    with pytest.raises(ConfigError):
        fit(lhs_sample(20, 3, 0), np.zeros(20), 3)


def test_ill_conditioned_design():
    u = np.zeros((40, 2))
    u[:, 0] = np.linspace(-1, 1, 40)
    with pytest.raises(IllConditionedDesign):
        fit(u, u[:, 0], 2)


def test_save_load_round_trip(tmp_path, ishigami_model):
    path = tmp_path / "surrogate.txt"
    save_pce(ishigami_model, path)
    back = load_pce(path)
    np.testing.assert_array_equal(back.indices, ishigami_model.indices)
    np.testing.assert_array_equal(back.coeffs, ishigami_model.coeffs)
    assert (back.degree, back.n_train, back.loo_error) == (9, 500, ishigami_model.loo_error)
    assert back.spec.digest() == ishigami_model.spec.digest()


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.txt"
    path.write_text("hello\n")
    with pytest.raises(ConfigError):
        load_pce(path)


def test_named_inputs_flow_into_report():
    spec = RandomInputSpec((InputEntry("kappa", 0.4, 0.6), InputEntry("Omega", 0.64, 0.96)))
    design = lhs_sample(30, 2, 0)
    x = spec.to_values(design.values)
    rep = sobol_from_pce(fit(design, x[:, 0] * x[:, 1], 2, spec))
    assert set(rep.first_order) == {"kappa", "Omega"}
    assert ("kappa", "Omega") in rep.second_order
