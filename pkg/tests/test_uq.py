import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from harvest_sa.analysis import simulate_power
from harvest_sa.errors import ConfigError, DegenerateOutputError, DomainError, HarvestError
from harvest_sa.integrator import IntegratorSettings
from harvest_sa.model import HarvesterParams, State3
from harvest_sa.uq import (HarvesterQoI, InputEntry, RandomInputSpec, build_input_space,
                           lhs_sample, mc_first_order, mc_sample, nearest_rank, propagate,
                           to_physical)
from harvest_sa.validation import ishigami, ishigami_sobol, ishigami_spec, linear_model, linear_spec

SHORT = IntegratorSettings(t1=200, n_out=20_001)


def test_classical_space():
    spec = build_input_space("classical", HarvesterParams(), 0.2)
    assert spec.names == ["xi", "chi", "lam", "kappa", "f", "Omega"]
    kappa = spec.entries[3]
    assert (kappa.lower, kappa.upper) == pytest.approx((0.4, 0.6), abs=1e-15)
    assert set(spec.frozen) == {"beta", "delta", "phi", "p"}


def test_asymmetric_and_full_spaces():
    asym = build_input_space("asymmetric", HarvesterParams(), 0.2)
    delta = asym.entries[asym.names.index("delta")]
    assert (delta.lower, delta.upper) == (-0.15, 0.15)
    phi = asym.entries[asym.names.index("phi")]
    assert (phi.lower, phi.upper) == pytest.approx((-math.pi / 12, math.pi / 12))
    full = build_input_space("full", HarvesterParams(beta=1.0), 0.2)
    assert full.k == 9 and "beta" in full.names


def test_space_errors():
    with pytest.raises(ConfigError):
        build_input_space("classical", HarvesterParams(), 0.0)
    with pytest.raises(ConfigError):
        build_input_space("classical", HarvesterParams(), 1.0)
    with pytest.raises(ConfigError, match="beta"):
        build_input_space("nl_coupling", HarvesterParams(beta=0.0), 0.2)
    with pytest.raises(ConfigError):
        build_input_space("quantum", HarvesterParams(), 0.2)
    with pytest.raises(ConfigError):
        RandomInputSpec((InputEntry("xi", 0.1, 0.0),))
    with pytest.raises(ConfigError):
        RandomInputSpec((InputEntry("xi", 0.0, 0.1), InputEntry("xi", 0.0, 0.2)))


def test_to_physical_midpoint_and_faces():
    nominal = HarvesterParams()
    spec = build_input_space("classical", nominal, 0.2)
    mid = to_physical(np.zeros(6), spec, nominal)
    for e in spec.entries:
        assert getattr(mid, e.name) == pytest.approx(e.mid, rel=1e-15)
    top = to_physical(np.ones(6), spec, nominal)
    bottom = to_physical(-np.ones(6), spec, nominal)
    for e in spec.entries:
        assert getattr(top, e.name) == e.upper
        assert getattr(bottom, e.name) == e.lower
    with pytest.raises(DomainError):
        to_physical(np.full(6, 1.01), spec, nominal)


def test_to_physical_keeps_frozen():
    nominal = HarvesterParams(beta=2.0, p=0.5)
    spec = build_input_space("classical", nominal, 0.2)
    prm = to_physical(np.zeros(6), spec, HarvesterParams())
    assert (prm.beta, prm.p) == (2.0, 0.5)


@settings(max_examples=50, deadline=None)
@given(u=st.lists(st.floats(-1, 1), min_size=6, max_size=6))
def test_cube_round_trip(u):
    spec = build_input_space("classical", HarvesterParams(), 0.2)
    back = spec.to_cube(spec.to_values(np.array(u)))
    np.testing.assert_allclose(back, u, atol=1e-12)


# -- designs ---------------------------------------------------------------------

def test_lhs_two_points():
    v = lhs_sample(2, 1, 7).values[:, 0]
    assert sorted(v < 0) == [False, True]


def test_lhs_stratification():
    s = lhs_sample(100, 4, 3)
    assert s.values.shape == (100, 4)
    assert np.all(np.abs(s.values) <= 1)
    for col in s.values.T:
        strata = np.floor((col + 1) / 2 * 100).clip(0, 99).astype(int)
        assert sorted(strata) == list(range(100))


def test_designs_reproducible():
    assert lhs_sample(50, 3, 1).values.tobytes() == lhs_sample(50, 3, 1).values.tobytes()
    assert not np.array_equal(lhs_sample(50, 3, 1).values, lhs_sample(50, 3, 2).values)
    a = mc_sample(64, ["a", "b"], 5).values
    assert a.tobytes() == mc_sample(64, ["a", "b"], 5).values.tobytes()
    # columns follow names, not positions
    np.testing.assert_array_equal(mc_sample(64, ["b", "a"], 5).values, a[:, ::-1])


# -- Monte-Carlo Sobol -----------------------------------------------------------

def test_mc_linear_model():
    rep = mc_first_order(linear_model, linear_spec(), 4096, 0)
    assert rep.first_order["x1"] == pytest.approx(0.2, abs=0.03)
    assert rep.first_order["x2"] == pytest.approx(0.8, abs=0.03)
    assert rep.metadata["evaluations"] == 4096 * 4
    assert rep.method == "mc"


def test_mc_ishigami():
    rep = mc_first_order(ishigami, ishigami_spec(), 16384, 1)
    exact = ishigami_sobol()
    for name in ("x1", "x2", "x3"):
        assert abs(rep.first_order[name] - exact[(name,)]) < 0.03
    assert all(-0.05 <= v <= 1.05 for v in rep.indices.values())


def test_mc_degenerate_output():
    with pytest.raises(DegenerateOutputError):
        mc_first_order(lambda x: np.full(len(x), 3.0), linear_spec(), 128, 0)


def test_mc_minimum_n():
    with pytest.raises(DomainError):
        mc_first_order(linear_model, linear_spec(), 63, 0)


def test_mc_affine_invariance():
    spec = ishigami_spec()
    base = mc_first_order(ishigami, spec, 16384, 4)
    scaled = mc_first_order(lambda x: 250.0 * ishigami(x) + 1e3, spec, 16384, 4)
    for name in spec.names:
        assert abs(base.first_order[name] - scaled.first_order[name]) < 0.02


def test_mc_permutation_invariance():
    spec = ishigami_spec()
    perm = [2, 0, 1]
    permuted = RandomInputSpec(tuple(spec.entries[i] for i in perm))
    inv = np.argsort(perm)
    a = mc_first_order(ishigami, spec, 2048, 9)
    b = mc_first_order(lambda x: ishigami(x[:, inv]), permuted, 2048, 9)
    for name in spec.names:
        assert abs(a.first_order[name] - b.first_order[name]) <= 1e-12


def test_report_ranking_and_rows():
    rep = mc_first_order(linear_model, linear_spec(), 1024, 2)
    assert rep.ranking() == ["x2", "x1"]
    rows = list(rep.rows())
    assert rows[0][:3] == (1, "x1", "")


# -- harvester QoI and propagation -----------------------------------------------

def test_qoi_matches_direct_and_caches():
    nominal = HarvesterParams(f=0.147)
    spec = build_input_space("classical", nominal, 0.2)
    qoi = HarvesterQoI(spec, nominal, SHORT)
    x = spec.to_values(lhs_sample(4, 6, 0).values)
    y = qoi(x)
    assert qoi.evaluations == 4
    qoi(x)
    assert qoi.evaluations == 4
    prm = to_physical(spec.to_cube(x[0]), spec, nominal).to_array()
    direct = simulate_power(prm, np.array([1.0, 0, 0]), SHORT).power
    assert y[0] == pytest.approx(direct, rel=1e-9)


def _collapsed(nominal):
    spec = build_input_space("classical", nominal, 0.2)
    return RandomInputSpec(tuple(InputEntry(n, getattr(nominal, n), getattr(nominal, n))
                                 for n in spec.names), spec.frozen)


def test_propagate_zero_width():
    nominal = HarvesterParams(f=0.147)
    bands = propagate(_collapsed(nominal), nominal, [0.1, 0.147], 20, seed=0, settings=SHORT)
    for g, f in enumerate((0.1, 0.147)):
        det = simulate_power(nominal.with_(f=f).to_array(), np.array([1.0, 0, 0]), SHORT).power
        assert np.all(bands.values[g] == det)
        assert bands.mean[g] == pytest.approx(det, rel=1e-12)


def test_propagate_ordered_and_reproducible():
    nominal = HarvesterParams(f=0.147)
    spec = build_input_space("classical", nominal, 0.2)
    a = propagate(spec, nominal, [0.05, 0.1, 0.15], 40, seed=3, settings=SHORT)
    b = propagate(spec, nominal, [0.05, 0.1, 0.15], 40, seed=3, settings=SHORT)
    assert np.all(np.diff(a.values, axis=1) >= 0)
    assert a.values.tobytes() == b.values.tobytes()
    assert np.all(a.n_failed == 0)
    assert np.all(a.width(5.0, 95.0) >= 0)


def test_propagate_errors():
    nominal = HarvesterParams(f=0.147)
    spec = build_input_space("classical", nominal, 0.2)
    with pytest.raises(DomainError):
        propagate(spec, nominal, [0.1], 10, percentiles=(95, 5), settings=SHORT)
    with pytest.raises(HarvestError):
        propagate(spec, nominal, [0.1], 10, settings=IntegratorSettings(t1=200, max_steps=30))


def test_nearest_rank():
    v = np.arange(1.0, 11.0)
    assert nearest_rank(v, 5) == 1.0
    assert nearest_rank(v, 50) == 5.0
    assert nearest_rank(v, 95) == 10.0
