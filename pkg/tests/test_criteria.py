import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_hermitian, random_state, random_unitary
from reachcert.bloch import SuperOpMatrix, make_basis, superop_of_map, to_bloch
from reachcert.criteria import (
    CriterionReport,
    RealSpectrum,
    check_anisotropy,
    check_generator_simulation,
    check_nonunitality,
    check_unital_anisotropy,
    compute_bounds,
    decay_rates,
    entropy_rate_bound,
    full_report,
    integrated_rates,
    majorizes,
    moments,
    nonunitality_bound,
    qubit_ray_bound,
    required_time,
    unital_decay_rates,
    von_neumann_entropy,
)
from reachcert.dynamics import expm, propagate, random_controls, unitary_channel
from reachcert.errors import InvalidInputError, ValidationError
from reachcert.models import (
    GeneratorSpec,
    amplitude_damping,
    dephasing,
    depolarizing,
    gad,
    hamiltonian_generator,
    lambda_system,
    lindbladian,
    random_lindbladian,
    random_markovian_channel,
    random_unital_lindbladian,
)


def _free(G, T):
    return SuperOpMatrix(G.d, expm(G.mat * T))


# -- majorization --


def test_majorization_examples():
    assert majorizes([2, 0], [1, 1])[0]
    assert not majorizes([1, 1], [2, 0])[0]
    ok, slacks = majorizes(-np.array([0.5, 0.5, 0]), -np.array([1, 1, 1]) / 3)
    assert ok and abs(slacks[-1]) < 1e-15
    with pytest.raises(ValidationError):
        majorizes([1, 2], [1, 2, 3])


def test_majorization_sum_rule_enforced():
    ok, slacks = majorizes([3, 0], [1, 1])
    assert not ok and np.isclose(slacks[-1], 1.0)


def test_spectrum_sorting():
    s = RealSpectrum([0.3, -1.0, 2.0, 0.3])
    assert list(s.sorted_desc) == [2.0, 0.3, 0.3, -1.0]
    assert sorted(s.sorted_desc) == sorted(s.values)


def _birkhoff_mix(b, rng, n_perm=4):
    w = rng.dirichlet(np.ones(n_perm))
    return sum(wk * b[rng.permutation(len(b))] for wk in w)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_majorization_order_properties(n, seed):
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(n)
    a = _birkhoff_mix(b, rng)
    c = _birkhoff_mix(a, rng)
    assert majorizes(b, b)[0]
    assert majorizes(b, a)[0] and majorizes(a, c)[0] and majorizes(b, c)[0]
    assert majorizes(-b, -a)[0]
    assert majorizes(b, rng.permutation(b))[0] and majorizes(rng.permutation(b), b)[0]
    if not np.allclose(np.sort(a), np.sort(b), atol=1e-6):
        assert not majorizes(a, b, tol=1e-12)[0]


# -- decay rates --


def test_decay_rates_examples(rng):
    H = hamiltonian_generator(random_hermitian(3, rng))
    assert np.allclose(decay_rates(H).values, 0, atol=1e-12)
    g = 0.8
    rates = decay_rates(lindbladian(amplitude_damping(g))).sorted_desc
    expect = np.array([(np.sqrt(2) - 1) / 2, -0.5, -0.5, -(np.sqrt(2) + 1) / 2]) * g
    assert np.allclose(rates, expect)
    assert np.sum(rates > 0) == 1
    for seed in range(5):
        G = lindbladian(random_lindbladian(3, 1.0, seed))
        assert abs(decay_rates(G).total() - G.trace()) < 1e-12
        assert unital_decay_rates(G).values.size == 8


def test_integrated_rates_piecewise():
    G1, G2 = lindbladian(dephasing(1.0)), lindbladian(depolarizing(0.5))
    spec = GeneratorSpec(((0.4, G1), (0.6, G2)))
    expect = 0.4 * decay_rates(G1).sorted_desc + 0.6 * decay_rates(G2).sorted_desc
    assert np.allclose(integrated_rates(spec, 1.0), expect)
    # the last segment continues
    assert np.allclose(integrated_rates(spec, 2.0), expect + decay_rates(G2).sorted_desc)


# -- required time --


def test_required_time_examples():
    G = lindbladian(amplitude_damping(0.7))
    spec = GeneratorSpec.constant(G, 1.0)
    assert required_time(SuperOpMatrix.identity(2), spec) == [0.0]
    assert np.allclose(required_time(_free(G, 2.3), spec), [2.3])
    flip = SuperOpMatrix(2, np.diag([1.0, 1.0, 1.0, -1.0]))
    assert required_time(flip, spec) == []


def test_required_time_multiple_crossings():
    # a non-Markovian-like drift whose trace changes sign has several solutions
    G = lindbladian(dephasing(1.0))
    spec = GeneratorSpec(((1.0, G), (1.0, G.scaled(-1.0)), (1.0, G)))
    target = SuperOpMatrix(2, np.diag([1.0, np.exp(-1), np.exp(-1), 1.0]))
    times = required_time(target, spec)
    assert np.allclose(times, [0.5, 1.5, 2.5])


# -- anisotropy --


@pytest.mark.parametrize("G", [lindbladian(gad(1.0, 0.75)), lindbladian(lambda_system(0.3, 0.7)),
                               lindbladian(random_lindbladian(3, 1.0, 2))])
def test_free_evolution_is_equality_case(G):
    for T in (0.1, 1.0, 20.0):
        spec = GeneratorSpec.constant(G, T)
        v = check_anisotropy(_free(G, T), spec, T)
        assert v.passed and abs(v.slacks[-1]) < 1e-8
        u = check_unital_anisotropy(_free(G, T), spec, T)
        assert u.passed and abs(u.slacks[-1]) < 1e-8


def test_unitary_target_fails_dissipative_drift(rng):
    spec = GeneratorSpec.constant(lindbladian(gad(1.0, 0.8)), 1.0)
    U = unitary_channel(random_unitary(2, rng))
    with pytest.warns(UserWarning):
        assert not check_anisotropy(U, spec, 1.0).passed


def test_singular_target_verdicts():
    spec = GeneratorSpec.constant(lindbladian(dephasing(1.0)), 1.0)
    proj = SuperOpMatrix(2, np.diag([1.0, 0.0, 0.0, 1.0]))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v = check_anisotropy(proj, spec, 1.0)
    assert not v.passed and v.status == "fail"


def test_unital_drift_verdicts_agree(rng):
    G = lindbladian(gad(1.0, 0.5))
    spec = GeneratorSpec.constant(G, 1.0)
    for _ in range(20):
        M = propagate(spec, random_controls(2, 1.0, 4, rng), dt_max=0.05)
        a, u = check_anisotropy(M, spec, 1.0), check_unital_anisotropy(M, spec, 1.0)
        assert a.passed == u.passed


def test_gad_soundness_small(rng):
    for p in (0.5, 0.75, 1.0):
        spec = GeneratorSpec.constant(lindbladian(gad(1.0, p)), 1.0)
        bounds = compute_bounds(spec)
        for _ in range(30):
            T = rng.uniform(0.1, 2.0)
            drift = GeneratorSpec.constant(spec.generators[0], T)
            M = propagate(drift, random_controls(2, T, 4, rng), dt_max=0.05)
            assert full_report(M, drift, bounds=bounds).overall


def test_unital_anisotropy_needs_tp():
    spec = GeneratorSpec.constant(lindbladian(dephasing(1.0)), 1.0)
    with pytest.raises(ValidationError):
        check_unital_anisotropy(SuperOpMatrix(2, 0.5 * np.eye(4)), spec, 1.0)


def test_gad_p1_unital_criterion_uninformative_where_full_excludes():
    # at p=1 the unital-block check only sees the p-independent block, the full
    # check also sees the translation
    G1 = lindbladian(gad(1.0, 1.0))
    spec = GeneratorSpec.constant(G1, 1.0)
    target = SuperOpMatrix(2, expm(lindbladian(gad(1.0, 0.5)).mat))
    assert check_unital_anisotropy(target, spec, 1.0).passed
    G_half = lindbladian(gad(1.0, 0.5))
    spec_half = GeneratorSpec.constant(G_half, 1.0)
    target = SuperOpMatrix(2, expm(G1.mat))
    assert check_unital_anisotropy(target, spec_half, 1.0).passed
    assert not check_anisotropy(target, spec_half, 1.0).passed


# -- non-unitality --


def test_nonunitality_bound_unital_drift():
    for G in (lindbladian(gad(1.0, 0.5)), lindbladian(depolarizing(1.0)),
              lindbladian(random_unital_lindbladian(2, 1.0, 4, hamiltonian_weight=0.0))):
        spec = GeneratorSpec.constant(G, 1.0)
        b = nonunitality_bound(spec, 2)
        assert b.converged and abs(b.value - 0.5) < 1e-6
        assert abs(qubit_ray_bound(spec, 20_000) - 0.5) < 1e-6


def test_nonunitality_bound_qutrit_unital():
    spec = GeneratorSpec.constant(lindbladian(depolarizing(1.0, 3)), 1.0)
    assert abs(nonunitality_bound(spec, 2).value - 1 / 3) < 1e-6
    assert abs(nonunitality_bound(spec, 3).value - 1 / 9) < 1e-6


def test_nonunitality_bound_lambda_and_pure_gad():
    spec = GeneratorSpec.constant(lindbladian(lambda_system(0.4, 0.6)), 1.0)
    assert nonunitality_bound(spec, 2).value >= 1 - 1e-6
    assert nonunitality_bound(spec, 3).value >= 1 - 1e-6
    spec = GeneratorSpec.constant(lindbladian(gad(1.0, 1.0)), 1.0)
    assert nonunitality_bound(spec, 2).value >= 1 - 1e-6


@pytest.mark.parametrize("p", [0.625, 0.8])
def test_nonunitality_bound_gad_intermediate(p):
    spec = GeneratorSpec.constant(lindbladian(gad(1.0, p)), 1.0)
    b = nonunitality_bound(spec, 2).value
    assert 0.5 < b < 1
    assert abs(b - qubit_ray_bound(spec, 50_000)) < 1e-4
    assert abs(b - p) < 1e-6  # closed form for this family


def test_nonunitality_bound_validation():
    spec = GeneratorSpec.constant(lindbladian(dephasing(1.0)), 1.0)
    with pytest.raises(ValidationError):
        nonunitality_bound(spec, 3)
    with pytest.raises(ValidationError):
        qubit_ray_bound(GeneratorSpec.constant(lindbladian(depolarizing(1.0, 3)), 1.0))


def test_check_nonunitality_examples(rng):
    spec = GeneratorSpec.constant(lindbladian(depolarizing(1.0)), 1.0)
    U = unitary_channel(random_unitary(2, rng))
    (v,) = check_nonunitality(U, spec)
    assert v.passed and np.isclose(v.moment, 0.5)
    reset = np.zeros((4, 4))
    reset[0, 0] = 1.0
    reset[3, 0] = 1.0  # every state goes to |0><0|
    (v,) = check_nonunitality(SuperOpMatrix(2, reset), spec)
    assert not v.passed and v.status == "fail" and np.isclose(v.moment, 1.0)


def test_moments_of_maximally_mixed_image():
    _, S = random_markovian_channel(3, 2, rng_seed=3)
    rho = S.apply_state(np.eye(3) / 3)
    m = moments(S)
    assert set(m) == {2, 3}
    assert np.isclose(m[3], np.trace(rho @ rho @ rho).real)


# -- generator simulation --


def test_generator_simulation_examples():
    G0 = lindbladian(dephasing(1.0))
    assert check_generator_simulation(G0, G0).passed
    for seed in range(20):
        Gp = lindbladian(random_unital_lindbladian(2, 1.0, seed))
        assert check_generator_simulation(Gp, G0, mode="rescaled", unital=True).passed
    dep = lindbladian(depolarizing(1.0))
    assert not check_generator_simulation(G0, dep, mode="rescaled", unital=True).passed
    with pytest.raises(InvalidInputError):
        check_generator_simulation(SuperOpMatrix.zero_generator(2), G0, mode="rescaled")
    with pytest.raises(ValidationError):
        check_generator_simulation(G0, G0, mode="sideways")


# -- entropy bound --


def test_entropy_bound_examples():
    dep = lindbladian(depolarizing(0.8))
    assert entropy_rate_bound(dep, np.eye(2) / 2) == 0.0
    deph = lindbladian(dephasing(1.0))
    rho = np.diag([0.8, 0.2])
    assert entropy_rate_bound(deph, rho) == 0.0
    h = 1e-5
    ahead = SuperOpMatrix(2, expm(deph.mat * h)).apply_state(rho)
    assert abs(von_neumann_entropy(ahead) - von_neumann_entropy(rho)) < 1e-12
    # depolarizing, purity 0.9
    r = np.sqrt(2 * 0.9 - 1)
    rho = np.diag([(1 + r) / 2, (1 - r) / 2])
    assert np.isclose(np.trace(rho @ rho).real, 0.9)
    bound = entropy_rate_bound(dep, rho)
    assert np.isclose(bound, 0.5 * 0.8 * (0.9 - 0.5))
    fwd = SuperOpMatrix(2, expm(dep.mat * h)).apply_state(rho)
    back = SuperOpMatrix(2, expm(-dep.mat * h)).apply_state(rho)
    rate = (von_neumann_entropy(fwd) - von_neumann_entropy(back)) / (2 * h)
    assert rate >= bound


def test_entropy_bound_rejects_nonunital():
    with pytest.raises(InvalidInputError):
        entropy_rate_bound(lindbladian(amplitude_damping(1.0)), np.eye(2) / 2)


# -- full report --


def test_full_report_free_evolution():
    for G in (lindbladian(gad(1.0, 0.7)), lindbladian(lambda_system(0.2, 0.5))):
        spec = GeneratorSpec.constant(G, 1.0)
        r = full_report(_free(G, 0.8), spec)
        assert r.overall and np.isclose(r.T, 0.8) and r.failed_stages() == []


def test_full_report_det_above_one():
    spec = GeneratorSpec.constant(lindbladian(gad(1.0, 0.7)), 1.0)
    r = full_report(SuperOpMatrix(2, np.diag([1.0, 1.1, 1.0, 1.0])), spec)
    assert not r.overall and r.failed_stages() == ["det_time"]


def test_report_serialization():
    G = lindbladian(gad(1.0, 0.7))
    r = full_report(_free(G, 0.5), GeneratorSpec.constant(G, 1.0))
    data = r.to_dict()
    assert data["schema"] == 1 and data["overall"] is True
    assert set(data) >= {"det_time", "anisotropy", "unital_anisotropy", "non_unitality", "overall"}
    import json

    assert json.loads(r.to_json())["T"] == pytest.approx(0.5)
    assert isinstance(r, CriterionReport)


def test_full_report_rejects_mismatched_dimension():
    spec = GeneratorSpec.constant(lindbladian(dephasing(1.0)), 1.0)
    with pytest.raises(ValidationError):
        full_report(SuperOpMatrix.identity(3), spec)


def test_random_state_helper_is_valid(rng):
    rho = random_state(3, rng)
    x = to_bloch(rho)
    assert np.isclose(x[0], 1 / np.sqrt(3))
    assert superop_of_map(lambda X: X, make_basis(3)).allclose(SuperOpMatrix.identity(3))
